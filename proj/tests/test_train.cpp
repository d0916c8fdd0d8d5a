/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "nasg/train.hpp"

namespace nasg {
namespace {

struct Corpus {
  Alphabet alphabet;
  std::vector<TrainExample> train;
  std::vector<EvalExample> heldout;
};

Corpus make_corpus(int train_size, int heldout_size, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_letters = 4;
  spec.num_utterances = train_size + heldout_size;
  spec.max_letters = 8;
  const auto utts = synth_generate(spec, seed);
  Corpus c{synthetic_alphabet(spec), {}, {}};
  for (int i = 0; i < spec.num_utterances; ++i) {
    const auto& u = utts[i];
    if (i < train_size) {
      c.train.push_back({u.id, u.features, encode(u.clean, c.alphabet)});
    } else {
      c.heldout.push_back({u.id, u.features, to_string(u.clean, c.alphabet)});
    }
  }
  return c;
}

TEST(ToyModel, Shapes) {
  const ToyAcousticModel m(5, 8, 6, 1);
  EXPECT_EQ(m.input_dim(), 5);
  EXPECT_EQ(m.hidden(), 8);
  EXPECT_EQ(m.tokens(), 6);
  EXPECT_EQ(m.emissions(Matrix::Zero(3, 5)).frames(), 3);
  EXPECT_LE(m.w1().cwiseAbs().maxCoeff(), 1.0 / std::sqrt(5.0));
  EXPECT_EQ(m.b1(), Vector::Zero(8));
  EXPECT_THROW(m.emissions(Matrix::Zero(3, 4)), Error);
  EXPECT_THROW(ToyAcousticModel(Matrix::Zero(2, 3), Vector::Zero(2), Matrix::Zero(3, 2), Vector::Zero(2)), Error);
}

TEST(ToyModel, BackwardMatchesFiniteDifferences) {
  const ToyAcousticModel m(3, 4, 3, 7);
  std::mt19937_64 rng(3);
  Matrix x(5, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x.data()[i] = detail::gaussian(rng);
  }
  const auto tr = TransitionMatrix::zeros(3);
  const TokenSeq y{{0, 1, 0}};
  auto loss_of = [&](const ToyAcousticModel& mm) {
    return asg_loss(y, mm.emissions(x), tr).loss;
  };
  const auto act = m.forward(x);
  const auto r = asg_loss(y, act.emissions, tr);
  const ModelGrad g = m.backward(x, act, r.grad_emissions);

  const double h = 1e-6;
  auto probe = [&](int rows, int cols, const Matrix& analytic, bool first_layer) {
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        Matrix w1 = m.w1();
        Matrix w2 = m.w2();
        Matrix& w = first_layer ? w1 : w2;
        w(i, j) += h;
        const double up = loss_of(ToyAcousticModel(w1, m.b1(), w2, m.b2()));
        w(i, j) -= 2 * h;
        const double down = loss_of(ToyAcousticModel(w1, m.b1(), w2, m.b2()));
        EXPECT_NEAR(analytic(i, j), (up - down) / (2 * h), 1e-6);
      }
    }
  };
  probe(3, 4, g.w1, true);
  probe(4, 3, g.w2, false);
}

TEST(Synth, Examples) {
  SyntheticSpec spec;
  spec.num_utterances = 50;
  spec.sigma = 0.0;
  const auto utts = synth_generate(spec, 9);
  ASSERT_EQ(utts.size(), 50u);
  EXPECT_EQ(utts[0].id, "utt000000");
  const auto alphabet = synthetic_alphabet(spec);
  EXPECT_EQ(alphabet.letters().front(), ' ');
  EXPECT_EQ(alphabet.num_letters(), 7);
  for (const auto& u : utts) {
    EXPECT_GE(u.features.rows(), static_cast<Eigen::Index>(u.clean.size()));
    EXPECT_LE(u.features.rows(), static_cast<Eigen::Index>(3 * u.clean.size()));
    // Noise-free frames are exact one-hot rows.
    for (Eigen::Index t = 0; t < u.features.rows(); ++t) {
      EXPECT_EQ(u.features.row(t).sum(), 1.0);
      EXPECT_EQ(u.features.row(t).maxCoeff(), 1.0);
    }
  }
}

TEST(SynthProperties, TextConstraints) {
  SyntheticSpec spec;
  spec.num_utterances = 500;
  const auto alphabet = synthetic_alphabet(spec);
  const int space = alphabet.index_of(' ');
  for (const auto& u : synth_generate(spec, 11)) {
    const auto& s = u.clean.ids;
    ASSERT_GE(s.size(), 5u);
    ASSERT_LE(s.size(), 15u);
    EXPECT_NE(s.front(), space);
    EXPECT_NE(s.back(), space);
    for (std::size_t i = 1; i < s.size(); ++i) {
      EXPECT_FALSE(s[i] == space && s[i - 1] == space);
      if (i >= 2) {
        EXPECT_FALSE(s[i] == s[i - 1] && s[i] == s[i - 2]);
      }
    }
    EXPECT_EQ(u.features.cols(), spec.feature_dim());
  }
}

TEST(SynthProperties, SeedDeterminesOutput) {
  SyntheticSpec spec;
  spec.num_utterances = 20;
  const auto a = synth_generate(spec, 5);
  const auto b = synth_generate(spec, 5);
  const auto c = synth_generate(spec, 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].features, b[i].features);
    EXPECT_EQ(a[i].clean, b[i].clean);
  }
  EXPECT_NE(a[0].features, c[0].features);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.grad_clip_norm = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_EQ(parse_loss_kind("l2g"), LossKind::kL2g);
  EXPECT_THROW(parse_loss_kind("ctc"), Error);
}

TEST(UtteranceLoss, NormalizedBySquareRootOfLength) {
  const auto c = make_corpus(20, 0, 2);
  const ToyAcousticModel m(5, 8, 6, 3);
  const auto tr = TransitionMatrix::zeros(6);
  const TrainConfig cfg;
  for (const auto& ex : c.train) {
    const auto r = utterance_loss(m, tr, ex, cfg, nullptr);
    ASSERT_EQ(r.status, UtteranceLoss::Status::kOk);
    EXPECT_DOUBLE_EQ(r.loss, r.raw_loss / std::sqrt(static_cast<double>(ex.target.size())));
    EXPECT_NEAR(r.raw_loss, asg_loss(ex.target, m.emissions(ex.features), tr).loss, 1e-12);
  }
}

TEST(UtteranceLoss, SkipsUnusableTargets) {
  const ToyAcousticModel m(2, 3, 3, 1);
  const auto tr = TransitionMatrix::zeros(3);
  TrainConfig cfg;
  EXPECT_EQ(utterance_loss(m, tr, {"e", Matrix::Zero(2, 2), TokenSeq{}}, cfg, nullptr).status,
            UtteranceLoss::Status::kSkipped);
  EXPECT_EQ(utterance_loss(m, tr, {"l", Matrix::Zero(2, 2), TokenSeq{{0, 1, 0}}}, cfg, nullptr).status,
            UtteranceLoss::Status::kSkipped);
  cfg.loss_kind = LossKind::kL2g;
  const auto nm = NoiseModel::identity(std::vector<char>{'a', 'b'});
  EXPECT_EQ(utterance_loss(m, tr, {"b", Matrix::Zero(2, 2), TokenSeq{{0, 1}}}, cfg, &nm).status,
            UtteranceLoss::Status::kOk);
}

TEST(ClipGlobalNorm, Examples) {
  const ToyAcousticModel m(2, 2, 2, 1);
  ModelGrad g = m.zero_grad();
  g.w1(0, 0) = 3.0;
  auto tg = TransitionMatrix::zeros(2);
  tg.start(1) = 4.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, tg, 1.0), 5.0);
  EXPECT_NEAR(g.w1(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(tg.start(1), 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, tg, 2.0), 1.0);
  EXPECT_NEAR(g.w1(0, 0), 0.6, 1e-15);
}

TEST(ClipGlobalNormProperties, NeverExceedsTheBound) {
  std::mt19937_64 rng(8);
  const ToyAcousticModel m(3, 4, 3, 1);
  for (int k = 0; k < 200; ++k) {
    ModelGrad g = m.zero_grad();
    auto tg = TransitionMatrix::zeros(3);
    const double mag = std::exp(6.0 * detail::unit(rng) - 3.0);
    for (Eigen::Index i = 0; i < g.w1.size(); ++i) {
      g.w1.data()[i] = mag * detail::gaussian(rng);
    }
    tg.scores(1, 2) = mag * detail::gaussian(rng);
    const double bound = 0.05;
    const double before = clip_global_norm(g, tg, bound);
    const double after = std::sqrt(g.squared_norm() + tg.scores.squaredNorm() + tg.start.squaredNorm());
    EXPECT_LE(after, bound + 1e-12);
    EXPECT_NEAR(after, std::min(before, bound), 1e-12);
  }
}

TEST(TrainLoop, ZeroEpochsLeaveModelUnchanged) {
  const auto c = make_corpus(10, 0, 3);
  ToyAcousticModel m(5, 8, 6, 4);
  const auto before = m;
  auto tr = TransitionMatrix::zeros(6);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto res = train_loop(m, tr, c.train, cfg, nullptr, c.heldout, c.alphabet);
  EXPECT_TRUE(res.history.empty());
  EXPECT_EQ(m, before);
  EXPECT_EQ(tr.scores, Matrix::Zero(6, 6));
}

TEST(TrainLoop, RequiresNoiseModelForL2g) {
  const auto c = make_corpus(4, 0, 3);
  ToyAcousticModel m(5, 8, 6, 4);
  auto tr = TransitionMatrix::zeros(6);
  TrainConfig cfg;
  cfg.loss_kind = LossKind::kL2g;
  cfg.epochs = 1;
  EXPECT_THROW(train_loop(m, tr, c.train, cfg, nullptr, {}, c.alphabet), Error);
}

TEST(TrainLoop, AsgReducesHeldoutLetterErrors) {
  const auto c = make_corpus(200, 40, 4);
  ToyAcousticModel m(5, 16, 6, 5);
  auto tr = TransitionMatrix::zeros(6);
  const double initial = heldout_ler(m, tr, c.heldout, c.alphabet, 1);
  TrainConfig cfg;
  cfg.epochs = 5;
  std::vector<int> seen;
  const auto res = train_loop(m, tr, c.train, cfg, nullptr, c.heldout, c.alphabet,
                              [&](const EpochMetrics& e) { seen.push_back(e.epoch); });
  ASSERT_EQ(res.history.size(), 5u);
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_EQ(res.history.back().evaluated, 200);
  EXPECT_LT(res.history.back().mean_loss, res.history.front().mean_loss);
  EXPECT_LT(res.history.back().heldout_ler, initial);
}

TEST(TrainLoop, ResultDoesNotDependOnWorkerCount) {
  const auto c = make_corpus(40, 10, 5);
  auto nm = uniform_noise_model(c.alphabet.letters(), 0.05, 0.02, 0.02);
  auto run = [&](int workers) {
    ToyAcousticModel m(5, 8, 6, 6);
    auto tr = TransitionMatrix::zeros(6);
    TrainConfig cfg;
    cfg.loss_kind = LossKind::kL2g;
    cfg.l2g.beam_size = 20;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.workers = workers;
    auto res = train_loop(m, tr, c.train, cfg, &nm, c.heldout, c.alphabet);
    return std::make_tuple(m, tr.scores, res.history);
  };
  const auto a = run(1);
  const auto b = run(3);
  EXPECT_EQ(std::get<0>(a), std::get<0>(b));
  EXPECT_EQ(std::get<1>(a), std::get<1>(b));
  EXPECT_EQ(std::get<2>(a), std::get<2>(b));
}

TEST(Features, RoundTrip) {
  std::mt19937_64 rng(1);
  std::vector<FeatureRecord> recs;
  for (int k = 0; k < 5; ++k) {
    Matrix x(k + 1, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x.data()[i] = detail::gaussian(rng) * 1e3;
    }
    recs.push_back({"u" + std::to_string(k), x});
  }
  std::stringstream ss;
  write_features(ss, recs);
  const auto back = parse_features(ss, "mem");
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t k = 0; k < recs.size(); ++k) {
    EXPECT_EQ(back[k].id, recs[k].id);
    EXPECT_EQ(back[k].features, recs[k].features);
  }
}

TEST(Features, ParseErrors) {
  std::istringstream bad_header("u1 x 3\n");
  EXPECT_THROW(parse_features(bad_header, "f"), Error);
  std::istringstream truncated("u1 2 2\n1 2\n3\n");
  EXPECT_THROW(parse_features(truncated, "f"), Error);
  EXPECT_THROW(read_features("/nonexistent/features.txt"), Error);
}

TEST(Features, DirectoryIsReadInNameOrder) {
  const auto dir = std::filesystem::temp_directory_path() / "nasg_test_features";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::vector<FeatureRecord> first{{"a", Matrix::Ones(1, 2)}};
  const std::vector<FeatureRecord> second{{"b", Matrix::Zero(2, 2)}};
  write_features((dir / "2.txt").string(), second);
  write_features((dir / "1.txt").string(), first);
  const auto recs = read_features(dir.string());
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].id, "a");
  EXPECT_EQ(recs[1].id, "b");
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "nasg_test_ckpt.json").string();
  SyntheticSpec spec;
  Checkpoint ck{synthetic_alphabet(spec), ToyAcousticModel(7, 5, 8, 2), TransitionMatrix::zeros(8), {{"epochs", 3}}};
  ck.transitions.scores(1, 2) = -0.1234567890123;
  save_checkpoint(ck, path);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.alphabet.letters(), ck.alphabet.letters());
  EXPECT_EQ(back.model, ck.model);
  EXPECT_EQ(back.transitions.scores, ck.transitions.scores);
  EXPECT_EQ(back.metadata.at("epochs"), 3);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsMismatchedShapes) {
  SyntheticSpec spec;
  Checkpoint ck{synthetic_alphabet(spec), ToyAcousticModel(7, 5, 6, 2), TransitionMatrix::zeros(6), {}};
  EXPECT_THROW(checkpoint_from_json(to_json(ck)), Error);
  auto j = to_json(Checkpoint{synthetic_alphabet(spec), ToyAcousticModel(7, 5, 8, 2), TransitionMatrix::zeros(8), {}});
  j["format"] = "other";
  EXPECT_THROW(checkpoint_from_json(j), Error);
  j.erase("format");
  EXPECT_THROW(checkpoint_from_json(j), Error);
}

} // namespace
} // namespace nasg
