/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "nasg/asg.hpp"
#include "nasg/l2g.hpp"
#include "nasg/oracle.hpp"
#include "nasg/verify.hpp"

namespace nasg {
namespace {

using verify::Rng;

L2GConfig exhaustive(double alpha) {
  L2GConfig cfg;
  cfg.alpha = alpha;
  cfg.beam_size = verify::kExhaustiveBeam;
  return cfg;
}

TEST(L2GConfig, Validation) {
  L2GConfig cfg;
  EXPECT_EQ(cfg.beam_size, 300);
  EXPECT_NO_THROW(cfg.validate());
  cfg.beam_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.beam_size = 1;
  cfg.alpha = -0.1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.alpha = std::nan("");
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(L2GForward, IdentityModelDegeneratesToAsg) {
  Rng rng(1);
  const auto nm = NoiseModel::identity(std::vector<char>{'a'});
  const auto em = verify::random_emissions(2, 2, rng);
  const auto tr = verify::random_transitions(2, rng);
  const TokenSeq y{{0}};
  for (double alpha : {0.0, 0.5, 3.0}) {
    EXPECT_NEAR(l2g_forward(y, em, tr, nm, exhaustive(alpha)).score, score_S_ASG(y, em, tr), 1e-12);
  }
}

TEST(L2GForward, TinyGeneralInstanceMatchesOracle) {
  // T=4, two letters, |noisy|=2, model with substitutions, insertions and
  // deletions everywhere.
  Matrix p(3, 3);
  p << 0.7, 0.2, 0.3,
       0.2, 0.6, 0.3,
       0.1, 0.2, 0.4;
  const NoiseModel nm({'a', 'b'}, p);
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const auto em = verify::random_emissions(4, 3, rng);
    const auto tr = verify::random_transitions(3, rng);
    const TokenSeq noisy{{0, 1}};
    for (double alpha : {0.0, 0.5, 1.0}) {
      const double beam = l2g_forward(noisy, em, tr, nm, exhaustive(alpha)).score;
      EXPECT_NEAR(beam, oracle::oracle_S_L2G(noisy, em, tr, nm, alpha), 1e-9);
    }
  }
}

TEST(L2GForward, DoubledNoisyLetterUsesRepToken) {
  Matrix p(3, 3);
  p << 0.8, 0.3, 0.2,
       0.1, 0.6, 0.2,
       0.1, 0.1, 0.6;
  const NoiseModel nm({'a', 'b'}, p);
  Rng rng(3);
  const auto em = verify::random_emissions(5, 3, rng);
  const auto tr = verify::random_transitions(3, rng);
  const TokenSeq noisy{{0, 2, 1}}; // "aab"
  EXPECT_NEAR(l2g_forward(noisy, em, tr, nm, exhaustive(1.0)).score,
              oracle::oracle_S_L2G(noisy, em, tr, nm, 1.0), 1e-9);
}

TEST(L2GForward, Errors) {
  const auto nm = NoiseModel::identity(std::vector<char>{'a', 'b'});
  const auto em = EmissionMatrix::zeros(2, 3);
  const auto tr = TransitionMatrix::zeros(3);
  EXPECT_THROW(l2g_forward(TokenSeq{}, em, tr, nm, {}), Error);
  EXPECT_THROW(
      l2g_forward(TokenSeq{{0}}, EmissionMatrix::zeros(2, 4), TransitionMatrix::zeros(4), nm, {}),
      Error);
  try {
    // Identity model: three noisy letters cannot come out of two frames.
    l2g_forward(TokenSeq{{0, 1, 0}}, em, tr, nm, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyBeam);
  }
}

TEST(L2GForward, BeamSizeBoundsEveryFrame) {
  Rng rng(4);
  const auto nm = verify::random_noise_model(3, rng);
  const auto em = verify::random_emissions(8, 4, rng);
  const auto tr = verify::random_transitions(4, rng);
  L2GConfig cfg;
  cfg.beam_size = 5;
  const auto trace = l2g_forward(TokenSeq{{0, 1, 2}}, em, tr, nm, cfg);
  for (const auto& f : trace.frames) {
    EXPECT_LE(f.hyps.size(), 5u);
  }
}

TEST(L2GLoss, IdentityModelEqualsAsgLoss) {
  const auto rep = verify::check_reduction(100, 5);
  EXPECT_TRUE(rep.passed()) << rep.first_failure;
}

TEST(L2GLoss, GradientsPassFiniteDifferences) {
  const auto rep = verify::check_l2g_gradients(25, 6);
  EXPECT_TRUE(rep.passed()) << rep.first_failure;
}

TEST(L2GLoss, GradientsPassFiniteDifferencesWithPerOpScales) {
  Rng rng(7);
  const auto nm = verify::random_noise_model(2, rng);
  const auto em = verify::random_emissions(5, 3, rng);
  const auto tr = verify::random_transitions(3, rng);
  L2GConfig cfg = exhaustive(0.3);
  cfg.sub_scale = 1.5;
  cfg.ins_scale = 0.5;
  cfg.del_scale = 2.0;
  const TokenSeq noisy{{1, 0}};
  const auto r = l2g_loss(noisy, em, tr, nm, cfg);
  const double err = verify::gradient_error(r, em, tr, [&](const auto& e, const auto& t) {
    return l2g_loss(noisy, e, t, nm, cfg).loss;
  });
  EXPECT_LT(err, 1e-4);
}

TEST(L2GLoss, AlphaZeroSumsOverReachableTranscriptions) {
  // With alpha = 0 the numerator is the summed ASG score of every clean
  // transcription that can explain the noisy one with non-zero probability.
  Matrix p(3, 3);
  p << 0.9, 0.0, 0.0,
       0.1, 1.0, 0.0,
       0.0, 0.0, 1.0;
  const NoiseModel nm({'a', 'b'}, p); // a may turn into b; b stays b
  Rng rng(8);
  const auto em = verify::random_emissions(4, 3, rng);
  const auto tr = verify::random_transitions(3, rng);
  const TokenSeq noisy{{1, 0}}; // "ba": clean must be "ba" or "aa"
  const double expected = logadd(score_S_ASG(TokenSeq{{1, 0}}, em, tr),
                                 score_S_ASG(TokenSeq{{0, 2}}, em, tr));
  EXPECT_NEAR(l2g_forward(noisy, em, tr, nm, exhaustive(0.0)).score, expected, 1e-9);
  EXPECT_NEAR(oracle::oracle_S_L2G(noisy, em, tr, nm, 0.0), expected, 1e-9);
}

// ---- properties

TEST(L2GProperties, AgreesWithOracle) {
  const auto rep = verify::check_l2g_oracle(150, 9);
  EXPECT_TRUE(rep.passed()) << rep.first_failure;
}

TEST(L2GProperties, BeamNeverExceedsExactScoreAndConvergesToIt) {
  // Every retained path is a genuine (transcription, path, alignment) triple,
  // so any beam is a lower bound; a large enough beam is exact.
  Rng rng(10);
  int checked = 0;
  while (checked < 60) {
    const auto in = verify::random_l2g_instance(rng, 6, 3, 3);
    const double exact = oracle::oracle_S_L2G(in.noisy, in.em, in.tr, in.nm, in.alpha);
    if (exact == kNegInf) {
      continue;
    }
    for (int N = 1; N <= 256; N *= 2) {
      EXPECT_LE(verify::beam_score_or_neg_inf(in, N), exact + 1e-9);
    }
    EXPECT_NEAR(verify::beam_score_or_neg_inf(in, 256), exact, 1e-9);
    ++checked;
  }
}

TEST(L2GProperties, FeasibleInstancesNeverEmptyTheBeam) {
  // The lookahead drops only hypotheses that cannot finish, so even a beam of
  // one survives whenever some explanation exists.
  Rng rng(11);
  int checked = 0;
  while (checked < 200) {
    const auto in = verify::random_l2g_instance(rng, 6, 3, 3);
    if (oracle::oracle_S_L2G(in.noisy, in.em, in.tr, in.nm, in.alpha) == kNegInf) {
      continue;
    }
    EXPECT_GT(verify::beam_score_or_neg_inf(in, 1), kNegInf);
    ++checked;
  }
}

TEST(L2GProperties, AlphaZeroSubstitutionOnlyIsBoundedByZ) {
  // Without insertions and deletions every path carries a single alignment,
  // so with alpha = 0 the numerator sums a subset of the paths counted by Z.
  Rng rng(12);
  for (int k = 0; k < 200; ++k) {
    const int A = verify::rand_int(rng, 1, 3);
    const int T = verify::rand_int(rng, 1, 7);
    const auto nm = verify::random_noise_model(A, rng, {false, false, 0.3});
    const auto em = verify::random_emissions(T, A + 1, rng);
    const auto tr = verify::random_transitions(A + 1, rng);
    const auto noisy = encode(verify::random_letters(verify::rand_int(rng, 1, T), A, rng), A);
    L2GConfig cfg = exhaustive(0.0);
    try {
      EXPECT_LE(l2g_forward(noisy, em, tr, nm, cfg).score, normalizer_Z(em, tr) + 1e-9);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kEmptyBeam);
    }
  }
}

TEST(L2GProperties, BeamPosteriorsAreDistributionsPerFrame) {
  Rng rng(13);
  int checked = 0;
  while (checked < 100) {
    const auto in = verify::random_l2g_instance(rng, 7, 3, 4);
    L2GConfig cfg;
    cfg.alpha = in.alpha;
    cfg.beam_size = verify::rand_int(rng, 1, 40);
    BeamTrace trace;
    try {
      trace = l2g_forward(in.noisy, in.em, in.tr, in.nm, cfg);
    } catch (const Error&) {
      continue;
    }
    const auto post = beam_posteriors(trace, in.em.tokens());
    for (int t = 0; t < in.em.frames(); ++t) {
      EXPECT_NEAR(post.nodes.row(t).sum(), 1.0, 1e-10);
    }
    EXPECT_NEAR(post.start.sum(), 1.0, 1e-10);
    EXPECT_NEAR(post.edges.sum(), in.em.frames() - 1, 1e-9);
    ++checked;
  }
}

TEST(L2GProperties, EveryFinalCompletionExplainsAllNoisyLetters) {
  Rng rng(14);
  int checked = 0;
  while (checked < 100) {
    const auto in = verify::random_l2g_instance(rng, 6, 3, 3);
    L2GConfig cfg;
    cfg.alpha = in.alpha;
    cfg.beam_size = 8;
    BeamTrace trace;
    try {
      trace = l2g_forward(in.noisy, in.em, in.tr, in.nm, cfg);
    } catch (const Error&) {
      continue;
    }
    const int L1 = trace.noisy_length;
    for (const auto& f : trace.finals) {
      const auto& h = trace.frames.back().hyps[f.from];
      const int consumed = (f.move == NoiseMove::kSub || f.move == NoiseMove::kInsDel ? 1 : 0) +
          (f.move == NoiseMove::kInsSub ? 2 : 0) + (f.trailing_insertion ? 1 : 0);
      EXPECT_EQ(h.cursor + consumed, L1);
    }
    ++checked;
  }
}

TEST(L2GProperties, DeterministicAcrossCalls) {
  Rng rng(15);
  const auto nm = verify::random_noise_model(3, rng);
  const auto em = verify::random_emissions(9, 4, rng);
  const auto tr = verify::random_transitions(4, rng);
  L2GConfig cfg;
  cfg.beam_size = 6;
  const TokenSeq noisy{{0, 1, 2, 0}};
  const auto a = l2g_loss(noisy, em, tr, nm, cfg);
  const auto b = l2g_loss(noisy, em, tr, nm, cfg);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad_emissions, b.grad_emissions);
}

TEST(RelaxConsecutive, AllowsDoubleDeletion) {
  // One noisy letter from three clean letters needs two deletions in a row
  // unless the middle letter is substituted.
  Matrix p(3, 3);
  p << 1.0, 0.0, 0.0,
       0.0, 0.5, 0.0,
       0.0, 0.5, 1.0;
  const NoiseModel nm({'a', 'b'}, p); // only b can be deleted
  auto em = EmissionMatrix::zeros(3, 3);
  // Make the path [b, a, b] the only sensible one: noisy "a" from clean "bab".
  for (int t = 0; t < 3; ++t) {
    em.scores.row(t).setConstant(-50.0);
  }
  em.scores(0, 1) = 0;
  em.scores(1, 0) = 0;
  em.scores(2, 1) = 0;
  const auto tr = TransitionMatrix::zeros(3);
  L2GConfig cfg = exhaustive(1.0);
  const double strict = l2g_forward(TokenSeq{{0}}, em, tr, nm, cfg).score;
  EXPECT_NEAR(strict, 2 * std::log(0.5), 1e-9); // b deleted, a kept, b deleted
  // A path that deletes two b's back to back ("bb" realized as [b, rep]) is
  // only admitted with the relaxation.
  auto em2 = EmissionMatrix::zeros(3, 3);
  for (int t = 0; t < 3; ++t) {
    em2.scores.row(t).setConstant(-50.0);
  }
  em2.scores(0, 0) = 0;
  em2.scores(1, 1) = 0;
  em2.scores(2, 2) = 0; // [a, b, rep] = "abb"
  EXPECT_LT(l2g_forward(TokenSeq{{0}}, em2, tr, nm, cfg).score, -40.0);
  cfg.relax_consecutive = true;
  EXPECT_NEAR(l2g_forward(TokenSeq{{0}}, em2, tr, nm, cfg).score, 2 * std::log(0.5), 1e-9);
}

// ---- beam inspection

TEST(InspectBeam, IdentityModelGivesASingleTranscription) {
  const Alphabet alpha = Alphabet::from_letters("ab");
  Rng rng(16);
  const auto em = verify::random_emissions(5, 3, rng);
  const auto tr = verify::random_transitions(3, rng);
  const auto rows = inspect_beam(TokenSeq{{0, 1}}, em, tr, NoiseModel::identity(alpha), {}, 10, alpha);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].text, "ab");
  EXPECT_NEAR(rows[0].weight, 1.0, 1e-12);
  EXPECT_NEAR(rows[0].ler, 0.0, 1e-15);
}

TEST(InspectBeam, WeightsSumToOneAndLogWeightsAddUp) {
  const Alphabet alpha = Alphabet::from_letters("ab");
  Rng rng(17);
  const auto nm = verify::random_noise_model(2, rng, {true, true, 0.0});
  const auto em = verify::random_emissions(5, 3, rng);
  const auto tr = verify::random_transitions(3, rng);
  L2GConfig cfg = exhaustive(1.0);
  const TokenSeq noisy{{0, 1}};
  const auto rows = inspect_beam(noisy, em, tr, nm, cfg, 1000, alpha);
  double w = 0.0;
  std::vector<double> logs;
  for (const auto& r : rows) {
    w += r.weight;
    logs.push_back(r.log_weight);
  }
  EXPECT_NEAR(w, 1.0, 1e-9);
  EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.weight > b.weight;
  }));
  // Grouping partitions the retained paths: the group scores add up to the
  // numerator.
  EXPECT_NEAR(logadd_all(logs), l2g_forward(noisy, em, tr, nm, cfg).score, 1e-9);
}

TEST(InspectBeam, GroundTruthRanksFirstWhenEmissionsFavourIt) {
  // Clean "abc" was transcribed as "abb"; strong acoustics for "abc" plus a
  // plausible c->b substitution put the truth on top.
  const Alphabet alpha = Alphabet::from_letters("abc");
  Matrix p = Matrix::Identity(4, 4) * 0.8;
  p(3, 3) = 1.0;
  p(1, 2) = 0.2; // c -> b
  p(0, 0) = p(1, 1) = 1.0;
  const NoiseModel nm(alpha.letters(), p);
  Matrix f = Matrix::Constant(6, 4, -4.0);
  f(0, 0) = f(1, 0) = 3.0;
  f(2, 1) = f(3, 1) = 3.0;
  f(4, 2) = f(5, 2) = 3.0;
  const auto rows = inspect_beam(
      encode(to_letters("abb", alpha), alpha), EmissionMatrix(f), TransitionMatrix::zeros(4), nm,
      exhaustive(0.5), 5, alpha, std::string("abc"));
  ASSERT_GE(rows.size(), 2u);
  EXPECT_EQ(rows[0].text, "abc");
  EXPECT_NEAR(rows[0].ler, 0.0, 1e-15);
  EXPECT_GT(rows[0].weight, rows[1].weight);
}

TEST(InspectBeam, TopKTruncates) {
  const Alphabet alpha = Alphabet::from_letters("ab");
  Rng rng(18);
  const auto nm = verify::random_noise_model(2, rng, {true, true, 0.0});
  const auto em = verify::random_emissions(6, 3, rng);
  const auto tr = verify::random_transitions(3, rng);
  const auto rows = inspect_beam(TokenSeq{{0, 1}}, em, tr, nm, {}, 3, alpha);
  ASSERT_EQ(rows.size(), 3u);
  double w = 0.0;
  for (const auto& r : rows) {
    w += r.weight;
  }
  EXPECT_NEAR(w, 1.0, 1e-9);
  EXPECT_THROW(inspect_beam(TokenSeq{{0}}, em, tr, nm, {}, 0, alpha), Error);
}

} // namespace
} // namespace nasg
