/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nasg/asg.hpp"
#include "nasg/error.hpp"
#include "nasg/eval.hpp"
#include "nasg/l2g.hpp"
#include "nasg/noise.hpp"
#include "nasg/parallel.hpp"
#include "nasg/tokens.hpp"

namespace nasg {

// ---------------------------------------------------------------------------
// Toy acoustic model: one tanh hidden layer applied frame by frame.
// emissions = tanh(X w1 + b1) w2 + b2, X is T x D.

struct ModelGrad {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  double squared_norm() const {
    return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() +
        b2.squaredNorm();
  }
  void scale(double s) {
    w1 *= s;
    b1 *= s;
    w2 *= s;
    b2 *= s;
  }
  ModelGrad& operator+=(const ModelGrad& o) {
    w1 += o.w1;
    b1 += o.b1;
    w2 += o.w2;
    b2 += o.b2;
    return *this;
  }
};

class ToyAcousticModel {
 public:
  ToyAcousticModel() = default;

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  ToyAcousticModel(int input_dim, int hidden, int tokens, std::uint64_t seed)
      : w1_(input_dim, hidden),
        b1_(Vector::Zero(hidden)),
        w2_(hidden, tokens),
        b2_(Vector::Zero(tokens)) {
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Matrix& m, double bound) {
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        m.data()[i] = (2.0 * u - 1.0) * bound;
      }
    };
    fill(w1_, 1.0 / std::sqrt(static_cast<double>(input_dim)));
    fill(w2_, 1.0 / std::sqrt(static_cast<double>(hidden)));
  }

  ToyAcousticModel(Matrix w1, Vector b1, Matrix w2, Vector b2)
      : w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)), b2_(std::move(b2)) {
    if (w1_.cols() != b1_.size() || w2_.rows() != w1_.cols() ||
        w2_.cols() != b2_.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "inconsistent model shapes");
    }
  }

  int input_dim() const {
    return static_cast<int>(w1_.rows());
  }
  int hidden() const {
    return static_cast<int>(w1_.cols());
  }
  int tokens() const {
    return static_cast<int>(w2_.cols());
  }

  const Matrix& w1() const {
    return w1_;
  }
  const Vector& b1() const {
    return b1_;
  }
  const Matrix& w2() const {
    return w2_;
  }
  const Vector& b2() const {
    return b2_;
  }

  struct Activations {
    Matrix hidden;
    EmissionMatrix emissions;
  };

  Activations forward(const Matrix& features) const {
    if (features.cols() != w1_.rows()) {
      throw Error(
          ErrorCode::kDimensionMismatch,
          "features have dimension " + std::to_string(features.cols()) +
              ", model expects " + std::to_string(w1_.rows()));
    }
    Activations a;
    a.hidden = ((features * w1_).rowwise() + b1_.transpose()).array().tanh();
    a.emissions = EmissionMatrix(Matrix((a.hidden * w2_).rowwise() + b2_.transpose()));
    return a;
  }

  EmissionMatrix emissions(const Matrix& features) const {
    return forward(features).emissions;
  }

  ModelGrad backward(
      const Matrix& features,
      const Activations& act,
      const Matrix& grad_emissions) const {
    ModelGrad g;
    g.w2 = act.hidden.transpose() * grad_emissions;
    g.b2 = grad_emissions.colwise().sum().transpose();
    Matrix dh = (grad_emissions * w2_.transpose()).array() *
        (1.0 - act.hidden.array().square());
    g.w1 = features.transpose() * dh;
    g.b1 = dh.colwise().sum().transpose();
    return g;
  }

  ModelGrad zero_grad() const {
    return {
        Matrix::Zero(w1_.rows(), w1_.cols()),
        Vector::Zero(b1_.size()),
        Matrix::Zero(w2_.rows(), w2_.cols()),
        Vector::Zero(b2_.size())};
  }

  void apply(const ModelGrad& g, double lr) {
    w1_ -= lr * g.w1;
    b1_ -= lr * g.b1;
    w2_ -= lr * g.w2;
    b2_ -= lr * g.b2;
  }

  bool operator==(const ToyAcousticModel& o) const {
    return w1_ == o.w1_ && b1_ == o.b1_ && w2_ == o.w2_ && b2_ == o.b2_;
  }

 private:
  Matrix w1_;
  Vector b1_;
  Matrix w2_;
  Vector b2_;
};

// ---------------------------------------------------------------------------
// Synthetic data.

struct SyntheticSpec {
  int num_letters = 6; // base letters besides space
  bool with_space = true;
  int num_utterances = 2000;
  int min_letters = 5;
  int max_letters = 15;
  int min_frames = 1;
  int max_frames = 3;
  double sigma = 0.1;

  int feature_dim() const {
    return num_letters + (with_space ? 1 : 0);
  }

  void validate() const {
    if (num_letters < 1 || num_letters > 26 || num_utterances < 0 ||
        min_letters < 1 || max_letters < min_letters || min_frames < 1 ||
        max_frames < min_frames || !(sigma >= 0.0)) {
      throw Error(ErrorCode::kInvalidFactor, "invalid synthetic data spec");
    }
  }
};

/// Space (when enabled) followed by the first num_letters of a-z.
inline Alphabet synthetic_alphabet(const SyntheticSpec& spec) {
  std::string letters = spec.with_space ? " " : "";
  for (int i = 0; i < spec.num_letters; ++i) {
    letters.push_back(static_cast<char>('a' + i));
  }
  return Alphabet::from_letters(letters);
}

struct Utterance {
  std::string id;
  Matrix features; // T x D
  LetterSeq clean;
};

namespace detail {

inline double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(unit(rng) * (hi - lo + 1));
}
inline double gaussian(std::mt19937_64& rng) {
  // Box-Muller; the second variate is discarded for simplicity of state.
  double u1 = unit(rng);
  while (u1 <= 0.0) {
    u1 = unit(rng);
  }
  const double u2 = unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

} // namespace detail

/// Letter strings without triples (and, with a space letter, without leading,
/// trailing, or doubled spaces); each letter lasts a random number of frames
/// whose features are the letter's one-hot vector plus Gaussian noise.
inline std::vector<Utterance> synth_generate(
    const SyntheticSpec& spec,
    std::uint64_t seed,
    const std::string& id_prefix = "utt") {
  spec.validate();
  const Alphabet alphabet = synthetic_alphabet(spec);
  const int A = alphabet.num_letters();
  const int space = spec.with_space ? alphabet.index_of(' ') : -1;
  std::mt19937_64 rng(seed);
  std::vector<Utterance> out;
  out.reserve(spec.num_utterances);
  for (int u = 0; u < spec.num_utterances; ++u) {
    const int L = detail::uniform_int(rng, spec.min_letters, spec.max_letters);
    LetterSeq text;
    while (static_cast<int>(text.size()) < L) {
      const int c = detail::uniform_int(rng, 0, A - 1);
      const std::size_t i = text.size();
      if (c == space &&
          (i == 0 || static_cast<int>(i) == L - 1 || text.ids.back() == space)) {
        continue;
      }
      if (i >= 2 && text[i - 1] == c && text[i - 2] == c) {
        continue;
      }
      text.ids.push_back(c);
    }
    std::vector<int> frames;
    for (int c : text.ids) {
      const int d = detail::uniform_int(rng, spec.min_frames, spec.max_frames);
      frames.insert(frames.end(), d, c);
    }
    Matrix x(static_cast<Eigen::Index>(frames.size()), A);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      for (int k = 0; k < A; ++k) {
        const double noise = spec.sigma > 0.0 ? spec.sigma * detail::gaussian(rng) : 0.0;
        x(static_cast<Eigen::Index>(t), k) = (k == frames[t] ? 1.0 : 0.0) + noise;
      }
    }
    std::ostringstream id;
    id << id_prefix << std::setw(6) << std::setfill('0') << u;
    out.push_back({id.str(), std::move(x), std::move(text)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training.

enum class LossKind { kAsg, kL2g };

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "asg") {
    return LossKind::kAsg;
  }
  if (s == "l2g") {
    return LossKind::kL2g;
  }
  throw Error(ErrorCode::kParse, "unknown loss '" + s + "' (expected asg|l2g)");
}

inline constexpr double kDefaultLearningRate = 1.0;
inline constexpr double kDefaultTransitionLearningRate = 0.0005;
inline constexpr double kDefaultGradClip = 0.05;
inline constexpr int kDefaultPretrainEpochs = 50;
inline constexpr int kDefaultFinetuneEpochs = 20;

struct TrainConfig {
  LossKind loss_kind = LossKind::kAsg;
  double learning_rate = kDefaultLearningRate;
  double transition_lr = kDefaultTransitionLearningRate;
  double grad_clip_norm = kDefaultGradClip;
  int batch_size = 16;
  int epochs = kDefaultPretrainEpochs;
  L2GConfig l2g;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const {
    if (!(learning_rate > 0) || !(transition_lr > 0) || !(grad_clip_norm > 0) ||
        batch_size < 1 || epochs < 0 || workers < 1) {
      throw Error(ErrorCode::kInvalidFactor, "invalid training configuration");
    }
    l2g.validate();
  }
};

/// A training utterance paired with its provided (possibly noisy) transcript.
struct TrainExample {
  std::string id;
  Matrix features;
  TokenSeq target;
};

/// Held-out utterance scored against its clean reference text.
struct EvalExample {
  std::string id;
  Matrix features;
  std::string reference;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double heldout_ler = 0.0;
  int evaluated = 0;
  int skipped = 0;    // transcription empty or longer than the frame count
  int empty_beam = 0; // beam search found no explanation

  bool operator==(const EpochMetrics&) const = default;
};

struct UtteranceLoss {
  enum class Status { kOk, kSkipped, kEmptyBeam } status = Status::kOk;
  double raw_loss = 0.0;
  double loss = 0.0; // raw_loss / sqrt(L)
  ModelGrad model_grad;
  TransitionMatrix transition_grad;
};

/// Loss and gradients for one utterance, divided by the square root of the
/// provided transcription length.
inline UtteranceLoss utterance_loss(
    const ToyAcousticModel& model,
    const TransitionMatrix& tr,
    const TrainExample& ex,
    const TrainConfig& cfg,
    const NoiseModel* nm) {
  UtteranceLoss out;
  const auto act = model.forward(ex.features);
  if (ex.target.empty() || static_cast<int>(ex.target.size()) > act.emissions.frames()) {
    out.status = UtteranceLoss::Status::kSkipped;
    return out;
  }
  LossResult r;
  try {
    r = cfg.loss_kind == LossKind::kAsg
        ? asg_loss(ex.target, act.emissions, tr)
        : l2g_loss(ex.target, act.emissions, tr, *nm, cfg.l2g);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kEmptyBeam) {
      out.status = UtteranceLoss::Status::kEmptyBeam;
      return out;
    }
    throw;
  }
  if (!std::isfinite(r.loss)) {
    throw Error(
        ErrorCode::kNonFiniteLoss,
        "utterance " + ex.id + ": loss " + std::to_string(r.loss) +
            " (numerator " + std::to_string(r.numerator) + ", normalizer " +
            std::to_string(r.normalizer) + ")");
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(ex.target.size()));
  out.raw_loss = r.loss;
  out.loss = r.loss * norm;
  out.model_grad = model.backward(ex.features, act, r.grad_emissions * norm);
  out.transition_grad.scores = r.grad_transitions.scores * norm;
  out.transition_grad.start = r.grad_transitions.start * norm;
  return out;
}

/// Scales every gradient so the global L2 norm is at most max_norm. Returns
/// the norm before clipping.
inline double clip_global_norm(ModelGrad& g, TransitionMatrix& tg, double max_norm) {
  const double norm = std::sqrt(
      g.squared_norm() + tg.scores.squaredNorm() + tg.start.squaredNorm());
  if (norm > max_norm) {
    const double s = max_norm / norm;
    g.scale(s);
    tg.scores *= s;
    tg.start *= s;
  }
  return norm;
}

inline double heldout_ler(
    const ToyAcousticModel& model,
    const TransitionMatrix& tr,
    const std::vector<EvalExample>& heldout,
    const Alphabet& alphabet,
    int workers) {
  std::vector<ErrorCount> counts(heldout.size());
  parallel_for(heldout.size(), workers, [&](std::size_t i) {
    const auto dec = viterbi(model.emissions(heldout[i].features), tr);
    counts[i] = letter_errors(to_string(dec.transcription, alphabet), heldout[i].reference);
  });
  ErrorCount total;
  for (const auto& c : counts) {
    total += c;
  }
  return total.rate();
}

struct TrainResult {
  std::vector<EpochMetrics> history;
};

/// Plain SGD. Each batch averages the per-utterance normalized losses, clips
/// the global gradient norm, then steps the model with learning_rate and the
/// transitions with transition_lr. Per-utterance work may run on several
/// workers; gradients are summed in batch order so results do not depend on
/// the worker count.
inline TrainResult train_loop(
    ToyAcousticModel& model,
    TransitionMatrix& tr,
    const std::vector<TrainExample>& data,
    const TrainConfig& cfg,
    const NoiseModel* nm,
    const std::vector<EvalExample>& heldout,
    const Alphabet& alphabet,
    const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  cfg.validate();
  if (cfg.loss_kind == LossKind::kL2g && nm == nullptr) {
    throw Error(ErrorCode::kInvalidModel, "the l2g loss requires a noise model");
  }
  if (tr.tokens() != model.tokens()) {
    throw Error(ErrorCode::kDimensionMismatch, "model and transitions disagree on V");
  }
  TrainResult result;
  std::mt19937_64 order_rng(cfg.seed ^ 0x5eed0f0dda7aULL);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::vector<UtteranceLoss> slots;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(detail::unit(order_rng) * static_cast<double>(i));
      std::swap(order[i - 1], order[j]);
    }
    EpochMetrics m;
    m.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      slots.assign(end - begin, UtteranceLoss{});
      parallel_for(end - begin, cfg.workers, [&](std::size_t k) {
        slots[k] = utterance_loss(model, tr, data[order[begin + k]], cfg, nm);
      });
      ModelGrad g = model.zero_grad();
      TransitionMatrix tg = TransitionMatrix::zeros(tr.tokens());
      int ok = 0;
      for (const auto& s : slots) {
        switch (s.status) {
          case UtteranceLoss::Status::kOk:
            g += s.model_grad;
            tg.scores += s.transition_grad.scores;
            tg.start += s.transition_grad.start;
            loss_sum += s.loss;
            ++ok;
            break;
          case UtteranceLoss::Status::kSkipped:
            ++m.skipped;
            break;
          case UtteranceLoss::Status::kEmptyBeam:
            ++m.empty_beam;
            break;
        }
      }
      m.evaluated += ok;
      if (ok == 0) {
        continue;
      }
      const double inv = 1.0 / ok;
      g.scale(inv);
      tg.scores *= inv;
      tg.start *= inv;
      clip_global_norm(g, tg, cfg.grad_clip_norm);
      model.apply(g, cfg.learning_rate);
      tr.scores -= cfg.transition_lr * tg.scores;
      tr.start -= cfg.transition_lr * tg.start;
    }
    m.mean_loss = m.evaluated > 0 ? loss_sum / m.evaluated : 0.0;
    m.heldout_ler = heldout.empty()
        ? std::numeric_limits<double>::quiet_NaN()
        : heldout_ler(model, tr, heldout, alphabet, cfg.workers);
    result.history.push_back(m);
    if (on_epoch) {
      on_epoch(m);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Feature files: per utterance a header "<id> <T> <D>" followed by T lines of
// D decimal values. A directory is read as the concatenation of its regular
// files in name order.

struct FeatureRecord {
  std::string id;
  Matrix features;
};

inline void write_features(std::ostream& out, std::span<const FeatureRecord> records) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : records) {
    out << r.id << ' ' << r.features.rows() << ' ' << r.features.cols() << '\n';
    for (Eigen::Index t = 0; t < r.features.rows(); ++t) {
      for (Eigen::Index d = 0; d < r.features.cols(); ++d) {
        out << (d ? " " : "") << r.features(t, d);
      }
      out << '\n';
    }
  }
}

inline void write_features(const std::string& path, std::span<const FeatureRecord> records) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write feature file " + path);
  }
  write_features(out, records);
}

inline std::vector<FeatureRecord> parse_features(std::istream& in, const std::string& name) {
  std::vector<FeatureRecord> out;
  std::string id;
  while (in >> id) {
    long long T = 0;
    long long D = 0;
    if (!(in >> T >> D) || T < 0 || D < 1) {
      throw Error(ErrorCode::kParse, name + ": bad header for utterance " + id);
    }
    Matrix x(T, D);
    for (long long i = 0; i < T * D; ++i) {
      if (!(in >> x.data()[i])) {
        throw Error(ErrorCode::kParse, name + ": truncated features for " + id);
      }
    }
    out.push_back({id, std::move(x)});
  }
  return out;
}

inline std::vector<FeatureRecord> read_features(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file()) {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else {
    files.emplace_back(path);
  }
  std::vector<FeatureRecord> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) {
      throw Error(ErrorCode::kIo, "cannot open feature file " + f.string());
    }
    auto recs = parse_features(in, f.string());
    std::move(recs.begin(), recs.end(), std::back_inserter(out));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints (JSON).

struct Checkpoint {
  Alphabet alphabet = Alphabet::standard();
  ToyAcousticModel model;
  TransitionMatrix transitions;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
  return {
      {"rows", m.rows()},
      {"cols", m.cols()},
      {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorCode::kParse, "matrix data size mismatch");
  }
  return Eigen::Map<Matrix>(data.data(), rows, cols);
}

inline nlohmann::json vector_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& j) {
  auto data = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

} // namespace detail

inline constexpr const char* kCheckpointFormat = "nasg-checkpoint-1";

inline nlohmann::json to_json(const Checkpoint& ck) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  std::vector<std::string> letters;
  for (char c : ck.alphabet.letters()) {
    letters.emplace_back(1, c);
  }
  j["alphabet"] = {{"letters", letters}, {"rep", std::string(1, ck.alphabet.rep_symbol())}};
  j["dims"] = {
      {"input", ck.model.input_dim()},
      {"hidden", ck.model.hidden()},
      {"tokens", ck.model.tokens()}};
  j["w1"] = detail::matrix_json(ck.model.w1());
  j["b1"] = detail::vector_json(ck.model.b1());
  j["w2"] = detail::matrix_json(ck.model.w2());
  j["b2"] = detail::vector_json(ck.model.b2());
  j["transitions"] = {
      {"scores", detail::matrix_json(ck.transitions.scores)},
      {"start", detail::vector_json(ck.transitions.start)}};
  j["metadata"] = ck.metadata;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw Error(ErrorCode::kParse, "unsupported checkpoint format");
    }
    std::vector<char> letters;
    for (const auto& s : j.at("alphabet").at("letters")) {
      letters.push_back(s.get<std::string>().at(0));
    }
    Checkpoint ck{
        Alphabet(letters, j.at("alphabet").at("rep").get<std::string>().at(0)),
        ToyAcousticModel(
            detail::matrix_from_json(j.at("w1")),
            detail::vector_from_json(j.at("b1")),
            detail::matrix_from_json(j.at("w2")),
            detail::vector_from_json(j.at("b2"))),
        {detail::matrix_from_json(j.at("transitions").at("scores")),
         detail::vector_from_json(j.at("transitions").at("start"))},
        j.value("metadata", nlohmann::json::object())};
    if (ck.model.tokens() != ck.alphabet.size() ||
        ck.transitions.tokens() != ck.alphabet.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "checkpoint token count mismatch");
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint json: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write checkpoint " + path);
  }
  out << to_json(ck).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open checkpoint " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

} // namespace nasg
