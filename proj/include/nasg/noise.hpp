/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nasg/asg.hpp"
#include "nasg/error.hpp"
#include "nasg/eval.hpp"
#include "nasg/numerics.hpp"
#include "nasg/tokens.hpp"

namespace nasg {

/*
 * Letter-level transcription noise p(noisy | clean).
 *
 * probs is (V'+1) x (V'+1) with rows indexed by the noisy letter and columns
 * by the clean letter; index V' is the void symbol. Row void holds deletion
 * probabilities p(void | clean), column void holds insertion probabilities
 * p(noisy | void), and p(void | void) is the chance that an insertion slot
 * stays empty. Every column is a distribution.
 */
class NoiseModel {
 public:
  static constexpr double kColumnTolerance = 1e-9;

  NoiseModel(std::vector<char> letters, Matrix probs)
      : letters_(std::move(letters)), probs_(std::move(probs)) {
    validate();
    log_probs_ = probs_.array().log();
  }

  static NoiseModel identity(std::vector<char> letters) {
    const auto n = static_cast<Eigen::Index>(letters.size()) + 1;
    return NoiseModel(std::move(letters), Matrix::Identity(n, n));
  }

  static NoiseModel identity(const Alphabet& alphabet) {
    return identity(alphabet.letters());
  }

  int num_letters() const {
    return static_cast<int>(letters_.size());
  }
  int void_index() const {
    return num_letters();
  }
  const std::vector<char>& letters() const {
    return letters_;
  }
  const Matrix& probs() const {
    return probs_;
  }

  double prob(int noisy, int clean) const {
    return probs_(noisy, clean);
  }
  double substitution(int noisy, int clean) const {
    return probs_(noisy, clean);
  }
  double deletion(int clean) const {
    return probs_(void_index(), clean);
  }
  double insertion(int noisy) const {
    return probs_(noisy, void_index());
  }
  double no_insertion() const {
    return probs_(void_index(), void_index());
  }

  double log_prob(int noisy, int clean) const {
    return log_probs_(noisy, clean);
  }
  double log_deletion(int clean) const {
    return log_probs_(void_index(), clean);
  }
  double log_insertion(int noisy) const {
    return log_probs_(noisy, void_index());
  }

  bool has_deletions() const {
    return (probs_.row(void_index()).head(num_letters()).array() > 0.0).any();
  }
  bool has_insertions() const {
    return (probs_.col(void_index()).head(num_letters()).array() > 0.0).any();
  }

  bool compatible_with(const Alphabet& alphabet) const {
    return letters_ == alphabet.letters();
  }

  bool operator==(const NoiseModel& o) const {
    return letters_ == o.letters_ && probs_ == o.probs_;
  }

 private:
  void validate() const {
    const auto n = static_cast<Eigen::Index>(letters_.size()) + 1;
    if (probs_.rows() != n || probs_.cols() != n) {
      throw Error(
          ErrorCode::kDimensionMismatch,
          "noise matrix must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    for (Eigen::Index c = 0; c < n; ++c) {
      double sum = 0.0;
      for (Eigen::Index r = 0; r < n; ++r) {
        const double p = probs_(r, c);
        if (!(p >= 0.0 && p <= 1.0)) {
          throw Error(
              ErrorCode::kInvalidModel,
              "probability outside [0,1] at row " + std::to_string(r) +
                  ", column " + std::to_string(c));
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > kColumnTolerance) {
        throw Error(
            ErrorCode::kInvalidModel,
            "column " + std::to_string(c) + " sums to " + std::to_string(sum));
      }
    }
  }

  std::vector<char> letters_;
  Matrix probs_;
  Matrix log_probs_;
};

/// Rescales every column to sum to one. Columns with no mass become identity.
inline Matrix normalize_columns(Matrix probs) {
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    const double sum = probs.col(c).sum();
    if (sum > 0.0) {
      probs.col(c) /= sum;
    } else {
      probs.col(c).setZero();
      probs(c, c) = 1.0;
    }
  }
  return probs;
}

/// Additive smoothing followed by column renormalization.
inline NoiseModel smoothed(const NoiseModel& nm, double eps) {
  if (!(eps >= 0.0)) {
    throw Error(ErrorCode::kInvalidFactor, "smoothing must be >= 0");
  }
  Matrix p = nm.probs().array() + eps;
  return NoiseModel(nm.letters(), normalize_columns(std::move(p)));
}

/// Drops insertions and deletions; substitution columns are renormalized.
inline NoiseModel substitution_only(const NoiseModel& nm) {
  Matrix p = nm.probs();
  const int vd = nm.void_index();
  p.row(vd).setZero();
  p.col(vd).setZero();
  p(vd, vd) = 1.0;
  return NoiseModel(nm.letters(), normalize_columns(std::move(p)));
}

/// Multiplies every off-diagonal entry (substitutions, deletions, insertions)
/// by f; a column whose scaled off-diagonal mass exceeds one is rescaled to
/// exactly one. The diagonal absorbs the remainder.
inline NoiseModel scale(const NoiseModel& nm, double f) {
  if (!(f > 0.0) || !std::isfinite(f)) {
    throw Error(ErrorCode::kInvalidFactor, "scale factor must be > 0");
  }
  if (f == 1.0) {
    return nm;
  }
  Matrix p = nm.probs();
  const auto n = p.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    double off = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r != c) {
        p(r, c) *= f;
        off += p(r, c);
      }
    }
    if (off > 1.0) {
      for (Eigen::Index r = 0; r < n; ++r) {
        if (r != c) {
          p(r, c) /= off;
        }
      }
      off = 1.0;
    }
    p(c, c) = std::max(0.0, 1.0 - off);
  }
  return NoiseModel(nm.letters(), std::move(p));
}

/// Exact log p(noisy | clean): logadd over all SUB/DEL/INS alignments with no
/// two consecutive deletions and no two consecutive insertions.
inline LogScore log_likelihood(
    const LetterSeq& noisy,
    const LetterSeq& clean,
    const NoiseModel& nm) {
  const int L1 = static_cast<int>(noisy.size());
  const int L2 = static_cast<int>(clean.size());
  enum Last { kOther = 0, kDel = 1, kIns = 2 };
  std::vector<std::array<LogScore, 3>> dp(
      static_cast<std::size_t>(L2 + 1) * (L1 + 1),
      {kNegInf, kNegInf, kNegInf});
  auto cell = [L1, &dp](int i, int j) -> std::array<LogScore, 3>& {
    return dp[static_cast<std::size_t>(i) * (L1 + 1) + j];
  };
  cell(0, 0)[kOther] = 0.0;
  const int vd = nm.void_index();
  for (int i = 0; i <= L2; ++i) {
    for (int j = 0; j <= L1; ++j) {
      const auto here = cell(i, j);
      for (int last = 0; last < 3; ++last) {
        const LogScore s = here[last];
        if (s == kNegInf) {
          continue;
        }
        if (i < L2 && j < L1) {
          const double p = nm.prob(noisy[j], clean[i]);
          if (p > 0.0) {
            auto& dst = cell(i + 1, j + 1)[kOther];
            dst = logadd(dst, s + std::log(p));
          }
        }
        if (i < L2 && last != kDel) {
          const double p = nm.prob(vd, clean[i]);
          if (p > 0.0) {
            auto& dst = cell(i + 1, j)[kDel];
            dst = logadd(dst, s + std::log(p));
          }
        }
        if (j < L1 && last != kIns) {
          const double p = nm.prob(noisy[j], vd);
          if (p > 0.0) {
            auto& dst = cell(i, j + 1)[kIns];
            dst = logadd(dst, s + std::log(p));
          }
        }
      }
    }
  }
  const auto& end = cell(L2, L1);
  return logadd(logadd(end[0], end[1]), end[2]);
}

/// Substitution-only likelihood: the single position-by-position alignment.
inline LogScore log_likelihood_sub_only(
    const LetterSeq& noisy,
    const LetterSeq& clean,
    const NoiseModel& nm) {
  if (noisy.size() != clean.size()) {
    throw Error(
        ErrorCode::kLengthMismatch,
        "noisy length " + std::to_string(noisy.size()) +
            " differs from clean length " + std::to_string(clean.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    s += std::log(nm.prob(noisy[i], clean[i]));
  }
  return s;
}

/// Confusion counts gathered from hypothesis/reference pairs.
struct NoiseCounts {
  Matrix counts; // (V'+1) x (V'+1), [noisy][clean]
  long long insertion_slots = 0;

  explicit NoiseCounts(int num_letters)
      : counts(Matrix::Zero(num_letters + 1, num_letters + 1)) {}

  void add(const LetterSeq& hyp, const LetterSeq& ref) {
    const int vd = static_cast<int>(counts.rows()) - 1;
    EditResult a = edit_alignment(ref.ids, hyp.ids);
    for (const auto& step : a.steps) {
      switch (step.op) {
        case EditOp::kMatch:
        case EditOp::kSub:
          counts(hyp[step.target], ref[step.source]) += 1.0;
          break;
        case EditOp::kDel:
          counts(vd, ref[step.source]) += 1.0;
          break;
        case EditOp::kIns:
          counts(hyp[step.target], vd) += 1.0;
          break;
      }
    }
    insertion_slots += static_cast<long long>(ref.size()) + 1;
  }

  NoiseCounts& operator+=(const NoiseCounts& o) {
    counts += o.counts;
    insertion_slots += o.insertion_slots;
    return *this;
  }
};

/// Frequency estimate of a noise model from (hyp, ref) letter pairs, using one
/// minimum edit distance alignment per pair. Clean letters never seen in a
/// reference keep an identity column.
inline NoiseModel estimate(
    std::span<const std::pair<LetterSeq, LetterSeq>> pairs,
    const std::vector<char>& letters) {
  if (pairs.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "no hypothesis/reference pairs");
  }
  const int n = static_cast<int>(letters.size());
  NoiseCounts acc(n);
  for (const auto& [hyp, ref] : pairs) {
    acc.add(hyp, ref);
  }
  Matrix p = Matrix::Zero(n + 1, n + 1);
  for (int c = 0; c < n; ++c) {
    const double total = acc.counts.col(c).sum();
    if (total > 0.0) {
      p.col(c) = acc.counts.col(c) / total;
    } else {
      p(c, c) = 1.0;
    }
  }
  double inserted = acc.counts.col(n).head(n).sum();
  const auto slots = static_cast<double>(std::max<long long>(acc.insertion_slots, 1));
  const double norm = std::max(slots, inserted);
  for (int r = 0; r < n; ++r) {
    p(r, n) = acc.counts(r, n) / norm;
  }
  p(n, n) = std::max(0.0, 1.0 - inserted / norm);
  return NoiseModel(letters, std::move(p));
}

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Draws a row of column `clean`, optionally excluding the void row.
inline int sample_column(
    const NoiseModel& nm,
    int clean,
    bool exclude_void,
    std::mt19937_64& rng) {
  const int vd = nm.void_index();
  double total = 0.0;
  for (int r = 0; r <= vd; ++r) {
    if (!(exclude_void && r == vd)) {
      total += nm.prob(r, clean);
    }
  }
  if (!(total > 0.0)) {
    throw Error(
        ErrorCode::kInfeasibleCorruption,
        "column " + std::to_string(clean) +
            " has no mass outside deletion but a deletion is forbidden");
  }
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  int last = -1;
  for (int r = 0; r <= vd; ++r) {
    if (exclude_void && r == vd) {
      continue;
    }
    const double p = nm.prob(r, clean);
    if (p <= 0.0) {
      continue;
    }
    acc += p;
    last = r;
    if (u < acc) {
      return r;
    }
  }
  return last;
}

} // namespace detail

/// Samples one noisy transcription. Insertion slots (before every clean
/// letter and after the last) draw from the void column; every clean letter
/// draws from its own column. A deletion that would directly follow another
/// deletion is re-drawn, so the result always has positive likelihood.
inline LetterSeq corrupt(
    const LetterSeq& clean,
    const NoiseModel& nm,
    std::mt19937_64& rng) {
  const int vd = nm.void_index();
  LetterSeq out;
  bool prev_deleted = false;
  for (std::size_t k = 0; k <= clean.size(); ++k) {
    const int ins = detail::sample_column(nm, vd, false, rng);
    if (ins != vd) {
      out.ids.push_back(ins);
      prev_deleted = false;
    }
    if (k == clean.size()) {
      break;
    }
    const int r = detail::sample_column(nm, clean[k], prev_deleted, rng);
    if (r == vd) {
      prev_deleted = true;
    } else {
      out.ids.push_back(r);
      prev_deleted = false;
    }
  }
  return out;
}

inline LetterSeq corrupt(
    const LetterSeq& clean,
    const NoiseModel& nm,
    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return corrupt(clean, nm, rng);
}

// JSON file format: {"letters": [...], "probs": row-major (V'+1)^2 array},
// rows noisy, columns clean, void last.

inline nlohmann::json to_json(const NoiseModel& nm) {
  nlohmann::json j;
  j["letters"] = nlohmann::json::array();
  for (char c : nm.letters()) {
    j["letters"].push_back(std::string(1, c));
  }
  std::vector<double> flat(nm.probs().data(), nm.probs().data() + nm.probs().size());
  j["probs"] = flat;
  return j;
}

/// With renormalize set, columns that do not sum to one (for example values
/// transcribed from a rounded table) are rescaled instead of rejected.
inline NoiseModel noise_from_json(const nlohmann::json& j, bool renormalize = false) {
  try {
    std::vector<char> letters;
    for (const auto& s : j.at("letters")) {
      auto str = s.get<std::string>();
      if (str.size() != 1) {
        throw Error(ErrorCode::kParse, "letters must be single characters");
      }
      letters.push_back(str[0]);
    }
    const auto n = static_cast<Eigen::Index>(letters.size()) + 1;
    auto flat = j.at("probs").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != n * n) {
      throw Error(
          ErrorCode::kDimensionMismatch,
          "probs must have " + std::to_string(n * n) + " entries");
    }
    Matrix p = Eigen::Map<Matrix>(flat.data(), n, n);
    if (renormalize) {
      p = normalize_columns(std::move(p));
    }
    return NoiseModel(std::move(letters), std::move(p));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("noise model json: ") + e.what());
  }
}

inline NoiseModel load_noise_model(const std::string& path, bool renormalize = false) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open noise model " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  return noise_from_json(j, renormalize);
}

inline void save_noise_model(const NoiseModel& nm, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write noise model " + path);
  }
  out << to_json(nm).dump(2) << '\n';
}

/// Uniform model over the given letters: each clean letter is substituted
/// with total probability `sub` (spread evenly), deleted with `del`, and each
/// insertion slot receives a uniformly drawn letter with probability `ins`.
inline NoiseModel uniform_noise_model(
    std::vector<char> letters,
    double sub,
    double ins,
    double del) {
  const int n = static_cast<int>(letters.size());
  if (sub < 0 || ins < 0 || del < 0 || sub + del > 1.0 || ins > 1.0) {
    throw Error(ErrorCode::kInvalidFactor, "invalid uniform noise rates");
  }
  Matrix p = Matrix::Zero(n + 1, n + 1);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) {
      p(r, c) = r == c ? 1.0 - sub - del : (n > 1 ? sub / (n - 1) : 0.0);
    }
    p(n, c) = del;
    if (n == 1) {
      p(c, c) = 1.0 - del;
    }
  }
  for (int r = 0; r < n; ++r) {
    p(r, n) = ins / n;
  }
  p(n, n) = 1.0 - ins;
  return NoiseModel(std::move(letters), std::move(p));
}

} // namespace nasg
