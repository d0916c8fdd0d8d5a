/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nasg/asg.hpp"
#include "nasg/error.hpp"
#include "nasg/l2g.hpp"
#include "nasg/noise.hpp"
#include "nasg/numerics.hpp"
#include "nasg/oracle.hpp"
#include "nasg/tokens.hpp"

// Random tiny instances and the randomized suites that compare the dynamic
// programs and the beam search against the enumeration oracles.

namespace nasg::verify {

using Rng = std::mt19937_64;

inline int rand_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double rand_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline EmissionMatrix random_emissions(int T, int V, Rng& rng, double scale = 2.0) {
  Matrix m(T, V);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rand_real(rng, -scale, scale);
  }
  return EmissionMatrix(std::move(m));
}

inline TransitionMatrix random_transitions(int V, Rng& rng, double scale = 1.0) {
  TransitionMatrix tr = TransitionMatrix::zeros(V);
  for (Eigen::Index i = 0; i < tr.scores.size(); ++i) {
    tr.scores.data()[i] = rand_real(rng, -scale, scale);
  }
  for (Eigen::Index i = 0; i < tr.start.size(); ++i) {
    tr.start(i) = rand_real(rng, -scale, scale);
  }
  return tr;
}

/// Valid token sequence of length L over V tokens (the last one is rep):
/// no leading rep and no two equal neighbours.
inline TokenSeq random_tokens(int L, int V, Rng& rng) {
  TokenSeq y;
  const int rep = V - 1;
  while (static_cast<int>(y.size()) < L) {
    const int v = rand_int(rng, 0, V - 1);
    if (y.empty() ? v == rep : v == y.ids.back()) {
      continue;
    }
    y.ids.push_back(v);
  }
  return y;
}

/// Letter string over A letters with no three equal letters in a row. With a
/// single letter only lengths up to 2 exist, so L is capped there.
inline LetterSeq random_letters(int L, int A, Rng& rng) {
  if (A == 1) {
    L = std::min(L, 2);
  }
  LetterSeq s;
  while (static_cast<int>(s.size()) < L) {
    const int c = rand_int(rng, 0, A - 1);
    const auto n = s.size();
    if (n >= 2 && s[n - 1] == c && s[n - 2] == c) {
      continue;
    }
    s.ids.push_back(c);
  }
  return s;
}

inline std::vector<char> letter_names(int A) {
  std::vector<char> out;
  for (int i = 0; i < A; ++i) {
    out.push_back(static_cast<char>('a' + i));
  }
  return out;
}

struct NoiseShape {
  bool insertions = true;
  bool deletions = true;
  double zero_fraction = 0.2; // chance that an off-diagonal entry is zero
};

/// Random column-stochastic model. The diagonal always keeps positive mass.
inline NoiseModel random_noise_model(int A, Rng& rng, const NoiseShape& shape = {}) {
  Matrix p = Matrix::Zero(A + 1, A + 1);
  for (int c = 0; c <= A; ++c) {
    for (int r = 0; r <= A; ++r) {
      const bool is_void_row = r == A;
      const bool is_void_col = c == A;
      if (is_void_row && is_void_col) {
        p(r, c) = rand_real(rng, 0.5, 2.0);
        continue;
      }
      if ((is_void_row && !shape.deletions) || (is_void_col && !shape.insertions)) {
        continue;
      }
      if (r == c) {
        p(r, c) = rand_real(rng, 1.0, 3.0);
      } else if (rand_real(rng, 0.0, 1.0) >= shape.zero_fraction) {
        p(r, c) = rand_real(rng, 0.0, 1.0);
      }
    }
  }
  return NoiseModel(letter_names(A), normalize_columns(std::move(p)));
}

struct CheckReport {
  std::string name;
  int instances = 0;
  int failures = 0;
  int skipped = 0; // instances where both sides agree the score is log(0)
  double max_error = 0.0;
  double seconds = 0.0;
  double tolerance = 0.0;
  std::string first_failure;

  bool passed() const {
    return failures == 0 && instances > 0;
  }
};

namespace detail {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Both -inf counts as agreement; one -inf is an infinite error.
inline double score_gap(double a, double b) {
  if (a == kNegInf && b == kNegInf) {
    return 0.0;
  }
  if (a == kNegInf || b == kNegInf) {
    return std::numeric_limits<double>::infinity();
  }
  return std::abs(a - b);
}

inline void record(CheckReport& r, double err, const std::string& what) {
  r.max_error = std::max(r.max_error, err);
  if (!(err < r.tolerance)) {
    if (r.failures == 0) {
      r.first_failure = what + " (error " + std::to_string(err) + ")";
    }
    ++r.failures;
  }
}

} // namespace detail

/// Z and S_ASG against path enumeration; T <= 6, V <= 4, |Y| <= 4.
inline CheckReport check_asg_oracle(int instances, std::uint64_t seed, double tol = 1e-9) {
  CheckReport rep;
  rep.name = "asg-oracle";
  rep.tolerance = tol;
  detail::Timer timer;
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    const int V = rand_int(rng, 2, 4);
    const int T = rand_int(rng, 1, 6);
    const int L = rand_int(rng, 1, std::min(T, 4));
    auto em = random_emissions(T, V, rng);
    auto tr = random_transitions(V, rng);
    auto y = random_tokens(L, V, rng);
    const double ez = detail::score_gap(normalizer_Z(em, tr), oracle::oracle_Z(em, tr));
    const double es =
        detail::score_gap(score_S_ASG(y, em, tr), oracle::oracle_S_ASG(y, em, tr));
    detail::record(rep, std::max(ez, es), "instance " + std::to_string(k));
    ++rep.instances;
  }
  rep.seconds = timer.seconds();
  return rep;
}

/// Alignment DP against explicit alignment enumeration; lengths <= 6.
inline CheckReport check_noise_oracle(int instances, std::uint64_t seed, double tol = 1e-12) {
  CheckReport rep;
  rep.name = "noise-oracle";
  rep.tolerance = tol;
  detail::Timer timer;
  Rng rng(seed);
  const oracle::EnumLimit limit{6, 4, 6};
  for (int k = 0; k < instances; ++k) {
    const int A = rand_int(rng, 1, 3);
    NoiseShape shape;
    shape.insertions = rand_int(rng, 0, 3) > 0;
    shape.deletions = rand_int(rng, 0, 3) > 0;
    auto nm = random_noise_model(A, rng, shape);
    auto clean = random_letters(rand_int(rng, 0, 6), A, rng);
    auto noisy = random_letters(rand_int(rng, 0, 6), A, rng);
    const double a = log_likelihood(noisy, clean, nm);
    const double b = oracle::oracle_noise_likelihood(noisy, clean, nm, limit);
    if (a == kNegInf && b == kNegInf) {
      ++rep.skipped;
    }
    detail::record(rep, detail::score_gap(a, b), "instance " + std::to_string(k));
    ++rep.instances;
  }
  rep.seconds = timer.seconds();
  return rep;
}

struct L2GInstance {
  TokenSeq noisy;
  EmissionMatrix em;
  TransitionMatrix tr;
  NoiseModel nm;
  double alpha;
};

inline L2GInstance random_l2g_instance(Rng& rng, int max_T, int max_A, int max_noisy) {
  const int A = rand_int(rng, 1, max_A);
  const int V = A + 1;
  const int T = rand_int(rng, 1, max_T);
  NoiseShape shape;
  const int kind = rand_int(rng, 0, 3);
  shape.insertions = kind == 1 || kind == 3;
  shape.deletions = kind == 2 || kind == 3;
  auto nm = random_noise_model(A, rng, shape);
  const double alphas[] = {0.0, 0.5, 1.0};
  const double alpha = alphas[rand_int(rng, 0, 2)];
  LetterSeq noisy = random_letters(rand_int(rng, 1, max_noisy), A, rng);
  return {
      encode(noisy, A),
      random_emissions(T, V, rng),
      random_transitions(V, rng),
      std::move(nm),
      alpha};
}

inline double beam_score_or_neg_inf(const L2GInstance& in, int beam_size) {
  L2GConfig cfg;
  cfg.alpha = in.alpha;
  cfg.beam_size = beam_size;
  try {
    return l2g_forward(in.noisy, in.em, in.tr, in.nm, cfg).score;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kEmptyBeam) {
      return kNegInf;
    }
    throw;
  }
}

inline constexpr int kExhaustiveBeam = 1 << 20;

/// Exhaustive beam against (transcription, path, alignment) enumeration;
/// T <= 5, V' <= 2, |noisy| <= 3, alpha in {0, 0.5, 1}.
inline CheckReport check_l2g_oracle(int instances, std::uint64_t seed, double tol = 1e-9) {
  CheckReport rep;
  rep.name = "l2g-oracle";
  rep.tolerance = tol;
  detail::Timer timer;
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    auto in = random_l2g_instance(rng, 5, 2, 3);
    const double a = beam_score_or_neg_inf(in, kExhaustiveBeam);
    const double b = oracle::oracle_S_L2G(in.noisy, in.em, in.tr, in.nm, in.alpha);
    if (a == kNegInf && b == kNegInf) {
      ++rep.skipped;
    }
    detail::record(rep, detail::score_gap(a, b), "instance " + std::to_string(k));
    ++rep.instances;
  }
  rep.seconds = timer.seconds();
  return rep;
}

/// Beam score over N = 1, 2, 4, ..., 256 never decreases (beyond `slack`) and
/// the largest beam matches the oracle within tol. Feasible instances only.
inline CheckReport check_beam_monotone(
    int instances,
    std::uint64_t seed,
    double tol = 1e-9,
    double slack = 1e-12) {
  CheckReport rep;
  rep.name = "beam-monotone";
  rep.tolerance = tol;
  detail::Timer timer;
  Rng rng(seed);
  while (rep.instances < instances) {
    auto in = random_l2g_instance(rng, 6, 3, 3);
    const double exact = oracle::oracle_S_L2G(in.noisy, in.em, in.tr, in.nm, in.alpha);
    if (exact == kNegInf) {
      continue;
    }
    double prev = kNegInf;
    double worst_drop = 0.0;
    double top = kNegInf;
    for (int N = 1; N <= 256; N *= 2) {
      const double s = beam_score_or_neg_inf(in, N);
      if (prev != kNegInf && s + slack < prev) {
        worst_drop = std::max(worst_drop, s == kNegInf ? INFINITY : prev - s);
      }
      prev = std::max(prev, s);
      top = s;
    }
    const std::string what = "instance " + std::to_string(rep.instances);
    if (worst_drop > 0.0) {
      if (rep.failures == 0) {
        rep.first_failure = what + " decreased by " + std::to_string(worst_drop);
      }
      ++rep.failures;
    }
    detail::record(rep, detail::score_gap(top, exact), what + " gap at N=256");
    ++rep.instances;
  }
  rep.seconds = timer.seconds();
  return rep;
}

/// Central differences on emissions and transitions (start included).
inline double gradient_error(
    const LossResult& analytic,
    const EmissionMatrix& em,
    const TransitionMatrix& tr,
    const std::function<double(const EmissionMatrix&, const TransitionMatrix&)>& loss,
    double step = kDefaultFiniteDiffStep) {
  const auto params = flatten(em, tr);
  const auto grad = flatten(analytic);
  EmissionMatrix pe = em;
  TransitionMatrix pt = tr;
  return finite_diff_check(
      [&](std::span<const double> p) {
        unflatten(p, pe, pt);
        return loss(pe, pt);
      },
      params,
      grad,
      step);
}

inline CheckReport check_asg_gradients(
    int instances,
    std::uint64_t seed,
    double tol = kDefaultFiniteDiffTolerance) {
  CheckReport rep;
  rep.name = "asg-gradcheck";
  rep.tolerance = tol;
  detail::Timer timer;
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    const int V = rand_int(rng, 2, 5);
    const int T = rand_int(rng, 1, 8);
    const int L = rand_int(rng, 1, std::min(T, 5));
    auto em = random_emissions(T, V, rng);
    auto tr = random_transitions(V, rng);
    auto y = random_tokens(L, V, rng);
    const auto r = asg_loss(y, em, tr);
    const double err = gradient_error(r, em, tr, [&](const auto& e, const auto& t) {
      return asg_loss(y, e, t).loss;
    });
    detail::record(rep, err, "instance " + std::to_string(k));
    ++rep.instances;
  }
  rep.seconds = timer.seconds();
  return rep;
}

/// Exhaustive beam, so no pruning boundary can be crossed by a probe.
inline CheckReport check_l2g_gradients(
    int instances,
    std::uint64_t seed,
    double tol = kDefaultFiniteDiffTolerance) {
  CheckReport rep;
  rep.name = "l2g-gradcheck";
  rep.tolerance = tol;
  detail::Timer timer;
  Rng rng(seed);
  while (rep.instances < instances) {
    auto in = random_l2g_instance(rng, 6, 3, 3);
    L2GConfig cfg;
    cfg.alpha = in.alpha;
    cfg.beam_size = kExhaustiveBeam;
    LossResult r;
    try {
      r = l2g_loss(in.noisy, in.em, in.tr, in.nm, cfg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyBeam) {
        throw;
      }
      continue;
    }
    const double err = gradient_error(r, in.em, in.tr, [&](const auto& e, const auto& t) {
      return l2g_loss(in.noisy, e, t, in.nm, cfg).loss;
    });
    detail::record(rep, err, "instance " + std::to_string(rep.instances));
    ++rep.instances;
  }
  rep.seconds = timer.seconds();
  return rep;
}

/// Identity noise model: the noise-aware loss collapses to plain ASG.
inline CheckReport check_reduction(int instances, std::uint64_t seed, double tol = 1e-9) {
  CheckReport rep;
  rep.name = "identity-reduction";
  rep.tolerance = tol;
  detail::Timer timer;
  Rng rng(seed);
  for (int k = 0; k < instances; ++k) {
    const int A = rand_int(rng, 1, 4);
    const int V = A + 1;
    const int T = rand_int(rng, 1, 10);
    const LetterSeq letters = random_letters(rand_int(rng, 1, T), A, rng);
    const TokenSeq y = encode(letters, A);
    if (static_cast<int>(y.size()) > T) {
      --k;
      continue;
    }
    auto em = random_emissions(T, V, rng);
    auto tr = random_transitions(V, rng);
    L2GConfig cfg;
    cfg.alpha = rand_real(rng, 0.0, 1.0);
    cfg.beam_size = kExhaustiveBeam;
    const auto a = asg_loss(y, em, tr);
    const auto b = l2g_loss(y, em, tr, NoiseModel::identity(letter_names(A)), cfg);
    double err = std::abs(a.loss - b.loss);
    err = std::max(err, (a.grad_emissions - b.grad_emissions).cwiseAbs().maxCoeff());
    err = std::max(
        err, (a.grad_transitions.scores - b.grad_transitions.scores).cwiseAbs().maxCoeff());
    err = std::max(
        err, (a.grad_transitions.start - b.grad_transitions.start).cwiseAbs().maxCoeff());
    detail::record(rep, err, "instance " + std::to_string(k));
    ++rep.instances;
  }
  rep.seconds = timer.seconds();
  return rep;
}

} // namespace nasg::verify
