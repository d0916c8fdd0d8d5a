/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nasg/error.hpp"
#include "nasg/numerics.hpp"
#include "nasg/tokens.hpp"

namespace nasg {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Per-frame token scores f_t(v), T x V.
struct EmissionMatrix {
  Matrix scores;

  EmissionMatrix() = default;
  explicit EmissionMatrix(Matrix m) : scores(std::move(m)) {}

  static EmissionMatrix zeros(int frames, int tokens) {
    return EmissionMatrix(Matrix::Zero(frames, tokens));
  }

  int frames() const {
    return static_cast<int>(scores.rows());
  }
  int tokens() const {
    return static_cast<int>(scores.cols());
  }
  double operator()(int t, int v) const {
    return scores(t, v);
  }
};

/// Bigram transition scores. scores(i, j) = g(i | j); start(i) = g(i | START).
struct TransitionMatrix {
  Matrix scores;
  Vector start;

  static TransitionMatrix zeros(int tokens) {
    return {Matrix::Zero(tokens, tokens), Vector::Zero(tokens)};
  }

  int tokens() const {
    return static_cast<int>(scores.rows());
  }
  double operator()(int to, int from) const {
    return scores(to, from);
  }
};

struct LossResult {
  double loss = 0.0;
  Matrix grad_emissions;
  TransitionMatrix grad_transitions;
  LogScore numerator = kNegInf;
  LogScore normalizer = kNegInf;
};

namespace detail {

inline void check_inputs(const EmissionMatrix& em, const TransitionMatrix& tr) {
  const int V = em.tokens();
  if (em.frames() < 1) {
    throw Error(ErrorCode::kDimensionMismatch, "emissions have no frames");
  }
  if (tr.scores.rows() != V || tr.scores.cols() != V || tr.start.size() != V) {
    throw Error(
        ErrorCode::kDimensionMismatch,
        "transition matrix is not " + std::to_string(V) + "x" +
            std::to_string(V) + " with a start vector of the same size");
  }
  if (!em.scores.allFinite() || !tr.scores.allFinite() ||
      !tr.start.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "non-finite emission or transition");
  }
}

} // namespace detail

/// Frame-level posterior marginals of a lattice plus its total log score.
struct Posteriors {
  LogScore log_total = kNegInf;
  Matrix nodes; // T x V, p(pi_t = v)
  Matrix edges; // V x V, (to, from), summed over frames
  Vector start; // p(pi_1 = v)
};

inline LogScore path_score(
    std::span<const int> path,
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  detail::check_inputs(em, tr);
  if (static_cast<int>(path.size()) != em.frames()) {
    throw Error(ErrorCode::kDimensionMismatch, "path length differs from T");
  }
  double s = 0.0;
  for (int t = 0; t < em.frames(); ++t) {
    const int v = path[t];
    if (v < 0 || v >= em.tokens()) {
      throw Error(ErrorCode::kDimensionMismatch, "path label out of range");
    }
    s += em(t, v) + (t == 0 ? tr.start(v) : tr(v, path[t - 1]));
  }
  return s;
}

namespace detail {

inline Matrix full_forward(const EmissionMatrix& em, const TransitionMatrix& tr) {
  const int T = em.frames();
  const int V = em.tokens();
  Matrix alpha(T, V);
  std::vector<double> terms(V);
  for (int v = 0; v < V; ++v) {
    alpha(0, v) = em(0, v) + tr.start(v);
  }
  for (int t = 1; t < T; ++t) {
    for (int v = 0; v < V; ++v) {
      for (int u = 0; u < V; ++u) {
        terms[u] = alpha(t - 1, u) + tr(v, u);
      }
      alpha(t, v) = em(t, v) + logadd_all(terms);
    }
  }
  return alpha;
}

} // namespace detail

/// log of the summed score of all V^T frame paths (fully connected graph).
inline LogScore normalizer_Z(
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  detail::check_inputs(em, tr);
  Matrix alpha = detail::full_forward(em, tr);
  return logadd_all(std::span<const double>(
      alpha.row(em.frames() - 1).data(), static_cast<std::size_t>(em.tokens())));
}

/// Forward-backward over the fully connected graph.
inline Posteriors full_posteriors(
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  detail::check_inputs(em, tr);
  const int T = em.frames();
  const int V = em.tokens();
  Matrix alpha = detail::full_forward(em, tr);
  Matrix beta(T, V);
  std::vector<double> terms(V);
  beta.row(T - 1).setZero();
  for (int t = T - 2; t >= 0; --t) {
    for (int u = 0; u < V; ++u) {
      for (int v = 0; v < V; ++v) {
        terms[v] = tr(v, u) + em(t + 1, v) + beta(t + 1, v);
      }
      beta(t, u) = logadd_all(terms);
    }
  }
  Posteriors out;
  out.log_total = logadd_all(std::span<const double>(
      alpha.row(T - 1).data(), static_cast<std::size_t>(V)));
  const double Z = out.log_total;
  out.nodes = (alpha + beta).array() - Z;
  out.nodes = out.nodes.array().exp();
  out.start = out.nodes.row(0).transpose();
  out.edges = Matrix::Zero(V, V);
  for (int t = 1; t < T; ++t) {
    for (int v = 0; v < V; ++v) {
      const double right = em(t, v) + beta(t, v) - Z;
      for (int u = 0; u < V; ++u) {
        out.edges(v, u) += std::exp(alpha(t - 1, u) + tr(v, u) + right);
      }
    }
  }
  return out;
}

namespace detail {

inline void check_transcription(
    const TokenSeq& y,
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  check_inputs(em, tr);
  if (y.empty()) {
    throw Error(ErrorCode::kEmptyTranscription, "transcription is empty");
  }
  if (static_cast<int>(y.size()) > em.frames()) {
    throw Error(
        ErrorCode::kTranscriptionTooLong,
        std::to_string(y.size()) + " tokens do not fit in " +
            std::to_string(em.frames()) + " frames");
  }
  for (std::size_t l = 0; l < y.size(); ++l) {
    if (y[l] < 0 || y[l] >= em.tokens()) {
      throw Error(ErrorCode::kDimensionMismatch, "token index out of range");
    }
    if (l > 0 && y[l] == y[l - 1]) {
      throw Error(ErrorCode::kMalformedSequence, "identical adjacent tokens");
    }
  }
}

inline Matrix asg_forward(
    const TokenSeq& y,
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  const int T = em.frames();
  const int L = static_cast<int>(y.size());
  Matrix alpha = Matrix::Constant(T, L, kNegInf);
  alpha(0, 0) = em(0, y[0]) + tr.start(y[0]);
  for (int t = 1; t < T; ++t) {
    // Token l needs at least l+1 frames before it and L-l after it.
    const int lo = std::max(0, L - (T - t));
    const int hi = std::min(L - 1, t);
    for (int l = lo; l <= hi; ++l) {
      LogScore s = alpha(t - 1, l) + tr(y[l], y[l]);
      if (l > 0) {
        s = logadd(s, alpha(t - 1, l - 1) + tr(y[l], y[l - 1]));
      }
      alpha(t, l) = s == kNegInf ? kNegInf : em(t, y[l]) + s;
    }
  }
  return alpha;
}

} // namespace detail

/// log of the summed score of all frame paths that collapse to y.
inline LogScore score_S_ASG(
    const TokenSeq& y,
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  detail::check_transcription(y, em, tr);
  Matrix alpha = detail::asg_forward(y, em, tr);
  return alpha(em.frames() - 1, static_cast<Eigen::Index>(y.size()) - 1);
}

/// Forward-backward restricted to alignments of y; marginals are reported on
/// the token axis (T x V), not on transcription positions.
inline Posteriors asg_posteriors(
    const TokenSeq& y,
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  detail::check_transcription(y, em, tr);
  const int T = em.frames();
  const int V = em.tokens();
  const int L = static_cast<int>(y.size());
  Matrix alpha = detail::asg_forward(y, em, tr);
  Matrix beta = Matrix::Constant(T, L, kNegInf);
  beta(T - 1, L - 1) = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int l = 0; l < L; ++l) {
      LogScore s = tr(y[l], y[l]) + em(t + 1, y[l]) + beta(t + 1, l);
      if (l + 1 < L) {
        s = logadd(s, tr(y[l + 1], y[l]) + em(t + 1, y[l + 1]) + beta(t + 1, l + 1));
      }
      beta(t, l) = s;
    }
  }
  Posteriors out;
  out.log_total = alpha(T - 1, L - 1);
  const double S = out.log_total;
  out.nodes = Matrix::Zero(T, V);
  out.edges = Matrix::Zero(V, V);
  out.start = Vector::Zero(V);
  for (int t = 0; t < T; ++t) {
    for (int l = 0; l < L; ++l) {
      const double a = alpha(t, l);
      const double b = beta(t, l);
      if (a == kNegInf || b == kNegInf) {
        continue;
      }
      out.nodes(t, y[l]) += std::exp(a + b - S);
      if (t == 0) {
        continue;
      }
      const double right = em(t, y[l]) + b - S;
      if (alpha(t - 1, l) != kNegInf) {
        out.edges(y[l], y[l]) += std::exp(alpha(t - 1, l) + tr(y[l], y[l]) + right);
      }
      if (l > 0 && alpha(t - 1, l - 1) != kNegInf) {
        out.edges(y[l], y[l - 1]) +=
            std::exp(alpha(t - 1, l - 1) + tr(y[l], y[l - 1]) + right);
      }
    }
  }
  out.start(y[0]) = out.nodes(0, y[0]);
  return out;
}

/// Builds loss = -numerator + Z and gradients p_full - p_numerator from the
/// two sets of marginals.
inline LossResult loss_from_posteriors(
    const Posteriors& full,
    const Posteriors& numerator) {
  LossResult r;
  r.numerator = numerator.log_total;
  r.normalizer = full.log_total;
  r.loss = -r.numerator + r.normalizer;
  r.grad_emissions = full.nodes - numerator.nodes;
  r.grad_transitions.scores = full.edges - numerator.edges;
  r.grad_transitions.start = full.start - numerator.start;
  return r;
}

inline LossResult asg_loss(
    const TokenSeq& y,
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  Posteriors num = asg_posteriors(y, em, tr);
  Posteriors full = full_posteriors(em, tr);
  return loss_from_posteriors(full, num);
}

// Flattening helpers shared by gradient checks: emissions row-major, then
// transition scores row-major, then the start vector.

inline std::vector<double> flatten(
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  std::vector<double> out;
  out.reserve(em.scores.size() + tr.scores.size() + tr.start.size());
  out.insert(out.end(), em.scores.data(), em.scores.data() + em.scores.size());
  out.insert(out.end(), tr.scores.data(), tr.scores.data() + tr.scores.size());
  out.insert(out.end(), tr.start.data(), tr.start.data() + tr.start.size());
  return out;
}

inline std::vector<double> flatten(const LossResult& r) {
  EmissionMatrix em(r.grad_emissions);
  return flatten(em, r.grad_transitions);
}

inline void unflatten(
    std::span<const double> flat,
    EmissionMatrix& em,
    TransitionMatrix& tr) {
  const auto ne = static_cast<std::size_t>(em.scores.size());
  const auto nt = static_cast<std::size_t>(tr.scores.size());
  const auto ns = static_cast<std::size_t>(tr.start.size());
  if (flat.size() != ne + nt + ns) {
    throw Error(ErrorCode::kDimensionMismatch, "flat parameter size mismatch");
  }
  std::copy_n(flat.data(), ne, em.scores.data());
  std::copy_n(flat.data() + ne, nt, tr.scores.data());
  std::copy_n(flat.data() + ne + nt, ns, tr.start.data());
}

} // namespace nasg
