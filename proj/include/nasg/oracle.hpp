/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nasg/asg.hpp"
#include "nasg/error.hpp"
#include "nasg/noise.hpp"
#include "nasg/numerics.hpp"
#include "nasg/tokens.hpp"

// Exponential-time reference implementations. They enumerate paths and
// alignments explicitly and share no recursion with the dynamic programs they
// are used to check.

namespace nasg::oracle {

struct EnumLimit {
  int max_T = 6;
  int max_V = 4;
  int max_L = 4;
};

inline constexpr double kMaxSearchSpace = 1e7;

namespace detail {

inline void check_paths(const EmissionMatrix& em, const EnumLimit& limit) {
  const int T = em.frames();
  const int V = em.tokens();
  if (T > limit.max_T || V > limit.max_V) {
    throw Error(
        ErrorCode::kLimitExceeded,
        "T=" + std::to_string(T) + ", V=" + std::to_string(V) +
            " exceeds the enumeration limit");
  }
  if (std::pow(static_cast<double>(V), T) > kMaxSearchSpace) {
    throw Error(ErrorCode::kLimitExceeded, "V^T exceeds 1e7 paths");
  }
}

// Calls fn(path) for every label sequence in [0, V)^T, in lexicographic order.
inline void for_each_path(int T, int V, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> path(T, 0);
  while (true) {
    fn(path);
    int t = T - 1;
    while (t >= 0 && ++path[t] == V) {
      path[t] = 0;
      --t;
    }
    if (t < 0) {
      return;
    }
  }
}

inline double direct_path_score(
    const std::vector<int>& path,
    const EmissionMatrix& em,
    const TransitionMatrix& tr) {
  double s = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    s += em.scores(t, path[t]);
    s += t == 0 ? tr.start(path[0]) : tr.scores(path[t], path[t - 1]);
  }
  return s;
}

// Every sequence of SUB/DEL/INS operations aligning clean to noisy with no
// two consecutive deletions or insertions; fn receives the sum of the log
// probabilities of each alignment whose operations all have positive mass.
inline void for_each_alignment(
    const LetterSeq& noisy,
    const LetterSeq& clean,
    const NoiseModel& nm,
    const std::function<void(double)>& fn) {
  const int vd = nm.void_index();
  enum Last { kNone, kSub, kDel, kIns };
  std::function<void(std::size_t, std::size_t, Last, double)> rec =
      [&](std::size_t i, std::size_t j, Last last, double logp) {
        if (i == clean.size() && j == noisy.size()) {
          fn(logp);
        }
        if (i < clean.size() && j < noisy.size()) {
          const double p = nm.prob(noisy[j], clean[i]);
          if (p > 0.0) {
            rec(i + 1, j + 1, kSub, logp + std::log(p));
          }
        }
        if (i < clean.size() && last != kDel) {
          const double p = nm.prob(vd, clean[i]);
          if (p > 0.0) {
            rec(i + 1, j, kDel, logp + std::log(p));
          }
        }
        if (j < noisy.size() && last != kIns) {
          const double p = nm.prob(noisy[j], vd);
          if (p > 0.0) {
            rec(i, j + 1, kIns, logp + std::log(p));
          }
        }
      };
  rec(0, 0, kNone, 0.0);
}

inline LogScore weighted_noise_score(
    const LetterSeq& noisy,
    const LetterSeq& clean,
    const NoiseModel& nm,
    double alpha) {
  std::vector<double> scores;
  for_each_alignment(noisy, clean, nm, [&](double logp) {
    scores.push_back(alpha * logp);
  });
  return logadd_all(scores);
}

} // namespace detail

inline LogScore oracle_Z(
    const EmissionMatrix& em,
    const TransitionMatrix& tr,
    const EnumLimit& limit = {}) {
  detail::check_paths(em, limit);
  std::vector<double> scores;
  detail::for_each_path(em.frames(), em.tokens(), [&](const std::vector<int>& p) {
    scores.push_back(detail::direct_path_score(p, em, tr));
  });
  return logadd_all(scores);
}

inline LogScore oracle_S_ASG(
    const TokenSeq& y,
    const EmissionMatrix& em,
    const TransitionMatrix& tr,
    const EnumLimit& limit = {}) {
  detail::check_paths(em, limit);
  if (static_cast<int>(y.size()) > limit.max_L) {
    throw Error(ErrorCode::kLimitExceeded, "transcription longer than max_L");
  }
  std::vector<double> scores;
  detail::for_each_path(em.frames(), em.tokens(), [&](const std::vector<int>& p) {
    if (collapse(p) == y) {
      scores.push_back(detail::direct_path_score(p, em, tr));
    }
  });
  return logadd_all(scores);
}

inline LogScore oracle_noise_likelihood(
    const LetterSeq& noisy,
    const LetterSeq& clean,
    const NoiseModel& nm,
    const EnumLimit& limit = {}) {
  if (static_cast<int>(noisy.size()) > limit.max_L ||
      static_cast<int>(clean.size()) > limit.max_L) {
    throw Error(ErrorCode::kLimitExceeded, "strings longer than max_L");
  }
  return detail::weighted_noise_score(noisy, clean, nm, 1.0);
}

/// Sum over every frame path pi*, its clean transcription Y* = collapse(pi*),
/// and every noise alignment between the noisy letters and Y*'s letters.
/// Paths whose transcription starts with the repetition token are not valid
/// transcriptions and are skipped.
inline LogScore oracle_S_L2G(
    const TokenSeq& noisy,
    const EmissionMatrix& em,
    const TransitionMatrix& tr,
    const NoiseModel& nm,
    double alpha,
    const EnumLimit& limit = {}) {
  detail::check_paths(em, limit);
  if (static_cast<int>(noisy.size()) > limit.max_L) {
    throw Error(ErrorCode::kLimitExceeded, "noisy transcription longer than max_L");
  }
  const int rep = em.tokens() - 1;
  const LetterSeq y = decode(noisy, rep);
  std::map<LetterSeq, LogScore> noise_cache;
  std::vector<double> scores;
  detail::for_each_path(em.frames(), em.tokens(), [&](const std::vector<int>& p) {
    TokenSeq clean_tokens = collapse(p);
    if (clean_tokens[0] == rep) {
      return;
    }
    LetterSeq letters;
    for (int id : clean_tokens.ids) {
      letters.ids.push_back(id == rep ? letters.ids.back() : id);
    }
    auto it = noise_cache.find(letters);
    if (it == noise_cache.end()) {
      it = noise_cache
               .emplace(letters, detail::weighted_noise_score(y, letters, nm, alpha))
               .first;
    }
    if (it->second != kNegInf) {
      scores.push_back(detail::direct_path_score(p, em, tr) + it->second);
    }
  });
  return logadd_all(scores);
}

} // namespace nasg::oracle
