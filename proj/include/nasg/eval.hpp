/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nasg/asg.hpp"
#include "nasg/error.hpp"
#include "nasg/tokens.hpp"

namespace nasg {

enum class EditOp { kMatch, kSub, kDel, kIns };

/// One step of an alignment turning a source sequence into a target.
/// kDel consumes a source element only, kIns a target element only; the
/// unused index is -1.
struct EditStep {
  EditOp op;
  int source;
  int target;
};

struct EditResult {
  int distance = 0;
  int matches = 0;
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  std::vector<EditStep> steps;
};

/// Unit-cost Levenshtein alignment from source to target. Among optimal
/// alignments the backtrace prefers (mis)match, then deletion, then insertion.
template <class Seq>
EditResult edit_alignment(const Seq& source, const Seq& target) {
  const std::size_t n = std::size(source);
  const std::size_t m = std::size(target);
  std::vector<int> dp((n + 1) * (m + 1));
  auto at = [m, &dp](std::size_t i, std::size_t j) -> int& {
    return dp[i * (m + 1) + j];
  };
  for (std::size_t i = 0; i <= n; ++i) {
    at(i, 0) = static_cast<int>(i);
  }
  for (std::size_t j = 0; j <= m; ++j) {
    at(0, j) = static_cast<int>(j);
  }
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (source[i - 1] == target[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditResult r;
  r.distance = at(n, m);
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = source[i - 1] == target[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        r.steps.push_back(
            {same ? EditOp::kMatch : EditOp::kSub,
             static_cast<int>(i - 1),
             static_cast<int>(j - 1)});
        (same ? r.matches : r.substitutions)++;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      r.steps.push_back({EditOp::kDel, static_cast<int>(i - 1), -1});
      ++r.deletions;
      --i;
      continue;
    }
    r.steps.push_back({EditOp::kIns, -1, static_cast<int>(j - 1)});
    ++r.insertions;
    --j;
  }
  std::reverse(r.steps.begin(), r.steps.end());
  return r;
}

template <class Seq>
EditResult edit_distance(const Seq& a, const Seq& b) {
  EditResult r = edit_alignment(a, b);
  r.steps.clear();
  return r;
}

struct ErrorCount {
  long long edits = 0;
  long long reference_length = 0;

  double rate() const {
    return reference_length == 0
        ? (edits == 0 ? 0.0 : 1.0)
        : static_cast<double>(edits) / static_cast<double>(reference_length);
  }
  ErrorCount& operator+=(const ErrorCount& o) {
    edits += o.edits;
    reference_length += o.reference_length;
    return *this;
  }
};

/// Letter errors between two transcripts. Spaces count as letters and each
/// transcript is framed by a word-boundary space on both sides, so a
/// reference of W words and C characters has C + 2 positions.
inline ErrorCount letter_errors(std::string_view hyp, std::string_view ref) {
  std::string h = " " + std::string(hyp) + " ";
  std::string r = " " + std::string(ref) + " ";
  return {edit_distance(h, r).distance, static_cast<long long>(r.size())};
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) {
    words.push_back(std::move(cur));
  }
  return words;
}

inline ErrorCount word_errors(std::string_view hyp, std::string_view ref) {
  auto h = split_words(hyp);
  auto r = split_words(ref);
  return {edit_distance(h, r).distance, static_cast<long long>(r.size())};
}

namespace detail {

template <class Fn>
ErrorCount corpus_errors(
    std::span<const Transcript> hyps,
    std::span<const Transcript> refs,
    Fn&& per_pair) {
  std::map<std::string, const Transcript*> by_id;
  for (const auto& h : hyps) {
    by_id[h.id] = &h;
  }
  std::vector<std::string> missing;
  std::map<std::string, bool> seen;
  for (const auto& r : refs) {
    seen[r.id] = true;
    if (!by_id.count(r.id)) {
      missing.push_back(r.id);
    }
  }
  std::vector<std::string> extra;
  for (const auto& h : hyps) {
    if (!seen.count(h.id)) {
      extra.push_back(h.id);
    }
  }
  if (!missing.empty() || !extra.empty()) {
    std::ostringstream msg;
    msg << "utterance ids differ; missing in hyp:";
    for (const auto& id : missing) {
      msg << ' ' << id;
    }
    msg << "; extra in hyp:";
    for (const auto& id : extra) {
      msg << ' ' << id;
    }
    throw Error(ErrorCode::kIdMismatch, msg.str());
  }
  ErrorCount total;
  for (const auto& r : refs) {
    total += per_pair(by_id.at(r.id)->text, r.text);
  }
  return total;
}

} // namespace detail

inline ErrorCount ler_counts(
    std::span<const Transcript> hyps,
    std::span<const Transcript> refs) {
  return detail::corpus_errors(hyps, refs, letter_errors);
}

inline ErrorCount wer_counts(
    std::span<const Transcript> hyps,
    std::span<const Transcript> refs) {
  return detail::corpus_errors(hyps, refs, word_errors);
}

inline double ler(
    std::span<const Transcript> hyps,
    std::span<const Transcript> refs) {
  return ler_counts(hyps, refs).rate();
}

inline double wer(
    std::span<const Transcript> hyps,
    std::span<const Transcript> refs) {
  return wer_counts(hyps, refs).rate();
}

struct DecodeResult {
  std::vector<int> best_path;
  LetterSeq transcription;
  LogScore path_score = kNegInf;
};

/// Max-plus decoding over the fully connected graph. Ties resolve to the
/// lower token index. The repetition token is taken to be the last index.
inline DecodeResult viterbi(const EmissionMatrix& em, const TransitionMatrix& tr) {
  detail::check_inputs(em, tr);
  const int T = em.frames();
  const int V = em.tokens();
  Matrix delta(T, V);
  std::vector<int> back(static_cast<std::size_t>(T) * V, -1);
  for (int v = 0; v < V; ++v) {
    delta(0, v) = em(0, v) + tr.start(v);
  }
  for (int t = 1; t < T; ++t) {
    for (int v = 0; v < V; ++v) {
      int best_u = 0;
      double best = delta(t - 1, 0) + tr(v, 0);
      for (int u = 1; u < V; ++u) {
        const double s = delta(t - 1, u) + tr(v, u);
        if (s > best) {
          best = s;
          best_u = u;
        }
      }
      delta(t, v) = em(t, v) + best;
      back[static_cast<std::size_t>(t) * V + v] = best_u;
    }
  }
  DecodeResult r;
  int v = 0;
  for (int u = 1; u < V; ++u) {
    if (delta(T - 1, u) > delta(T - 1, v)) {
      v = u;
    }
  }
  r.path_score = delta(T - 1, v);
  r.best_path.assign(T, 0);
  for (int t = T - 1; t >= 0; --t) {
    r.best_path[t] = v;
    if (t > 0) {
      v = back[static_cast<std::size_t>(t) * V + v];
    }
  }
  r.transcription = decode_lenient(collapse(r.best_path), V - 1);
  return r;
}

} // namespace nasg
