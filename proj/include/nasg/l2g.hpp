/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nasg/asg.hpp"
#include "nasg/error.hpp"
#include "nasg/eval.hpp"
#include "nasg/noise.hpp"
#include "nasg/numerics.hpp"
#include "nasg/tokens.hpp"

namespace nasg {

/*
 * Noise-aware criterion. The numerator sums, over clean transcriptions Y*,
 * their frame alignments, and their noise alignments to the provided noisy
 * transcription, the acoustic path score plus alpha times the noise
 * log-probability. It is approximated by a beam search over frames whose
 * state is (cursor into the noisy letters, current token, letter carried by
 * that token, whether the last noise operation was a deletion).
 *
 * The noise score of a clean letter is added when the letter is completed,
 * i.e. when the next frame switches to a different token or after the last
 * frame. A completed letter is explained by one of
 *   DEL      p(void | letter)                        cursor + 0
 *   SUB      p(noisy[c] | letter)                    cursor + 1
 *   INS_SUB  p(noisy[c] | void) p(noisy[c+1] | letter) cursor + 2
 *   INS_DEL  p(noisy[c] | void) p(void | letter)       cursor + 1
 * and a single trailing insertion may follow the final letter. Together these
 * enumerate exactly the alignments counted by log_likelihood().
 */

inline constexpr int kDefaultBeamSize = 300;
inline constexpr double kAlphaSubstitutionOnly = 0.5;
inline constexpr double kAlphaGeneral = 0.1;

struct L2GConfig {
  int beam_size = kDefaultBeamSize;
  double alpha = kAlphaSubstitutionOnly;
  // Per-operation multipliers on alpha (all 1 reproduces a single weight).
  double sub_scale = 1.0;
  double ins_scale = 1.0;
  double del_scale = 1.0;
  // Allow a deletion to directly follow another deletion.
  bool relax_consecutive = false;

  void validate() const {
    if (beam_size < 1) {
      throw Error(ErrorCode::kInvalidFactor, "beam size must be >= 1");
    }
    for (double a : {alpha, sub_scale, ins_scale, del_scale}) {
      if (!(a >= 0.0) || !std::isfinite(a)) {
        throw Error(
            ErrorCode::kInvalidFactor, "noise weights must be finite and >= 0");
      }
    }
  }
};

enum class NoiseMove : std::uint8_t { kStart, kStay, kDel, kSub, kInsSub, kInsDel };

struct Hypothesis {
  int cursor = 0; // noisy letters explained so far
  int token = 0;
  int letter = 0; // base letter of token; rep resolves to the repeated letter
  bool after_deletion = false;
  LogScore score = kNegInf;
};

/// Edge of the retained lattice from hypothesis `from` of the previous frame
/// (-1 for the start state) to hypothesis `to` of this frame.
struct BeamEdge {
  int from = -1;
  int to = 0;
  double increment = 0.0; // emission + transition + weighted noise score
  NoiseMove move = NoiseMove::kStart;
};

struct BeamFrame {
  std::vector<Hypothesis> hyps;
  std::vector<BeamEdge> edges;
};

struct FinalEdge {
  int from = 0;
  double increment = 0.0;
  NoiseMove move = NoiseMove::kSub;
  bool trailing_insertion = false;
};

struct BeamTrace {
  std::vector<BeamFrame> frames;
  std::vector<FinalEdge> finals;
  LogScore score = kNegInf;
  int noisy_length = 0;
};

namespace detail {

// Noise scores already multiplied by alpha; kNegInf marks a zero probability
// (rejected regardless of alpha).
class WeightedNoise {
 public:
  WeightedNoise(const LetterSeq& noisy, const NoiseModel& nm, const L2GConfig& cfg)
      : L1_(static_cast<int>(noisy.size())),
        A_(nm.num_letters()),
        sub_(static_cast<std::size_t>(L1_) * A_),
        ins_(L1_),
        del_(A_) {
    auto weigh = [](double logp, double w) {
      return logp == kNegInf ? kNegInf : w * logp;
    };
    for (int j = 0; j < L1_; ++j) {
      for (int r = 0; r < A_; ++r) {
        sub_[static_cast<std::size_t>(j) * A_ + r] =
            weigh(nm.log_prob(noisy[j], r), cfg.alpha * cfg.sub_scale);
      }
      ins_[j] = weigh(nm.log_insertion(noisy[j]), cfg.alpha * cfg.ins_scale);
    }
    for (int r = 0; r < A_; ++r) {
      del_[r] = weigh(nm.log_deletion(r), cfg.alpha * cfg.del_scale);
    }
    has_insertions_ = nm.has_insertions();
    has_deletions_ = nm.has_deletions();
  }

  double sub(int j, int letter) const {
    return sub_[static_cast<std::size_t>(j) * A_ + letter];
  }
  double ins(int j) const {
    return ins_[j];
  }
  double del(int letter) const {
    return del_[letter];
  }
  bool has_insertions() const {
    return has_insertions_;
  }
  bool has_deletions() const {
    return has_deletions_;
  }

 private:
  int L1_;
  int A_;
  std::vector<double> sub_;
  std::vector<double> ins_;
  std::vector<double> del_;
  bool has_insertions_ = false;
  bool has_deletions_ = false;
};

struct Completion {
  int cursor;
  bool after_deletion;
  double score;
  NoiseMove move;
};

// Ways of explaining the letter carried by `h` against the noisy letters.
inline int complete_letter(
    const Hypothesis& h,
    int L1,
    const WeightedNoise& noise,
    bool relax_consecutive,
    std::array<Completion, 4>& out) {
  int n = 0;
  const int c = h.cursor;
  const double del = noise.del(h.letter);
  if (del != kNegInf && (relax_consecutive || !h.after_deletion)) {
    out[n++] = {c, true, del, NoiseMove::kDel};
  }
  if (c < L1) {
    const double sub = noise.sub(c, h.letter);
    if (sub != kNegInf) {
      out[n++] = {c + 1, false, sub, NoiseMove::kSub};
    }
    const double ins = noise.ins(c);
    if (ins != kNegInf) {
      if (c + 1 < L1) {
        const double sub2 = noise.sub(c + 1, h.letter);
        if (sub2 != kNegInf) {
          out[n++] = {c + 2, false, ins + sub2, NoiseMove::kInsSub};
        }
      }
      if (del != kNegInf) {
        out[n++] = {c + 1, true, ins + del, NoiseMove::kInsDel};
      }
    }
  }
  return n;
}

// Whether a final completion with positive probability exists from a state.
// viable(k, c, letter, d): the pending `letter` still has to be explained, the
// cursor is c, d tells whether the last operation was a deletion, and k more
// frames follow, each of which may start a new letter. Hypotheses failing
// this test can never contribute to the score, so the beam drops them before
// they compete for a slot.
class Viability {
 public:
  Viability(int L1, int A, int T, const WeightedNoise& noise, bool relax)
      : L1_(L1), A_(A), table_(static_cast<std::size_t>(T) * (L1 + 1) * A * 2, 0) {
    // any[c][d]: some letter is viable from (c, d) at the previous level.
    std::vector<char> any(static_cast<std::size_t>(L1 + 1) * 2, 0);
    std::array<Completion, 4> moves{};
    for (int k = 0; k < T; ++k) {
      std::vector<char> next_any(any.size(), 0);
      for (int c = 0; c <= L1; ++c) {
        for (int letter = 0; letter < A; ++letter) {
          for (int d = 0; d < 2; ++d) {
            const Hypothesis h{c, letter, letter, d == 1, 0.0};
            const int n = complete_letter(h, L1, noise, relax, moves);
            bool ok = false;
            for (int m = 0; m < n && !ok; ++m) {
              const auto& mv = moves[m];
              ok = mv.cursor == L1 ||
                  (mv.cursor == L1 - 1 && noise.ins(L1 - 1) != kNegInf) ||
                  (k > 0 && any[mv.cursor * 2 + (mv.after_deletion ? 1 : 0)]);
            }
            table_[index(k, c, letter, d == 1)] = ok;
            if (ok) {
              next_any[c * 2 + d] = 1;
            }
          }
        }
      }
      any.swap(next_any);
    }
  }

  bool operator()(int k, int c, int letter, bool after_del) const {
    return table_[index(k, c, letter, after_del)] != 0;
  }

 private:
  std::size_t index(int k, int c, int letter, bool d) const {
    return ((static_cast<std::size_t>(k) * (L1_ + 1) + c) * A_ + letter) * 2 + (d ? 1 : 0);
  }

  int L1_;
  int A_;
  std::vector<char> table_;
};

inline bool hyp_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) {
    return a.score > b.score;
  }
  if (a.cursor != b.cursor) {
    return a.cursor < b.cursor;
  }
  if (a.token != b.token) {
    return a.token < b.token;
  }
  if (a.letter != b.letter) {
    return a.letter < b.letter;
  }
  return a.after_deletion < b.after_deletion;
}

inline LetterSeq noisy_letters(
    const TokenSeq& noisy,
    const EmissionMatrix& em,
    const TransitionMatrix& tr,
    const NoiseModel& nm,
    const L2GConfig& cfg) {
  check_inputs(em, tr);
  cfg.validate();
  if (em.tokens() != nm.num_letters() + 1) {
    throw Error(
        ErrorCode::kDimensionMismatch,
        "emissions have " + std::to_string(em.tokens()) +
            " tokens but the noise model covers " +
            std::to_string(nm.num_letters()) + " letters plus repetition");
  }
  if (noisy.empty()) {
    throw Error(ErrorCode::kEmptyTranscription, "noisy transcription is empty");
  }
  return decode(noisy, em.tokens() - 1);
}

} // namespace detail

/// Beam-search forward pass. Returns the retained lattice; trace.score is the
/// approximate numerator.
inline BeamTrace l2g_forward(
    const TokenSeq& noisy,
    const EmissionMatrix& em,
    const TransitionMatrix& tr,
    const NoiseModel& nm,
    const L2GConfig& cfg) {
  const LetterSeq y = detail::noisy_letters(noisy, em, tr, nm, cfg);
  const int T = em.frames();
  const int V = em.tokens();
  const int A = V - 1;
  const int rep = V - 1;
  const int L1 = static_cast<int>(y.size());
  const detail::WeightedNoise noise(y, nm, cfg);

  const detail::Viability viable(L1, A, T, noise, cfg.relax_consecutive);
  auto reachable = [&](const Hypothesis& h, int t) {
    return viable(T - 1 - t, h.cursor, h.letter, h.after_deletion);
  };

  // Dense merge index over (cursor, extended token, after_deletion); the
  // extended token distinguishes rep by the letter it repeats.
  const int ext = 2 * A;
  std::vector<int> slot(static_cast<std::size_t>(L1 + 1) * ext * 2, -1);
  std::vector<std::size_t> touched;
  auto key_of = [&](int cursor, int token, int letter, bool after_del) {
    const int e = token == rep ? A + letter : token;
    return (static_cast<std::size_t>(cursor) * ext + e) * 2 + (after_del ? 1 : 0);
  };

  BeamTrace trace;
  trace.noisy_length = L1;
  trace.frames.resize(T);

  std::vector<Hypothesis> cand;
  std::vector<BeamEdge> cand_edges;
  auto add = [&](const Hypothesis& h, int from, double inc, NoiseMove move) {
    const std::size_t k = key_of(h.cursor, h.token, h.letter, h.after_deletion);
    int idx = slot[k];
    if (idx < 0) {
      idx = static_cast<int>(cand.size());
      slot[k] = idx;
      touched.push_back(k);
      cand.push_back(h);
    } else {
      cand[idx].score = logadd(cand[idx].score, h.score);
    }
    cand_edges.push_back({from, idx, inc, move});
  };

  auto finish_frame = [&](int t) {
    for (std::size_t k : touched) {
      slot[k] = -1;
    }
    touched.clear();
    BeamFrame& frame = trace.frames[t];
    const int N = cfg.beam_size;
    if (static_cast<int>(cand.size()) <= N) {
      frame.hyps = std::move(cand);
      frame.edges = std::move(cand_edges);
    } else {
      std::vector<int> order(cand.size());
      for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<int>(i);
      }
      std::nth_element(
          order.begin(), order.begin() + (N - 1), order.end(), [&](int a, int b) {
            return detail::hyp_before(cand[a], cand[b]);
          });
      std::vector<char> keep(cand.size(), 0);
      for (int i = 0; i < N; ++i) {
        keep[order[i]] = 1;
      }
      std::vector<int> remap(cand.size(), -1);
      frame.hyps.clear();
      frame.hyps.reserve(N);
      for (std::size_t i = 0; i < cand.size(); ++i) {
        if (keep[i]) {
          remap[i] = static_cast<int>(frame.hyps.size());
          frame.hyps.push_back(cand[i]);
        }
      }
      frame.edges.clear();
      for (const auto& e : cand_edges) {
        if (remap[e.to] >= 0) {
          frame.edges.push_back({e.from, remap[e.to], e.increment, e.move});
        }
      }
    }
    cand.clear();
    cand_edges.clear();
  };

  for (int v = 0; v < V; ++v) {
    const Hypothesis h{0, v, v, false, em(0, v) + tr.start(v)};
    if (v == rep || !reachable(h, 0)) {
      continue;
    }
    add(h, -1, h.score, NoiseMove::kStart);
  }
  finish_frame(0);

  std::array<detail::Completion, 4> moves{};
  for (int t = 1; t < T; ++t) {
    const auto& prev = trace.frames[t - 1].hyps;
    for (int i = 0; i < static_cast<int>(prev.size()); ++i) {
      const Hypothesis& h = prev[i];
      const int nmoves = detail::complete_letter(h, L1, noise, cfg.relax_consecutive, moves);
      for (int v = 0; v < V; ++v) {
        const double acoustic = em(t, v) + tr(v, h.token);
        if (v == h.token) {
          const Hypothesis next{h.cursor, v, h.letter, h.after_deletion, h.score + acoustic};
          if (reachable(next, t)) {
            add(next, i, acoustic, NoiseMove::kStay);
          }
          continue;
        }
        const int letter = v == rep ? h.token : v;
        for (int m = 0; m < nmoves; ++m) {
          const auto& c = moves[m];
          const double inc = acoustic + c.score;
          const Hypothesis next{c.cursor, v, letter, c.after_deletion, h.score + inc};
          if (reachable(next, t)) {
            add(next, i, inc, c.move);
          }
        }
      }
    }
    finish_frame(t);
  }

  LogAccumulator total;
  const auto& last = trace.frames[T - 1].hyps;
  for (int i = 0; i < static_cast<int>(last.size()); ++i) {
    const int nmoves =
        detail::complete_letter(last[i], L1, noise, cfg.relax_consecutive, moves);
    for (int m = 0; m < nmoves; ++m) {
      const auto& c = moves[m];
      if (c.cursor == L1) {
        trace.finals.push_back({i, c.score, c.move, false});
        total.add(last[i].score + c.score);
      } else if (c.cursor == L1 - 1 && noise.ins(L1 - 1) != kNegInf) {
        const double inc = c.score + noise.ins(L1 - 1);
        trace.finals.push_back({i, inc, c.move, true});
        total.add(last[i].score + inc);
      }
    }
  }
  if (trace.finals.empty()) {
    throw Error(
        ErrorCode::kEmptyBeam,
        "no hypothesis explains the noisy transcription in " +
            std::to_string(T) + " frames");
  }
  trace.score = total.value();
  return trace;
}

/// Backward scores on the retained lattice: beta[t][i] is the logadd of all
/// completions of hypothesis i of frame t.
inline std::vector<std::vector<LogScore>> beam_backward(const BeamTrace& trace) {
  const int T = static_cast<int>(trace.frames.size());
  std::vector<std::vector<LogScore>> beta(T);
  for (int t = 0; t < T; ++t) {
    beta[t].assign(trace.frames[t].hyps.size(), kNegInf);
  }
  for (const auto& f : trace.finals) {
    beta[T - 1][f.from] = logadd(beta[T - 1][f.from], f.increment);
  }
  for (int t = T - 1; t >= 1; --t) {
    for (const auto& e : trace.frames[t].edges) {
      const LogScore b = beta[t][e.to];
      if (b != kNegInf) {
        beta[t - 1][e.from] = logadd(beta[t - 1][e.from], e.increment + b);
      }
    }
  }
  return beta;
}

/// Frame marginals of the retained lattice (the beam posterior).
inline Posteriors beam_posteriors(const BeamTrace& trace, int tokens) {
  const int T = static_cast<int>(trace.frames.size());
  const auto beta = beam_backward(trace);
  const double S = trace.score;
  Posteriors out;
  out.log_total = S;
  out.nodes = Matrix::Zero(T, tokens);
  out.edges = Matrix::Zero(tokens, tokens);
  out.start = Vector::Zero(tokens);
  for (int t = 0; t < T; ++t) {
    const auto& hyps = trace.frames[t].hyps;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      if (beta[t][i] == kNegInf) {
        continue;
      }
      const double p = std::exp(hyps[i].score + beta[t][i] - S);
      out.nodes(t, hyps[i].token) += p;
      if (t == 0) {
        out.start(hyps[i].token) += p;
      }
    }
    if (t == 0) {
      continue;
    }
    const auto& prev = trace.frames[t - 1].hyps;
    for (const auto& e : trace.frames[t].edges) {
      const LogScore b = beta[t][e.to];
      if (b == kNegInf) {
        continue;
      }
      const double p = std::exp(prev[e.from].score + e.increment + b - S);
      out.edges(hyps[e.to].token, prev[e.from].token) += p;
    }
  }
  return out;
}

/// loss = -S_approx + Z with gradients p_full - p_beam. The noise model is
/// fixed and receives no gradient.
inline LossResult l2g_loss(
    const TokenSeq& noisy,
    const EmissionMatrix& em,
    const TransitionMatrix& tr,
    const NoiseModel& nm,
    const L2GConfig& cfg) {
  BeamTrace trace = l2g_forward(noisy, em, tr, nm, cfg);
  Posteriors num = beam_posteriors(trace, em.tokens());
  Posteriors full = full_posteriors(em, tr);
  return loss_from_posteriors(full, num);
}

struct BeamHypothesis {
  TokenSeq transcription;
  std::string text;
  LogScore log_weight = kNegInf; // logadd of the alignment scores
  double weight = 0.0;           // softmax over the reported group
  double ler = 0.0;              // against the reference, as a fraction
};

inline constexpr std::size_t kDefaultMaxPrefixes = 4096;

/// Groups the surviving beam paths by the clean transcription they realize.
/// Each hypothesis node keeps at most max_prefixes partial transcriptions.
/// LER is measured against `reference` when given, else against the noisy
/// transcription.
inline std::vector<BeamHypothesis> inspect_beam(
    const TokenSeq& noisy,
    const EmissionMatrix& em,
    const TransitionMatrix& tr,
    const NoiseModel& nm,
    const L2GConfig& cfg,
    int top_k,
    const Alphabet& alphabet,
    const std::optional<std::string>& reference = std::nullopt,
    std::size_t max_prefixes = kDefaultMaxPrefixes) {
  if (top_k < 1) {
    throw Error(ErrorCode::kInvalidFactor, "top_k must be >= 1");
  }
  BeamTrace trace = l2g_forward(noisy, em, tr, nm, cfg);
  const int T = static_cast<int>(trace.frames.size());
  using PrefixMap = std::map<std::vector<int>, LogScore>;

  auto cap = [max_prefixes](PrefixMap& m) {
    if (m.size() <= max_prefixes) {
      return;
    }
    std::vector<std::pair<LogScore, std::vector<int>>> items;
    items.reserve(m.size());
    for (auto& [k, s] : m) {
      items.emplace_back(s, k);
    }
    std::nth_element(
        items.begin(), items.begin() + (max_prefixes - 1), items.end(),
        [](const auto& a, const auto& b) {
          return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
    items.resize(max_prefixes);
    m.clear();
    for (auto& [s, k] : items) {
      m.emplace(std::move(k), s);
    }
  };

  std::vector<PrefixMap> cur(trace.frames[0].hyps.size());
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const auto& h = trace.frames[0].hyps[i];
    cur[i][{h.token}] = h.score;
  }
  for (int t = 1; t < T; ++t) {
    const auto& frame = trace.frames[t];
    std::vector<PrefixMap> next(frame.hyps.size());
    for (const auto& e : frame.edges) {
      const int token = frame.hyps[e.to].token;
      auto& dst = next[e.to];
      for (const auto& [prefix, s] : cur[e.from]) {
        if (e.move == NoiseMove::kStay) {
          auto& slot = dst.try_emplace(prefix, kNegInf).first->second;
          slot = logadd(slot, s + e.increment);
        } else {
          std::vector<int> longer = prefix;
          longer.push_back(token);
          auto& slot = dst.try_emplace(std::move(longer), kNegInf).first->second;
          slot = logadd(slot, s + e.increment);
        }
      }
    }
    for (auto& m : next) {
      cap(m);
    }
    cur = std::move(next);
  }

  PrefixMap finished;
  for (const auto& f : trace.finals) {
    for (const auto& [prefix, s] : cur[f.from]) {
      auto& slot = finished.try_emplace(prefix, kNegInf).first->second;
      slot = logadd(slot, s + f.increment);
    }
  }

  std::vector<BeamHypothesis> out;
  out.reserve(finished.size());
  for (const auto& [prefix, s] : finished) {
    BeamHypothesis h;
    h.transcription.ids = prefix;
    h.log_weight = s;
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.log_weight != b.log_weight ? a.log_weight > b.log_weight
                                        : a.transcription < b.transcription;
  });
  if (static_cast<int>(out.size()) > top_k) {
    out.resize(top_k);
  }
  std::vector<LogScore> logs;
  for (const auto& h : out) {
    logs.push_back(h.log_weight);
  }
  const LogScore norm = logadd_all(logs);
  const std::string ref_text = reference.value_or(
      to_string(decode(noisy, alphabet.rep_token()), alphabet));
  for (auto& h : out) {
    h.weight = std::exp(h.log_weight - norm);
    h.text = to_string(decode(h.transcription, alphabet.rep_token()), alphabet);
    h.ler = letter_errors(h.text, ref_text).rate();
  }
  return out;
}

} // namespace nasg
