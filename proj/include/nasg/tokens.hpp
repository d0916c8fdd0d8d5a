/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <array>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nasg/error.hpp"

namespace nasg {

/*
 * Token indexing convention used throughout the library: base letters occupy
 * indices 0..V'-1 in alphabet order and the repetition token is index V'.
 * Noise models share the letter indices and put the void symbol at V'.
 */
class Alphabet {
 public:
  Alphabet(std::vector<char> letters, char rep_symbol = '1')
      : letters_(std::move(letters)), rep_symbol_(rep_symbol) {
    index_.fill(-1);
    if (letters_.empty()) {
      throw Error(ErrorCode::kInvalidModel, "alphabet has no letters");
    }
    for (int i = 0; i < static_cast<int>(letters_.size()); ++i) {
      auto c = static_cast<unsigned char>(letters_[i]);
      if (index_[c] != -1) {
        throw Error(
            ErrorCode::kInvalidModel,
            std::string("duplicate letter '") + letters_[i] + "'");
      }
      index_[c] = i;
    }
    if (index_[static_cast<unsigned char>(rep_symbol_)] != -1) {
      throw Error(
          ErrorCode::kInvalidModel, "repetition symbol is also a base letter");
    }
  }

  /// Space, apostrophe and a-z, in the column order of the published
  /// confusion table. V = 29.
  static Alphabet standard() {
    std::vector<char> letters{' ', '\''};
    for (char c = 'a'; c <= 'z'; ++c) {
      letters.push_back(c);
    }
    return Alphabet(std::move(letters));
  }

  static Alphabet from_letters(std::string_view letters, char rep = '1') {
    return Alphabet(std::vector<char>(letters.begin(), letters.end()), rep);
  }

  int size() const {
    return static_cast<int>(letters_.size()) + 1;
  }
  int num_letters() const {
    return static_cast<int>(letters_.size());
  }
  int rep_token() const {
    return num_letters();
  }
  bool is_rep(int token) const {
    return token == rep_token();
  }
  const std::vector<char>& letters() const {
    return letters_;
  }
  char rep_symbol() const {
    return rep_symbol_;
  }

  int index_of(char c) const {
    int idx = index_[static_cast<unsigned char>(c)];
    if (idx < 0) {
      throw Error(
          ErrorCode::kUnknownSymbol,
          std::string("symbol '") + c + "' is not in the alphabet");
    }
    return idx;
  }

  bool contains(char c) const {
    return index_[static_cast<unsigned char>(c)] >= 0;
  }

  char symbol(int token) const {
    if (token == rep_token()) {
      return rep_symbol_;
    }
    return letters_.at(token);
  }

  bool operator==(const Alphabet& other) const {
    return letters_ == other.letters_ && rep_symbol_ == other.rep_symbol_;
  }

 private:
  std::vector<char> letters_;
  char rep_symbol_;
  std::array<int, 256> index_{};
};

/// Letter-level view of a transcription: base-letter indices, no rep token.
struct LetterSeq {
  std::vector<int> ids;

  std::size_t size() const {
    return ids.size();
  }
  bool empty() const {
    return ids.empty();
  }
  int operator[](std::size_t i) const {
    return ids[i];
  }
  bool operator==(const LetterSeq&) const = default;
  auto operator<=>(const LetterSeq&) const = default;
};

/// Token-level transcription as consumed by the criteria.
struct TokenSeq {
  std::vector<int> ids;

  std::size_t size() const {
    return ids.size();
  }
  bool empty() const {
    return ids.empty();
  }
  int operator[](std::size_t i) const {
    return ids[i];
  }
  bool operator==(const TokenSeq&) const = default;
  auto operator<=>(const TokenSeq&) const = default;
};

inline LetterSeq to_letters(std::string_view text, const Alphabet& alphabet) {
  LetterSeq out;
  out.ids.reserve(text.size());
  for (char c : text) {
    out.ids.push_back(alphabet.index_of(c));
  }
  return out;
}

inline std::string to_string(const LetterSeq& seq, const Alphabet& alphabet) {
  std::string out;
  out.reserve(seq.size());
  for (int id : seq.ids) {
    out.push_back(alphabet.letters().at(id));
  }
  return out;
}

inline std::string to_string(const TokenSeq& seq, const Alphabet& alphabet) {
  std::string out;
  out.reserve(seq.size());
  for (int id : seq.ids) {
    out.push_back(alphabet.symbol(id));
  }
  return out;
}

/// Checks the structural invariants of a token sequence: the repetition token
/// never leads, and adjacent tokens are distinct (collapse cannot produce
/// equal neighbours, so such a sequence has no alignment).
inline void validate(const TokenSeq& seq, int rep_token) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] < 0 || seq[i] > rep_token) {
      throw Error(ErrorCode::kMalformedSequence, "token index out of range");
    }
    if (i == 0 && seq[i] == rep_token) {
      throw Error(
          ErrorCode::kMalformedSequence, "repetition token at sequence start");
    }
    if (i > 0 && seq[i] == seq[i - 1]) {
      throw Error(
          ErrorCode::kMalformedSequence,
          seq[i] == rep_token ? "doubled repetition token"
                              : "identical adjacent tokens");
    }
  }
}

/// Doubled letters become [x, rep]. Three identical letters in a row cannot
/// be represented and are rejected.
inline TokenSeq encode(const LetterSeq& text, int rep_token) {
  TokenSeq out;
  out.ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    int c = text[i];
    if (c < 0 || c >= rep_token) {
      throw Error(ErrorCode::kUnknownSymbol, "letter index out of range");
    }
    if (i >= 2 && text[i - 1] == c && text[i - 2] == c) {
      throw Error(
          ErrorCode::kTripleRepeat,
          "three identical consecutive letters at position " +
              std::to_string(i - 2));
    }
    if (i >= 1 && text[i - 1] == c) {
      out.ids.push_back(rep_token);
    } else {
      out.ids.push_back(c);
    }
  }
  return out;
}

inline TokenSeq encode(const LetterSeq& text, const Alphabet& alphabet) {
  return encode(text, alphabet.rep_token());
}

inline LetterSeq decode(const TokenSeq& seq, int rep_token) {
  validate(seq, rep_token);
  LetterSeq out;
  out.ids.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    out.ids.push_back(seq[i] == rep_token ? out.ids.back() : seq[i]);
  }
  return out;
}

inline LetterSeq decode(const TokenSeq& seq, const Alphabet& alphabet) {
  return decode(seq, alphabet.rep_token());
}

/// Like decode, but drops a repetition token that has no letter to repeat.
/// Used on unconstrained decoder output.
inline LetterSeq decode_lenient(const TokenSeq& seq, int rep_token) {
  LetterSeq out;
  out.ids.reserve(seq.size());
  for (int id : seq.ids) {
    if (id == rep_token) {
      if (!out.ids.empty()) {
        out.ids.push_back(out.ids.back());
      }
    } else {
      out.ids.push_back(id);
    }
  }
  return out;
}

/// Merges runs of identical frame labels.
inline TokenSeq collapse(std::span<const int> path) {
  TokenSeq out;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (t == 0 || path[t] != path[t - 1]) {
      out.ids.push_back(path[t]);
    }
  }
  return out;
}

// Transcript files: one utterance per line, "<id>\t<text>".

struct Transcript {
  std::string id;
  std::string text;

  bool operator==(const Transcript&) const = default;
};

inline std::vector<Transcript> parse_transcripts(std::istream& in) {
  std::vector<Transcript> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw Error(
          ErrorCode::kParse,
          "transcript line " + std::to_string(lineno) +
              " is not '<id>\\t<text>'");
    }
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

inline std::vector<Transcript> read_transcripts(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open transcript file " + path);
  }
  return parse_transcripts(in);
}

inline void write_transcripts(
    std::ostream& out,
    std::span<const Transcript> transcripts) {
  for (const auto& tr : transcripts) {
    out << tr.id << '\t' << tr.text << '\n';
  }
}

inline void write_transcripts(
    const std::string& path,
    std::span<const Transcript> transcripts) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write transcript file " + path);
  }
  write_transcripts(out, transcripts);
}

} // namespace nasg
