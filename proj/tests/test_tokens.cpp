/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <sstream>

#include <gtest/gtest.h>

#include "nasg/tokens.hpp"
#include "nasg/verify.hpp"

namespace nasg {
namespace {

const Alphabet kStd = Alphabet::standard();

TokenSeq tok(std::string_view letters_and_reps) {
  // '1' is the repetition symbol of the standard alphabet.
  TokenSeq s;
  for (char c : letters_and_reps) {
    s.ids.push_back(c == kStd.rep_symbol() ? kStd.rep_token() : kStd.index_of(c));
  }
  return s;
}

TEST(Alphabet, StandardLayout) {
  EXPECT_EQ(kStd.size(), 29);
  EXPECT_EQ(kStd.num_letters(), 28);
  EXPECT_EQ(kStd.index_of(' '), 0);
  EXPECT_EQ(kStd.index_of('\''), 1);
  EXPECT_EQ(kStd.index_of('a'), 2);
  EXPECT_EQ(kStd.index_of('z'), 27);
  EXPECT_EQ(kStd.rep_token(), 28);
  EXPECT_TRUE(kStd.is_rep(28));
  EXPECT_EQ(kStd.symbol(28), '1');
}

TEST(Alphabet, IndexIsABijection) {
  for (int i = 0; i < kStd.num_letters(); ++i) {
    EXPECT_EQ(kStd.index_of(kStd.symbol(i)), i);
  }
  // The repetition symbol is not a letter, so text cannot contain it.
  EXPECT_FALSE(kStd.contains(kStd.rep_symbol()));
}

TEST(Alphabet, RejectsDuplicatesAndRepCollision) {
  EXPECT_THROW(Alphabet({'a', 'a'}), Error);
  EXPECT_THROW(Alphabet({'a', '1'}, '1'), Error);
  EXPECT_THROW(kStd.index_of('Q'), Error);
}

TEST(Encode, DoubledLetterBecomesRep) {
  EXPECT_EQ(encode(to_letters("hello", kStd), kStd), tok("hel1o"));
  EXPECT_EQ(encode(to_letters("abc", kStd), kStd), tok("abc"));
}

TEST(Encode, TripleIsRejected) {
  try {
    encode(to_letters("aaa", kStd), kStd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTripleRepeat);
  }
}

TEST(Encode, DoubleThenSameLetterAgainIsATriple) {
  EXPECT_THROW(encode(to_letters("baaab", kStd), kStd), Error);
  EXPECT_NO_THROW(encode(to_letters("aabaa", kStd), kStd));
}

TEST(Decode, Examples) {
  EXPECT_EQ(to_string(decode(tok("hel1o"), kStd), kStd), "hello");
  EXPECT_TRUE(decode(TokenSeq{}, kStd).empty());
}

TEST(Decode, MalformedSequences) {
  for (const char* bad : {"1a", "a11", "aa"}) {
    try {
      decode(tok(bad), kStd);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kMalformedSequence) << bad;
    }
  }
}

TEST(Decode, RepAfterRepOfSameLetterSpellsTriple) {
  // [a, REP, a] is a valid token sequence and spells "aaa".
  EXPECT_EQ(to_string(decode(tok("a1a"), kStd), kStd), "aaa");
}

TEST(Collapse, Examples) {
  EXPECT_EQ(collapse(std::vector<int>{2, 2, 3, 3, 3}), (TokenSeq{{2, 3}}));
  EXPECT_EQ(collapse(std::vector<int>{2, 28, 28, 2}), (TokenSeq{{2, 28, 2}}));
  EXPECT_EQ(collapse(std::vector<int>{4}), (TokenSeq{{4}}));
}

TEST(TokenProperties, EncodeDecodeRoundTrip) {
  verify::Rng rng(11);
  const Alphabet ab = Alphabet::from_letters(" abc");
  for (int k = 0; k < 2000; ++k) {
    const LetterSeq s = verify::random_letters(verify::rand_int(rng, 0, 12), 4, rng);
    const TokenSeq y = encode(s, ab);
    EXPECT_NO_THROW(validate(y, ab.rep_token()));
    EXPECT_EQ(decode(y, ab), s);
  }
}

TEST(TokenProperties, CollapseIsIdempotentOnCollapsedSequences) {
  verify::Rng rng(12);
  for (int k = 0; k < 1000; ++k) {
    std::vector<int> path(verify::rand_int(rng, 1, 10));
    for (int& v : path) {
      v = verify::rand_int(rng, 0, 3);
    }
    const TokenSeq once = collapse(path);
    EXPECT_EQ(collapse(once.ids), once);
  }
}

TEST(TokenProperties, StretchedTranscriptionCollapsesBack) {
  // Any alignment of Y (each token repeated >= 1 frame) collapses to Y.
  verify::Rng rng(13);
  for (int k = 0; k < 1000; ++k) {
    const TokenSeq y = verify::random_tokens(verify::rand_int(rng, 1, 6), 5, rng);
    std::vector<int> path;
    for (int v : y.ids) {
      path.insert(path.end(), verify::rand_int(rng, 1, 3), v);
    }
    EXPECT_EQ(collapse(path), y);
  }
}

TEST(Transcripts, ParseAndWrite) {
  std::istringstream in("u1\thello world\nu2\t\nu3\tit's\n");
  const auto ts = parse_transcripts(in);
  ASSERT_EQ(ts.size(), 3u);
  EXPECT_EQ(ts[0].id, "u1");
  EXPECT_EQ(ts[0].text, "hello world");
  EXPECT_EQ(ts[1].text, "");
  EXPECT_EQ(ts[2].text, "it's");
  std::ostringstream out;
  write_transcripts(out, ts);
  EXPECT_EQ(out.str(), "u1\thello world\nu2\t\nu3\tit's\n");
}

TEST(Transcripts, MissingTabIsAParseError) {
  std::istringstream in("u1 hello\n");
  EXPECT_THROW(parse_transcripts(in), Error);
}

} // namespace
} // namespace nasg
