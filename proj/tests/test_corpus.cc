// Copyright 2026 The cfnlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "cfnlab/corpus.h"

using namespace cfnlab;

TEST_CASE("vocabulary ranks by frequency then lexicographically") {
  const Vocab v = Vocab::from_text("b a c a b a\nd c\n", 10, false);
  REQUIRE(v.size() == 6);
  CHECK(v.token(0) == "<unk>");
  CHECK(v.token(1) == "<eos>");
  CHECK(v.token(2) == "a");
  CHECK(v.token(3) == "b");
  CHECK(v.token(4) == "c");
  CHECK(v.token(5) == "d");
  CHECK(v.id("zzz") == Vocab::kUnkId);
  CHECK_FALSE(v.contains("zzz"));
}

TEST_CASE("vocabulary cap counts the special tokens") {
  const Vocab v = Vocab::from_text("a a a b b c\n", 3, false);
  CHECK(v.size() == 3);
  CHECK(v.token(2) == "a");
  CHECK(v.id("b") == Vocab::kUnkId);
  CHECK_THROWS_AS(Vocab::from_text("a", 1, false), Error);
}

TEST_CASE("encoding appends eos per line") {
  const Vocab v = Vocab::from_text("the cat\nthe dog\n", 100, false);
  const auto ids = encode(v, "the cat\n\nthe bird", false);
  const std::vector<TokenId> want{v.id("the"), v.id("cat"), Vocab::kEosId, Vocab::kEosId,
                                  v.id("the"), Vocab::kUnkId, Vocab::kEosId};
  CHECK(ids == want);
}

TEST_CASE("lowercasing folds ascii case") {
  const Vocab v = Vocab::from_text("The the THE\n", 100, true);
  CHECK(v.size() == 3);
  CHECK(encode(v, "tHe", true) == std::vector<TokenId>{2, Vocab::kEosId});
}

TEST_CASE("vocabulary files round-trip") {
  const Vocab v = Vocab::from_text("x y z y\n", 100, false);
  std::stringstream ss;
  v.save(ss);
  const Vocab back = Vocab::load(ss);
  REQUIRE(back.size() == v.size());
  for (TokenId i = 0; i < v.size(); ++i) CHECK(back.token(i) == v.token(i));
  std::stringstream bad("0\t<eos>\n1\t<unk>\n");
  CHECK_THROWS_AS(Vocab::load(bad), Error);
}

TEST_CASE("invalid utf-8 is reported with its byte offset") {
  CHECK_NOTHROW(validate_utf8("caf\xc3\xa9", "ok"));
  try {
    validate_utf8("abc\xff", "in.txt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("byte offset 3") != std::string::npos);
    CHECK(std::string(e.what()).find("in.txt") != std::string::npos);
  }
  CHECK_THROWS_AS(validate_utf8("\xc0\xaf", "overlong"), Error);
  CHECK_THROWS_AS(validate_utf8("\xe2\x82", "truncated"), Error);
}

TEST_CASE("empty training split is rejected") {
  CHECK_THROWS_AS(build_corpus_from_text("", "a\n", "a\n", {}), Error);
}

TEST_CASE("batch layout: 10 tokens, batch 2, unroll 2") {
  std::vector<TokenId> split(10);
  std::iota(split.begin(), split.end(), 0u);
  const BatchIter it(split, 2, 2);
  CHECK(it.stream_length() == 5);
  CHECK(it.num_windows() == 2);
  const auto s1 = it.stream(1);
  CHECK(std::vector<TokenId>(s1.begin(), s1.end()) == std::vector<TokenId>{5, 6, 7, 8, 9});
  auto vec = [](std::span<const TokenId> s) { return std::vector<TokenId>(s.begin(), s.end()); };
  CHECK(vec(it.inputs(0, 0)) == std::vector<TokenId>{0, 1});
  CHECK(vec(it.targets(0, 0)) == std::vector<TokenId>{1, 2});
  CHECK(vec(it.inputs(1, 1)) == std::vector<TokenId>{7, 8});
  CHECK(vec(it.targets(1, 1)) == std::vector<TokenId>{8, 9});
  CHECK_THROWS_AS(it.inputs(2, 0), Error);
}

TEST_CASE("batch layout needs enough tokens") {
  const std::vector<TokenId> split(5, 0);
  CHECK_THROWS_AS(BatchIter(split, 2, 2), Error);
  CHECK_THROWS_AS(BatchIter(split, 0, 2), Error);
}

TEST_CASE("corpus files load") {
  const Corpus c = build_corpus({CFNLAB_TEST_DATA "/train.txt", CFNLAB_TEST_DATA "/valid.txt",
                                 CFNLAB_TEST_DATA "/test.txt"},
                                {VocabSource::kFromTrain, 5000, false, ""});
  CHECK(c.vocab.size() == 5000);
  CHECK(c.train.size() > 100000);
  CHECK(c.valid.size() > 10000);
  CHECK(&c.split(Split::kTest) == &c.test);
  CHECK(parse_split("valid") == Split::kValid);
  CHECK_THROWS_AS(parse_split("dev"), Error);
}
