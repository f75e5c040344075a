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

// Word-level corpus ingestion and contiguous minibatching (PTB conventions:
// one sentence per line, whitespace tokens, <eos> appended per line).

#ifndef CFNLAB_CORPUS_H_
#define CFNLAB_CORPUS_H_

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cfnlab/lm_stack.h"

namespace cfnlab {

// Id 0 is always <unk> and id 1 is always <eos>; the remaining ids follow
// training-split frequency (descending), ties broken lexicographically.
class Vocab {
 public:
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kEos = "<eos>";
  static constexpr TokenId kUnkId = 0;
  static constexpr TokenId kEosId = 1;

  Vocab();
  // At most max_vocab ids: <unk>, <eos> and the max_vocab - 2 most frequent
  // other tokens.
  static Vocab from_text(std::string_view train_text, size_t max_vocab, bool lowercase);
  // `id<TAB>token` lines with dense ids; 0/1 must be <unk>/<eos>.
  static Vocab load(std::istream& is);
  void save(std::ostream& os) const;

  size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // unk for unknown tokens
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

enum class Split { kTrain, kValid, kTest };
Split parse_split(const std::string& name);

enum class VocabSource { kFromTrain, kProvided };

struct CorpusPaths {
  std::string train;
  std::string valid;
  std::string test;
};

struct CorpusOptions {
  VocabSource vocab_source = VocabSource::kFromTrain;
  size_t max_vocab = 10000;
  bool lowercase = false;
  std::string vocab_path;  // for VocabSource::kProvided
};

struct Corpus {
  Vocab vocab;
  std::vector<TokenId> train, valid, test;

  const std::vector<TokenId>& split(Split s) const;
};

// Throws Error with the byte offset of the first invalid UTF-8 sequence.
void validate_utf8(std::string_view text, const std::string& source);
std::vector<TokenId> encode(const Vocab& vocab, std::string_view text, bool lowercase);

Corpus build_corpus(const CorpusPaths& paths, const CorpusOptions& opts);
// Same as build_corpus, from in-memory text (empty valid/test allowed).
Corpus build_corpus_from_text(std::string_view train, std::string_view valid,
                              std::string_view test, const CorpusOptions& opts);

std::string read_file(const std::string& path);

// A split reshaped into `batch` contiguous streams of equal length. Window w
// of lane b pairs tokens stream_b[wT .. wT+T) with targets stream_b[wT+1 ..
// wT+T+1). The final partial window is dropped. Views the split; the split
// must outlive the iterator.
class BatchIter {
 public:
  BatchIter(std::span<const TokenId> split, size_t batch, size_t unroll);

  size_t batch() const { return batch_; }
  size_t unroll() const { return unroll_; }
  size_t stream_length() const { return stream_len_; }
  size_t num_windows() const { return num_windows_; }

  std::span<const TokenId> stream(size_t lane) const;
  std::span<const TokenId> inputs(size_t window, size_t lane) const;
  std::span<const TokenId> targets(size_t window, size_t lane) const;

 private:
  void check_window(size_t window, size_t lane) const;

  std::span<const TokenId> split_;
  size_t batch_;
  size_t unroll_;
  size_t stream_len_;
  size_t num_windows_;
};

BatchIter batches(const Corpus& c, Split split, size_t batch, size_t unroll);

}  // namespace cfnlab

#endif  // CFNLAB_CORPUS_H_
