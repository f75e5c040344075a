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

#include "cfnlab/corpus.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace cfnlab {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

// Calls on_token for every whitespace-separated token and on_eol at the end
// of every non-final line and of a non-empty final line.
template <class Tok, class Eol>
void scan(std::string_view text, Tok&& on_token, Eol&& on_eol) {
  size_t k = 0;
  const size_t n = text.size();
  bool line_has_content = false;
  while (k < n) {
    const char ch = text[k];
    if (ch == '\n') {
      on_eol();
      line_has_content = false;
      ++k;
    } else if (is_space(ch)) {
      ++k;
    } else {
      size_t end = k;
      while (end < n && text[end] != '\n' && !is_space(text[end])) ++end;
      on_token(text.substr(k, end - k));
      line_has_content = true;
      k = end;
    }
  }
  if (line_has_content) on_eol();
}

}  // namespace

Vocab::Vocab() {
  add(std::string(kUnk));
  add(std::string(kEos));
}

void Vocab::add(std::string token) {
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocab Vocab::from_text(std::string_view train_text, size_t max_vocab, bool lowercase) {
  if (max_vocab < 2) throw Error("max_vocab must be at least 2");
  std::map<std::string, size_t> counts;
  scan(
      train_text,
      [&](std::string_view tok) {
        std::string t = lowercase ? lower_ascii(tok) : std::string(tok);
        if (t != kUnk && t != kEos) ++counts[t];
      },
      [] {});
  std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  const size_t keep = std::min(ranked.size(), max_vocab - 2);
  for (size_t k = 0; k < keep; ++k) v.add(ranked[k].first);
  return v;
}

Vocab Vocab::load(std::istream& is) {
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error("vocab line " + std::to_string(lineno) + ": expected id<TAB>token");
    }
    const std::string id_str = line.substr(0, tab);
    std::string tok = line.substr(tab + 1);
    if (id_str != std::to_string(v.tokens_.size())) {
      throw Error("vocab line " + std::to_string(lineno) + ": ids must be dense and ordered");
    }
    if (v.index_.count(tok)) throw Error("vocab: duplicate token '" + tok + "'");
    v.add(std::move(tok));
  }
  if (v.tokens_.size() < 2 || v.tokens_[kUnkId] != kUnk || v.tokens_[kEosId] != kEos) {
    throw Error("vocab: ids 0 and 1 must be <unk> and <eos>");
  }
  return v;
}

void Vocab::save(std::ostream& os) const {
  for (size_t k = 0; k < tokens_.size(); ++k) os << k << '\t' << tokens_[k] << '\n';
}

TokenId Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) throw Error("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw Error("unknown split '" + name + "' (expected train, valid or test)");
}

const std::vector<TokenId>& Corpus::split(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train;
    case Split::kValid:
      return valid;
    case Split::kTest:
      return test;
  }
  return train;
}

void validate_utf8(std::string_view text, const std::string& source) {
  const auto* b = reinterpret_cast<const unsigned char*>(text.data());
  const size_t n = text.size();
  size_t k = 0;
  while (k < n) {
    const unsigned char c = b[k];
    size_t len = 0;
    uint32_t cp = 0;
    if (c < 0x80) {
      ++k;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      throw Error(source + ": invalid UTF-8 at byte offset " + std::to_string(k));
    }
    if (k + len > n) throw Error(source + ": truncated UTF-8 at byte offset " + std::to_string(k));
    for (size_t j = 1; j < len; ++j) {
      if ((b[k + j] & 0xC0) != 0x80) {
        throw Error(source + ": invalid UTF-8 at byte offset " + std::to_string(k));
      }
      cp = (cp << 6) | (b[k + j] & 0x3F);
    }
    static constexpr uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw Error(source + ": invalid UTF-8 at byte offset " + std::to_string(k));
    }
    k += len;
  }
}

std::vector<TokenId> encode(const Vocab& vocab, std::string_view text, bool lowercase) {
  std::vector<TokenId> ids;
  scan(
      text,
      [&](std::string_view tok) {
        ids.push_back(lowercase ? vocab.id(lower_ascii(tok)) : vocab.id(tok));
      },
      [&] { ids.push_back(Vocab::kEosId); });
  return ids;
}

Corpus build_corpus_from_text(std::string_view train, std::string_view valid,
                              std::string_view test, const CorpusOptions& opts) {
  validate_utf8(train, "train");
  validate_utf8(valid, "valid");
  validate_utf8(test, "test");
  Corpus c;
  if (opts.vocab_source == VocabSource::kProvided) {
    std::ifstream is(opts.vocab_path);
    if (!is) throw Error("cannot open vocabulary " + opts.vocab_path);
    c.vocab = Vocab::load(is);
  } else {
    c.vocab = Vocab::from_text(train, opts.max_vocab, opts.lowercase);
  }
  c.train = encode(c.vocab, train, opts.lowercase);
  if (c.train.empty()) throw Error("training split is empty");
  c.valid = encode(c.vocab, valid, opts.lowercase);
  c.test = encode(c.vocab, test, opts.lowercase);
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Corpus build_corpus(const CorpusPaths& paths, const CorpusOptions& opts) {
  const std::string train = read_file(paths.train);
  const std::string valid = paths.valid.empty() ? std::string() : read_file(paths.valid);
  const std::string test = paths.test.empty() ? std::string() : read_file(paths.test);
  validate_utf8(train, paths.train);
  validate_utf8(valid, paths.valid);
  validate_utf8(test, paths.test);
  return build_corpus_from_text(train, valid, test, opts);
}

BatchIter::BatchIter(std::span<const TokenId> split, size_t batch, size_t unroll)
    : split_(split), batch_(batch), unroll_(unroll) {
  if (batch == 0 || unroll == 0) throw Error("batches: batch and unroll must be positive");
  if (split.size() < batch * (unroll + 1)) {
    throw Error("batches: split of " + std::to_string(split.size()) +
                " tokens is too small for batch " + std::to_string(batch) + " and unroll " +
                std::to_string(unroll));
  }
  stream_len_ = split.size() / batch;
  num_windows_ = (stream_len_ - 1) / unroll;
}

void BatchIter::check_window(size_t window, size_t lane) const {
  if (window >= num_windows_ || lane >= batch_) {
    throw Error("batch window (" + std::to_string(window) + ", " + std::to_string(lane) +
                ") out of range");
  }
}

std::span<const TokenId> BatchIter::stream(size_t lane) const {
  if (lane >= batch_) throw Error("batch lane " + std::to_string(lane) + " out of range");
  return split_.subspan(lane * stream_len_, stream_len_);
}

std::span<const TokenId> BatchIter::inputs(size_t window, size_t lane) const {
  check_window(window, lane);
  return stream(lane).subspan(window * unroll_, unroll_);
}

std::span<const TokenId> BatchIter::targets(size_t window, size_t lane) const {
  check_window(window, lane);
  return stream(lane).subspan(window * unroll_ + 1, unroll_);
}

BatchIter batches(const Corpus& c, Split split, size_t batch, size_t unroll) {
  return BatchIter(c.split(split), batch, unroll);
}

}  // namespace cfnlab
