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

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "cfnlab/lm_stack.h"

namespace cfnlab {
namespace {

constexpr const char* kMagic = "cfnlab-ckpt";
constexpr const char* kVersion = "v1";

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

template <class T> void shape_of(const T& t, size_t& rows, size_t& cols) {
  if constexpr (std::is_same_v<T, Matrix>) {
    rows = t.rows();
    cols = t.cols();
  } else {
    rows = 1;
    cols = t.size();
  }
}

}  // namespace

void save_checkpoint(const ModelStack& m, std::ostream& os) {
  m.check();
  os << kMagic << ' ' << kVersion << ' ' << to_string(m.kind) << ' ' << m.depth << ' '
     << m.hidden << ' ' << m.vocab_size << '\n';
  m.params.visit([&](const std::string& name, const auto& t) {
    size_t rows = 0, cols = 0;
    shape_of(t, rows, cols);
    os << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
    const double* data = t.data();
    for (size_t r = 0; r < rows; ++r) {
      for (size_t c = 0; c < cols; ++c) {
        if (c) os << ' ';
        os << format_double(data[r * cols + c]);
      }
      os << '\n';
    }
  });
  if (!os) throw Error("checkpoint: write failed");
}

ModelStack load_checkpoint(std::istream& is) {
  std::string magic, version, kind;
  size_t depth = 0, hidden = 0, vocab = 0;
  if (!(is >> magic >> version >> kind >> depth >> hidden >> vocab) || magic != kMagic) {
    throw Error("checkpoint: missing or malformed header");
  }
  if (version != kVersion) throw Error("checkpoint: unsupported version " + version);
  Rng unused(0);
  ModelStack m = init_stack(parse_cell_kind(kind), depth, hidden, vocab, unused, 0.0);

  m.params.visit([&](const std::string& name, auto& t) {
    std::string tag, got_name;
    size_t rows = 0, cols = 0, want_rows = 0, want_cols = 0;
    if (!(is >> tag >> got_name >> rows >> cols) || tag != "tensor") {
      throw Error("checkpoint: expected tensor block for " + name);
    }
    shape_of(t, want_rows, want_cols);
    if (got_name != name || rows != want_rows || cols != want_cols) {
      throw Error("checkpoint: got tensor " + got_name + " " + std::to_string(rows) + "x" +
                  std::to_string(cols) + ", expected " + name + " " +
                  std::to_string(want_rows) + "x" + std::to_string(want_cols));
    }
    double* data = t.data();
    std::string word;
    for (size_t k = 0; k < rows * cols; ++k) {
      if (!(is >> word)) throw Error("checkpoint: truncated tensor " + name);
      char* end = nullptr;
      data[k] = std::strtod(word.c_str(), &end);
      if (end == word.c_str() || *end != '\0') {
        throw Error("checkpoint: bad number '" + word + "' in tensor " + name);
      }
    }
  });
  std::string trailing;
  if (is >> trailing) throw Error("checkpoint: unexpected trailing data '" + trailing + "'");
  m.check();
  return m;
}

void save_checkpoint_file(const ModelStack& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  save_checkpoint(m, os);
}

ModelStack load_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path);
  return load_checkpoint(is);
}

}  // namespace cfnlab
