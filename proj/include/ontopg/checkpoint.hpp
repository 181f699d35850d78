// Copyright 2026 The OntoPG Authors.
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

#pragma once

// Versioned checkpoint container:
//   magic "ONTOPGCK", u32 version,
//   string config (key = value text), u64 vocab count + strings,
//   u64 parameter count, then per parameter: string name, u64 rows,
//   u64 cols, rows*cols little-endian IEEE-754 doubles.
// Strings are u64 length + bytes. Integers are little-endian.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ontopg/autodiff.hpp"
#include "ontopg/config.hpp"
#include "ontopg/corpus.hpp"
#include "ontopg/errors.hpp"

namespace ontopg {

inline constexpr char kCheckpointMagic[8] = {'O', 'N', 'T', 'O', 'P', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
void put_le(std::ostream& out, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U)))
    throw FormatError(path + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U v;
  std::memcpy(&v, bytes, sizeof(U));
  return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const std::string& path) {
  auto n = get_le<std::uint64_t>(in, path);
  if (n > (1ULL << 32)) throw FormatError(path + ": implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n)))
    throw FormatError(path + ": truncated checkpoint");
  return s;
}

}  // namespace detail

struct Checkpoint {
  KeyValues config;
  Vocabulary vocab;
  ad::ParameterSet<double> params;
};

template <typename T>
void save_checkpoint(const std::string& path, const KeyValues& config, const Vocabulary& vocab,
                     const ad::ParameterSet<T>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_string(out, config.str());
  auto tokens = vocab.corpus_tokens();
  detail::put_le<std::uint64_t>(out, tokens.size());
  for (const auto& t : tokens) detail::put_string(out, t);
  detail::put_le<std::uint64_t>(out, params.size());
  for (const auto& [name, p] : params) {
    detail::put_string(out, name);
    detail::put_le<std::uint64_t>(out, p.shape.rows);
    detail::put_le<std::uint64_t>(out, p.shape.cols);
    for (T v : p.value) detail::put_le<double>(out, static_cast<double>(v));
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError(path + ": not a checkpoint file");
  auto version = detail::get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config = KeyValues::from_string(detail::get_string(in, path));
  auto n_tokens = detail::get_le<std::uint64_t>(in, path);
  std::vector<std::string> tokens;
  tokens.reserve(n_tokens);
  for (std::uint64_t i = 0; i < n_tokens; ++i) tokens.push_back(detail::get_string(in, path));
  ck.vocab = Vocabulary::from_tokens(tokens);
  auto n_params = detail::get_le<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    std::string name = detail::get_string(in, path);
    auto rows = detail::get_le<std::uint64_t>(in, path);
    auto cols = detail::get_le<std::uint64_t>(in, path);
    if (rows * cols > (1ULL << 31)) throw FormatError(path + ": implausible shape for " + name);
    auto& p = ck.params.add(name, {rows, cols});
    for (double& v : p.value) v = detail::get_le<double>(in, path);
  }
  return ck;
}

}  // namespace ontopg
