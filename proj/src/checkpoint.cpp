// Copyright 2026 The pseudolang Authors.
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

#include "pseudolang/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include <openssl/evp.h>

#include "pseudolang/binary_io.hpp"
#include "pseudolang/error.hpp"

namespace pseudolang::checkpoint {

void write_header(std::ostream& os, Kind kind, std::span<const std::uint32_t> arch) {
  binio::write_magic(os, std::string_view(kMagic, 4));
  binio::write_le<std::uint8_t>(os, kVersion);
  binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(kind));
  for (auto a : arch) binio::write_le<std::uint32_t>(os, a);
}

std::vector<std::uint32_t> read_header(std::istream& is, Kind expected,
                                       std::size_t arch_count) {
  binio::expect_magic(is, std::string_view(kMagic, 4), "checkpoint");
  const auto version = binio::read_le<std::uint8_t>(is, "checkpoint version");
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto kind = binio::read_le<std::uint8_t>(is, "checkpoint kind");
  if (kind != static_cast<std::uint8_t>(expected)) {
    throw FormatError("checkpoint: holds model kind " + std::to_string(kind) +
                      ", expected " +
                      std::to_string(static_cast<int>(expected)));
  }
  std::vector<std::uint32_t> arch(arch_count);
  for (auto& a : arch) a = binio::read_le<std::uint32_t>(is, "architecture");
  return arch;
}

void write_params(std::ostream& os, std::span<const double> values) {
  binio::write_le<std::uint64_t>(os, values.size());
  for (double v : values) binio::write_le<float>(os, static_cast<float>(v));
  if (!os) throw Error("checkpoint: write failed");
}

std::vector<double> read_params(std::istream& is, std::size_t expected_count) {
  const auto count = binio::read_le<std::uint64_t>(is, "parameter count");
  if (count != expected_count) {
    throw CorruptionError("checkpoint: " + std::to_string(count) +
                          " parameters, architecture implies " +
                          std::to_string(expected_count));
  }
  std::vector<float> raw(count);
  if (!is.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(count * sizeof(float)))) {
    throw CorruptionError("checkpoint: truncated parameter payload");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CorruptionError("checkpoint: trailing bytes after parameters");
  }
  std::vector<double> out(raw.begin(), raw.end());
  for (double v : out) {
    if (!std::isfinite(v)) throw CorruptionError("checkpoint: non-finite parameter");
  }
  return out;
}

Kind peek_kind(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  binio::expect_magic(is, std::string_view(kMagic, 4), "checkpoint");
  binio::read_le<std::uint8_t>(is, "checkpoint version");
  const auto kind = binio::read_le<std::uint8_t>(is, "checkpoint kind");
  if (kind > 1) throw FormatError("checkpoint: unknown model kind");
  return static_cast<Kind>(kind);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace pseudolang::checkpoint
