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

// Shared pieces of the "PLS2" checkpoint container.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pseudolang::checkpoint {

inline constexpr char kMagic[] = "PLS2";
inline constexpr std::uint8_t kVersion = 1;

enum class Kind : std::uint8_t { kSeq2Seq = 0, kTransducer = 1 };

void write_header(std::ostream& os, Kind kind, std::span<const std::uint32_t> arch);
/// Reads magic, version and kind; then `arch_count` u32 architecture fields.
std::vector<std::uint32_t> read_header(std::istream& is, Kind expected,
                                       std::size_t arch_count);
void write_params(std::ostream& os, std::span<const double> values);
std::vector<double> read_params(std::istream& is, std::size_t expected_count);

Kind peek_kind(const std::filesystem::path& path);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace pseudolang::checkpoint
