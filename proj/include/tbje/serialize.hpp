/* Copyright 2026 The TBJE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "tbje/tensor.hpp"

namespace tbje {

// Tensor file layout (all integers little-endian):
//   "TBJT"            4 bytes magic
//   rank              u8
//   extents           rank x u32
//   payload           numel x f64 (IEEE-754 binary64, little-endian), row-major
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

namespace io {

void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
/// u32 byte length followed by the raw bytes.
void write_string(std::ostream& out, const std::string& s);

std::uint8_t read_u8(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);

void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what);

/// Writes atomically enough for our purposes: to `path`.tmp then rename.
void write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

/// FNV-1a 64-bit.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace io
}  // namespace tbje
