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

#include "tbje/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "tbje/error.hpp"

namespace tbje {

namespace io {
namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  if (!out) throw IoError("write failed");
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw IoError("unexpected end of stream");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { write_le(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f64(std::ostream& out, double v) { write_le(out, v); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw IoError("write failed");
}

std::uint8_t read_u8(std::istream& in) { return read_le<std::uint8_t>(in); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
double read_f64(std::istream& in) { return read_le<double>(in); }

std::string read_string(std::istream& in) {
  const auto n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (in.gcount() != static_cast<std::streamsize>(n)) throw IoError("truncated string");
  return s;
}

void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  char got[4] = {};
  in.read(got, 4);
  if (in.gcount() != 4 || std::memcmp(got, magic, 4) != 0) {
    throw IoError(what + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
  }
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace io

void write_tensor(std::ostream& out, const Tensor& t) {
  if (t.rank() > 255) throw IoError("tensor rank exceeds 255");
  out.write("TBJT", 4);
  io::write_u8(out, static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) {
    if (e > UINT32_MAX) throw IoError("tensor extent exceeds u32");
    io::write_u32(out, static_cast<std::uint32_t>(e));
  }
  if constexpr (std::endian::native == std::endian::little) {
    auto d = t.data();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(double)));
    if (!out) throw IoError("write failed");
  } else {
    for (double v : t.data()) io::write_f64(out, v);
  }
}

Tensor read_tensor(std::istream& in) {
  io::expect_magic(in, "TBJT", "tensor");
  const auto rank = io::read_u8(in);
  Shape shape(rank);
  for (auto& e : shape) {
    e = io::read_u32(in);
    if (e == 0) throw IoError("tensor: zero extent");
  }
  std::vector<double> values(shape_numel(shape));
  if constexpr (std::endian::native == std::endian::little) {
    const auto bytes = static_cast<std::streamsize>(values.size() * sizeof(double));
    in.read(reinterpret_cast<char*>(values.data()), bytes);
    if (in.gcount() != bytes) throw IoError("tensor: truncated payload");
  } else {
    for (auto& v : values) v = io::read_f64(in);
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ostringstream out(std::ios::binary);
  write_tensor(out, t);
  io::write_file(path, out.str());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path), std::ios::binary);
  try {
    return read_tensor(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace tbje
