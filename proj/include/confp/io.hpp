// confp/io.hpp

// Copyright 2026  confp authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "confp/common.hpp"

namespace confp {

// Little-endian binary writer/reader over std streams. All container formats
// in this project are little-endian regardless of host order.

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void U8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void U32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(b, 4);
  }
  void U64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(b, 8);
  }
  void F32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    U32(u);
  }
  void F64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    U64(u);
  }
  void Magic(const char magic[4]) { os_.write(magic, 4); }
  void Str(const std::string& s) {
    U32(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void F32Array(const float* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) F32(data[i]);
  }
  void F64Array(const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) F64(data[i]);
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string name) : is_(is), name_(std::move(name)) {}

  std::uint8_t U8() {
    int c = is_.get();
    if (c == EOF) Fail("unexpected end of file");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t U32() {
    char b[4];
    Read(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[i]);
    return v;
  }
  std::uint64_t U64() {
    char b[8];
    Read(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[i]);
    return v;
  }
  float F32() {
    std::uint32_t u = U32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  double F64() {
    std::uint64_t u = U64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  void ExpectMagic(const char magic[4], const std::string& what) {
    char b[4];
    Read(b, 4);
    if (std::memcmp(b, magic, 4) != 0)
      throw FormatError(name_ + ": bad magic, not a " + what + " file");
  }
  std::string Str(std::size_t max_len = 1 << 20) {
    const std::uint32_t n = U32();
    if (n > max_len) Fail("string length out of range");
    std::string s(n, '\0');
    Read(s.data(), n);
    return s;
  }
  void F32Array(float* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) data[i] = F32();
  }
  void F64Array(double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) data[i] = F64();
  }

 private:
  void Read(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) Fail("unexpected end of file");
  }
  [[noreturn]] void Fail(const std::string& msg) { throw FormatError(name_ + ": " + msg); }

  std::istream& is_;
  std::string name_;
};

inline std::ofstream OpenOutput(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream OpenInput(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  return is;
}

}  // namespace confp
