// Copyright 2026 the ltfe authors
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

#include "ltfe/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace ltfe {

std::int64_t Tensor::checked_size(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    if (d > std::numeric_limits<std::int64_t>::max() / (n > 0 ? n : 1))
      throw ShapeError("tensor size overflow");
    n *= d;
  }
  return n;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

namespace {

constexpr char kMagic[4] = {'L', 'T', 'F', '1'};
constexpr int kMaxRank = 8;

void put_u32_le(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put_f64_le(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(b, 8);
}

[[noreturn]] void fail_at(std::uint64_t offset, const std::string& what) {
  throw FormatError("LTF1 parse error at byte " + std::to_string(offset) + ": " + what);
}

}  // namespace

void write_ltf1(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  os.put(static_cast<char>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) {
    if (t.dim(i) > std::numeric_limits<std::uint32_t>::max())
      throw FormatError("LTF1 dimension exceeds u32 range");
    put_u32_le(os, static_cast<std::uint32_t>(t.dim(i)));
  }
  for (std::int64_t i = 0; i < t.size(); ++i) put_f64_le(os, t[i]);
  if (!os) throw FormatError("LTF1 write failed");
}

void write_ltf1_file(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  write_ltf1(os, t);
}

Tensor read_ltf1(std::istream& is) {
  std::uint64_t off = 0;
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4) fail_at(off + static_cast<std::uint64_t>(is.gcount()), "truncated magic");
  if (std::memcmp(magic, kMagic, 4) != 0) fail_at(0, "bad magic (expected \"LTF1\")");
  off = 4;

  int rank = is.get();
  if (rank == EOF) fail_at(off, "truncated rank byte");
  if (rank < 1 || rank > kMaxRank)
    fail_at(off, "rank " + std::to_string(rank) + " outside [1," + std::to_string(kMaxRank) + "]");
  off = 5;

  std::vector<std::int64_t> shape;
  std::int64_t n = 1;
  for (int i = 0; i < rank; ++i) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) fail_at(off + static_cast<std::uint64_t>(is.gcount()), "truncated dim");
    std::uint32_t d = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                      (static_cast<std::uint32_t>(b[2]) << 16) |
                      (static_cast<std::uint32_t>(b[3]) << 24);
    if (d == 0) fail_at(off, "zero dimension");
    shape.push_back(static_cast<std::int64_t>(d));
    if (n > (std::int64_t(1) << 40) / static_cast<std::int64_t>(d))
      fail_at(off, "tensor size overflow");
    n *= static_cast<std::int64_t>(d);
    off += 4;
  }

  std::vector<double> data(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8)
      fail_at(off + static_cast<std::uint64_t>(is.gcount()), "truncated payload");
    std::uint64_t u = 0;
    for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    double v;
    std::memcpy(&v, &u, 8);
    data[static_cast<std::size_t>(i)] = v;
    off += 8;
  }
  return Tensor(std::move(shape), std::move(data));
}

Tensor read_ltf1_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path);
  return read_ltf1(is);
}

}  // namespace ltfe
