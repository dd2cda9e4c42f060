// Copyright 2026 The emil Authors
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

#include "emil/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace emil {

namespace {

constexpr char kEmtMagic[4] = {'E', 'M', 'T', '1'};

template <typename U>
void put_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(U));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

void read_exact(std::istream& is, void* dst, std::size_t n, std::uint64_t offset,
                const char* what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError(std::string("truncated input while reading ") + what,
                      offset + static_cast<std::uint64_t>(is.gcount()));
  }
}

void write_header(std::ostream& os, DType dtype, const Shape& shape) {
  os.write(kEmtMagic, 4);
  os.put(static_cast<char>(dtype));
  write_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) write_u32(os, static_cast<std::uint32_t>(d));
}

template <typename T>
void write_payload(std::ostream& os, std::span<const T> values) {
  if constexpr (std::is_same_v<T, std::uint8_t>) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size()));
  } else {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (auto v : values) put_le<U>(os, std::bit_cast<U>(v));
  }
}

template <typename T>
std::vector<T> decode_payload(const std::vector<unsigned char>& raw, std::size_t n) {
  std::vector<T> out(n);
  if constexpr (std::is_same_v<T, std::uint8_t>) {
    std::memcpy(out.data(), raw.data(), n);
  } else {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<T>(get_le<U>(&raw[i * sizeof(T)]));
  }
  return out;
}

}  // namespace

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  throw std::invalid_argument("unknown dtype");
}

std::size_t emt_record_size(DType dtype, const Shape& shape) {
  return 4 + 1 + 4 + 4 * shape.size() + dtype_size(dtype) * shape_numel(shape);
}

void write_u32(std::ostream& os, std::uint32_t v) { put_le<std::uint32_t>(os, v); }

std::uint32_t read_u32(std::istream& is, std::uint64_t offset) {
  unsigned char buf[4];
  read_exact(is, buf, 4, offset, "u32");
  return get_le<std::uint32_t>(buf);
}

void write_emt(std::ostream& os, const Shape& shape, std::span<const float> values) {
  write_header(os, DType::f32, shape);
  write_payload(os, values);
}

void write_emt(std::ostream& os, const Shape& shape, std::span<const double> values) {
  write_header(os, DType::f64, shape);
  write_payload(os, values);
}

void write_emt(std::ostream& os, const Shape& shape, std::span<const std::uint8_t> values) {
  write_header(os, DType::u8, shape);
  write_payload(os, values);
}

EmtTensor read_emt(std::istream& is, std::uint64_t base_offset) {
  std::uint64_t pos = base_offset;
  char magic[4];
  read_exact(is, magic, 4, pos, "EMT1 magic");
  if (std::memcmp(magic, kEmtMagic, 4) != 0) throw FormatError("bad EMT1 magic", pos);
  pos += 4;
  unsigned char code = 0;
  read_exact(is, &code, 1, pos, "EMT1 dtype");
  if (code > 2) throw FormatError("unknown EMT1 dtype code " + std::to_string(code), pos);
  pos += 1;
  const auto rank = read_u32(is, pos);
  pos += 4;
  if (rank > 8) throw FormatError("implausible EMT1 rank " + std::to_string(rank), pos - 4);
  EmtTensor rec;
  for (std::uint32_t i = 0; i < rank; ++i) {
    auto d = read_u32(is, pos);
    if (d == 0) throw FormatError("zero EMT1 extent", pos);
    rec.shape.push_back(d);
    pos += 4;
  }
  const auto dtype = static_cast<DType>(code);
  const std::size_t n = shape_numel(rec.shape);
  std::vector<unsigned char> raw(n * dtype_size(dtype));
  read_exact(is, raw.data(), raw.size(), pos, "EMT1 payload");
  switch (dtype) {
    case DType::f32: rec.data = decode_payload<float>(raw, n); break;
    case DType::f64: rec.data = decode_payload<double>(raw, n); break;
    case DType::u8: rec.data = decode_payload<std::uint8_t>(raw, n); break;
  }
  return rec;
}

template <typename T>
Tensor<T> to_tensor(const EmtTensor& rec, bool requires_grad) {
  std::vector<T> values;
  std::visit([&](const auto& v) { values.assign(v.begin(), v.end()); }, rec.data);
  return Tensor<T>(rec.shape, std::move(values), requires_grad);
}

template Tensor<float> to_tensor<float>(const EmtTensor&, bool);
template Tensor<double> to_tensor<double>(const EmtTensor&, bool);

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

void write_pgm(const std::filesystem::path& path, const Grid<double>& values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "P5\n" << values.cols() << " " << values.rows() << "\n255\n";
  std::vector<unsigned char> px(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = std::clamp(values[i], 0.0, 1.0);
    px[i] = static_cast<unsigned char>(std::lround(255.0 * v));
  }
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Grid<std::uint8_t> read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    while (is) {
      int c = is.peek();
      if (c == '#') {
        std::string skip;
        std::getline(is, skip);
      } else if (std::isspace(c)) {
        is.get();
      } else {
        break;
      }
    }
    is >> t;
    return t;
  };
  if (token() != "P5") throw FormatError("not a binary PGM (P5)", 0);
  std::size_t cols = 0, rows = 0, maxval = 0;
  try {
    cols = std::stoul(token());
    rows = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw FormatError("malformed PGM header", static_cast<std::uint64_t>(is.tellg()));
  }
  if (maxval != 255) throw FormatError("PGM maxval must be 255", 0);
  is.get();  // single whitespace before raster
  const auto start = static_cast<std::uint64_t>(is.tellg());
  std::vector<std::uint8_t> px(rows * cols);
  read_exact(is, px.data(), px.size(), start, "PGM raster");
  return Grid<std::uint8_t>(rows, cols, std::move(px));
}

Mask read_mask_pgm(const std::filesystem::path& path) {
  auto g = read_pgm(path);
  Mask m(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] != 0 && g[i] != 255) {
      throw FormatError("mask PGM is not binary (grey level " + std::to_string(g[i]) + ")", i);
    }
    m[i] = g[i] ? 1 : 0;
  }
  return m;
}

void write_grid_text(const std::filesystem::path& path, const Grid<double>& values) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << values.rows() << " " << values.cols() << "\n";
  os << std::setprecision(17);
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) {
      if (c) os << ' ';
      os << values(r, c);
    }
    os << '\n';
  }
}

}  // namespace emil
