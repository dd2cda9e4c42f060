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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "emil/grid.hpp"
#include "emil/tensor.hpp"

namespace emil {

/// Malformed or truncated binary input. `offset()` is the byte position at
/// which decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// EMT1 tensor record:
//   "EMT1" | u8 dtype | u32 rank | u32 dims[rank] | little-endian payload
// dtype 0 = f32, 1 = f64, 2 = u8.
enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

std::size_t dtype_size(DType d);

struct EmtTensor {
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint8_t>> data;

  DType dtype() const { return static_cast<DType>(data.index()); }
};

/// Encoded size in bytes of one record.
std::size_t emt_record_size(DType dtype, const Shape& shape);

void write_emt(std::ostream& os, const Shape& shape, std::span<const float> values);
void write_emt(std::ostream& os, const Shape& shape, std::span<const double> values);
void write_emt(std::ostream& os, const Shape& shape, std::span<const std::uint8_t> values);

template <typename T>
void write_emt(std::ostream& os, const Tensor<T>& t) {
  write_emt(os, t.shape(), t.values());
}

/// Reads one record. `base_offset` is added to offsets reported in errors.
EmtTensor read_emt(std::istream& is, std::uint64_t base_offset = 0);

/// Converts a decoded record into a tensor of the requested precision.
template <typename T>
Tensor<T> to_tensor(const EmtTensor& rec, bool requires_grad = false);

// Little-endian scalar helpers shared by the container formats.
void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is, std::uint64_t offset);

// ---------------------------------------------------------------------------
// PGM (P5, maxval 255)
// ---------------------------------------------------------------------------

/// Writes a [0,1] grid as 8-bit greyscale; pixel = round(255 * clamp(v, 0, 1)).
void write_pgm(const std::filesystem::path& path, const Grid<double>& values);
Grid<std::uint8_t> read_pgm(const std::filesystem::path& path);
/// Reads a 0/255 binary PGM as a {0,1} mask; any other grey level is an error.
Mask read_mask_pgm(const std::filesystem::path& path);
/// Plain-text sidecar: "rows cols" header then one row of values per line.
void write_grid_text(const std::filesystem::path& path, const Grid<double>& values);

}  // namespace emil
