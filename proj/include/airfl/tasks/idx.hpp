// Copyright 2026 The AirFL Authors
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

// Reader for the IDX container used by the MNIST distribution: a 4-byte
// big-endian magic (two zero bytes, a type code, a rank), rank big-endian
// 32-bit extents, then unsigned bytes in row-major order. Only unsigned-byte
// label files (0x00000801) and image files (0x00000803) are accepted.

#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "airfl/errors.hpp"
#include "airfl/tasks/dataset.hpp"

namespace airfl {

struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> extents;
  std::vector<std::uint8_t> bytes;

  std::size_t count() const noexcept { return extents.empty() ? 0 : extents.front(); }
};

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

inline IdxArray parse_idx(const std::vector<std::uint8_t>& buf) {
  auto read_u32 = [&](std::size_t off) -> std::uint32_t {
    if (off + 4 > buf.size()) throw FormatError("truncated IDX header", off);
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
           std::uint32_t{buf[off + 3]};
  };
  IdxArray out;
  out.magic = read_u32(0);
  if (out.magic != kIdxLabelMagic && out.magic != kIdxImageMagic) {
    throw FormatError("unsupported IDX magic number", 0);
  }
  const std::size_t rank = out.magic & 0xFFu;
  std::size_t expected = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    const std::uint32_t e = read_u32(4 + 4 * k);
    out.extents.push_back(e);
    expected *= e;
  }
  const std::size_t data_off = 4 + 4 * rank;
  if (buf.size() < data_off + expected) throw FormatError("truncated IDX payload", buf.size());
  if (buf.size() > data_off + expected) throw FormatError("trailing bytes after IDX payload", data_off + expected);
  out.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(data_off), buf.end());
  return out;
}

inline IdxArray read_idx_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open IDX file '" + path + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(buf);
}

/// Pair an image file and a label file into a Dataset with pixels in [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const IdxArray images = read_idx_file(images_path);
  const IdxArray labels = read_idx_file(labels_path);
  if (images.magic != kIdxImageMagic) throw FormatError("'" + images_path + "' is not an IDX image file", 0);
  if (labels.magic != kIdxLabelMagic) throw FormatError("'" + labels_path + "' is not an IDX label file", 0);
  if (images.count() != labels.count()) {
    throw ConsistencyError("image count " + std::to_string(images.count()) + " does not match label count " +
                           std::to_string(labels.count()));
  }
  const std::size_t pixels = std::size_t{images.extents[1]} * images.extents[2];
  std::vector<double> features(images.bytes.size());
  for (std::size_t i = 0; i < features.size(); ++i) features[i] = images.bytes[i] / 255.0;
  std::vector<int> ys(labels.bytes.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (labels.bytes[i] > 9) throw FormatError("label outside 0-9", 8 + i);
    ys[i] = labels.bytes[i];
  }
  if (pixels == 0) throw FormatError("IDX images have zero pixels", 8);
  return Dataset(pixels, std::move(features), std::move(ys));
}

}  // namespace airfl
