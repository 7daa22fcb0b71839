// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "eqreg/data.hpp"

namespace eqreg {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments, then reads a decimal integer.
  std::size_t number(const char* what) {
    skip_space();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_]) != 0) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw IoError(std::string("netpbm: ") + what + " too large");
    }
    if (digits == 0) throw IoError(std::string("netpbm: malformed header, expected ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void end_of_header() {
    if (pos_ >= bytes_.size() || std::isspace(bytes_[pos_]) == 0) {
      throw IoError("netpbm: malformed header terminator");
    }
    ++pos_;
  }

  [[nodiscard]] std::size_t position() const { return pos_; }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_]) != 0) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Tensor4<float> decode_netpbm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw IoError("netpbm: unsupported magic (expected P5 or P6)");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader header(bytes);
  const std::size_t width = header.number("width");
  const std::size_t height = header.number("height");
  const std::size_t maxval = header.number("maxval");
  if (maxval != 255) throw IoError("netpbm: only maxval 255 is supported, got " + std::to_string(maxval));
  header.end_of_header();
  const std::size_t need = width * height * channels;
  if (bytes.size() - header.position() < need) {
    throw IoError("netpbm: truncated payload, need " + std::to_string(need) + " bytes");
  }
  Tensor4<float> out(1, channels, height, width);
  const unsigned char* raster = bytes.data() + header.position();
  for (std::size_t p = 0; p < width * height; ++p)
    for (std::size_t c = 0; c < channels; ++c)
      out[c * width * height + p] = static_cast<float>(raster[p * channels + c]) / 255.0f;
  return out;
}

std::vector<unsigned char> encode_netpbm(const Tensor4<float>& x) {
  if (x.batch() != 1 || (x.channels() != 1 && x.channels() != 3)) {
    throw ShapeError("save_image: expected a 1x1xHxW or 1x3xHxW tensor, got " + to_string(x.shape()));
  }
  const std::string header = std::string(x.channels() == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(x.width()) + " " + std::to_string(x.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  const std::size_t plane = x.shape().plane();
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const double v = std::clamp(static_cast<double>(x[c * plane + p]), 0.0, 1.0);
      out.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  return out;
}

Tensor4<float> load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_netpbm(bytes);
}

void save_image(const Tensor4<float>& x, const std::filesystem::path& path) {
  const auto bytes = encode_netpbm(x);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace eqreg
