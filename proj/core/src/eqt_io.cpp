// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqreg/eqt_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace eqreg {
namespace {

constexpr std::array<char, 4> kMagic = {'E', 'Q', 'T', '1'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw IoError(std::string("EQT1: truncated ") + what);
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

template <typename T>
void put_scalar(std::ostream& out, T value) {
  if constexpr (sizeof(T) == 4) {
    put_le(out, std::bit_cast<std::uint32_t>(value));
  } else {
    put_le(out, std::bit_cast<std::uint64_t>(value));
  }
}

std::vector<std::uint32_t> to_dims(const Shape4& s) {
  auto narrow = [](std::size_t v) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw IoError("EQT1: dimension exceeds u32");
    return static_cast<std::uint32_t>(v);
  };
  return {narrow(s.batch), narrow(s.channels), narrow(s.height), narrow(s.width)};
}

}  // namespace

template <typename T>
void write_eqt(std::ostream& out, std::span<const std::uint32_t> dims, std::span<const T> values) {
  if (dims.size() > 255) throw IoError("EQT1: more than 255 dimensions");
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  if (count != values.size()) throw IoError("EQT1: value count does not match dims");
  out.write(kMagic.data(), kMagic.size());
  put_le(out, static_cast<std::uint8_t>(dtype_of<T>()));
  put_le(out, static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_le(out, d);
  for (T v : values) put_scalar(out, v);
  if (!out) throw IoError("EQT1: write failed");
}

template <typename T>
void write_tensor(std::ostream& out, const Tensor4<T>& t) {
  const auto dims = to_dims(t.shape());
  write_eqt<T>(out, dims, t.data());
}

EqtArray read_eqt(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in) throw IoError("EQT1: truncated magic");
  if (magic != kMagic) throw IoError("EQT1: bad magic");
  EqtArray arr;
  const auto tag = get_le<std::uint8_t>(in, "dtype");
  if (tag > 1) throw IoError("EQT1: unknown dtype tag " + std::to_string(tag));
  arr.dtype = static_cast<DType>(tag);
  const auto ndim = get_le<std::uint8_t>(in, "ndim");
  std::size_t count = 1;
  for (std::uint8_t i = 0; i < ndim; ++i) {
    arr.dims.push_back(get_le<std::uint32_t>(in, "dims"));
    count *= arr.dims.back();
  }
  if (count > (std::size_t{1} << 32)) throw IoError("EQT1: implausible element count");
  arr.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (arr.dtype == DType::F32) {
      arr.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(in, "payload"));
    } else {
      arr.values[i] = std::bit_cast<double>(get_le<std::uint64_t>(in, "payload"));
    }
  }
  return arr;
}

template <typename T>
Tensor4<T> read_tensor(std::istream& in) {
  EqtArray arr = read_eqt(in);
  if (arr.dims.size() != 4) {
    throw IoError("EQT1: expected a rank-4 tensor, got rank " + std::to_string(arr.dims.size()));
  }
  std::vector<T> data(arr.values.begin(), arr.values.end());
  return Tensor4<T>(Shape4{arr.dims[0], arr.dims[1], arr.dims[2], arr.dims[3]}, std::move(data));
}

template <typename T>
std::vector<T> read_vector(std::istream& in) {
  EqtArray arr = read_eqt(in);
  if (arr.dims.size() != 1) {
    throw IoError("EQT1: expected a rank-1 array, got rank " + std::to_string(arr.dims.size()));
  }
  return std::vector<T>(arr.values.begin(), arr.values.end());
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor4<T>& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

template <typename T>
Tensor4<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor<T>(in);
}

#define EQREG_INSTANTIATE_EQT(T)                                                               \
  template void write_eqt<T>(std::ostream&, std::span<const std::uint32_t>, std::span<const T>); \
  template void write_tensor(std::ostream&, const Tensor4<T>&);                                \
  template Tensor4<T> read_tensor<T>(std::istream&);                                           \
  template std::vector<T> read_vector<T>(std::istream&);                                       \
  template void save_tensor(const std::filesystem::path&, const Tensor4<T>&);                  \
  template Tensor4<T> load_tensor<T>(const std::filesystem::path&);

EQREG_INSTANTIATE_EQT(float)
EQREG_INSTANTIATE_EQT(double)

}  // namespace eqreg
