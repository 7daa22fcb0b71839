// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// EQT1 binary tensor format:
//   "EQT1" | u8 dtype (0 = f32, 1 = f64) | u8 ndim | ndim x u32 LE dims | LE scalars

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "eqreg/tensor.hpp"

namespace eqreg {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

/// A decoded EQT1 record. Values are widened to double; f32 widening is exact.
struct EqtArray {
  DType dtype = DType::F64;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

template <typename T>
void write_eqt(std::ostream& out, std::span<const std::uint32_t> dims, std::span<const T> values);

template <typename T>
void write_tensor(std::ostream& out, const Tensor4<T>& t);

/// Reads one record; throws IoError on bad magic, unknown dtype or truncation.
EqtArray read_eqt(std::istream& in);

/// Requires ndim == 4.
template <typename T>
Tensor4<T> read_tensor(std::istream& in);

/// Requires ndim == 1.
template <typename T>
std::vector<T> read_vector(std::istream& in);

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor4<T>& t);

template <typename T>
Tensor4<T> load_tensor(const std::filesystem::path& path);

}  // namespace eqreg
