#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fapm::npy {

enum class DType { float32, uint8 };

/// A decoded NPY array. Values are always widened to float; `dtype` records
/// the on-disk element type.
struct Array {
    std::vector<std::size_t> shape;
    std::vector<float> data;
    DType dtype = DType::float32;

    std::size_t element_count() const noexcept;
};

/// Reads NPY v1.0/v2.0 files with descr "<f4" or "|u1", C order only.
/// Malformed headers raise ErrorKind::format; any other dtype or Fortran
/// order raises ErrorKind::unsupported_encoding.
Array read(const std::filesystem::path& path);

/// Writes an NPY v1.0 file with descr "<f4" and fortran_order False.
void write(const std::filesystem::path& path, std::span<const std::size_t> shape,
           std::span<const float> data);

/// Header bytes (magic, version, length, padded dict) for a float32 array.
std::vector<std::uint8_t> encode_header(std::span<const std::size_t> shape);

}  // namespace fapm::npy
