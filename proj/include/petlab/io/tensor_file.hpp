#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "petlab/image.hpp"
#include "petlab/tensor/tensor.hpp"

namespace petlab::io {

enum class DType { f32, f64, i64, u8 };

std::string to_string(DType dtype);
DType parse_dtype(const std::string& tag);
std::size_t dtype_size(DType dtype);

/// Header line "PETLAB-TENSOR v1 dtype=<tag> shape=[d0,d1,...] order=row-major"
/// followed by a newline and the raw little-endian payload.
struct TensorBlob {
  DType dtype = DType::f32;
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> payload;

  std::size_t numel() const;
};

inline constexpr const char* kTensorMagic = "PETLAB-TENSOR";

void write_tensor_file(const std::filesystem::path& path, const TensorBlob& blob);
TensorBlob read_tensor_file(const std::filesystem::path& path);

TensorBlob to_blob(const std::vector<std::size_t>& shape, const std::vector<float>& values);
TensorBlob to_blob(const std::vector<std::size_t>& shape, const std::vector<double>& values);
TensorBlob to_blob(const std::vector<std::size_t>& shape, const std::vector<std::int64_t>& values);
TensorBlob to_blob(const std::vector<std::size_t>& shape, const std::vector<std::uint8_t>& values);

template <typename T>
std::vector<T> blob_values(const TensorBlob& blob);

void write_volume(const std::filesystem::path& path, const Volume& volume);
Volume read_volume(const std::filesystem::path& path);

void write_tensor(const std::filesystem::path& path, const tensor::Tensor& t);
/// Reads an f32 tensor file; throws DataError on a dtype mismatch.
tensor::Tensor read_tensor(const std::filesystem::path& path);

} // namespace petlab::io
