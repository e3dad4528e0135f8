#include "petlab/io/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "petlab/errors.hpp"

namespace petlab::io {
namespace {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

constexpr std::size_t kMaxHeader = 4096;

std::string shape_text(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

std::vector<std::size_t> parse_shape(const std::string& text, const std::string& where) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') throw DataError(where + ": malformed shape " + text);
  std::vector<std::size_t> shape;
  std::stringstream ss(text.substr(1, text.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw DataError(where + ": malformed shape " + text);
    }
    shape.push_back(std::stoull(item));
  }
  return shape;
}

template <typename T>
TensorBlob make_blob(DType dtype, const std::vector<std::size_t>& shape, const std::vector<T>& values) {
  TensorBlob b{dtype, shape, {}};
  if (b.numel() != values.size()) throw ShapeError("tensor values do not match shape " + shape_text(shape));
  b.payload.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(b.payload.data(), values.data(), b.payload.size());
  return b;
}

} // namespace

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i64: return "i64";
    case DType::u8: return "u8";
  }
  return "?";
}

DType parse_dtype(const std::string& tag) {
  if (tag == "f32") return DType::f32;
  if (tag == "f64") return DType::f64;
  if (tag == "i64") return DType::i64;
  if (tag == "u8") return DType::u8;
  throw DataError("unknown tensor dtype '" + tag + "'");
}

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i64: return 8;
    case DType::u8: return 1;
  }
  return 0;
}

std::size_t TensorBlob::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void write_tensor_file(const std::filesystem::path& path, const TensorBlob& blob) {
  if (blob.payload.size() != blob.numel() * dtype_size(blob.dtype)) {
    throw ShapeError("tensor payload does not match its shape");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kTensorMagic << " v1 dtype=" << to_string(blob.dtype) << " shape=" << shape_text(blob.shape)
      << " order=row-major\n";
  out.write(reinterpret_cast<const char*>(blob.payload.data()), static_cast<std::streamsize>(blob.payload.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

TensorBlob read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file " + path.string());
  std::string header;
  char c;
  while (in.get(c) && c != '\n') {
    header += c;
    if (header.size() > kMaxHeader) throw DataError(path.string() + ": tensor header too long");
  }
  std::istringstream hs(header);
  std::string magic, version, dtype_kv, shape_kv, order_kv;
  hs >> magic >> version >> dtype_kv >> shape_kv >> order_kv;
  const std::string where = path.string();
  if (magic != kTensorMagic || version != "v1") throw DataError(where + ": not a tensor file");
  if (dtype_kv.rfind("dtype=", 0) != 0 || shape_kv.rfind("shape=", 0) != 0 || order_kv != "order=row-major") {
    throw DataError(where + ": malformed tensor header");
  }
  TensorBlob b;
  b.dtype = parse_dtype(dtype_kv.substr(6));
  b.shape = parse_shape(shape_kv.substr(6), where);
  const std::size_t bytes = b.numel() * dtype_size(b.dtype);
  b.payload.resize(bytes);
  in.read(reinterpret_cast<char*>(b.payload.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw DataError(where + ": truncated tensor payload");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(where + ": trailing bytes after payload");
  return b;
}

TensorBlob to_blob(const std::vector<std::size_t>& shape, const std::vector<float>& values) {
  return make_blob(DType::f32, shape, values);
}
TensorBlob to_blob(const std::vector<std::size_t>& shape, const std::vector<double>& values) {
  return make_blob(DType::f64, shape, values);
}
TensorBlob to_blob(const std::vector<std::size_t>& shape, const std::vector<std::int64_t>& values) {
  return make_blob(DType::i64, shape, values);
}
TensorBlob to_blob(const std::vector<std::size_t>& shape, const std::vector<std::uint8_t>& values) {
  return make_blob(DType::u8, shape, values);
}

template <typename T>
std::vector<T> blob_values(const TensorBlob& blob) {
  DType want;
  if constexpr (std::is_same_v<T, float>) want = DType::f32;
  else if constexpr (std::is_same_v<T, double>) want = DType::f64;
  else if constexpr (std::is_same_v<T, std::int64_t>) want = DType::i64;
  else want = DType::u8;
  if (blob.dtype != want) {
    throw DataError("tensor dtype is " + to_string(blob.dtype) + ", expected " + to_string(want));
  }
  std::vector<T> out(blob.numel());
  if (!out.empty()) std::memcpy(out.data(), blob.payload.data(), blob.payload.size());
  return out;
}

template std::vector<float> blob_values<float>(const TensorBlob&);
template std::vector<double> blob_values<double>(const TensorBlob&);
template std::vector<std::int64_t> blob_values<std::int64_t>(const TensorBlob&);
template std::vector<std::uint8_t> blob_values<std::uint8_t>(const TensorBlob&);

void write_volume(const std::filesystem::path& path, const Volume& volume) {
  write_tensor_file(path, to_blob({volume.depth, volume.height, volume.width}, volume.voxels));
}

Volume read_volume(const std::filesystem::path& path) {
  const auto b = read_tensor_file(path);
  if (b.shape.size() != 3) throw DataError(path.string() + ": expected a 3-D volume");
  Volume v(b.shape[0], b.shape[1], b.shape[2]);
  v.voxels = blob_values<float>(b);
  return v;
}

void write_tensor(const std::filesystem::path& path, const tensor::Tensor& t) {
  write_tensor_file(path, to_blob(t.shape(), std::vector<float>(t.data().begin(), t.data().end())));
}

tensor::Tensor read_tensor(const std::filesystem::path& path) {
  const auto b = read_tensor_file(path);
  return tensor::Tensor::from_data(b.shape, blob_values<float>(b));
}

} // namespace petlab::io
