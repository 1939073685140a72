#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace points::tensorio {

/// Dense tensor held in 64-bit floats; stored on disk as little-endian f32.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  std::int64_t element_count() const {
    std::int64_t n = 1;
    for (std::int64_t d : shape) n *= d;
    return n;
  }
};

using TensorMap = std::map<std::string, Tensor>;

enum class ErrorKind {
  kTruncated,       // file shorter than the header or data it declares
  kBadHeader,       // header is not valid JSON of the expected shape
  kUnknownDtype,    // dtype other than "f32"
  kShapeMismatch,   // nbytes != 4 * product(shape)
  kOverlap,         // tensor data regions overlap
  kLengthMismatch,  // data region longer than the declared regions need
};

const char* to_string(ErrorKind kind);

class ContainerError : public std::runtime_error {
 public:
  ContainerError(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// File layout: 8-byte little-endian header length, UTF-8 JSON header
/// mapping name -> {dtype, shape, offset, nbytes}, then the f32 data
/// region. Tensors are laid out in lexicographic name order, so identical
/// tensor maps always serialize to identical bytes.
std::vector<std::uint8_t> serialize_container(const TensorMap& tensors);
TensorMap parse_container(const std::vector<std::uint8_t>& bytes);

void write_container(const TensorMap& tensors,
                     const std::filesystem::path& path);
TensorMap read_container(const std::filesystem::path& path);

}  // namespace points::tensorio
