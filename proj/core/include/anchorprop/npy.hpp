#pragma once

// NPY array serialization (format versions 1.0 through 3.0 on read, 1.0 on write).
// Only little-endian float32 payloads are supported.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "anchorprop/types.hpp"

namespace anchorprop {

struct NpyHeader {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
  std::size_t data_offset = 0;
};

/// Builds the v1.0 preamble (magic, version, header dict, padding) for a 2-D float32 array.
std::string npy_header_2d(std::size_t rows, std::size_t cols);

/// Parses the preamble. Throws ValidationError on malformed input.
NpyHeader parse_npy_header(std::span<const char> bytes);

/// Decodes a 2-D float32 array into row-major storage. `key` names the array in error text.
MatrixF decode_npy_matrix(std::span<const char> bytes, const std::string& key);

}  // namespace anchorprop
