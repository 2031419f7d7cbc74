#include "anchorprop/npy.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <regex>

#include "anchorprop/error.hpp"

namespace anchorprop {
namespace {

static_assert(std::endian::native == std::endian::little, "NPY payloads are written little-endian");

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

}  // namespace

std::string npy_header_2d(std::size_t rows, std::size_t cols) {
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(rows) +
                     ", " + std::to_string(cols) + "), }";
  // Total preamble length is padded to a multiple of 64 and ends with '\n'.
  const std::size_t unpadded = kMagicLen + 2 + 2 + dict.size() + 1;
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  dict.append(padded - unpadded, ' ');
  dict.push_back('\n');

  std::string out(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  const auto len = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(len & 0xFF));
  out.push_back(static_cast<char>(len >> 8));
  out += dict;
  return out;
}

NpyHeader parse_npy_header(std::span<const char> bytes) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw ValidationError("not an NPY array (bad magic)");
  }
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t prefix = 0;
  auto byte = [&](std::size_t i) { return static_cast<std::size_t>(static_cast<unsigned char>(bytes[i])); };
  if (major == 1) {
    header_len = byte(8) | (byte(9) << 8);
    prefix = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw ValidationError("truncated NPY header");
    header_len = byte(8) | (byte(9) << 8) | (byte(10) << 16) | (byte(11) << 24);
    prefix = 12;
  } else {
    throw ValidationError("unsupported NPY version " + std::to_string(major));
  }
  if (prefix + header_len > bytes.size()) throw ValidationError("truncated NPY header");
  const std::string dict(bytes.data() + prefix, header_len);

  NpyHeader header;
  header.data_offset = prefix + header_len;

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex fortran_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch m;
  if (!std::regex_search(dict, m, descr_re)) throw ValidationError("NPY header lacks descr");
  header.descr = m[1];
  if (!std::regex_search(dict, m, fortran_re)) throw ValidationError("NPY header lacks fortran_order");
  header.fortran_order = m[1] == "True";
  if (!std::regex_search(dict, m, shape_re)) throw ValidationError("NPY header lacks shape");
  const std::string dims = m[1];
  static const std::regex dim_re(R"(\d+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), dim_re); it != std::sregex_iterator(); ++it) {
    header.shape.push_back(static_cast<std::size_t>(std::stoull(it->str())));
  }
  return header;
}

MatrixF decode_npy_matrix(std::span<const char> bytes, const std::string& key) {
  NpyHeader header;
  try {
    header = parse_npy_header(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(key + ": " + e.what());
  }
  if (header.descr != "<f4" && header.descr != "|f4" && header.descr != "=f4") {
    throw ValidationError(key + ": unsupported dtype '" + header.descr + "' (expected <f4)");
  }
  if (header.shape.size() != 2) {
    throw ValidationError(key + ": expected a 2-D array, got " + std::to_string(header.shape.size()) +
                          " dimensions");
  }
  const std::size_t rows = header.shape[0];
  const std::size_t cols = header.shape[1];
  const std::size_t payload = rows * cols * sizeof(float);
  if (header.data_offset + payload != bytes.size()) {
    throw ValidationError(key + ": payload size does not match shape");
  }
  MatrixF out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const char* src = bytes.data() + header.data_offset;
  if (!header.fortran_order) {
    std::memcpy(out.data(), src, payload);
  } else {
    // Column-major payload: element (r, c) lives at c * rows + r.
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t r = 0; r < rows; ++r) {
        float v;
        std::memcpy(&v, src + (c * rows + r) * sizeof(float), sizeof(float));
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      }
    }
  }
  return out;
}

}  // namespace anchorprop
