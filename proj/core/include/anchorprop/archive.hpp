#pragma once

// Minimal ZIP container support: stored (uncompressed) entries on write,
// stored or deflated entries on read, with ZIP64 extensions for large payloads.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace anchorprop {

class ZipWriter {
 public:
  explicit ZipWriter(const std::filesystem::path& path);
  ZipWriter(const ZipWriter&) = delete;
  ZipWriter& operator=(const ZipWriter&) = delete;
  ~ZipWriter();

  /// Appends one entry whose payload is the concatenation of `parts`.
  void add(const std::string& name, std::span<const std::span<const char>> parts);
  void add(const std::string& name, std::span<const char> data);

  /// Writes the central directory. Further calls to add() are invalid.
  void finish();

 private:
  struct Record {
    std::string name;
    std::uint32_t crc = 0;
    std::uint64_t size = 0;
    std::uint64_t offset = 0;
  };

  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<Record> records_;
  std::uint64_t position_ = 0;
  bool finished_ = false;

  void write(const void* data, std::size_t n);
};

class ZipReader {
 public:
  explicit ZipReader(const std::filesystem::path& path);

  struct Entry {
    std::string name;
    std::uint16_t method = 0;
    std::uint32_t crc = 0;
    std::uint64_t compressed_size = 0;
    std::uint64_t size = 0;
    std::uint64_t local_offset = 0;
  };

  const std::vector<Entry>& entries() const { return entries_; }
  const Entry* find(const std::string& name) const;
  /// Reads and CRC-checks one entry. Throws IoError if missing or corrupt.
  std::vector<char> read(const std::string& name);

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::vector<Entry> entries_;
};

}  // namespace anchorprop
