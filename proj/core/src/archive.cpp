#include "anchorprop/archive.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <limits>

#include <zlib.h>

#include "anchorprop/error.hpp"

namespace anchorprop {
namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint32_t kEnd64Sig = 0x06064b50;
constexpr std::uint32_t kLocator64Sig = 0x07064b50;
constexpr std::uint32_t kMax32 = 0xFFFFFFFFu;
constexpr std::uint16_t kMax16 = 0xFFFFu;
constexpr std::uint16_t kUtf8Flag = 0x0800;
// 1980-01-01 00:00, fixed so archives are byte-reproducible.
constexpr std::uint16_t kDosDate = 0x0021;

class ByteSink {
 public:
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

std::uint16_t get16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]) |
                                    (static_cast<unsigned char>(p[1]) << 8));
}
std::uint32_t get32(const char* p) {
  return static_cast<std::uint32_t>(get16(p)) | (static_cast<std::uint32_t>(get16(p + 2)) << 16);
}
std::uint64_t get64(const char* p) {
  return static_cast<std::uint64_t>(get32(p)) | (static_cast<std::uint64_t>(get32(p + 4)) << 32);
}

std::uint32_t crc_update(std::uint32_t crc, std::span<const char> data) {
  // zlib's crc32 takes a uInt length; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const std::size_t n = std::min(left, kChunk);
    crc = static_cast<std::uint32_t>(
        crc32(crc, reinterpret_cast<const Bytef*>(p), static_cast<uInt>(n)));
    p += n;
    left -= n;
  }
  return crc;
}

std::vector<char> inflate_raw(const std::vector<char>& src, std::uint64_t expected,
                              const std::string& name) {
  std::vector<char> out(expected);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw IoError("zip: inflateInit failed for " + name);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(src.data()));
  zs.avail_in = static_cast<uInt>(src.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) {
    throw IoError("zip: corrupt deflate stream in entry " + name);
  }
  return out;
}

}  // namespace

ZipWriter::ZipWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw IoError("cannot open for writing: " + path.string());
}

ZipWriter::~ZipWriter() {
  if (!finished_) {
    try {
      finish();
    } catch (...) {
    }
  }
}

void ZipWriter::write(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw IoError("write failed: " + path_.string());
  position_ += n;
}

void ZipWriter::add(const std::string& name, std::span<const char> data) {
  const std::array<std::span<const char>, 1> parts{data};
  add(name, parts);
}

void ZipWriter::add(const std::string& name, std::span<const std::span<const char>> parts) {
  if (finished_) throw InvariantError("zip: add() after finish()");
  Record rec;
  rec.name = name;
  rec.offset = position_;
  rec.crc = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
  for (const auto& part : parts) {
    rec.crc = crc_update(rec.crc, part);
    rec.size += part.size();
  }
  const bool big = rec.size >= kMax32;

  ByteSink h;
  h.u32(kLocalSig);
  h.u16(big ? 45 : 20);
  h.u16(kUtf8Flag);
  h.u16(0);  // stored
  h.u16(0);
  h.u16(kDosDate);
  h.u32(rec.crc);
  h.u32(big ? kMax32 : static_cast<std::uint32_t>(rec.size));
  h.u32(big ? kMax32 : static_cast<std::uint32_t>(rec.size));
  h.u16(static_cast<std::uint16_t>(name.size()));
  h.u16(big ? 20 : 0);
  h.str(name);
  if (big) {
    h.u16(0x0001);
    h.u16(16);
    h.u64(rec.size);
    h.u64(rec.size);
  }
  write(h.bytes().data(), h.bytes().size());
  for (const auto& part : parts) write(part.data(), part.size());
  records_.push_back(std::move(rec));
}

void ZipWriter::finish() {
  if (finished_) return;
  finished_ = true;
  const std::uint64_t cd_offset = position_;
  for (const Record& rec : records_) {
    const bool big_size = rec.size >= kMax32;
    const bool big_offset = rec.offset >= kMax32;
    ByteSink extra;
    if (big_size || big_offset) {
      extra.u16(0x0001);
      extra.u16(static_cast<std::uint16_t>((big_size ? 16 : 0) + (big_offset ? 8 : 0)));
      if (big_size) {
        extra.u64(rec.size);
        extra.u64(rec.size);
      }
      if (big_offset) extra.u64(rec.offset);
    }
    const bool zip64 = big_size || big_offset;
    ByteSink c;
    c.u32(kCentralSig);
    c.u16(zip64 ? 45 : 20);
    c.u16(zip64 ? 45 : 20);
    c.u16(kUtf8Flag);
    c.u16(0);
    c.u16(0);
    c.u16(kDosDate);
    c.u32(rec.crc);
    c.u32(big_size ? kMax32 : static_cast<std::uint32_t>(rec.size));
    c.u32(big_size ? kMax32 : static_cast<std::uint32_t>(rec.size));
    c.u16(static_cast<std::uint16_t>(rec.name.size()));
    c.u16(static_cast<std::uint16_t>(extra.bytes().size()));
    c.u16(0);
    c.u16(0);
    c.u16(0);
    c.u32(0);
    c.u32(big_offset ? kMax32 : static_cast<std::uint32_t>(rec.offset));
    c.str(rec.name);
    write(c.bytes().data(), c.bytes().size());
    write(extra.bytes().data(), extra.bytes().size());
  }
  const std::uint64_t cd_size = position_ - cd_offset;
  const std::uint64_t count = records_.size();
  const bool zip64 = count >= kMax16 || cd_offset >= kMax32 || cd_size >= kMax32;
  if (zip64) {
    const std::uint64_t end64_offset = position_;
    ByteSink e64;
    e64.u32(kEnd64Sig);
    e64.u64(44);
    e64.u16(45);
    e64.u16(45);
    e64.u32(0);
    e64.u32(0);
    e64.u64(count);
    e64.u64(count);
    e64.u64(cd_size);
    e64.u64(cd_offset);
    e64.u32(kLocator64Sig);
    e64.u32(0);
    e64.u64(end64_offset);
    e64.u32(1);
    write(e64.bytes().data(), e64.bytes().size());
  }
  ByteSink e;
  e.u32(kEndSig);
  e.u16(0);
  e.u16(0);
  e.u16(zip64 ? kMax16 : static_cast<std::uint16_t>(count));
  e.u16(zip64 ? kMax16 : static_cast<std::uint16_t>(count));
  e.u32(zip64 ? kMax32 : static_cast<std::uint32_t>(cd_size));
  e.u32(zip64 ? kMax32 : static_cast<std::uint32_t>(cd_offset));
  e.u16(0);
  write(e.bytes().data(), e.bytes().size());
  out_.flush();
  if (!out_) throw IoError("write failed: " + path_.string());
  out_.close();
}

ZipReader::ZipReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open: " + path.string());
  in_.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in_.tellg());
  const std::uint64_t tail_len = std::min<std::uint64_t>(file_size, 22 + 65535 + 20);
  std::vector<char> tail(tail_len);
  in_.seekg(static_cast<std::streamoff>(file_size - tail_len));
  in_.read(tail.data(), static_cast<std::streamsize>(tail_len));
  if (!in_) throw IoError("zip: cannot read trailer of " + path.string());

  std::int64_t eocd = -1;
  for (std::int64_t i = static_cast<std::int64_t>(tail_len) - 22; i >= 0; --i) {
    if (get32(tail.data() + i) == kEndSig) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw IoError("zip: end of central directory not found in " + path.string());
  const char* e = tail.data() + eocd;
  std::uint64_t count = get16(e + 10);
  std::uint64_t cd_size = get32(e + 12);
  std::uint64_t cd_offset = get32(e + 16);
  if (count == kMax16 || cd_size == kMax32 || cd_offset == kMax32) {
    if (eocd < 20 || get32(e - 20) != kLocator64Sig) {
      throw IoError("zip: missing zip64 locator in " + path.string());
    }
    const std::uint64_t end64_offset = get64(e - 20 + 8);
    std::array<char, 56> rec{};
    in_.seekg(static_cast<std::streamoff>(end64_offset));
    in_.read(rec.data(), rec.size());
    if (!in_ || get32(rec.data()) != kEnd64Sig) {
      throw IoError("zip: bad zip64 end record in " + path.string());
    }
    count = get64(rec.data() + 32);
    cd_size = get64(rec.data() + 40);
    cd_offset = get64(rec.data() + 48);
  }
  if (cd_offset + cd_size > file_size) throw IoError("zip: truncated archive " + path.string());

  std::vector<char> cd(cd_size);
  in_.seekg(static_cast<std::streamoff>(cd_offset));
  in_.read(cd.data(), static_cast<std::streamsize>(cd_size));
  if (!in_) throw IoError("zip: cannot read central directory of " + path.string());

  std::size_t pos = 0;
  for (std::uint64_t k = 0; k < count; ++k) {
    if (pos + 46 > cd.size() || get32(cd.data() + pos) != kCentralSig) {
      throw IoError("zip: corrupt central directory in " + path.string());
    }
    const char* c = cd.data() + pos;
    Entry entry;
    entry.method = get16(c + 10);
    entry.crc = get32(c + 16);
    entry.compressed_size = get32(c + 20);
    entry.size = get32(c + 24);
    const std::uint16_t name_len = get16(c + 28);
    const std::uint16_t extra_len = get16(c + 30);
    const std::uint16_t comment_len = get16(c + 32);
    entry.local_offset = get32(c + 42);
    if (pos + 46 + name_len + extra_len + comment_len > cd.size()) {
      throw IoError("zip: corrupt central directory in " + path.string());
    }
    entry.name.assign(c + 46, name_len);
    const char* x = c + 46 + name_len;
    const char* x_end = x + extra_len;
    while (x + 4 <= x_end) {
      const std::uint16_t id = get16(x);
      const std::uint16_t len = get16(x + 2);
      const char* field = x + 4;
      if (id == 0x0001) {
        const char* f = field;
        if (entry.size == kMax32 && f + 8 <= field + len) {
          entry.size = get64(f);
          f += 8;
        }
        if (entry.compressed_size == kMax32 && f + 8 <= field + len) {
          entry.compressed_size = get64(f);
          f += 8;
        }
        if (entry.local_offset == kMax32 && f + 8 <= field + len) entry.local_offset = get64(f);
      }
      x = field + len;
    }
    entries_.push_back(std::move(entry));
    pos += 46 + name_len + extra_len + comment_len;
  }
}

const ZipReader::Entry* ZipReader::find(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<char> ZipReader::read(const std::string& name) {
  const Entry* entry = find(name);
  if (entry == nullptr) throw IoError("zip: no entry " + name + " in " + path_.string());
  std::array<char, 30> local{};
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(entry->local_offset));
  in_.read(local.data(), local.size());
  if (!in_ || get32(local.data()) != kLocalSig) {
    throw IoError("zip: bad local header for " + name);
  }
  const std::uint64_t skip = get16(local.data() + 26) + static_cast<std::uint64_t>(get16(local.data() + 28));
  in_.seekg(static_cast<std::streamoff>(entry->local_offset + 30 + skip));
  std::vector<char> raw(entry->compressed_size);
  in_.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!in_) throw IoError("zip: truncated entry " + name);

  std::vector<char> data;
  if (entry->method == 0) {
    data = std::move(raw);
  } else if (entry->method == 8) {
    data = inflate_raw(raw, entry->size, name);
  } else {
    throw IoError("zip: unsupported compression method " + std::to_string(entry->method) +
                  " for " + name);
  }
  const std::uint32_t crc = crc_update(static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0)), data);
  if (crc != entry->crc) throw IoError("zip: CRC mismatch for " + name);
  return data;
}

}  // namespace anchorprop
