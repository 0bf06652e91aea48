#include "crosstvr/tvtk.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "crosstvr/errors.hpp"

namespace crosstvr {

const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::unsupported_version: return "unsupported version";
    case FormatErrc::wrong_kind: return "wrong kind";
    case FormatErrc::truncated: return "truncated";
    case FormatErrc::extent_overflow: return "extent overflow";
    case FormatErrc::checksum_mismatch: return "checksum mismatch";
    case FormatErrc::io: return "i/o error";
  }
  return "format error";
}

namespace tvtk {
namespace {

constexpr std::uint8_t kMagic[4] = {'T', 'V', 'T', 'K'};
// Upper bound on elements in one file (16 GiB of payload).
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32s(std::span<const float> values) {
    for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
  }
  std::size_t size() const { return out_.size(); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::uint64_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(FormatErrc::truncated, std::string(what) + " needs " + std::to_string(n) + " bytes, " +
                                                   std::to_string(in_.size() - pos_) + " left");
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<float> f32s(std::size_t n, const char* what) {
    need(std::uint64_t{n} * 4, what);
    std::vector<float> out(n);
    for (auto& f : out) f = std::bit_cast<float>(u32(what));
    return out;
  }
  std::size_t pos() const { return pos_; }
  std::span<const std::uint8_t> window(std::size_t from, std::size_t to) const {
    return in_.subspan(from, to - from);
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_header(Writer& w, Kind kind) {
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(kind));
}

Kind read_header(Reader& r) {
  if (r.str(4, "magic") != std::string("TVTK", 4)) throw FormatError(FormatErrc::bad_magic, "expected TVTK");
  const auto version = r.u32("version");
  if (version != kVersion) {
    throw FormatError(FormatErrc::unsupported_version, "version " + std::to_string(version));
  }
  const auto kind = r.u8("kind");
  if (kind > 3) throw FormatError(FormatErrc::wrong_kind, "kind byte " + std::to_string(kind));
  return static_cast<Kind>(kind);
}

void write_shape(Writer& w, const Shape& shape) {
  if (shape.size() > 255) throw ShapeError("TVTK: rank above 255");
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (auto e : shape) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("TVTK: extent above u32");
    w.u32(static_cast<std::uint32_t>(e));
  }
}

// Reads rank + extents and returns the element count, rejecting overflow.
std::uint64_t read_shape(Reader& r, Shape& shape) {
  const auto rank = r.u8("rank");
  shape.resize(rank);
  std::uint64_t count = 1;
  for (auto& e : shape) {
    e = r.u32("extent");
    if (e != 0 && count > kMaxElements / e) {
      throw FormatError(FormatErrc::extent_overflow, "extents exceed " + std::to_string(kMaxElements) + " elements");
    }
    count *= e;
  }
  if (count > kMaxElements) {
    throw FormatError(FormatErrc::extent_overflow, "extents exceed " + std::to_string(kMaxElements) + " elements");
  }
  return count;
}

void check_crc(std::uint32_t expected, std::span<const std::uint8_t> covered) {
  const auto actual = crc32(covered);
  if (actual != expected) {
    throw FormatError(FormatErrc::checksum_mismatch,
                      "stored " + std::to_string(expected) + ", computed " + std::to_string(actual));
  }
}

bool is_bundle(Kind kind) { return kind == Kind::params || kind == Kind::index; }

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode(const Record& record) {
  if (is_bundle(record.kind)) throw std::invalid_argument("TVTK: kinds 2 and 3 are bundles");
  if (shape_numel(record.shape) != record.data.size()) {
    throw ShapeError("TVTK: shape " + shape_str(record.shape) + " does not match " +
                     std::to_string(record.data.size()) + " values");
  }
  Writer w;
  write_header(w, record.kind);
  write_shape(w, record.shape);
  const auto payload_start = w.size();
  w.f32s(record.data);
  const auto crc = crc32(std::span(w.buffer()).subspan(payload_start));
  w.u32(crc);
  return std::move(w.buffer());
}

Record decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Record rec;
  rec.kind = read_header(r);
  if (is_bundle(rec.kind)) throw FormatError(FormatErrc::wrong_kind, "bundle kind in single-tensor read");
  const auto count = read_shape(r, rec.shape);
  const auto payload_start = r.pos();
  rec.data = r.f32s(count, "payload");
  const auto payload_end = r.pos();
  check_crc(r.u32("checksum"), r.window(payload_start, payload_end));
  return rec;
}

const TensorF& Bundle::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::out_of_range("bundle has no tensor '" + name + "'");
}

const std::vector<std::string>& Bundle::list(const std::string& name) const {
  for (const auto& [n, l] : lists)
    if (n == name) return l;
  throw std::out_of_range("bundle has no list '" + name + "'");
}

std::vector<std::uint8_t> encode(const Bundle& bundle) {
  if (!is_bundle(bundle.kind)) throw std::invalid_argument("TVTK: kinds 0 and 1 are single tensors");
  Writer w;
  write_header(w, bundle.kind);
  const auto covered_start = w.size();
  w.u32(static_cast<std::uint32_t>(bundle.tensors.size()));
  for (const auto& [name, t] : bundle.tensors) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    write_shape(w, t.shape());
  }
  w.u32(static_cast<std::uint32_t>(bundle.lists.size()));
  for (const auto& [name, items] : bundle.lists) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(items.size()));
    for (const auto& s : items) {
      w.u32(static_cast<std::uint32_t>(s.size()));
      w.bytes(s.data(), s.size());
    }
  }
  for (const auto& [name, t] : bundle.tensors) w.f32s(t.data());
  const auto crc = crc32(std::span(w.buffer()).subspan(covered_start));
  w.u32(crc);
  return std::move(w.buffer());
}

Bundle decode_bundle(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Bundle b;
  b.kind = read_header(r);
  if (!is_bundle(b.kind)) throw FormatError(FormatErrc::wrong_kind, "single-tensor kind in bundle read");
  const auto covered_start = r.pos();
  const auto n_tensors = r.u32("tensor count");
  std::vector<std::pair<std::string, Shape>> manifest;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.str(r.u16("name length"), "name");
    Shape shape;
    const auto count = read_shape(r, shape);
    total += count;
    if (total > kMaxElements) throw FormatError(FormatErrc::extent_overflow, "bundle payload too large");
    manifest.emplace_back(std::move(name), std::move(shape));
    counts.push_back(count);
  }
  const auto n_lists = r.u32("list count");
  for (std::uint32_t i = 0; i < n_lists; ++i) {
    auto name = r.str(r.u16("name length"), "list name");
    const auto n = r.u32("list size");
    std::vector<std::string> items;
    for (std::uint32_t k = 0; k < n; ++k) items.push_back(r.str(r.u32("string length"), "string"));
    b.lists.emplace_back(std::move(name), std::move(items));
  }
  r.need(total * 4, "payload");
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto values = r.f32s(counts[i], "payload");
    b.tensors.emplace_back(manifest[i].first, TensorF::from(manifest[i].second, std::move(values)));
  }
  const auto covered_end = r.pos();
  check_crc(r.u32("checksum"), r.window(covered_start, covered_end));
  return b;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::io, "short write to " + path.string());
}

}  // namespace tvtk
}  // namespace crosstvr
