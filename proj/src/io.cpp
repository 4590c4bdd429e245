#include "simexplain/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "simexplain/error.hpp"

namespace simexplain::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& buf, float v) { put_u32(buf, std::bit_cast<std::uint32_t>(v)); }

void ByteReader::need(std::size_t n, const char* field) {
  if (pos_ + n > buf_.size()) throw ParseError(field, what_ + ": truncated file");
}

void ByteReader::expect_magic(std::string_view magic) {
  need(magic.size(), "magic");
  if (std::string_view(buf_).substr(pos_, magic.size()) != magic)
    throw ParseError("magic", what_ + ": expected '" + std::string(magic) + "'");
  pos_ += magic.size();
}

std::uint8_t ByteReader::u8(const char* field) {
  need(1, field);
  return static_cast<std::uint8_t>(buf_[pos_++]);
}

std::uint32_t ByteReader::u32(const char* field) {
  need(4, field);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64(const char* field) {
  const std::uint64_t lo = u32(field);
  const std::uint64_t hi = u32(field);
  return lo | (hi << 32);
}

float ByteReader::f32(const char* field) { return std::bit_cast<float>(u32(field)); }

void ByteReader::expect_end() {
  if (pos_ != buf_.size()) throw ParseError("data", what_ + ": trailing bytes");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_grid_file(const std::filesystem::path& path, const RawGrid& g) {
  if (g.values.size() != static_cast<std::size_t>(g.rows) * g.cols * g.channels)
    throw InvalidArgument("write_grid_file: value count mismatch");
  std::string buf = "GRID1";
  put_u32(buf, g.rows);
  put_u32(buf, g.cols);
  put_u32(buf, g.channels);
  for (float v : g.values) put_f32(buf, v);
  write_file(path, buf);
}

RawGrid read_grid_file(const std::filesystem::path& path) {
  ByteReader r(read_file(path), path.string());
  r.expect_magic("GRID1");
  RawGrid g;
  g.rows = r.u32("rows");
  g.cols = r.u32("cols");
  g.channels = r.u32("channels");
  const std::size_t n = static_cast<std::size_t>(g.rows) * g.cols * g.channels;
  g.values.resize(n);
  for (auto& v : g.values) v = r.f32("values");
  r.expect_end();
  return g;
}

void save_image(const std::filesystem::path& path, const ImageTensor& img) {
  RawGrid g{static_cast<std::uint32_t>(img.height()), static_cast<std::uint32_t>(img.width()),
            static_cast<std::uint32_t>(img.channels()), {}};
  g.values.reserve(img.size());
  for (double v : img.data()) g.values.push_back(static_cast<float>(v));
  write_grid_file(path, g);
}

ImageTensor load_image(const std::filesystem::path& path) {
  auto g = read_grid_file(path);
  ImageShape shape{static_cast<int>(g.rows), static_cast<int>(g.cols), static_cast<int>(g.channels)};
  return ImageTensor(shape, std::vector<double>(g.values.begin(), g.values.end()));
}

void save_saliency(const std::filesystem::path& path, const SaliencyMap& map) {
  if (map.data.size() != static_cast<std::size_t>(map.rows) * map.cols)
    throw InvalidArgument("save_saliency: data length mismatch");
  std::string buf = "SMAP1";
  put_u32(buf, static_cast<std::uint32_t>(map.rows));
  put_u32(buf, static_cast<std::uint32_t>(map.cols));
  buf.push_back(static_cast<char>(map.method));
  buf.push_back(static_cast<char>(map.fixed_reference ? 1 : 0));
  buf.push_back(static_cast<char>(map.normalized ? 1 : 0));
  for (float v : map.data) put_f32(buf, v);
  write_file(path, buf);
}

SaliencyMap load_saliency(const std::filesystem::path& path) {
  ByteReader r(read_file(path), path.string());
  r.expect_magic("SMAP1");
  SaliencyMap m;
  m.rows = static_cast<int>(r.u32("rows"));
  m.cols = static_cast<int>(r.u32("cols"));
  const auto method = r.u8("method");
  if (method > 3) throw ParseError("method", "unknown method byte " + std::to_string(method));
  m.method = static_cast<Method>(method);
  const auto fixed = r.u8("fixed_reference");
  const auto norm = r.u8("normalized");
  if (fixed > 1) throw ParseError("fixed_reference", "expected 0 or 1");
  if (norm > 1) throw ParseError("normalized", "expected 0 or 1");
  m.fixed_reference = fixed == 1;
  m.normalized = norm == 1;
  m.data.resize(static_cast<std::size_t>(m.rows) * m.cols);
  for (auto& v : m.data) {
    v = r.f32("values");
    if (!std::isfinite(v)) throw ParseError("values", "non-finite saliency value");
  }
  r.expect_end();
  return m;
}

void write_pgm(const std::filesystem::path& path, const Grid& grid) {
  std::ostringstream out;
  out << "P2\n" << grid.cols << ' ' << grid.rows << "\n255\n";
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const double v = std::clamp(grid(r, c), 0.0, 1.0);
      out << static_cast<int>(std::lround(v * 255.0)) << (c + 1 == grid.cols ? '\n' : ' ');
    }
  }
  write_file(path, out.str());
}

}  // namespace simexplain::io
