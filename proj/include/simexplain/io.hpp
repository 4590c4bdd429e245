#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "simexplain/saliency_map.hpp"
#include "simexplain/tensor.hpp"

namespace simexplain::io {

// GRID1: "GRID1", u32 rows, u32 cols, u32 channels, then rows*cols*channels
// f32. SMAP1: "SMAP1", u32 rows, u32 cols, u8 method, u8 fixed_reference,
// u8 normalized, then rows*cols f32. All little-endian.

struct RawGrid {
  std::uint32_t rows = 0, cols = 0, channels = 0;
  std::vector<float> values;
};

void write_grid_file(const std::filesystem::path& path, const RawGrid& g);
RawGrid read_grid_file(const std::filesystem::path& path);

void save_image(const std::filesystem::path& path, const ImageTensor& img);
ImageTensor load_image(const std::filesystem::path& path);

void save_saliency(const std::filesystem::path& path, const SaliencyMap& map);
SaliencyMap load_saliency(const std::filesystem::path& path);

/// 8-bit plain-text graymap (P2) preview of a [0,1] grid.
void write_pgm(const std::filesystem::path& path, const Grid& grid);

// Little-endian helpers shared with the model file format.
void put_u32(std::string& buf, std::uint32_t v);
void put_u64(std::string& buf, std::uint64_t v);
void put_f32(std::string& buf, float v);

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string what) : buf_(std::move(bytes)), what_(std::move(what)) {}
  void expect_magic(std::string_view magic);
  std::uint8_t u8(const char* field);
  std::uint32_t u32(const char* field);
  std::uint64_t u64(const char* field);
  float f32(const char* field);
  void expect_end();

 private:
  void need(std::size_t n, const char* field);
  std::string buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace simexplain::io
