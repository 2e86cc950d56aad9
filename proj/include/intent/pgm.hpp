#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace intent {

// Binary PGM ("P5"). Images are stored as 16-bit big-endian samples with maxval 65535
// (value = round(p * 65535)); masks as 8-bit samples in {0, 255}.
void write_pgm_image(const std::filesystem::path& path, int height, int width, std::span<const float> pixels);
void write_pgm_mask(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> mask);

struct PgmData {
  int height = 0;
  int width = 0;
  int maxval = 0;
  std::vector<std::uint16_t> samples;
};

// Throws PathError when unreadable and FormatError for malformed headers or a sample count
// that does not match the header.
PgmData read_pgm(const std::filesystem::path& path);
// Samples scaled to [0, 1] by maxval.
std::vector<float> read_pgm_image(const std::filesystem::path& path, int* height = nullptr, int* width = nullptr);
// Nonzero samples become 1.
std::vector<std::uint8_t> read_pgm_mask(const std::filesystem::path& path, int* height = nullptr, int* width = nullptr);

}  // namespace intent
