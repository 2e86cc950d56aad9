#include "intent/pgm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "intent/errors.hpp"

namespace intent {

namespace {

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string header(int height, int width, int maxval) {
  return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
}

void check_dims(int height, int width, std::size_t n) {
  if (height <= 0 || width <= 0 || static_cast<std::size_t>(height) * width != n) {
    throw FormatError("PGM: pixel count does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
}

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& path) : b_(bytes), path_(path) {}

  int integer() {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    if (start == pos_ || pos_ - start > 9) fail("expected a positive integer");
    return std::stoi(b_.substr(start, pos_ - start));
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) fail("missing separator before raster");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& why) const { throw FormatError(path_ + ": malformed PGM header: " + why); }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  std::string path_;
  std::size_t pos_ = 2;
};

}  // namespace

void write_pgm_image(const std::filesystem::path& path, int height, int width, std::span<const float> pixels) {
  check_dims(height, width, pixels.size());
  std::string bytes = header(height, width, 65535);
  bytes.reserve(bytes.size() + 2 * pixels.size());
  for (float p : pixels) {
    const double clamped = std::fmin(std::fmax(static_cast<double>(p), 0.0), 1.0);
    const auto v = static_cast<std::uint16_t>(std::lround(clamped * 65535.0));
    bytes.push_back(static_cast<char>(v >> 8));
    bytes.push_back(static_cast<char>(v & 0xFF));
  }
  write_bytes(path, bytes);
}

void write_pgm_mask(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> mask) {
  check_dims(height, width, mask.size());
  std::string bytes = header(height, width, 255);
  for (std::uint8_t m : mask) bytes.push_back(static_cast<char>(m ? 255 : 0));
  write_bytes(path, bytes);
}

PgmData read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PathError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  HeaderReader hdr(bytes, path.string());
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') hdr.fail("missing P5 magic");
  PgmData d;
  d.width = hdr.integer();
  d.height = hdr.integer();
  d.maxval = hdr.integer();
  if (d.width <= 0 || d.height <= 0) hdr.fail("non-positive dimensions");
  if (d.maxval <= 0 || d.maxval > 65535) hdr.fail("maxval outside [1, 65535]");
  const std::size_t start = hdr.raster_start();
  const std::size_t bps = d.maxval > 255 ? 2 : 1;
  const std::size_t n = static_cast<std::size_t>(d.width) * d.height;
  if (bytes.size() - start != n * bps) {
    throw FormatError(path.string() + ": expected " + std::to_string(n) + " samples, raster holds " +
                      std::to_string((bytes.size() - start) / bps) + (((bytes.size() - start) % bps) ? "+" : ""));
  }
  d.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start + i * bps);
    d.samples[i] = bps == 2 ? static_cast<std::uint16_t>((p[0] << 8) | p[1]) : p[0];
    if (d.samples[i] > d.maxval) throw FormatError(path.string() + ": sample exceeds maxval");
  }
  return d;
}

std::vector<float> read_pgm_image(const std::filesystem::path& path, int* height, int* width) {
  const PgmData d = read_pgm(path);
  if (height) *height = d.height;
  if (width) *width = d.width;
  std::vector<float> out(d.samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(d.samples[i] / static_cast<double>(d.maxval));
  return out;
}

std::vector<std::uint8_t> read_pgm_mask(const std::filesystem::path& path, int* height, int* width) {
  const PgmData d = read_pgm(path);
  if (height) *height = d.height;
  if (width) *width = d.width;
  std::vector<std::uint8_t> out(d.samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d.samples[i] ? 1 : 0;
  return out;
}

}  // namespace intent
