#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace roadmesh {

// Row-major interleaved image.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width + col) * channels + ch;
  }
  T& at(int row, int col, int ch = 0) { return data[index(row, col, ch)]; }
  const T& at(int row, int col, int ch = 0) const { return data[index(row, col, ch)]; }
  bool same_shape(int w, int h) const { return width == w && height == h; }
};

using ImageF = Image<float>;
using ImageD = Image<double>;
using ImageU8 = Image<std::uint8_t>;

// 8-bit PNG I/O (gray, RGB). Throws DataError with the path on failure.
void write_png(const std::filesystem::path& path, const ImageU8& img);
ImageU8 read_png(const std::filesystem::path& path);

// [0,1] floats to bytes with round-half-up: floor(255 c + 0.5).
std::uint8_t to_byte(double c);
ImageU8 to_bytes(const ImageF& img);

}  // namespace roadmesh
