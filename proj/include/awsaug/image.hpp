#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "awsaug/error.hpp"

namespace awsaug {

// 8-bit image, row-major, channel-last.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3)) throw Error("invalid image shape");
  }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[index(y, x, c)]; }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool valid() const {
    return height > 0 && width > 0 && (channels == 1 || channels == 3) &&
           pixels.size() == static_cast<std::size_t>(height) * width * channels;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace awsaug
