#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include "awsaug/error.hpp"
#include "awsaug/image.hpp"
#include "awsaug/rng.hpp"

namespace awsaug {

inline constexpr int kNumElements = 36;
inline constexpr int kNumOps = kNumElements * kNumElements;

enum class ElementKind {
  HShear,
  VShear,
  HTranslate,
  VTranslate,
  Rotate,
  Color,
  Posterize,
  Solarize,
  Contrast,
  Sharpness,
  Brightness,
  Autocontrast,
  Equalize,
  Invert,
};

inline constexpr const char* kind_name(ElementKind k) {
  switch (k) {
    case ElementKind::HShear: return "HShear";
    case ElementKind::VShear: return "VShear";
    case ElementKind::HTranslate: return "HTranslate";
    case ElementKind::VTranslate: return "VTranslate";
    case ElementKind::Rotate: return "Rotate";
    case ElementKind::Color: return "Color";
    case ElementKind::Posterize: return "Posterize";
    case ElementKind::Solarize: return "Solarize";
    case ElementKind::Contrast: return "Contrast";
    case ElementKind::Sharpness: return "Sharpness";
    case ElementKind::Brightness: return "Brightness";
    case ElementKind::Autocontrast: return "Autocontrast";
    case ElementKind::Equalize: return "Equalize";
    case ElementKind::Invert: return "Invert";
  }
  return "?";
}

inline constexpr bool is_geometric(ElementKind k) {
  return k == ElementKind::HShear || k == ElementKind::VShear ||
         k == ElementKind::HTranslate || k == ElementKind::VTranslate ||
         k == ElementKind::Rotate;
}

struct AugmentElement {
  ElementKind kind = ElementKind::Invert;
  std::optional<double> magnitude;
  int index = -1;

  std::string name() const {
    std::ostringstream os;
    os << kind_name(kind);
    if (magnitude) os << '(' << *magnitude << ')';
    return os.str();
  }
};

struct AugmentOp {
  AugmentElement first;
  AugmentElement second;
  int id = -1;

  std::string name() const { return first.name() + "+" + second.name(); }
};

// The 36 candidate elements: table order, magnitudes ascending within a kind.
inline const std::array<AugmentElement, kNumElements>& enumerate_elements() {
  static const std::array<AugmentElement, kNumElements> table = [] {
    std::array<AugmentElement, kNumElements> t{};
    int i = 0;
    auto add3 = [&](ElementKind k, double a, double b, double c) {
      for (double m : {a, b, c}) {
        t[i] = AugmentElement{k, m, i};
        ++i;
      }
    };
    add3(ElementKind::HShear, 0.1, 0.2, 0.3);
    add3(ElementKind::VShear, 0.1, 0.2, 0.3);
    add3(ElementKind::HTranslate, 0.15, 0.3, 0.45);
    add3(ElementKind::VTranslate, 0.15, 0.3, 0.45);
    add3(ElementKind::Rotate, 10, 20, 30);
    add3(ElementKind::Color, 0.3, 0.6, 0.9);
    add3(ElementKind::Posterize, 4.4, 5.6, 6.8);
    add3(ElementKind::Solarize, 26, 102, 179);
    add3(ElementKind::Contrast, 1.3, 1.6, 1.9);
    add3(ElementKind::Sharpness, 1.3, 1.6, 1.9);
    add3(ElementKind::Brightness, 1.3, 1.6, 1.9);
    for (ElementKind k : {ElementKind::Autocontrast, ElementKind::Equalize,
                          ElementKind::Invert}) {
      t[i] = AugmentElement{k, std::nullopt, i};
      ++i;
    }
    return t;
  }();
  return table;
}

inline const AugmentElement& element_at(int index) {
  if (index < 0 || index >= kNumElements) throw Error("element index out of range");
  return enumerate_elements()[static_cast<std::size_t>(index)];
}

inline constexpr int op_id(int first_index, int second_index) {
  return kNumElements * first_index + second_index;
}

inline AugmentOp op_from_id(int id) {
  if (id < 0 || id >= kNumOps) throw Error("operation id out of range");
  return AugmentOp{element_at(id / kNumElements), element_at(id % kNumElements), id};
}

// ---------------------------------------------------------------------------
// Pixel primitives

namespace detail {

inline std::uint8_t clamp_round(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v));
}

// Inverse-mapped nearest-neighbour resampling: dst(y, x) = src(map(y, x)).
template <class Map>
Image remap(const Image& src, std::uint8_t fill, Map&& map) {
  Image out(src.height, src.width, src.channels, fill);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      const auto [sy, sx] = map(static_cast<double>(y), static_cast<double>(x));
      const int iy = static_cast<int>(std::floor(sy + 0.5));
      const int ix = static_cast<int>(std::floor(sx + 0.5));
      if (iy < 0 || iy >= src.height || ix < 0 || ix >= src.width) continue;
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(iy, ix, c);
    }
  }
  return out;
}

template <class Fn>
Image map_pixels(Image img, Fn&& fn) {
  for (auto& p : img.pixels) p = fn(p);
  return img;
}

// Degenerate image blend: out = deg + factor * (orig - deg), rounded, clamped.
inline Image blend(const Image& orig, const std::vector<double>& degenerate, double factor) {
  Image out = orig;
  for (std::size_t i = 0; i < orig.pixels.size(); ++i) {
    const double d = degenerate[i];
    out.pixels[i] = clamp_round(d + factor * (static_cast<double>(orig.pixels[i]) - d));
  }
  return out;
}

inline double luma(const Image& img, int y, int x) {
  if (img.channels == 1) return img.at(y, x, 0);
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

}  // namespace detail

inline Image shear_x(const Image& img, double factor, std::uint8_t fill) {
  const double cy = (img.height - 1) / 2.0;
  return detail::remap(img, fill, [&](double y, double x) {
    return std::pair{y, x + factor * (y - cy)};
  });
}

inline Image shear_y(const Image& img, double factor, std::uint8_t fill) {
  const double cx = (img.width - 1) / 2.0;
  return detail::remap(img, fill, [&](double y, double x) {
    return std::pair{y + factor * (x - cx), x};
  });
}

inline Image translate(const Image& img, int dy, int dx, std::uint8_t fill) {
  return detail::remap(img, fill, [&](double y, double x) {
    return std::pair{y - dy, x - dx};
  });
}

// Rotates the content by `degrees` about the image centre.
inline Image rotate(const Image& img, double degrees, std::uint8_t fill) {
  const double t = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  return detail::remap(img, fill, [&](double y, double x) {
    const double u = x - cx, v = y - cy;
    return std::pair{-s * u + c * v + cy, c * u + s * v + cx};
  });
}

inline Image invert(const Image& img) {
  return detail::map_pixels(img, [](std::uint8_t v) -> std::uint8_t { return 255 - v; });
}

// Inverts every pixel at or above the threshold.
inline Image solarize(const Image& img, int threshold) {
  return detail::map_pixels(img, [threshold](std::uint8_t v) -> std::uint8_t {
    return v >= threshold ? static_cast<std::uint8_t>(255 - v) : v;
  });
}

inline int posterize_bits(double magnitude) {
  return std::clamp(static_cast<int>(std::lround(magnitude)), 1, 8);
}

// Keeps the top `bits` bits of every value.
inline Image posterize(const Image& img, int bits) {
  if (bits < 1 || bits > 8) throw Error("posterize bits out of range");
  const auto mask = static_cast<std::uint8_t>(0xFFu << (8 - bits));
  return detail::map_pixels(img, [mask](std::uint8_t v) -> std::uint8_t { return v & mask; });
}

// Per channel linear stretch of [min, max] onto [0, 255]; flat channels untouched.
inline Image autocontrast(const Image& img) {
  Image out = img;
  for (int c = 0; c < img.channels; ++c) {
    int lo = 255, hi = 0;
    for (std::size_t i = static_cast<std::size_t>(c); i < img.pixels.size();
         i += static_cast<std::size_t>(img.channels)) {
      lo = std::min<int>(lo, img.pixels[i]);
      hi = std::max<int>(hi, img.pixels[i]);
    }
    if (hi <= lo) continue;
    std::array<std::uint8_t, 256> lut{};
    // round(255 (v - lo) / (hi - lo)), halves away from zero
    for (int v = 0; v < 256; ++v) lut[v] = detail::clamp_round(255.0 * (v - lo) / (hi - lo));
    for (std::size_t i = static_cast<std::size_t>(c); i < out.pixels.size();
         i += static_cast<std::size_t>(img.channels))
      out.pixels[i] = lut[out.pixels[i]];
  }
  return out;
}

// Per channel histogram equalization.
//
// Let v_1 < ... < v_k be the occupied values with counts n_1..n_k, N the
// pixel count and C_i = n_1 + ... + n_i. The base lookup is
//   t_i = round(255 * C_{i-1} / (N - n_k))
// so v_1 -> 0 and v_k -> 255. Occupied values are then kept distinct
// (t_i = max(t_i, t_{i-1} + 1) forward, t_i = min(t_i, t_{i+1} - 1) backward,
// anchored at t_k = 255). Distinct occupied values keep the histogram counts
// intact, which makes the transform idempotent. A channel with a single
// occupied value is left unchanged.
inline Image equalize(const Image& img) {
  Image out = img;
  for (int c = 0; c < img.channels; ++c) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = static_cast<std::size_t>(c); i < img.pixels.size();
         i += static_cast<std::size_t>(img.channels))
      ++hist[img.pixels[i]];
    std::vector<int> values;
    for (int v = 0; v < 256; ++v)
      if (hist[v] != 0) values.push_back(v);
    if (values.size() < 2) continue;
    const std::size_t total = img.pixels.size() / static_cast<std::size_t>(img.channels);
    const double denom = static_cast<double>(total - hist[values.back()]);
    std::vector<int> target(values.size());
    std::size_t cum = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      target[i] = static_cast<int>(std::lround(255.0 * static_cast<double>(cum) / denom));
      cum += hist[values[i]];
    }
    for (std::size_t i = 1; i < target.size(); ++i)
      target[i] = std::max(target[i], target[i - 1] + 1);
    target.back() = 255;
    for (std::size_t i = target.size() - 1; i-- > 0;)
      target[i] = std::min(target[i], target[i + 1] - 1);
    std::array<std::uint8_t, 256> lut{};
    for (std::size_t i = 0; i < values.size(); ++i)
      lut[values[i]] = static_cast<std::uint8_t>(target[i]);
    for (std::size_t i = static_cast<std::size_t>(c); i < out.pixels.size();
         i += static_cast<std::size_t>(img.channels))
      out.pixels[i] = lut[out.pixels[i]];
  }
  return out;
}

// Blend towards the grayscale copy (luma weights 0.299, 0.587, 0.114).
inline Image color(const Image& img, double factor) {
  if (img.channels == 1) return img;
  std::vector<double> deg(img.pixels.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double l = detail::luma(img, y, x);
      for (int c = 0; c < 3; ++c) deg[img.index(y, x, c)] = l;
    }
  return detail::blend(img, deg, factor);
}

// Blend towards the constant mean-luma image.
inline Image contrast(const Image& img, double factor) {
  double mean = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) mean += detail::luma(img, y, x);
  mean /= static_cast<double>(img.height) * img.width;
  return detail::blend(img, std::vector<double>(img.pixels.size(), mean), factor);
}

// Blend towards black.
inline Image brightness(const Image& img, double factor) {
  return detail::blend(img, std::vector<double>(img.pixels.size(), 0.0), factor);
}

// Blend towards a 3x3 box-smoothed copy; border pixels keep their value.
inline Image sharpness(const Image& img, double factor) {
  std::vector<double> deg(img.pixels.begin(), img.pixels.end());
  for (int y = 1; y + 1 < img.height; ++y)
    for (int x = 1; x + 1 < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) s += img.at(y + dy, x + dx, c);
        deg[img.index(y, x, c)] = s / 9.0;
      }
  return detail::blend(img, deg, factor);
}

inline Image flip_horizontal(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

// ---------------------------------------------------------------------------
// Elements and operations

struct GeometryConfig {
  std::uint8_t fill = 128;
  bool random_sign = true;
};

inline Image apply_element(const Image& img, const AugmentElement& e, Rng& rng,
                           const GeometryConfig& geo = {}) {
  if (!img.valid()) throw Error("invalid image");
  const double m = e.magnitude.value_or(0.0);
  auto signed_mag = [&] { return geo.random_sign ? m * rng.sign() : m; };
  switch (e.kind) {
    case ElementKind::HShear: return shear_x(img, signed_mag(), geo.fill);
    case ElementKind::VShear: return shear_y(img, signed_mag(), geo.fill);
    case ElementKind::HTranslate: {
      const double f = signed_mag();
      return translate(img, 0, static_cast<int>(std::lround(f * img.width)), geo.fill);
    }
    case ElementKind::VTranslate: {
      const double f = signed_mag();
      return translate(img, static_cast<int>(std::lround(f * img.height)), 0, geo.fill);
    }
    case ElementKind::Rotate: return rotate(img, signed_mag(), geo.fill);
    case ElementKind::Color: return color(img, m);
    case ElementKind::Posterize: return posterize(img, posterize_bits(m));
    case ElementKind::Solarize: return solarize(img, static_cast<int>(std::lround(m)));
    case ElementKind::Contrast: return contrast(img, m);
    case ElementKind::Sharpness: return sharpness(img, m);
    case ElementKind::Brightness: return brightness(img, m);
    case ElementKind::Autocontrast: return autocontrast(img);
    case ElementKind::Equalize: return equalize(img);
    case ElementKind::Invert: return invert(img);
  }
  throw Error("unknown augmentation element");
}

// First element applied first.
inline Image apply_op(const Image& img, const AugmentOp& op, Rng& rng,
                      const GeometryConfig& geo = {}) {
  return apply_element(apply_element(img, op.first, rng, geo), op.second, rng, geo);
}

inline Image apply_op(const Image& img, int id, Rng& rng, const GeometryConfig& geo = {}) {
  return apply_op(img, op_from_id(id), rng, geo);
}

// ---------------------------------------------------------------------------
// Basic training-time pre-processing

struct PreprocessConfig {
  double flip_prob = 0.5;
  int pad = 4;
  int cutout = 16;  // side length; 0 disables
  std::uint8_t cutout_fill = 128;
};

inline Image pad_crop(const Image& img, int pad, Rng& rng) {
  if (pad <= 0) return img;
  const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1))) - pad;
  const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1))) - pad;
  // Crop window at offset (oy, ox) of the zero-padded image.
  return translate(img, -oy, -ox, 0);
}

inline Image cutout(Image img, int size, std::uint8_t fill, Rng& rng) {
  if (size <= 0) return img;
  const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height)));
  const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width)));
  const int y0 = std::max(0, cy - size / 2), y1 = std::min(img.height, cy - size / 2 + size);
  const int x0 = std::max(0, cx - size / 2), x1 = std::min(img.width, cx - size / 2 + size);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int c = 0; c < img.channels; ++c) img.at(y, x, c) = fill;
  return img;
}

// flip -> pad+crop -> optional searched operation -> cutout. The operation
// draws its random signs from op_rng when one is given.
inline Image augment_for_training(const Image& img, const PreprocessConfig& cfg,
                                  const AugmentOp* op, Rng& rng,
                                  const GeometryConfig& geo = {}, Rng* op_rng = nullptr) {
  Image out = cfg.flip_prob > 0.0 && rng.bernoulli(cfg.flip_prob) ? flip_horizontal(img) : img;
  out = pad_crop(out, cfg.pad, rng);
  if (op != nullptr) out = apply_op(out, *op, op_rng != nullptr ? *op_rng : rng, geo);
  return cutout(std::move(out), cfg.cutout, cfg.cutout_fill, rng);
}

inline Image preprocess(const Image& img, const PreprocessConfig& cfg, Rng& rng) {
  return augment_for_training(img, cfg, nullptr, rng);
}

}  // namespace awsaug
