#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "awsaug/error.hpp"
#include "awsaug/image.hpp"
#include "awsaug/rng.hpp"

namespace awsaug {

enum class SplitTag { Train, Val, Test };

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int n_classes = 10;
  SplitTag tag = SplitTag::Train;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }

  void push_back(Image img, int label) {
    if (label < 0 || label >= n_classes) throw Error("invalid label");
    images.push_back(std::move(img));
    labels.push_back(label);
  }

  Dataset subset(const std::vector<std::size_t>& idx, SplitTag t) const {
    Dataset out;
    out.n_classes = n_classes;
    out.tag = t;
    out.images.reserve(idx.size());
    out.labels.reserve(idx.size());
    for (auto i : idx) {
      out.images.push_back(images.at(i));
      out.labels.push_back(labels.at(i));
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary format: 3073-byte records, one label byte followed by the
// red, green and blue 32x32 planes.

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = kCifarSide * kCifarSide * 3;
inline constexpr std::size_t kCifarRecord = kCifarPixels + 1;

inline void append_cifar_bytes(Dataset& d, const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % kCifarRecord != 0) throw Error("malformed CIFAR record");
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
    const int label = bytes[off];
    if (label > 9) throw Error("invalid label");
    Image img(kCifarSide, kCifarSide, 3);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) img.pixels[i * 3 + c] = bytes[off + 1 + c * plane + i];
    d.images.push_back(std::move(img));
    d.labels.push_back(label);
  }
}

inline Dataset load_cifar_binary(const std::vector<std::string>& paths) {
  Dataset d;
  d.n_classes = 10;
  for (const auto& path : paths) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UserError("dataset not found: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    append_cifar_bytes(d, bytes);
  }
  return d;
}

inline std::vector<std::uint8_t> cifar_bytes(const Dataset& d) {
  std::vector<std::uint8_t> out;
  out.reserve(d.size() * kCifarRecord);
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t n = 0; n < d.size(); ++n) {
    const auto& img = d.images[n];
    if (img.height != 32 || img.width != 32 || img.channels != 3)
      throw Error("CIFAR records are 32x32x3");
    out.push_back(static_cast<std::uint8_t>(d.labels[n]));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) out.push_back(img.pixels[i * 3 + c]);
  }
  return out;
}

inline void write_cifar_binary(const Dataset& d, const std::string& path) {
  const auto bytes = cifar_bytes(d);
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("cannot write " + path);
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  std::size_t train_size = 40000;
  std::size_t val_size = 10000;
  std::size_t test_size = 10000;  // informational; the test set is a separate source
  std::uint64_t seed = 0;
  int classes = 0;  // >0 restricts both splits to a random subset of classes
};

// Keeps `classes` randomly chosen classes (relabelled 0..classes-1 in
// ascending original order) and then at most n images in a seeded order.
inline Dataset subsample(const Dataset& d, std::size_t n, int classes, std::uint64_t seed) {
  Rng rng(stream_seed(seed, 0x5ab5));
  std::vector<int> remap(static_cast<std::size_t>(d.n_classes), -1);
  int kept = d.n_classes;
  if (classes > 0 && classes < d.n_classes) {
    std::vector<int> order(static_cast<std::size_t>(d.n_classes));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    std::sort(order.begin(), order.begin() + classes);
    for (int i = 0; i < classes; ++i) remap[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i;
    kept = classes;
  } else {
    std::iota(remap.begin(), remap.end(), 0);
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (remap[static_cast<std::size_t>(d.labels[i])] >= 0) idx.push_back(i);
  rng.shuffle(idx.begin(), idx.end());
  if (idx.size() > n) idx.resize(n);
  Dataset out = d.subset(idx, d.tag);
  out.n_classes = kept;
  for (auto& l : out.labels) l = remap[static_cast<std::size_t>(l)];
  return out;
}

// Seeded shuffle, then the first train_size images form the train split and
// the next val_size the validation split.
inline std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec) {
  const Dataset* src = &d;
  Dataset reduced;
  if (spec.classes > 0 && spec.classes < d.n_classes) {
    reduced = subsample(d, d.size(), spec.classes, spec.seed);
    src = &reduced;
  }
  if (spec.train_size + spec.val_size > src->size())
    throw UserError("split sizes exceed dataset size");
  std::vector<std::size_t> idx(src->size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(stream_seed(spec.seed, 0x5b117));
  rng.shuffle(idx.begin(), idx.end());
  std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(spec.train_size));
  std::vector<std::size_t> va(idx.begin() + static_cast<std::ptrdiff_t>(spec.train_size),
                              idx.begin() + static_cast<std::ptrdiff_t>(spec.train_size + spec.val_size));
  return {src->subset(tr, SplitTag::Train), src->subset(va, SplitTag::Val)};
}

// ---------------------------------------------------------------------------
// Synthetic dataset
//
// Class c is one of ten mirror-symmetric outline shapes whose identity
// survives moderate rotation (line, plus, rings, disk, bullseye, dots, T, U,
// H). Position, size, colour, contrast polarity and a background ramp are
// nuisance variables, so a small model trained on a few hundred images
// memorizes nuisance detail unless it sees augmented copies.

struct SynthConfig {
  int jitter = 2;        // max centre offset in pixels
  double noise = 8.0;    // per-pixel gaussian noise std
  double min_contrast = 50.0;
  double max_contrast = 100.0;
  double tint = 30.0;    // per-channel colour offset of the foreground
  double ramp = 4.0;     // max background gradient per pixel
  double rotate = 0.0;   // max shape rotation in degrees
  double shear = 0.0;    // max horizontal shear of the shape
  bool random_polarity = true;  // false: shapes are always brighter than the background

  // No nuisance except background level and shape size.
  static SynthConfig clean() {
    SynthConfig c;
    c.jitter = 0;
    c.noise = 0.0;
    c.tint = 0.0;
    c.ramp = 0.0;
    c.random_polarity = false;
    return c;
  }

  // Upright shapes of fixed polarity: the pose and polarity nuisances are
  // switched off while everything else is kept.
  SynthConfig narrowed() const {
    SynthConfig c = *this;
    c.rotate = 0.0;
    c.shear = 0.0;
    c.random_polarity = false;
    return c;
  }
};

inline constexpr int kSynthShapes = 10;

namespace detail {

inline bool shape_covers(int shape, int dy, int dx, int arm) {
  const int ady = std::abs(dy), adx = std::abs(dx);
  const int cheb = std::max(ady, adx);
  const double r = std::sqrt(static_cast<double>(dy * dy + dx * dx));
  const int half = (arm + 1) / 2;
  switch (shape) {
    case 0: return ady <= 1 && adx <= arm;                                         // line
    case 1: return (ady <= 1 && adx <= arm) || (adx <= 1 && ady <= arm);           // plus
    case 2: return cheb <= arm && cheb >= arm - 1;                                 // square ring
    case 3: return r <= 0.7 * arm;                                                 // disk
    case 4: return std::abs(r - arm) <= 0.8;                                       // circle
    case 5: return std::abs(r - arm) <= 0.8 || r <= 1.0;                           // bullseye
    case 6: return std::hypot(ady, adx - half - 1) <= 1.6;                         // two dots
    case 7: return (dy >= -arm && dy <= -arm + 1 && adx <= arm) || (adx <= 1 && ady <= arm);  // T
    case 8: return (dy >= arm - 1 && dy <= arm && adx <= arm) || (adx >= arm - 1 && adx <= arm && ady <= arm);  // U
    default: return (adx >= arm - 1 && adx <= arm && ady <= arm) || (ady <= 0 && adx <= arm);  // H
  }
}

}  // namespace detail

// Labels are assigned round-robin, so classes stay balanced for any n.
inline Dataset synth_dataset(std::size_t n, int n_classes, int size, std::uint64_t seed,
                             const SynthConfig& cfg = {}) {
  if (n_classes < 1 || n_classes > kSynthShapes) throw Error("synth_dataset supports 1..10 classes");
  if (size < 8) throw Error("synth_dataset needs images of at least 8 pixels");
  Dataset d;
  d.n_classes = n_classes;
  d.images.reserve(n);
  d.labels.reserve(n);
  Rng rng(stream_seed(seed, 0x5e7d));
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(n_classes));
    Image img(size, size, 3);
    const double bg = rng.uniform(60.0, 195.0);
    const double gy = rng.uniform(-cfg.ramp, cfg.ramp), gx = rng.uniform(-cfg.ramp, cfg.ramp);
    const double polarity = cfg.random_polarity ? rng.sign() : 1.0;
    const double fg_mean = bg + polarity * rng.uniform(cfg.min_contrast, cfg.max_contrast);
    double fg[3];
    for (double& v : fg) v = fg_mean + rng.uniform(-cfg.tint, cfg.tint);
    const int span = 2 * cfg.jitter + 1;
    const int cy = size / 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(span))) - cfg.jitter;
    const int cx = size / 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(span))) - cfg.jitter;
    const int arm = size / 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, size / 8) + 1)));
    const double angle = rng.uniform(-cfg.rotate, cfg.rotate) * std::numbers::pi / 180.0;
    const double shear = rng.uniform(-cfg.shear, cfg.shear);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        // Shape coordinates: undo the shear, then the rotation.
        const double py = y - cy, px = x - cx - shear * (y - cy);
        const int sy = static_cast<int>(std::lround(ca * py + sa * px));
        const int sx = static_cast<int>(std::lround(-sa * py + ca * px));
        const bool on = detail::shape_covers(label, sy, sx, arm);
        for (int c = 0; c < 3; ++c) {
          const double base = (on ? fg[c] : bg) + gy * (y - size / 2) + gx * (x - size / 2);
          const double v = base + cfg.noise * rng.normal();
          img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    d.images.push_back(std::move(img));
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace awsaug
