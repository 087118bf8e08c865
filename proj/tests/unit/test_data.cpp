#include <gtest/gtest.h>

#include <set>

#include "awsaug/data.hpp"
#include "test_support.hpp"

namespace awsaug {
namespace {

// Hand-built record: label byte, then the R, G and B planes.
std::vector<std::uint8_t> cifar_record(int label, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  std::vector<std::uint8_t> rec(kCifarRecord);
  rec[0] = static_cast<std::uint8_t>(label);
  std::fill(rec.begin() + 1, rec.begin() + 1 + 1024, r);
  std::fill(rec.begin() + 1 + 1024, rec.begin() + 1 + 2048, g);
  std::fill(rec.begin() + 1 + 2048, rec.end(), b);
  return rec;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TEST(Cifar, DecodesPlanarRecord) {
  auto bytes = cifar_record(3, 10, 20, 30);
  bytes[1 + 5] = 99;            // red, pixel 5
  bytes[1 + 2048 + 1023] = 7;   // blue, last pixel
  Dataset d;
  append_cifar_bytes(d, bytes);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.labels[0], 3);
  const Image& img = d.images[0];
  EXPECT_EQ(img.at(0, 0, 0), 10);
  EXPECT_EQ(img.at(0, 0, 1), 20);
  EXPECT_EQ(img.at(0, 0, 2), 30);
  EXPECT_EQ(img.at(0, 5, 0), 99);
  EXPECT_EQ(img.at(31, 31, 2), 7);
}

TEST(Cifar, FileRoundTrip) {
  const auto dir = testing::temp_dir("cifar");
  Rng rng(1);
  Dataset d;
  for (int i = 0; i < 7; ++i) d.push_back(testing::random_image(rng, 32, 32, 3), i % 10);
  write_cifar_binary(d, (dir / "a.bin").string());
  write_bytes(dir / "empty.bin", {});
  const auto back = load_cifar_binary({(dir / "a.bin").string(), (dir / "empty.bin").string()});
  EXPECT_EQ(back.images, d.images);
  EXPECT_EQ(back.labels, d.labels);
}

TEST(Cifar, EmptyFileGivesEmptyDataset) {
  const auto dir = testing::temp_dir("cifar_empty");
  write_bytes(dir / "e.bin", {});
  EXPECT_TRUE(load_cifar_binary({(dir / "e.bin").string()}).empty());
}

TEST(Cifar, Errors) {
  Dataset d;
  try {
    append_cifar_bytes(d, std::vector<std::uint8_t>(3072));
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "malformed CIFAR record");
  }
  try {
    append_cifar_bytes(d, cifar_record(10, 0, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "invalid label");
  }
  EXPECT_THROW(load_cifar_binary({"/nonexistent/data_batch_1.bin"}), UserError);
}

Dataset labelled(std::size_t n) {
  // Two-pixel images encoding the index, so every image is unique.
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    Image img(1, 2, 1);
    img.pixels = {static_cast<std::uint8_t>(i / 256), static_cast<std::uint8_t>(i % 256)};
    d.push_back(std::move(img), static_cast<int>(i % 10));
  }
  return d;
}

TEST(Split, SizesAndDisjointness) {
  const auto d = labelled(1000);
  const auto [tr, va] = split(d, SplitSpec{600, 300, 0, 5, 0});
  EXPECT_EQ(tr.size(), 600u);
  EXPECT_EQ(va.size(), 300u);
  EXPECT_EQ(tr.tag, SplitTag::Train);
  EXPECT_EQ(va.tag, SplitTag::Val);
  std::set<std::vector<std::uint8_t>> seen;
  for (const auto& img : tr.images) seen.insert(img.pixels);
  for (const auto& img : va.images) EXPECT_FALSE(seen.count(img.pixels));
  const auto again = split(d, SplitSpec{600, 300, 0, 5, 0});
  EXPECT_EQ(again.first, tr);
  EXPECT_NE(split(d, SplitSpec{600, 300, 0, 6, 0}).first, tr);
}

TEST(Split, ReducedClassesAreRelabelled) {
  const auto d = labelled(1000);
  const auto [tr, va] = split(d, SplitSpec{150, 50, 0, 1, 2});
  EXPECT_EQ(tr.n_classes, 2);
  for (int l : tr.labels) EXPECT_TRUE(l == 0 || l == 1);
  for (int l : va.labels) EXPECT_TRUE(l == 0 || l == 1);
}

TEST(Split, OversizedRequestIsUserError) {
  try {
    split(labelled(100), SplitSpec{80, 30, 0, 0, 0});
    FAIL();
  } catch (const UserError& e) {
    EXPECT_STREQ(e.what(), "split sizes exceed dataset size");
  }
}

TEST(Dataset, RejectsOutOfRangeLabel) {
  Dataset d;
  EXPECT_THROW(d.push_back(Image(1, 1, 1), 10), Error);
  EXPECT_THROW(d.push_back(Image(1, 1, 1), -1), Error);
}

TEST(Synthetic, DeterministicAndBalanced) {
  SynthConfig cfg;
  cfg.rotate = 30.0;
  cfg.shear = 0.3;
  const auto a = synth_dataset(205, 10, 16, 3, cfg);
  EXPECT_EQ(a, synth_dataset(205, 10, 16, 3, cfg));
  EXPECT_NE(a, synth_dataset(205, 10, 16, 4, cfg));
  std::vector<int> per(10, 0);
  for (int l : a.labels) ++per[static_cast<std::size_t>(l)];
  for (int c : per) EXPECT_TRUE(c == 20 || c == 21);
  for (const auto& img : a.images) {
    EXPECT_EQ(img.height, 16);
    EXPECT_EQ(img.channels, 3);
  }
  EXPECT_THROW(synth_dataset(10, 11, 16, 0), Error);
  EXPECT_THROW(synth_dataset(10, 10, 4, 0), Error);
}

// Per-image standardized pixels, so background level does not dominate.
std::vector<double> standardized(const Image& img) {
  std::vector<double> f(img.pixels.begin(), img.pixels.end());
  double m = 0.0, v = 0.0;
  for (double x : f) m += x;
  m /= static_cast<double>(f.size());
  for (double& x : f) x -= m, v += x * x;
  const double s = std::sqrt(v / static_cast<double>(f.size())) + 1e-9;
  for (double& x : f) x /= s;
  return f;
}

TEST(Synthetic, CleanClassesAreSeparable) {
  const auto tr = synth_dataset(500, 10, 16, 1, SynthConfig::clean());
  const auto te = synth_dataset(500, 10, 16, 2, SynthConfig::clean());
  const std::size_t dim = 16 * 16 * 3;
  std::vector<std::vector<double>> centroid(10, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto f = standardized(tr.images[i]);
    for (std::size_t j = 0; j < dim; ++j) centroid[static_cast<std::size_t>(tr.labels[i])][j] += f[j] / 50.0;
  }
  int correct = 0;
  for (std::size_t i = 0; i < te.size(); ++i) {
    const auto f = standardized(te.images[i]);
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < 10; ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < dim; ++j) dist += (f[j] - centroid[static_cast<std::size_t>(k)][j]) * (f[j] - centroid[static_cast<std::size_t>(k)][j]);
      if (dist < best_d) best_d = dist, best = k;
    }
    correct += best == te.labels[i];
  }
  EXPECT_GT(correct / 500.0, 0.8);
}

}  // namespace
}  // namespace awsaug
