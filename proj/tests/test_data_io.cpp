#include "deqbl/data_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace deqbl;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("deqbl_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  [[nodiscard]] const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void push_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

// Two 2x3 images, pixels 0..5 and 250..255 in row-major file order.
std::vector<std::uint8_t> idx_fixture() {
  std::vector<std::uint8_t> b;
  push_be32(b, 0x00000803);
  push_be32(b, 2);
  push_be32(b, 2);
  push_be32(b, 3);
  for (int i = 0; i < 6; ++i) b.push_back(static_cast<std::uint8_t>(i));
  for (int i = 0; i < 6; ++i) b.push_back(static_cast<std::uint8_t>(250 + i));
  return b;
}

}  // namespace

TEST(Normalization, Endpoints) {
  EXPECT_EQ(byte_to_unit(0), -1.0);
  EXPECT_EQ(byte_to_unit(255), 1.0);
  EXPECT_NEAR(byte_to_unit(128), 2.0 * 128 / 255 - 1, 1e-15);
  EXPECT_NEAR(byte_to_unit(128), 0.00392, 1e-5);
}

TEST(Normalization, RoundTripOnAllBytes) {
  for (int b = 0; b < 256; ++b) EXPECT_EQ(unit_to_byte(byte_to_unit(static_cast<std::uint8_t>(b))), b);
}

TEST(Idx, ParsesFixture) {
  TempDir dir;
  write_bytes(dir.path() / "img.idx", idx_fixture());
  const Dataset ds = load_mnist_idx(dir.path() / "img.idx");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.rows, 2);
  EXPECT_EQ(ds.cols, 3);
  EXPECT_EQ(ds.images[0].at(0, 0), -1.0);
  EXPECT_EQ(ds.images[0].at(0, 2), byte_to_unit(2));
  EXPECT_EQ(ds.images[0].at(1, 0), byte_to_unit(3));
  EXPECT_EQ(ds.images[1].at(1, 2), 1.0);
  EXPECT_EQ(load_mnist_idx(dir.path() / "img.idx", std::nullopt, 1).size(), 1u);
}

TEST(Idx, DistinctErrors) {
  TempDir dir;
  auto kind_of = [&](const std::vector<std::uint8_t>& b) {
    write_bytes(dir.path() / "x.idx", b);
    try {
      load_mnist_idx(dir.path() / "x.idx");
    } catch (const IdxError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  auto bad = idx_fixture();
  bad[3] = 0x01;
  EXPECT_EQ(kind_of(bad), static_cast<int>(IdxError::Kind::bad_magic));
  auto trunc = idx_fixture();
  trunc.pop_back();
  EXPECT_EQ(kind_of(trunc), static_cast<int>(IdxError::Kind::truncated));
  auto longer = idx_fixture();
  longer.push_back(0);
  EXPECT_EQ(kind_of(longer), static_cast<int>(IdxError::Kind::dimension_mismatch));
  EXPECT_EQ(kind_of({0, 0}), static_cast<int>(IdxError::Kind::truncated));
  EXPECT_THROW(load_mnist_idx(dir.path() / "missing.idx"), IdxError);
}

TEST(Idx, LabelCountChecked) {
  TempDir dir;
  write_bytes(dir.path() / "img.idx", idx_fixture());
  std::vector<std::uint8_t> labels;
  push_be32(labels, 0x00000801);
  push_be32(labels, 3);
  labels.insert(labels.end(), {1, 2, 3});
  write_bytes(dir.path() / "lab.idx", labels);
  EXPECT_THROW(load_mnist_idx(dir.path() / "img.idx", dir.path() / "lab.idx"), IdxError);
}

TEST(ImageDir, LuminanceAndSkipping) {
  TempDir dir;
  {
    std::ofstream red(dir.path() / "a.ppm", std::ios::binary);
    red << "P6\n2 1\n255\n";
    const unsigned char px[] = {255, 0, 0, 255, 255, 255};
    red.write(reinterpret_cast<const char*>(px), 6);
  }
  {
    std::ofstream bad(dir.path() / "b.pgm");
    bad << "P5\n2 1\n255\n";  // no pixel bytes
  }
  {
    std::ofstream other(dir.path() / "c.pgm");
    other << "P2\n3 1\n255\n0 0 0\n";  // different shape
  }
  std::vector<std::string> warnings;
  const Dataset ds = load_image_dir(dir.path(), [&](const std::string& m) { warnings.push_back(m); });
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_NEAR(ds.images[0].at(0, 0), 2 * 0.299 - 1, 1e-12);
  EXPECT_NEAR(ds.images[0].at(0, 0), -0.402, 1e-12);
  EXPECT_EQ(ds.images[0].at(0, 1), 1.0);
  EXPECT_EQ(warnings.size(), 2u);
}

TEST(ImageDir, EmptyIsError) {
  TempDir dir;
  EXPECT_THROW(load_image_dir(dir.path(), [](const std::string&) {}), std::runtime_error);
}

TEST(SaveImage, RoundTripWithinQuantization) {
  TempDir dir;
  ImageSignal img(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) img.at(r, c) = -1.0 + 0.13 * (r * 4 + c);
  save_image(img, dir.path() / "x.pgm");
  const ImageSignal back = read_pnm(dir.path() / "x.pgm");
  EXPECT_LE((back.data - img.data).cwiseAbs().maxCoeff(), 1.0 / 255.0);
  EXPECT_THROW(save_image(img, dir.path() / "no" / "such" / "dir.pgm"), std::runtime_error);
}

TEST(SaveImage, GridLayout) {
  ImageSignal a(Vector::Constant(4, 1.0), 2, 2);
  ImageSignal b(Vector::Constant(4, -1.0), 2, 2);
  const ImageSignal g = tile_grid({{a, b}, {b}});
  EXPECT_EQ(g.rows, 5);
  EXPECT_EQ(g.cols, 5);
  EXPECT_EQ(g.at(0, 0), 1.0);
  EXPECT_EQ(g.at(0, 3), -1.0);
  EXPECT_EQ(g.at(2, 2), 0.0);
  EXPECT_EQ(g.at(3, 0), -1.0);
}

TEST(Synthetic, DeterministicAndInRange) {
  const Dataset a = synth_dataset(0, 16, 16, 16);
  const Dataset b = synth_dataset(0, 16, 16, 16);
  ASSERT_EQ(a.size(), 16u);
  double lo = 1, hi = -1;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.images[i].data, b.images[i].data);
    lo = std::min(lo, a.images[i].data.minCoeff());
    hi = std::max(hi, a.images[i].data.maxCoeff());
  }
  EXPECT_LE(lo, -0.9);
  EXPECT_GE(hi, 0.9);
  EXPECT_GE(lo, -1.0);
  EXPECT_LE(hi, 1.0);
  EXPECT_NE(synth_dataset(1, 1, 16, 16).images[0].data, a.images[0].data);
  // prefix stability: image i depends only on (seed, i, shape)
  EXPECT_EQ(synth_dataset(0, 3, 16, 16).images[2].data, a.images[2].data);
}

TEST(Synthetic, Errors) {
  EXPECT_THROW(synth_dataset(0, 0, 16, 16), std::invalid_argument);
  EXPECT_THROW(synth_dataset(0, 1, 3, 16), std::invalid_argument);
}

TEST(Dataset, Split) {
  const Dataset d = synth_dataset(3, 5, 8, 8);
  const auto [tr, te] = d.split(3, 2);
  EXPECT_EQ(tr.size(), 3u);
  EXPECT_EQ(te.images[0].data, d.images[3].data);
  EXPECT_THROW(d.split(4, 2), std::invalid_argument);
}

TEST(KernelImages, ScaledAndReplicated) {
  ConvKernelBank bank(2, 3, 3);
  bank.at(0, 0, 0) = 2.0;
  bank.at(1, -1, 1) = -4.0;
  const auto imgs = kernel_images(bank, 6);
  ASSERT_EQ(imgs.size(), 2u);
  EXPECT_EQ(imgs[0].rows, 6);
  EXPECT_EQ(imgs[0].at(2, 3), 0.5);
  EXPECT_EQ(imgs[0].at(3, 2), 0.5);
  EXPECT_EQ(imgs[1].at(0, 5), -1.0);
  EXPECT_EQ(imgs[1].at(5, 0), 0.0);
}
