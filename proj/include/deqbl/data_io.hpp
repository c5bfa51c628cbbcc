#pragma once

// Dataset ingestion (MNIST IDX, PGM/PPM directories, synthetic images) and
// binary PGM output. Pixel bytes map linearly onto [-1, 1].

#include "deqbl/linops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace deqbl {

struct Dataset {
  std::vector<ImageSignal> images;
  int rows = 0;
  int cols = 0;
  std::string source;

  [[nodiscard]] std::size_t size() const { return images.size(); }
  [[nodiscard]] bool empty() const { return images.empty(); }

  // Splits off the first `train` images; the next `test` become the second half.
  [[nodiscard]] std::pair<Dataset, Dataset> split(std::size_t train, std::size_t test) const {
    if (train + test > images.size()) throw std::invalid_argument("Dataset::split: not enough images");
    Dataset a{{images.begin(), images.begin() + static_cast<std::ptrdiff_t>(train)}, rows, cols, source + ":train"};
    Dataset b{{images.begin() + static_cast<std::ptrdiff_t>(train),
               images.begin() + static_cast<std::ptrdiff_t>(train + test)},
              rows,
              cols,
              source + ":test"};
    return {std::move(a), std::move(b)};
  }
};

inline double byte_to_unit(std::uint8_t b) { return 2.0 * b / 255.0 - 1.0; }

inline std::uint8_t unit_to_byte(double v) {
  const double c = std::clamp(v, -1.0, 1.0);
  return static_cast<std::uint8_t>(std::lround((c + 1.0) * 127.5));
}

class IdxError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, truncated, dimension_mismatch, io };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

struct IdxHeader {
  std::vector<std::uint32_t> dims;
  std::size_t data_offset = 0;
  std::size_t count = 1;
};

inline IdxHeader parse_idx_header(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_magic,
                                  const std::string& name) {
  if (bytes.size() < 4) throw IdxError(IdxError::Kind::truncated, name + ": file shorter than the IDX magic");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected_magic) {
    std::ostringstream os;
    os << name << ": bad IDX magic 0x" << std::hex << magic << " (expected 0x" << expected_magic << ")";
    throw IdxError(IdxError::Kind::bad_magic, os.str());
  }
  IdxHeader h;
  const std::size_t ndims = magic & 0xffu;
  h.data_offset = 4 + 4 * ndims;
  if (bytes.size() < h.data_offset) throw IdxError(IdxError::Kind::truncated, name + ": truncated IDX header");
  for (std::size_t d = 0; d < ndims; ++d) {
    h.dims.push_back(read_be32(bytes, 4 + 4 * d));
    h.count *= h.dims.back();
  }
  const std::size_t payload = bytes.size() - h.data_offset;
  if (payload < h.count) throw IdxError(IdxError::Kind::truncated, name + ": file shorter than declared dimensions");
  if (payload > h.count)
    throw IdxError(IdxError::Kind::dimension_mismatch, name + ": file longer than declared dimensions");
  return h;
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Parses an IDX3 ubyte image file. Labels, when given, are validated for a
// matching count and otherwise ignored. limit = 0 loads everything.
inline Dataset load_mnist_idx(const std::filesystem::path& images_path,
                              const std::optional<std::filesystem::path>& labels_path = std::nullopt,
                              std::size_t limit = 0) {
  const auto bytes = detail::read_bytes(images_path);
  const auto h = detail::parse_idx_header(bytes, kIdxImageMagic, images_path.string());
  const std::size_t count = h.dims[0];
  const int rows = static_cast<int>(h.dims[1]);
  const int cols = static_cast<int>(h.dims[2]);
  if (rows <= 0 || cols <= 0)
    throw IdxError(IdxError::Kind::dimension_mismatch, images_path.string() + ": zero image size");
  if (labels_path) {
    const auto lb = detail::read_bytes(*labels_path);
    const auto lh = detail::parse_idx_header(lb, kIdxLabelMagic, labels_path->string());
    if (lh.dims[0] != count)
      throw IdxError(IdxError::Kind::dimension_mismatch, "label count does not match image count");
  }
  const std::size_t take = limit == 0 ? count : std::min(limit, count);
  Dataset ds;
  ds.rows = rows;
  ds.cols = cols;
  ds.source = "mnist:" + images_path.string();
  ds.images.reserve(take);
  const std::size_t per = static_cast<std::size_t>(rows) * cols;
  for (std::size_t i = 0; i < take; ++i) {
    ImageSignal img(rows, cols);
    const std::uint8_t* px = bytes.data() + h.data_offset + i * per;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) img.at(r, c) = byte_to_unit(px[static_cast<std::size_t>(r) * cols + c]);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

namespace detail {

inline std::string next_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace detail

// Reads P2/P5 graymaps and P3/P6 pixmaps (maxval <= 255). Colour pixels are
// reduced with luminance weights 0.299 / 0.587 / 0.114.
inline ImageSignal read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string magic = detail::next_token(in);
  if (magic != "P2" && magic != "P5" && magic != "P3" && magic != "P6")
    throw std::runtime_error(path.string() + ": not a PGM/PPM file");
  const int cols = std::stoi(detail::next_token(in));
  const int rows = std::stoi(detail::next_token(in));
  const int maxval = std::stoi(detail::next_token(in));
  if (rows <= 0 || cols <= 0 || maxval <= 0 || maxval > 255)
    throw std::runtime_error(path.string() + ": unsupported PNM header");
  const bool color = magic == "P3" || magic == "P6";
  const bool binary = magic == "P5" || magic == "P6";
  const int channels = color ? 3 : 1;
  std::vector<double> px(static_cast<std::size_t>(rows) * cols * channels);
  if (binary) {
    std::vector<char> raw(px.size());
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw std::runtime_error(path.string() + ": truncated");
    for (std::size_t i = 0; i < raw.size(); ++i) px[i] = static_cast<unsigned char>(raw[i]);
  } else {
    for (auto& v : px) {
      const std::string t = detail::next_token(in);
      if (t.empty()) throw std::runtime_error(path.string() + ": truncated");
      v = std::stod(t);
    }
  }
  ImageSignal img(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = (static_cast<std::size_t>(r) * cols + c) * channels;
      const double gray = color ? 0.299 * px[i] + 0.587 * px[i + 1] + 0.114 * px[i + 2] : px[i];
      img.at(r, c) = 2.0 * gray / maxval - 1.0;
    }
  }
  return img;
}

using WarningSink = std::function<void(const std::string&)>;

inline void default_warning(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// Loads every readable .pgm/.ppm/.pnm file (sorted by name). Unreadable
// files and files whose shape differs from the first image are skipped.
inline Dataset load_image_dir(const std::filesystem::path& dir, const WarningSink& warn = default_warning) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Dataset ds;
  ds.source = "dir:" + dir.string();
  for (const auto& f : files) {
    const auto ext = f.extension().string();
    if (ext != ".pgm" && ext != ".ppm" && ext != ".pnm") continue;
    try {
      ImageSignal img = read_pnm(f);
      if (!ds.images.empty() && (img.rows != ds.rows || img.cols != ds.cols)) {
        warn("skipping " + f.string() + ": shape differs from first image");
        continue;
      }
      ds.rows = img.rows;
      ds.cols = img.cols;
      ds.images.push_back(std::move(img));
    } catch (const std::exception& ex) {
      warn("skipping " + f.string() + ": " + ex.what());
    }
  }
  if (ds.images.empty()) throw std::runtime_error("no readable images in " + dir.string());
  return ds;
}

// MNIST-like stand-in: dark background, bright bars and soft blobs placed
// around the image center, clipped to [-1, 1]. Image i depends only on
// (seed, i, rows, cols).
inline Dataset synth_dataset(std::uint64_t seed, std::size_t count, int rows, int cols) {
  if (count == 0) throw std::invalid_argument("synth_dataset: count must be positive");
  if (rows < 4 || cols < 4) throw std::invalid_argument("synth_dataset: images must be at least 4x4");
  Dataset ds;
  ds.rows = rows;
  ds.cols = cols;
  ds.source = "synthetic:" + std::to_string(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL * (i + 1));
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    Matrix acc = Matrix::Zero(rows, cols);
    const int rects = 1 + static_cast<int>(rng() % 2);
    for (int k = 0; k < rects; ++k) {
      const bool vertical = rng() % 2 == 0;
      const int len = static_cast<int>(uni(0.3, 0.55) * (vertical ? rows : cols));
      const int thick = std::max(1, static_cast<int>(uni(0.1, 0.2) * (vertical ? cols : rows)));
      const int h = vertical ? len : thick;
      const int w = vertical ? thick : len;
      const int r0 = static_cast<int>(uni(0.2 * rows, std::max(0.2 * rows + 1, 0.85 * rows - h)));
      const int c0 = static_cast<int>(uni(0.15 * cols, std::max(0.15 * cols + 1, 0.85 * cols - w)));
      const double amp = uni(1.6, 2.0);
      acc.block(std::clamp(r0, 0, rows - 1), std::clamp(c0, 0, cols - 1), std::min(h, rows - std::clamp(r0, 0, rows - 1)),
                std::min(w, cols - std::clamp(c0, 0, cols - 1)))
          .array() += amp;
    }
    const int blobs = 1 + static_cast<int>(rng() % 2);
    for (int k = 0; k < blobs; ++k) {
      const double cr = uni(0.35, 0.75) * rows;
      const double cc = uni(0.25, 0.75) * cols;
      const double s = uni(0.06, 0.15) * std::min(rows, cols);
      const double amp = uni(1.5, 2.2);
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) {
          const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
          acc(r, c) += amp * std::exp(-d2 / (2.0 * s * s));
        }
    }
    ImageSignal img(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) img.at(r, c) = std::clamp(-1.0 + acc(r, c), -1.0, 1.0);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

// Binary PGM (P5, maxval 255) of the clamped image.
inline void save_image(const ImageSignal& u, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << u.cols << ' ' << u.rows << "\n255\n";
  for (int r = 0; r < u.rows; ++r)
    for (int c = 0; c < u.cols; ++c) out.put(static_cast<char>(unit_to_byte(u.at(r, c))));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Tiles rows of equally shaped images with a one-pixel mid-gray gutter.
inline ImageSignal tile_grid(const std::vector<std::vector<ImageSignal>>& grid) {
  if (grid.empty() || grid.front().empty()) throw std::invalid_argument("tile_grid: empty grid");
  const int h = grid.front().front().rows;
  const int w = grid.front().front().cols;
  std::size_t ncols = 0;
  for (const auto& row : grid) ncols = std::max(ncols, row.size());
  const int rows = static_cast<int>(grid.size()) * (h + 1) - 1;
  const int cols = static_cast<int>(ncols) * (w + 1) - 1;
  ImageSignal out(Vector::Zero(static_cast<Eigen::Index>(rows) * cols), rows, cols);
  for (std::size_t gr = 0; gr < grid.size(); ++gr)
    for (std::size_t gc = 0; gc < grid[gr].size(); ++gc) {
      const auto& img = grid[gr][gc];
      if (img.rows != h || img.cols != w) throw std::invalid_argument("tile_grid: images differ in shape");
      for (int c = 0; c < w; ++c)
        for (int r = 0; r < h; ++r)
          out.at(static_cast<int>(gr) * (h + 1) + r, static_cast<int>(gc) * (w + 1) + c) = img.at(r, c);
    }
  return out;
}

inline void save_image_grid(const std::vector<std::vector<ImageSignal>>& grid, const std::filesystem::path& path) {
  save_image(tile_grid(grid), path);
}

// One image per kernel of the bank, scaled by the bank's largest magnitude
// so that zero maps to mid-gray. Kernels with fewer rows than min_size are
// upsampled by pixel replication to stay visible.
inline std::vector<ImageSignal> kernel_images(const ConvKernelBank& bank, int min_size = 15) {
  const double scale = std::max(bank.weights.cwiseAbs().maxCoeff(), 1e-300);
  const int rep = std::max(1, (min_size + bank.kh - 1) / bank.kh);
  std::vector<ImageSignal> out;
  for (int ch = 0; ch < bank.channels; ++ch) {
    const Matrix k = bank.kernel(ch) / scale;
    ImageSignal img(bank.kh * rep, bank.kw * rep);
    for (int c = 0; c < img.cols; ++c)
      for (int r = 0; r < img.rows; ++r) img.at(r, c) = k(r / rep, c / rep);
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace deqbl
