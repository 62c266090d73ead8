#include "advkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "advkit/binary_io.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

ImageShape Dataset::image_shape() const {
  if (images.rank() != 4) throw InvalidShape("dataset images must be [N,C,H,W]");
  return ImageShape{images.size(1), images.size(2), images.size(3)};
}

Tensor Dataset::image(std::size_t i) const {
  if (i >= size()) throw InvalidArgument("image index " + std::to_string(i) + " out of range");
  const ImageShape s = image_shape();
  const auto src = images.data().subspan(i * s.numel(), s.numel());
  return Tensor(s.batch(1), std::vector<Real>(src.begin(), src.end()));
}

Dataset Dataset::subset(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw InvalidArgument("subset exceeds dataset size");
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = first + i;
  return select(idx);
}

Dataset Dataset::select(const std::vector<std::size_t>& indices) const {
  const ImageShape s = image_shape();
  Dataset out;
  out.num_classes = num_classes;
  std::vector<Real> pixels;
  pixels.reserve(indices.size() * s.numel());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("select: index out of range");
    const auto src = images.data().subspan(i * s.numel(), s.numel());
    pixels.insert(pixels.end(), src.begin(), src.end());
    out.labels.push_back(labels[i]);
  }
  out.images = Tensor(s.batch(indices.size()), std::move(pixels));
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4 || images.size(0) != labels.size()) {
    throw InvalidShape("dataset holds " + shape_str(images.shape()) + " images for " +
                       std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InvalidArgument("label " + std::to_string(y) + " outside [0," + std::to_string(num_classes) + ")");
    }
  }
  for (Real v : images.data()) {
    if (!(v >= 0 && v <= 1)) throw InvalidArgument("pixel value outside [0,1]");
  }
}

namespace {

std::ifstream open_binary(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw IoError("no such file: " + p.string());
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return in;
}

std::ofstream create_binary(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  return out;
}

unsigned char to_byte(Real v) {
  return static_cast<unsigned char>(std::lround(std::clamp<double>(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  auto img = open_binary(images);
  auto lab = open_binary(labels);
  const std::uint32_t img_magic = binio::get_u32_be(img);
  if (img_magic != 0x00000803) throw CorruptFile(images.string() + ": not an IDX3 u8 image file");
  const std::uint32_t lab_magic = binio::get_u32_be(lab);
  if (lab_magic != 0x00000801) throw CorruptFile(labels.string() + ": not an IDX1 u8 label file");
  const std::uint32_t n = binio::get_u32_be(img);
  const std::uint32_t h = binio::get_u32_be(img);
  const std::uint32_t w = binio::get_u32_be(img);
  const std::uint32_t nl = binio::get_u32_be(lab);
  if (n != nl) throw CorruptFile("IDX image count " + std::to_string(n) + " != label count " + std::to_string(nl));
  if (h == 0 || w == 0 || h > 4096 || w > 4096) throw CorruptFile("IDX: implausible image size");

  std::vector<unsigned char> raw(static_cast<std::size_t>(n) * h * w);
  if (!img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw CorruptFile(images.string() + ": truncated pixel data");
  }
  std::vector<unsigned char> raw_labels(n);
  if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), n)) {
    throw CorruptFile(labels.string() + ": truncated label data");
  }
  Dataset ds;
  std::vector<Real> pixels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) pixels[i] = static_cast<Real>(raw[i]) / Real(255);
  ds.images = Tensor(Shape{n, 1, h, w}, std::move(pixels));
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  return ds;
}

void save_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels) {
  const ImageShape s = ds.image_shape();
  if (s.channels != 1) throw InvalidShape("IDX stores single-channel images only");
  auto img = create_binary(images);
  binio::put_u32_be(img, 0x00000803);
  binio::put_u32_be(img, static_cast<std::uint32_t>(ds.size()));
  binio::put_u32_be(img, static_cast<std::uint32_t>(s.height));
  binio::put_u32_be(img, static_cast<std::uint32_t>(s.width));
  for (Real v : ds.images.data()) img.put(static_cast<char>(to_byte(v)));
  auto lab = create_binary(labels);
  binio::put_u32_be(lab, 0x00000801);
  binio::put_u32_be(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lab.put(static_cast<char>(y));
  if (!img || !lab) throw IoError("failed writing IDX files");
}

Dataset load_cifar10(const std::vector<std::filesystem::path>& batches) {
  constexpr std::size_t kPlane = 32 * 32;
  constexpr std::size_t kRecord = 1 + 3 * kPlane;
  Dataset ds;
  std::vector<Real> pixels;
  for (const auto& path : batches) {
    auto in = open_binary(path);
    const auto bytes = std::filesystem::file_size(path);
    if (bytes == 0 || bytes % kRecord != 0) {
      throw CorruptFile(path.string() + ": size " + std::to_string(bytes) + " is not a multiple of 3073");
    }
    std::vector<unsigned char> rec(kRecord);
    for (std::uintmax_t r = 0; r < bytes / kRecord; ++r) {
      if (!in.read(reinterpret_cast<char*>(rec.data()), kRecord)) throw CorruptFile(path.string() + ": truncated");
      if (rec[0] > 9) throw CorruptFile(path.string() + ": label " + std::to_string(rec[0]) + " out of range");
      ds.labels.push_back(rec[0]);
      for (std::size_t i = 1; i < kRecord; ++i) pixels.push_back(static_cast<Real>(rec[i]) / Real(255));
    }
  }
  if (ds.labels.empty()) throw InvalidArgument("no CIFAR-10 batches given");
  ds.images = Tensor(Shape{ds.labels.size(), 3, 32, 32}, std::move(pixels));
  ds.num_classes = 10;
  return ds;
}

void save_cifar10(const Dataset& ds, const std::filesystem::path& path) {
  const ImageShape s = ds.image_shape();
  if (s.channels != 3 || s.height != 32 || s.width != 32) throw InvalidShape("CIFAR-10 records are 3x32x32");
  auto out = create_binary(path);
  const auto px = ds.images.data();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.put(static_cast<char>(ds.labels[i]));
    for (std::size_t j = 0; j < s.numel(); ++j) out.put(static_cast<char>(to_byte(px[i * s.numel() + j])));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::filesystem::path idx_labels_path_for(const std::filesystem::path& images) {
  std::string name = images.filename().string();
  auto replace = [&](const std::string& from, const std::string& to) {
    const auto pos = name.find(from);
    if (pos != std::string::npos) name.replace(pos, from.size(), to);
  };
  replace("images", "labels");
  replace("idx3", "idx1");
  // neither marker present: keep the labels beside the images under a new name
  if (name == images.filename().string()) name += ".labels";
  return images.parent_path() / name;
}

// --- synthetic digits -------------------------------------------------------

namespace {

struct Pt {
  double x, y;
};
using Stroke = std::vector<Pt>;

Stroke arc(double cx, double cy, double rx, double ry, double from_deg, double to_deg) {
  Stroke s;
  const int steps = 16;
  for (int i = 0; i <= steps; ++i) {
    const double t = (from_deg + (to_deg - from_deg) * i / steps) * std::numbers::pi / 180.0;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

// Glyphs in a unit box, y pointing down.
std::vector<Stroke> glyph(int digit) {
  switch (digit) {
    case 0: return {arc(0.5, 0.5, 0.27, 0.4, 0, 360)};
    case 1: return {{{0.36, 0.24}, {0.52, 0.1}, {0.52, 0.9}}};
    case 2: return {arc(0.5, 0.32, 0.23, 0.21, 180, 390), {{0.7, 0.43}, {0.24, 0.9}, {0.8, 0.9}}};
    case 3: return {arc(0.48, 0.3, 0.21, 0.2, 200, 450), arc(0.48, 0.7, 0.23, 0.2, 270, 520)};
    case 4: return {{{0.66, 0.9}, {0.66, 0.1}, {0.2, 0.64}, {0.82, 0.64}}};
    case 5: return {{{0.74, 0.12}, {0.34, 0.12}, {0.32, 0.47}}, arc(0.48, 0.65, 0.24, 0.24, 228, 520)};
    case 6: return {{{0.68, 0.1}, {0.42, 0.33}, {0.3, 0.64}}, arc(0.5, 0.67, 0.2, 0.21, 0, 360)};
    case 7: return {{{0.22, 0.12}, {0.78, 0.12}, {0.42, 0.9}}};
    case 8: return {arc(0.5, 0.29, 0.18, 0.18, 0, 360), arc(0.5, 0.7, 0.22, 0.2, 0, 360)};
    case 9: return {arc(0.5, 0.33, 0.2, 0.21, 0, 360), {{0.7, 0.35}, {0.6, 0.9}}};
    default: throw InvalidArgument("digit out of range");
  }
}

double segment_distance(Pt p, Pt a, Pt b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

Dataset synthesize_digits(std::size_t count, std::uint64_t seed, const DigitStyle& style) {
  constexpr std::size_t kSide = 28;
  constexpr double kBox = 20.0;  // glyph box in pixels, centred like MNIST
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, style.noise);
  std::uniform_real_distribution<double> ink_dist(style.ink_min, style.ink_max);

  Dataset ds;
  ds.num_classes = 10;
  std::vector<Real> pixels(count * kSide * kSide, Real(0));
  ds.labels.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    const int digit = static_cast<int>(n % 10);
    ds.labels[n] = digit;
    const double angle = u(rng) * 12.0 * std::numbers::pi / 180.0;
    const double sx = 1.0 + 0.1 * u(rng) - 0.05, sy = 1.0 + 0.1 * u(rng) - 0.05;
    const double shear = 0.15 * u(rng);
    const double tx = 1.5 * u(rng), ty = 1.5 * u(rng);
    const double half_width = style.half_width + style.width_jitter * u(rng);
    const double ink = ink_dist(rng);
    const double ca = std::cos(angle), sa = std::sin(angle);

    std::vector<Stroke> strokes = glyph(digit);
    for (auto& s : strokes) {
      for (auto& p : s) {
        const double gx = (p.x - 0.5 + 0.025 * u(rng)) * sx;
        const double gy = (p.y - 0.5 + 0.025 * u(rng)) * sy;
        const double hx = gx + shear * gy;
        const double rx = ca * hx - sa * gy, ry = sa * hx + ca * gy;
        p = {kSide / 2.0 + kBox * rx + tx, kSide / 2.0 + kBox * ry + ty};
      }
    }
    Real* img = pixels.data() + n * kSide * kSide;
    for (std::size_t y = 0; y < kSide; ++y) {
      for (std::size_t x = 0; x < kSide; ++x) {
        const Pt p{x + 0.5, y + 0.5};
        double d = 1e9;
        for (const auto& s : strokes) {
          for (std::size_t i = 0; i + 1 < s.size(); ++i) d = std::min(d, segment_distance(p, s[i], s[i + 1]));
        }
        double v = std::clamp(half_width + 0.5 - d, 0.0, 1.0) * ink;
        if (v > 0) v += noise(rng);
        img[y * kSide + x] = static_cast<Real>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  ds.images = Tensor(Shape{count, 1, kSide, kSide}, std::move(pixels));
  return ds;
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
