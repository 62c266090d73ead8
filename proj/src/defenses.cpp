#include "advkit/defenses.hpp"

#include <algorithm>
#include <cmath>

#include "advkit/errors.hpp"
#include "advkit/ops.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace {

// Half-sample symmetric reflection: -1 -> 0, n -> n-1.
std::size_t mirror(long i, std::size_t n) {
  const long len = static_cast<long>(n);
  const long period = 2 * len;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < len ? i : period - 1 - i);
}

void check_image(const Tensor& x, const char* what) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw InvalidShape(std::string(what) + " expects [C,H,W] or [N,C,H,W], got " + shape_str(x.shape()));
  }
}

}  // namespace

std::string defense_name(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kGaussianBlur: return "blur";
    case DefenseKind::kInputTransform: return "transform";
  }
  return "?";
}

DefenseKind parse_defense(const std::string& name) {
  if (name == "none") return DefenseKind::kNone;
  if (name == "blur" || name == "gaussian-blur" || name == "gaussian_blur") return DefenseKind::kGaussianBlur;
  if (name == "transform" || name == "input-transform" || name == "input_transform") {
    return DefenseKind::kInputTransform;
  }
  throw InvalidArgument("unknown defense \"" + name + "\"");
}

void DefenseConfig::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw InvalidArgument("kernel size must be odd and positive, got " + std::to_string(kernel_size));
  }
  if (!(sigma > 0)) throw InvalidArgument("sigma must be positive");
  if (!(transform_scale >= 1)) throw InvalidArgument("transform scale must be >= 1");
  if (quantization_levels < 2) throw InvalidArgument("need at least two quantization levels");
}

std::vector<double> gaussian_kernel_1d(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw InvalidArgument("kernel size must be odd and positive");
  if (!(sigma > 0)) throw InvalidArgument("sigma must be positive");
  const int r = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size));
  double total = 0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<std::size_t>(i + r)] = std::exp(-(i * i) / (2 * sigma * sigma));
    total += k[static_cast<std::size_t>(i + r)];
  }
  for (double& v : k) v /= total;
  return k;
}

std::vector<double> gaussian_kernel_2d(int size, double sigma) {
  const auto k = gaussian_kernel_1d(size, sigma);
  std::vector<double> out;
  out.reserve(k.size() * k.size());
  for (double a : k) {
    for (double b : k) out.push_back(a * b);
  }
  return out;
}

Tensor gaussian_blur(const Tensor& x, double sigma, int kernel_size) {
  check_image(x, "gaussian_blur");
  const auto k = gaussian_kernel_1d(kernel_size, sigma);
  const long r = kernel_size / 2;
  const std::size_t h = x.size(x.rank() - 2), w = x.size(x.rank() - 1);
  const std::size_t planes = x.numel() / (h * w);
  std::vector<double> tmp(h * w);
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* in = src.data() + p * h * w;
    Real* o = dst.data() + p * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double acc = 0;
        for (long t = -r; t <= r; ++t) acc += k[t + r] * in[i * w + mirror(static_cast<long>(j) + t, w)];
        tmp[i * w + j] = acc;
      }
    }
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double acc = 0;
        for (long t = -r; t <= r; ++t) acc += k[t + r] * tmp[mirror(static_cast<long>(i) + t, h) * w + j];
        o[i * w + j] = static_cast<Real>(acc);
      }
    }
  }
  return out;
}

Tensor input_transform(const Tensor& x, double scale, int levels) {
  check_image(x, "input_transform");
  if (!(scale >= 1)) throw InvalidArgument("transform scale must be >= 1");
  if (levels < 2) throw InvalidArgument("need at least two quantization levels");
  const std::size_t h = x.size(x.rank() - 2), w = x.size(x.rank() - 1);
  const auto shrink = [scale](std::size_t n) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(n) / scale)));
  };
  Tensor y = bilinear_resize(bilinear_resize(x, shrink(h), shrink(w)), h, w);
  const double q = levels - 1;
  for (Real& v : y.mutable_data()) {
    v = static_cast<Real>(std::round(std::clamp(static_cast<double>(v), 0.0, 1.0) * q) / q);
  }
  return y;
}

Tensor apply_defense(const Tensor& x, const DefenseConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case DefenseKind::kNone: return x.clone();
    case DefenseKind::kGaussianBlur: return gaussian_blur(x, cfg.sigma, cfg.kernel_size);
    case DefenseKind::kInputTransform: return input_transform(x, cfg.transform_scale, cfg.quantization_levels);
  }
  throw InvalidArgument("unknown defense kind");
}

Tensor defended_forward(const Model& model, const DefenseConfig& cfg, const Tensor& x) {
  Tensor filtered = apply_defense(x, cfg);
  return model.forward(filtered).logits;
}

std::vector<int> defended_predict(const Model& model, const DefenseConfig& cfg, const Tensor& x) {
  return model.predict(apply_defense(x, cfg));
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
