#pragma once

// Independent reference implementations in plain double loops. Nothing here
// touches the library, so agreement with it is a real cross-check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline Vec softmax(const Vec& z) {
  const double m = *std::max_element(z.begin(), z.end());
  Vec out(z.size());
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) s += out[i] = std::exp(z[i] - m);
  for (double& v : out) v /= s;
  return out;
}

/// Half-pixel-centre bilinear sampling of one [h,w] plane at (H,W).
inline Vec bilinear(const Vec& src, std::size_t h, std::size_t w, std::size_t H, std::size_t W) {
  Vec out(H * W);
  for (std::size_t oy = 0; oy < H; ++oy) {
    for (std::size_t ox = 0; ox < W; ++ox) {
      double sy = (oy + 0.5) * static_cast<double>(h) / H - 0.5;
      double sx = (ox + 0.5) * static_cast<double>(w) / W - 0.5;
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const std::size_t y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = sy - y0, fx = sx - x0;
      out[oy * W + ox] = (1 - fy) * ((1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1]) +
                         fy * ((1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
    }
  }
  return out;
}

/// Channel attention, pixel attention and map for image [C][l] and upsampled
/// features [c][l]. Returns W_c (C*c row-major) and W_p (l).
struct Attention {
  Vec wc;
  Vec wp;
};

inline Attention attention(const Vec& image, std::size_t C, const Vec& fm, std::size_t c, std::size_t l) {
  Attention a;
  a.wc.resize(C * c);
  for (std::size_t i = 0; i < C; ++i) {
    Vec row(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t p = 0; p < l; ++p) row[j] += image[i * l + p] * fm[j * l + p];
    }
    const Vec s = softmax(row);
    for (std::size_t j = 0; j < c; ++j) a.wc[i * c + j] = s[j];
  }
  Vec col(l, 0.0);
  for (std::size_t p = 0; p < l; ++p) {
    for (std::size_t i = 0; i < C; ++i) {
      double wre = 0;
      for (std::size_t j = 0; j < c; ++j) wre += a.wc[i * c + j] * fm[j * l + p];
      col[p] += wre * image[i * l + p];
    }
  }
  a.wp = softmax(col);
  return a;
}

/// One step of the velocity recurrence g <- mu*g + (grad/||grad||_1) * w,
/// where w is a per-pixel weight broadcast over channels (empty = 1).
inline void momentum_step(Vec& g, double mu, const Vec& grad, const Vec& weight) {
  double l1 = 0;
  for (double v : grad) l1 += std::abs(v);
  const std::size_t plane = weight.empty() ? 1 : weight.size();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double w = weight.empty() ? 1.0 : weight[k % plane];
    g[k] = mu * g[k] + grad[k] / l1 * w;
  }
}

/// Distance from x to the hyperplane w.x + b = 0.
inline double hyperplane_distance(const Vec& w, double b, const Vec& x) {
  double dot = b, ww = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    dot += w[i] * x[i];
    ww += w[i] * w[i];
  }
  return std::abs(dot) / std::sqrt(ww);
}

inline double gaussian_weight(int dy, int dx, double sigma) {
  return std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
}

}  // namespace oracle
