#include "advkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace {

void accumulate(const Tensor& t, std::span<const Real> delta) {
  auto& g = t.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

Broadcast check_binary(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.numel() == 1) return Broadcast::kRightScalar;
  if (a.numel() == 1) return Broadcast::kLeftScalar;
  throw InvalidShape(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
}

// out[i] = f(a[ia], b[ib]); adjoint receives (da, db) partials per element.
template <typename Fwd, typename Dfa, typename Dfb>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd f, Dfa dfa, Dfb dfb) {
  const Broadcast mode = check_binary(a, b, name);
  const Shape out_shape = mode == Broadcast::kLeftScalar ? b.shape() : a.shape();
  Tensor out(out_shape);
  const auto ad = a.data();
  const auto bd = b.data();
  auto od = out.mutable_data();
  const bool a_scalar = mode == Broadcast::kLeftScalar;
  const bool b_scalar = mode == Broadcast::kRightScalar;
  for (std::size_t i = 0; i < od.size(); ++i) {
    od[i] = f(ad[a_scalar ? 0 : i], bd[b_scalar ? 0 : i]);
  }
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record(out, {a, b}, [a, b, a_scalar, b_scalar, dfa, dfb](std::span<const Real> go) mutable {
      const auto ad = a.data();
      const auto bd = b.data();
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (std::size_t i = 0; i < go.size(); ++i) {
          ga[a_scalar ? 0 : i] += go[i] * dfa(ad[a_scalar ? 0 : i], bd[b_scalar ? 0 : i]);
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (std::size_t i = 0; i < go.size(); ++i) {
          gb[b_scalar ? 0 : i] += go[i] * dfb(ad[a_scalar ? 0 : i], bd[b_scalar ? 0 : i]);
        }
      }
    });
  }
  return out;
}

// out[i] = f(x[i]); adjoint multiplies by df(x[i], out[i]).
template <typename Fwd, typename Df>
Tensor unary_op(const Tensor& x, Fwd f, Df df) {
  Tensor out(x.shape());
  const auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(xd[i]);
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x, out, df](std::span<const Real> go) mutable {
      const auto xd = x.data();
      const auto od = out.data();
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * df(xd[i], od[i]);
    });
  }
  return out;
}

Real sgn(Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw InvalidShape(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                       shape_str(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](Real x, Real y) { return x + y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real, Real y) { return y; },
      [](Real x, Real) { return x; });
}

Tensor add(const Tensor& a, Real b) {
  return unary_op(a, [b](Real x) { return x + b; }, [](Real, Real) { return Real(1); });
}

Tensor mul(const Tensor& a, Real b) {
  return unary_op(a, [b](Real x) { return x * b; }, [b](Real, Real) { return b; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](Real v) { return v > 0 ? v : Real(0); }, [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

Tensor sign(const Tensor& x) {
  return unary_op(x, sgn, [](Real, Real) { return Real(0); });
}

Tensor clamp(const Tensor& x, Real lo, Real hi) {
  if (lo > hi) throw InvalidArgument("clamp: lo > hi");
  return unary_op(
      x, [lo, hi](Real v) { return std::clamp(v, lo, hi); },
      [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? Real(1) : Real(0); });
}

Tensor abs(const Tensor& x) {
  return unary_op(x, [](Real v) { return std::abs(v); }, [](Real v, Real) { return sgn(v); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real(1) - y * y; });
}

Tensor sum(const Tensor& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x](std::span<const Real> go) mutable {
      auto& gx = x.grad_buffer();
      for (auto& g : gx) g += go[0];
    });
  }
  return out;
}

Tensor sum(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw InvalidArgument("sum: axis out of range for " + shape_str(x.shape()));
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  const auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      for (std::size_t i = 0; i < inner; ++i) od[o * inner + i] += xd[(o * len + k) * inner + i];
    }
  }
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x, outer, inner, len](std::span<const Real> go) mutable {
      auto& gx = x.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < len; ++k) {
          for (std::size_t i = 0; i < inner; ++i) gx[(o * len + k) * inner + i] += go[o * inner + i];
        }
      }
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw InvalidArgument("mean of empty tensor");
  return mul(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

Tensor l1_norm(const Tensor& x) { return sum(abs(x)); }

Tensor l2_norm(const Tensor& x) {
  Real ss = 0;
  for (Real v : x.data()) ss += v * v;
  const Real norm = std::sqrt(ss);
  Tensor out = Tensor::scalar(norm);
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x, norm](std::span<const Real> go) mutable {
      if (norm == 0) return;
      const auto xd = x.data();
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[0] * xd[i] / norm;
    });
  }
  return out;
}

Tensor linf_norm(const Tensor& x) {
  std::size_t best = 0;
  Real best_abs = 0;
  const auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    if (std::abs(xd[i]) > best_abs) {
      best_abs = std::abs(xd[i]);
      best = i;
    }
  }
  Tensor out = Tensor::scalar(best_abs);
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x, best](std::span<const Real> go) mutable {
      if (x.numel() == 0) return;
      x.grad_buffer()[best] += go[0] * sgn(x.data()[best]);
    });
  }
  return out;
}

Tensor pick(const Tensor& x, std::size_t flat_index) {
  if (flat_index >= x.numel()) {
    throw InvalidArgument("pick: index " + std::to_string(flat_index) + " out of range");
  }
  Tensor out = Tensor::scalar(x.data()[flat_index]);
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x, flat_index](std::span<const Real> go) mutable {
      x.grad_buffer()[flat_index] += go[0];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  Tensor out = x.reshaped_copy(std::move(shape));
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x](std::span<const Real> go) mutable { accumulate(x, go); });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  if (b.size(0) != k) {
    throw InvalidShape("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
  }
  Tensor out(Shape{m, n});
  const auto ad = a.data();
  const auto bd = b.data();
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = ad[i * k + p];
      if (av == 0) continue;
      for (std::size_t j = 0; j < n; ++j) od[i * n + j] += av * bd[p * n + j];
    }
  }
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record(out, {a, b}, [a, b, m, k, n](std::span<const Real> go) mutable {
      const auto ad = a.data();
      const auto bd = b.data();
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            Real acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bd[p * n + j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const Real av = ad[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * go[i * n + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.size(0), n = a.size(1);
  Tensor out(Shape{n, m});
  const auto ad = a.data();
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) od[j * m + i] = ad[i * n + j];
  }
  if (Tape* tape = recording_tape({&a})) {
    tape->record(out, {a}, [a, m, n](std::span<const Real> go) mutable {
      auto& ga = a.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw InvalidArgument("softmax: axis out of range for " + shape_str(x.shape()));
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Tensor out(s);
  const auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xd[base + k * inner]);
      Real total = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const Real e = std::exp(xd[base + k * inner] - mx);
        od[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) od[base + k * inner] /= total;
    }
  }
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x, out, outer, inner, len](std::span<const Real> go) mutable {
      const auto yd = out.data();
      auto& gx = x.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * len * inner + i;
          Real dot = 0;
          for (std::size_t k = 0; k < len; ++k) dot += go[base + k * inner] * yd[base + k * inner];
          for (std::size_t k = 0; k < len; ++k) {
            const std::size_t idx = base + k * inner;
            gx[idx] += yd[idx] * (go[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, oh, ow;
  std::size_t col_rows() const { return c * kh * kw; }
  std::size_t col_cols() const { return oh * ow; }
};

// Unfolds one image [C,H,W] into columns [C*kh*kw, oh*ow].
void im2col(const Real* img, const ConvGeometry& g, Real* col) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const std::size_t row = (ch * g.kh + ky) * g.kw + kx;
        Real* dst = col + row * g.col_cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) && ix < static_cast<long>(g.w);
            dst[oy * g.ow + ox] = inside ? img[(ch * g.h + iy) * g.w + ix] : Real(0);
          }
        }
      }
    }
  }
}

void col2im_add(const Real* col, const ConvGeometry& g, Real* img) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const std::size_t row = (ch * g.kh + ky) * g.kw + kx;
        const Real* src = col + row * g.col_cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            img[(ch * g.h + iy) * g.w + ix] += src[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (stride == 0) throw InvalidArgument("conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.n = input.size(0);
  g.c = input.size(1);
  g.h = input.size(2);
  g.w = input.size(3);
  g.f = kernel.size(0);
  g.kh = kernel.size(2);
  g.kw = kernel.size(3);
  g.stride = stride;
  g.pad = padding;
  if (kernel.size(1) != g.c) {
    throw InvalidShape("conv2d: input has " + std::to_string(g.c) + " channels, kernel expects " +
                       std::to_string(kernel.size(1)));
  }
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw InvalidShape("conv2d: kernel larger than padded input");
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;

  Tensor out(Shape{g.n, g.f, g.oh, g.ow});
  const std::size_t rows = g.col_rows(), cols = g.col_cols();
  std::vector<Real> col(rows * cols);
  const auto xd = input.data();
  const auto kd = kernel.data();
  auto od = out.mutable_data();
  for (std::size_t b = 0; b < g.n; ++b) {
    im2col(xd.data() + b * g.c * g.h * g.w, g, col.data());
    Real* ob = od.data() + b * g.f * cols;
    for (std::size_t f = 0; f < g.f; ++f) {
      Real* orow = ob + f * cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const Real kv = kd[f * rows + r];
        if (kv == 0) continue;
        const Real* crow = col.data() + r * cols;
        for (std::size_t p = 0; p < cols; ++p) orow[p] += kv * crow[p];
      }
    }
  }
  if (Tape* tape = recording_tape({&input, &kernel})) {
    tape->record(out, {input, kernel}, [input, kernel, g](std::span<const Real> go) mutable {
      const std::size_t rows = g.col_rows(), cols = g.col_cols();
      std::vector<Real> col(rows * cols);
      std::vector<Real> dcol(rows * cols);
      const auto xd = input.data();
      const auto kd = kernel.data();
      const bool want_x = input.requires_grad();
      const bool want_k = kernel.requires_grad();
      Real* gk = want_k ? kernel.grad_buffer().data() : nullptr;
      Real* gx = want_x ? input.grad_buffer().data() : nullptr;
      for (std::size_t b = 0; b < g.n; ++b) {
        const Real* gob = go.data() + b * g.f * cols;
        if (want_k) {
          im2col(xd.data() + b * g.c * g.h * g.w, g, col.data());
          for (std::size_t f = 0; f < g.f; ++f) {
            const Real* grow = gob + f * cols;
            for (std::size_t r = 0; r < rows; ++r) {
              const Real* crow = col.data() + r * cols;
              Real acc = 0;
              for (std::size_t p = 0; p < cols; ++p) acc += grow[p] * crow[p];
              gk[f * rows + r] += acc;
            }
          }
        }
        if (want_x) {
          std::fill(dcol.begin(), dcol.end(), Real(0));
          for (std::size_t f = 0; f < g.f; ++f) {
            const Real* grow = gob + f * cols;
            for (std::size_t r = 0; r < rows; ++r) {
              const Real kv = kd[f * rows + r];
              if (kv == 0) continue;
              Real* drow = dcol.data() + r * cols;
              for (std::size_t p = 0; p < cols; ++p) drow[p] += kv * grow[p];
            }
          }
          col2im_add(dcol.data(), g, gx + b * g.c * g.h * g.w);
        }
      }
    });
  }
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 4, "add_channel_bias");
  const std::size_t n = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
  if (bias.numel() != c) {
    throw InvalidShape("add_channel_bias: " + std::to_string(bias.numel()) + " biases for " +
                       std::to_string(c) + " channels");
  }
  Tensor out(x.shape());
  const auto xd = x.data();
  const auto bd = bias.data();
  auto od = out.mutable_data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) od[base + p] = xd[base + p] + bd[ch];
    }
  }
  if (Tape* tape = recording_tape({&x, &bias})) {
    tape->record(out, {x, bias}, [x, bias, n, c, hw](std::span<const Real> go) mutable {
      if (x.requires_grad()) accumulate(x, go);
      if (bias.requires_grad()) {
        auto& gb = bias.grad_buffer();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * hw;
            Real acc = 0;
            for (std::size_t p = 0; p < hw; ++p) acc += go[base + p];
            gb[ch] += acc;
          }
        }
      }
    });
  }
  return out;
}

Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride) {
  require_rank(x, 4, "max_pool2d");
  if (window == 0 || stride == 0) throw InvalidArgument("max_pool2d: window and stride must be >= 1");
  const std::size_t n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  if (window > h || window > w) throw InvalidShape("max_pool2d: window larger than input");
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor out(Shape{n, c, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  const auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const Real* src = xd.data() + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (oy * stride) * w + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = (oy * stride + ky) * w + ox * stride + kx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        od[o] = src[best];
        argmax[o] = plane * h * w + best;
      }
    }
  }
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x, argmax = std::move(argmax)](std::span<const Real> go) mutable {
      auto& gx = x.grad_buffer();
      for (std::size_t o = 0; o < go.size(); ++o) gx[argmax[o]] += go[o];
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = x.size(0), in = x.size(1), outf = weight.size(0);
  if (weight.size(1) != in) {
    throw InvalidShape("linear: input width " + std::to_string(in) + " vs weight " +
                       shape_str(weight.shape()));
  }
  if (bias.numel() != outf) throw InvalidShape("linear: bias size mismatch");
  Tensor out(Shape{n, outf});
  const auto xd = x.data();
  const auto wd = weight.data();
  const auto bd = bias.data();
  auto od = out.mutable_data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < outf; ++o) {
      Real acc = bd[o];
      for (std::size_t i = 0; i < in; ++i) acc += xd[b * in + i] * wd[o * in + i];
      od[b * outf + o] = acc;
    }
  }
  if (Tape* tape = recording_tape({&x, &weight, &bias})) {
    tape->record(out, {x, weight, bias}, [x, weight, bias, n, in, outf](std::span<const Real> go) mutable {
      const auto xd = x.data();
      const auto wd = weight.data();
      if (x.requires_grad()) {
        auto& gx = x.grad_buffer();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t o = 0; o < outf; ++o) {
            const Real g = go[b * outf + o];
            if (g == 0) continue;
            for (std::size_t i = 0; i < in; ++i) gx[b * in + i] += g * wd[o * in + i];
          }
        }
      }
      if (weight.requires_grad()) {
        auto& gw = weight.grad_buffer();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t o = 0; o < outf; ++o) {
            const Real g = go[b * outf + o];
            if (g == 0) continue;
            for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += g * xd[b * in + i];
          }
        }
      }
      if (bias.requires_grad()) {
        auto& gb = bias.grad_buffer();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t o = 0; o < outf; ++o) gb[o] += go[b * outf + o];
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.size(0), k = logits.size(1);
  if (labels.size() != n) throw InvalidShape("cross_entropy: label count differs from batch size");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw InvalidArgument("cross_entropy: label out of range");
  }
  const auto zd = logits.data();
  std::vector<Real> probs(n * k);
  double loss = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const Real* z = zd.data() + b * k;
    Real mx = *std::max_element(z, z + k);
    double total = 0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(z[j] - mx));
    const double log_total = std::log(total);
    for (std::size_t j = 0; j < k; ++j) {
      probs[b * k + j] = static_cast<Real>(std::exp(static_cast<double>(z[j] - mx) - log_total));
    }
    loss += log_total - static_cast<double>(z[labels[b]] - mx);
  }
  Tensor out = Tensor::scalar(static_cast<Real>(loss / static_cast<double>(n)));
  if (Tape* tape = recording_tape({&logits})) {
    std::vector<int> ys(labels.begin(), labels.end());
    tape->record(out, {logits}, [logits, probs = std::move(probs), ys = std::move(ys), n, k](std::span<const Real> go) mutable {
      auto& gz = logits.grad_buffer();
      const Real scale = go[0] / static_cast<Real>(n);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t j = 0; j < k; ++j) {
          const Real target = static_cast<std::size_t>(ys[b]) == j ? Real(1) : Real(0);
          gz[b * k + j] += scale * (probs[b * k + j] - target);
        }
      }
    });
  }
  return out;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  Real w1;  // weight of i1; i0 gets 1 - w1
};

// Half-pixel-centre sampling positions for one axis.
std::vector<Tap> bilinear_taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t d = 0; d < dst; ++d) {
    double pos = (static_cast<double>(d) + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const std::size_t i1 = std::min(i0 + 1, src - 1);
    taps[d] = Tap{i0, i1, static_cast<Real>(pos - static_cast<double>(i0))};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t height, std::size_t width) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw InvalidShape("bilinear_resize: expected [C,h,w] or [N,C,h,w], got " + shape_str(x.shape()));
  }
  if (height == 0 || width == 0) throw InvalidArgument("bilinear_resize: zero target dimension");
  const std::size_t h = x.shape()[x.rank() - 2], w = x.shape()[x.rank() - 1];
  if (h == 0 || w == 0) throw InvalidShape("bilinear_resize: empty source");
  const std::size_t planes = x.numel() / (h * w);
  Shape out_shape = x.shape();
  out_shape[x.rank() - 2] = height;
  out_shape[x.rank() - 1] = width;
  if (h == height && w == width) {
    Tensor out = x.clone();
    if (Tape* tape = recording_tape({&x})) {
      tape->record(out, {x}, [x](std::span<const Real> go) mutable { accumulate(x, go); });
    }
    return out;
  }
  const auto ty = bilinear_taps(h, height);
  const auto tx = bilinear_taps(w, width);
  Tensor out(out_shape);
  const auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* src = xd.data() + p * h * w;
    Real* dst = od.data() + p * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const Tap& a = ty[y];
      for (std::size_t xx = 0; xx < width; ++xx) {
        const Tap& b = tx[xx];
        const Real top = src[a.i0 * w + b.i0] * (1 - b.w1) + src[a.i0 * w + b.i1] * b.w1;
        const Real bot = src[a.i1 * w + b.i0] * (1 - b.w1) + src[a.i1 * w + b.i1] * b.w1;
        dst[y * width + xx] = top * (1 - a.w1) + bot * a.w1;
      }
    }
  }
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, {x}, [x, ty, tx, planes, h, w, height, width](std::span<const Real> go) mutable {
      auto& gx = x.grad_buffer();
      for (std::size_t p = 0; p < planes; ++p) {
        Real* src = gx.data() + p * h * w;
        const Real* g = go.data() + p * height * width;
        for (std::size_t y = 0; y < height; ++y) {
          const Tap& a = ty[y];
          for (std::size_t xx = 0; xx < width; ++xx) {
            const Tap& b = tx[xx];
            const Real v = g[y * width + xx];
            src[a.i0 * w + b.i0] += v * (1 - a.w1) * (1 - b.w1);
            src[a.i0 * w + b.i1] += v * (1 - a.w1) * b.w1;
            src[a.i1 * w + b.i0] += v * a.w1 * (1 - b.w1);
            src[a.i1 * w + b.i1] += v * a.w1 * b.w1;
          }
        }
      }
    });
  }
  return out;
}

Tensor bilinear_upsample(const Tensor& x, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw InvalidArgument("bilinear_upsample: zero target dimension");
  if (x.rank() < 2) throw InvalidShape("bilinear_upsample: rank too small");
  const std::size_t h = x.shape()[x.rank() - 2], w = x.shape()[x.rank() - 1];
  if (height < h || width < w) {
    throw InvalidArgument("bilinear_upsample: target smaller than source");
  }
  return bilinear_resize(x, height, width);
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
