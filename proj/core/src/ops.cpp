// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numbers>
#include <string>

#include "mop/error.hpp"
#include "mop/tape.hpp"

namespace mop {

namespace {

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

Tensor finish(Shape shape, std::vector<double> data, const char* op) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
  return Tensor(std::move(shape), std::move(data));
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (GradTape::current() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void attach(Tensor& out, GradTape::BackwardFn fn) {
  out.set_requires_grad(true);
  GradTape::current()->record(out, std::move(fn));
}

std::span<double> gbuf(const ImplPtr& p) { return detail::grad_buffer(*p); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(x.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolution and normalisation

Tensor grouped_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv2dOptions& opt) {
  if (input.rank() != 3) throw ShapeError("grouped_conv2d: input must be HxWxC, got " + to_string(input.shape()));
  if (kernel.rank() != 5) throw ShapeError("grouped_conv2d: kernel must be [G,kh,kw,cin/G,cout/G]");
  const std::size_t groups = opt.groups;
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  if (groups == 0 || cin % groups != 0) {
    throw ShapeError("grouped_conv2d: " + std::to_string(cin) + " input channels not divisible by " +
                     std::to_string(groups) + " groups");
  }
  if (kernel.dim(0) != groups) throw ShapeError("grouped_conv2d: kernel group extent does not match groups");
  const std::size_t kh = kernel.dim(1), kw = kernel.dim(2), cig = kernel.dim(3), cog = kernel.dim(4);
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("grouped_conv2d: kernel spatial extent must be odd");
  if (cig * groups != cin) throw ShapeError("grouped_conv2d: kernel input channels do not match input");
  const std::size_t cout = cog * groups;
  if (bias.defined() && bias.size() != cout) throw ShapeError("grouped_conv2d: bias length must equal output channels");
  if (opt.stride == 0) throw ShapeError("grouped_conv2d: stride must be positive");
  if (h + 2 * opt.padding < kh || w + 2 * opt.padding < kw) throw ShapeError("grouped_conv2d: kernel larger than input");

  const std::size_t stride = opt.stride, pad = opt.padding;
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;

  std::vector<double> out(oh * ow * cout, 0.0);
  const double* in = input.data().data();
  const double* k = kernel.data().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* o = out.data() + (oy * ow + ox) * cout;
      if (bias.defined()) std::copy(bias.data().begin(), bias.data().end(), o);
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* px = in + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          for (std::size_t g = 0; g < groups; ++g) {
            double* og = o + g * cog;
            const double* kg = k + ((g * kh + ky) * kw + kx) * cig * cog;
            for (std::size_t i = 0; i < cig; ++i) {
              const double v = px[g * cig + i];
              const double* kr = kg + i * cog;
              for (std::size_t c = 0; c < cog; ++c) og[c] += v * kr[c];
            }
          }
        }
      }
    }
  }

  Tensor result = finish({oh, ow, cout}, std::move(out), "grouped_conv2d");
  if (tracking({&input, &kernel, &bias})) {
    ImplPtr xi = input.impl(), ki = kernel.impl();
    ImplPtr bi = bias.defined() ? bias.impl() : nullptr;
    attach(result, [=](std::span<const double> gout) {
      const bool want_x = xi->requires_grad, want_k = ki->requires_grad, want_b = bi && bi->requires_grad;
      double* gx = want_x ? gbuf(xi).data() : nullptr;
      double* gk = want_k ? gbuf(ki).data() : nullptr;
      if (want_b) {
        auto gb = gbuf(bi);
        for (std::size_t p = 0; p < oh * ow; ++p) {
          for (std::size_t c = 0; c < cout; ++c) gb[c] += gout[p * cout + c];
        }
      }
      if (!want_x && !want_k) return;
      const double* xin = xi->data.data();
      // Kernel with the two channel axes swapped, [G,kh,kw,cog,cig], so the
      // input-gradient update is an axpy over input channels.
      std::vector<double> kt;
      if (gx) {
        const auto& kk = ki->data;
        kt.resize(kk.size());
        for (std::size_t blk = 0; blk < groups * kh * kw; ++blk) {
          const double* src = kk.data() + blk * cig * cog;
          double* dst = kt.data() + blk * cig * cog;
          for (std::size_t i = 0; i < cig; ++i) {
            for (std::size_t c = 0; c < cog; ++c) dst[c * cig + i] = src[i * cog + c];
          }
        }
      }
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double* go = gout.data() + (oy * ow + ox) * cout;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t base = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
              for (std::size_t g = 0; g < groups; ++g) {
                const double* gog = go + g * cog;
                const std::size_t koff = ((g * kh + ky) * kw + kx) * cig * cog;
                const std::size_t xoff = base + g * cig;
                if (gx) {
                  double* gxr = gx + xoff;
                  const double* ktg = kt.data() + koff;
                  for (std::size_t c = 0; c < cog; ++c) {
                    const double gv = gog[c];
                    const double* kr = ktg + c * cig;
                    for (std::size_t i = 0; i < cig; ++i) gxr[i] += gv * kr[i];
                  }
                }
                if (gk) {
                  for (std::size_t i = 0; i < cig; ++i) {
                    const double v = xin[xoff + i];
                    double* gkr = gk + koff + i * cog;
                    for (std::size_t c = 0; c < cog; ++c) gkr[c] += v * gog[c];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor group_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, std::size_t groups, double eps) {
  if (input.rank() != 3) throw ShapeError("group_norm: input must be HxWxC");
  const std::size_t pixels = input.dim(0) * input.dim(1), ch = input.dim(2);
  if (groups == 0 || ch % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
  if (gamma.size() != ch || beta.size() != ch) throw ShapeError("group_norm: affine parameters must have C entries");
  const std::size_t cg = ch / groups;
  const double count = static_cast<double>(pixels * cg);

  const auto x = input.data();
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    double m = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t c = g * cg; c < (g + 1) * cg; ++c) m += x[p * ch + c];
    }
    m /= count;
    double var = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t c = g * cg; c < (g + 1) * cg; ++c) {
        const double d = x[p * ch + c] - m;
        var += d * d;
      }
    }
    var /= count;
    inv_std[g] = 1.0 / std::sqrt(var + eps);
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t c = g * cg; c < (g + 1) * cg; ++c) xhat[p * ch + c] = (x[p * ch + c] - m) * inv_std[g];
    }
  }
  std::vector<double> out(x.size());
  const auto ga = gamma.data(), be = beta.data();
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < ch; ++c) out[p * ch + c] = xhat[p * ch + c] * ga[c] + be[c];
  }

  Tensor result = finish(input.shape(), std::move(out), "group_norm");
  if (tracking({&input, &gamma, &beta})) {
    ImplPtr xi = input.impl(), gi = gamma.impl(), bi = beta.impl();
    attach(result, [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const double> gout) {
      if (gi->requires_grad || bi->requires_grad) {
        std::span<double> gg = gi->requires_grad ? gbuf(gi) : std::span<double>{};
        std::span<double> gb = bi->requires_grad ? gbuf(bi) : std::span<double>{};
        for (std::size_t p = 0; p < pixels; ++p) {
          for (std::size_t c = 0; c < ch; ++c) {
            if (!gg.empty()) gg[c] += gout[p * ch + c] * xhat[p * ch + c];
            if (!gb.empty()) gb[c] += gout[p * ch + c];
          }
        }
      }
      if (!xi->requires_grad) return;
      auto gx = gbuf(xi);
      const auto& ga = gi->data;
      for (std::size_t g = 0; g < groups; ++g) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) {
          for (std::size_t c = g * cg; c < (g + 1) * cg; ++c) {
            const double d = gout[p * ch + c] * ga[c];
            mean_d += d;
            mean_dx += d * xhat[p * ch + c];
          }
        }
        mean_d /= count;
        mean_dx /= count;
        for (std::size_t p = 0; p < pixels; ++p) {
          for (std::size_t c = g * cg; c < (g + 1) * cg; ++c) {
            const double d = gout[p * ch + c] * ga[c];
            gx[p * ch + c] += inv_std[g] * (d - mean_d - xhat[p * ch + c] * mean_dx);
          }
        }
      }
    });
  }
  return result;
}

Tensor gelu(const Tensor& x) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 0.5 * v[i] * (1.0 + std::erf(v[i] * std::numbers::sqrt2 / 2.0));
  Tensor result = finish(x.shape(), std::move(out), "gelu");
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [xi](std::span<const double> gout) {
      auto gx = gbuf(xi);
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double z = xi->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * z * z);
        gx[i] += gout[i] * (cdf + z * pdf);
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Softmax and elementwise

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("softmax: axis out of range for " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = v[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, v[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        out[base + j * inner] = std::exp(v[base + j * inner] - mx);
        z += out[base + j * inner];
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  Tensor result = finish(s, std::move(out), "softmax");
  if (tracking({&x})) {
    ImplPtr xi = x.impl(), yi = result.impl();
    attach(result, [=](std::span<const double> gout) {
      auto gx = gbuf(xi);
      const auto& y = yi->data;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += gout[base + j * inner] * y[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) gx[base + j * inner] += y[base + j * inner] * (gout[base + j * inner] - dot);
        }
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  Tensor result = finish(a.shape(), std::move(out), "add");
  if (tracking({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    attach(result, [ai, bi](std::span<const double> gout) {
      for (const ImplPtr& p : {ai, bi}) {
        if (!p->requires_grad) continue;
        auto g = gbuf(p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
      }
    });
  }
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  Tensor result = finish(a.shape(), std::move(out), "mul");
  if (tracking({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    attach(result, [ai, bi](std::span<const double> gout) {
      if (ai->requires_grad) {
        auto g = gbuf(ai);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        auto g = gbuf(bi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * ai->data[i];
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& x, double factor) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
  Tensor result = finish(x.shape(), std::move(out), "scale");
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [xi, factor](std::span<const double> gout) {
      auto g = gbuf(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * factor;
    });
  }
  return result;
}

Tensor log(const Tensor& x) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::log(v[i]);
  Tensor result = finish(x.shape(), std::move(out), "log");
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [xi](std::span<const double> gout) {
      auto g = gbuf(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] / xi->data[i];
    });
  }
  return result;
}

Tensor exp(const Tensor& x) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i]);
  Tensor result = finish(x.shape(), std::move(out), "exp");
  if (tracking({&x})) {
    ImplPtr xi = x.impl(), yi = result.impl();
    attach(result, [xi, yi](std::span<const double> gout) {
      auto g = gbuf(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * yi->data[i];
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor result = finish({}, {s}, "sum");
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [xi](std::span<const double> gout) {
      auto g = gbuf(xi);
      for (double& v : g) v += gout[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// Matrix ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: inner extents differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const double* x = a.data().data();
  const double* y = b.data().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double v = x[i * k + p];
      const double* yr = y + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += v * yr[j];
    }
  }
  Tensor result = finish({m, n}, std::move(out), "matmul");
  if (tracking({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    attach(result, [=](std::span<const double> gout) {
      if (ai->requires_grad) {
        auto g = gbuf(ai);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double* yr = bi->data.data() + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += gout[i * n + j] * yr[j];
            g[i * k + p] += acc;
          }
        }
      }
      if (bi->requires_grad) {
        auto g = gbuf(bi);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double v = ai->data[i * k + p];
            double* gr = g.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) gr[j] += v * gout[i * n + j];
          }
        }
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  }
  Tensor result = finish({n, m}, std::move(out), "transpose");
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [=](std::span<const double> gout) {
      auto g = gbuf(xi);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gout[j * m + i];
      }
    });
  }
  return result;
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_matrix(x, "add_row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (row.size() != n) throw ShapeError("add_row: row length " + std::to_string(row.size()) + " != " + std::to_string(n));
  const auto v = x.data(), r = row.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v[i * n + j] + r[j];
  }
  Tensor result = finish(x.shape(), std::move(out), "add_row");
  if (tracking({&x, &row})) {
    ImplPtr xi = x.impl(), ri = row.impl();
    attach(result, [=](std::span<const double> gout) {
      if (xi->requires_grad) {
        auto g = gbuf(xi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
      }
      if (ri->requires_grad) {
        auto g = gbuf(ri);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) g[j] += gout[i * n + j];
        }
      }
    });
  }
  return result;
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  require_matrix(x, "l2_normalize_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto v = x.data();
  std::vector<double> out(v.size()), norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += v[i * n + j] * v[i * n + j];
    norms[i] = std::sqrt(s);
    const double denom = norms[i] + eps;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v[i * n + j] / denom;
  }
  Tensor result = finish(x.shape(), std::move(out), "l2_normalize_rows");
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [=, norms = std::move(norms)](std::span<const double> gout) {
      auto g = gbuf(xi);
      const auto& xv = xi->data;
      for (std::size_t i = 0; i < m; ++i) {
        const double s = norms[i] + eps;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gout[i * n + j] * xv[i * n + j];
        const double coef = norms[i] > 0.0 ? dot / (s * s * norms[i]) : 0.0;
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gout[i * n + j] / s - coef * xv[i * n + j];
      }
    });
  }
  return result;
}

namespace {

// Shared core of normalize_sum / normalize_sum_all: element e belongs to
// slice slice_of(e); out = x / total[slice].
template <typename SliceOf>
Tensor normalize_by_slices(const Tensor& x, std::size_t slices, SliceOf slice_of, const char* op) {
  const auto v = x.data();
  std::vector<double> totals(slices, 0.0);
  for (std::size_t e = 0; e < v.size(); ++e) totals[slice_of(e)] += v[e];
  std::vector<double> out(v.size());
  for (std::size_t e = 0; e < v.size(); ++e) out[e] = v[e] / totals[slice_of(e)];
  Tensor result = finish(x.shape(), std::move(out), op);
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [=, totals = std::move(totals)](std::span<const double> gout) {
      auto g = gbuf(xi);
      const auto& xv = xi->data;
      std::vector<double> dots(slices, 0.0);
      for (std::size_t e = 0; e < xv.size(); ++e) dots[slice_of(e)] += gout[e] * xv[e];
      for (std::size_t e = 0; e < xv.size(); ++e) {
        const double t = totals[slice_of(e)];
        g[e] += gout[e] / t - dots[slice_of(e)] / (t * t);
      }
    });
  }
  return result;
}

}  // namespace

Tensor normalize_sum(const Tensor& x, std::size_t axis) {
  require_matrix(x, "normalize_sum");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (axis == 0) return normalize_by_slices(x, n, [n](std::size_t e) { return e % n; }, "normalize_sum");
  if (axis == 1) return normalize_by_slices(x, m, [n](std::size_t e) { return e / n; }, "normalize_sum");
  throw ShapeError("normalize_sum: axis must be 0 or 1");
}

Tensor normalize_sum_all(const Tensor& x) {
  return normalize_by_slices(x, 1, [](std::size_t) { return std::size_t{0}; }, "normalize_sum_all");
}

// ---------------------------------------------------------------------------
// Layout ops

Tensor reshape(const Tensor& x, Shape shape) {
  if (volume(shape) != x.size()) throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  Tensor result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [xi](std::span<const double> gout) {
      auto g = gbuf(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin > end || end > n) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t k = end - begin;
  const auto v = x.data();
  std::vector<double> out(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(v.data() + i * n + begin, k, out.data() + i * k);
  }
  Tensor result({m, k}, std::move(out));
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [=](std::span<const double> gout) {
      auto g = gbuf(xi);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) g[i * n + begin + j] += gout[i * k + j];
      }
    });
  }
  return result;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t m = parts[0].dim(0);
  std::size_t n = 0;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.dim(0) != m) throw ShapeError("concat_cols: row counts differ");
    n += p.dim(1);
  }
  std::vector<double> out(m * n);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t k = p.dim(1);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.data().data() + i * k, k, out.data() + i * n + off);
    off += k;
  }
  Tensor result({m, n}, std::move(out));
  bool any = false;
  for (const Tensor& p : parts) any = any || tracking({&p});
  if (any) {
    std::vector<ImplPtr> impls;
    for (const Tensor& p : parts) impls.push_back(p.impl());
    attach(result, [=](std::span<const double> gout) {
      std::size_t col = 0;
      for (const ImplPtr& p : impls) {
        const std::size_t k = p->shape[1];
        if (p->requires_grad) {
          auto g = gbuf(p);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) g[i * k + j] += gout[i * n + col + j];
          }
        }
        col += k;
      }
    });
  }
  return result;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(rows.size() * n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(x.data().data() + rows[r] * n, n, out.data() + r * n);
  }
  Tensor result({rows.size(), n}, std::move(out));
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    attach(result, [=, idx = std::move(idx)](std::span<const double> gout) {
      auto g = gbuf(xi);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += gout[r * n + j];
      }
    });
  }
  return result;
}

Tensor repeat_cols(const Tensor& x, std::size_t repeats) {
  require_matrix(x, "repeat_cols");
  if (repeats == 0) throw ShapeError("repeat_cols: repeats must be positive");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto v = x.data();
  std::vector<double> out(m * n * repeats);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::fill_n(out.data() + (i * n + j) * repeats, repeats, v[i * n + j]);
    }
  }
  Tensor result({m, n * repeats}, std::move(out));
  if (tracking({&x})) {
    ImplPtr xi = x.impl();
    attach(result, [=](std::span<const double> gout) {
      auto g = gbuf(xi);
      for (std::size_t e = 0; e < m * n; ++e) {
        double acc = 0.0;
        for (std::size_t r = 0; r < repeats; ++r) acc += gout[e * repeats + r];
        g[e] += acc;
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Losses

Tensor binary_cross_entropy(const Tensor& prob, std::span<const double> target, double clamp) {
  if (prob.size() != target.size()) throw ShapeError("binary_cross_entropy: prediction/target size mismatch");
  if (prob.size() == 0) throw ShapeError("binary_cross_entropy: empty input");
  const auto p = prob.data();
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], clamp, 1.0 - clamp);
    total -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
  }
  Tensor result = finish({}, {total / n}, "binary_cross_entropy");
  if (tracking({&prob})) {
    ImplPtr pi = prob.impl();
    std::vector<double> y(target.begin(), target.end());
    attach(result, [=, y = std::move(y)](std::span<const double> gout) {
      auto g = gbuf(pi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double q = pi->data[i];
        if (q < clamp || q > 1.0 - clamp) continue;  // clamped: flat
        g[i] += gout[0] * -(y[i] / q - (1.0 - y[i]) / (1.0 - q)) / n;
      }
    });
  }
  return result;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> target) {
  require_matrix(logits, "softmax_cross_entropy");
  const std::size_t m = logits.dim(0), c = logits.dim(1);
  if (target.size() != m) throw ShapeError("softmax_cross_entropy: one target per row required");
  if (m == 0) throw ShapeError("softmax_cross_entropy: empty input");
  const auto v = logits.data();
  std::vector<double> probs(m * c);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (target[i] >= c) throw ShapeError("softmax_cross_entropy: target index out of range");
    const double* row = v.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(row[j] - mx);
      z += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    total += std::log(z) + mx - row[target[i]];
  }
  Tensor result = finish({}, {total / static_cast<double>(m)}, "softmax_cross_entropy");
  if (tracking({&logits})) {
    ImplPtr li = logits.impl();
    std::vector<std::size_t> t(target.begin(), target.end());
    attach(result, [=, probs = std::move(probs), t = std::move(t)](std::span<const double> gout) {
      auto g = gbuf(li);
      const double s = gout[0] / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          g[i * c + j] += s * (probs[i * c + j] - (j == t[i] ? 1.0 : 0.0));
        }
      }
    });
  }
  return result;
}

}  // namespace mop
