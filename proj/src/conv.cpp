#include "fourllie/conv.hpp"

#include <Eigen/Core>
#include <algorithm>

#include "fourllie/errors.hpp"

namespace fourllie::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Geometry {
  int cin, h, w, cout, k, stride, pad, ho, wo;
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

Geometry geometry(const Tensor& x, const Tensor& w, int stride, int pad) {
  require_image(x, "conv2d input");
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
    throw InvalidInput("conv2d: weight must be (Cout, Cin, K, K), got " + shape_string(w.shape()));
  }
  if (w.dim(1) != x.channels()) {
    throw ShapeMismatch("conv2d: weight expects " + std::to_string(w.dim(1)) +
                        " input channels, input has " + std::to_string(x.channels()));
  }
  Geometry g{x.channels(), x.height(), x.width(), w.dim(0), w.dim(2), stride, pad, 0, 0};
  g.ho = conv_out_extent(g.h, g.k, stride, pad);
  g.wo = conv_out_extent(g.w, g.k, stride, pad);
  if (g.ho < 1 || g.wo < 1) throw InvalidInput("conv2d: input smaller than kernel");
  return g;
}

Buffer im2col(const Tensor& x, const Geometry& g) {
  const std::size_t cols = static_cast<std::size_t>(g.ho) * g.wo;
  Buffer col(static_cast<std::size_t>(g.cin) * g.k * g.k * cols, 0.0);
  std::size_t row = 0;
  for (int c = 0; c < g.cin; ++c) {
    const double* src = x.data() + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx, ++row) {
        double* dst = col.data() + row * cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* srow = src + static_cast<std::size_t>(iy) * g.w;
          double* drow = dst + static_cast<std::size_t>(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) drow[ox] = srow[ix];
          }
        }
      }
  }
  return col;
}

void col2im_add(const Buffer& col, const Geometry& g, Tensor& gx) {
  const std::size_t cols = static_cast<std::size_t>(g.ho) * g.wo;
  std::size_t row = 0;
  for (int c = 0; c < g.cin; ++c) {
    double* dst = gx.data() + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx, ++row) {
        const double* src = col.data() + row * cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          double* drow = dst + static_cast<std::size_t>(iy) * g.w;
          const double* srow = src + static_cast<std::size_t>(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) drow[ix] += srow[ox];
          }
        }
      }
  }
}

using v8d = double __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
  v8d v;
  __builtin_memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, v8d v) { __builtin_memcpy(p, &v, sizeof v); }

int round8(int n) { return (n + 7) / 8 * 8; }

// Copies `planes` planes of h x w into a zeroed buffer of (h + 2 pad) rows by
// `stride` columns, offset by `pad` on the top and left.
Buffer pad_planes(const double* src, int planes, int h, int w, int pad, int stride) {
  const int hp = h + 2 * pad;
  Buffer out(static_cast<std::size_t>(planes) * hp * stride, 0.0);
  for (int c = 0; c < planes; ++c)
    for (int y = 0; y < h; ++y) {
      const double* s = src + (static_cast<std::size_t>(c) * h + y) * w;
      std::copy(s, s + w, out.data() + (static_cast<std::size_t>(c) * hp + y + pad) * stride + pad);
    }
  return out;
}

// out[o] += sum_c conv3x3(xp[c], w[o][c]) over a padded input whose row
// stride is a multiple of 8 plus 2. Blocks of O output channels by 8 columns
// are accumulated in registers.
template <int O>
void conv3_block(const double* xp, int cin, int hp, int stride, const double* w, int o0, double* outw, int ho,
                 int wo8) {
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo8; ox += 8) {
      v8d acc[O];
      for (int j = 0; j < O; ++j) acc[j] = v8d{} ;
      for (int c = 0; c < cin; ++c) {
        const double* xc = xp + (static_cast<std::size_t>(c) * hp + oy) * stride + ox;
        for (int t = 0; t < 9; ++t) {
          const v8d xv = load8(xc + (t / 3) * stride + t % 3);
          for (int j = 0; j < O; ++j) acc[j] += w[((static_cast<std::size_t>(o0 + j)) * cin + c) * 9 + t] * xv;
        }
      }
      for (int j = 0; j < O; ++j) {
        double* dst = outw + ((static_cast<std::size_t>(o0 + j)) * ho + oy) * wo8 + ox;
        store8(dst, load8(dst) + acc[j]);
      }
    }
}

// out (cout, h + 2 pad - 2, w + 2 pad - 2) += conv3x3(x (cin, h, w), wt).
void conv3_accumulate(const double* x, int cin, int h, int w, int pad, const double* wt, int cout, double* out) {
  const int ho = h + 2 * pad - 2, wo = w + 2 * pad - 2;
  const int wo8 = round8(wo);
  const int stride = wo8 + 2;
  const int hp = h + 2 * pad;
  const Buffer xp = pad_planes(x, cin, h, w, pad, stride);
  Buffer outw(static_cast<std::size_t>(cout) * ho * wo8, 0.0);
  int o = 0;
  for (; o + 8 <= cout; o += 8) conv3_block<8>(xp.data(), cin, hp, stride, wt, o, outw.data(), ho, wo8);
  for (; o + 4 <= cout; o += 4) conv3_block<4>(xp.data(), cin, hp, stride, wt, o, outw.data(), ho, wo8);
  for (; o < cout; ++o) conv3_block<1>(xp.data(), cin, hp, stride, wt, o, outw.data(), ho, wo8);
  for (int k = 0; k < cout; ++k)
    for (int y = 0; y < ho; ++y) {
      const double* s = outw.data() + (static_cast<std::size_t>(k) * ho + y) * wo8;
      double* d = out + (static_cast<std::size_t>(k) * ho + y) * wo;
      for (int i = 0; i < wo; ++i) d[i] += s[i];
    }
}

// gw[o][c][t] += sum over output positions of gy[o] * shifted x[c].
void conv3_weight_grad(const Tensor& x, const Tensor& gy, int pad, Tensor& gw) {
  const int cin = x.channels(), h = x.height(), w = x.width();
  const int cout = gy.channels(), ho = gy.height(), wo = gy.width();
  const int wo8 = round8(wo);
  const int stride = wo8 + 2;
  const int hp = h + 2 * pad;
  const Buffer xp = pad_planes(x.data(), cin, h, w, pad, stride);
  const Buffer gp = pad_planes(gy.data(), cout, ho, wo, 0, wo8);
  for (int o = 0; o < cout; ++o)
    for (int c = 0; c < cin; ++c) {
      v8d acc[9];
      for (auto& a : acc) a = v8d{};
      for (int oy = 0; oy < ho; ++oy) {
        const double* gr = gp.data() + (static_cast<std::size_t>(o) * ho + oy) * wo8;
        const double* xr = xp.data() + (static_cast<std::size_t>(c) * hp + oy) * stride;
        for (int ox = 0; ox < wo8; ox += 8) {
          const v8d g = load8(gr + ox);
          for (int t = 0; t < 9; ++t) acc[t] += g * load8(xr + (t / 3) * stride + t % 3 + ox);
        }
      }
      double* dst = gw.data() + (static_cast<std::size_t>(o) * cin + c) * 9;
      for (int t = 0; t < 9; ++t) {
        const v8d a = acc[t];
        dst[t] += ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
      }
    }
}

bool fast3(const Geometry& g) { return g.k == 3 && g.stride == 1 && g.pad <= 2; }

}  // namespace

int conv_out_extent(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad) {
  const Geometry g = geometry(x, w, stride, pad);
  if (b && (b->rank() != 1 || b->dim(0) != g.cout)) {
    throw ShapeMismatch("conv2d: bias must have " + std::to_string(g.cout) + " entries");
  }
  const int inner = g.cin * g.k * g.k;
  const int cols = g.ho * g.wo;
  Tensor y = Tensor::image(g.cout, g.ho, g.wo);
  MapMat ym(y.data(), g.cout, cols);
  ConstMapMat wm(w.data(), g.cout, inner);
  if (g.pointwise()) {
    ym.noalias() = wm * ConstMapMat(x.data(), g.cin, cols);
  } else if (fast3(g)) {
    y.fill(0.0);
    conv3_accumulate(x.data(), g.cin, g.h, g.w, g.pad, w.data(), g.cout, y.data());
  } else {
    const Buffer col = im2col(x, g);
    ym.noalias() = wm * ConstMapMat(col.data(), inner, cols);
  }
  if (b) {
    for (int o = 0; o < g.cout; ++o) {
      double* row = y.data() + static_cast<std::size_t>(o) * cols;
      const double bo = (*b)[o];
      for (int i = 0; i < cols; ++i) row[i] += bo;
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy, int stride, int pad,
                     Tensor* gx, Tensor* gw, Tensor* gb) {
  const Geometry g = geometry(x, w, stride, pad);
  const int inner = g.cin * g.k * g.k;
  const int cols = g.ho * g.wo;
  ConstMapMat gym(gy.data(), g.cout, cols);
  ConstMapMat wm(w.data(), g.cout, inner);

  if (gb) {
    for (int o = 0; o < g.cout; ++o) {
      const double* row = gy.data() + static_cast<std::size_t>(o) * cols;
      double s = 0.0;
      for (int i = 0; i < cols; ++i) s += row[i];
      (*gb)[o] += s;
    }
  }
  if (g.pointwise()) {
    if (gw) MapMat(gw->data(), g.cout, inner).noalias() += gym * ConstMapMat(x.data(), g.cin, cols).transpose();
    if (gx) MapMat(gx->data(), g.cin, cols).noalias() += wm.transpose() * gym;
    return;
  }
  if (fast3(g)) {
    if (gw) conv3_weight_grad(x, gy, g.pad, *gw);
    if (gx) {
      // The input gradient is a 3x3 convolution of gy with the flipped,
      // transposed kernel.
      Buffer wt(static_cast<std::size_t>(g.cin) * g.cout * 9);
      for (int o = 0; o < g.cout; ++o)
        for (int c = 0; c < g.cin; ++c)
          for (int t = 0; t < 9; ++t) wt[(static_cast<std::size_t>(c) * g.cout + o) * 9 + 8 - t] = w.data()[(static_cast<std::size_t>(o) * g.cin + c) * 9 + t];
      conv3_accumulate(gy.data(), g.cout, g.ho, g.wo, 2 - g.pad, wt.data(), g.cin, gx->data());
    }
    return;
  }
  if (gw) {
    const Buffer col = im2col(x, g);
    MapMat(gw->data(), g.cout, inner).noalias() += gym * ConstMapMat(col.data(), inner, cols).transpose();
  }
  if (gx) {
    Buffer gcol(static_cast<std::size_t>(inner) * cols);
    MapMat(gcol.data(), inner, cols).noalias() = wm.transpose() * gym;
    col2im_add(gcol, g, *gx);
  }
}

}  // namespace fourllie::kernels
