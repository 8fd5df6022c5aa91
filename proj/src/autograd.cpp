#include "fourllie/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "fourllie/conv.hpp"
#include "fourllie/errors.hpp"
#include "fourllie/fourier.hpp"
#include "vecmath.hpp"

namespace fourllie::ag {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

namespace {

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Var& p) { return p && p->requires_grad; });
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

bool wants(const Var& v) { return v && v->requires_grad; }

void require_packed(const Tensor& z, const char* what) {
  require_image(z, what);
  if (z.channels() % 2 != 0) {
    throw InvalidInput(std::string(what) + ": packed spectrum needs an even channel count");
  }
}

}  // namespace

void backward(const Var& root) {
  if (root->value.size() != 1) throw InvalidInput("backward: root must be a scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward_fn || n->grad.empty()) continue;
    n->backward_fn(*n);
    n->grad = Tensor();  // interior gradients are not needed once propagated
  }
}

// ---------------------------------------------------------------- arithmetic

Var add(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
  return make_node(std::move(y), {a, b}, [a, b](Node& self) {
    for (const Var& p : {a, b}) {
      if (!wants(p)) continue;
      Tensor& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b->value[i];
  return make_node(std::move(y), {a, b}, [a, b](Node& self) {
    if (wants(a)) {
      Tensor& g = a->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(b)) {
      Tensor& g = b->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b->value[i];
  return make_node(std::move(y), {a, b}, [a, b](Node& self) {
    if (wants(a)) {
      Tensor& g = a->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b->value[i];
    }
    if (wants(b)) {
      Tensor& g = b->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a->value[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "div");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= b->value[i];
  return make_node(std::move(y), {a, b}, [a, b](Node& self) {
    if (wants(a)) {
      Tensor& g = a->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / b->value[i];
    }
    if (wants(b)) {
      Tensor& g = b->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / b->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor y = a->value;
  for (double& v : y.values()) v *= s;
  return make_node(std::move(y), {a}, [a, s](Node& self) {
    Tensor& g = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor y = a->value;
  for (double& v : y.values()) v += s;
  return make_node(std::move(y), {a}, [a](Node& self) {
    Tensor& g = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var mul_channel_broadcast(const Var& f, const Var& s) {
  const Tensor& fv = f->value;
  const Tensor& sv = s->value;
  require_image(fv, "mul_channel_broadcast");
  if (sv.rank() != 3 || sv.channels() != 1 || sv.height() != fv.height() || sv.width() != fv.width()) {
    throw ShapeMismatch("mul_channel_broadcast: map " + shape_string(sv.shape()) +
                        " does not match features " + shape_string(fv.shape()));
  }
  Tensor y = fv;
  const auto sp = sv.plane(0);
  for (int c = 0; c < fv.channels(); ++c) {
    auto yp = y.plane(c);
    for (std::size_t i = 0; i < yp.size(); ++i) yp[i] *= sp[i];
  }
  return make_node(std::move(y), {f, s}, [f, s](Node& self) {
    const auto sp = s->value.plane(0);
    if (wants(f)) {
      Tensor& g = f->grad_buffer();
      for (int c = 0; c < g.channels(); ++c) {
        auto gp = g.plane(c);
        auto up = self.grad.plane(c);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += up[i] * sp[i];
      }
    }
    if (wants(s)) {
      auto gs = s->grad_buffer().plane(0);
      for (int c = 0; c < f->value.channels(); ++c) {
        auto fp = f->value.plane(c);
        auto up = self.grad.plane(c);
        for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += up[i] * fp[i];
      }
    }
  });
}

Var channel_normalize(const Var& x, std::span<const double> shift, std::span<const double> div) {
  const Tensor& xv = x->value;
  require_image(xv, "channel_normalize");
  if (shift.size() != static_cast<std::size_t>(xv.channels()) || div.size() != shift.size()) {
    throw ShapeMismatch("channel_normalize: constants do not match channel count");
  }
  std::vector<double> inv(div.size());
  for (std::size_t c = 0; c < div.size(); ++c) inv[c] = 1.0 / div[c];
  Tensor y = xv;
  for (int c = 0; c < xv.channels(); ++c)
    for (double& v : y.plane(c)) v = (v - shift[c]) * inv[c];
  return make_node(std::move(y), {x}, [x, inv](Node& self) {
    Tensor& g = x->grad_buffer();
    for (int c = 0; c < g.channels(); ++c) {
      auto gp = g.plane(c);
      auto up = self.grad.plane(c);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += up[i] * inv[c];
    }
  });
}

// --------------------------------------------------------------- activations

Var leaky_relu(const Var& x, double slope) {
  Tensor y = x->value;
  for (double& v : y.values()) v *= v > 0.0 ? 1.0 : slope;
  return make_node(std::move(y), {x}, [x, slope](Node& self) {
    Tensor& g = x->grad_buffer();
    const double* xv = x->value.data();
    const double* gy = self.grad.data();
    double* gx = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += gy[i] * (xv[i] > 0.0 ? 1.0 : slope);
  });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var sigmoid(const Var& x) {
  Tensor y = x->value;
  for (double& v : y.values()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return make_node(std::move(y), {x}, [x](Node& self) {
    Tensor& g = x->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.value[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var clamp(const Var& x, double lo, double hi) {
  Tensor y = x->value;
  for (double& v : y.values()) v = std::clamp(v, lo, hi);
  return make_node(std::move(y), {x}, [x, lo, hi](Node& self) {
    Tensor& g = x->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x->value[i];
      if (v >= lo && v <= hi) g[i] += self.grad[i];
    }
  });
}

// ------------------------------------------------------------ spatial layers

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  Tensor y = kernels::conv2d_forward(x->value, w->value, b ? &b->value : nullptr, stride, pad);
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(y), std::move(parents), [x, w, b, stride, pad](Node& self) {
    kernels::conv2d_backward(x->value, w->value, self.grad, stride, pad,
                             wants(x) ? &x->grad_buffer() : nullptr,
                             wants(w) ? &w->grad_buffer() : nullptr,
                             wants(b) ? &b->grad_buffer() : nullptr);
  });
}

Var max_pool2(const Var& x) {
  const Tensor& xv = x->value;
  require_image(xv, "max_pool2");
  const int c = xv.channels(), ho = xv.height() / 2, wo = xv.width() / 2;
  if (ho < 1 || wo < 1) throw InvalidInput("max_pool2: input smaller than 2x2");
  Tensor y = Tensor::image(c, ho, wo);
  std::vector<std::size_t> arg(y.size());
  std::size_t o = 0;
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j, ++o) {
        std::size_t best = (static_cast<std::size_t>(k) * xv.height() + 2 * i) * xv.width() + 2 * j;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx =
                (static_cast<std::size_t>(k) * xv.height() + 2 * i + dy) * xv.width() + 2 * j + dx;
            if (xv[idx] > xv[best]) best = idx;
          }
        arg[o] = best;
        y[o] = xv[best];
      }
  return make_node(std::move(y), {x}, [x, arg = std::move(arg)](Node& self) {
    Tensor& g = x->grad_buffer();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

Var upsample_nearest2(const Var& x) {
  const Tensor& xv = x->value;
  require_image(xv, "upsample_nearest2");
  const int c = xv.channels(), h = xv.height(), w = xv.width();
  Tensor y = Tensor::image(c, 2 * h, 2 * w);
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) y.at(k, i, j) = xv.at(k, i / 2, j / 2);
  return make_node(std::move(y), {x}, [x](Node& self) {
    Tensor& g = x->grad_buffer();
    for (int k = 0; k < g.channels(); ++k)
      for (int i = 0; i < self.grad.height(); ++i)
        for (int j = 0; j < self.grad.width(); ++j) g.at(k, i / 2, j / 2) += self.grad.at(k, i, j);
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  require_image(av, "concat_channels");
  require_image(bv, "concat_channels");
  if (av.height() != bv.height() || av.width() != bv.width()) {
    throw ShapeMismatch("concat_channels: spatial dims differ");
  }
  Tensor y = Tensor::image(av.channels() + bv.channels(), av.height(), av.width());
  std::copy(av.values().begin(), av.values().end(), y.data());
  std::copy(bv.values().begin(), bv.values().end(), y.data() + av.size());
  return make_node(std::move(y), {a, b}, [a, b](Node& self) {
    const std::size_t na = a->value.size();
    if (wants(a)) {
      Tensor& g = a->grad_buffer();
      for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
    }
    if (wants(b)) {
      Tensor& g = b->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
    }
  });
}

Var slice_channels(const Var& x, int first, int count) {
  const Tensor& xv = x->value;
  require_image(xv, "slice_channels");
  if (first < 0 || count < 1 || first + count > xv.channels()) {
    throw InvalidInput("slice_channels: channel range out of bounds");
  }
  const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();
  Tensor y = Tensor::image(count, xv.height(), xv.width());
  std::copy_n(xv.data() + first * plane, y.size(), y.data());
  return make_node(std::move(y), {x}, [x, first, plane](Node& self) {
    Tensor& g = x->grad_buffer();
    double* dst = g.data() + first * plane;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

Var reflect_pad(const Var& x, int top, int bottom, int left, int right) {
  Tensor y = fourllie::reflect_pad(x->value, top, bottom, left, right);
  return make_node(std::move(y), {x}, [x, top, left](Node& self) {
    Tensor& g = x->grad_buffer();
    const int h = g.height(), w = g.width();
    for (int k = 0; k < g.channels(); ++k)
      for (int i = 0; i < self.grad.height(); ++i) {
        const int sy = reflect_index(i - top, h);
        for (int j = 0; j < self.grad.width(); ++j)
          g.at(k, sy, reflect_index(j - left, w)) += self.grad.at(k, i, j);
      }
  });
}

Var crop(const Var& x, int y0, int x0, int h, int w) {
  Tensor y = fourllie::crop(x->value, y0, x0, h, w);
  return make_node(std::move(y), {x}, [x, y0, x0](Node& self) {
    Tensor& g = x->grad_buffer();
    for (int k = 0; k < self.grad.channels(); ++k)
      for (int i = 0; i < self.grad.height(); ++i)
        for (int j = 0; j < self.grad.width(); ++j) g.at(k, y0 + i, x0 + j) += self.grad.at(k, i, j);
  });
}

// ------------------------------------------------------------------ spectral

Var fft2(const Var& x) {
  const Tensor& xv = x->value;
  require_image(xv, "fft2");
  const int c = xv.channels(), h = xv.height(), w = xv.width();
  Tensor z = Tensor::image(2 * c, h, w);
  for (int k = 0; k < c; ++k) rdft2_plane(xv.plane(k).data(), z.plane(k).data(), z.plane(c + k).data(), h, w);
  return make_node(std::move(z), {x}, [x](Node& self) {
    Tensor& g = x->grad_buffer();
    const int c = g.channels(), h = g.height(), w = g.width();
    Buffer tmp(static_cast<std::size_t>(h) * w);
    for (int k = 0; k < c; ++k) {
      irdft2_real_plane(self.grad.plane(k).data(), self.grad.plane(c + k).data(), tmp.data(), h, w);
      auto gp = g.plane(k);
      for (std::size_t i = 0; i < tmp.size(); ++i) gp[i] += tmp[i];
    }
  });
}

Var ifft2_real(const Var& z) {
  const Tensor& zv = z->value;
  require_packed(zv, "ifft2_real");
  const int c = zv.channels() / 2, h = zv.height(), w = zv.width();
  Tensor y = Tensor::image(c, h, w);
  for (int k = 0; k < c; ++k) irdft2_real_plane(zv.plane(k).data(), zv.plane(c + k).data(), y.plane(k).data(), h, w);
  return make_node(std::move(y), {z}, [z](Node& self) {
    Tensor& g = z->grad_buffer();
    const int c = self.grad.channels(), h = self.grad.height(), w = self.grad.width();
    Buffer re(static_cast<std::size_t>(h) * w), im(re.size());
    for (int k = 0; k < c; ++k) {
      rdft2_plane(self.grad.plane(k).data(), re.data(), im.data(), h, w);
      auto gr = g.plane(k), gi = g.plane(c + k);
      for (std::size_t i = 0; i < re.size(); ++i) {
        gr[i] += re[i];
        gi[i] += im[i];
      }
    }
  });
}

Var amplitude(const Var& z) {
  const Tensor& zv = z->value;
  require_packed(zv, "amplitude");
  const int c = zv.channels() / 2;
  const std::size_t n = static_cast<std::size_t>(c) * zv.height() * zv.width();
  Tensor a = Tensor::image(c, zv.height(), zv.width());
  vecmath::magnitude(zv.data(), zv.data() + n, a.data(), n);
  return make_node(std::move(a), {z}, [z, n](Node& self) {
    Tensor& g = z->grad_buffer();
    const double* re = z->value.data();
    const double* im = z->value.data() + n;
    for (std::size_t i = 0; i < n; ++i) {
      const double amp = self.value[i];
      const double s = amp == 0.0 ? 0.0 : self.grad[i] / amp;
      g[i] += s * re[i];
      g[n + i] += s * im[i];
    }
  });
}

Var phase(const Var& z) {
  const Tensor& zv = z->value;
  require_packed(zv, "phase");
  const int c = zv.channels() / 2;
  const std::size_t n = static_cast<std::size_t>(c) * zv.height() * zv.width();
  Tensor p = Tensor::image(c, zv.height(), zv.width());
  vecmath::phase(zv.data(), zv.data() + n, p.data(), n);
  return make_node(std::move(p), {z}, [z, n](Node& self) {
    Tensor& g = z->grad_buffer();
    const double* re = z->value.data();
    const double* im = z->value.data() + n;
    for (std::size_t i = 0; i < n; ++i) {
      const double a2 = re[i] * re[i] + im[i] * im[i];
      const double s = a2 == 0.0 ? 0.0 : self.grad[i] / a2;
      g[i] -= s * im[i];
      g[n + i] += s * re[i];
    }
  });
}

Var polar(const Var& amp, const Var& pha) {
  require_same_shape(amp->value, pha->value, "polar");
  require_image(amp->value, "polar");
  const Tensor& av = amp->value;
  const std::size_t n = av.size();
  auto trig = std::make_shared<Buffer>(2 * n);  // cos then sin, reused by the backward pass
  vecmath::sincos(pha->value.data(), trig->data(), trig->data() + n, n);
  Tensor z = Tensor::image(2 * av.channels(), av.height(), av.width());
  const double* cs = trig->data();
  const double* sn = trig->data() + n;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = av[i] * cs[i];
    z[n + i] = av[i] * sn[i];
  }
  return make_node(std::move(z), {amp, pha}, [amp, pha, n, trig](Node& self) {
    const Tensor& av = amp->value;
    const double* cs = trig->data();
    const double* sn = trig->data() + n;
    Tensor* ga = wants(amp) ? &amp->grad_buffer() : nullptr;
    Tensor* gp = wants(pha) ? &pha->grad_buffer() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double gr = self.grad[i], gi = self.grad[n + i];
      if (ga) (*ga)[i] += gr * cs[i] + gi * sn[i];
      if (gp) (*gp)[i] += av[i] * (gi * cs[i] - gr * sn[i]);
    }
  });
}

// -------------------------------------------------------------------- losses

Var mse(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "mse");
  const std::size_t n = a->value.size();
  if (n == 0) throw InvalidInput("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a->value[i] - b->value[i];
    s += d * d;
  }
  return make_node(Tensor::scalar(s / static_cast<double>(n)), {a, b}, [a, b, n](Node& self) {
    const double k = 2.0 * self.grad[0] / static_cast<double>(n);
    if (wants(a)) {
      Tensor& g = a->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += k * (a->value[i] - b->value[i]);
    }
    if (wants(b)) {
      Tensor& g = b->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * (a->value[i] - b->value[i]);
    }
  });
}

}  // namespace fourllie::ag
