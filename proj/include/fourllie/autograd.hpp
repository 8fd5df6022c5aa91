#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fourllie/tensor.hpp"

// Reverse-mode differentiation over Tensor values.
//
// Every operation returns a new graph node holding its forward value. Nodes
// that depend on a trainable leaf keep their parents plus a closure that
// pushes the node's gradient into them; nodes built only from constants keep
// neither, so inference graphs cost nothing extra.
//
// A graph is owned by the thread that built it. Constant leaves (frozen
// weights, inputs) may be shared between graphs on different threads.
namespace fourllie::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into the node
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  /// Zero-filled gradient buffer, allocated on first use.
  Tensor& grad_buffer();
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad = true);

/// Seeds d(root)/d(root) = 1 (root must hold one value) and propagates to
/// every reachable node that requires a gradient.
void backward(const Var& root);

/// Forward value, detached from the graph.
inline const Tensor& value(const Var& v) { return v->value; }

// Elementwise arithmetic (shapes must match unless noted).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// f (C, H, W) times a single-channel map s (1, H, W) broadcast over channels.
Var mul_channel_broadcast(const Var& f, const Var& s);
/// Per-channel affine map y = (x - shift[c]) / div[c].
Var channel_normalize(const Var& x, std::span<const double> shift, std::span<const double> div);

Var leaky_relu(const Var& x, double slope);
Var relu(const Var& x);
Var sigmoid(const Var& x);
/// Clamps to [lo, hi]; gradient passes where lo <= x <= hi.
Var clamp(const Var& x, double lo, double hi);

/// 2-D cross-correlation. x (Cin, H, W), w (Cout, Cin, K, K), b (Cout) or
/// null. Output (Cout, (H + 2p - K)/s + 1, (W + 2p - K)/s + 1), zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var max_pool2(const Var& x);
Var upsample_nearest2(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int first, int count);
Var reflect_pad(const Var& x, int top, int bottom, int left, int right);
Var crop(const Var& x, int y0, int x0, int h, int w);

// Spectral operations. A complex array with C channels is packed as a real
// (2C, H, W) tensor: channels [0, C) hold the real part, [C, 2C) the
// imaginary part.
Var fft2(const Var& x);
/// Real part of the unitary inverse DFT of a packed spectrum.
Var ifft2_real(const Var& z);
Var amplitude(const Var& z);
/// Four-quadrant angle in (-pi, pi]. Discontinuous across the negative real axis.
Var phase(const Var& z);
Var polar(const Var& amp, const Var& pha);

/// Mean of squared differences; returns a one-element tensor.
Var mse(const Var& a, const Var& b);

}  // namespace fourllie::ag
