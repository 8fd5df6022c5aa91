#pragma once

#include "fourllie/tensor.hpp"

// Raw convolution kernels shared by the graph operation and plain-tensor
// callers. Layouts follow ag::conv2d.
namespace fourllie::kernels {

int conv_out_extent(int in, int k, int stride, int pad);

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad);

/// Accumulates into gx / gw / gb; any of them may be null.
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy, int stride, int pad,
                     Tensor* gx, Tensor* gw, Tensor* gb);

}  // namespace fourllie::kernels
