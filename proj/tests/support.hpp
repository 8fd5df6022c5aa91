#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fourllie/fourier.hpp"
#include "fourllie/params.hpp"
#include "fourllie/tensor.hpp"

namespace testing {

using fourllie::ParamStore;
using fourllie::Tensor;

Tensor random_tensor(const fourllie::Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0);
Tensor random_image(int c, int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0);

// Literal double-sum 2-D DFT with 1/sqrt(HW) scaling, one plane at a time.
fourllie::ComplexSpectrum dft_oracle(const Tensor& img);
// Literal inverse double sum; returns real and imaginary parts.
fourllie::ComplexSpectrum idft_oracle(const fourllie::ComplexSpectrum& spec);

// Naive zero-padded cross-correlation.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad);

using LossFn = std::function<double(const ParamStore&)>;

// Central differences of `loss` for every scalar of `params`.
ParamStore numeric_grad(const ParamStore& params, const LossFn& loss, double step);

struct GroupError {
  std::string name;
  double rel = 0;  // ||a - n|| / max(||a||, ||n||)
  double norm = 0;
};

std::vector<GroupError> compare_grads(const ParamStore& analytic, const ParamStore& numeric);
double max_rel(const std::vector<GroupError>& errs);

// Unique scratch directory under the system temp path.
std::filesystem::path scratch_dir(const std::string& tag);

}  // namespace testing
