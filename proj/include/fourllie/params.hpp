#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fourllie/autograd.hpp"
#include "fourllie/tensor.hpp"

namespace fourllie {

/// Named learnable arrays in a fixed registration order. The order is the
/// canonical flat layout used for serialization and optimizer state.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  /// Same names and shapes, all zeros.
  ParamStore zeros_like() const;
  bool same_layout(const ParamStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Rounds every value to the nearest float so float32 serialization is exact.
void round_to_float(ParamStore& params);

enum class InitScheme {
  Default,  // Kaiming fan-in for convs, zeros for output heads
  Random,   // Kaiming everywhere, heads included (gradient checks)
  Zero,     // every weight and bias zero
};

struct InitOptions {
  InitScheme scheme = InitScheme::Default;
  std::uint64_t seed = 0;
  double leaky_slope = 0.1;
};

/// Registers `<name>.w` (cout, cin, k, k) and `<name>.b` (cout).
/// `head` marks output layers that the Default scheme zero-initializes.
void add_conv(ParamStore& store, const std::string& name, int cin, int cout, int k,
              const InitOptions& init, std::mt19937_64& rng, bool head = false);

std::size_t conv_param_count(int cin, int cout, int k);

/// Graph leaves for one forward pass over a ParamStore. Each pass gets its
/// own leaves so independent passes can run on separate threads.
class Bindings {
 public:
  explicit Bindings(const ParamStore& params, bool trainable = true);

  const ag::Var& operator[](std::string_view name) const;
  bool contains(std::string_view name) const;

  /// grads[name] += weight * d(loss)/d(name) for every leaf that received
  /// a gradient.
  void accumulate_grads(ParamStore& grads, double weight = 1.0) const;

 private:
  std::map<std::string, ag::Var, std::less<>> leaves_;
};

}  // namespace fourllie
