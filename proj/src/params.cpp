#include "fourllie/params.hpp"

#include <cmath>
#include <utility>

#include "fourllie/errors.hpp"

namespace fourllie {

void ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw InvalidInput("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

const Tensor& ParamStore::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter: " + std::string(name));
  return entries_[it->second].value;
}

Tensor& ParamStore::get(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.name, Tensor(e.value.shape(), 0.0));
  return out;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].value.shape() != other.entries_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

void round_to_float(ParamStore& params) {
  for (auto& e : params.entries())
    for (double& v : e.value.values()) v = static_cast<double>(static_cast<float>(v));
}

std::size_t conv_param_count(int cin, int cout, int k) {
  return static_cast<std::size_t>(cout) * cin * k * k + static_cast<std::size_t>(cout);
}

void add_conv(ParamStore& store, const std::string& name, int cin, int cout, int k,
              const InitOptions& init, std::mt19937_64& rng, bool head) {
  if (cin < 1 || cout < 1 || k < 1) throw InvalidInput("add_conv: invalid geometry for " + name);
  Tensor w({cout, cin, k, k}, 0.0);
  const bool zero = init.scheme == InitScheme::Zero || (head && init.scheme == InitScheme::Default);
  if (!zero) {
    const double fan_in = static_cast<double>(cin) * k * k;
    const double gain = std::sqrt(2.0 / (1.0 + init.leaky_slope * init.leaky_slope));
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
    for (double& v : w.values()) v = static_cast<double>(static_cast<float>(dist(rng)));
  }
  store.add(name + ".w", std::move(w));
  store.add(name + ".b", Tensor({cout}, 0.0));
}

Bindings::Bindings(const ParamStore& params, bool trainable) {
  for (const auto& e : params.entries()) leaves_.emplace(e.name, ag::leaf(e.value, trainable));
}

const ag::Var& Bindings::operator[](std::string_view name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw InvalidInput("parameter not bound: " + std::string(name));
  return it->second;
}

bool Bindings::contains(std::string_view name) const { return leaves_.find(name) != leaves_.end(); }

void Bindings::accumulate_grads(ParamStore& grads, double weight) const {
  for (auto& e : grads.entries()) {
    auto it = leaves_.find(e.name);
    if (it == leaves_.end() || it->second->grad.empty()) continue;
    const Tensor& g = it->second->grad;
    for (std::size_t i = 0; i < g.size(); ++i) e.value[i] += weight * g[i];
  }
}

}  // namespace fourllie
