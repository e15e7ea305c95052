#include "xflood/params.hpp"

#include <cmath>

#include "xflood/errors.hpp"
#include "xflood/rng.hpp"

namespace xflood {

namespace {

ParamEntry make_entry(Tensor value, bool trainable) {
  ParamEntry e;
  e.grad = Tensor::zeros_like(value);
  e.first_moment = Tensor::zeros_like(value);
  e.second_moment = Tensor::zeros_like(value);
  e.value = std::move(value);
  e.trainable = trainable;
  return e;
}

}  // namespace

const Tensor& ParamStore::add(const std::string& name, Shape shape, Init init, std::size_t fan_in) {
  if (contains(name)) throw ContractError("parameter registered twice: " + name);
  Tensor value(std::move(shape));
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      for (double& v : value.data()) v = 1.0;
      break;
    case Init::kFanIn: {
      if (fan_in == 0) throw ContractError("fan_in must be positive for " + name);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      Rng rng(Rng::derive(seed_, name));
      for (double& v : value.data()) v = rng.uniform(-bound, bound);
      break;
    }
  }
  auto [it, _] = entries_.emplace(name, make_entry(std::move(value), true));
  return it->second.value;
}

void ParamStore::add_buffer(const std::string& name, Tensor value) {
  if (contains(name)) throw ContractError("parameter registered twice: " + name);
  entries_.emplace(name, make_entry(std::move(value), false));
}

void ParamStore::put(const std::string& name, Tensor value, bool trainable) {
  entries_.insert_or_assign(name, make_entry(std::move(value), trainable));
}

void ParamStore::set(const std::string& name, Tensor value) {
  ParamEntry& e = entry(name);
  if (value.shape() != e.value.shape()) {
    throw DimensionError("set " + name + ": shape " + value.shape().str() + " does not match " +
                         e.value.shape().str());
  }
  e.value = std::move(value);
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

ParamEntry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) {
    for (double& g : e.grad.data()) g = 0.0;
  }
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) out.push_back(name);
  }
  return out;
}

std::size_t ParamStore::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) {
    if (e.trainable) n += e.value.size();
  }
  return n;
}

bool same_values(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (ia->second.trainable != ib->second.trainable) return false;
    if (!bit_equal(ia->second.value, ib->second.value)) return false;
  }
  return true;
}

bool is_buffer_name(const std::string& name) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".running_mean") || ends_with(".running_var");
}

}  // namespace xflood
