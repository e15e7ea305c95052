#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xflood/tensor.hpp"

namespace xflood {

enum class Init {
  kFanIn,  ///< uniform in +-sqrt(6 / fan_in)
  kZeros,
  kOnes,
};

struct ParamEntry {
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
  std::uint64_t step = 0;
  /// Buffers (batch-norm running statistics) are persisted but never optimized.
  bool trainable = true;
};

/// Named trainable tensors plus optimizer state. Iteration is sorted by name.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  /// Registers a trainable tensor. Initialization is a pure function of (seed, name).
  const Tensor& add(const std::string& name, Shape shape, Init init, std::size_t fan_in = 1);

  /// Registers a non-trainable buffer with an explicit value.
  void add_buffer(const std::string& name, Tensor value);

  /// Inserts or replaces an entry wholesale; used by checkpoint loading.
  void put(const std::string& name, Tensor value, bool trainable);

  /// Overwrites the value of an existing entry. Shapes must match.
  void set(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const ParamEntry& entry(const std::string& name) const;
  ParamEntry& entry(const std::string& name);
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& mutable_value(const std::string& name) { return entry(name).value; }
  const Tensor& grad(const std::string& name) const { return entry(name).grad; }

  void zero_grad();

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t trainable_scalar_count() const;

  std::uint64_t seed() const noexcept { return seed_; }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::uint64_t seed_;
  std::map<std::string, ParamEntry> entries_;
};

/// Identical names, shapes, trainable flags and bit-identical values.
bool same_values(const ParamStore& a, const ParamStore& b);

/// Buffer naming convention shared with the checkpoint loader.
bool is_buffer_name(const std::string& name);

}  // namespace xflood
