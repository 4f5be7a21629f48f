#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mqmrc/tensor.hpp"

namespace mqmrc {

/// Ordered, named parameter container. Insertion order is the checkpoint
/// order and the optimizer traversal order, so runs stay reproducible.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t count() const { return entries_.size(); }
  std::size_t total_values() const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  void set_requires_grad(bool v);
  void zero_grad();

  /// Deep copy: fresh storage for every tensor.
  ParamStore clone() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ModelParams = ParamStore;

/// Binary checkpoint. save -> load -> save produces identical bytes.
void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

std::vector<std::uint8_t> checkpoint_bytes(const ParamStore& params);

/// Normal(0, stddev) initializer, deterministic per generator state.
Tensor randn(Shape shape, std::mt19937_64& rng, double stddev);

}  // namespace mqmrc
