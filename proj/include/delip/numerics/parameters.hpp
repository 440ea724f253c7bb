#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "delip/numerics/tensor.hpp"

namespace delip {

/// A named learnable array with its gradient slot.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;
};

/// Owns every learnable array of a model. Parameters live on the heap, so
/// references handed out by `add`/`get` stay valid when the store is moved.
class ParameterStore {
public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(const std::string& name, std::size_t rows, std::size_t cols);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  // Insertion order; stable across runs.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();
  // Copies values (not grads) from another store with identical names/shapes.
  void copy_values_from(const ParameterStore& other);

private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace delip
