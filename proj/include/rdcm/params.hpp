#pragma once

#include "rdcm/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rdcm {

struct ParamEntry {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

/// Named trainable tensors with gradient and Adam moment slots.
class ParamSet {
 public:
  // Registers a parameter; names must be unique.
  void add(std::string name, Tensor value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  ParamEntry& at(std::string_view name);
  const ParamEntry& at(std::string_view name) const;
  ParamEntry& at(std::size_t index) { return entries_[index]; }
  const ParamEntry& at(std::size_t index) const { return entries_[index]; }

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

  void zero_grad();

 private:
  std::vector<ParamEntry> entries_;
  std::uint64_t step_ = 0;
};

}  // namespace rdcm
