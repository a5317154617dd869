#include "rdcm/params.hpp"

#include "rdcm/errors.hpp"

namespace rdcm {

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  ParamEntry e;
  e.grad = Tensor(value.shape());
  e.first_moment = Tensor(value.shape());
  e.second_moment = Tensor(value.shape());
  e.name = std::move(name);
  e.value = std::move(value);
  entries_.push_back(std::move(e));
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw ConfigError("unknown parameter: " + std::string(name));
}

ParamEntry& ParamSet::at(std::string_view name) { return entries_[index_of(name)]; }
const ParamEntry& ParamSet::at(std::string_view name) const { return entries_[index_of(name)]; }

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

}  // namespace rdcm
