#include "metarec/params.hpp"

#include <cstring>
#include <stdexcept>

namespace metarec {

void ParameterSet::set(std::string name, ad::Tensor value) {
  entries_.insert_or_assign(std::move(name), std::move(value));
}

const ad::Tensor& ParameterSet::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterSet::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

ParameterSet ParameterSet::detached() const {
  ParameterSet out;
  for (const auto& [name, t] : entries_) out.set(name, t.detach());
  return out;
}

ParameterSet ParameterSet::watch(ad::Tape& tape) const {
  ParameterSet out;
  for (const auto& [name, t] : entries_) out.set(name, tape.variable(t));
  return out;
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : entries_) {
    mix(name.data(), name.size());
    for (std::size_t d : t.shape()) mix(&d, sizeof d);
    mix(t.data().data(), t.numel() * sizeof(double));
  }
  return h;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape() != b->second.shape()) return false;
  }
  return true;
}

std::string embedding_name(std::string_view domain) { return "embedding." + std::string(domain); }

}  // namespace metarec
