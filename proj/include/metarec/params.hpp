#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "metarec/autodiff.hpp"

namespace metarec {

// Named parameter tensors, iterated in lexicographic name order.
class ParameterSet {
 public:
  using Map = std::map<std::string, ad::Tensor, std::less<>>;

  void set(std::string name, ad::Tensor value);
  const ad::Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> names() const;
  std::size_t num_values() const;

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

  ParameterSet detached() const;
  // Registers every tensor as a leaf of `tape`.
  ParameterSet watch(ad::Tape& tape) const;

  // FNV-1a over names, shapes and raw value bytes.
  std::uint64_t checksum() const;

  bool same_layout(const ParameterSet& other) const;

 private:
  Map entries_;
};

std::string embedding_name(std::string_view domain);

}  // namespace metarec
