#pragma once

// Multi-head vector quantization against a codebook that is a view of the
// target-domain embedding table.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metarec/autodiff.hpp"
#include "metarec/params.hpp"

namespace metarec {

inline constexpr double kCosineEps = 1e-12;

// H x K x D view over a [K x (H*D)] table: code j of head h is the slice
// table[j][h*D : (h+1)*D]. The table is looked up in the ParameterSet on
// every access, so the view follows updates to that set's target entry.
class Codebook {
 public:
  Codebook(const ParameterSet& params, std::string target_domain, std::size_t heads);

  const ad::Tensor& table() const { return params_->at(table_name_); }
  std::size_t heads() const { return heads_; }
  std::size_t size() const { return table().dim(0); }
  std::size_t head_width() const { return table().dim(1) / heads_; }
  const std::string& target_domain() const { return target_domain_; }

  std::span<const double> code(std::size_t head, std::size_t j) const;

 private:
  const ParameterSet* params_;
  std::string target_domain_;
  std::string table_name_;
  std::size_t heads_;
};

// One code per head.
using SemanticCodes = std::vector<std::size_t>;

struct Quantized {
  ad::Tensor z_q;
  SemanticCodes codes;
};

struct QuantizedRows {
  ad::Tensor z_q;  // [N x d], assembled from codebook slices
  std::vector<SemanticCodes> codes;
};

// Per head, the code with the highest cosine similarity (lowest index on
// ties). z_q is gathered from the codebook, so it differentiates into the
// target table.
Quantized quantize(const ad::Tensor& z_e, const Codebook& book);
QuantizedRows quantize_rows(const ad::Tensor& z_e, const Codebook& book);

// Codes only, computed from values.
std::vector<SemanticCodes> assign_codes(const ad::Tensor& z_e, const Codebook& book);

// |z_q - sg[z_e]|^2 + |sg[z_q] - z_e|^2, averaged over rows (a vector is a
// single row).
ad::Tensor vq_loss(const ad::Tensor& z_q, const ad::Tensor& z_e);

// Forward value z_q; the gradient goes to z_e unchanged.
ad::Tensor straight_through(const ad::Tensor& z_e, const ad::Tensor& z_q);

struct QuantizedItems {
  ad::Tensor matrix;  // rows used for input lookup and scoring
  bool quantized = false;
  ad::Tensor z_q;
  ad::Tensor z_e;
  std::vector<SemanticCodes> codes;
};

// Every item of `domain` through quantize + straight_through. The target
// domain is passed through raw unless quantize_target is set.
QuantizedItems quantize_items(const ParameterSet& params, std::string_view domain, const Codebook& book,
                              bool quantize_target);
ad::Tensor quantized_item_matrix(const ParameterSet& params, std::string_view domain, const Codebook& book,
                                 bool quantize_target);

// "domain item_id c_1 ... c_H" per item.
void write_codes(std::ostream& out, std::string_view domain, std::span<const SemanticCodes> codes);

}  // namespace metarec
