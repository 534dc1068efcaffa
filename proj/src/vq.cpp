#include "metarec/vq.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace metarec {

Codebook::Codebook(const ParameterSet& params, std::string target_domain, std::size_t heads)
    : params_(&params),
      target_domain_(std::move(target_domain)),
      table_name_(embedding_name(target_domain_)),
      heads_(heads) {
  if (!params.contains(table_name_)) {
    throw std::invalid_argument("codebook: unknown target domain '" + target_domain_ + "'");
  }
  const auto& t = table();
  if (heads == 0 || t.rank() != 2 || t.dim(1) % heads != 0) {
    throw std::invalid_argument("codebook: width " + std::to_string(t.rank() == 2 ? t.dim(1) : 0) +
                                " is not divisible into " + std::to_string(heads) + " heads");
  }
}

std::span<const double> Codebook::code(std::size_t head, std::size_t j) const {
  const auto& t = table();
  const std::size_t d = head_width();
  return t.data().subspan(j * t.dim(1) + head * d, d);
}

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::vector<SemanticCodes> assign_codes(const ad::Tensor& z_e, const Codebook& book) {
  const auto& t = book.table();
  const std::size_t width = t.dim(1);
  const std::size_t heads = book.heads();
  const std::size_t d = book.head_width();
  const std::size_t k = book.size();
  std::size_t rows;
  if (z_e.rank() == 1) {
    rows = 1;
  } else if (z_e.rank() == 2) {
    rows = z_e.dim(0);
  } else {
    throw std::invalid_argument("quantize: expected a vector or matrix, got " + ad::shape_str(z_e.shape()));
  }
  if (z_e.numel() != rows * width) {
    throw std::invalid_argument("quantize: width of " + ad::shape_str(z_e.shape()) + " does not match codebook width " +
                                std::to_string(width));
  }

  std::vector<double> code_norms(heads * k);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t j = 0; j < k; ++j) code_norms[h * k + j] = std::max(norm(book.code(h, j)), kCosineEps);

  std::vector<SemanticCodes> codes(rows, SemanticCodes(heads, 0));
  auto values = z_e.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t h = 0; h < heads; ++h) {
      auto q = values.subspan(r * width + h * d, d);
      const double qn = std::max(norm(q), kCosineEps);
      std::size_t best = 0;
      double best_sim = -INFINITY;
      for (std::size_t j = 0; j < k; ++j) {
        auto c = book.code(h, j);
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += q[i] * c[i];
        double sim = dot / (qn * code_norms[h * k + j]);
        if (sim > best_sim) {
          best_sim = sim;
          best = j;
        }
      }
      codes[r][h] = best;
    }
  }
  return codes;
}

QuantizedRows quantize_rows(const ad::Tensor& z_e, const Codebook& book) {
  if (z_e.rank() != 2) throw std::invalid_argument("quantize_rows: expected a matrix");
  QuantizedRows out;
  out.codes = assign_codes(z_e, book);
  const std::size_t heads = book.heads();
  const std::size_t d = book.head_width();
  const auto& table = book.table();
  std::vector<ad::Tensor> parts;
  parts.reserve(heads);
  std::vector<std::size_t> idx(out.codes.size());
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t r = 0; r < idx.size(); ++r) idx[r] = out.codes[r][h];
    ad::Tensor head_table = heads == 1 ? table : ad::slice(table, 1, h * d, (h + 1) * d);
    parts.push_back(ad::gather(head_table, idx));
  }
  out.z_q = heads == 1 ? parts.front() : ad::concat(parts, 1);
  return out;
}

Quantized quantize(const ad::Tensor& z_e, const Codebook& book) {
  if (z_e.rank() != 1) throw std::invalid_argument("quantize: expected a vector");
  auto rows = quantize_rows(ad::reshape(z_e, {1, z_e.numel()}), book);
  return {ad::reshape(rows.z_q, {z_e.numel()}), std::move(rows.codes.front())};
}

ad::Tensor vq_loss(const ad::Tensor& z_q, const ad::Tensor& z_e) {
  if (z_q.shape() != z_e.shape()) {
    throw std::invalid_argument("vq_loss: shape mismatch " + ad::shape_str(z_q.shape()) + " vs " +
                                ad::shape_str(z_e.shape()));
  }
  const std::size_t rows = z_q.rank() >= 2 ? z_q.dim(0) : 1;
  ad::Tensor pull = ad::sum(ad::square(ad::sub(z_q, ad::stop_gradient(z_e))));
  ad::Tensor commit = ad::sum(ad::square(ad::sub(ad::stop_gradient(z_q), z_e)));
  return ad::scale(ad::add(pull, commit), 1.0 / static_cast<double>(rows));
}

ad::Tensor straight_through(const ad::Tensor& z_e, const ad::Tensor& z_q) {
  if (z_q.shape() != z_e.shape()) {
    throw std::invalid_argument("straight_through: shape mismatch " + ad::shape_str(z_e.shape()) + " vs " +
                                ad::shape_str(z_q.shape()));
  }
  return ad::straight_through(z_e, z_q);
}

QuantizedItems quantize_items(const ParameterSet& params, std::string_view domain, const Codebook& book,
                              bool quantize_target) {
  auto name = embedding_name(domain);
  if (!params.contains(name)) throw std::invalid_argument("unknown domain '" + std::string(domain) + "'");
  QuantizedItems out;
  out.z_e = params.at(name);
  if (domain == book.target_domain() && !quantize_target) {
    out.matrix = out.z_e;
    return out;
  }
  auto q = quantize_rows(out.z_e, book);
  out.quantized = true;
  out.z_q = q.z_q;
  out.codes = std::move(q.codes);
  out.matrix = metarec::straight_through(out.z_e, out.z_q);
  return out;
}

ad::Tensor quantized_item_matrix(const ParameterSet& params, std::string_view domain, const Codebook& book,
                                 bool quantize_target) {
  return quantize_items(params, domain, book, quantize_target).matrix;
}

void write_codes(std::ostream& out, std::string_view domain, std::span<const SemanticCodes> codes) {
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out << domain << ' ' << i;
    for (auto c : codes[i]) out << ' ' << c;
    out << '\n';
  }
}

}  // namespace metarec
