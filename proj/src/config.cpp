#include "metarec/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace metarec {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoMultiheadVq: return "no_multihead_vq";
    case Variant::kNoVq: return "no_vq";
    case Variant::kNoRescale: return "no_rescale";
    case Variant::kNoMeta: return "no_meta";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (name == variant_name(v)) return v;
  }
  throw std::invalid_argument("train.variant: unknown variant '" + std::string(name) +
                              "' (expected full, no_multihead_vq, no_vq, no_rescale or no_meta)");
}

namespace {

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* expected) {
  throw std::invalid_argument(std::string(key) + ": expected " + expected + ", got '" + std::string(value) + "'");
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad(key, v, "a non-negative integer");
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad(key, v, "a real number");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(key, v, "true or false");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
Field size_field(const char* key, T RunConfig::*outer, std::size_t T::*member) {
  return {key, [=](const RunConfig& c) { return std::to_string(c.*outer.*member); },
          [=](RunConfig& c, std::string_view v) { c.*outer.*member = to_u64(key, v); }};
}
template <typename T>
Field double_field(const char* key, T RunConfig::*outer, double T::*member) {
  return {key, [=](const RunConfig& c) { return fmt(c.*outer.*member); },
          [=](RunConfig& c, std::string_view v) { c.*outer.*member = to_double(key, v); }};
}
template <typename T>
Field bool_field(const char* key, T RunConfig::*outer, bool T::*member) {
  return {key, [=](const RunConfig& c) { return std::string(c.*outer.*member ? "true" : "false"); },
          [=](RunConfig& c, std::string_view v) { c.*outer.*member = to_bool(key, v); }};
}
Field top_size(const char* key, std::size_t RunConfig::*member) {
  return {key, [=](const RunConfig& c) { return std::to_string(c.*member); },
          [=](RunConfig& c, std::string_view v) { c.*member = to_u64(key, v); }};
}
Field top_string(const char* key, std::string RunConfig::*member) {
  return {key, [=](const RunConfig& c) { return c.*member; },
          [=](RunConfig& c, std::string_view v) { c.*member = std::string(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using R = RunConfig;
    std::vector<Field> f;
    f.push_back(top_string("data.manifest", &R::manifest));
    f.push_back(top_size("data.k_core", &R::k_core));
    f.push_back(size_field("synthetic.num_sources", &R::synthetic, &SyntheticSpec::num_sources));
    f.push_back(size_field("synthetic.items", &R::synthetic, &SyntheticSpec::items));
    f.push_back(size_field("synthetic.source_users", &R::synthetic, &SyntheticSpec::source_users));
    f.push_back(size_field("synthetic.target_users", &R::synthetic, &SyntheticSpec::target_users));
    f.push_back(size_field("synthetic.min_len", &R::synthetic, &SyntheticSpec::min_len));
    f.push_back(size_field("synthetic.max_len", &R::synthetic, &SyntheticSpec::max_len));
    f.push_back(size_field("synthetic.fanout", &R::synthetic, &SyntheticSpec::fanout));
    f.push_back(double_field("synthetic.rho", &R::synthetic, &SyntheticSpec::rho));
    f.push_back({"synthetic.seed", [](const R& c) { return std::to_string(c.synthetic.seed); },
                 [](R& c, std::string_view v) { c.synthetic.seed = to_u64("synthetic.seed", v); }});
    f.push_back(size_field("encoder.d_model", &R::encoder, &EncoderConfig::d_model));
    f.push_back(size_field("encoder.num_blocks", &R::encoder, &EncoderConfig::num_blocks));
    f.push_back(size_field("encoder.max_len", &R::encoder, &EncoderConfig::max_len));
    f.push_back(bool_field("vq.enabled", &R::vq, &VqConfig::enabled));
    f.push_back(size_field("vq.heads", &R::vq, &VqConfig::heads));
    f.push_back(bool_field("vq.quantize_target", &R::vq, &VqConfig::quantize_target));
    f.push_back(size_field("meta.n_tasks", &R::meta, &MetaConfig::n_tasks));
    f.push_back(double_field("meta.inner_lr", &R::meta, &MetaConfig::inner_lr));
    f.push_back(double_field("meta.outer_lr", &R::meta, &MetaConfig::outer_lr));
    f.push_back(size_field("meta.inner_steps", &R::meta, &MetaConfig::inner_steps));
    f.push_back(double_field("meta.temperature", &R::meta, &MetaConfig::temperature));
    f.push_back(size_field("meta.inner_batch", &R::meta, &MetaConfig::inner_batch));
    f.push_back(size_field("meta.meta_batch", &R::meta, &MetaConfig::meta_batch));
    f.push_back(bool_field("meta.second_order", &R::meta, &MetaConfig::second_order));
    f.push_back(bool_field("meta.vq_in_inner", &R::meta, &MetaConfig::vq_in_inner));
    f.push_back(bool_field("meta.vq_in_outer", &R::meta, &MetaConfig::vq_in_outer));
    f.push_back(bool_field("meta.rescale", &R::meta, &MetaConfig::rescale));
    f.push_back(bool_field("meta.parallel", &R::meta, &MetaConfig::parallel));
    f.push_back(size_field("joint.batch", &R::joint, &JointConfig::batch));
    f.push_back(double_field("joint.lr", &R::joint, &JointConfig::lr));
    f.push_back(top_string("model.target_domain", &R::target_domain));
    f.push_back({"train.variant", [](const R& c) { return std::string(variant_name(c.variant)); },
                 [](R& c, std::string_view v) { c.variant = parse_variant(v); }});
    f.push_back(top_size("train.iterations", &R::iterations));
    f.push_back(top_size("train.eval_every", &R::eval_every));
    f.push_back({"train.seed", [](const R& c) { return std::to_string(c.seed); },
                 [](R& c, std::string_view v) { c.seed = to_u64("train.seed", v); }});
    f.push_back(top_string("train.out_dir", &R::out_dir));
    f.push_back(top_size("eval.k", &R::eval_k));
    return f;
  }();
  return table;
}

}  // namespace

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      set_config_value(cfg, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += '=';
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return serialize_config(a) == serialize_config(b); }

void override_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.synthetic.seed = seed;
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.encoder = encoder;
  m.vq = vq;
  m.target_domain = target_domain;
  if (variant == Variant::kNoMultiheadVq) m.vq.heads = 1;
  if (variant == Variant::kNoVq) m.vq.enabled = false;
  return m;
}

MetaConfig RunConfig::effective_meta() const {
  MetaConfig m = meta;
  if (variant == Variant::kNoRescale) m.rescale = false;
  return m;
}

void RunConfig::validate() const {
  if (manifest.empty()) synthetic.validate();
  if (k_core == 0) throw std::invalid_argument("data.k_core must be at least 1");
  encoder.validate(vq.enabled ? vq.heads : 1);
  model().validate();
  meta.validate();
  if (joint.batch == 0) throw std::invalid_argument("joint.batch must be positive");
  if (!(joint.lr > 0.0)) throw std::invalid_argument("joint.lr must be positive");
  if (target_domain.empty()) throw std::invalid_argument("model.target_domain must not be empty");
  if (iterations == 0) throw std::invalid_argument("train.iterations must be positive");
  if (eval_every == 0) throw std::invalid_argument("train.eval_every must be positive");
  if (out_dir.empty()) throw std::invalid_argument("train.out_dir must not be empty");
  if (eval_k == 0) throw std::invalid_argument("eval.k must be positive");
}

}  // namespace metarec
