#include "metarec/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace metarec {

namespace {

constexpr char kMagic[] = "MREC1";
constexpr std::size_t kMagicLen = 5;

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ParameterSet& params, const std::string& config_text) {
  std::string out(kMagic, kMagicLen);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  }
  put<std::uint64_t>(out, config_text.size());
  out += config_text;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kMagic) != 0) {
    throw CheckpointError("not a checkpoint: bad magic");
  }
  Reader r(bytes);
  r.take(kMagicLen, "magic");
  Checkpoint ck;
  const auto count = r.get<std::uint32_t>("entry count");
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.get<std::uint32_t>("name length");
    std::string name = r.take(len, "name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw CheckpointError("checkpoint entry '" + name + "' has implausible rank");
    ad::Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>("dimension"));
      if (d != 0 && n > (bytes.size() / 8) / d) throw CheckpointError("checkpoint entry '" + name + "' is too large");
      n *= d;
    }
    std::vector<double> data(n);
    for (auto& v : data) v = r.get<double>("values");
    if (ck.params.contains(name)) throw CheckpointError("checkpoint repeats entry '" + name + "'");
    ck.params.set(std::move(name), ad::Tensor(std::move(shape), std::move(data)));
  }
  const auto cfg_len = r.get<std::uint64_t>("config length");
  ck.config_text = r.take(static_cast<std::size_t>(cfg_len), "config");
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const std::string& config_text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(params, config_text);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace metarec
