#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sgnet/model.hpp"

namespace sgnet {

namespace {

constexpr char kMagic[8] = {'S', 'G', 'N', 'E', 'T', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view blob) : blob_(blob) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, blob_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = blob_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == blob_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > blob_.size()) throw std::runtime_error("checkpoint: truncated parameter blob");
  }

  std::string_view blob_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

template <typename T>
std::string serialize_parameters(const SgNetModel<T>& model) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, sizeof(T));
  std::uint64_t count = 0;
  model.visit([&](const Parameter<T>&) { ++count; });
  put<std::uint64_t>(out, count);
  model.visit([&](const Parameter<T>& p) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put<std::uint64_t>(out, p.value.rows());
    put<std::uint64_t>(out, p.value.cols());
    const auto data = p.value.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size_bytes());
  });
  return out;
}

template <typename T>
void deserialize_parameters(std::string_view blob, SgNetModel<T>& model) {
  Reader r(blob);
  if (r.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(v));
  }
  if (const auto s = r.get<std::uint32_t>(); s != sizeof(T)) {
    throw std::runtime_error("checkpoint: stored scalar size " + std::to_string(s) + " does not match precision");
  }
  const auto count = r.get<std::uint64_t>();
  std::uint64_t expected = 0;
  model.visit([&](const Parameter<T>&) { ++expected; });
  if (count != expected) throw std::runtime_error("checkpoint: parameter count does not match config");
  model.visit([&](Parameter<T>& p) {
    const auto len = r.get<std::uint32_t>();
    const auto name = r.take(len);
    if (name != p.name) throw std::runtime_error("checkpoint: expected parameter " + p.name + ", found " + std::string(name));
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    }
    const auto bytes = r.take(rows * cols * sizeof(T));
    std::memcpy(p.value.data().data(), bytes.data(), bytes.size());
  });
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
}

template <typename T>
void save_checkpoint(const std::string& path, const SgNetModel<T>& model, const nlohmann::json& metadata) {
  write_file(path, serialize_parameters(model));
  nlohmann::json side;
  side["format_version"] = kCheckpointVersion;
  side["scalar_bytes"] = sizeof(T);
  side["config"] = model.config;
  side["metadata"] = metadata;
  write_file(path + ".json", side.dump(2) + "\n");
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  const auto side = nlohmann::json::parse(read_file(path + ".json"));
  if (side.at("format_version").get<std::uint32_t>() != kCheckpointVersion) {
    throw std::runtime_error("checkpoint sidecar: unsupported version");
  }
  CheckpointHeader h;
  h.config = side.at("config").get<SgNetConfig>();
  h.scalar_bytes = side.at("scalar_bytes").get<std::size_t>();
  h.metadata = side.value("metadata", nlohmann::json::object());
  return h;
}

template <typename T>
SgNetModel<T> load_checkpoint(const std::string& path, nlohmann::json* metadata) {
  const auto header = read_checkpoint_header(path);
  if (header.scalar_bytes != sizeof(T)) throw std::runtime_error("checkpoint precision does not match requested");
  auto model = SgNetModel<T>::init(header.config);
  deserialize_parameters(read_file(path), model);
  if (metadata) *metadata = header.metadata;
  return model;
}

#define SGNET_INSTANTIATE(T)                                                                            \
  template std::string serialize_parameters(const SgNetModel<T>&);                                     \
  template void deserialize_parameters(std::string_view, SgNetModel<T>&);                              \
  template void save_checkpoint(const std::string&, const SgNetModel<T>&, const nlohmann::json&);      \
  template SgNetModel<T> load_checkpoint(const std::string&, nlohmann::json*);

SGNET_INSTANTIATE(float)
SGNET_INSTANTIATE(double)

#undef SGNET_INSTANTIATE

}  // namespace sgnet
