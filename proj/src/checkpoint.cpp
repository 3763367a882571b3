#include "dint/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "dint/network.hpp"

namespace dint {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'I', 'N', 'T'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
  template <typename T>
  T get(const char* what) {
    T v;
    need(sizeof(T), what);
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  void bytes(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  bool done() const { return pos == buf.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (buf.size() - pos < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

void write_section(Writer& w, const std::vector<NamedTensor>& tensors) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw CheckpointError("tensor name too long: " + t.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    const Shape& s = t.tensor.shape();
    w.put<std::uint8_t>(4);
    for (std::size_t d : {s.n, s.c, s.h, s.w}) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t.tensor.data()) w.put<float>(static_cast<float>(v));
  }
}

std::vector<NamedTensor> read_section(Reader& r) {
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = r.get<std::uint16_t>("name length");
    t.name.resize(len);
    r.bytes(t.name.data(), len, "tensor name");
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank < 1 || rank > 4) {
      throw CheckpointError("tensor '" + t.name + "' has unsupported rank " + std::to_string(rank));
    }
    std::size_t dims[4] = {1, 1, 1, 1};
    for (std::uint8_t d = 0; d < rank; ++d) dims[4 - rank + d] = r.get<std::uint32_t>("dimension");
    const Shape s{dims[0], dims[1], dims[2], dims[3]};
    if (s.count() == 0) throw CheckpointError("tensor '" + t.name + "' has a zero dimension");
    std::vector<double> data(s.count());
    for (double& v : data) v = r.get<float>("tensor payload");
    t.tensor = Tensor(s, std::move(data));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  write_section(w, params);
  write_section(w, momentum);
  w.put<std::uint64_t>(iteration);
  for (std::uint64_t v : rng) w.put<std::uint64_t>(v);
  w.bytes(fingerprint.data(), fingerprint.size());
  return std::move(w.out);
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kVersion) + ")");
  }
  Checkpoint ck;
  ck.params = read_section(r);
  ck.momentum = read_section(r);
  ck.iteration = r.get<std::uint64_t>("iteration");
  for (auto& v : ck.rng) v = r.get<std::uint64_t>("rng state");
  r.bytes(ck.fingerprint.data(), ck.fingerprint.size(), "config fingerprint");
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint data");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto bytes = ck.serialize();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(path.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path.string() + ": cannot open checkpoint");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return Checkpoint::deserialize(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

Checkpoint capture_checkpoint(const Network& net, std::uint64_t iteration, const Rng& rng,
                              const Fingerprint& fingerprint) {
  Checkpoint ck;
  ck.iteration = iteration;
  ck.rng = rng.state();
  ck.fingerprint = fingerprint;
  for (const auto& p : net.parameters()) {
    ck.params.push_back({p.name, p.param->value});
    ck.momentum.push_back({p.name, p.param->velocity});
  }
  return ck;
}

void restore_checkpoint(const Checkpoint& ck, Network& net) {
  auto params = net.parameters();
  auto apply = [&](const std::vector<NamedTensor>& section, bool momentum) {
    const char* what = momentum ? "momentum" : "parameter";
    if (section.size() != params.size()) {
      throw CheckpointError(std::string("checkpoint has ") + std::to_string(section.size()) + " " +
                            what + " tensors, network has " + std::to_string(params.size()));
    }
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : section) by_name[t.name] = &t;
    for (auto& p : params) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) {
        throw CheckpointError(std::string("checkpoint lacks ") + what + " tensor '" + p.name + "'");
      }
      const Tensor& src = it->second->tensor;
      if (src.shape() != p.param->value.shape()) {
        throw CheckpointError(std::string(what) + " tensor '" + p.name + "' has shape " +
                              src.shape().str() + " in the checkpoint but " +
                              p.param->value.shape().str() + " in the network");
      }
    }
    for (auto& p : params) (momentum ? p.param->velocity : p.param->value) = by_name[p.name]->tensor;
  };
  apply(ck.params, false);
  apply(ck.momentum, true);
}

Fingerprint sha256(const std::string& text) {
  Fingerprint fp{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), fp.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != fp.size()) {
    throw std::runtime_error("sha256 failed");
  }
  return fp;
}

std::string to_hex(const Fingerprint& fp) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto b : fp) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

}  // namespace dint
