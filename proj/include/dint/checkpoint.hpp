#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dint/rng.hpp"
#include "dint/tensor.hpp"

namespace dint {

class Network;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Fingerprint = std::array<std::uint8_t, 32>;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Training state: parameters, momentum buffers, iteration and RNG.
///
/// File layout (little-endian): magic "DINT", version u16, tensor count u32,
/// then per tensor: name length u16, UTF-8 name, rank u8, dims u32 x rank,
/// float32 payload. The momentum section repeats that layout (count
/// included), followed by iteration u64, RNG state 4 x u64 and a 32-byte
/// config fingerprint.
struct Checkpoint {
  static constexpr std::uint16_t kVersion = 1;

  std::uint64_t iteration = 0;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> momentum;
  Rng::State rng{};
  Fingerprint fingerprint{};

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of the network's parameters and momentum buffers.
Checkpoint capture_checkpoint(const Network& net, std::uint64_t iteration, const Rng& rng,
                              const Fingerprint& fingerprint);
/// Copies parameters and momentum into `net`; rejects a name or shape
/// mismatch naming the tensor.
void restore_checkpoint(const Checkpoint& ck, Network& net);

/// SHA-256 of `text`.
Fingerprint sha256(const std::string& text);
std::string to_hex(const Fingerprint& fp);

}  // namespace dint
