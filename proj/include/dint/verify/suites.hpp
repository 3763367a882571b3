#pragma once

// Property and oracle suites run by `dint verify` and the acceptance test.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dint/data.hpp"
#include "dint/network.hpp"
#include "dint/trainer.hpp"

namespace dint::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteResult {
  std::string name;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool pass() const;
  /// Names of the failing checks, comma separated.
  std::string failures() const;
};

struct SuiteOptions {
  std::uint64_t seed = 20150921;
  /// Test hook: the analytic gradient of the named layer (a layer kind
  /// such as "conv" or "prelu", a loss "sil2"/"gradient_loss", or a
  /// network layer such as "s2.conv3") is scaled by 1.01 before it is
  /// compared, so a broken backward pass can be simulated.
  std::string corrupt_layer;
  /// Where file round trips happen; empty means a fresh temp directory.
  std::filesystem::path scratch;
};

SuiteResult layer_gradients(const SuiteOptions& opts);
SuiteResult network_gradient(const SuiteOptions& opts);
SuiteResult loss_algebra(const SuiteOptions& opts);
SuiteResult oracle_equivalence(const SuiteOptions& opts);
SuiteResult data_synthesis(const SuiteOptions& opts);
SuiteResult shape_contract(const SuiteOptions& opts);
SuiteResult training_sanity(const SuiteOptions& opts);
SuiteResult determinism(const SuiteOptions& opts);
SuiteResult topology_audit(const SuiteOptions& opts);
/// Tensor, RNG, layer, data, metric and trainer invariants not covered
/// by the suites above.
SuiteResult properties(const SuiteOptions& opts);

using SuiteFn = SuiteResult (*)(const SuiteOptions&);
struct SuiteEntry {
  const char* key;
  SuiteFn run;
};
/// Every suite in a fixed order.
const std::vector<SuiteEntry>& all_suites();

// Overfit fixture ---------------------------------------------------------------

/// `count` synthetic samples: random axis-aligned patches of constant albedo
/// times a smooth grey shading field, with I = A * S.
std::vector<Sample> overfit_fixture(std::uint64_t seed, std::size_t count = 4,
                                    std::size_t size = 64);
NetworkConfig overfit_network_config();
TrainConfig overfit_train_config(std::uint64_t seed);

struct OverfitOutcome {
  std::vector<TraceEntry> trace;
  double initial_loss = 0.0;
  /// Mean of the last 20 trace entries.
  double final_loss = 0.0;
  bool finite = true;
  /// si-MSE of the eval-mode decomposition, averaged over the fixture.
  double mse_albedo = 0.0;
  double mse_shading = 0.0;
  double worst_albedo = 0.0;
  double worst_shading = 0.0;
  double seconds = 0.0;
};

OverfitOutcome run_overfit(std::uint64_t seed);

}  // namespace dint::verify
