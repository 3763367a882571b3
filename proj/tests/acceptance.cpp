// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any
// criterion fails.

#include <cstdio>
#include <string>

#include "dint/verify/suites.hpp"

using namespace dint::verify;

namespace {

bool report(int id, const char* title, const SuiteResult& r, bool extra = true,
            const std::string& note = "") {
  const bool pass = r.pass() && extra;
  std::printf("%s criterion %d: %s (%.1f s)%s%s\n", pass ? "PASS" : "FAIL", id, title, r.seconds,
              note.empty() ? "" : "; ", note.c_str());
  for (const auto& c : r.checks) {
    std::printf("    %s %s: %s\n", c.pass ? "ok  " : "FAIL", c.name.c_str(), c.detail.c_str());
  }
  std::fflush(stdout);
  return pass;
}

}  // namespace

int main() {
  SuiteOptions opts;
  bool all = true;

  const SuiteResult layers = layer_gradients(opts);
  all &= report(1, "layer and loss gradients, rel. error < 1e-4, >= 5 shapes each, < 60 s", layers,
                layers.seconds < 60.0);
  all &= report(2, "whole-network gradient at channel scale 1/16, 32x32, rel. error < 1e-4",
                network_gradient(opts));
  all &= report(3, "loss algebra", loss_algebra(opts));
  all &= report(4, "oracle equivalence", oracle_equivalence(opts));
  all &= report(5, "data synthesis", data_synthesis(opts));
  all &= report(6, "shape contract", shape_contract(opts));
  all &= report(7, "training sanity on the 4-sample fixture", training_sanity(opts));
  all &= report(8, "determinism", determinism(opts));
  all &= report(9, "topology audit at channel scale 1", topology_audit(opts));

  std::printf("%s\n", all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
  return all ? 0 : 1;
}
