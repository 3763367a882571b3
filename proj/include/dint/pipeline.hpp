#pragma once

#include <filesystem>
#include <string>

#include "dint/data.hpp"
#include "dint/metrics.hpp"
#include "dint/network.hpp"

namespace dint {

/// Linear-domain albedo and shading at the input's own extents.
struct Decomposition {
  Tensor albedo;
  Tensor shading;
};

/// Pads `image` (1 x 3 x H x W) to the network's input multiple, runs an
/// eval-mode forward, crops back, exponentiates and clips to [0, 1].
Decomposition decompose(const Network& net, const Tensor& image);

enum class SynthMode { kGenMitShading, kResynthSintel };

struct SynthSummary {
  DatasetManifest manifest;
  std::size_t written = 0;
};

/// Applies shading generation or resynthesis to every manifest entry,
/// writing 16-bit PNGs and `manifest.tsv` under `out_dir`. In
/// gen-mit-shading mode the input shading column is ignored (may be "-")
/// and guarded pixels become a mask file.
SynthSummary synthesize(const DatasetManifest& in, SynthMode mode,
                        const std::filesystem::path& out_dir);

/// Scores `<id>_albedo.png` / `<id>_shading.png` in `pred_dir` against
/// every manifest entry. Missing or unreadable predictions are recorded as
/// per-sample failures.
MetricReport evaluate_predictions(const DatasetManifest& manifest,
                                  const std::filesystem::path& pred_dir,
                                  const EvalOptions& opts = {});

}  // namespace dint
