#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dint/rng.hpp"
#include "dint/tensor.hpp"

namespace dint {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One training/evaluation example in linear intensity space.
struct Sample {
  std::string id;
  std::string scene;
  Tensor image;    // 1 x 3 x H x W
  Tensor albedo;   // 1 x 3 x H x W
  Tensor shading;  // 1 x 3 x H x W
  Tensor mask;     // 1 x 1 x H x W, 1 = valid

  void validate() const;
};

/// All-ones 1 x 1 x H x W mask.
Tensor full_mask(std::size_t h, std::size_t w);

// Manifests ------------------------------------------------------------------

enum class SplitMode { kImage, kScene, kObject };

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path albedo;
  std::filesystem::path shading;
  std::optional<std::filesystem::path> mask;
  std::string scene;
  /// "train", "test" or empty when the manifest has no split sections.
  std::string split;
};

/// Tab-separated records `id image albedo shading [mask] scene`. Lines
/// starting with `#` are comments, except the directives `#! mode=<image|
/// scene|object>` and `#! split=<name>` (applies to the records after it).
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  SplitMode mode = SplitMode::kImage;

  static DatasetManifest parse(const std::string& text,
                               const std::filesystem::path& base_dir = {});
  static DatasetManifest load(const std::filesystem::path& path);

  /// Enforces that scene/object ids never straddle two splits.
  void validate() const;
  std::vector<ManifestEntry> split(const std::string& name) const;
  std::string serialize() const;
};

const char* split_mode_name(SplitMode m);

/// Decodes one entry; a missing mask file means every pixel is valid.
Sample load_sample(const ManifestEntry& entry);
/// Loads every entry (optionally only one split), in manifest order.
std::vector<Sample> load_dataset(const DatasetManifest& manifest, const std::string& split = "");

// Shading generation and resynthesis -------------------------------------------

/// alpha minimising sum (target - alpha * basis)^2, i.e. <t,b> / <b,b>.
/// With a mask (N x 1 x H x W, broadcast over channels) only valid entries
/// count.
double fit_alpha(const Tensor& target, const Tensor& basis, const Tensor& mask = {});

struct GeneratedShading {
  Tensor shading;  // 1 x 3 x H x W, grey replicated over channels
  double alpha = 1.0;
  /// 1 x 1 x H x W; pixels whose albedo mean needed the guard are 0.
  Tensor mask;
};

/// Shading from an image and its albedo: S0 = mean_c(I) / max(mean_c(A), eps),
/// alpha = fit_alpha(I, A * S0), S = S0 / alpha.
GeneratedShading generate_mit_shading(const Tensor& image, const Tensor& albedo,
                                      double eps = kLogEpsilon);

/// I = A * S elementwise.
Tensor resynthesize(const Tensor& albedo, const Tensor& shading);

// Augmentation -------------------------------------------------------------------

struct AugmentConfig {
  std::size_t crop_h = 416;
  std::size_t crop_w = 416;
  double mirror_prob = 0.5;
  double rotate_min_deg = -15.0;
  double rotate_max_deg = 15.0;
  double zoom_min = 0.8;
  double zoom_max = 1.2;
  /// Random rotation and zoom on top of crop + mirror.
  bool enable_rotate_zoom = false;

  void validate() const;
};

/// The transform drawn for one augmentation call.
struct AugmentDraw {
  double zoom = 1.0;
  double rotate_deg = 0.0;
  std::size_t offset_y = 0;
  std::size_t offset_x = 0;
  bool mirror = false;
};

/// Zoom, rotate, crop and mirror with one draw shared by image, albedo,
/// shading and mask. Images are sampled bilinearly, the mask by nearest
/// neighbour; output pixels whose source falls outside the input are
/// marked invalid.
Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng, AugmentDraw* draw = nullptr);
Sample apply_augment(const Sample& s, const AugmentConfig& cfg, const AugmentDraw& draw);

// Padding --------------------------------------------------------------------------

struct Padded {
  Tensor tensor;
  std::size_t orig_h = 0;
  std::size_t orig_w = 0;
};

/// Replicates the last row/column until both extents are multiples of m.
Padded pad_to_multiple(const Tensor& t, std::size_t m);
/// Top-left h x w window.
Tensor crop_to(const Tensor& t, std::size_t h, std::size_t w);

}  // namespace dint
