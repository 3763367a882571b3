#include "dint/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "dint/image_io.hpp"

namespace dint {

Tensor full_mask(std::size_t h, std::size_t w) { return Tensor(1, 1, h, w, 1.0); }

void Sample::validate() const {
  const std::string who = "sample '" + id + "'";
  for (const Tensor* t : {&image, &albedo, &shading}) {
    if (t->empty() || t->n() != 1 || t->c() != 3) {
      throw DataError(who + ": images must be 1 x 3 x H x W, got " + t->shape().str());
    }
  }
  if (albedo.shape() != image.shape() || shading.shape() != image.shape()) {
    throw DataError(who + ": extent mismatch between image " + image.shape().str() +
                    ", albedo " + albedo.shape().str() + " and shading " + shading.shape().str());
  }
  if (mask.shape() != Shape{1, 1, image.h(), image.w()}) {
    throw DataError(who + ": mask " + mask.shape().str() + " does not match image " +
                    image.shape().str());
  }
  for (const Tensor* t : {&image, &albedo, &shading}) {
    for (double v : t->data()) {
      if (!std::isfinite(v) || v < 0.0) throw DataError(who + ": values must be finite and >= 0");
    }
  }
}

// Manifests ---------------------------------------------------------------------

const char* split_mode_name(SplitMode m) {
  switch (m) {
    case SplitMode::kImage: return "image";
    case SplitMode::kScene: return "scene";
    case SplitMode::kObject: return "object";
  }
  return "image";
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

}  // namespace

DatasetManifest DatasetManifest::parse(const std::string& text,
                                       const std::filesystem::path& base_dir) {
  DatasetManifest m;
  std::string current_split;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line.rfind("#!", 0) == 0) {
      const std::string d = trim(line.substr(2));
      const auto eq = d.find('=');
      const std::string key = trim(d.substr(0, eq));
      const std::string value = eq == std::string::npos ? "" : trim(d.substr(eq + 1));
      if (key == "mode") {
        if (value == "image") m.mode = SplitMode::kImage;
        else if (value == "scene") m.mode = SplitMode::kScene;
        else if (value == "object") m.mode = SplitMode::kObject;
        else throw DataError("manifest line " + std::to_string(lineno) + ": unknown split mode '" + value + "'");
      } else if (key == "split") {
        current_split = value;
      } else {
        throw DataError("manifest line " + std::to_string(lineno) + ": unknown directive '" + key + "'");
      }
      continue;
    }
    if (line[0] == '#') continue;
    const auto f = split_tabs(line);
    if (f.size() != 5 && f.size() != 6) {
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 5 or 6 tab-separated fields, got " +
                      std::to_string(f.size()));
    }
    ManifestEntry e;
    e.id = f[0];
    e.image = resolve(base_dir, f[1]);
    e.albedo = resolve(base_dir, f[2]);
    e.shading = resolve(base_dir, f[3]);
    if (f.size() == 6) {
      if (!f[4].empty() && f[4] != "-") e.mask = resolve(base_dir, f[4]);
      e.scene = f[5];
    } else {
      e.scene = f[4];
    }
    e.split = current_split;
    if (e.id.empty()) throw DataError("manifest line " + std::to_string(lineno) + ": empty sample id");
    if (!ids.insert(e.id).second) {
      throw DataError("manifest line " + std::to_string(lineno) + ": duplicate sample id '" + e.id + "'");
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open manifest");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

void DatasetManifest::validate() const {
  if (mode == SplitMode::kImage) return;
  std::map<std::string, std::string> owner;
  for (const auto& e : entries) {
    auto [it, inserted] = owner.emplace(e.scene, e.split);
    if (!inserted && it->second != e.split) {
      throw DataError(std::string(split_mode_name(mode)) + "-split manifest: " +
                      (mode == SplitMode::kScene ? "scene '" : "object '") + e.scene +
                      "' appears in both '" + it->second + "' and '" + e.split + "'");
    }
  }
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (name.empty() || e.split == name) out.push_back(e);
  return out;
}

std::string DatasetManifest::serialize() const {
  std::ostringstream out;
  out << "#! mode=" << split_mode_name(mode) << "\n";
  std::string current;
  for (const auto& e : entries) {
    if (e.split != current) {
      out << "#! split=" << e.split << "\n";
      current = e.split;
    }
    out << e.id << '\t' << e.image.string() << '\t' << e.albedo.string() << '\t'
        << e.shading.string() << '\t' << (e.mask ? e.mask->string() : "-") << '\t' << e.scene
        << "\n";
  }
  return out.str();
}

Sample load_sample(const ManifestEntry& entry) {
  Sample s;
  s.id = entry.id;
  s.scene = entry.scene;
  try {
    s.image = read_png_rgb(entry.image);
    s.albedo = read_png_rgb(entry.albedo);
    s.shading = read_png_rgb(entry.shading);
    if (entry.mask) {
      Tensor m = read_png(*entry.mask);
      s.mask = Tensor(1, 1, m.h(), m.w());
      for (std::size_t h = 0; h < m.h(); ++h)
        for (std::size_t w = 0; w < m.w(); ++w) {
          bool valid = false;
          for (std::size_t c = 0; c < m.c(); ++c) valid = valid || m(0, c, h, w) != 0.0;
          s.mask(0, 0, h, w) = valid ? 1.0 : 0.0;
        }
    } else {
      s.mask = full_mask(s.image.h(), s.image.w());
    }
  } catch (const ImageIoError& e) {
    throw DataError("sample '" + entry.id + "': " + e.what());
  }
  s.validate();
  return s;
}

std::vector<Sample> load_dataset(const DatasetManifest& manifest, const std::string& split) {
  std::vector<Sample> out;
  for (const auto& e : manifest.split(split)) out.push_back(load_sample(e));
  return out;
}

// Shading generation ------------------------------------------------------------------

double fit_alpha(const Tensor& target, const Tensor& basis, const Tensor& mask) {
  require_same_shape(target, basis, "fit_alpha");
  if (!mask.empty()) require_shape(mask, {basis.n(), 1, basis.h(), basis.w()}, "fit_alpha mask");
  double tb = 0.0, bb = 0.0;
  for (std::size_t n = 0; n < basis.n(); ++n)
    for (std::size_t c = 0; c < basis.c(); ++c)
      for (std::size_t h = 0; h < basis.h(); ++h)
        for (std::size_t w = 0; w < basis.w(); ++w) {
          if (!mask.empty() && mask(n, 0, h, w) == 0.0) continue;
          const double b = basis(n, c, h, w);
          tb += target(n, c, h, w) * b;
          bb += b * b;
        }
  if (bb == 0.0) throw std::invalid_argument("fit_alpha: basis is zero, alpha is undefined");
  return tb / bb;
}

GeneratedShading generate_mit_shading(const Tensor& image, const Tensor& albedo, double eps) {
  require_same_shape(image, albedo, "generate_mit_shading");
  if (image.n() != 1) throw ShapeError("generate_mit_shading: expects a single image");
  const std::size_t H = image.h(), W = image.w(), C = image.c();
  GeneratedShading g;
  g.mask = full_mask(H, W);
  Tensor s0(1, 1, H, W);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t w = 0; w < W; ++w) {
      double im = 0.0, am = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        im += image(0, c, h, w);
        am += albedo(0, c, h, w);
      }
      im /= static_cast<double>(C);
      am /= static_cast<double>(C);
      if (am < eps) {
        g.mask(0, 0, h, w) = 0.0;
        am = eps;
      }
      s0(0, 0, h, w) = im / am;
    }
  }
  Tensor product(image.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) product(0, c, h, w) = albedo(0, c, h, w) * s0(0, 0, h, w);
  g.alpha = fit_alpha(image, product, g.mask);
  if (!(g.alpha > 0.0)) {
    throw std::invalid_argument("generate_mit_shading: fitted alpha is not positive");
  }
  g.shading = Tensor(1, 3, H, W);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) g.shading(0, c, h, w) = s0(0, 0, h, w) / g.alpha;
  return g;
}

Tensor resynthesize(const Tensor& albedo, const Tensor& shading) {
  require_same_shape(albedo, shading, "resynthesize");
  return hadamard(albedo, shading);
}

// Augmentation ---------------------------------------------------------------------------

void AugmentConfig::validate() const {
  if (crop_h < 1 || crop_w < 1) throw std::invalid_argument("augment: crop extents must be >= 1");
  if (!(mirror_prob >= 0.0 && mirror_prob <= 1.0)) {
    throw std::invalid_argument("augment: mirror_prob must lie in [0, 1]");
  }
  if (rotate_min_deg > rotate_max_deg) throw std::invalid_argument("augment: rotation range is not ordered");
  if (!(zoom_min > 0.0) || zoom_min > zoom_max) {
    throw std::invalid_argument("augment: zoom range must be positive and ordered");
  }
}

namespace {

struct SourcePoint {
  double y, x;
};

double bilinear_at(const double* plane, std::size_t H, std::size_t W, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(H - 1));
  x = std::clamp(x, 0.0, static_cast<double>(W - 1));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = plane[y0 * W + x0] * (1.0 - fx) + plane[y0 * W + x1] * fx;
  const double bot = plane[y1 * W + x0] * (1.0 - fx) + plane[y1 * W + x1] * fx;
  return top * (1.0 - fy) + bot * fy;
}

}  // namespace

Sample apply_augment(const Sample& s, const AugmentConfig& cfg, const AugmentDraw& d) {
  cfg.validate();
  const std::size_t H = s.image.h(), W = s.image.w();
  const auto zh = static_cast<std::size_t>(std::lround(static_cast<double>(H) * d.zoom));
  const auto zw = static_cast<std::size_t>(std::lround(static_cast<double>(W) * d.zoom));
  if (zh < cfg.crop_h || zw < cfg.crop_w) {
    throw DataError("sample '" + s.id + "': cannot crop " + std::to_string(cfg.crop_h) + "x" +
                    std::to_string(cfg.crop_w) + " from " + std::to_string(zh) + "x" +
                    std::to_string(zw) + " (after zoom " + std::to_string(d.zoom) + ")");
  }
  if (d.offset_y + cfg.crop_h > zh || d.offset_x + cfg.crop_w > zw) {
    throw DataError("sample '" + s.id + "': crop offset out of range");
  }
  const double sy = static_cast<double>(zh) / static_cast<double>(H);
  const double sx = static_cast<double>(zw) / static_cast<double>(W);
  const double cy = static_cast<double>(zh) / 2.0, cx = static_cast<double>(zw) / 2.0;
  const double theta = d.rotate_deg * std::numbers::pi / 180.0;
  const double ct = d.rotate_deg == 0.0 ? 1.0 : std::cos(theta);
  const double st = d.rotate_deg == 0.0 ? 0.0 : std::sin(theta);

  const std::size_t oh = cfg.crop_h, ow = cfg.crop_w;
  Sample out;
  out.id = s.id;
  out.scene = s.scene;
  out.image = Tensor(1, 3, oh, ow);
  out.albedo = Tensor(1, 3, oh, ow);
  out.shading = Tensor(1, 3, oh, ow);
  out.mask = Tensor(1, 1, oh, ow);
  constexpr double kEdge = 1e-9;
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      const std::size_t cc = d.mirror ? ow - 1 - c : c;
      // Pixel centre in the zoomed frame, rotated back about its centre.
      const double yz = static_cast<double>(r + d.offset_y) + 0.5 - cy;
      const double xz = static_cast<double>(cc + d.offset_x) + 0.5 - cx;
      const double yr = cy + ct * yz - st * xz;
      const double xr = cx + st * yz + ct * xz;
      const double ys = yr / sy - 0.5, xs = xr / sx - 0.5;
      const bool inside = ys >= -kEdge && xs >= -kEdge &&
                          ys <= static_cast<double>(H - 1) + kEdge &&
                          xs <= static_cast<double>(W - 1) + kEdge;
      for (std::size_t k = 0; k < 3; ++k) {
        out.image(0, k, r, c) = bilinear_at(s.image.plane(0, k), H, W, ys, xs);
        out.albedo(0, k, r, c) = bilinear_at(s.albedo.plane(0, k), H, W, ys, xs);
        out.shading(0, k, r, c) = bilinear_at(s.shading.plane(0, k), H, W, ys, xs);
      }
      double valid = 0.0;
      if (inside) {
        const auto ny = static_cast<std::size_t>(std::clamp<long>(std::lround(ys), 0, static_cast<long>(H - 1)));
        const auto nx = static_cast<std::size_t>(std::clamp<long>(std::lround(xs), 0, static_cast<long>(W - 1)));
        valid = s.mask(0, 0, ny, nx) != 0.0 ? 1.0 : 0.0;
      }
      out.mask(0, 0, r, c) = valid;
    }
  }
  return out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng, AugmentDraw* draw) {
  cfg.validate();
  AugmentDraw d;
  if (cfg.enable_rotate_zoom) {
    d.zoom = rng.uniform(cfg.zoom_min, cfg.zoom_max);
    d.rotate_deg = rng.uniform(cfg.rotate_min_deg, cfg.rotate_max_deg);
  }
  const auto zh = static_cast<std::size_t>(std::lround(static_cast<double>(s.image.h()) * d.zoom));
  const auto zw = static_cast<std::size_t>(std::lround(static_cast<double>(s.image.w()) * d.zoom));
  if (zh < cfg.crop_h || zw < cfg.crop_w) {
    throw DataError("sample '" + s.id + "': cannot crop " + std::to_string(cfg.crop_h) + "x" +
                    std::to_string(cfg.crop_w) + " from " + std::to_string(zh) + "x" +
                    std::to_string(zw));
  }
  d.offset_y = static_cast<std::size_t>(rng.below(zh - cfg.crop_h + 1));
  d.offset_x = static_cast<std::size_t>(rng.below(zw - cfg.crop_w + 1));
  d.mirror = cfg.mirror_prob > 0.0 && rng.bernoulli(cfg.mirror_prob);
  if (draw) *draw = d;
  return apply_augment(s, cfg, d);
}

// Padding ---------------------------------------------------------------------------------

Padded pad_to_multiple(const Tensor& t, std::size_t m) {
  if (m < 1) throw std::invalid_argument("pad_to_multiple: multiple must be >= 1");
  const std::size_t H = t.h(), W = t.w();
  const std::size_t ph = (H + m - 1) / m * m, pw = (W + m - 1) / m * m;
  Padded p{Tensor(t.n(), t.c(), ph, pw), H, W};
  for (std::size_t n = 0; n < t.n(); ++n)
    for (std::size_t c = 0; c < t.c(); ++c)
      for (std::size_t h = 0; h < ph; ++h)
        for (std::size_t w = 0; w < pw; ++w)
          p.tensor(n, c, h, w) = t(n, c, std::min(h, H - 1), std::min(w, W - 1));
  return p;
}

Tensor crop_to(const Tensor& t, std::size_t h, std::size_t w) {
  if (h > t.h() || w > t.w() || h == 0 || w == 0) {
    throw ShapeError("crop_to: cannot take " + std::to_string(h) + "x" + std::to_string(w) +
                     " from " + t.shape().str());
  }
  Tensor out(t.n(), t.c(), h, w);
  for (std::size_t n = 0; n < t.n(); ++n)
    for (std::size_t c = 0; c < t.c(); ++c)
      for (std::size_t y = 0; y < h; ++y)
        std::copy_n(t.plane(n, c) + y * t.w(), w, out.plane(n, c) + y * w);
  return out;
}

}  // namespace dint
