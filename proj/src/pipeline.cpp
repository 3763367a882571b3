#include "dint/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dint/image_io.hpp"

namespace dint {

Decomposition decompose(const Network& net, const Tensor& image) {
  if (image.empty() || image.n() != 1 || image.c() != 3) {
    throw ShapeError("decompose expects a 1 x 3 x H x W image, got " + image.shape().str());
  }
  const Padded p = pad_to_multiple(image, net.config().input_multiple);
  Rng unused(0);
  const NetworkOutput out = net.forward(p.tensor, false, unused);
  auto to_linear = [&](const Tensor& log_map) {
    return elementwise_map(crop_to(log_map, p.orig_h, p.orig_w), [](double v) {
      const double e = std::exp(v);
      return std::isfinite(e) ? std::clamp(e, 0.0, 1.0) : (v > 0 ? 1.0 : 0.0);
    });
  };
  return {to_linear(out.log_albedo), to_linear(out.log_shading)};
}

SynthSummary synthesize(const DatasetManifest& in, SynthMode mode,
                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  SynthSummary summary;
  summary.manifest.mode = in.mode;
  for (const auto& e : in.entries) {
    ManifestEntry o = e;
    o.image = e.id + "_image.png";
    o.albedo = e.id + "_albedo.png";
    o.shading = e.id + "_shading.png";
    try {
      const Tensor albedo = read_png_rgb(e.albedo);
      if (mode == SynthMode::kResynthSintel) {
        const Tensor shading = read_png_rgb(e.shading);
        if (shading.shape() != albedo.shape()) {
          throw DataError("albedo " + albedo.shape().str() + " and shading " +
                          shading.shape().str() + " differ in extent");
        }
        // Store the decoded (already quantised) factors so the written
        // triple is consistent up to one rounding of the product.
        write_png(out_dir / o.image, resynthesize(albedo, shading));
        write_png(out_dir / o.albedo, albedo);
        write_png(out_dir / o.shading, shading);
        if (e.mask) std::filesystem::copy_file(*e.mask, out_dir / (e.id + "_mask.png"),
                                               std::filesystem::copy_options::overwrite_existing);
        if (e.mask) o.mask = e.id + "_mask.png";
      } else {
        const Tensor image = read_png_rgb(e.image);
        if (image.shape() != albedo.shape()) {
          throw DataError("image " + image.shape().str() + " and albedo " +
                          albedo.shape().str() + " differ in extent");
        }
        const GeneratedShading g = generate_mit_shading(image, albedo);
        Tensor mask = g.mask;
        if (e.mask) {
          const Tensor given = read_png(*e.mask);
          for (std::size_t h = 0; h < mask.h(); ++h)
            for (std::size_t w = 0; w < mask.w(); ++w) {
              bool valid = false;
              for (std::size_t c = 0; c < given.c(); ++c) valid = valid || given(0, c, h, w) != 0.0;
              if (!valid) mask(0, 0, h, w) = 0.0;
            }
        }
        write_png(out_dir / o.image, image);
        write_png(out_dir / o.albedo, albedo);
        write_png(out_dir / o.shading, g.shading);
        o.mask.reset();
        if (sum(mask) < static_cast<double>(mask.size())) {
          o.mask = e.id + "_mask.png";
          write_png(out_dir / *o.mask, mask, 8);
        }
      }
    } catch (const ImageIoError& err) {
      throw DataError("sample '" + e.id + "': " + err.what());
    } catch (const DataError& err) {
      throw DataError("sample '" + e.id + "': " + err.what());
    }
    summary.manifest.entries.push_back(std::move(o));
    ++summary.written;
  }
  std::ofstream out(out_dir / "manifest.tsv");
  out << summary.manifest.serialize();
  if (!out) throw DataError((out_dir / "manifest.tsv").string() + ": write failed");
  return summary;
}

MetricReport evaluate_predictions(const DatasetManifest& manifest,
                                  const std::filesystem::path& pred_dir,
                                  const EvalOptions& opts) {
  MetricReport report;
  for (const auto& e : manifest.entries) {
    SampleMetrics m;
    try {
      const Sample s = load_sample(e);
      EvalSample es;
      es.id = e.id;
      es.albedo_truth = s.albedo;
      es.shading_truth = s.shading;
      es.mask = s.mask;
      for (const auto& [suffix, dst] : {std::pair{"_albedo.png", &es.albedo_pred},
                                        std::pair{"_shading.png", &es.shading_pred}}) {
        const auto path = pred_dir / (e.id + suffix);
        if (!std::filesystem::exists(path)) throw DataError("missing prediction " + path.string());
        *dst = read_png_rgb(path);
      }
      m = evaluate_sample(es, opts);
    } catch (const std::exception& err) {
      m = SampleMetrics{};
      m.id = e.id;
      m.error = err.what();
    }
    report.per_sample.push_back(std::move(m));
  }
  finalize_report(report, opts.mit_total);
  return report;
}

}  // namespace dint
