// dint: train, decompose, eval, synth and verify from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dint/checkpoint.hpp"
#include "dint/config.hpp"
#include "dint/image_io.hpp"
#include "dint/pipeline.hpp"
#include "dint/trainer.hpp"
#include "dint/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace dint;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  bool verbose = false;
};

RunConfig load_config(const Globals& g) {
  RunConfig rc = g.config.empty() ? RunConfig{} : RunConfig::load(g.config);
  if (g.seed) rc.train.seed = *g.seed;
  return rc;
}

void write_trace(const fs::path& path, const std::vector<TraceEntry>& trace, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot write loss trace");
  if (!append) out << "iteration,loss\n";
  out << std::setprecision(17);
  for (const auto& e : trace) out << e.iteration << "," << e.loss << "\n";
}

int cmd_train(const Globals& g, const std::string& resume_path) {
  if (g.config.empty()) throw std::runtime_error("train needs --config");
  const RunConfig rc = load_config(g);
  if (rc.manifest.empty()) throw std::runtime_error("config has no [data] manifest");
  const DatasetManifest manifest = DatasetManifest::load(rc.manifest);
  const std::vector<Sample> data = load_dataset(manifest, rc.split);
  if (data.empty()) throw std::runtime_error("manifest split '" + rc.split + "' has no samples");

  fs::create_directories(rc.output_dir);
  Rng init(rc.train.seed);
  Network net = Network::build(rc.network, init);
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);
  if (g.verbose) {
    std::cerr << "train: " << data.size() << " samples, " << net.parameter_count()
              << " parameters, iterations " << (resume ? resume->iteration : 0) << ".."
              << rc.train.max_iterations << "\n";
  }
  const TrainResult res = train_loop(net, data, rc.train, resume, [&](const Checkpoint& ck) {
    const fs::path p = rc.output_dir / ("checkpoint_" + std::to_string(ck.iteration) + ".ckpt");
    save_checkpoint(ck, p);
    if (g.verbose) std::cerr << "train: wrote " << p.string() << "\n";
  });
  write_trace(rc.output_dir / rc.trace_file, res.trace, resume.has_value());
  save_checkpoint(res.final_checkpoint, rc.output_dir / rc.checkpoint_file);
  if (!res.trace.empty()) {
    std::cout << "iterations " << res.trace.size() << ", first loss " << res.trace.front().loss
              << ", last loss " << res.trace.back().loss << "\n";
  }
  std::cout << "checkpoint " << (rc.output_dir / rc.checkpoint_file).string() << "\n";
  return 0;
}

int cmd_decompose(const Globals& g, const std::string& ckpt, const std::string& input,
                  const std::string& out_a, const std::string& out_s) {
  const RunConfig rc = load_config(g);
  Rng init(0);
  Network net = Network::build(rc.network, init);
  restore_checkpoint(load_checkpoint(ckpt), net);
  const Tensor image = read_png_rgb(input);
  const Decomposition d = decompose(net, image);
  write_png(out_a, d.albedo);
  write_png(out_s, d.shading);
  if (g.verbose) std::cerr << "decompose: " << image.h() << "x" << image.w() << " done\n";
  return 0;
}

int cmd_eval(const Globals& g, const std::string& pred_dir, const std::string& manifest_path,
             const std::string& out, bool mit_total, bool no_align) {
  RunConfig rc = load_config(g);
  if (mit_total) rc.eval.mit_total = true;
  if (no_align) rc.eval.align_dssim = false;
  const DatasetManifest manifest = DatasetManifest::load(manifest_path);
  if (manifest.entries.empty()) throw std::runtime_error(manifest_path + ": no samples to evaluate");
  const MetricReport report = evaluate_predictions(manifest, pred_dir, rc.eval);
  const std::string json = report.to_json();
  if (out.empty()) {
    std::cout << json << "\n";
  } else {
    std::ofstream f(out);
    f << json << "\n";
    if (!f) throw std::runtime_error(out + ": cannot write report");
  }
  for (const auto& m : report.per_sample)
    if (m.error) std::cerr << "dint: sample '" << m.id << "': " << *m.error << "\n";
  return report.failures == 0 ? 0 : 1;
}

int cmd_synth(const Globals& g, const std::string& mode, const std::string& manifest_path,
              const std::string& out_dir) {
  const DatasetManifest manifest = DatasetManifest::load(manifest_path);
  if (manifest.entries.empty()) {
    std::cerr << "dint: warning: " << manifest_path << " lists no samples; nothing to do\n";
    return 0;
  }
  const SynthMode m = mode == "gen-mit-shading" ? SynthMode::kGenMitShading : SynthMode::kResynthSintel;
  const SynthSummary s = synthesize(manifest, m, out_dir);
  std::cout << "wrote " << s.written << " samples and " << (fs::path(out_dir) / "manifest.tsv").string()
            << "\n";
  (void)g;
  return 0;
}

int cmd_verify(const Globals& g, const std::vector<std::string>& only, const std::string& corrupt,
               const std::string& scratch) {
  verify::SuiteOptions opts;
  if (g.seed) opts.seed = *g.seed;
  opts.corrupt_layer = corrupt;
  opts.scratch = scratch;
  bool all_pass = true;
  double total = 0.0;
  for (const auto& s : verify::all_suites()) {
    if (!only.empty() && std::find(only.begin(), only.end(), s.key) == only.end()) continue;
    const verify::SuiteResult r = s.run(opts);
    total += r.seconds;
    all_pass = all_pass && r.pass();
    std::cout << (r.pass() ? "PASS " : "FAIL ") << r.name << " (" << std::fixed
              << std::setprecision(1) << r.seconds << " s)\n";
    std::cout.unsetf(std::ios::floatfield);
    for (const auto& c : r.checks) {
      if (!c.pass || g.verbose) {
        std::cout << "  " << (c.pass ? "ok   " : "FAIL ") << c.name << ": " << c.detail << "\n";
      }
    }
  }
  std::cout << (all_pass ? "all suites passed" : "verification FAILED") << " in " << std::fixed
            << std::setprecision(1) << total << " s\n";
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Direct intrinsic image decomposition: training, inference, metrics and data tools"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed (overrides [train] seed)");
  app.add_option("--config", g.config, "Run configuration file")->check(CLI::ExistingFile);
  app.add_flag("-v,--verbose", g.verbose, "Print progress to stderr");

  std::string resume;
  auto* train = app.add_subcommand("train", "Train a network from a config");
  train->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  std::string ckpt, input, out_a, out_s;
  auto* dec = app.add_subcommand("decompose", "Split one image into albedo and shading PNGs");
  dec->add_option("--checkpoint", ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  dec->add_option("--input", input, "Input PNG")->required()->check(CLI::ExistingFile);
  dec->add_option("--out-albedo", out_a, "Output albedo PNG (16-bit)")->required();
  dec->add_option("--out-shading", out_s, "Output shading PNG (16-bit)")->required();

  std::string pred_dir, manifest, report_out;
  bool mit_total = false, no_align = false;
  auto* ev = app.add_subcommand("eval", "Score predictions against a manifest");
  ev->add_option("--pred-dir", pred_dir, "Directory of <id>_albedo.png / <id>_shading.png")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev->add_option("--manifest", manifest, "Ground-truth manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", report_out, "Report JSON path (default stdout)");
  ev->add_flag("--mit-total", mit_total, "Add the approximate MIT Total LMSE column");
  ev->add_flag("--no-align", no_align, "Skip brightness alignment before DSSIM");

  std::string mode, synth_manifest, out_dir;
  auto* syn = app.add_subcommand("synth", "Derive a dataset: MIT shading generation or resynthesis");
  syn->add_option("--mode", mode, "gen-mit-shading or resynth-sintel")
      ->required()
      ->check(CLI::IsMember({"gen-mit-shading", "resynth-sintel"}));
  syn->add_option("--manifest", synth_manifest, "Input manifest")->required()->check(CLI::ExistingFile);
  syn->add_option("--out-dir", out_dir, "Output directory")->required();

  std::vector<std::string> only;
  std::string corrupt, scratch;
  auto* ver = app.add_subcommand("verify", "Run the gradient, oracle and property suites");
  std::vector<std::string> keys;
  for (const auto& s : verify::all_suites()) keys.push_back(s.key);
  ver->add_option("--suite", only, "Run only these suites")->check(CLI::IsMember(keys));
  ver->add_option("--scratch", scratch, "Directory for file round trips");
  // Fault injection for checking that the suites notice a broken backward pass.
  ver->add_option("--corrupt-layer", corrupt)->group("");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(g, resume);
    if (*dec) return cmd_decompose(g, ckpt, input, out_a, out_s);
    if (*ev) return cmd_eval(g, pred_dir, manifest, report_out, mit_total, no_align);
    if (*syn) return cmd_synth(g, mode, synth_manifest, out_dir);
    if (*ver) return cmd_verify(g, only, corrupt, scratch);
  } catch (const std::exception& e) {
    std::cerr << "dint: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
