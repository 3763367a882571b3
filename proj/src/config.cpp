#include "dint/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <set>
#include <sstream>

namespace dint {

namespace pt = boost::property_tree;

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long u;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    u = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return u;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  RunConfig rc;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, node] : body) {
      const std::string v = node.data();
      const std::string full = section + "." + key;
      if (section == "network") {
        if (key == "channel_scale") rc.network.channel_scale = parse_double(full, v);
        else if (key == "hypercolumn") rc.network.use_hypercolumn = parse_bool(full, v);
        else if (key == "deconv_head") rc.network.use_deconv_head = parse_bool(full, v);
        else if (key == "dropout") rc.network.dropout_prob = parse_double(full, v);
        else if (key == "input_multiple") rc.network.input_multiple = parse_uint(full, v);
        else throw ConfigError("config: unknown key '" + full + "'");
      } else if (section == "train") {
        if (key == "base_lr") rc.train.base_lr = parse_double(full, v);
        else if (key == "momentum") rc.train.momentum = parse_double(full, v);
        else if (key == "batch_size") rc.train.batch_size = parse_uint(full, v);
        else if (key == "max_iterations") rc.train.max_iterations = parse_uint(full, v);
        else if (key == "seed") rc.train.seed = parse_uint(full, v);
        else if (key == "checkpoint_every") rc.train.checkpoint_every = parse_uint(full, v);
        else if (key == "augment") rc.train.use_augment = parse_bool(full, v);
        else throw ConfigError("config: unknown key '" + full + "'");
      } else if (section == "loss") {
        if (key == "lambda") rc.train.loss.lambda = parse_double(full, v);
        else if (key == "gradient_loss") rc.train.loss.use_gradient_loss = parse_bool(full, v);
        else if (key == "log_epsilon") rc.train.loss.log_epsilon = parse_double(full, v);
        else throw ConfigError("config: unknown key '" + full + "'");
      } else if (section == "augment") {
        auto& a = rc.train.augment;
        if (key == "crop_h") a.crop_h = parse_uint(full, v);
        else if (key == "crop_w") a.crop_w = parse_uint(full, v);
        else if (key == "mirror_prob") a.mirror_prob = parse_double(full, v);
        else if (key == "rotate_min") a.rotate_min_deg = parse_double(full, v);
        else if (key == "rotate_max") a.rotate_max_deg = parse_double(full, v);
        else if (key == "zoom_min") a.zoom_min = parse_double(full, v);
        else if (key == "zoom_max") a.zoom_max = parse_double(full, v);
        else if (key == "rotate_zoom") a.enable_rotate_zoom = parse_bool(full, v);
        else throw ConfigError("config: unknown key '" + full + "'");
      } else if (section == "lr") {
        rc.train.lr_multipliers[key] = parse_double(full, v);
      } else if (section == "eval") {
        if (key == "window_fraction") rc.eval.lmse.window_fraction = parse_double(full, v);
        else if (key == "align_dssim") rc.eval.align_dssim = parse_bool(full, v);
        else if (key == "mit_total") rc.eval.mit_total = parse_bool(full, v);
        else throw ConfigError("config: unknown key '" + full + "'");
      } else if (section == "data") {
        if (key == "manifest") {
          std::filesystem::path p(v);
          rc.manifest = (p.is_relative() && !base_dir.empty()) ? base_dir / p : p;
        } else if (key == "split") {
          rc.split = v;
        } else {
          throw ConfigError("config: unknown key '" + full + "'");
        }
      } else if (section == "output") {
        if (key == "dir") {
          std::filesystem::path p(v);
          rc.output_dir = (p.is_relative() && !base_dir.empty()) ? base_dir / p : p;
        } else if (key == "trace") {
          rc.trace_file = v;
        } else if (key == "checkpoint") {
          rc.checkpoint_file = v;
        } else {
          throw ConfigError("config: unknown key '" + full + "'");
        }
      } else {
        throw ConfigError("config: unknown section '[" + section + "]'");
      }
    }
  }
  rc.validate();
  return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void RunConfig::validate() const {
  try {
    network.validate();
    train.validate();
    eval.lmse.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // Layer names in [lr] are checked against the built network by train_loop.
}

}  // namespace dint
