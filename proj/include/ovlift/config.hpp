#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "ovlift/common.hpp"
#include "ovlift/labeling.hpp"
#include "ovlift/merging.hpp"

namespace ovlift {

struct SuperpointConfig {
  int k_nn = 10;
  double k_fh = 0.05;
  int min_size = 50;
};

struct PipelineConfig {
  std::string scene_dir;
  std::string output_dir;
  std::string backend_fixture;    // at most one of fixture / subprocess
  std::string backend_subprocess;
  int backend_pool = 1;
  int n_prompts = 200;
  int frame_stride = 10;
  int t_views = 5;
  double theta = 0.3;
  double tau = 0.45;
  ColumnNorm column_norm = ColumnNorm::L1;
  LabelStrategy label_strategy = LabelStrategy::Score;
  int k_pixel_prompts = 5;
  double eps_depth = 0.05;
  SuperpointConfig superpoint;
  std::string blocklist_path;
  uint64_t seed = 0;
  int workers = 1;
  bool debug = false;
  int gt_min_points = 20; // box-derived ground truth
};

namespace detail {

inline std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config key " + key + ": not a number: \"" + value + "\"");
  }
}

inline long long to_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config key " + key + ": not an integer: \"" + value + "\"");
  }
}

inline bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw config_error("config key " + key + ": not a boolean: \"" + value + "\"");
}

} // namespace detail

/// Flat "key = value" lines with dotted keys, '#' comments, optional quotes
/// around string values. Later lines win over earlier duplicates.
inline std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                            const std::string& origin = "config") {
  std::map<std::string, std::string> entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string t = detail::strip(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::strip(t.substr(0, eq));
    std::string value = detail::strip(t.substr(eq + 1));
    if (key.empty())
      throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    entries[key] = value;
  }
  return entries;
}

inline std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

/// Applies entries onto a config; unknown keys are errors so typos surface.
inline void apply_config_entries(PipelineConfig& c,
                                 const std::map<std::string, std::string>& entries) {
  using detail::to_bool;
  using detail::to_double;
  using detail::to_int;
  for (const auto& [key, value] : entries) {
    if (key == "scene") c.scene_dir = value;
    else if (key == "output") c.output_dir = value;
    else if (key == "backend.fixture") c.backend_fixture = value;
    else if (key == "backend.subprocess") c.backend_subprocess = value;
    else if (key == "backend.pool") c.backend_pool = static_cast<int>(to_int(key, value));
    else if (key == "n_prompts") c.n_prompts = static_cast<int>(to_int(key, value));
    else if (key == "frame_stride") c.frame_stride = static_cast<int>(to_int(key, value));
    else if (key == "t_views") c.t_views = static_cast<int>(to_int(key, value));
    else if (key == "theta") c.theta = to_double(key, value);
    else if (key == "tau") c.tau = to_double(key, value);
    else if (key == "column_norm") c.column_norm = parse_column_norm(value);
    else if (key == "label_strategy") c.label_strategy = parse_label_strategy(value);
    else if (key == "k_pixel_prompts") c.k_pixel_prompts = static_cast<int>(to_int(key, value));
    else if (key == "eps_depth") c.eps_depth = to_double(key, value);
    else if (key == "superpoint.k_nn") c.superpoint.k_nn = static_cast<int>(to_int(key, value));
    else if (key == "superpoint.k_fh") c.superpoint.k_fh = to_double(key, value);
    else if (key == "superpoint.min_size") c.superpoint.min_size = static_cast<int>(to_int(key, value));
    else if (key == "blocklist") c.blocklist_path = value;
    else if (key == "seed") c.seed = static_cast<uint64_t>(to_int(key, value));
    else if (key == "workers") c.workers = static_cast<int>(to_int(key, value));
    else if (key == "debug") c.debug = to_bool(key, value);
    else if (key == "gt_min_points") c.gt_min_points = static_cast<int>(to_int(key, value));
    else throw config_error("unknown config key: " + key);
  }
}

inline void validate_config(const PipelineConfig& c) {
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw config_error("tau must be in (0, 1]");
  if (c.theta < 0.0 || c.theta >= 1.0) throw config_error("theta must be in [0, 1)");
  if (c.n_prompts < 1) throw config_error("n_prompts must be >= 1");
  if (c.frame_stride < 1) throw config_error("frame_stride must be >= 1");
  if (c.t_views < 1) throw config_error("t_views must be >= 1");
  if (c.k_pixel_prompts < 1) throw config_error("k_pixel_prompts must be >= 1");
  if (!(c.eps_depth > 0.0)) throw config_error("eps_depth must be > 0");
  if (c.superpoint.k_nn < 1) throw config_error("superpoint.k_nn must be >= 1");
  if (!(c.superpoint.k_fh > 0.0)) throw config_error("superpoint.k_fh must be > 0");
  if (c.superpoint.min_size < 1) throw config_error("superpoint.min_size must be >= 1");
  if (c.workers < 1) throw config_error("workers must be >= 1");
  if (c.backend_pool < 1) throw config_error("backend.pool must be >= 1");
  if (c.gt_min_points < 1) throw config_error("gt_min_points must be >= 1");
  if (!c.backend_fixture.empty() && !c.backend_subprocess.empty())
    throw config_error("configure either backend.fixture or backend.subprocess, not both");
}

/// Resolved settings echoed into the run summary, so callers can assert what
/// actually applied.
inline std::map<std::string, std::string> config_echo(const PipelineConfig& c) {
  std::map<std::string, std::string> echo;
  auto num = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  echo["scene"] = c.scene_dir;
  echo["output"] = c.output_dir;
  if (!c.backend_fixture.empty()) echo["backend.fixture"] = c.backend_fixture;
  if (!c.backend_subprocess.empty()) echo["backend.subprocess"] = c.backend_subprocess;
  echo["backend.pool"] = std::to_string(c.backend_pool);
  echo["n_prompts"] = std::to_string(c.n_prompts);
  echo["frame_stride"] = std::to_string(c.frame_stride);
  echo["t_views"] = std::to_string(c.t_views);
  echo["theta"] = num(c.theta);
  echo["tau"] = num(c.tau);
  echo["column_norm"] = column_norm_name(c.column_norm);
  echo["label_strategy"] = label_strategy_name(c.label_strategy);
  echo["k_pixel_prompts"] = std::to_string(c.k_pixel_prompts);
  echo["eps_depth"] = num(c.eps_depth);
  echo["superpoint.k_nn"] = std::to_string(c.superpoint.k_nn);
  echo["superpoint.k_fh"] = num(c.superpoint.k_fh);
  echo["superpoint.min_size"] = std::to_string(c.superpoint.min_size);
  echo["blocklist"] = c.blocklist_path;
  echo["seed"] = std::to_string(c.seed);
  echo["workers"] = std::to_string(c.workers);
  echo["debug"] = c.debug ? "true" : "false";
  echo["gt_min_points"] = std::to_string(c.gt_min_points);
  return echo;
}

} // namespace ovlift
