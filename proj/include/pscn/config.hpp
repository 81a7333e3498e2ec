#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "pscn/errors.hpp"
#include "pscn/geometry.hpp"
#include "pscn/io.hpp"

namespace pscn {

inline constexpr std::uint64_t kDefaultSeed = 42;

enum class Task { classify, segment };

/// Which of the three blocks are active. Disabled blocks are replaced:
/// no Z-order sampling -> FPS skeleton, no correlation -> X_fusion is
/// concat(embedding, positions), no attention -> identity weights.
struct AblationFlags {
  bool zorder = true;
  bool correlation = true;
  bool attention = true;
};

struct NetworkConfig {
  std::string profile = "paper";
  Task task = Task::classify;

  std::size_t input_points = 1024;
  std::size_t centers = 256;           // regions after the first sampling
  std::size_t feature_channels = 192;  // embedding width
  std::size_t skeleton_points = 64;
  double radius = 0.2;
  std::size_t group_size = 32;
  int morton_depth = kDefaultMortonDepth;
  bool use_normals = false;

  std::vector<std::size_t> embed_hidden = {64, 128};  // last conv is feature_channels - 3
  std::vector<std::size_t> fusion_hidden = {192};     // 1x1 conv stack, output feature_channels
  std::size_t channel_ratio = 4;
  std::vector<std::size_t> spatial_mlp = {64};
  std::vector<std::size_t> lift_hidden = {512};
  std::size_t global_channels = 1024;
  std::size_t head_hidden = 256;
  double dropout = 0.4;
  std::vector<std::size_t> seg_hidden = {128};
  std::size_t classes = 40;
  std::size_t part_classes = 50;
  AblationFlags ablation;

  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  double lr = 1e-3;
  double lr_decay = 0.9;
  std::size_t lr_decay_every = 20;
  double weight_decay = 1e-4;
  std::size_t batch_size = 24;
  std::size_t epochs = 200;
  std::uint64_t seed = kDefaultSeed;

  // Width of X_fusion: embedding channels plus xyz.
  std::size_t fused_channels() const { return feature_channels + 3; }
};

inline NetworkConfig paper_profile() { return NetworkConfig{}; }

inline NetworkConfig paper_segmentation_profile() {
  NetworkConfig c;
  c.profile = "paper-seg";
  c.task = Task::segment;
  c.input_points = 2048;
  return c;
}

// Small enough for exhaustive finite-difference checks.
inline NetworkConfig micro_profile() {
  NetworkConfig c;
  c.profile = "micro";
  c.input_points = 16;
  c.centers = 8;
  c.feature_channels = 16;
  c.skeleton_points = 4;
  c.radius = 0.5;
  c.group_size = 8;
  c.embed_hidden = {8};
  c.fusion_hidden = {16};
  c.spatial_mlp = {8};
  c.lift_hidden = {32};
  c.global_channels = 32;
  c.head_hidden = 16;
  c.seg_hidden = {16};
  c.classes = 2;
  c.part_classes = 2;
  c.batch_size = 8;
  return c;
}

// Desk-scale profile for the sphere/cube overfit runs.
inline NetworkConfig toy_profile() {
  NetworkConfig c;
  c.profile = "toy";
  c.input_points = 64;
  c.centers = 16;
  c.feature_channels = 32;
  c.skeleton_points = 4;
  c.radius = 0.4;
  c.group_size = 16;
  c.embed_hidden = {16};
  c.fusion_hidden = {32};
  c.spatial_mlp = {16};
  c.lift_hidden = {64};
  c.global_channels = 128;
  c.head_hidden = 32;
  c.seg_hidden = {32};
  c.classes = 2;
  c.part_classes = 2;
  c.batch_size = 16;
  return c;
}

inline NetworkConfig profile_by_name(const std::string& name) {
  if (name == "paper") return paper_profile();
  if (name == "paper-seg") return paper_segmentation_profile();
  if (name == "micro") return micro_profile();
  if (name == "toy") return toy_profile();
  throw ConfigError("unknown profile '" + name + "' (expected paper, paper-seg, micro or toy)");
}

/// Every violated constraint, one message each.
inline std::vector<std::string> config_violations(const NetworkConfig& c) {
  std::vector<std::string> v;
  auto need = [&v](bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
  };
  need(c.input_points > 0 && c.centers > 0 && c.skeleton_points > 0, "point counts must be positive");
  need(c.skeleton_points <= c.centers, "skeleton_points must not exceed centers");
  need(c.centers <= c.input_points, "centers must not exceed input_points");
  need(c.feature_channels > 3, "feature_channels must exceed 3 (xyz is concatenated into the embedding)");
  need(c.radius > 0.0, "radius must be positive");
  need(c.group_size > 0, "group_size must be positive");
  need(c.morton_depth >= 1 && c.morton_depth <= kMaxQuantizeDepth, "morton_depth must be in [1, 20]");
  need(c.channel_ratio > 0 && c.fused_channels() / std::max<std::size_t>(c.channel_ratio, 1) > 0,
       "channel_ratio must leave at least one bottleneck channel");
  need(!c.spatial_mlp.empty(), "spatial_mlp must have at least one layer");
  need(c.global_channels > 0 && c.head_hidden > 0, "global_channels and head_hidden must be positive");
  need(c.classes >= 1 && c.part_classes >= 1, "class counts must be positive");
  need(c.dropout >= 0.0 && c.dropout < 1.0, "dropout must be in [0, 1)");
  need(c.bn_eps > 0.0, "bn_eps must be positive");
  need(c.bn_momentum >= 0.0 && c.bn_momentum <= 1.0, "bn_momentum must be in [0, 1]");
  need(c.lr > 0.0, "lr must be positive");
  need(c.lr_decay > 0.0 && c.lr_decay_every > 0, "lr_decay and lr_decay_every must be positive");
  need(c.weight_decay >= 0.0, "weight_decay must be non-negative");
  need(c.batch_size > 0, "batch_size must be positive");
  auto widths_ok = [](const std::vector<std::size_t>& w) {
    for (auto x : w)
      if (x == 0) return false;
    return true;
  };
  need(widths_ok(c.embed_hidden) && widths_ok(c.fusion_hidden) && widths_ok(c.spatial_mlp) &&
           widths_ok(c.lift_hidden) && widths_ok(c.seg_hidden),
       "layer widths must be positive");
  return v;
}

inline void validate(const NetworkConfig& c) {
  const auto v = config_violations(c);
  if (v.empty()) return;
  std::string msg = "invalid network config:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  if (v.empty() || (v[0] == '-' && std::is_unsigned_v<T>) || !(is >> out) || !(is >> std::ws).eof()) {
    throw ConfigError(key + ": cannot parse '" + v + "'");
  }
  return out;
}

inline std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  return out;
}

inline std::string join_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

}  // namespace detail

/// Applies one `key = value` setting.
inline void set_config_value(NetworkConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  using detail::parse_widths;
  if (key == "profile") {
    const auto keep_seed = c.seed;
    c = profile_by_name(value);
    c.seed = keep_seed;
  } else if (key == "task") {
    if (value == "classify") c.task = Task::classify;
    else if (value == "segment") c.task = Task::segment;
    else throw ConfigError("task: expected classify or segment, got '" + value + "'");
  } else if (key == "input_points") c.input_points = parse_number<std::size_t>(key, value);
  else if (key == "centers") c.centers = parse_number<std::size_t>(key, value);
  else if (key == "feature_channels") c.feature_channels = parse_number<std::size_t>(key, value);
  else if (key == "skeleton_points") c.skeleton_points = parse_number<std::size_t>(key, value);
  else if (key == "radius") c.radius = parse_number<double>(key, value);
  else if (key == "group_size") c.group_size = parse_number<std::size_t>(key, value);
  else if (key == "morton_depth") c.morton_depth = parse_number<int>(key, value);
  else if (key == "use_normals") c.use_normals = parse_bool(key, value);
  else if (key == "embed_hidden") c.embed_hidden = parse_widths(key, value);
  else if (key == "fusion_hidden") c.fusion_hidden = parse_widths(key, value);
  else if (key == "channel_ratio") c.channel_ratio = parse_number<std::size_t>(key, value);
  else if (key == "spatial_mlp") c.spatial_mlp = parse_widths(key, value);
  else if (key == "lift_hidden") c.lift_hidden = parse_widths(key, value);
  else if (key == "global_channels") c.global_channels = parse_number<std::size_t>(key, value);
  else if (key == "head_hidden") c.head_hidden = parse_number<std::size_t>(key, value);
  else if (key == "dropout") c.dropout = parse_number<double>(key, value);
  else if (key == "seg_hidden") c.seg_hidden = parse_widths(key, value);
  else if (key == "classes") c.classes = parse_number<std::size_t>(key, value);
  else if (key == "part_classes") c.part_classes = parse_number<std::size_t>(key, value);
  else if (key == "zs") c.ablation.zorder = parse_bool(key, value);
  else if (key == "cs") c.ablation.correlation = parse_bool(key, value);
  else if (key == "am") c.ablation.attention = parse_bool(key, value);
  else if (key == "bn_eps") c.bn_eps = parse_number<double>(key, value);
  else if (key == "bn_momentum") c.bn_momentum = parse_number<double>(key, value);
  else if (key == "lr") c.lr = parse_number<double>(key, value);
  else if (key == "lr_decay") c.lr_decay = parse_number<double>(key, value);
  else if (key == "lr_decay_every") c.lr_decay_every = parse_number<std::size_t>(key, value);
  else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Reads `key = value` lines ('#' starts a comment). A `profile` line, if
/// present, is applied first regardless of its position.
inline NetworkConfig parse_config(std::istream& is, NetworkConfig base = paper_profile()) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    entries.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  for (const auto& [k, v] : entries)
    if (k == "profile") set_config_value(base, k, v);
  for (const auto& [k, v] : entries)
    if (k != "profile") set_config_value(base, k, v);
  validate(base);
  return base;
}

inline NetworkConfig load_config(const std::string& path, NetworkConfig base = paper_profile()) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config " + path);
  return parse_config(is, std::move(base));
}

inline std::string to_text(const NetworkConfig& c) {
  using detail::join_widths;
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "profile = " << c.profile << '\n'
     << "task = " << (c.task == Task::classify ? "classify" : "segment") << '\n'
     << "input_points = " << c.input_points << '\n'
     << "centers = " << c.centers << '\n'
     << "feature_channels = " << c.feature_channels << '\n'
     << "skeleton_points = " << c.skeleton_points << '\n'
     << "radius = " << format_real(c.radius) << '\n'
     << "group_size = " << c.group_size << '\n'
     << "morton_depth = " << c.morton_depth << '\n'
     << "use_normals = " << b(c.use_normals) << '\n'
     << "embed_hidden = " << join_widths(c.embed_hidden) << '\n'
     << "fusion_hidden = " << join_widths(c.fusion_hidden) << '\n'
     << "channel_ratio = " << c.channel_ratio << '\n'
     << "spatial_mlp = " << join_widths(c.spatial_mlp) << '\n'
     << "lift_hidden = " << join_widths(c.lift_hidden) << '\n'
     << "global_channels = " << c.global_channels << '\n'
     << "head_hidden = " << c.head_hidden << '\n'
     << "dropout = " << format_real(c.dropout) << '\n'
     << "seg_hidden = " << join_widths(c.seg_hidden) << '\n'
     << "classes = " << c.classes << '\n'
     << "part_classes = " << c.part_classes << '\n'
     << "zs = " << b(c.ablation.zorder) << '\n'
     << "cs = " << b(c.ablation.correlation) << '\n'
     << "am = " << b(c.ablation.attention) << '\n'
     << "bn_eps = " << format_real(c.bn_eps) << '\n'
     << "bn_momentum = " << format_real(c.bn_momentum) << '\n'
     << "lr = " << format_real(c.lr) << '\n'
     << "lr_decay = " << format_real(c.lr_decay) << '\n'
     << "lr_decay_every = " << c.lr_decay_every << '\n'
     << "weight_decay = " << format_real(c.weight_decay) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "epochs = " << c.epochs << '\n'
     << "seed = " << c.seed << '\n';
  return os.str();
}

}  // namespace pscn
