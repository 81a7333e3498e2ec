#pragma once

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pscn/pscn.hpp"

namespace pscn::cli {

struct Options {
  std::string in, out, config, profile, checkpoint, save, data;
  std::uint64_t seed = kDefaultSeed;
  bool seed_given = false;
  std::size_t count = 0;
  double radius = 0.0;
  std::vector<std::string> ablate;
  std::size_t epochs = 0;
  double step = 1e-5;
  int depth = kDefaultMortonDepth;
  bool breakdown = false;
};

namespace detail {

// Writes to --out when given, stdout otherwise.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw InputError("cannot write " + path);
      os_ = file_.get();
    }
  }
  std::ostream& stream() { return *os_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_;
};

inline NetworkConfig resolve_config(const Options& o, const std::string& default_profile) {
  NetworkConfig cfg = profile_by_name(o.profile.empty() ? default_profile : o.profile);
  if (!o.config.empty()) cfg = load_config(o.config, cfg);
  if (o.seed_given) cfg.seed = o.seed;
  if (o.radius > 0.0) cfg.radius = o.radius;
  for (const auto& a : o.ablate) {
    if (a == "zs") cfg.ablation.zorder = false;
    else if (a == "cs") cfg.ablation.correlation = false;
    else if (a == "am") cfg.ablation.attention = false;
    else throw InputError("--ablate: expected zs, cs or am, got '" + a + "'");
  }
  validate(cfg);
  return cfg;
}

inline Model load_model(const Options& o, const std::string& default_profile, std::optional<Task> task = {}) {
  NetworkConfig cfg = resolve_config(o, default_profile);
  if (task) cfg.task = *task;
  Model model(cfg);
  if (!o.checkpoint.empty()) {
    auto targets = model.state();
    restore(targets, load_checkpoint(o.checkpoint));
  }
  return model;
}

inline PointCloud subset(const PointCloud& cloud, std::span<const std::size_t> idx) {
  PointCloud out;
  for (std::size_t i : idx) out.positions.push_back(cloud.positions[i]);
  if (cloud.normals) {
    out.normals.emplace();
    for (std::size_t i : idx) out.normals->push_back((*cloud.normals)[i]);
  }
  return out;
}

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.positions.push_back({u(rng), u(rng), u(rng)});
  return c;
}

// Original coordinates of the regions chosen by the encoder.
inline std::vector<Vec3> center_positions(const PointCloud& raw, const ForwardTrace& t) {
  std::vector<Vec3> out;
  for (std::size_t c : t.embedded.centers) out.push_back(raw.positions[t.input.source[c]]);
  return out;
}

inline std::string join_row(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_real(v[i]);
  return s;
}

}  // namespace detail

inline int cmd_sample_fps(const Options& o, std::ostream& out) {
  const PointCloud cloud = read_xyz_file(o.in);
  const auto idx = fps(cloud, o.count, o.depth);
  detail::Sink sink(o.out, out);
  write_xyz(sink.stream(), detail::subset(cloud, idx));
  return 0;
}

inline int cmd_sample_zorder(const Options& o, std::ostream& out) {
  const PointCloud cloud = read_xyz_file(o.in);
  const auto idx = zorder_indices(cloud, o.count, o.depth);
  detail::Sink sink(o.out, out);
  write_xyz(sink.stream(), detail::subset(cloud, idx));
  return 0;
}

inline int cmd_embed(const Options& o, std::ostream& out) {
  const PointCloud cloud = read_xyz_file(o.in);
  Model model = detail::load_model(o, "paper", Task::classify);
  const ForwardTrace t = model.forward_features(cloud, Mode::eval);
  const auto centers = detail::center_positions(cloud, t);
  const std::size_t c = t.embedded.features.dim(1);
  detail::Sink sink(o.out, out);
  auto& os = sink.stream();
  os << "# x y z then " << c << " embedding channels\n";
  for (std::size_t i = 0; i < centers.size(); ++i) {
    os << detail::join_row(centers[i]) << ' '
       << detail::join_row(t.embedded.features.data().subspan(i * c, c)) << '\n';
  }
  return 0;
}

inline int cmd_classify(const Options& o, std::ostream& out) {
  const PointCloud cloud = read_xyz_file(o.in);
  Model model = detail::load_model(o, "paper", Task::classify);
  const Tensor logits = model.forward_classify(cloud, Mode::eval);
  detail::Sink sink(o.out, out);
  auto& os = sink.stream();
  os << "logits " << detail::join_row(logits.data()) << '\n';
  os << "class " << argmax_row(logits.data()) << '\n';
  return 0;
}

inline int cmd_segment(const Options& o, std::ostream& out) {
  const PointCloud cloud = read_xyz_file(o.in);
  Model model = detail::load_model(o, "paper-seg", Task::segment);
  const Tensor logits = model.forward_segment(cloud, Mode::eval);
  const std::size_t k = logits.dim(1);
  detail::Sink sink(o.out, out);
  auto& os = sink.stream();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    os << detail::join_row(cloud.positions[i]) << ' ' << argmax_row(logits.data().subspan(i * k, k))
       << '\n';
  }
  return 0;
}

inline int cmd_train_toy(const Options& o, std::ostream& out) {
  NetworkConfig cfg = detail::resolve_config(o, "toy");
  if (o.epochs) cfg.epochs = o.epochs;
  std::vector<Sample> data;
  if (!o.data.empty()) {
    Dataset ds = load_dataset(o.data);
    cfg.classes = ds.class_names.size();
    for (auto& c : ds.clouds) data.push_back({std::move(c), {}});
  } else {
    const std::size_t per_class = o.count ? o.count : 8;
    data = cfg.task == Task::classify
               ? make_sphere_cube_dataset(per_class, cfg.input_points, cfg.seed)
               : make_composite_segmentation_dataset(2 * per_class, cfg.input_points, cfg.seed);
  }
  Model model(cfg);
  const auto history = train(model, data, train_options(cfg));
  detail::Sink sink(o.out, out);
  write_loss_history(sink.stream(), history);
  if (!o.save.empty()) {
    const auto state = model.state();
    save_checkpoint(o.save, state);
  }
  return 0;
}

inline int cmd_gradcheck(const Options& o, std::ostream& out) {
  NetworkConfig cfg = detail::resolve_config(o, "micro");
  cfg.dropout = 0.0;
  Model model(cfg);
  PointCloud cloud = detail::random_cloud(cfg.input_points, cfg.seed);
  std::vector<int> labels;
  if (cfg.task == Task::classify) {
    labels.push_back(static_cast<int>(cfg.seed % cfg.classes));
  } else {
    for (std::size_t i = 0; i < cloud.size(); ++i) labels.push_back(cloud.positions[i][0] < 0.5 ? 0 : 1);
  }
  auto loss = [&]() {
    const Tensor logits = cfg.task == Task::classify ? model.forward_classify(cloud, Mode::train)
                                                     : model.forward_segment(cloud, Mode::train);
    return cross_entropy(logits, labels);
  };
  auto params = model.parameters();
  const GradCheckReport r = check_gradients(loss, params, o.step);
  constexpr double kTolerance = 1e-3;
  const bool pass = r.max_relative_error < kTolerance;
  detail::Sink sink(o.out, out);
  auto& os = sink.stream();
  os << "checked " << r.checked << " parameters\n"
     << "max_relative_error " << format_real(r.max_relative_error) << " at " << r.worst << '\n'
     << (pass ? "PASS" : "FAIL") << " (tolerance " << kTolerance << ")\n";
  return pass ? 0 : 2;
}

inline int cmd_heatmap(const Options& o, std::ostream& out) {
  const PointCloud cloud = read_xyz_file(o.in);
  Model model = detail::load_model(o, "paper", Task::classify);
  const ForwardTrace t = model.forward_features(cloud, Mode::eval);
  const auto counts = point_responses(t);
  const auto centers = detail::center_positions(cloud, t);
  detail::Sink sink(o.out, out);
  auto& os = sink.stream();
  for (std::size_t i = 0; i < centers.size(); ++i) os << detail::join_row(centers[i]) << ' ' << counts[i] << '\n';
  return 0;
}

inline int cmd_params(const Options& o, std::ostream& out) {
  const Model model(detail::resolve_config(o, "paper"));
  detail::Sink sink(o.out, out);
  auto& os = sink.stream();
  if (o.breakdown) {
    for (const auto& p : model.parameters()) os << p.name << ' ' << shape_str(p.tensor.shape()) << ' ' << p.tensor.numel() << '\n';
    os << "total ";
  }
  os << model.param_count() << '\n';
  return 0;
}

inline int cmd_inspect_fusion(const Options& o, std::ostream& out) {
  NetworkConfig cfg = detail::resolve_config(o, "paper");
  if (!cfg.ablation.correlation) throw InputError("inspect-fusion needs the correlation block (drop --ablate cs)");
  PointCloud cloud = o.in.empty() ? detail::random_cloud(cfg.input_points, cfg.seed) : read_xyz_file(o.in);
  Model model = detail::load_model(o, "paper", Task::classify);
  const ForwardTrace t = model.forward_features(cloud, Mode::eval);
  detail::Sink sink(o.out, out);
  auto& os = sink.stream();
  const auto& ps = t.correlation->structure.grid;
  const auto& pp = t.correlation->position.grid;
  os << "X_embedding " << shape_str(t.embedded.features.shape()) << '\n'
     << "X_position " << shape_str(t.embedded.positions.shape()) << '\n'
     << "X'_zorder " << shape_str(t.skeleton->features.shape()) << '\n'
     << "X_zorder " << shape_str(t.skeleton->positions.shape()) << '\n'
     << "P_structure " << shape_str(ps.shape()) << '\n'
     << "P_position " << shape_str(pp.shape()) << '\n'
     << "X_C&S " << shape_str(t.x_cs.shape()) << '\n'
     << "X_fusion " << shape_str(t.fused.shape()) << '\n'
     << "correlation_reals " << ps.numel() + pp.numel() << '\n';
  const std::size_t samples = o.count ? o.count : 3;
  const std::size_t m = pp.dim(0), n = pp.dim(1);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t i = (s * 7919) % m, j = (s * 104729) % n;
    os << "P_position[" << i << "][" << j << "] " << detail::join_row(pp.data().subspan((i * n + j) * 6, 6)) << '\n';
  }
  return 0;
}

/// Entry point: 0 success, 1 bad input or usage, 2 internal failure.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"PointSCNet point-cloud pipeline", "pscn"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&o](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t s) { o.seed = s; o.seed_given = true; },
                                            "Random seed (default 42)");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Network config file (key = value)");
    sub->add_option("--profile", o.profile, "Base profile")->check(CLI::IsMember({"micro", "toy", "paper", "paper-seg"}));
    sub->add_option("--ablate", o.ablate, "Disable a block: zs, cs or am (repeatable)")
        ->check(CLI::IsMember({"zs", "cs", "am"}))
        ->take_all();
    sub->add_option("--radius", o.radius, "Ball-query radius override (normalized units)");
    add_seed(sub);
  };

  auto* s_fps = app.add_subcommand("sample-fps", "Farthest-point sample a cloud");
  s_fps->add_option("--in", o.in, "Input .xyz cloud")->required();
  s_fps->add_option("--out", o.out, "Output .xyz (stdout if omitted)");
  s_fps->add_option("--count", o.count, "Number of points to keep")->required();
  add_seed(s_fps);

  auto* s_z = app.add_subcommand("sample-zorder", "Equally spaced points along the Z-order curve");
  s_z->add_option("--in", o.in, "Input .xyz cloud")->required();
  s_z->add_option("--out", o.out, "Output .xyz (stdout if omitted)");
  s_z->add_option("--count", o.count, "Number of points to keep")->required();
  s_z->add_option("--depth", o.depth, "Morton bits per axis")->check(CLI::Range(1, kMaxQuantizeDepth));
  add_seed(s_z);

  auto* s_embed = app.add_subcommand("embed", "Print region centers and their embeddings");
  auto* s_cls = app.add_subcommand("classify", "Classify one cloud");
  auto* s_seg = app.add_subcommand("segment", "Label every point of one cloud");
  auto* s_heat = app.add_subcommand("heatmap", "Per-region response counts (x y z response)");
  for (auto* sub : {s_embed, s_cls, s_seg, s_heat}) {
    sub->add_option("--in", o.in, "Input .xyz cloud")->required();
    sub->add_option("--out", o.out, "Output file (stdout if omitted)");
    sub->add_option("--checkpoint", o.checkpoint, "PSCN checkpoint to load");
    add_model(sub);
  }

  auto* s_train = app.add_subcommand("train-toy", "Train on sphere/cube toy data; emits epoch,loss,accuracy");
  s_train->add_option("--out", o.out, "Loss history CSV (stdout if omitted)");
  s_train->add_option("--count", o.count, "Clouds per class (default 8)");
  s_train->add_option("--epochs", o.epochs, "Epoch budget override");
  s_train->add_option("--save", o.save, "Write a checkpoint after training");
  s_train->add_option("--data", o.data, "Dataset directory <class>/<sample>.xyz instead of toy data");
  add_model(s_train);

  auto* s_grad = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  s_grad->add_option("--out", o.out, "Report file (stdout if omitted)");
  s_grad->add_option("--step", o.step, "Central-difference step (default 1e-5)");
  add_model(s_grad);

  auto* s_params = app.add_subcommand("params", "Count trainable parameters");
  s_params->add_option("--out", o.out, "Output file (stdout if omitted)");
  s_params->add_flag("--breakdown", o.breakdown, "List every parameter tensor");
  add_model(s_params);

  auto* s_fusion = app.add_subcommand("inspect-fusion", "Dump correlation tensor shapes and sample cells");
  s_fusion->add_option("--in", o.in, "Input .xyz cloud (random cloud if omitted)");
  s_fusion->add_option("--out", o.out, "Output file (stdout if omitted)");
  s_fusion->add_option("--count", o.count, "Number of sampled cells (default 3)");
  s_fusion->add_option("--checkpoint", o.checkpoint, "PSCN checkpoint to load");
  add_model(s_fusion);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (s_fps->parsed()) return cmd_sample_fps(o, out);
    if (s_z->parsed()) return cmd_sample_zorder(o, out);
    if (s_embed->parsed()) return cmd_embed(o, out);
    if (s_cls->parsed()) return cmd_classify(o, out);
    if (s_seg->parsed()) return cmd_segment(o, out);
    if (s_heat->parsed()) return cmd_heatmap(o, out);
    if (s_train->parsed()) return cmd_train_toy(o, out);
    if (s_grad->parsed()) return cmd_gradcheck(o, out);
    if (s_params->parsed()) return cmd_params(o, out);
    if (s_fusion->parsed()) return cmd_inspect_fusion(o, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace pscn::cli
