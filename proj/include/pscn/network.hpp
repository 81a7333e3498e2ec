#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pscn/attention.hpp"
#include "pscn/config.hpp"
#include "pscn/fusion.hpp"
#include "pscn/nn.hpp"
#include "pscn/sampling.hpp"
#include "pscn/zorder.hpp"

namespace pscn {

/// The network's view of one input cloud: normalized into the unit cube and,
/// when larger than the configured size, subsampled by a seeded choice over
/// the canonical point order (so the choice does not depend on file order).
struct PreparedInput {
  PointCloud full;                 // every input point, normalized
  PointCloud cloud;                // the subset fed to the network
  std::vector<std::size_t> source; // cloud row -> full row
};

inline PreparedInput prepare_input(const PointCloud& raw, std::size_t count, std::uint64_t seed,
                                   int depth = kDefaultMortonDepth) {
  validate(raw);
  if (raw.size() < count) {
    throw InputError("cloud has " + std::to_string(raw.size()) + " points, the network needs " +
                     std::to_string(count));
  }
  PreparedInput in;
  in.full = normalize_unit_cube(raw);
  in.full.label = raw.label;
  if (raw.size() == count) {
    in.source.resize(count);
    std::iota(in.source.begin(), in.source.end(), std::size_t{0});
  } else {
    const CanonicalOrder canon(raw, depth);
    std::vector<std::size_t> ranked(raw.size());
    std::iota(ranked.begin(), ranked.end(), std::size_t{0});
    std::sort(ranked.begin(), ranked.end(), [&](auto a, auto b) { return canon.less(a, b); });
    std::vector<std::size_t> ranks(raw.size());
    std::iota(ranks.begin(), ranks.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, ranks.size() - 1);
      std::swap(ranks[i], ranks[pick(rng)]);
    }
    ranks.resize(count);
    std::sort(ranks.begin(), ranks.end());
    for (std::size_t r : ranks) in.source.push_back(ranked[r]);
  }
  in.cloud.label = raw.label;
  for (std::size_t s : in.source) in.cloud.positions.push_back(in.full.positions[s]);
  if (in.full.normals) {
    in.cloud.normals.emplace();
    for (std::size_t s : in.source) in.cloud.normals->push_back((*in.full.normals)[s]);
  }
  return in;
}

/// Intermediate values of one forward pass, for diagnostics and the heads.
struct ForwardTrace {
  PreparedInput input;
  EmbeddedCloud embedded;
  std::optional<SkeletonCloud> skeleton;
  std::optional<Correlation> correlation;
  Tensor x_cs;
  Tensor fused;
  std::optional<AttentionWeights> attention;
  Tensor refined;
  Tensor lifted;  // n' x global_channels
  Tensor global;  // 1 x global_channels
};

/// Inverse-distance weights over the (up to) three nearest centers for every
/// query point. A query that coincides with a center takes that center alone.
struct Interpolation {
  std::vector<std::size_t> index;
  std::vector<double> weight;
  std::size_t taps = 3;
};

inline Interpolation three_nn_weights(std::span<const Vec3> queries, std::span<const Vec3> centers) {
  if (centers.empty()) throw InputError("interpolation needs at least one center");
  constexpr double kCoincident = 1e-10;
  Interpolation interp;
  interp.taps = std::min<std::size_t>(3, centers.size());
  std::vector<std::pair<double, std::size_t>> d(centers.size());
  for (const auto& q : queries) {
    for (std::size_t c = 0; c < centers.size(); ++c) d[c] = {std::sqrt(squared_distance(q, centers[c])), c};
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(interp.taps), d.end());
    if (d[0].first < kCoincident) {
      for (std::size_t t = 0; t < interp.taps; ++t) {
        interp.index.push_back(d[t].second);
        interp.weight.push_back(t == 0 ? 1.0 : 0.0);
      }
      continue;
    }
    double total = 0.0;
    for (std::size_t t = 0; t < interp.taps; ++t) total += 1.0 / d[t].first;
    for (std::size_t t = 0; t < interp.taps; ++t) {
      interp.index.push_back(d[t].second);
      interp.weight.push_back((1.0 / d[t].first) / total);
    }
  }
  return interp;
}

/// PointSCNet: set abstraction, Z-order skeleton, correlation fusion,
/// channel-spatial attention, global pooling and a task head.
class Model {
 public:
  explicit Model(NetworkConfig config) : cfg_(std::move(config)) {
    validate(cfg_);
    Rng rng(cfg_.seed);
    dropout_rng_.seed(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);

    auto embed_widths = cfg_.embed_hidden;
    embed_widths.push_back(cfg_.feature_channels - 3);
    embed_ = make_mlp(set_abstraction_input_channels(cfg_.use_normals), embed_widths, rng);

    const std::size_t fused = cfg_.fused_channels();
    if (cfg_.ablation.correlation) {
      std::size_t in = 2 * cfg_.feature_channels + 6;
      for (std::size_t w : cfg_.fusion_hidden) {
        fusion_.push_back(Conv2dLayer::create(in, w, Activation::relu, rng));
        in = w;
      }
      fusion_.push_back(Conv2dLayer::create(in, cfg_.feature_channels, Activation::none, rng));
    }
    if (cfg_.ablation.attention) {
      const std::vector<std::size_t> bottleneck{fused / cfg_.channel_ratio, fused};
      channel_mlp_ = make_mlp(fused, bottleneck, rng, Activation::none);
      spatial_mlp_ = make_mlp(fused, cfg_.spatial_mlp, rng, Activation::none);
      spatial_bn_ = BatchNorm::create(cfg_.spatial_mlp.back(), {cfg_.bn_eps, cfg_.bn_momentum});
    }
    auto lift_widths = cfg_.lift_hidden;
    lift_widths.push_back(cfg_.global_channels);
    lift_ = make_mlp(fused, lift_widths, rng);

    if (cfg_.task == Task::classify) {
      head_.push_back(DenseLayer::create(cfg_.global_channels, cfg_.head_hidden, Activation::relu, rng));
      head_.push_back(DenseLayer::create(cfg_.head_hidden, cfg_.classes, Activation::none, rng));
    } else {
      auto widths = cfg_.seg_hidden;
      widths.push_back(cfg_.part_classes);
      const std::size_t in = fused + cfg_.global_channels + set_abstraction_input_channels(cfg_.use_normals);
      head_ = make_mlp(in, widths, rng, Activation::none);
    }
  }

  const NetworkConfig& config() const { return cfg_; }

  ForwardTrace forward_features(const PointCloud& raw, Mode mode) {
    ForwardTrace t;
    t.input = prepare_input(raw, cfg_.input_points, cfg_.seed, cfg_.morton_depth);
    SetAbstractionParams sa{cfg_.centers, cfg_.radius, cfg_.group_size, cfg_.use_normals, cfg_.morton_depth};
    t.embedded = set_abstraction(t.input.cloud, sa, embed_);

    if (cfg_.ablation.correlation) {
      t.skeleton = cfg_.ablation.zorder ? zorder_sample(t.embedded, cfg_.skeleton_points, cfg_.morton_depth)
                                        : fps_skeleton(t.embedded);
      t.correlation = correlate(t.embedded, *t.skeleton);
      t.x_cs = reduce_correlation(t.correlation->structure, t.correlation->position, fusion_);
      t.fused = skip_fuse(t.embedded, t.x_cs).values;
    } else {
      t.fused = concat({t.embedded.features, t.embedded.positions}, 1);
    }

    if (cfg_.ablation.attention) {
      AttentionWeights w{channel_attention(t.fused, channel_mlp_),
                         spatial_attention(t.fused, spatial_mlp_, *spatial_bn_, mode)};
      t.refined = apply_attention(t.fused, w);
      t.attention = std::move(w);
    } else {
      t.refined = t.fused;
    }
    t.lifted = shared_mlp(t.refined, lift_);
    t.global = reshape(pool(t.lifted, 0, PoolKind::max), {1, cfg_.global_channels});
    return t;
  }

  /// 1 x classes logits.
  Tensor forward_classify(const PointCloud& cloud, Mode mode = Mode::eval) {
    require_task(Task::classify);
    const ForwardTrace t = forward_features(cloud, mode);
    return classify_head(t.global, mode);
  }

  Tensor classify_head(const Tensor& global, Mode mode) {
    const Tensor hidden = dropout(dense(global, head_[0]), cfg_.dropout, dropout_rng_, mode);
    return dense(hidden, head_[1]);
  }

  /// N x part_classes logits, one row per point of the input cloud (all of
  /// them, including points not selected for the encoder).
  Tensor forward_segment(const PointCloud& cloud, Mode mode = Mode::eval) {
    require_task(Task::segment);
    const ForwardTrace t = forward_features(cloud, mode);
    return segment_head(t, mode);
  }

  Tensor segment_head(const ForwardTrace& t, Mode mode) {
    const std::size_t regions = t.refined.dim(0);
    const Tensor ones = Tensor::full({regions, 1}, 1.0);
    const Tensor region_features = concat({t.refined, matmul(ones, t.global)}, 1);

    std::vector<Vec3> centers;
    const auto cp = t.embedded.positions.data();
    for (std::size_t i = 0; i < regions; ++i) centers.push_back({cp[3 * i], cp[3 * i + 1], cp[3 * i + 2]});
    const auto interp = three_nn_weights(t.input.full.positions, centers);
    const Tensor propagated = weighted_rows(region_features, interp.index, interp.weight, interp.taps);

    const std::size_t n = t.input.full.size();
    const std::size_t cin = set_abstraction_input_channels(cfg_.use_normals);
    std::vector<double> own(n * cin);
    for (std::size_t i = 0; i < n; ++i) {
      for (int a = 0; a < 3; ++a) own[i * cin + a] = t.input.full.positions[i][a];
      if (cfg_.use_normals)
        for (int a = 0; a < 3; ++a) own[i * cin + 3 + a] = (*t.input.full.normals)[i][a];
    }
    Tensor x = concat({propagated, Tensor({n, cin}, std::move(own))}, 1);
    for (std::size_t i = 0; i < head_.size(); ++i) {
      x = dense(x, head_[i]);
      if (i == 0 && head_.size() > 1) x = dropout(x, cfg_.dropout, dropout_rng_, mode);
    }
    return x;
  }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    collect(out, "embed", embed_);
    collect(out, "fusion", fusion_);
    collect(out, "attention.channel", channel_mlp_);
    collect(out, "attention.spatial", spatial_mlp_);
    if (spatial_bn_) {
      out.push_back({"attention.spatial_bn.gamma", spatial_bn_->gamma});
      out.push_back({"attention.spatial_bn.beta", spatial_bn_->beta});
    }
    collect(out, "lift", lift_);
    collect(out, cfg_.task == Task::classify ? "head" : "seg_head", head_);
    return out;
  }

  // Non-trainable state (batch-norm running statistics).
  std::vector<NamedTensor> buffers() const {
    std::vector<NamedTensor> out;
    if (spatial_bn_) {
      out.push_back({"attention.spatial_bn.running_mean", spatial_bn_->running_mean});
      out.push_back({"attention.spatial_bn.running_var", spatial_bn_->running_var});
    }
    return out;
  }

  std::vector<NamedTensor> state() const {
    auto out = parameters();
    for (auto& b : buffers()) out.push_back(std::move(b));
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
  }

 private:
  void require_task(Task task) const {
    if (cfg_.task != task) {
      throw ConfigError(std::string("model was built for ") +
                        (cfg_.task == Task::classify ? "classification" : "segmentation"));
    }
  }

  // Skeleton without Z-order sampling: FPS over the embedded centers.
  SkeletonCloud fps_skeleton(const EmbeddedCloud& embedded) const {
    auto source = fps(as_point_cloud(embedded.positions), cfg_.skeleton_points, cfg_.morton_depth);
    return {gather_rows(embedded.positions, source), gather_rows(embedded.features, source),
            std::move(source)};
  }

  NetworkConfig cfg_;
  std::vector<DenseLayer> embed_;
  std::vector<Conv2dLayer> fusion_;
  std::vector<DenseLayer> channel_mlp_;
  std::vector<DenseLayer> spatial_mlp_;
  std::optional<BatchNorm> spatial_bn_;
  std::vector<DenseLayer> lift_;
  std::vector<DenseLayer> head_;
  Rng dropout_rng_;
};

inline Model build(const NetworkConfig& config) { return Model(config); }

/// Per-point response: for each region, how many global-feature channels it
/// wins in the max pool after attention (first maximum on ties).
inline std::vector<std::size_t> point_responses(const ForwardTrace& t) {
  const std::size_t n = t.lifted.dim(0), c = t.lifted.dim(1);
  const auto v = t.lifted.data();
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t j = 0; j < c; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (v[i * c + j] > v[best * c + j]) best = i;
    ++counts[best];
  }
  return counts;
}

}  // namespace pscn
