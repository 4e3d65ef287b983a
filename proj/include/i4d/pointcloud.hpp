#pragma once

// Dense back-projection of a calibrated bundle and voxel-grid pruning into
// Gaussian seeds.

#include "i4d/bundle.hpp"
#include "i4d/gaussian4d.hpp"
#include "i4d/io.hpp"
#include "i4d/motion_mask.hpp"

#include <cstdint>
#include <unordered_map>
#include <vector>

namespace i4d {

struct SeedPoint {
  Eigen::Vector3d position{Eigen::Vector3d::Zero()};
  Eigen::Vector3f color{Eigen::Vector3f::Zero()};
  double timestamp{0};
  double temporal_scale{0};
  float motion_prob{0};
  float depth{0};  // camera depth of the source pixel
  int frame{-1};
  bool is_dynamic{false};
};

/// S_v = lambda * mean_i(mean_depth_i / f_hat).
double compute_voxel_size(const std::vector<double>& mean_depths, double f_hat, double lambda);

/// Mean of the valid (finite, > 0) depths of one map. Zero when none are valid.
double mean_valid_depth(const Plane<float>& depth);

/// One seed per valid-depth pixel of frame `index` (every `stride` pixels).
/// Dynamic seeds get temporal scale 2 / fps, static ones the clip length.
std::vector<SeedPoint> densify_frame(const CalibratedBundle& bundle, int index, const Mask& mask, int stride = 1);

std::vector<SeedPoint> densify_cloud(const CalibratedBundle& bundle, const std::vector<Mask>& masks, int stride = 1);

struct VoxelKey {
  std::int32_t ix{0}, iy{0}, iz{0};
  std::int32_t level{1};   // voxel edge = level * S_v
  std::int32_t frame{-1};  // >= 0 only for per-frame grids

  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept;
};

struct PruneOptions {
  int min_support{2};
  /// Edge S_v * max(1, floor(depth / median_depth)) for each point.
  bool adaptive{false};
  double median_depth{0};
  /// Separate grid per source frame.
  bool per_frame{false};
};

/// Streaming voxel accumulator. Points can be added in batches; the result
/// does not depend on the number of threads.
class VoxelGrid {
 public:
  VoxelGrid(double voxel_size, PruneOptions options);

  [[nodiscard]] VoxelKey key_of(const SeedPoint& p) const;
  void add(const std::vector<SeedPoint>& points);

  /// Surviving voxels in ascending key order.
  [[nodiscard]] std::vector<std::pair<VoxelKey, SeedPoint>> finalize() const;

  [[nodiscard]] Eigen::AlignedBox3d bounds(const VoxelKey& key) const;
  [[nodiscard]] std::size_t occupied() const;
  [[nodiscard]] std::uint64_t points_added() const { return added_; }
  [[nodiscard]] double voxel_size() const { return size_; }

 private:
  struct Accumulator {
    std::uint64_t count{0};
    std::uint64_t dynamic_votes{0};
    Eigen::Vector3d position{Eigen::Vector3d::Zero()};
    Eigen::Vector3d color{Eigen::Vector3d::Zero()};
    double timestamp{0};
    double temporal_scale{0};
    double motion_prob{0};
    double depth{0};
  };
  using Shard = std::unordered_map<VoxelKey, Accumulator, VoxelKeyHash>;

  double size_;
  PruneOptions options_;
  std::vector<Shard> shards_;
  std::uint64_t added_{0};
};

/// One centroid per voxel with at least min_support points; attributes are
/// averaged, is_dynamic by majority vote with ties going dynamic.
std::vector<SeedPoint> grid_prune(const std::vector<SeedPoint>& points, double voxel_size, const PruneOptions& options);

/// Distance to the k-th nearest other point, for each point.
std::vector<double> kth_neighbor_distance(const std::vector<Eigen::Vector3d>& points, int k, double max_distance);

enum class TemporalScaleMode { MotionAware, Uniform };

struct InitConfig {
  InitMode mode{InitMode::Lite};
  double lambda_static{4};
  double lambda_dynamic{4};
  int min_support{2};
  bool adaptive{true};
  int stride{1};
  MaskOptions masks;
  TemporalScaleMode temporal{TemporalScaleMode::MotionAware};
  double initial_opacity{0.1};

  /// Full mode: lambda_s = 1 and dynamic seeds are not pruned.
  static InitConfig full();
};

struct InitReport {
  std::uint64_t raw_static{0}, raw_dynamic{0};
  std::uint64_t seeds_static{0}, seeds_dynamic{0};
  double voxel_static{0}, voxel_dynamic{0};
  double median_depth{0};
  double otsu_threshold{0};
  double masks_s{0}, densify_prune_s{0}, scale_init_s{0}, total_s{0};
  double peak_rss_mb{0};

  [[nodiscard]] double static_reduction() const {
    return raw_static ? 1.0 - double(seeds_static) / double(raw_static) : 0.0;
  }
};

/// Initial spatial scale: 3rd-nearest-neighbor distance within the group,
/// clamped to [0.5, 4] * S_v.
GaussianModel<float> initialize_model(const std::vector<SeedPoint>& static_seeds,
                                      const std::vector<SeedPoint>& dynamic_seeds, double voxel_static,
                                      double voxel_dynamic, const CalibratedBundle& bundle, const InitConfig& config);

struct InitResult {
  GaussianModel<float> model;
  InitReport report;
  std::vector<Mask> masks;
};

/// masks -> densify -> prune -> initialize, streaming one frame at a time.
InitResult initialize_from_bundle(const CalibratedBundle& bundle, const InitConfig& config);

/// Debug export: x, y, z, red, green, blue, t, s_t, motion_prob.
PlyTable seeds_ply_table(const std::vector<SeedPoint>& seeds);

}  // namespace i4d
