#include "i4d/pointcloud.hpp"

#include "i4d/error.hpp"
#include "i4d/geometry.hpp"
#include "i4d/resources.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace i4d {

double compute_voxel_size(const std::vector<double>& mean_depths, double f_hat, double lambda) {
  require(!mean_depths.empty(), "voxel size: no frames");
  require(f_hat > 0 && lambda > 0, "voxel size: focal length and lambda must be positive");
  double sum = 0;
  for (double d : mean_depths) {
    require(d > 0, "voxel size: mean depths must be positive");
    sum += d / f_hat;
  }
  return lambda * sum / double(mean_depths.size());
}

double mean_valid_depth(const Plane<float>& depth) {
  double sum = 0;
  std::uint64_t n = 0;
  for (float d : depth.reshaped()) {
    if (d > 0 && std::isfinite(d)) {
      sum += d;
      ++n;
    }
  }
  return n ? sum / double(n) : 0.0;
}

std::vector<SeedPoint> densify_frame(const CalibratedBundle& bundle, int index, const Mask& mask, int stride) {
  require(stride >= 1, "densify: stride must be positive");
  const auto& f = bundle.frames.at(std::size_t(index));
  if (f.depth.size() == 0) {
    spdlog::warn("densify: frame {} has no depth map; skipped", index);
    return {};
  }
  const int w = bundle.width, h = bundle.height;
  require(f.depth.rows() == h && f.depth.cols() == w && mask.rows() == h && mask.cols() == w &&
              f.rgb.width == w && f.rgb.height == h,
          "densify: depth, mask and RGB sizes differ in frame " + std::to_string(index));
  const Plane<float> prob = upsample_prob(f.motion, h, w);
  const double dynamic_scale = 2.0 / bundle.fps;
  const double static_scale = bundle.video_length();

  const int rows = (h + stride - 1) / stride;
  std::vector<std::vector<SeedPoint>> per_row(static_cast<std::size_t>(rows));
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int y = r * stride;
    auto& out = per_row[std::size_t(r)];
    for (int x = 0; x < w; x += stride) {
      const float d = f.depth(y, x);
      if (!(d > 0) || !std::isfinite(d)) continue;
      SeedPoint p;
      p.position = back_project(Eigen::Vector2d(x, y), double(d), f.pose, bundle.intrinsics);
      p.color = Eigen::Vector3f(f.rgb(x, y, 0), f.rgb(x, y, 1), f.rgb(x, y, 2));
      p.timestamp = f.t;
      p.is_dynamic = mask(y, x) != 0;
      p.temporal_scale = p.is_dynamic ? dynamic_scale : static_scale;
      p.motion_prob = prob(y, x);
      p.depth = d;
      p.frame = index;
      out.push_back(p);
    }
  }
  std::vector<SeedPoint> out;
  for (auto& r : per_row) out.insert(out.end(), r.begin(), r.end());
  return out;
}

std::vector<SeedPoint> densify_cloud(const CalibratedBundle& bundle, const std::vector<Mask>& masks, int stride) {
  require(masks.size() == bundle.frames.size(), "densify: one mask per frame required");
  std::vector<SeedPoint> out;
  for (int i = 0; i < bundle.n_frames(); ++i) {
    auto pts = densify_frame(bundle, i, masks[std::size_t(i)], stride);
    out.insert(out.end(), pts.begin(), pts.end());
  }
  return out;
}

// ---------------------------------------------------------------- voxel grid

std::size_t VoxelKeyHash::operator()(const VoxelKey& k) const noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (std::int32_t v : {k.ix, k.iy, k.iz, k.level, k.frame}) {
    h ^= std::uint64_t(std::uint32_t(v));
    h *= 1099511628211ull;
  }
  return std::size_t(h ^ (h >> 29));
}

namespace {

constexpr int kShards = 64;

std::int32_t cell_index(double v) {
  const double f = std::floor(v);
  if (!(f >= double(std::numeric_limits<std::int32_t>::min()) && f <= double(std::numeric_limits<std::int32_t>::max()))) {
    throw InvalidInput("voxel grid: point outside the representable grid");
  }
  return std::int32_t(f);
}

}  // namespace

VoxelGrid::VoxelGrid(double voxel_size, PruneOptions options)
    : size_(voxel_size), options_(options), shards_(kShards) {
  require(voxel_size > 0 && std::isfinite(voxel_size), "voxel grid: voxel size must be positive");
  require(options.min_support >= 1, "voxel grid: min_support must be at least 1");
  require(!options.adaptive || options.median_depth > 0, "voxel grid: adaptive sizing needs a positive median depth");
}

VoxelKey VoxelGrid::key_of(const SeedPoint& p) const {
  VoxelKey k;
  if (options_.adaptive) {
    const double ratio = double(p.depth) / options_.median_depth;
    k.level = ratio >= 2.0 ? std::int32_t(std::min(ratio, 1e6)) : 1;
  }
  const double edge = size_ * k.level;
  k.ix = cell_index(p.position.x() / edge);
  k.iy = cell_index(p.position.y() / edge);
  k.iz = cell_index(p.position.z() / edge);
  k.frame = options_.per_frame ? p.frame : -1;
  return k;
}

Eigen::AlignedBox3d VoxelGrid::bounds(const VoxelKey& k) const {
  const double edge = size_ * k.level;
  const Eigen::Vector3d lo(k.ix * edge, k.iy * edge, k.iz * edge);
  return {lo, lo + Eigen::Vector3d::Constant(edge)};
}

void VoxelGrid::add(const std::vector<SeedPoint>& points) {
  const std::size_t n = points.size();
  std::vector<VoxelKey> keys(n);
  std::vector<std::uint8_t> shard(n);
  const VoxelKeyHash hash;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    keys[i] = key_of(points[i]);
    shard[i] = std::uint8_t(hash(keys[i]) % kShards);
  }
  // Bucket point indices by shard, keeping input order inside each bucket so
  // per-voxel sums happen in the same order for any thread count.
  std::array<std::size_t, kShards + 1> offsets{};
  for (std::size_t i = 0; i < n; ++i) ++offsets[shard[i] + 1];
  for (int s = 0; s < kShards; ++s) offsets[s + 1] += offsets[s];
  std::vector<std::uint32_t> order(n);
  {
    auto cursor = offsets;
    for (std::size_t i = 0; i < n; ++i) order[cursor[shard[i]]++] = std::uint32_t(i);
  }
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < kShards; ++s) {
    auto& map = shards_[std::size_t(s)];
    for (std::size_t j = offsets[s]; j < offsets[s + 1]; ++j) {
      const auto& p = points[order[j]];
      auto& a = map[keys[order[j]]];
      ++a.count;
      a.dynamic_votes += p.is_dynamic ? 1 : 0;
      a.position += p.position;
      a.color += p.color.cast<double>();
      a.timestamp += p.timestamp;
      a.temporal_scale += p.temporal_scale;
      a.motion_prob += p.motion_prob;
      a.depth += p.depth;
    }
  }
  added_ += n;
}

std::size_t VoxelGrid::occupied() const {
  std::size_t n = 0;
  for (const auto& s : shards_) n += s.size();
  return n;
}

std::vector<std::pair<VoxelKey, SeedPoint>> VoxelGrid::finalize() const {
  std::vector<std::pair<VoxelKey, SeedPoint>> out;
  for (const auto& shard : shards_) {
    for (const auto& [key, a] : shard) {
      if (a.count < std::uint64_t(options_.min_support)) continue;
      const double inv = 1.0 / double(a.count);
      SeedPoint p;
      p.position = a.position * inv;
      p.color = (a.color * inv).cast<float>();
      p.timestamp = a.timestamp * inv;
      p.temporal_scale = a.temporal_scale * inv;
      p.motion_prob = float(a.motion_prob * inv);
      p.depth = float(a.depth * inv);
      p.frame = key.frame;
      p.is_dynamic = 2 * a.dynamic_votes >= a.count;
      out.emplace_back(key, p);
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::vector<SeedPoint> grid_prune(const std::vector<SeedPoint>& points, double voxel_size, const PruneOptions& options) {
  VoxelGrid grid(voxel_size, options);
  grid.add(points);
  std::vector<SeedPoint> out;
  for (auto& [key, p] : grid.finalize()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------- kNN

std::vector<double> kth_neighbor_distance(const std::vector<Eigen::Vector3d>& points, int k, double max_distance) {
  require(k >= 1 && max_distance > 0, "kth_neighbor_distance: invalid arguments");
  const double cell = max_distance / 2.0;
  std::unordered_map<VoxelKey, std::vector<std::uint32_t>, VoxelKeyHash> grid;
  auto key_of = [&](const Eigen::Vector3d& p) {
    VoxelKey key;
    key.ix = cell_index(p.x() / cell);
    key.iy = cell_index(p.y() / cell);
    key.iz = cell_index(p.z() / cell);
    return key;
  };
  for (std::size_t i = 0; i < points.size(); ++i) grid[key_of(points[i])].push_back(std::uint32_t(i));

  std::vector<double> out(points.size(), std::numeric_limits<double>::infinity());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const VoxelKey c = key_of(p);
    std::vector<double> best;  // k smallest squared distances, ascending
    best.reserve(std::size_t(k) + 1);
    for (int dz = -2; dz <= 2; ++dz)
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          VoxelKey n = c;
          n.ix += dx;
          n.iy += dy;
          n.iz += dz;
          const auto it = grid.find(n);
          if (it == grid.end()) continue;
          for (std::uint32_t j : it->second) {
            if (j == i) continue;
            const double d2 = (points[j] - p).squaredNorm();
            if (int(best.size()) == k && d2 >= best.back()) continue;
            best.insert(std::upper_bound(best.begin(), best.end(), d2), d2);
            if (int(best.size()) > k) best.pop_back();
          }
        }
    if (int(best.size()) == k && best.back() <= max_distance * max_distance) out[i] = std::sqrt(best.back());
  }
  return out;
}

// ---------------------------------------------------------------- init

InitConfig InitConfig::full() {
  InitConfig c;
  c.mode = InitMode::Full;
  c.lambda_static = 1;
  c.lambda_dynamic = 1;
  return c;
}

namespace {

void scale_group(const std::vector<SeedPoint>& seeds, const std::vector<std::size_t>& members, double voxel,
                 std::vector<double>& scales) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(members.size());
  for (std::size_t i : members) pts.push_back(seeds[i].position);
  const auto d = kth_neighbor_distance(pts, 3, 4.0 * voxel);
  for (std::size_t k = 0; k < members.size(); ++k) scales[members[k]] = std::clamp(d[k], 0.5 * voxel, 4.0 * voxel);
}

}  // namespace

GaussianModel<float> initialize_model(const std::vector<SeedPoint>& static_seeds,
                                      const std::vector<SeedPoint>& dynamic_seeds, double voxel_static,
                                      double voxel_dynamic, const CalibratedBundle& bundle, const InitConfig& config) {
  require(!static_seeds.empty() || !dynamic_seeds.empty(), "initialize_model: no seeds");
  require(config.initial_opacity > 0 && config.initial_opacity < 1, "initialize_model: opacity must be in (0, 1)");

  // Spatial scales: static seeds form one group, dynamic seeds one group per frame.
  std::vector<double> static_scales(static_seeds.size()), dynamic_scales(dynamic_seeds.size());
  if (!static_seeds.empty()) {
    std::vector<std::size_t> all(static_seeds.size());
    std::iota(all.begin(), all.end(), std::size_t(0));
    scale_group(static_seeds, all, voxel_static, static_scales);
  }
  std::map<int, std::vector<std::size_t>> by_frame;
  for (std::size_t k = 0; k < dynamic_seeds.size(); ++k) by_frame[dynamic_seeds[k].frame].push_back(k);
  for (const auto& [frame, members] : by_frame) scale_group(dynamic_seeds, members, voxel_dynamic, dynamic_scales);

  GaussianModel<float> m;
  m.resize(Eigen::Index(static_seeds.size() + dynamic_seeds.size()));
  m.fps = bundle.fps;
  m.video_length = bundle.video_length();
  m.mode = config.mode;
  const float opacity_logit = float(logit(config.initial_opacity));
  const double uniform_scale_t = 2.0 / bundle.fps;
  Eigen::Index i = 0;
  auto emit = [&](const SeedPoint& s, double scale) {
    m.mean.row(i) << float(s.position.x()), float(s.position.y()), float(s.position.z()), float(s.timestamp);
    m.log_scale(i) = float(std::log(scale));
    const double st = config.temporal == TemporalScaleMode::Uniform ? uniform_scale_t : s.temporal_scale;
    m.log_scale_t(i) = float(std::log(st));
    m.opacity_logit(i) = opacity_logit;
    m.rgb.row(i) = s.color.transpose();
    m.is_dynamic[std::size_t(i)] = s.is_dynamic ? 1 : 0;
    ++i;
  };
  for (std::size_t k = 0; k < static_seeds.size(); ++k) emit(static_seeds[k], static_scales[k]);
  for (std::size_t k = 0; k < dynamic_seeds.size(); ++k) emit(dynamic_seeds[k], dynamic_scales[k]);
  return m;
}

InitResult initialize_from_bundle(const CalibratedBundle& bundle, const InitConfig& config) {
  bundle.validate();
  require(config.lambda_static > 0 && config.lambda_dynamic > 0, "init: lambda must be positive");
  Stopwatch total;
  InitResult out;
  auto& rep = out.report;

  Stopwatch sw;
  std::vector<MotionProbMap<float>> maps;
  for (int i = 0; i < bundle.n_frames(); ++i) maps.push_back({bundle.frames[std::size_t(i)].motion, i});
  auto masks = compute_masks(maps, bundle.height, bundle.width, config.masks);
  rep.otsu_threshold = masks.otsu.threshold;
  out.masks = std::move(masks.masks);
  rep.masks_s = sw.seconds();

  sw.reset();
  std::vector<double> mean_depths;
  std::vector<float> depths;
  for (const auto& f : bundle.frames) {
    const double d = mean_valid_depth(f.depth);
    if (d > 0) mean_depths.push_back(d);
    for (Eigen::Index y = 0; y < f.depth.rows(); y += config.stride)
      for (Eigen::Index x = 0; x < f.depth.cols(); x += config.stride) {
        const float v = f.depth(y, x);
        if (v > 0 && std::isfinite(v)) depths.push_back(v);
      }
  }
  require(!depths.empty(), "init: bundle has no valid depth");
  std::nth_element(depths.begin(), depths.begin() + std::ptrdiff_t(depths.size() / 2), depths.end());
  rep.median_depth = depths[depths.size() / 2];
  depths = {};
  const double f_hat = bundle.focal_mean();
  rep.voxel_static = compute_voxel_size(mean_depths, f_hat, config.lambda_static);
  rep.voxel_dynamic = compute_voxel_size(mean_depths, f_hat, config.lambda_dynamic);

  PruneOptions opt;
  opt.min_support = config.min_support;
  opt.adaptive = config.adaptive;
  opt.median_depth = rep.median_depth;
  VoxelGrid static_grid(rep.voxel_static, opt);
  opt.per_frame = true;
  VoxelGrid dynamic_grid(rep.voxel_dynamic, opt);
  const bool prune_dynamic = config.mode == InitMode::Lite;
  std::vector<SeedPoint> dynamic_seeds;

  for (int i = 0; i < bundle.n_frames(); ++i) {
    auto pts = densify_frame(bundle, i, out.masks[std::size_t(i)], config.stride);
    std::vector<SeedPoint> stat, dyn;
    for (auto& p : pts) (p.is_dynamic ? dyn : stat).push_back(p);
    rep.raw_static += stat.size();
    rep.raw_dynamic += dyn.size();
    static_grid.add(stat);
    if (prune_dynamic) dynamic_grid.add(dyn);
    else dynamic_seeds.insert(dynamic_seeds.end(), dyn.begin(), dyn.end());
  }
  std::vector<SeedPoint> static_seeds;
  for (auto& [key, p] : static_grid.finalize()) static_seeds.push_back(p);
  if (prune_dynamic) {
    for (auto& [key, p] : dynamic_grid.finalize()) dynamic_seeds.push_back(p);
  }
  rep.seeds_static = static_seeds.size();
  rep.seeds_dynamic = dynamic_seeds.size();
  rep.densify_prune_s = sw.seconds();

  sw.reset();
  out.model = initialize_model(static_seeds, dynamic_seeds, rep.voxel_static, rep.voxel_dynamic, bundle, config);
  rep.scale_init_s = sw.seconds();
  rep.total_s = total.seconds();
  rep.peak_rss_mb = peak_rss_mb();
  return out;
}

PlyTable seeds_ply_table(const std::vector<SeedPoint>& seeds) {
  PlyTable t;
  t.properties = {{"x", PlyType::Float32},   {"y", PlyType::Float32},   {"z", PlyType::Float32},
                  {"red", PlyType::UInt8},   {"green", PlyType::UInt8}, {"blue", PlyType::UInt8},
                  {"t", PlyType::Float32},   {"s_t", PlyType::Float32}, {"motion_prob", PlyType::Float32}};
  t.rows.resize(Eigen::Index(seeds.size()), 9);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& s = seeds[i];
    t.rows.row(Eigen::Index(i)) << s.position.x(), s.position.y(), s.position.z(), to_u8(s.color.x()),
        to_u8(s.color.y()), to_u8(s.color.z()), s.timestamp, s.temporal_scale, s.motion_prob;
  }
  return t;
}

}  // namespace i4d
