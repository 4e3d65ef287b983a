#pragma once

// Photometric optimization of a seeded model: one random training frame per
// step, exact gradients from the rasterizer, Adam updates. The primitive
// count never changes.

#include "i4d/bundle.hpp"
#include "i4d/gaussian4d.hpp"
#include "i4d/metrics.hpp"
#include "i4d/pointcloud.hpp"
#include "i4d/rasterizer.hpp"
#include "i4d/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace i4d {

struct TrainConfig {
  int max_iters{5000};
  double lr_position{1e-5};
  double lr_position_final{1e-7};  // exponential decay over max_iters
  double lr_opacity{0.05};
  double lr_scale{5e-3};
  double lr_rgb{2.5e-3};
  double lr_time{1e-3};  // mu_t and log s_t, only with train_temporal
  double loss_lambda{0.2};
  double beta1{0.9};
  double beta2{0.999};
  double adam_eps{1e-15};
  bool train_temporal{false};
  std::uint64_t seed{0};
  RasterSettings raster;
  int log_every{100};
  std::string dump_path;  // diagnostics written here when the loss goes non-finite

  void validate() const;
  [[nodiscard]] double position_lr(int iteration) const;
};

/// Adam moments for every trainable array. Only primitives marked visible in
/// the gradient buffer are touched; the step counter is global.
template <typename Scalar>
class Adam {
 public:
  void reset(Eigen::Index n);
  void step(GaussianModel<Scalar>& model, const GradBuffer<Scalar>& grad, const TrainConfig& config, double lr_position);
  [[nodiscard]] std::int64_t steps() const { return steps_; }

 private:
  using Model = GaussianModel<Scalar>;
  typename Model::Means m_mean_, v_mean_;
  typename Model::Vec m_scale_, v_scale_, m_scale_t_, v_scale_t_, m_opacity_, v_opacity_;
  typename Model::Colors m_rgb_, v_rgb_;
  std::int64_t steps_{0};
};

struct TrainView {
  RgbImage<float> image;
  Camera<float> camera;
  float t{0};
};

std::vector<TrainView> training_views(const CalibratedBundle& bundle);

struct StepMetrics {
  int iteration{0};
  int frame{0};
  double loss{0};
  double psnr{0};
  Eigen::Index visible{0};
};

struct TrainReport {
  int iterations{0};
  Eigen::Index gaussians{0};
  Eigen::Index dynamic_gaussians{0};
  double final_loss{0};
  double final_psnr{0};
  double forward_s{0};   // render
  double loss_s{0};      // photometric loss and its image gradient
  double backward_s{0};  // rasterizer reverse pass
  double update_s{0};    // Adam
  double total_s{0};
  double forward_rss_mb{0};
  double backward_rss_mb{0};
  double peak_rss_mb{0};
  std::vector<double> loss_history;
  std::optional<InitReport> init;

  /// Stage -> {seconds, memory_mb}, grouped like a runtime breakdown table.
  [[nodiscard]] nlohmann::json to_json() const;
};

nlohmann::json init_report_json(const InitReport& report);
InitReport init_report_from_json(const nlohmann::json& j);

class Trainer {
 public:
  Trainer(GaussianModel<float>& model, const CalibratedBundle& bundle, TrainConfig config);

  /// One iteration on a frame drawn uniformly at random.
  StepMetrics step();
  /// One iteration on a given frame (does not consume the frame RNG).
  StepMetrics step_on(int frame);

  [[nodiscard]] int iteration() const { return iteration_; }
  [[nodiscard]] const TrainReport& report() const { return report_; }
  [[nodiscard]] const std::vector<TrainView>& views() const { return views_; }

 private:
  GaussianModel<float>& model_;
  TrainConfig config_;
  std::vector<TrainView> views_;
  Rasterizer<float> raster_;
  Adam<float> adam_;
  std::mt19937_64 rng_;
  RgbImage<float> dloss_;
  int iteration_{0};
  TrainReport report_;
};

using ProgressSink = std::function<void(const nlohmann::json&)>;

/// Runs config.max_iters steps. `progress` receives {iter, loss, psnr_train,
/// elapsed_s, rss_mb} every log_every iterations and after the last one.
TrainReport train(GaussianModel<float>& model, const CalibratedBundle& bundle, const TrainConfig& config,
                  const ProgressSink& progress = {});

/// Renders every training view and compares against the bundle images.
MetricReport evaluate(const GaussianModel<float>& model, const CalibratedBundle& bundle,
                      const RasterSettings& settings = {});

/// Held-out check on a synthetic scene: views halfway between consecutive
/// frames, compared against the 8-bit ground truth at that time and pose.
MetricReport evaluate_interpolated(const GaussianModel<float>& model, const SyntheticSceneSpec& spec,
                                   const RasterSettings& settings = {});

}  // namespace i4d
