#include "i4d/trainer.hpp"

#include "i4d/error.hpp"
#include "i4d/io.hpp"
#include "i4d/resources.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>

namespace i4d {

using nlohmann::json;

void TrainConfig::validate() const {
  require(max_iters >= 0, "train: max_iters must be non-negative");
  require(lr_position > 0 && lr_position_final > 0 && lr_opacity > 0 && lr_scale > 0 && lr_rgb > 0 && lr_time > 0,
          "train: learning rates must be positive");
  require(loss_lambda >= 0 && loss_lambda <= 1, "train: loss_lambda must be in [0, 1]");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0, "train: invalid Adam constants");
}

double TrainConfig::position_lr(int iteration) const {
  if (max_iters <= 0) return lr_position;
  const double f = std::clamp(double(iteration) / double(max_iters), 0.0, 1.0);
  return std::exp((1 - f) * std::log(lr_position) + f * std::log(lr_position_final));
}

// ---------------------------------------------------------------- Adam

template <typename Scalar>
void Adam<Scalar>::reset(Eigen::Index n) {
  m_mean_.setZero(n, 4);
  v_mean_.setZero(n, 4);
  m_scale_.setZero(n);
  v_scale_.setZero(n);
  m_scale_t_.setZero(n);
  v_scale_t_.setZero(n);
  m_opacity_.setZero(n);
  v_opacity_.setZero(n);
  m_rgb_.setZero(n, 3);
  v_rgb_.setZero(n, 3);
  steps_ = 0;
}

template <typename Scalar>
void Adam<Scalar>::step(GaussianModel<Scalar>& model, const GradBuffer<Scalar>& grad, const TrainConfig& c,
                        double lr_position) {
  const Eigen::Index n = model.size();
  require(grad.mean.rows() == n && m_mean_.rows() == n, "adam: size mismatch");
  ++steps_;
  const double bc1 = 1 - std::pow(c.beta1, double(steps_));
  const double bc2 = 1 - std::pow(c.beta2, double(steps_));
  const Scalar b1 = Scalar(c.beta1), b2 = Scalar(c.beta2);
  auto update = [&](Scalar& param, Scalar& m, Scalar& v, Scalar g, double lr) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = double(m) / bc1, vh = double(v) / bc2;
    param -= Scalar(lr * mh / (std::sqrt(vh) + c.adam_eps));
  };
  const int spatial = 3;
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!grad.visible[std::size_t(i)]) continue;
    for (int k = 0; k < spatial; ++k) update(model.mean(i, k), m_mean_(i, k), v_mean_(i, k), grad.mean(i, k), lr_position);
    update(model.log_scale(i), m_scale_(i), v_scale_(i), grad.log_scale(i), c.lr_scale);
    update(model.opacity_logit(i), m_opacity_(i), v_opacity_(i), grad.opacity_logit(i), c.lr_opacity);
    for (int k = 0; k < 3; ++k) {
      update(model.rgb(i, k), m_rgb_(i, k), v_rgb_(i, k), grad.rgb(i, k), c.lr_rgb);
      model.rgb(i, k) = std::clamp(model.rgb(i, k), Scalar(0), Scalar(1));
    }
    if (c.train_temporal) {
      update(model.mean(i, 3), m_mean_(i, 3), v_mean_(i, 3), grad.mean(i, 3), c.lr_time);
      update(model.log_scale_t(i), m_scale_t_(i), v_scale_t_(i), grad.log_scale_t(i), c.lr_time);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

// ---------------------------------------------------------------- views

std::vector<TrainView> training_views(const CalibratedBundle& bundle) {
  std::vector<TrainView> views;
  for (const auto& f : bundle.frames) {
    views.push_back({f.rgb, {f.pose.cast<float>(), bundle.intrinsics.cast<float>()}, float(f.t)});
  }
  return views;
}

// ---------------------------------------------------------------- report

namespace {

json stage(double seconds, std::optional<double> memory_mb) {
  return {{"seconds", seconds}, {"memory_mb", memory_mb ? json(*memory_mb) : json(nullptr)}};
}

}  // namespace

json init_report_json(const InitReport& r) {
  return {{"raw_static", r.raw_static},
          {"raw_dynamic", r.raw_dynamic},
          {"seeds_static", r.seeds_static},
          {"seeds_dynamic", r.seeds_dynamic},
          {"static_reduction", r.static_reduction()},
          {"voxel_static", r.voxel_static},
          {"voxel_dynamic", r.voxel_dynamic},
          {"median_depth", r.median_depth},
          {"otsu_threshold", r.otsu_threshold},
          {"masks_s", r.masks_s},
          {"densify_prune_s", r.densify_prune_s},
          {"scale_init_s", r.scale_init_s},
          {"total_s", r.total_s},
          {"peak_rss_mb", r.peak_rss_mb}};
}

InitReport init_report_from_json(const json& j) {
  InitReport r;
  r.raw_static = j.at("raw_static").get<std::uint64_t>();
  r.raw_dynamic = j.at("raw_dynamic").get<std::uint64_t>();
  r.seeds_static = j.at("seeds_static").get<std::uint64_t>();
  r.seeds_dynamic = j.at("seeds_dynamic").get<std::uint64_t>();
  r.voxel_static = j.at("voxel_static").get<double>();
  r.voxel_dynamic = j.at("voxel_dynamic").get<double>();
  r.median_depth = j.at("median_depth").get<double>();
  r.otsu_threshold = j.at("otsu_threshold").get<double>();
  r.masks_s = j.at("masks_s").get<double>();
  r.densify_prune_s = j.at("densify_prune_s").get<double>();
  r.scale_init_s = j.at("scale_init_s").get<double>();
  r.total_s = j.at("total_s").get<double>();
  r.peak_rss_mb = j.at("peak_rss_mb").get<double>();
  return r;
}

json TrainReport::to_json() const {
  json init_stages;
  if (init) {
    init_stages = {{"motion_masks", stage(init->masks_s, std::nullopt)},
                   {"grid_pruning", stage(init->densify_prune_s, std::nullopt)},
                   {"scale_init", stage(init->scale_init_s, std::nullopt)},
                   {"total", stage(init->total_s, init->peak_rss_mb)}};
  } else {
    init_stages = {{"motion_masks", nullptr}, {"grid_pruning", nullptr}, {"scale_init", nullptr}, {"total", nullptr}};
  }
  json j;
  j["geometry_recovery"] = init_stages;
  j["optimization"] = {{"forward_splatting", stage(forward_s, forward_rss_mb)},
                       {"loss", stage(loss_s, std::nullopt)},
                       {"backward", stage(backward_s, backward_rss_mb)},
                       {"optimizer_update", stage(update_s, std::nullopt)}};
  j["total_training_time"] = stage(total_s + (init ? init->total_s : 0.0), peak_rss_mb);
  j["iterations"] = iterations;
  j["gaussians"] = gaussians;
  j["dynamic_gaussians"] = dynamic_gaussians;
  j["final_loss"] = final_loss;
  j["final_psnr_train"] = final_psnr;
  if (init) j["init"] = init_report_json(*init);
  return j;
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(GaussianModel<float>& model, const CalibratedBundle& bundle, TrainConfig config)
    : model_(model), config_(std::move(config)), views_(training_views(bundle)), raster_(config_.raster),
      rng_(config_.seed) {
  config_.validate();
  require(!model.empty(), "train: model has no primitives");
  require(!views_.empty(), "train: bundle has no frames");
  adam_.reset(model.size());
  report_.gaussians = model.size();
  report_.dynamic_gaussians = model.count_dynamic();
}

StepMetrics Trainer::step() {
  std::uniform_int_distribution<int> pick(0, int(views_.size()) - 1);
  return step_on(pick(rng_));
}

StepMetrics Trainer::step_on(int frame) {
  const auto& view = views_.at(std::size_t(frame));
  StepMetrics out;
  out.iteration = iteration_;
  out.frame = frame;

  Stopwatch sw;
  const auto img = raster_.render(model_, view.camera, view.t);
  report_.forward_s += sw.seconds();
  report_.forward_rss_mb = std::max(report_.forward_rss_mb, current_rss_mb());

  sw.reset();
  const auto loss = photometric_loss(img.rgb, view.image, config_.loss_lambda, &dloss_);
  out.loss = loss.loss;
  out.psnr = psnr(img.rgb, view.image);
  report_.loss_s += sw.seconds();
  if (!std::isfinite(loss.loss) || !dloss_.pixels.allFinite()) {
    json dump = {{"iteration", iteration_},
                 {"frame", frame},
                 {"t", view.t},
                 {"loss", std::isfinite(loss.loss) ? json(loss.loss) : json(std::to_string(loss.loss))},
                 {"nonfinite_means", (!model_.mean.array().isFinite()).count()},
                 {"nonfinite_log_scales", (!model_.log_scale.array().isFinite()).count()},
                 {"nonfinite_opacities", (!model_.opacity_logit.array().isFinite()).count()},
                 {"nonfinite_colors", (!model_.rgb.array().isFinite()).count()},
                 {"nonfinite_pixels", (!img.rgb.pixels.isFinite()).count()}};
    if (!config_.dump_path.empty()) write_file(config_.dump_path, dump.dump(2));
    throw NonFiniteLoss("non-finite loss: " + dump.dump());
  }

  sw.reset();
  const auto grad = raster_.backward(model_, view.camera, view.t, dloss_, config_.train_temporal);
  report_.backward_s += sw.seconds();
  report_.backward_rss_mb = std::max(report_.backward_rss_mb, current_rss_mb());

  sw.reset();
  adam_.step(model_, grad, config_, config_.position_lr(iteration_));
  report_.update_s += sw.seconds();

  for (auto v : grad.visible) out.visible += v ? 1 : 0;
  report_.loss_history.push_back(out.loss);
  report_.final_loss = out.loss;
  report_.final_psnr = out.psnr;
  ++iteration_;
  report_.iterations = iteration_;
  return out;
}

TrainReport train(GaussianModel<float>& model, const CalibratedBundle& bundle, const TrainConfig& config,
                  const ProgressSink& progress) {
  Stopwatch total;
  const Eigen::Index count = model.size();
  Trainer trainer(model, bundle, config);
  for (int i = 0; i < config.max_iters; ++i) {
    const auto m = trainer.step();
    const bool last = i + 1 == config.max_iters;
    if (progress && (last || (config.log_every > 0 && (i + 1) % config.log_every == 0))) {
      progress({{"iter", i + 1},
                {"loss", m.loss},
                {"psnr_train", m.psnr},
                {"elapsed_s", total.seconds()},
                {"rss_mb", current_rss_mb()}});
    }
  }
  if (model.size() != count) throw std::logic_error("train: primitive count changed");
  TrainReport report = trainer.report();
  report.total_s = total.seconds();
  report.peak_rss_mb = peak_rss_mb();
  return report;
}

MetricReport evaluate(const GaussianModel<float>& model, const CalibratedBundle& bundle,
                      const RasterSettings& settings) {
  MetricReport out;
  Rasterizer<float> raster(settings);
  for (const auto& view : training_views(bundle)) {
    const auto img = raster.render(model, view.camera, view.t);
    out.psnr.push_back(psnr(img.rgb, view.image));
    out.ssim.push_back(ssim(img.rgb, view.image));
  }
  return out;
}

MetricReport evaluate_interpolated(const GaussianModel<float>& model, const SyntheticSceneSpec& spec,
                                   const RasterSettings& settings) {
  MetricReport out;
  Rasterizer<float> raster(settings);
  for (int i = 0; i + 1 < spec.n_frames; ++i) {
    const double t = 0.5 * (spec.frame_time(i) + spec.frame_time(i + 1));
    const auto camera = spec.camera_at(t);
    const auto truth = quantize8(render_ground_truth(spec, camera, t));
    const auto img = raster.render(model, camera.cast<float>(), float(t));
    out.psnr.push_back(psnr(img.rgb, truth));
    out.ssim.push_back(ssim(img.rgb, truth));
  }
  return out;
}

}  // namespace i4d
