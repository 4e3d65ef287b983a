// i4d: synth / init / train / render / eval / serve.
// Exit codes: 0 ok, 2 invalid input or I/O failure, 3 non-finite loss, 1 anything else.

#include "i4d/bundle.hpp"
#include "i4d/checkpoint.hpp"
#include "i4d/io.hpp"
#include "i4d/pointcloud.hpp"
#include "i4d/resources.hpp"
#include "i4d/server.hpp"
#include "i4d/synthetic.hpp"
#include "i4d/trainer.hpp"
#include "i4d/view.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace i4d;

namespace {

std::string init_sidecar(const std::string& checkpoint) { return checkpoint + ".init.json"; }

json parse_json_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

struct SynthArgs {
  std::string spec;
  std::string out;
  std::uint64_t seed{0};
};

int run_synth(const SynthArgs& a) {
  const SyntheticSceneSpec spec = a.spec.empty() ? reference_scene_spec() : load_spec(a.spec);
  const SyntheticOutput out = generate_synthetic(spec, a.seed);
  save_bundle(out.bundle, a.out);
  for (int i = 0; i < int(out.dynamic_masks.size()); ++i)
    write_mask_png((fs::path(a.out) / frame_file_name("gt_dynamic", i, "png")).string(), out.dynamic_masks[size_t(i)]);
  write_file((fs::path(a.out) / "scene.json").string(), spec_to_json(spec));
  std::printf("wrote %d frames (%dx%d) to %s\n", out.bundle.n_frames(), out.bundle.width, out.bundle.height,
              a.out.c_str());
  return 0;
}

struct InitArgs {
  std::string bundle;
  std::string mode{"lite"};
  std::string out;
  std::string seeds_ply;
  bool uniform_time{false};
};

int run_init(const InitArgs& a) {
  const CalibratedBundle bundle = load_bundle(a.bundle);
  if (bundle.n_frames() == 0) throw InvalidInput(a.bundle + ": bundle has no frames");
  InitConfig config = a.mode == "full" ? InitConfig::full() : InitConfig{};
  if (a.uniform_time) config.temporal = TemporalScaleMode::Uniform;
  const InitResult result = initialize_from_bundle(bundle, config);
  const InitReport& r = result.report;
  save_checkpoint(result.model, a.out);
  write_json(init_sidecar(a.out), init_report_json(r));
  std::printf("static points: %llu -> %llu\n", (unsigned long long)r.raw_static, (unsigned long long)r.seeds_static);
  std::printf("dynamic points: %llu -> %llu\n", (unsigned long long)r.raw_dynamic,
              (unsigned long long)r.seeds_dynamic);
  std::printf("static reduction: %.2f%%\n", 100.0 * r.static_reduction());
  std::printf("voxel size: static %.6g, dynamic %.6g\n", r.voxel_static, r.voxel_dynamic);
  std::printf("gaussians: %lld (%.2fs)\n", (long long)result.model.size(), r.total_s);
  return 0;
}

struct TrainArgs {
  std::string bundle;
  std::string init;
  std::string out;
  std::string report;
  std::string progress;
  std::string dump;
  int iters{1500};
  std::uint64_t seed{0};
  int log_every{100};
  bool temporal{false};
};

int run_train(const TrainArgs& a) {
  const CalibratedBundle bundle = load_bundle(a.bundle);
  GaussianModel<float> model = load_checkpoint(a.init);
  std::optional<InitReport> init;
  if (fs::exists(init_sidecar(a.init))) init = init_report_from_json(parse_json_file(init_sidecar(a.init)));

  TrainConfig config;
  config.max_iters = a.iters;
  config.seed = a.seed;
  config.log_every = a.log_every;
  config.train_temporal = a.temporal;
  config.dump_path = a.dump.empty() ? a.out + ".nonfinite.json" : a.dump;

  std::ofstream progress;
  if (!a.progress.empty()) {
    progress.open(a.progress);
    if (!progress) throw IoError(a.progress + ": cannot open for writing");
  }
  TrainReport report = train(model, bundle, config, [&](const json& line) {
    const std::string s = line.dump();
    std::printf("%s\n", s.c_str());
    std::fflush(stdout);
    if (progress) progress << s << "\n" << std::flush;
  });
  if (init) report.init = init;
  save_checkpoint(model, a.out);
  write_json(a.report.empty() ? a.out + ".report.json" : a.report, report.to_json());
  std::printf("final loss %.6f, psnr %.3f dB, %lld gaussians, %.1fs\n", report.final_loss, report.final_psnr,
              (long long)report.gaussians, report.total_s);
  return 0;
}

struct RenderArgs {
  std::string model;
  std::string pose;
  std::optional<double> t;
  std::optional<int> width, height;
  std::optional<double> fov_y;
  std::string out;
};

ViewRequest request_from_pose_file(const std::string& path) {
  const json j = parse_json_file(path);
  if (j.is_array()) return view_request_from_json(json{{"pose", j}});
  return view_request_from_json(j);
}

int run_render(const RenderArgs& a) {
  const GaussianModel<float> model = load_checkpoint(a.model);
  ViewRequest request = request_from_pose_file(a.pose);
  if (a.t) request.t = *a.t;
  if (a.width) request.width = *a.width;
  if (a.height) request.height = *a.height;
  if (a.fov_y) request.fov_y = *a.fov_y;
  request.validate();
  bool clamped = false;
  const double t = clamp_time(model, request.t, &clamped);
  if (clamped) spdlog::warn("t = {} is outside the clip [0, {}]; rendering at t = {}", request.t, model.video_length, t);
  Rasterizer<float> rasterizer;
  const FrameImage<float> frame = render_view(rasterizer, model, request);
  write_png(a.out, frame.rgb);
  std::printf("rendered %dx%d at t = %.6g: %lld survivors, %.2f ms\n", request.width, request.height, t,
              (long long)frame.survivors, frame.project_ms + frame.sort_ms + frame.raster_ms);
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string bundle;
  std::string spec;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  const GaussianModel<float> model = load_checkpoint(a.model);
  const CalibratedBundle bundle = load_bundle(a.bundle);
  const MetricReport m = evaluate(model, bundle);
  json j{{"scene", fs::path(a.bundle).lexically_normal().filename().string()},
         {"psnr", m.mean_psnr()},
         {"ssim", m.mean_ssim()},
         {"frames", bundle.n_frames()},
         {"per_frame", {{"psnr", m.psnr}, {"ssim", m.ssim}}}};
  if (j["scene"].get<std::string>().empty()) j["scene"] = fs::absolute(a.bundle).parent_path().filename().string();
  if (!a.spec.empty()) {
    const MetricReport h = evaluate_interpolated(model, load_spec(a.spec));
    j["heldout"] = {{"psnr", h.mean_psnr()}, {"ssim", h.mean_ssim()}, {"frames", h.psnr.size()}};
  }
  if (a.out.empty() || a.out == "-")
    std::printf("%s\n", j.dump(2).c_str());
  else
    write_json(a.out, j);
  std::printf("psnr %.3f dB, ssim %.4f\n", m.mean_psnr(), m.mean_ssim());
  return 0;
}

struct ServeArgs {
  std::string model;
  std::string address{"0.0.0.0"};
  int port{8080};
  int stream_port{-1};
  std::string assets;
  int workers{0};
};

int run_serve(const ServeArgs& a, int threads) {
  auto model = std::make_shared<const GaussianModel<float>>(load_checkpoint(a.model));
  ServerOptions options;
  options.address = a.address;
  options.port = a.port;
  options.stream_port = a.stream_port;
  options.assets_dir = a.assets;
  // The worker pool shares the configured thread budget.
  options.service.workers = a.workers > 0 ? a.workers : std::max(1, std::min(threads, 4));
  options.service.threads_per_worker = std::max(1, threads / options.service.workers);
  Server server(model, options);
  server.start();
  std::printf("serving %s: http://%s:%d/ (websocket /stream), tcp stream on port %d\n", a.model.c_str(),
              a.address.c_str(), server.http_port(), server.stream_port());
  std::fflush(stdout);
  server.wait();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D Gaussian reconstruction and rendering"};
  app.require_subcommand(1);
  std::optional<int> threads;
  app.add_option("--threads", threads, "worker threads (overrides I4D_THREADS)")->check(CLI::Range(1, 4096));
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic calibrated bundle");
  c_synth->add_option("--spec", synth.spec, "scene spec JSON (default: built-in reference scene)");
  c_synth->add_option("--out", synth.out, "output bundle directory")->required();
  c_synth->add_option("--seed", synth.seed, "noise seed");

  InitArgs init;
  auto* c_init = app.add_subcommand("init", "masks, densify, prune and initialize Gaussians");
  c_init->add_option("--bundle", init.bundle, "bundle directory")->required();
  c_init->add_option("--mode", init.mode, "lite or full")->check(CLI::IsMember({"lite", "full"}));
  c_init->add_option("--out", init.out, "initial model checkpoint")->required();
  c_init->add_flag("--uniform-time", init.uniform_time, "give every Gaussian the one-frame time scale");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "optimize a model against a bundle");
  c_train->add_option("--bundle", tr.bundle, "bundle directory")->required();
  c_train->add_option("--init", tr.init, "initial model checkpoint")->required();
  c_train->add_option("--out", tr.out, "trained model checkpoint")->required();
  c_train->add_option("--iters", tr.iters, "iterations")->check(CLI::NonNegativeNumber);
  c_train->add_option("--seed", tr.seed, "frame sampling seed");
  c_train->add_option("--report", tr.report, "report JSON (default: <out>.report.json)");
  c_train->add_option("--progress", tr.progress, "progress JSONL file");
  c_train->add_option("--log-every", tr.log_every, "progress interval")->check(CLI::PositiveNumber);
  c_train->add_option("--dump", tr.dump, "diagnostics file on non-finite loss");
  c_train->add_flag("--train-temporal", tr.temporal, "also optimize temporal centers and scales");

  RenderArgs rd;
  auto* c_render = app.add_subcommand("render", "render one view to PNG");
  c_render->add_option("--model", rd.model, "model checkpoint")->required();
  c_render->add_option("--pose", rd.pose, "pose JSON: 4x4 camera-to-world, or a view request object")->required();
  c_render->add_option("--t", rd.t, "time in seconds");
  c_render->add_option("--width", rd.width, "image width");
  c_render->add_option("--height", rd.height, "image height");
  c_render->add_option("--fov-y", rd.fov_y, "vertical field of view in degrees");
  c_render->add_option("--out", rd.out, "output PNG")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "PSNR/SSIM over every training view");
  c_eval->add_option("--model", ev.model, "model checkpoint")->required();
  c_eval->add_option("--bundle", ev.bundle, "bundle directory")->required();
  c_eval->add_option("--spec", ev.spec, "synthetic scene spec; adds held-out interpolated-time metrics");
  c_eval->add_option("--out", ev.out, "report JSON (default: stdout)");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "serve frames over HTTP/WebSocket and TCP");
  c_serve->add_option("--model", sv.model, "model checkpoint")->required();
  c_serve->add_option("--port", sv.port, "HTTP/WebSocket port (0: any)")->check(CLI::Range(0, 65535));
  c_serve->add_option("--stream-port", sv.stream_port, "length-prefixed TCP port (default: port + 1)")
      ->check(CLI::Range(0, 65535));
  c_serve->add_option("--address", sv.address, "bind address");
  c_serve->add_option("--assets", sv.assets, "viewer static files directory");
  c_serve->add_option("--workers", sv.workers, "render workers")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
    const int n_threads = threads ? *threads : configured_threads();
    set_threads(n_threads);
    if (c_synth->parsed()) return run_synth(synth);
    if (c_init->parsed()) return run_init(init);
    if (c_train->parsed()) return run_train(tr);
    if (c_render->parsed()) return run_render(rd);
    if (c_eval->parsed()) return run_eval(ev);
    if (c_serve->parsed()) return run_serve(sv, n_threads);
    return 1;
  } catch (const InvalidInput& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const NonFiniteLoss& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
