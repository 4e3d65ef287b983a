#pragma once

// Central finite differences of L = sum(w * render(model)) against the
// analytic reverse pass, for every unconstrained parameter.

#include "i4d/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace i4d::testing {

struct GradCheckEntry {
  std::string name;
  int gaussian;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckResult {
  std::vector<GradCheckEntry> entries;
  double max_rel_error{0};
  int checked{0};
};

inline double weighted_sum(const RgbImage<double>& img, const RgbImage<double>& w) {
  return (img.pixels * w.pixels).sum();
}

/// Elementwise relative error |a - n| / max(|a|, |n|). Pairs where both
/// values are below `floor` are compared absolutely against it instead.
inline GradCheckResult gradient_check(const GaussianModel<double>& model, const Camera<double>& cam, double t,
                                      const RgbImage<double>& weights, const RasterSettings& settings,
                                      double h = 1e-4, double floor = 1e-9) {
  const auto analytic = render_backward(model, cam, t, weights, settings, true);
  GradCheckResult out;

  auto probe = [&](const std::string& name, int i, double grad, const std::function<double&(GaussianModel<double>&)>& ref) {
    GaussianModel<double> m = model;
    const double x0 = ref(m);
    ref(m) = x0 + h;
    const double lp = weighted_sum(render(m, cam, t, settings).rgb, weights);
    ref(m) = x0 - h;
    const double lm = weighted_sum(render(m, cam, t, settings).rgb, weights);
    const double numeric = (lp - lm) / (2 * h);
    const double scale = std::max(std::abs(grad), std::abs(numeric));
    const double err = scale < floor ? std::abs(grad - numeric) / floor : std::abs(grad - numeric) / scale;
    out.entries.push_back({name, i, grad, numeric, err});
    out.max_rel_error = std::max(out.max_rel_error, err);
    ++out.checked;
  };

  for (int i = 0; i < model.size(); ++i) {
    const char* axes[] = {"mu_x", "mu_y", "mu_z", "mu_t"};
    for (int k = 0; k < 4; ++k) {
      probe(axes[k], i, analytic.mean(i, k), [i, k](GaussianModel<double>& m) -> double& { return m.mean(i, k); });
    }
    probe("log_scale", i, analytic.log_scale(i), [i](GaussianModel<double>& m) -> double& { return m.log_scale(i); });
    probe("log_scale_t", i, analytic.log_scale_t(i),
          [i](GaussianModel<double>& m) -> double& { return m.log_scale_t(i); });
    probe("opacity_logit", i, analytic.opacity_logit(i),
          [i](GaussianModel<double>& m) -> double& { return m.opacity_logit(i); });
    const char* channels[] = {"r", "g", "b"};
    for (int c = 0; c < 3; ++c) {
      probe(channels[c], i, analytic.rgb(i, c), [i, c](GaussianModel<double>& m) -> double& { return m.rgb(i, c); });
    }
  }
  return out;
}

}  // namespace i4d::testing
