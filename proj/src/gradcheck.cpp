#include "alacpd/gradcheck.hpp"

#include <algorithm>
#include <random>

namespace alacpd {

bool GradcheckReport::passed() const {
  return !cases.empty() && std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; });
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& c : cases) w = std::max(w, c.max_relative_error);
  return w;
}

GradcheckReport run_gradcheck(std::uint64_t seed, double tolerance, double epsilon) {
  GradcheckReport report;
  report.tolerance = tolerance;
  report.epsilon = epsilon;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  for (std::size_t hidden : {2u, 4u})
    for (std::size_t window : {3u, 4u})
      for (std::size_t dims : {1u, 2u})
        for (std::size_t skip : {1u, 2u}) {
          const TAEnetConfig cfg{.window = window, .dims = dims, .hidden = hidden, .skip = skip, .horizon = 1};
          TAEnet net(cfg, rng());
          // Move alpha and the gates off their initial values so every
          // branch of the blend carries gradient.
          net.encoder.alpha_raw.value(0, 0) = u(rng);
          net.decoder.alpha_raw.value(0, 0) = u(rng);
          net.gate_ae.value(0, 0) = 1.0 + 0.5 * u(rng);
          net.gate_ar.value(0, 0) = 1.0 + 0.5 * u(rng);

          nd::Matrix ctx(cfg.context_length(), dims);
          for (double& v : ctx.data()) v = u(rng);

          net.zero_grad();
          net.accumulate_gradients(ctx);
          auto params = net.parameters();
          const double err = nd::finite_diff_check([&] { return net.loss(ctx); }, params, epsilon);
          report.cases.push_back({cfg, err, err < tolerance});
        }
  return report;
}

nlohmann::json to_json(const GradcheckReport& report) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : report.cases) {
    cases.push_back({{"U", c.config.hidden},
                     {"w", c.config.window},
                     {"D", c.config.dims},
                     {"S", c.config.skip},
                     {"h", c.config.horizon},
                     {"max_relative_error", c.max_relative_error},
                     {"passed", c.passed}});
  }
  return {{"tolerance", report.tolerance},
          {"epsilon", report.epsilon},
          {"worst", report.worst()},
          {"passed", report.passed()},
          {"cases", cases}};
}

}  // namespace alacpd
