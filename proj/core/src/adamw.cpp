#include "xflood/adamw.hpp"

#include <cmath>

#include "xflood/errors.hpp"

namespace xflood {

void AdamWConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

void adamw_step(ParamStore& params, const AdamWConfig& config) {
  for (const std::string& name : params.trainable_names()) {
    ParamEntry& e = params.entry(name);
    e.step += 1;
    const double t = static_cast<double>(e.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    const double decay = 1.0 - config.learning_rate * config.weight_decay;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      double& m = e.first_moment[i];
      double& v = e.second_moment[i];
      m = config.beta1 * m + (1.0 - config.beta1) * g;
      v = config.beta2 * v + (1.0 - config.beta2) * g * g;
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      e.value[i] = e.value[i] * decay - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
  params.zero_grad();
}

}  // namespace xflood
