#pragma once

#include "xflood/params.hpp"

namespace xflood {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// One optimizer step over every trainable entry, then zeroes all gradients.
/// Weight decay is decoupled: value *= (1 - lr * wd) before the Adam update.
void adamw_step(ParamStore& params, const AdamWConfig& config);

}  // namespace xflood
