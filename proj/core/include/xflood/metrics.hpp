#pragma once

#include <cstddef>
#include <span>

namespace xflood {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Binary classification scores. Conventions: precision, recall and F1 are 0
/// when their denominator is 0; MCC is 0 when any marginal is 0; kappa is 1
/// when observed and expected agreement are both 1.
struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  double cohen_kappa = 0.0;
  double log_loss = 0.0;
  Confusion confusion;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

Confusion confusion_matrix(std::span<const int> preds, std::span<const int> labels);

/// Every field except log_loss (left at 0).
MetricsReport metrics_from_confusion(const Confusion& c);

/// Mean binary cross-entropy with probabilities clipped to [1e-7, 1 - 1e-7].
double log_loss(std::span<const double> probs, std::span<const int> labels);

/// Throws InputError on length mismatch, empty input or labels outside {0, 1}.
MetricsReport compute_metrics(std::span<const int> preds, std::span<const double> probs, std::span<const int> labels);

struct McNemarResult {
  std::size_t b = 0;  ///< A right, B wrong
  std::size_t c = 0;  ///< A wrong, B right
  /// Continuity-corrected chi-square (|b - c| - 1)^2 / (b + c), reported for
  /// reference; 0 when b + c == 0.
  double statistic = 0.0;
  /// Exact two-sided binomial p-value.
  double p_value = 1.0;
};

McNemarResult mcnemar_test(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> labels);

/// min(1, 2 * P[X <= min(b, c)]) for X ~ Binomial(b + c, 1/2); 1 when b + c == 0.
double mcnemar_exact_p(std::size_t b, std::size_t c);

}  // namespace xflood
