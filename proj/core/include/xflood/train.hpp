#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xflood/metrics.hpp"
#include "xflood/model.hpp"

namespace xflood {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

/// Deterministic stratified split: round(fraction * count) of each class goes to
/// the holdout set. Both lists are sorted.
Split split_dataset(std::span<const SyntheticSample> data, double holdout_fraction, std::uint64_t seed);

struct Evaluation {
  std::vector<double> probs;
  std::vector<int> preds;
  std::vector<int> labels;
  MetricsReport metrics;
};

/// Eval-mode forward over `indices` in batches of `batch_size`.
Evaluation evaluate(XFloodNet& model, std::span<const SyntheticSample> data, std::span<const std::size_t> indices);

struct EpochRecord {
  std::size_t epoch = 0;           ///< 1-based
  double train_loss = 0.0;         ///< mean train-mode mini-batch loss
  MetricsReport train_metrics;     ///< eval mode over the training split (when enabled)
  MetricsReport validation;        ///< eval mode over the holdout split (empty holdout: zeros)
};

struct TrainOptions {
  /// Overrides config.epochs when nonzero.
  std::size_t epochs = 0;
  bool evaluate_train_split = true;
  /// Freeze batch-norm running statistics during training.
  bool update_bn_stats = true;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch AdamW training on `split.train`, shuffled every epoch from the
/// config seed. Throws NumericError naming the epoch and batch on a non-finite loss.
std::vector<EpochRecord> train(XFloodNet& model, std::span<const SyntheticSample> data, const Split& split,
                               const TrainOptions& options = {});

/// One optimizer step on the given samples; returns the train-mode batch loss.
double train_step(XFloodNet& model, std::span<const SyntheticSample> data, std::span<const std::size_t> indices,
                  Rng& dropout_rng, bool update_bn_stats = true);

/// JSON object (single line) for an epoch record / metrics report.
std::string to_json_line(const EpochRecord& record);
std::string to_json_line(const MetricsReport& report);

}  // namespace xflood
