#include "xflood/train.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "xflood/adamw.hpp"
#include "xflood/errors.hpp"
#include "xflood/rng.hpp"
#include "xflood/uffm.hpp"

namespace xflood {

Split split_dataset(std::span<const SyntheticSample> data, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout_fraction: must lie in [0, 1)");
  }
  Rng rng(Rng::derive(seed, "split"));
  Split s;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].label == cls) members.push_back(i);
    }
    for (std::size_t i = members.size(); i-- > 1;) std::swap(members[i], members[rng.below(i + 1)]);
    const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(members.size())));
    s.holdout.insert(s.holdout.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_hold));
    s.train.insert(s.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_hold), members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  if (s.train.empty()) throw InputError("split leaves no training samples");
  return s;
}

Evaluation evaluate(XFloodNet& model, std::span<const SyntheticSample> data, std::span<const std::size_t> indices) {
  Evaluation ev;
  if (indices.empty()) return ev;
  const std::size_t bs = model.config().batch_size;
  for (std::size_t start = 0; start < indices.size(); start += bs) {
    const std::size_t len = std::min(bs, indices.size() - start);
    const Batch batch = model.make_batch(data, indices.subspan(start, len));
    Graph g;
    Context ctx{g, model.params(), Mode::kEval};
    const ModelOutputs out = model.forward(ctx, batch);
    for (double p : out.probs.value().data()) ev.probs.push_back(p);
    ev.labels.insert(ev.labels.end(), batch.labels.begin(), batch.labels.end());
  }
  ev.preds = predict(ev.probs);
  ev.metrics = compute_metrics(ev.preds, ev.probs, ev.labels);
  return ev;
}

double train_step(XFloodNet& model, std::span<const SyntheticSample> data, std::span<const std::size_t> indices,
                  Rng& dropout_rng, bool update_bn_stats) {
  const Batch batch = model.make_batch(data, indices);
  Graph g;
  Context ctx{g, model.params(), Mode::kTrain, &dropout_rng, update_bn_stats};
  const ModelOutputs out = model.forward(ctx, batch);
  Var loss = bce_loss(out.probs, batch.labels);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) return value;
  model.params().zero_grad();
  g.backward(loss, &model.params());
  adamw_step(model.params(), model.config().adamw);
  return value;
}

std::vector<EpochRecord> train(XFloodNet& model, std::span<const SyntheticSample> data, const Split& split,
                               const TrainOptions& options) {
  if (data.empty() || split.train.empty()) throw InputError("train: dataset is empty");
  const ModelConfig& c = model.config();
  const std::size_t epochs = options.epochs != 0 ? options.epochs : c.epochs;
  Rng shuffle_rng(Rng::derive(c.seed, "train.shuffle"));
  Rng dropout_rng(Rng::derive(c.seed, "train.dropout"));
  std::vector<std::size_t> order = split.train;
  std::vector<EpochRecord> trace;

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += c.batch_size, ++batch_index) {
      const std::size_t len = std::min(c.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      const double loss = train_step(model, data, idx, dropout_rng, options.update_bn_stats);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                           ", batch index " + std::to_string(batch_index));
      }
      loss_sum += loss * static_cast<double>(len);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (options.evaluate_train_split) rec.train_metrics = evaluate(model, data, split.train).metrics;
    if (!split.holdout.empty()) rec.validation = evaluate(model, data, split.holdout).metrics;
    trace.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  return trace;
}

namespace {

nlohmann::json metrics_json(const MetricsReport& r) {
  return {{"accuracy", r.accuracy},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"mcc", r.mcc},
          {"cohen_kappa", r.cohen_kappa},
          {"log_loss", r.log_loss},
          {"confusion",
           {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}}};
}

}  // namespace

std::string to_json_line(const MetricsReport& report) { return metrics_json(report).dump(); }

std::string to_json_line(const EpochRecord& record) {
  nlohmann::json j = {{"epoch", record.epoch},
                      {"train_loss", record.train_loss},
                      {"train", metrics_json(record.train_metrics)},
                      {"validation", metrics_json(record.validation)}};
  return j.dump();
}

}  // namespace xflood
