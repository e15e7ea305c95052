#include "xflood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xflood/errors.hpp"
#include "xflood/ops.hpp"

namespace xflood {

namespace {

void check_labels(std::span<const int> labels, const char* what) {
  for (int y : labels) {
    if (y != 0 && y != 1) throw InputError(std::string(what) + " must be 0 or 1, got " + std::to_string(y));
  }
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

Confusion confusion_matrix(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw InputError("confusion_matrix: length mismatch");
  check_labels(preds, "prediction");
  check_labels(labels, "label");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && labels[i] == 1) ++c.tp;
    if (preds[i] == 1 && labels[i] == 0) ++c.fp;
    if (preds[i] == 0 && labels[i] == 1) ++c.fn;
    if (preds[i] == 0 && labels[i] == 0) ++c.tn;
  }
  return c;
}

MetricsReport metrics_from_confusion(const Confusion& c) {
  MetricsReport r;
  r.confusion = c;
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  const double tn = static_cast<double>(c.tn);
  const double n = tp + fp + fn + tn;
  r.accuracy = ratio(tp + tn, n);
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);

  const double marginals = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  r.mcc = marginals == 0.0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(marginals);

  if (n > 0.0) {
    const double p_o = (tp + tn) / n;
    const double p_e = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n);
    if (p_e == 1.0) {
      r.cohen_kappa = p_o == 1.0 ? 1.0 : 0.0;
    } else {
      r.cohen_kappa = (p_o - p_e) / (1.0 - p_e);
    }
  }
  return r;
}

double log_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size() || probs.empty()) throw InputError("log_loss: need equal, non-zero lengths");
  check_labels(labels, "label");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbabilityClip, 1.0 - kProbabilityClip);
    total -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

MetricsReport compute_metrics(std::span<const int> preds, std::span<const double> probs,
                              std::span<const int> labels) {
  if (labels.empty()) throw InputError("compute_metrics: no samples");
  if (preds.size() != labels.size() || probs.size() != labels.size()) {
    throw InputError("compute_metrics: predictions, probabilities and labels differ in length");
  }
  MetricsReport r = metrics_from_confusion(confusion_matrix(preds, labels));
  r.log_loss = log_loss(probs, labels);
  return r;
}

double mcnemar_exact_p(std::size_t b, std::size_t c) {
  const std::size_t n = b + c;
  if (n == 0) return 1.0;
  const std::size_t k_max = std::min(b, c);
  const double nd = static_cast<double>(n);
  double tail = 0.0;
  for (std::size_t k = 0; k <= k_max; ++k) {
    const double kd = static_cast<double>(k);
    const double log_term =
        std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0) - nd * std::log(2.0);
    tail += std::exp(log_term);
  }
  return std::min(1.0, 2.0 * tail);
}

McNemarResult mcnemar_test(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> labels) {
  if (preds_a.size() != labels.size() || preds_b.size() != labels.size()) {
    throw InputError("mcnemar_test: predictions and labels differ in length");
  }
  check_labels(preds_a, "prediction");
  check_labels(preds_b, "prediction");
  check_labels(labels, "label");
  McNemarResult r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool a_ok = preds_a[i] == labels[i];
    const bool b_ok = preds_b[i] == labels[i];
    if (a_ok && !b_ok) ++r.b;
    if (!a_ok && b_ok) ++r.c;
  }
  const std::size_t n = r.b + r.c;
  if (n > 0) {
    const double diff = std::abs(static_cast<double>(r.b) - static_cast<double>(r.c)) - 1.0;
    r.statistic = std::max(0.0, diff) * std::max(0.0, diff) / static_cast<double>(n);
  }
  r.p_value = mcnemar_exact_p(r.b, r.c);
  return r;
}

}  // namespace xflood
