#include "xflood/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "xflood/binary_io.hpp"
#include "xflood/errors.hpp"

namespace xflood {

Tensor grad_cam_map(const Tensor& activation, const Tensor& grad) {
  if (activation.rank() != 3 || grad.shape() != activation.shape()) {
    throw DimensionError("grad_cam_map expects matching H x W x C tensors, got " + activation.shape().str() + " and " +
                         grad.shape().str());
  }
  const std::size_t H = activation.shape()[0];
  const std::size_t W = activation.shape()[1];
  const std::size_t C = activation.shape()[2];
  std::vector<double> weights(C, 0.0);
  for (std::size_t p = 0; p < H * W; ++p) {
    for (std::size_t c = 0; c < C; ++c) weights[c] += grad[p * C + c];
  }
  for (double& w : weights) w /= static_cast<double>(H * W);
  Tensor cam(Shape{H, W});
  double peak = 0.0;
  for (std::size_t p = 0; p < H * W; ++p) {
    double v = 0.0;
    for (std::size_t c = 0; c < C; ++c) v += weights[c] * activation[p * C + c];
    cam[p] = std::max(0.0, v);
    peak = std::max(peak, cam[p]);
  }
  if (peak > 0.0) {
    for (double& v : cam.data()) v /= peak;
  }
  return cam;
}

GradCamResult grad_cam(XFloodNet& model, const SyntheticSample& sample, std::size_t layer) {
  const ModelConfig& c = model.config();
  const std::size_t layers = c.use_cctfrm ? c.encoder_plan.size() : 0;
  if (layer >= layers) {
    std::string valid;
    for (std::size_t i = 0; i < layers; ++i) valid += (i ? ", " : "") + std::to_string(i);
    throw ConfigError("layer: invalid encoder block id " + std::to_string(layer) + "; valid ids: [" + valid + "]");
  }
  const std::size_t index = 0;
  const Batch batch =
      model.make_batch(std::span<const SyntheticSample>(&sample, 1), std::span<const std::size_t>(&index, 1));
  Graph g;
  Context ctx{g, model.params(), Mode::kEval};
  const ModelOutputs out = model.forward(ctx, batch);
  g.backward(out.logits, Tensor(out.logits.shape(), 1.0), nullptr);

  Var tap = out.cctfrm.encoder_activations.at(layer);
  const Shape& s = tap.shape();
  const Shape hwc{s[1], s[2], s[3]};
  const Tensor& grad = g.grad(tap);
  GradCamResult result;
  result.heatmap = grad_cam_map(tap.value().reshaped(hwc), grad.empty() ? Tensor(hwc) : grad.reshaped(hwc));
  result.layer = layer;
  result.logit = out.logits.value()[0];
  result.probability = out.probs.value()[0];
  return result;
}

void write_pgm(const Tensor& heatmap, const std::string& path) {
  if (heatmap.rank() != 2) throw DimensionError("write_pgm expects H x W, got " + heatmap.shape().str());
  const std::size_t H = heatmap.shape()[0];
  const std::size_t W = heatmap.shape()[1];
  std::string out = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  for (double v : heatmap.data()) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  binio::write_file(path, out);
}

void write_heatmap_json(const GradCamResult& result, const std::string& path) {
  nlohmann::json j = {{"height", result.heatmap.shape()[0]},
                      {"width", result.heatmap.shape()[1]},
                      {"layer", result.layer},
                      {"logit", result.logit},
                      {"probability", result.probability},
                      {"values", std::vector<double>(result.heatmap.data().begin(), result.heatmap.data().end())}};
  binio::write_file(path, j.dump(2) + "\n");
}

}  // namespace xflood
