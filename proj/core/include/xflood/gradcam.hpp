#pragma once

#include <cstddef>
#include <string>

#include "xflood/model.hpp"

namespace xflood {

/// Channel weights are the spatial mean of `grad`; the map is ReLU of the
/// weighted channel sum divided by its maximum (all zeros when the maximum is 0).
/// activation, grad: H x W x C. Returns H x W.
Tensor grad_cam_map(const Tensor& activation, const Tensor& grad);

struct GradCamResult {
  Tensor heatmap;  ///< H x W in [0, 1]
  std::size_t layer = 0;
  double logit = 0.0;
  double probability = 0.0;
};

/// Grad-CAM of the pre-sigmoid logit with respect to encoder block `layer`'s
/// gated activation, in eval mode. Throws ConfigError listing the valid ids.
GradCamResult grad_cam(XFloodNet& model, const SyntheticSample& sample, std::size_t layer);

/// Binary PGM (P5), 8-bit, values scaled from [0, 1].
void write_pgm(const Tensor& heatmap, const std::string& path);

/// JSON sidecar: extents, layer, logit, probability and the raw row-major values.
void write_heatmap_json(const GradCamResult& result, const std::string& path);

}  // namespace xflood
