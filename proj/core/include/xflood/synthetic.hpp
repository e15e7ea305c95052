#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "xflood/config.hpp"
#include "xflood/tensor.hpp"

namespace xflood {

struct SyntheticSample {
  std::vector<int> tokens;
  Tensor image;  ///< H x W x 3, values around [0, 1]
  int label = 0;
};

struct DataShape {
  std::size_t image_h = 64;
  std::size_t image_w = 64;
  std::size_t n_t = 8;
  std::size_t vocab_size = 64;

  static DataShape from(const ModelConfig& c) { return {c.image_h, c.image_w, c.n_t, c.vocab_size}; }
};

/// Token bands: ids in [0, v/4) mark class 1, [v/4, v/2) class 0, the rest are neutral.
struct TokenBands {
  int positive_begin, positive_end, negative_begin, negative_end, neutral_begin, neutral_end;
  static TokenBands of(std::size_t vocab);
};

/// Class 1: bright smooth blob and class-1 tokens. Class 0: zero-mean
/// high-frequency texture and class-0 tokens. `difficulty` in [0, 1] adds pixel
/// noise and per-image brightness jitter, weakens the blob, and replaces tokens
/// with neutral or opposite-class ids. Labels are balanced (ceil/floor of n/2)
/// and shuffled. Throws InputError for n < 2 or difficulty outside [0, 1].
std::vector<SyntheticSample> generate_synthetic_dataset(std::size_t n, std::uint64_t seed, double difficulty,
                                                        const DataShape& shape = {});

double mean_brightness(const Tensor& image);

/// Binary dataset file ("XFDS"): shape header then per-sample label, tokens and pixels.
void save_dataset(const std::vector<SyntheticSample>& data, const std::string& path);
std::vector<SyntheticSample> load_dataset(const std::string& path);

}  // namespace xflood
