#include "xflood/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "xflood/binary_io.hpp"
#include "xflood/errors.hpp"
#include "xflood/rng.hpp"

namespace xflood {

TokenBands TokenBands::of(std::size_t vocab) {
  const int q = static_cast<int>(vocab / 4);
  return {0, q, q, 2 * q, 2 * q, static_cast<int>(vocab)};
}

namespace {

constexpr double kBackground = 0.3;
constexpr double kBackgroundJitter = 0.02;
constexpr double kBlobAmplitude = 0.5;
constexpr double kTextureAmplitude = 0.15;
const double kChannelTint[3] = {0.6, 0.8, 1.0};

int draw(Rng& rng, int begin, int end) {
  return begin + static_cast<int>(rng.below(static_cast<std::uint64_t>(end - begin)));
}

SyntheticSample make_sample(int label, double difficulty, const DataShape& shape, Rng& rng) {
  SyntheticSample s;
  s.label = label;
  const TokenBands bands = TokenBands::of(shape.vocab_size);
  const double p_neutral = 0.6 * difficulty;
  const double p_opposite = 0.25 * difficulty;
  for (std::size_t j = 0; j < shape.n_t; ++j) {
    const double u = rng.uniform();
    const bool own_positive = label == 1;
    int id;
    if (u < p_neutral) {
      id = draw(rng, bands.neutral_begin, bands.neutral_end);
    } else if (u < p_neutral + p_opposite) {
      id = own_positive ? draw(rng, bands.negative_begin, bands.negative_end)
                        : draw(rng, bands.positive_begin, bands.positive_end);
    } else {
      id = own_positive ? draw(rng, bands.positive_begin, bands.positive_end)
                        : draw(rng, bands.negative_begin, bands.negative_end);
    }
    s.tokens.push_back(id);
  }

  const std::size_t H = shape.image_h;
  const std::size_t W = shape.image_w;
  s.image = Tensor(Shape{H, W, 3});
  const double offset = 0.05 * difficulty * rng.normal();
  const double noise = 0.3 * difficulty;
  const double cy = rng.uniform(0.25, 0.75) * static_cast<double>(H);
  const double cx = rng.uniform(0.25, 0.75) * static_cast<double>(W);
  const double sigma = static_cast<double>(std::min(H, W)) / 6.0;
  const double amplitude = kBlobAmplitude * (1.0 - 0.6 * difficulty);
  const std::size_t phase = rng.below(2);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double base = kBackground + offset + rng.uniform(-kBackgroundJitter, kBackgroundJitter);
      double signal = 0.0;
      if (label == 1) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        signal = amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      } else {
        signal = ((x + y + phase) % 2 == 0 ? 1.0 : -1.0) * kTextureAmplitude;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double tint = label == 1 ? kChannelTint[c] : 1.0;
        const double jitter = noise > 0.0 ? noise * rng.normal() : 0.0;
        s.image[(y * W + x) * 3 + c] = base + tint * signal + jitter;
      }
    }
  }
  return s;
}

}  // namespace

std::vector<SyntheticSample> generate_synthetic_dataset(std::size_t n, std::uint64_t seed, double difficulty,
                                                        const DataShape& shape) {
  if (n < 2) throw InputError("synthetic dataset needs n >= 2, got " + std::to_string(n));
  if (!(difficulty >= 0.0 && difficulty <= 1.0)) {
    throw InputError("difficulty must lie in [0, 1], got " + std::to_string(difficulty));
  }
  if (shape.vocab_size < 4) throw InputError("vocab_size must be >= 4 for the token bands");
  if (shape.n_t == 0 || shape.image_h < 2 || shape.image_w < 2) throw InputError("degenerate data shape");

  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>((n + 1) / 2), 1);
  Rng order(Rng::derive(seed, "synthetic.order"));
  for (std::size_t i = n; i-- > 1;) std::swap(labels[i], labels[order.below(i + 1)]);

  Rng rng(Rng::derive(seed, "synthetic.samples"));
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (int y : labels) out.push_back(make_sample(y, difficulty, shape, rng));
  return out;
}

double mean_brightness(const Tensor& image) {
  double s = 0.0;
  for (double v : image.data()) s += v;
  return s / static_cast<double>(image.size());
}

namespace {
constexpr char kDatasetMagic[4] = {'X', 'F', 'D', 'S'};
constexpr std::uint8_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const std::vector<SyntheticSample>& data, const std::string& path) {
  if (data.empty()) throw InputError("cannot save an empty dataset");
  const Shape& s = data.front().image.shape();
  const std::size_t n_t = data.front().tokens.size();
  std::string out(kDatasetMagic, 4);
  binio::put_u8(out, kDatasetVersion);
  binio::put_le<std::uint64_t>(out, data.size());
  binio::put_le<std::uint64_t>(out, s[0]);
  binio::put_le<std::uint64_t>(out, s[1]);
  binio::put_le<std::uint64_t>(out, n_t);
  for (const SyntheticSample& x : data) {
    if (x.image.shape() != s || x.tokens.size() != n_t) throw InputError("dataset samples differ in shape");
    binio::put_u8(out, static_cast<std::uint8_t>(x.label));
    for (int t : x.tokens) binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t));
    for (double v : x.image.data()) binio::put_f64(out, v);
  }
  binio::write_file(path, out);
}

std::vector<SyntheticSample> load_dataset(const std::string& path) {
  const std::string bytes = binio::read_file(path);
  binio::Reader r(bytes);
  if (r.text(4, "magic") != std::string(kDatasetMagic, 4)) throw ParseError("bad dataset magic", 0);
  const std::size_t version_at = r.offset();
  if (r.u8("version") != kDatasetVersion) throw ParseError("unsupported dataset version", version_at);
  const auto n = r.le<std::uint64_t>("sample count");
  const auto h = r.le<std::uint64_t>("image height");
  const auto w = r.le<std::uint64_t>("image width");
  const auto n_t = r.le<std::uint64_t>("token count");
  if (h == 0 || w == 0 || n_t == 0) throw ParseError("degenerate dataset shape", r.offset());
  std::vector<SyntheticSample> data;
  for (std::uint64_t i = 0; i < n; ++i) {
    SyntheticSample s;
    const std::size_t label_at = r.offset();
    s.label = r.u8("label");
    if (s.label > 1) throw ParseError("label outside {0, 1}", label_at);
    for (std::uint64_t j = 0; j < n_t; ++j) s.tokens.push_back(static_cast<int>(r.le<std::uint32_t>("token")));
    r.expect(h * w * 3 * 8, "image");
    s.image = Tensor(Shape{h, w, 3});
    for (double& v : s.image.data()) v = r.f64("pixel");
    data.push_back(std::move(s));
  }
  if (!r.done()) throw ParseError("trailing bytes after dataset", r.offset());
  return data;
}

}  // namespace xflood
