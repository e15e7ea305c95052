#include "xflood/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "xflood/errors.hpp"

namespace xflood {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

void require_positive(std::size_t v, const std::string& field) { require(v >= 1, field, "must be >= 1"); }

void require_divides(std::size_t divisor, std::size_t value, const std::string& field, const std::string& what) {
  require(divisor != 0 && value % divisor == 0, field, what);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "vocab_size", "n_t", "d_t", "d_i", "d_se", "h", "grid", "image_size", "hcamam_pool", "hcamam_channels",
      "hcamam_groups", "hcamam_kernel", "encoder_plan", "decoder_plan", "transformer_depth", "transformer_heads",
      "d_fused", "dropout", "adamw", "epochs", "batch_size", "seed", "holdout_fraction", "use_mfim", "use_hcamam",
      "use_cctfrm", "use_hcgam", "use_feeca", "use_fmsa"};
  return keys;
}

void read_pair(const json& j, const char* key, std::size_t& first, std::size_t& second) {
  auto it = j.find(key);
  if (it == j.end()) return;
  std::vector<std::size_t> v;
  try {
    v = it->get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
  if (v.size() != 2) throw ConfigError(std::string(key) + ": expected [height, width]");
  first = v[0];
  second = v[1];
}

}  // namespace

std::size_t ModelConfig::bottleneck_h() const { return image_h >> encoder_plan.size(); }
std::size_t ModelConfig::bottleneck_w() const { return image_w >> encoder_plan.size(); }

std::size_t ModelConfig::cascade_channels() const {
  std::size_t c = 0;
  for (std::size_t v : decoder_plan) c += v;
  return c;
}

std::size_t ModelConfig::fusion_input_width() const {
  std::size_t maps = 0;
  if (use_feeca) maps += hcamam_channels;
  if (use_fmsa) maps += hcamam_channels;
  if (maps == 0) maps = hcamam_channels;
  return hcamam_h() * hcamam_w() * maps + d_t + d_i;
}

std::size_t ModelConfig::head_input_width() const {
  std::size_t w = 0;
  if (use_hcamam) w += d_fused;
  if (use_mfim) w += d_se;
  if (use_cctfrm) w += d_r();
  return w;
}

void ModelConfig::validate() const {
  require_positive(vocab_size, "vocab_size");
  require(n_t >= 1 && n_t <= 512, "n_t", "must lie in [1, 512]");
  require_positive(d_t, "d_t");
  require_positive(d_i, "d_i");
  require_positive(d_se, "d_se");
  require(h >= 2 && h % 2 == 0, "h", "must be even and >= 2");
  require_divides(2, d_se, "d_se", "must be divisible by 2 for the bidirectional recurrence");
  require_divides(2 * h, d_se, "d_se", "must be divisible by 2*h = " + std::to_string(2 * h));
  require(d_se >= 3, "d_se", "must be >= 3 to split across three kernel sizes");
  require_positive(grid_h, "grid");
  require_positive(grid_w, "grid");
  require_positive(image_h, "image_size");
  require_positive(image_w, "image_size");
  require_divides(grid_h, image_h, "grid", "image height must be divisible by grid height");
  require_divides(grid_w, image_w, "grid", "image width must be divisible by grid width");

  require_positive(hcamam_pool, "hcamam_pool");
  require_divides(hcamam_pool, image_h, "hcamam_pool", "must divide the image height");
  require_divides(hcamam_pool, image_w, "hcamam_pool", "must divide the image width");
  require_positive(hcamam_groups, "hcamam_groups");
  require_divides(hcamam_groups, 3, "hcamam_groups", "must divide the 3 image channels");
  require_divides(hcamam_groups, hcamam_channels, "hcamam_channels", "must be divisible by hcamam_groups");
  require_divides(4, hcamam_channels, "hcamam_channels", "must be divisible by 4 for the reduce/expand pair");
  require(hcamam_kernel % 2 == 1, "hcamam_kernel", "must be odd");

  require(!encoder_plan.empty(), "encoder_plan", "must not be empty");
  require(!decoder_plan.empty(), "decoder_plan", "must not be empty");
  for (std::size_t c : encoder_plan) require_positive(c, "encoder_plan");
  for (std::size_t c : decoder_plan) require_positive(c, "decoder_plan");
  require(encoder_plan.size() < 32, "encoder_plan", "too many stages");
  const std::size_t factor = std::size_t{1} << encoder_plan.size();
  require_divides(factor, image_h, "encoder_plan",
                  "image height must be divisible by 2^" + std::to_string(encoder_plan.size()));
  require_divides(factor, image_w, "encoder_plan",
                  "image width must be divisible by 2^" + std::to_string(encoder_plan.size()));
  require_positive(transformer_depth, "transformer_depth");
  require_positive(transformer_heads, "transformer_heads");
  require_divides(transformer_heads, encoder_plan.back(), "transformer_heads",
                  "must divide the last encoder channel count " + std::to_string(encoder_plan.back()));

  require_positive(d_fused, "d_fused");
  require(dropout >= 0.0 && dropout < 1.0, "dropout", "must lie in [0, 1)");
  try {
    adamw.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("adamw.") + e.what());
  }
  require_positive(epochs, "epochs");
  require_positive(batch_size, "batch_size");
  require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, "holdout_fraction", "must lie in [0, 1)");
  require(use_mfim || use_hcamam || use_cctfrm, "use_mfim",
          "at least one of use_mfim, use_hcamam, use_cctfrm must be true");
}

ModelConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const std::string& k : known_keys()) known = known || k == key;
    if (!known) throw ConfigError(key + ": unknown config field");
  }

  ModelConfig c;
  read(j, "vocab_size", c.vocab_size);
  read(j, "n_t", c.n_t);
  read(j, "d_t", c.d_t);
  read(j, "d_i", c.d_i);
  read(j, "d_se", c.d_se);
  read(j, "h", c.h);
  read_pair(j, "grid", c.grid_h, c.grid_w);
  read_pair(j, "image_size", c.image_h, c.image_w);
  read(j, "hcamam_pool", c.hcamam_pool);
  read(j, "hcamam_channels", c.hcamam_channels);
  read(j, "hcamam_groups", c.hcamam_groups);
  read(j, "hcamam_kernel", c.hcamam_kernel);
  read(j, "encoder_plan", c.encoder_plan);
  read(j, "decoder_plan", c.decoder_plan);
  read(j, "transformer_depth", c.transformer_depth);
  read(j, "transformer_heads", c.transformer_heads);
  read(j, "d_fused", c.d_fused);
  read(j, "dropout", c.dropout);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  read(j, "holdout_fraction", c.holdout_fraction);
  read(j, "use_mfim", c.use_mfim);
  read(j, "use_hcamam", c.use_hcamam);
  read(j, "use_cctfrm", c.use_cctfrm);
  read(j, "use_hcgam", c.use_hcgam);
  read(j, "use_feeca", c.use_feeca);
  read(j, "use_fmsa", c.use_fmsa);
  if (auto it = j.find("adamw"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("adamw: must be an object");
    for (const auto& [key, _] : it->items()) {
      if (key != "learning_rate" && key != "beta1" && key != "beta2" && key != "epsilon" && key != "weight_decay") {
        throw ConfigError("adamw." + key + ": unknown config field");
      }
    }
    read(*it, "learning_rate", c.adamw.learning_rate);
    read(*it, "beta1", c.adamw.beta1);
    read(*it, "beta2", c.adamw.beta2);
    read(*it, "epsilon", c.adamw.epsilon);
    read(*it, "weight_decay", c.adamw.weight_decay);
  }
  c.validate();
  return c;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ModelConfig& c) {
  json j = {
      {"vocab_size", c.vocab_size},
      {"n_t", c.n_t},
      {"d_t", c.d_t},
      {"d_i", c.d_i},
      {"d_se", c.d_se},
      {"h", c.h},
      {"grid", {c.grid_h, c.grid_w}},
      {"image_size", {c.image_h, c.image_w}},
      {"hcamam_pool", c.hcamam_pool},
      {"hcamam_channels", c.hcamam_channels},
      {"hcamam_groups", c.hcamam_groups},
      {"hcamam_kernel", c.hcamam_kernel},
      {"encoder_plan", c.encoder_plan},
      {"decoder_plan", c.decoder_plan},
      {"transformer_depth", c.transformer_depth},
      {"transformer_heads", c.transformer_heads},
      {"d_fused", c.d_fused},
      {"dropout", c.dropout},
      {"adamw",
       {{"learning_rate", c.adamw.learning_rate},
        {"beta1", c.adamw.beta1},
        {"beta2", c.adamw.beta2},
        {"epsilon", c.adamw.epsilon},
        {"weight_decay", c.adamw.weight_decay}}},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"holdout_fraction", c.holdout_fraction},
      {"use_mfim", c.use_mfim},
      {"use_hcamam", c.use_hcamam},
      {"use_cctfrm", c.use_cctfrm},
      {"use_hcgam", c.use_hcgam},
      {"use_feeca", c.use_feeca},
      {"use_fmsa", c.use_fmsa},
  };
  return j.dump(2);
}

}  // namespace xflood
