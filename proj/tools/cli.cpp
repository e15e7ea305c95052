#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>

#include "xflood/binary_io.hpp"
#include "xflood/checkpoint.hpp"
#include "xflood/config.hpp"
#include "xflood/errors.hpp"
#include "xflood/gradcam.hpp"
#include "xflood/gradcheck.hpp"
#include "xflood/metrics.hpp"
#include "xflood/synthetic.hpp"
#include "xflood/train.hpp"
#include "xflood/uffm.hpp"

namespace xflood::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct DataSource {
  std::string path;
  std::size_t n = 200;
  double difficulty = 0.0;
};

void add_common(CLI::App* cmd, Common& c, bool config_required, bool out_required) {
  auto* cfg = cmd->add_option("--config", c.config, "JSON model configuration")->check(CLI::ExistingFile);
  if (config_required) cfg->required();
  cmd->add_option("--seed", c.seed, "Seed overriding the config seed");
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
}

void add_data(CLI::App* cmd, DataSource& d) {
  cmd->add_option("--data", d.path, "Dataset file written by gen-data")->check(CLI::ExistingFile);
  cmd->add_option("--n", d.n, "Synthetic sample count when --data is absent")->capture_default_str();
  cmd->add_option("--difficulty", d.difficulty, "Synthetic difficulty in [0, 1] when --data is absent")
      ->capture_default_str();
}

ModelConfig resolve_config(const Common& c) {
  ModelConfig config = c.config.empty() ? ModelConfig{} : load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  config.validate();
  return config;
}

std::vector<SyntheticSample> resolve_data(const DataSource& d, const ModelConfig& config) {
  if (!d.path.empty()) return load_dataset(d.path);
  return generate_synthetic_dataset(d.n, config.seed, d.difficulty, DataShape::from(config));
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& path, const std::string& text) { binio::write_file(path.string(), text); }

json predictions_json(const Evaluation& ev, std::span<const std::size_t> indices) {
  return {{"indices", std::vector<std::size_t>(indices.begin(), indices.end())},
          {"probs", ev.probs},
          {"preds", ev.preds},
          {"labels", ev.labels}};
}

int cmd_gen_data(const Common& c, const DataSource& d, std::ostream& out) {
  const ModelConfig config = resolve_config(c);
  const auto data = generate_synthetic_dataset(d.n, config.seed, d.difficulty, DataShape::from(config));
  const fs::path dir = prepare_out(c.out);
  const fs::path file = dir / "dataset.xfds";
  save_dataset(data, file.string());
  std::size_t positives = 0;
  for (const auto& s : data) positives += static_cast<std::size_t>(s.label);
  out << json{{"path", file.string()}, {"n", data.size()}, {"positives", positives}, {"difficulty", d.difficulty},
              {"seed", config.seed}}
             .dump()
      << "\n";
  return kExitOk;
}

int cmd_train(const Common& c, const DataSource& d, std::size_t epochs, std::ostream& out) {
  ModelConfig config = resolve_config(c);
  if (epochs != 0) config.epochs = epochs;
  const auto data = resolve_data(d, config);
  const fs::path dir = prepare_out(c.out);
  write_text(dir / "config.json", config_to_json_text(config) + "\n");

  XFloodNet model(config);
  const Split split = split_dataset(data, config.holdout_fraction, config.seed);
  std::ofstream trace(dir / "metrics.ndjson", std::ios::trunc);
  TrainOptions options;
  options.on_epoch = [&](const EpochRecord& rec) {
    const std::string line = to_json_line(rec);
    trace << line << "\n";
    trace.flush();
    out << line << "\n";
  };
  const auto records = train(model, data, split, options);
  save_checkpoint(model.params(), (dir / "checkpoint.xfld").string());
  write_text(dir / "final_metrics.json", to_json_line(records.back().validation) + "\n");
  return kExitOk;
}

int cmd_eval(const Common& c, const DataSource& d, const std::string& checkpoint, bool whole, std::ostream& out) {
  const ModelConfig config = resolve_config(c);
  const auto data = resolve_data(d, config);
  XFloodNet model(config);
  model.load_params(load_checkpoint(checkpoint));
  std::vector<std::size_t> indices;
  if (whole) {
    for (std::size_t i = 0; i < data.size(); ++i) indices.push_back(i);
  } else {
    indices = split_dataset(data, config.holdout_fraction, config.seed).holdout;
    if (indices.empty()) throw InputError("holdout split is empty; pass --all to evaluate every sample");
  }
  const Evaluation ev = evaluate(model, data, indices);
  const std::string line = to_json_line(ev.metrics);
  out << line << "\n";
  if (!c.out.empty()) {
    const fs::path dir = prepare_out(c.out);
    write_text(dir / "metrics.json", line + "\n");
    write_text(dir / "predictions.json", predictions_json(ev, indices).dump() + "\n");
  }
  return kExitOk;
}

int cmd_gradcheck(const Common& c, const std::string& module, std::size_t coords, std::ostream& out) {
  const ModelConfig config = resolve_config(c);
  GradcheckOptions options;
  options.min_coordinates = coords;
  if (c.seed) options.seed = *c.seed;
  const auto reports = run_gradcheck_suite(config, module, options);
  bool ok = true;
  json all = json::array();
  for (const GradcheckReport& r : reports) {
    ok = ok && r.passed;
    json j = {{"check", r.name},
              {"unresolved", r.unresolved},
              {"coordinates", r.coordinates},
              {"max_rel_error", r.max_rel_error},
              {"passed", r.passed}};
    if (!r.passed) j["worst"] = r.worst_coordinate;
    out << j.dump() << "\n";
    all.push_back(j);
  }
  out << (ok ? "gradcheck: all " : "gradcheck: FAILED, ") << reports.size() << " checks\n";
  if (!c.out.empty()) write_text(prepare_out(c.out) / "gradcheck.json", all.dump(2) + "\n");
  return ok ? kExitOk : kExitValidation;
}

int cmd_explain(const Common& c, const DataSource& d, const std::string& checkpoint, std::size_t index,
                std::size_t layer, std::ostream& out) {
  const ModelConfig config = resolve_config(c);
  const auto data = resolve_data(d, config);
  if (index >= data.size()) {
    throw InputError("index " + std::to_string(index) + " out of range for " + std::to_string(data.size()) +
                     " samples");
  }
  XFloodNet model(config);
  if (!checkpoint.empty()) model.load_params(load_checkpoint(checkpoint));
  const GradCamResult result = grad_cam(model, data[index], layer);
  const fs::path dir = prepare_out(c.out);
  write_pgm(result.heatmap, (dir / "heatmap.pgm").string());
  write_heatmap_json(result, (dir / "heatmap.json").string());
  out << json{{"heatmap", (dir / "heatmap.pgm").string()},
              {"layer", layer},
              {"label", data[index].label},
              {"probability", result.probability}}
             .dump()
      << "\n";
  return kExitOk;
}

json read_json(const std::string& path) {
  try {
    return json::parse(binio::read_file(path));
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

int cmd_metrics(const Common& c, const std::string& input, const std::string& compare, std::ostream& out) {
  const json a = read_json(input);
  std::vector<double> probs;
  std::vector<int> labels;
  std::vector<int> preds;
  try {
    probs = a.at("probs").get<std::vector<double>>();
    labels = a.at("labels").get<std::vector<int>>();
    preds = a.contains("preds") ? a.at("preds").get<std::vector<int>>() : predict(probs);
  } catch (const json::exception& e) {
    throw InputError(input + ": " + e.what());
  }
  const MetricsReport report = compute_metrics(preds, probs, labels);
  json result = json::parse(to_json_line(report));
  if (!compare.empty()) {
    const json b = read_json(compare);
    std::vector<int> preds_b;
    try {
      preds_b = b.contains("preds") ? b.at("preds").get<std::vector<int>>()
                                    : predict(b.at("probs").get<std::vector<double>>());
      if (b.at("labels").get<std::vector<int>>() != labels) throw InputError("compared files have different labels");
    } catch (const json::exception& e) {
      throw InputError(compare + ": " + e.what());
    }
    const McNemarResult m = mcnemar_test(preds, preds_b, labels);
    result["mcnemar"] = {{"b", m.b}, {"c", m.c}, {"statistic", m.statistic}, {"p_value", m.p_value}};
  }
  out << result.dump() << "\n";
  if (!c.out.empty()) write_text(prepare_out(c.out) / "metrics.json", result.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal flood classifier: synthetic data, training, evaluation, checks and explanations",
               "xfloodnet"};
  app.require_subcommand(1);

  Common c;
  DataSource d;
  std::size_t epochs = 0;
  std::string checkpoint;
  bool whole = false;
  std::string module = "all";
  std::size_t coords = 20;
  std::size_t index = 0;
  std::size_t layer = 0;
  std::string input;
  std::string compare;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  add_common(gen, c, false, true);
  gen->add_option("--n", d.n, "Sample count")->capture_default_str();
  gen->add_option("--difficulty", d.difficulty, "Difficulty in [0, 1]")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Train and write checkpoint, config and NDJSON metric trace");
  add_common(tr, c, true, true);
  add_data(tr, d);
  tr->add_option("--epochs", epochs, "Override the config epoch count");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the holdout split");
  add_common(ev, c, true, false);
  add_data(ev, d);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_flag("--all", whole, "Evaluate every sample instead of the holdout split");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(gc, c, false, false);
  gc->add_option("--module", module, "Module selector")
      ->check(CLI::IsMember(gradcheck_selectors()))
      ->capture_default_str();
  gc->add_option("--coords", coords, "Minimum coordinates per check")->capture_default_str();

  auto* ex = app.add_subcommand("explain", "Grad-CAM heatmap for one sample (PGM + JSON)");
  add_common(ex, c, true, true);
  add_data(ex, d);
  ex->add_option("--checkpoint", checkpoint, "Checkpoint file (random weights when absent)")
      ->check(CLI::ExistingFile);
  ex->add_option("--index", index, "Sample index")->capture_default_str();
  ex->add_option("--layer", layer, "Encoder block id")->capture_default_str();

  auto* me = app.add_subcommand("metrics", "Metrics (and McNemar with --compare) from prediction files");
  add_common(me, c, false, false);
  me->add_option("--input", input, "predictions.json written by eval")->required()->check(CLI::ExistingFile);
  me->add_option("--compare", compare, "Second predictions file for McNemar's test")->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (const CLI::App* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_data(c, d, out);
    if (*tr) return cmd_train(c, d, epochs, out);
    if (*ev) return cmd_eval(c, d, checkpoint, whole, out);
    if (*gc) return cmd_gradcheck(c, module, coords, out);
    if (*ex) return cmd_explain(c, d, checkpoint, index, layer, out);
    if (*me) return cmd_metrics(c, input, compare, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << app.help();
  return kExitValidation;
}

}  // namespace xflood::cli
