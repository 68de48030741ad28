// attrbench: dataset generation, training, attribution evaluation campaigns,
// protocol comparison, and report emission. Thin shell over the library: each
// subcommand resolves a config and makes the matching library calls.
//
// Exit codes: 0 ok, 2 config error, 3 numeric fault, 4 partial campaign failure.
// ATTRBENCH_WORKERS caps the OpenMP worker count.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "attrbench/attribution.hpp"
#include "attrbench/common.hpp"
#include "attrbench/data.hpp"
#include "attrbench/model.hpp"
#include "attrbench/patch.hpp"
#include "attrbench/protocols.hpp"
#include "attrbench/report.hpp"
#include "attrbench/serialize.hpp"
#include "attrbench/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json default_config() {
  json j;
  j["schema_version"] = 1;
  j["run"] = "run";
  j["out_root"] = "runs";
  j["data"] = {{"dir", "data/synth"},      {"height", 32},
               {"width", 32},              {"classes", 8},
               {"cells_per_side", 4},      {"train_count", 512},
               {"eval_count", 128},        {"distractor_density", 0.3},
               {"noise_sigma", 0.05},      {"seed", 7}};
  j["model"] = {{"family", "cnn"},          {"depth", 4},        {"width_multiplier", 1.0},
                {"bias", true},             {"batchnorm", true}, {"init_seed", 1}};
  j["train"] = {{"epochs", 20},    {"lr", 0.01},       {"momentum", 0.9},
                {"weight_decay", 1e-4}, {"lr_decay", 0.1},  {"lr_decay_every", 8},
                {"batch_size", 64},     {"seed", 3}};
  j["finetune"] = {{"epochs", 4},         {"lr", 0.005},     {"momentum", 0.9},
                   {"weight_decay", 1e-4}, {"lr_decay", 0.1}, {"lr_decay_every", 8},
                   {"batch_size", 64},     {"seed", 5},       {"probability", 0.5}};
  j["grid_side"] = 4;
  j["baseline"] = "zero";
  j["baseline_seed"] = 11;
  j["methods"] =
      json::array({"gradient", "saliency", "ixg", "ig", "grad_cam", "occlusion", "rise", "random"});
  j["eval"] = {{"protocol", "idsds"}, {"softmax", "pre"},           {"seed", 99},
               {"images", 64},        {"ids_steps", 16},            {"ids_unit", "patch"},
               {"models", json::array()}};
  j["compare"] = {{"base_model", ""}, {"finetuned_model", ""}, {"images", 32},
                  {"ids_steps", 8},   {"ids_unit", "patch"}};
  j["stability"] = {{"seeds", json::array({3, 4})},
                    {"grid_sides", json::array({4, 2})},
                    {"baselines", json::array({"zero", "random_uniform"})},
                    {"images", 32},
                    {"pretrain_epochs", 6},
                    {"finetune_epochs", 2}};
  return j;
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (!path.empty()) {
    json user;
    try {
      user = json::parse(atb::read_file_text(path));
    } catch (const json::exception& e) {
      throw atb::ConfigError("config " + path + ": " + e.what());
    }
    cfg.merge_patch(user);
  }
  for (const auto& ov : overrides) {
    size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw atb::ConfigError("--set expects key.path=value, got '" + ov + "'");
    std::string key = ov.substr(0, eq), value = ov.substr(eq + 1);
    std::string ptr = "/" + key;
    for (auto& ch : ptr)
      if (ch == '.') ch = '/';
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // bare string
    }
    cfg[json::json_pointer(ptr)] = parsed;
  }
  if (!cfg.contains("schema_version") || cfg["schema_version"] != 1)
    throw atb::ConfigError("config: schema_version must be 1");
  return cfg;
}

std::string iso_now() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string hash_file(const std::string& path) {
  if (!fs::exists(path)) return "missing";
  std::vector<uint8_t> bytes = atb::read_file_bytes(path);
  return atb::hex64(atb::fnv1a64(bytes.data(), bytes.size()));
}

// ---- manifest ----------------------------------------------------------

struct Manifest {
  fs::path dir;
  json j;

  static Manifest open(const fs::path& run_dir, const json& cfg) {
    Manifest m;
    m.dir = run_dir;
    fs::create_directories(run_dir);
    fs::path file = run_dir / "manifest.json";
    if (fs::exists(file)) {
      m.j = json::parse(atb::read_file_text(file.string()));
    } else {
      m.j["schema_version"] = 1;
      m.j["run"] = cfg["run"];
      m.j["created"] = iso_now();
      m.j["artifacts"] = json::array();
      m.j["cells"] = json::object();
      m.j["inputs"] = json::object();
    }
    m.j["config"] = cfg;
    return m;
  }
  void add_artifact(const std::string& rel) {
    auto& arr = j["artifacts"];
    for (const auto& a : arr)
      if (a == rel) return;
    arr.push_back(rel);
  }
  void add_input(const std::string& path) { j["inputs"][path] = hash_file(path); }
  bool cell_done(const std::string& key) const {
    return j["cells"].contains(key) && j["cells"][key] == "done";
  }
  void mark_cell(const std::string& key) { j["cells"][key] = "done"; }
  void save() {
    j["updated"] = iso_now();
    atb::write_file_text((dir / "manifest.json").string(), j.dump(2) + "\n");
  }
};

void emit(Manifest& man, const std::string& name, const std::string& bytes) {
  atb::write_file_text((man.dir / name).string(), bytes);
  man.add_artifact(name);
}

// ---- config -> library structs -----------------------------------------

atb::SyntheticSpec spec_from(const json& d) {
  atb::SyntheticSpec s;
  s.height = d["height"];
  s.width = d["width"];
  s.num_classes = d["classes"];
  s.cells_per_side = d["cells_per_side"];
  s.train_count = d["train_count"];
  s.eval_count = d["eval_count"];
  s.distractor_density = d["distractor_density"];
  s.noise_sigma = d["noise_sigma"];
  s.seed = d["seed"];
  return s;
}

atb::ModelConfig model_from(const json& m, const atb::Dataset& ds) {
  atb::ModelConfig c;
  c.family = atb::parse_family(m["family"]);
  c.depth = m["depth"];
  c.width_multiplier = m["width_multiplier"];
  c.use_bias = m["bias"];
  c.use_batchnorm = m["batchnorm"];
  c.num_classes = static_cast<int>(ds.num_classes);
  c.in_c = ds.c;
  c.in_h = ds.h;
  c.in_w = ds.w;
  return c;
}

atb::TrainConfig traincfg_from(const json& t) {
  atb::TrainConfig c;
  c.epochs = t["epochs"];
  c.lr = t["lr"];
  c.momentum = t["momentum"];
  c.weight_decay = t["weight_decay"];
  c.lr_decay = t["lr_decay"];
  c.lr_decay_every = t["lr_decay_every"];
  c.batch_size = t["batch_size"];
  c.seed = t["seed"];
  return c;
}

atb::Baseline baseline_from(const json& cfg, const std::string& name) {
  atb::Baseline b = atb::parse_baseline(name);
  b.seed = cfg["baseline_seed"];
  return b;
}

atb::Dataset subset(const atb::Dataset& ds, int64_t n) {
  if (n <= 0 || n >= static_cast<int64_t>(ds.images.size())) return ds;
  atb::Dataset out = ds;
  out.images.assign(ds.images.begin(), ds.images.begin() + n);
  return out;
}

json log_json(const atb::TrainLog& log, double eval_acc) {
  json epochs = json::array();
  for (const auto& e : log.epochs)
    epochs.push_back(
        {{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"accuracy", e.accuracy}});
  return json{{"epochs", std::move(epochs)}, {"eval_accuracy", eval_acc}};
}

atb::SyntheticBundle load_bundle(const json& cfg) {
  std::string dir = cfg["data"]["dir"];
  if (!fs::exists(fs::path(dir) / "manifest.json"))
    throw atb::ConfigError("dataset missing at " + dir + "; run gen-data first");
  return atb::load_synthetic(dir);
}

fs::path run_dir(const json& cfg) {
  return fs::path(cfg["out_root"].get<std::string>()) / cfg["run"].get<std::string>();
}

// ---- campaign cells ------------------------------------------------------

struct CellOutcome {
  std::string key;
  bool ok = false;
  std::string message;  // error text when failed
};

// Runs one (protocol, model, method) cell with resume: a finished cell is
// stored under cells/ and skipped on re-runs.
template <typename Compute>
CellOutcome run_cell(Manifest& man, const std::string& key, std::vector<atb::ProtocolReport>& sink,
                     const Compute& compute) {
  fs::path cell_dir = man.dir / "cells";
  fs::create_directories(cell_dir);
  fs::path file = cell_dir / (atb::hex64(atb::fnv1a64(key.data(), key.size())) + ".json");
  CellOutcome out;
  out.key = key;
  try {
    if (man.cell_done(key) && fs::exists(file)) {
      auto loaded = atb::reports_from_json(atb::read_file_text(file.string()));
      if (loaded.size() == 1) {
        sink.push_back(std::move(loaded[0]));
        out.ok = true;
        out.message = "cached";
        return out;
      }
    }
    atb::ProtocolReport rep = compute();
    atb::write_file_text(file.string(), atb::reports_to_json({rep}));
    man.add_artifact("cells/" + file.filename().string());
    man.mark_cell(key);
    man.save();  // persist progress so interrupts resume here
    sink.push_back(std::move(rep));
    out.ok = true;
  } catch (const atb::Error& e) {
    out.message = e.what();
  }
  return out;
}

int finish_campaign(const std::vector<CellOutcome>& outcomes) {
  bool any_failed = false;
  for (const auto& o : outcomes) any_failed |= !o.ok;
  if (any_failed) {
    std::fprintf(stderr, "%-8s %s\n", "status", "cell");
    for (const auto& o : outcomes) {
      std::fprintf(stderr, "%-8s %s%s%s\n", o.ok ? "ok" : "FAILED", o.key.c_str(),
                   o.ok ? "" : ": ", o.message.c_str());
    }
    return 4;
  }
  return 0;
}

// ---- subcommands ---------------------------------------------------------

int cmd_gen_data(const json& cfg) {
  atb::SyntheticSpec spec = spec_from(cfg["data"]);
  atb::SyntheticBundle bundle = atb::generate(spec);
  std::string dir = cfg["data"]["dir"];
  atb::save_synthetic(bundle, dir);
  Manifest man = Manifest::open(run_dir(cfg), cfg);
  for (const char* f : {"train-images.idx", "train-labels.idx", "eval-images.idx",
                        "eval-labels.idx", "manifest.json"})
    man.add_input((fs::path(dir) / f).string());
  man.save();
  std::printf("wrote %zu train / %zu eval images (%lldx%lldx%lld) to %s\n",
              bundle.train.images.size(), bundle.eval.images.size(),
              static_cast<long long>(bundle.train.c), static_cast<long long>(bundle.train.h),
              static_cast<long long>(bundle.train.w), dir.c_str());
  return 0;
}

int cmd_train(const json& cfg) {
  atb::SyntheticBundle bundle = load_bundle(cfg);
  Manifest man = Manifest::open(run_dir(cfg), cfg);
  man.add_input((fs::path(cfg["data"]["dir"].get<std::string>()) / "manifest.json").string());

  atb::Model model(model_from(cfg["model"], bundle.train), cfg["model"]["init_seed"]);
  atb::TrainLog log = atb::train(model, traincfg_from(cfg["train"]), bundle.train);
  for (const auto& e : log.epochs)
    std::printf("epoch %2d  lr %.4f  loss %.4f  acc %.3f\n", e.epoch, e.lr, e.loss, e.accuracy);
  double acc = atb::accuracy(model, bundle.eval);
  std::printf("eval accuracy %.3f\n", acc);

  std::string prefix = (man.dir / "model_base").string();
  atb::save_model(model, prefix, json{{"command", "train"}, {"run", cfg["run"]}}.dump());
  man.add_artifact("model_base.atb");
  man.add_artifact("model_base.json");
  emit(man, "train_log.json", log_json(log, acc).dump(2) + "\n");
  man.save();
  return 0;
}

int cmd_finetune(const json& cfg, const std::string& model_arg) {
  atb::SyntheticBundle bundle = load_bundle(cfg);
  Manifest man = Manifest::open(run_dir(cfg), cfg);
  std::string src = model_arg.empty() ? (man.dir / "model_base").string() : model_arg;
  if (!fs::exists(src + ".atb"))
    throw atb::ConfigError("no model at " + src + "; run train first or pass --model");
  man.add_input(src + ".atb");

  atb::Model model = atb::load_model(src);
  atb::PatchGrid grid(cfg["grid_side"], bundle.train.h, bundle.train.w);
  atb::Baseline baseline = baseline_from(cfg, cfg["baseline"]);
  atb::TrainConfig tc = traincfg_from(cfg["finetune"]);
  tc.augmentation.probability = cfg["finetune"]["probability"];
  atb::TrainLog log = atb::finetune_in_domain(model, tc, bundle.train, grid, baseline);
  for (const auto& e : log.epochs)
    std::printf("epoch %2d  lr %.4f  loss %.4f  acc %.3f\n", e.epoch, e.lr, e.loss, e.accuracy);
  double acc = atb::accuracy(model, bundle.eval);
  std::printf("eval accuracy %.3f\n", acc);

  std::string prefix = (man.dir / "model_ft").string();
  atb::save_model(model, prefix,
                  json{{"command", "finetune"}, {"run", cfg["run"]}, {"source", src}}.dump());
  man.add_artifact("model_ft.atb");
  man.add_artifact("model_ft.json");
  emit(man, "finetune_log.json", log_json(log, acc).dump(2) + "\n");
  man.save();
  return 0;
}

int cmd_eval(const json& cfg) {
  std::vector<std::string> roster = cfg["methods"].get<std::vector<std::string>>();
  if (roster.empty()) throw atb::ConfigError("eval: method roster is empty");
  std::vector<atb::MethodSpec> specs;  // parse everything before touching disk
  for (const auto& name : roster) specs.push_back(atb::parse_method(name));

  atb::SyntheticBundle bundle = load_bundle(cfg);
  Manifest man = Manifest::open(run_dir(cfg), cfg);
  atb::Dataset eval_ds = subset(bundle.eval, cfg["eval"]["images"]);

  std::vector<std::string> model_prefixes = cfg["eval"]["models"].get<std::vector<std::string>>();
  if (model_prefixes.empty()) {
    std::string ft = (man.dir / "model_ft").string(), base = (man.dir / "model_base").string();
    if (fs::exists(ft + ".atb"))
      model_prefixes.push_back(ft);
    else if (fs::exists(base + ".atb"))
      model_prefixes.push_back(base);
    else
      throw atb::ConfigError("eval: no models given and none found in " + man.dir.string());
  }

  atb::PatchGrid grid(cfg["grid_side"], eval_ds.h, eval_ds.w);
  atb::Baseline baseline = baseline_from(cfg, cfg["baseline"]);
  atb::SoftmaxMode mode = atb::parse_softmax_mode(cfg["eval"]["softmax"]);
  uint64_t seed = cfg["eval"]["seed"];
  std::string protocol = cfg["eval"]["protocol"];
  int ids_steps = cfg["eval"]["ids_steps"];
  bool ids_patch_unit = cfg["eval"]["ids_unit"] == "patch";

  std::vector<atb::ProtocolReport> reports;
  std::vector<CellOutcome> outcomes;
  std::string first_tag;
  for (const auto& prefix : model_prefixes) {
    man.add_input(prefix + ".atb");
    atb::Model model = atb::load_model(prefix);
    std::string tag = fs::path(prefix).filename().string();
    if (first_tag.empty()) first_tag = tag;
    for (size_t mi = 0; mi < specs.size(); ++mi) {
      std::string key = protocol + "|" + tag + "|" + roster[mi];
      outcomes.push_back(run_cell(man, key, reports, [&]() {
        atb::ProtocolReport rep;
        if (protocol == "idsds" || protocol == "sds") {
          rep = atb::idsds(model, eval_ds, specs[mi], grid, baseline, mode, seed, protocol);
        } else if (protocol == "ids_fixed" || protocol == "ids_updated") {
          rep = atb::ids(model, eval_ds, specs[mi], ids_patch_unit ? &grid : nullptr, baseline,
                         ids_steps, protocol == "ids_fixed" ? atb::IdsMode::kFixed
                                                            : atb::IdsMode::kUpdated,
                         mode, seed);
        } else {
          throw atb::ConfigError("eval: unknown protocol '" + protocol +
                                 "' (idsds|sds|ids_fixed|ids_updated)");
        }
        rep.model_tag = tag;
        return rep;
      }));
      std::printf("[%s] %s\n", outcomes.back().ok ? "ok" : "FAILED",
                  outcomes.back().key.c_str());
    }
  }

  int rc = finish_campaign(outcomes);
  if (rc != 0) {
    man.save();
    return rc;
  }
  emit(man, "report.json", atb::reports_to_json(reports));
  emit(man, "ranking.csv", atb::ranking_csv(reports));
  std::vector<atb::ProtocolReport> first_model;
  for (const auto& r : reports)
    if (r.model_tag == first_tag) first_model.push_back(r);
  emit(man, "plot.svg", atb::plot_ranking_svg(first_model));
  man.save();
  std::printf("wrote %s\n", (man.dir / "ranking.csv").string().c_str());
  return 0;
}

int cmd_compare(const json& cfg) {
  std::vector<std::string> roster = cfg["methods"].get<std::vector<std::string>>();
  if (roster.empty()) throw atb::ConfigError("compare: method roster is empty");
  std::vector<atb::MethodSpec> specs;
  for (const auto& name : roster) specs.push_back(atb::parse_method(name));

  atb::SyntheticBundle bundle = load_bundle(cfg);
  Manifest man = Manifest::open(run_dir(cfg), cfg);
  atb::Dataset eval_ds = subset(bundle.eval, cfg["compare"]["images"]);

  std::string base_prefix = cfg["compare"]["base_model"];
  std::string ft_prefix = cfg["compare"]["finetuned_model"];
  if (base_prefix.empty()) base_prefix = (man.dir / "model_base").string();
  if (ft_prefix.empty()) ft_prefix = (man.dir / "model_ft").string();
  for (const auto& p : {base_prefix, ft_prefix}) {
    if (!fs::exists(p + ".atb"))
      throw atb::ConfigError("compare: missing model " + p + "; run train and finetune first");
    man.add_input(p + ".atb");
  }
  atb::Model base = atb::load_model(base_prefix);
  atb::Model ft = atb::load_model(ft_prefix);

  atb::PatchGrid grid(cfg["grid_side"], eval_ds.h, eval_ds.w);
  atb::Baseline baseline = baseline_from(cfg, cfg["baseline"]);
  atb::SoftmaxMode mode = atb::parse_softmax_mode(cfg["eval"]["softmax"]);
  uint64_t seed = cfg["eval"]["seed"];
  int steps = cfg["compare"]["ids_steps"];
  bool patch_unit = cfg["compare"]["ids_unit"] == "patch";

  std::vector<atb::ProtocolReport> reports;
  std::vector<CellOutcome> outcomes;
  for (size_t mi = 0; mi < specs.size(); ++mi) {
    const std::string& name = roster[mi];
    const atb::MethodSpec& spec = specs[mi];
    auto cell = [&](const std::string& protocol, auto&& compute) {
      outcomes.push_back(run_cell(man, protocol + "|" + name, reports, compute));
      std::printf("[%s] %s|%s\n", outcomes.back().ok ? "ok" : "FAILED", protocol.c_str(),
                  name.c_str());
    };
    cell("idsds", [&]() {
      auto r = atb::idsds(ft, eval_ds, spec, grid, baseline, mode, seed, "idsds");
      r.model_tag = "finetuned";
      return r;
    });
    cell("sds", [&]() {
      auto r = atb::idsds(base, eval_ds, spec, grid, baseline, mode, seed, "sds");
      r.model_tag = "base";
      return r;
    });
    cell("ids_fixed", [&]() {
      auto r = atb::ids(base, eval_ds, spec, patch_unit ? &grid : nullptr, baseline, steps,
                        atb::IdsMode::kFixed, mode, seed);
      r.model_tag = "base";
      return r;
    });
    cell("ids_updated", [&]() {
      auto r = atb::ids(base, eval_ds, spec, patch_unit ? &grid : nullptr, baseline, steps,
                        atb::IdsMode::kUpdated, mode, seed);
      r.model_tag = "base";
      return r;
    });
  }

  int rc = finish_campaign(outcomes);
  if (rc != 0) {
    man.save();
    return rc;
  }
  emit(man, "report.json", atb::reports_to_json(reports));
  emit(man, "compare.csv", atb::compare_csv(reports));
  man.save();
  std::printf("wrote %s\n", (man.dir / "compare.csv").string().c_str());
  return 0;
}

int cmd_stability(const json& cfg) {
  atb::SyntheticBundle bundle = load_bundle(cfg);
  Manifest man = Manifest::open(run_dir(cfg), cfg);
  atb::Dataset eval_ds = subset(bundle.eval, cfg["stability"]["images"]);

  atb::StabilityConfig sc;
  sc.model = model_from(cfg["model"], bundle.train);
  sc.pretrain = traincfg_from(cfg["train"]);
  sc.pretrain.epochs = cfg["stability"]["pretrain_epochs"];
  sc.finetune = traincfg_from(cfg["finetune"]);
  sc.finetune.epochs = cfg["stability"]["finetune_epochs"];
  sc.finetune.augmentation.probability = cfg["finetune"]["probability"];
  sc.train = &bundle.train;
  sc.eval = &eval_ds;
  sc.roster = cfg["methods"].get<std::vector<std::string>>();
  for (const auto& s : cfg["stability"]["seeds"]) sc.seeds.push_back(s.get<uint64_t>());
  for (const auto& g : cfg["stability"]["grid_sides"]) sc.grid_sides.push_back(g.get<int>());
  for (const auto& b : cfg["stability"]["baselines"])
    sc.baselines.push_back(baseline_from(cfg, b.get<std::string>()));
  sc.mode = atb::parse_softmax_mode(cfg["eval"]["softmax"]);
  sc.eval_seed = cfg["eval"]["seed"];

  atb::StabilityReport rep = atb::stability_suite(sc);
  emit(man, "stability.json", atb::stability_to_json(rep));
  emit(man, "stability.csv", atb::stability_csv(rep));
  man.save();
  for (const auto& axis : rep.axes) {
    for (size_t i = 0; i < axis.labels.size(); ++i)
      for (size_t j = i + 1; j < axis.labels.size(); ++j)
        std::printf("%-10s %-28s vs %-28s rank corr %.3f\n", axis.axis.c_str(),
                    axis.labels[i].c_str(), axis.labels[j].c_str(), axis.rank_corr[i][j]);
  }
  return 0;
}

int cmd_report(const json& cfg, const std::string& from) {
  Manifest man = Manifest::open(run_dir(cfg), cfg);
  std::string src = from.empty() ? (man.dir / "report.json").string() : from;
  if (!fs::exists(src)) throw atb::ConfigError("report: no report at " + src);
  man.add_input(src);
  std::vector<atb::ProtocolReport> reports = atb::reports_from_json(atb::read_file_text(src));
  if (reports.empty()) throw atb::ConfigError("report: " + src + " holds no reports");
  emit(man, "ranking.csv", atb::ranking_csv(reports));
  emit(man, "plot.svg", atb::plot_ranking_svg(reports));
  man.save();
  std::printf("wrote %s and plot.svg\n", (man.dir / "ranking.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* workers = std::getenv("ATTRBENCH_WORKERS")) {
    int n = std::atoi(workers);
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
  }

  CLI::App app{"attribution-map evaluation workbench"};
  app.require_subcommand(1);
  app.fallthrough();  // -c/--set may appear after the subcommand name
  std::string config_path, model_arg, from_arg;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("--set", overrides, "override config values, key.path=value");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  auto* train = app.add_subcommand("train", "train a classifier from scratch");
  auto* finetune = app.add_subcommand("finetune", "patch-deletion fine-tuning pass");
  finetune->add_option("--model", model_arg, "model prefix to start from");
  auto* eval = app.add_subcommand("eval", "run a method roster under one protocol");
  auto* compare = app.add_subcommand("compare", "side-by-side protocol table");
  auto* stability = app.add_subcommand("stability", "seed/grid/baseline ranking stability");
  auto* report = app.add_subcommand("report", "regenerate ranking.csv and plot.svg");
  report->add_option("--from", from_arg, "existing report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    json cfg = load_config(config_path, overrides);
    if (gen->parsed()) return cmd_gen_data(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (finetune->parsed()) return cmd_finetune(cfg, model_arg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (compare->parsed()) return cmd_compare(cfg);
    if (stability->parsed()) return cmd_stability(cfg);
    if (report->parsed()) return cmd_report(cfg, from_arg);
  } catch (const atb::NumericFault& e) {
    std::fprintf(stderr, "numeric fault: %s\n", e.what());
    return 3;
  } catch (const atb::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
