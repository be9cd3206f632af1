#include "hsnorm/cli.hpp"

#include "hsnorm/bench.hpp"
#include "hsnorm/train_eval.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <map>

namespace hsnorm {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::dataset_missing: return 3;
    case ErrorKind::numerical: return 4;
    default: return 1;
  }
}

namespace {

void report_error(std::string_view category, std::string message) {
  for (char& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << category << ": " << message << std::endl;
}

struct DataArgs {
  std::string data;
  std::string list;
  std::vector<std::string> shapes;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--data", data, "dataset directory with <name>.xyz/.normals/.pidx")->required();
    cmd->add_option("--list", list, "shape list file (default: every .xyz under --data)");
    cmd->add_option("--shape", shapes, "shape name; repeatable, overrides --list");
  }

  std::vector<std::string> names() const {
    if (!shapes.empty()) return shapes;
    if (!list.empty()) {
      if (!fs::exists(list)) fail(ErrorKind::dataset_missing, "shape list " + list + " not found");
      return read_shape_list(list);
    }
    return list_shapes(data);
  }

  ShapeSet load(bool clean_refs) const {
    if (!fs::is_directory(data)) fail(ErrorKind::dataset_missing, "dataset directory " + data + " not found");
    return ShapeSet::load(data, names(), clean_refs);
  }
};

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  out << text;
}

std::string schema_listing() {
  const TrainConfig defaults;
  std::string s = "Config keys (file `key = value`, --set key=value, or --<key>):\n";
  for (const auto& k : config_schema()) {
    s += "  " + k.name + " (" + k.type + ", default " + get_value(defaults, k.name) + "): " + k.help + "\n";
  }
  return s;
}

NormalPredictor baseline(const std::string& method, int k, int order) {
  if (method == "pca") return pca_predictor(k);
  if (method == "jet") return jet_predictor(k, order);
  fail(ErrorKind::config, "unknown baseline '" + method + "' (pca|jet)");
}

void write_predictions(const ShapeSet& set, const NormalPredictor& predictor, const fs::path& out, bool all_points) {
  for (std::size_t s = 0; s < set.size(); ++s) {
    const ShapeEntry& shape = set.at(s);
    std::vector<int> idx;
    if (all_points || !shape.cloud.eval_indices) {
      idx.resize(static_cast<std::size_t>(shape.cloud.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    } else {
      idx = *shape.cloud.eval_indices;
    }
    const Points normals = predict_normals(shape, idx, predictor);
    fs::create_directories(out);
    const bool subset = !all_points && shape.cloud.eval_indices.has_value();
    write_normals(shape.cloud, normals, out / (shape.cloud.name + ".normals"), subset ? &idx : nullptr);
    log_info("wrote " + (out / (shape.cloud.name + ".normals")).string());
  }
}

bool all_have_normals(const ShapeSet& set) {
  for (std::size_t s = 0; s < set.size(); ++s) {
    if (!set.at(s).cloud.normals) return false;
  }
  return true;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Point cloud normal estimation: training, evaluation and classical baselines"};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(schema_listing());
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  // train
  CLI::App* train = app.add_subcommand("train", "train a model; writes checkpoints and train_log.csv");
  std::string config_file, out_dir = "runs/train", resume;
  std::vector<std::string> sets;
  DataArgs train_data;
  train->add_option("--config", config_file, "flat key = value config file");
  train->add_option("--set", sets, "override key=value; repeatable");
  train->add_option("--out", out_dir, "output directory")->capture_default_str();
  train->add_option("--resume", resume, "checkpoint to continue from");
  train_data.add_to(train);
  std::map<std::string, std::string> key_values;
  std::map<std::string, CLI::Option*> key_options;
  {
    const TrainConfig defaults;
    for (const auto& k : config_schema()) {
      key_options[k.name] = train->add_option("--" + k.name, key_values[k.name], k.help)
                                ->default_str(get_value(defaults, k.name))
                                ->group("Config keys");
    }
  }

  // predict
  CLI::App* predict = app.add_subcommand("predict", "write predicted normals for each shape");
  std::string checkpoint, predict_out = "runs/predict";
  bool all_points = false;
  DataArgs predict_data;
  predict->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  predict->add_option("--out", predict_out, "output directory")->capture_default_str();
  predict->add_flag("--all-points", all_points, "predict every point instead of the evaluation indices");
  predict_data.add_to(predict);

  // eval
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint or a baseline; writes report files");
  std::string eval_ckpt, eval_baseline, eval_out = "runs/eval", label;
  int k = 64, order = 2;
  bool cnd = false;
  DataArgs eval_data;
  auto* ck_opt = eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint");
  auto* bl_opt = eval->add_option("--baseline", eval_baseline, "classical baseline instead of a model (pca|jet)");
  ck_opt->excludes(bl_opt);
  eval->add_option("--k", k, "baseline neighbourhood size")->capture_default_str();
  eval->add_option("--order", order, "jet order")->capture_default_str();
  eval->add_option("--out", eval_out, "output directory")->capture_default_str();
  eval->add_option("--label", label, "row label in rmse_table.md");
  eval->add_flag("--cnd", cnd, "also score against the nearest clean normal");
  eval_data.add_to(eval);

  // baseline
  CLI::App* base = app.add_subcommand("baseline", "classical normals (PCA or jet); writes normals and a report");
  std::string method = "pca", base_out = "runs/baseline";
  int base_k = 64, base_order = 2;
  DataArgs base_data;
  base->add_option("--method", method, "pca or jet")->capture_default_str();
  base->add_option("--k", base_k, "neighbourhood size")->capture_default_str();
  base->add_option("--order", base_order, "jet order")->capture_default_str();
  base->add_option("--out", base_out, "output directory")->capture_default_str();
  base->add_flag("--all-points", all_points, "predict every point instead of the evaluation indices");
  base_data.add_to(base);

  // export
  CLI::App* exp = app.add_subcommand("export", "dump a checkpoint as config.cfg and parameters.json");
  std::string exp_ckpt, exp_out = "runs/export";
  exp->add_option("--checkpoint", exp_ckpt, "checkpoint to export")->required();
  exp->add_option("--out", exp_out, "output directory")->capture_default_str();

  // bench
  CLI::App* bench = app.add_subcommand("bench", "time the block chain forward pass against token count");
  std::vector<int> lengths{256, 1024, 4096, 16384};
  std::string bench_out;
  BenchOptions bopts;
  bench->add_option("--lengths", lengths, "token counts, ascending")->delimiter(',')->capture_default_str();
  bench->add_option("--encoding-dim", bopts.chain.encoding_dim, "token width E")->capture_default_str();
  bench->add_option("--depth", bopts.chain.depth, "blocks in the chain")->capture_default_str();
  bench->add_option("--repeats", bopts.repeats, "timed repeats per length (best kept)")->capture_default_str();
  bench->add_option("--out", bench_out, "directory for bench.csv and bench.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("config", e.what());
    return 2;
  }

  set_log_quiet(quiet);
  configure_allocator();
  try {
    if (*train) {
      TrainConfig cfg;
      if (!config_file.empty()) {
        apply_config_file(cfg, config_file);
      } else if (!resume.empty()) {
        cfg = read_checkpoint(resume).config;
      }
      apply_overrides(cfg, sets);
      for (const auto& kname : config_schema()) {
        if (key_options[kname.name]->count() > 0) set_value(cfg, kname.name, key_values[kname.name]);
      }
      validate(cfg);
      ShapeSet shapes = train_data.load(cfg.use_cnd);
      write_text(fs::path(out_dir) / "config.cfg", to_text(cfg));
      Trainer trainer(cfg, std::move(shapes), out_dir);
      if (!resume.empty()) trainer.resume(resume);
      trainer.run([](const EpochLog& e) {
        log_info("epoch " + std::to_string(e.epoch) + " lr " + std::to_string(e.lr) + " loss " +
                 std::to_string(e.loss));
      });
      std::cout << trainer.last_checkpoint().string() << "\n";
    } else if (*predict) {
      TrainConfig cfg;
      auto net = load_network(checkpoint, &cfg);
      write_predictions(predict_data.load(false), network_predictor(*net), predict_out, all_points);
    } else if (*eval) {
      if (eval_ckpt.empty() == eval_baseline.empty()) {
        fail(ErrorKind::config, "eval needs exactly one of --checkpoint or --baseline");
      }
      const ShapeSet shapes = eval_data.load(cnd);
      nlohmann::json meta;
      std::unique_ptr<Network> net;
      NormalPredictor predictor;
      if (!eval_ckpt.empty()) {
        TrainConfig cfg;
        net = load_network(eval_ckpt, &cfg);
        predictor = network_predictor(*net);
        meta["estimator"] = "network";
        meta["config_hash"] = config_hash(cfg);
        if (label.empty()) label = "Model";
      } else {
        predictor = baseline(eval_baseline, k, order);
        meta["estimator"] = eval_baseline;
        meta["k"] = k;
        if (eval_baseline == "jet") meta["order"] = order;
        if (label.empty()) label = eval_baseline == "pca" ? "PCA" : "Jet";
      }
      const MetricsReport report = evaluate(shapes, predictor, meta);
      write_report(report, eval_out, label);
      std::cout << rmse_table(report, label);
    } else if (*base) {
      const ShapeSet shapes = base_data.load(false);
      const NormalPredictor predictor = baseline(method, base_k, base_order);
      write_predictions(shapes, predictor, fs::path(base_out) / "normals", all_points);
      if (all_have_normals(shapes)) {
        nlohmann::json meta = {{"estimator", method}, {"k", base_k}};
        if (method == "jet") meta["order"] = base_order;
        const MetricsReport report = evaluate(shapes, predictor, meta);
        write_report(report, base_out, method == "pca" ? "PCA" : "Jet");
        std::cout << rmse_table(report, method == "pca" ? "PCA" : "Jet");
      }
    } else if (*exp) {
      const Checkpoint ck = read_checkpoint(exp_ckpt);
      write_text(fs::path(exp_out) / "config.cfg", to_text(ck.config));
      nlohmann::json params = nlohmann::json::array();
      for (const auto& [name, m] : ck.params) {
        std::vector<float> values(m.data(), m.data() + m.size());
        params.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"values", values}});
      }
      nlohmann::json doc = {{"config", to_json(ck.config)},
                            {"config_hash", ck.config_hash},
                            {"epoch", ck.epoch},
                            {"parameters", params}};
      write_text(fs::path(exp_out) / "parameters.json", doc.dump() + "\n");
    } else if (*bench) {
      const auto rows = bench_scaling(lengths, bopts);
      const std::string csv = bench_csv(rows);
      std::cout << csv;
      const auto slope = loglog_slope(rows);
      if (slope) std::cout << "# log-log slope " << *slope << "\n";
      if (!bench_out.empty()) {
        write_text(fs::path(bench_out) / "bench.csv", csv);
        nlohmann::json j = {{"encoding_dim", bopts.chain.encoding_dim},
                            {"depth", bopts.chain.depth},
                            {"slope", slope ? nlohmann::json(*slope) : nlohmann::json(nullptr)}};
        write_text(fs::path(bench_out) / "bench.json", j.dump(2) + "\n");
      }
    }
  } catch (const Error& e) {
    report_error(to_string(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    report_error("parse", e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error("io", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> copy = args;
  std::vector<char*> argv;
  for (auto& a : copy) argv.push_back(a.data());
  argv.push_back(nullptr);
  return run_cli(static_cast<int>(copy.size()), argv.data());
}

}  // namespace hsnorm
