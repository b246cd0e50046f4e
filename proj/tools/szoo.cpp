// szoo command-line front end. Exit codes: 0 success, 1 run failure, 2 configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "szoo/bench.hpp"
#include "szoo/explain.hpp"
#include "szoo/serialize.hpp"

namespace fs = std::filesystem;
using namespace szoo;

namespace {

struct Global {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
  std::string precision = "f32";
};

Precision precision_of(const Global& g) {
  if (g.precision == "f32") return Precision::f32;
  if (g.precision == "f64") return Precision::f64;
  throw ConfigError("--precision must be f32 or f64");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

ModelConfig model_from_args(const std::string& name, const std::string& config_path) {
  if (!config_path.empty()) return resolve_model_json(read_json(config_path));
  if (name.empty()) throw ConfigError("either --model or --config is required");
  try {
    return zoo_config(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void print_metrics(const MetricsReport& r, double rate) {
  std::printf("samples        %lld\n", static_cast<long long>(r.samples));
  std::printf("accuracy       %.4f\n", r.accuracy.value());
  std::printf("micro P/R/F    %.4f %.4f %.4f\n", r.micro.precision.value(), r.micro.recall.value(), r.micro.f.value());
  std::printf("macro F        %.4f\n", r.macro.mean);
  if (rate > 0) std::printf("inference rate %.1f imgs/sec\n", rate);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"szoo: scalable remote-sensing model zoo"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "Seed for initialization, shuffling and data")->capture_default_str();
  app.add_option("--workers", g.workers, "Data-parallel worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--precision", g.precision, "f32 or f64")->capture_default_str()->check(CLI::IsMember({"f32", "f64"}));

  // scale-plan
  auto* plan = app.add_subcommand("scale-plan", "Compound-scaling ladder for a base model");
  std::string plan_model = "WRNB0-ECA";
  double alpha = 0, beta = 0, gamma = 0;
  int phi_min = 0, phi_max = 7;
  plan->add_option("--model", plan_model)->capture_default_str();
  plan->add_option("--alpha", alpha, "Depth coefficient (family default when omitted)");
  plan->add_option("--beta", beta, "Width coefficient");
  plan->add_option("--gamma", gamma, "Resolution coefficient");
  plan->add_option("--phi-min", phi_min)->capture_default_str();
  plan->add_option("--phi-max", phi_max)->capture_default_str();

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic multi-label patch dataset");
  SynthConfig sc;
  syn->add_option("--n", sc.n)->capture_default_str();
  syn->add_option("--classes", sc.num_classes)->capture_default_str();
  syn->add_option("--channels", sc.channels)->capture_default_str();
  syn->add_option("--resolution", sc.resolution)->capture_default_str();
  syn->add_option("--noise", sc.noise)->capture_default_str();
  syn->add_option("--shift", sc.signature_shift, "Signature shift in [0,1] for transfer targets")->capture_default_str();
  syn->add_option("--split", sc.split)->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model and save a checkpoint");
  std::string tr_model, tr_config, tr_data, tr_steps;
  TrainConfig tc;
  int tr_batch = 32;
  tr->add_option("--model", tr_model, "Zoo name");
  tr->add_option("--config", tr_config, "Model config JSON");
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--epochs", tc.epochs)->capture_default_str();
  tr->add_option("--lr", tc.base_lr, "Per-worker base learning rate")->capture_default_str();
  tr->add_option("--decay-epoch", tc.decay_epoch)->capture_default_str();
  tr->add_option("--batch", tr_batch, "Per-worker batch size")->capture_default_str();
  tr->add_option("--resolution", sc.resolution, "Override model resolution");
  tr->add_option("--steps-csv", tr_steps, "Per-step statistics CSV");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ckpt, ev_data;
  double tau = 0.5;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--tau", tau)->capture_default_str();

  // bench
  auto* be = app.add_subcommand("bench", "Run a benchmark manifest");
  std::string be_manifest;
  bool parallel_entries = false;
  be->add_option("--manifest", be_manifest)->required();
  be->add_flag("--parallel-entries", parallel_entries, "Run entries concurrently");

  // gradcam
  auto* gc = app.add_subcommand("gradcam", "Grad-CAM heatmap for one sample");
  std::string gc_ckpt, gc_data;
  int gc_sample = 0, gc_class = -1;
  gc->add_option("--checkpoint", gc_ckpt)->required();
  gc->add_option("--data", gc_data)->required();
  gc->add_option("--sample", gc_sample)->capture_default_str();
  gc->add_option("--class", gc_class, "Class index (default: most probable)");

  // zoo
  auto* zoo = app.add_subcommand("zoo", "Model zoo: list | export | import");
  zoo->require_subcommand(1);
  auto* zl = zoo->add_subcommand("list", "List zoo names with parameter counts");
  auto* ze = zoo->add_subcommand("export", "Write checkpoints and zoo.json");
  std::vector<std::string> ze_names;
  ze->add_option("--names", ze_names, "Zoo names (default: all)")->delimiter(',');
  auto* zi = zoo->add_subcommand("import", "Load a zoo directory and list it");
  std::string zi_dir;
  zi->add_option("--dir", zi_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const Precision prec = precision_of(g);
    if (*plan) {
      ModelConfig base = zoo_config(plan_model);
      ScalingCoefficients c = default_coefficients(base.family);
      if (alpha > 0) c.alpha = alpha;
      if (beta > 0) c.beta = beta;
      if (gamma > 0) c.gamma = gamma;
      if (!c.satisfies_constraint()) std::fprintf(stderr, "warning: alpha*beta^2*gamma^2 = %.5f is not close to 2\n", c.product());
      auto rows = scale_plan(plan_model, c, phi_min, phi_max);
      std::cout << ladder_markdown(rows);
      if (!g.out.empty()) {
        write_text(fs::path(g.out) / "ladder.md", ladder_markdown(rows));
        write_text(fs::path(g.out) / "ladder.csv", ladder_csv(rows));
      }
    } else if (*syn) {
      if (g.out.empty()) throw ConfigError("synth needs --out <dir>");
      sc.seed = g.seed;
      auto ds = synth_generate(sc);
      save_dataset(ds, g.out);
      std::printf("wrote %zu samples to %s\n", ds.size(), g.out.c_str());
    } else if (*tr) {
      if (g.out.empty()) throw ConfigError("train needs --out <checkpoint>");
      ModelConfig cfg = model_from_args(tr_model, tr_config);
      auto ds = load_dataset(tr_data);
      if (tr->count("--resolution")) cfg.resolution = sc.resolution;
      if (ds.size() && ds.samples[0].pixels.dim(1) != cfg.resolution) ds = resize_dataset(ds, cfg.resolution);
      tc.seed = g.seed;
      tc.batch_size = tr_batch;
      tc.validate();
      Model m = build_model(cfg, g.seed);
      if (prec != Precision::f32) m.params().convert(prec);
      WorkerPoolConfig pool{g.workers, tr_batch, Topology::ring, tc.base_lr};
      auto res = distributed_train(m, ds, pool, tc);
      for (std::size_t e = 0; e < res.stats.epoch_loss.size(); ++e) std::printf("epoch %zu loss %.6f\n", e, res.stats.epoch_loss[e]);
      std::printf("trained %lld steps in %.1f s\n", static_cast<long long>(res.stats.steps), res.stats.wall_seconds);
      save_checkpoint(res.model, g.out);
      if (!tr_steps.empty()) write_text(tr_steps, step_stats_csv(res.steps));
    } else if (*ev) {
      Model m = load_checkpoint(ev_ckpt);
      if (prec != Precision::f32) m.params().convert(prec);
      auto ds = load_dataset(ev_data);
      if (ds.size() && ds.samples[0].pixels.dim(1) != m.config().resolution) ds = resize_dataset(ds, m.config().resolution);
      auto r = evaluate(m, ds, tau);
      print_metrics(r.report, r.inference_rate);
      if (!g.out.empty()) write_text(g.out, szoo::report_csv(r.report));
    } else if (*be) {
      BenchOptions bo;
      bo.workers = g.workers;
      bo.seed = g.seed;
      bo.precision = prec;
      bo.parallel_entries = parallel_entries;
      auto report = run_benchmark(read_json(be_manifest), bo);
      std::cout << report_markdown(report);
      if (!g.out.empty()) write_reports(report, g.out);
      return report.any_failed() ? 1 : 0;
    } else if (*gc) {
      if (g.out.empty()) throw ConfigError("gradcam needs --out <dir>");
      Model m = load_checkpoint(gc_ckpt);
      auto ds = load_dataset(gc_data);
      if (ds.size() && ds.samples[0].pixels.dim(1) != m.config().resolution) ds = resize_dataset(ds, m.config().resolution);
      if (gc_sample < 0 || static_cast<std::size_t>(gc_sample) >= ds.size())
        throw ConfigError("--sample " + std::to_string(gc_sample) + " outside dataset of " + std::to_string(ds.size()));
      const auto& s = ds.samples[static_cast<std::size_t>(gc_sample)];
      Batch b = make_batch(ds, {static_cast<std::size_t>(gc_sample)});
      auto probs = rows(sigmoid(m.predict(b.x)))[0];
      int cls = gc_class;
      if (cls < 0) cls = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      auto h = gradcam(m, s.pixels, cls);
      const fs::path dir(g.out);
      fs::create_directories(dir);
      const std::string stem = "sample" + std::to_string(gc_sample) + "_class" + std::to_string(cls);
      write_pgm(h, dir / (stem + ".pgm"));
      const bool predicted = probs[static_cast<std::size_t>(cls)] > 0.5;
      write_heatmap_sidecar(h, "class" + std::to_string(cls), outcome_tag(predicted, s.labels.test(cls)), dir / (stem + ".json"));
      std::printf("class %d p=%.4f%s -> %s\n", cls, h.probability, h.degenerate ? " (degenerate)" : "", (dir / (stem + ".pgm")).c_str());
    } else if (*zl) {
      for (const auto& n : zoo_names()) {
        auto c = zoo_config(n);
        std::printf("%-26s %-12s %12s\n", n.c_str(), to_string(c.family).c_str(), format_count(count_params(build_model(c, 0))).c_str());
      }
    } else if (*ze) {
      if (g.out.empty()) throw ConfigError("zoo export needs --out <dir>");
      if (ze_names.empty()) ze_names = zoo_names();
      std::vector<ZooItem> items;
      for (const auto& n : ze_names) items.push_back({n, build_model(zoo_config(n), g.seed)});
      zoo_export(items, g.out);
      std::printf("exported %zu models to %s\n", items.size(), g.out.c_str());
    } else if (*zi) {
      for (const auto& it : zoo_import(zi_dir))
        std::printf("%-26s %12s\n", it.name.c_str(), format_count(it.model.count_params()).c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
