#include "szoo/bench.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "szoo/serialize.hpp"

namespace szoo {

using nlohmann::json;

bool BenchReport::any_failed() const {
  for (const auto& e : entries)
    if (!e.ok) return true;
  return false;
}

namespace {

Dataset load_source(const json& src, const char* what) {
  if (src.contains("synthetic")) return synth_generate(synth_config_from_json(src["synthetic"]));
  if (src.contains("path")) return load_dataset(src["path"].get<std::string>());
  throw ConfigError(std::string("dataset ") + what + " needs \"synthetic\" or \"path\"");
}

struct Prepared {
  ModelConfig config;
  TrainConfig train;
  WorkerPoolConfig pool;
  json dataset;
};

Prepared prepare(const json& entry, const json& default_dataset, const BenchOptions& opt) {
  if (!entry.contains("model")) throw ConfigError("bench entry without \"model\"");
  Prepared p;
  p.config = resolve_model_json(entry["model"]);
  p.config.validate();
  p.train = train_config_from_json(entry.value("train", json::object()));
  if (!entry.contains("train") || !entry["train"].contains("seed")) p.train.seed = opt.seed;
  p.pool.workers = entry.value("workers", opt.workers);
  p.pool.per_worker_batch = entry.value("per_worker_batch", p.train.batch_size);
  p.pool.topology = parse_topology(entry.value("topology", std::string("ring")));
  p.pool.base_lr = p.train.base_lr;
  p.pool.validate();
  p.train.validate();
  p.dataset = entry.value("dataset", default_dataset);
  if (!p.dataset.is_object() || !p.dataset.contains("train") || !p.dataset.contains("test"))
    throw ConfigError("entry '" + p.config.name + "' has no dataset with \"train\" and \"test\"");
  return p;
}

Dataset fit_to(const Dataset& ds, const ModelConfig& c) {
  if (ds.samples.empty()) return ds;
  Dataset out = ds;
  if (out.samples[0].pixels.dim(0) != c.in_channels) {
    if (c.in_channels == 3) out = channel_subset(out, ChannelMode::rgb);
    else if (c.in_channels == 4) out = channel_subset(out, ChannelMode::rgb_nir);
    else
      throw std::invalid_argument("dataset has " + std::to_string(out.samples[0].pixels.dim(0)) + " channels, model expects " +
                                  std::to_string(c.in_channels));
  }
  if (out.samples[0].pixels.dim(1) != c.resolution) out = resize_dataset(out, c.resolution);
  return out;
}

std::string pct(const Ratio& r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * r.value());
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
  return o + "\"";
}

/// Index of the best F-score per family; the first entry wins ties.
std::map<Family, std::size_t> best_per_family(const BenchReport& r) {
  std::map<Family, std::size_t> best;
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    if (!e.ok) continue;
    auto it = best.find(e.family);
    if (it == best.end() || e.report.micro.f.value() > r.entries[it->second].report.micro.f.value()) best[e.family] = i;
  }
  return best;
}

const char* kColumns[] = {"Model",          "Accuracy (%)",           "Precision (%)",
                          "Recall (%)",     "F-Score (%)",            "Training Time (hours.mins)",
                          "Inference Rate (imgs/sec)", "Model Size"};

}  // namespace

BenchReport run_benchmark(const json& manifest, const BenchOptions& opt) {
  if (!manifest.is_object()) throw ConfigError("manifest must be a JSON object");
  const json entries = manifest.value("entries", json::array());
  if (!entries.is_array()) throw ConfigError("\"entries\" must be an array");
  const json default_dataset = manifest.value("dataset", json());
  std::vector<Prepared> plan;
  for (const auto& e : entries) {
    try {
      plan.push_back(prepare(e, default_dataset, opt));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ConfigError(ex.what());
    }
  }

  BenchReport report;
  report.entries.resize(plan.size());
  auto run_one = [&](std::size_t i) {
    const auto& p = plan[i];
    BenchEntryResult& r = report.entries[i];
    r.model = p.config.name;
    r.family = p.config.family;
    try {
      auto train_ds = fit_to(load_source(p.dataset["train"], "train"), p.config);
      auto test_ds = fit_to(load_source(p.dataset["test"], "test"), p.config);
      Model m = build_model(p.config, p.train.seed);
      if (opt.precision != Precision::f32) m.params().convert(opt.precision);
      r.params = m.count_params();
      auto res = distributed_train(m, train_ds, p.pool, p.train);
      r.train_seconds = res.stats.wall_seconds;
      auto ev = evaluate(res.model, test_ds);
      r.report = ev.report;
      r.inference_rate = ev.inference_rate;
      r.ok = true;
    } catch (const std::exception& ex) {
      r.error = ex.what();
    }
  };
  if (opt.parallel_entries) {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < plan.size(); ++i) threads.emplace_back(run_one, i);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t i = 0; i < plan.size(); ++i) run_one(i);
  }
  return report;
}

std::string format_hours_minutes(double seconds) {
  const auto total = static_cast<std::int64_t>(std::llround(std::max(seconds, 0.0) / 60.0));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(total / 60), static_cast<long long>(total % 60));
  return buf;
}

std::string format_count(std::int64_t n) {
  std::string digits = std::to_string(n < 0 ? -n : n), out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return n < 0 ? "-" + out : out;
}

std::string report_csv(const BenchReport& r) {
  std::ostringstream os;
  for (const char* c : kColumns) os << c << ',';
  os << "Training Seconds,Family,Status\n";
  for (const auto& e : r.entries) {
    os << csv_field(e.model) << ',';
    if (e.ok)
      os << pct(e.report.accuracy) << ',' << pct(e.report.micro.precision) << ',' << pct(e.report.micro.recall) << ','
         << pct(e.report.micro.f) << ',' << format_hours_minutes(e.train_seconds) << ','
         << std::llround(e.inference_rate) << ',' << csv_field(format_count(e.params)) << ',' << fixed(e.train_seconds, 3)
         << ',' << to_string(e.family) << ",ok\n";
    else
      os << ",,,,,,,," << to_string(e.family) << ',' << csv_field("failed: " + e.error) << '\n';
  }
  return os.str();
}

std::string report_markdown(const BenchReport& r) {
  std::ostringstream os;
  os << '|';
  for (const char* c : kColumns) os << ' ' << c << " |";
  os << "\n|";
  for (std::size_t i = 0; i < std::size(kColumns); ++i) os << (i ? "---:|" : "---|");
  os << '\n';
  const auto best = best_per_family(r);
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    if (!e.ok) {
      os << "| " << e.model << " | failed | | | | | | |\n";
      failures.push_back(e.model + ": " + e.error);
      continue;
    }
    auto it = best.find(e.family);
    const bool bold = it != best.end() && it->second == i;
    const std::string f = bold ? "**" + pct(e.report.micro.f) + "**" : pct(e.report.micro.f);
    os << "| " << e.model << " | " << pct(e.report.accuracy) << " | " << pct(e.report.micro.precision) << " | "
       << pct(e.report.micro.recall) << " | " << f << " | " << format_hours_minutes(e.train_seconds) << " | "
       << std::llround(e.inference_rate) << " | " << format_count(e.params) << " |\n";
  }
  if (!failures.empty()) {
    os << "\nFailed entries:\n";
    for (const auto& f : failures) os << "- " << f << '\n';
  }
  return os.str();
}

namespace {

// Splits one CSV record, honouring quotes.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool q = false;
  for (char c : line) {
    if (c == '"') q = !q;
    if (c == ',' && !q) out.emplace_back();
    else out.back() += c;
  }
  return out;
}

}  // namespace

std::string mask_timing_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::ostringstream os;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (!header) {
      auto f = split_csv(line);
      for (std::size_t i : {std::size_t{5}, std::size_t{6}, std::size_t{8}})
        if (i < f.size() && !f[i].empty()) f[i] = "-";
      line.clear();
      for (std::size_t i = 0; i < f.size(); ++i) line += (i ? "," : "") + f[i];
    }
    header = false;
    os << line << '\n';
  }
  return os.str();
}

std::string mask_timing_markdown(const std::string& md) {
  std::istringstream is(md);
  std::ostringstream os;
  std::string line;
  int row = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line[0] == '|' && row++ >= 2 && line.find("| failed |") == std::string::npos) {
      std::vector<std::string> cells;
      std::size_t pos = 1;
      while (pos < line.size()) {
        auto next = line.find('|', pos);
        if (next == std::string::npos) break;
        cells.push_back(line.substr(pos, next - pos));
        pos = next + 1;
      }
      if (cells.size() == 8) {
        cells[5] = " - ";
        cells[6] = " - ";
      }
      line = "|";
      for (const auto& c : cells) line += c + "|";
    }
    os << line << '\n';
  }
  return os.str();
}

void write_reports(const BenchReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.csv") << report_csv(r);
  std::ofstream(dir / "report.md") << report_markdown(r);
}

std::vector<LadderRow> scale_plan(const std::string& base_name, ScalingCoefficients coefficients, int phi_min, int phi_max) {
  if (phi_min < 0 || phi_max < phi_min) throw std::invalid_argument("scale_plan: need 0 <= phi_min <= phi_max");
  const ModelConfig base = zoo_config(base_name);
  std::vector<LadderRow> rows;
  for (int phi = phi_min; phi <= phi_max; ++phi) {
    coefficients.phi = phi;
    const ModelConfig c = apply_scaling(base, coefficients);
    const auto m = compound_multipliers(coefficients);
    rows.push_back({phi, c.name, m.d, m.w, c.resolution, count_params(build_model(c, 0))});
  }
  return rows;
}

std::string ladder_markdown(const std::vector<LadderRow>& rows) {
  std::ostringstream os;
  os << "| phi | Model | Depth | Width | Resolution | Model Size |\n|---:|---|---:|---:|---:|---:|\n";
  for (const auto& r : rows)
    os << "| " << r.phi << " | " << r.name << " | " << fixed(r.depth, 4) << " | " << fixed(r.width, 4) << " | "
       << r.resolution << "x" << r.resolution << " | " << format_count(r.params) << " |\n";
  return os.str();
}

std::string ladder_csv(const std::vector<LadderRow>& rows) {
  std::ostringstream os;
  os << "phi,model,depth,width,resolution,params\n";
  for (const auto& r : rows)
    os << r.phi << ',' << r.name << ',' << fixed(r.depth, 6) << ',' << fixed(r.width, 6) << ',' << r.resolution << ','
       << r.params << '\n';
  return os.str();
}

void zoo_export(const std::vector<ZooItem>& items, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest = {{"format", "szoo-zoo"}, {"version", 1}, {"models", json::array()}};
  for (const auto& it : items) {
    std::string file = it.name;
    for (auto& ch : file)
      if (ch == '/') ch = '_';
    file += ".szoo";
    save_checkpoint(it.model, dir / file);
    manifest["models"].push_back({{"name", it.name}, {"file", file}, {"params", it.model.count_params()},
                                  {"config", config_to_json(it.model.config())}});
  }
  std::ofstream(dir / "zoo.json") << manifest.dump(2) << '\n';
}

std::vector<ZooItem> zoo_import(const std::filesystem::path& dir) {
  std::ifstream f(dir / "zoo.json");
  if (!f) throw std::runtime_error("no zoo.json in " + dir.string());
  json manifest = json::parse(f);
  std::vector<ZooItem> out;
  for (const auto& m : manifest.at("models")) {
    Model model = load_checkpoint(dir / m.at("file").get<std::string>());
    if (!(model.config() == config_from_json(m.at("config"))))
      throw CheckpointError("zoo entry '" + m.at("name").get<std::string>() + "': checkpoint config differs from zoo.json");
    out.push_back({m.at("name").get<std::string>(), std::move(model)});
  }
  return out;
}

}  // namespace szoo
