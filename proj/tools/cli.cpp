#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "vsgno/checkpoint.hpp"
#include "vsgno/errors.hpp"
#include "vsgno/log.hpp"

namespace vsgno::cli {
namespace fs = std::filesystem;

namespace {

// Report column order mapped onto model components.
constexpr std::array<Component, 6> kReportComponents = {Component::embed,    Component::lift,
                                                        Component::collab,   Component::spectral,
                                                        Component::spatial,  Component::final};

const char* kNotApplicable = "\xE2\x80\x94";

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string percent_cell(const std::optional<double>& v, int decimals) {
  return v ? fixed(100.0 * *v, decimals) : kNotApplicable;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

template <typename T>
void read_key(const nlohmann::json& value, const std::string& key, T& target) {
  try {
    target = value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

/// Dataset plus the geometry derived from it for a given model config.
struct Prepared {
  Dataset data;
  Graph graph;
  SpectralBasis basis;

  Geometry geometry() const { return {data.domain.points, graph, basis}; }
};

Prepared prepare(const std::string& dataset_dir, const ModelConfig& model) {
  Prepared p;
  p.data = read_dataset(dataset_dir);
  if (model.modes > p.data.meta.n) {
    throw Incompatible(std::to_string(model.modes) + " modes requested on a " + std::to_string(p.data.meta.n) +
                       "-node mesh");
  }
  p.graph = dataset_graph(p.data, model.knn_k);
  p.basis = lowest_eigenpairs(combinatorial_laplacian(p.graph), model.modes);
  log::debug("graph: " + std::to_string(p.graph.edge_count()) + " stored edges, " + std::to_string(p.basis.m) +
             " modes");
  return p;
}

ModelConfig model_for(const RunConfig& cfg, const DatasetMeta& meta) {
  ModelConfig m = cfg.model;
  m.input_dim = meta.q;
  m.output_channels = meta.k;
  m.validate();
  return m;
}

void print_metrics(std::ostream& out, const std::string& title, const Metrics& m, const DatasetMeta& meta,
                   double gamma) {
  out << title << '\n';
  for (std::size_t c = 0; c < m.l2.per_channel.size(); ++c) {
    const std::string name = c < meta.channel_names.size() ? meta.channel_names[c] : "channel" + std::to_string(c);
    out << "  L2[" << name << "] = " << fixed(100.0 * m.l2.per_channel[c], 2) << "%\n";
  }
  out << "  L2[mean] = " << fixed(100.0 * m.l2.mean, 2) << "%\n";
  ReportRow row{gamma, m.l2.mean, m.spikes, {}};
  out << format_report_csv({row}, false);
}

nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json j;
  j["l2_mean"] = m.l2.mean;
  j["l2_per_channel"] = m.l2.per_channel;
  j["loss"] = m.loss;
  for (std::size_t c = 0; c < kComponentCount; ++c) {
    const auto& v = m.spikes.rates[c];
    j[component_label(static_cast<Component>(c))] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  return j;
}

struct TrainOutcome {
  Metrics val;
  std::size_t best_epoch = 0;
};

TrainOutcome train_into(const RunConfig& cfg, const Prepared& p, const fs::path& dir) {
  ensure_dir(dir);
  const ModelConfig mc = model_for(cfg, p.data.meta);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");

  VsGnoModel model = VsGnoModel::create(mc, p.graph.edge_count(), cfg.seed);
  std::ofstream history(dir / "history.jsonl", std::ios::trunc);
  if (!history) throw IoError("cannot open " + (dir / "history.jsonl").string());

  TrainConfig tc = cfg.train_config();
  const auto start = std::chrono::steady_clock::now();
  tc.on_epoch = [&](const EpochRecord& r) {
    history << epoch_record_json(r).dump() << '\n';
    history.flush();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log::info("epoch " + std::to_string(r.epoch) + "/" + std::to_string(cfg.epochs) + " train_loss " +
              shortest(r.train_loss) + " val_l2 " + fixed(100.0 * r.val.l2.mean, 2) + "% (" + fixed(secs, 1) + "s)");
  };
  const Geometry geo = p.geometry();
  TrainResult result = train(model, p.data, geo, tc);
  if (!history) throw IoError("write failed for history.jsonl");

  nlohmann::json meta;
  meta["dataset"] = cfg.dataset;
  meta["alpha"] = cfg.loss.alpha;
  meta["gamma"] = cfg.loss.gamma;
  meta["seed"] = cfg.seed;
  meta["n"] = p.data.meta.n;
  meta["k"] = p.data.meta.k;
  meta["q"] = p.data.meta.q;
  meta["best_epoch"] = result.best_epoch;
  meta["best_val_l2"] = result.best_val_l2;
  write_checkpoint(dir / "checkpoint_best.bin", result.best_model, meta);
  meta["epoch"] = cfg.epochs;
  write_checkpoint(dir / "checkpoint_last.bin", model, meta);

  TrainOutcome outcome;
  outcome.best_epoch = result.best_epoch;
  outcome.val = evaluate(result.best_model, p.data, Split::val, geo, cfg.loss, cfg.threads);
  return outcome;
}

}  // namespace

// ---------------------------------------------------------------- RunConfig

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (!(adam.lr > 0) || !(adam.eps > 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ConfigError("invalid optimizer settings");
  }
  if (n_target < 50) throw ConfigError("n_target must be at least 50");
  if (q_flux < 1) throw ConfigError("q_flux must be at least 1");
  split_sizes(count, split_fracs);
  parse_split(split);
  if (gammas.empty()) throw ConfigError("gammas must not be empty");
  for (double g : gammas) LossConfig{loss.alpha, g}.validate();
  for (const auto& r : {scalar_a_range, scalar_b_range}) {
    if (!(r[0] <= r[1])) throw ConfigError("scalar ranges must satisfy low <= high");
  }
}

GenerateOptions RunConfig::generate_options() const {
  GenerateOptions o;
  o.n_target = n_target;
  o.count = count;
  o.split_fracs = split_fracs;
  o.q_flux = q_flux;
  o.knn_k = model.knn_k;
  o.seed = seed;
  o.domain = domain;
  o.scalar_a_range = scalar_a_range;
  o.scalar_b_range = scalar_b_range;
  return o;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.loss = loss;
  t.adam = adam;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.seed = seed;
  t.threads = threads;
  t.clip_norm = clip_norm;
  return t;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = config_to_json(c.model);
  j["alpha"] = c.loss.alpha;
  j["gamma"] = c.loss.gamma;
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["eps"] = c.adam.eps;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["clip_norm"] = c.clip_norm;
  j["dataset"] = c.dataset;
  j["out"] = c.out;
  j["checkpoint"] = c.checkpoint;
  j["split"] = c.split;
  j["gammas"] = c.gammas;
  j["n_target"] = c.n_target;
  j["count"] = c.count;
  j["split_fracs"] = c.split_fracs;
  j["q_flux"] = c.q_flux;
  j["amplitude"] = c.domain.amplitude;
  j["wavenumber"] = c.domain.wavenumber;
  j["length"] = c.domain.length;
  j["height"] = c.domain.height;
  j["scalar_a_range"] = c.scalar_a_range;
  j["scalar_b_range"] = c.scalar_b_range;
  return j;
}

RunConfig from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const nlohmann::json model_defaults = config_to_json(c.model);
  nlohmann::json model_part = nlohmann::json::object();
  for (const auto& [key, value] : j.items()) {
    if (model_defaults.contains(key)) model_part[key] = value;
    else if (key == "alpha") read_key(value, key, c.loss.alpha);
    else if (key == "gamma") read_key(value, key, c.loss.gamma);
    else if (key == "lr") read_key(value, key, c.adam.lr);
    else if (key == "beta1") read_key(value, key, c.adam.beta1);
    else if (key == "beta2") read_key(value, key, c.adam.beta2);
    else if (key == "eps") read_key(value, key, c.adam.eps);
    else if (key == "epochs") read_key(value, key, c.epochs);
    else if (key == "batch_size") read_key(value, key, c.batch_size);
    else if (key == "seed") read_key(value, key, c.seed);
    else if (key == "threads") read_key(value, key, c.threads);
    else if (key == "clip_norm") read_key(value, key, c.clip_norm);
    else if (key == "dataset") read_key(value, key, c.dataset);
    else if (key == "out") read_key(value, key, c.out);
    else if (key == "checkpoint") read_key(value, key, c.checkpoint);
    else if (key == "split") read_key(value, key, c.split);
    else if (key == "gammas") read_key(value, key, c.gammas);
    else if (key == "n_target") read_key(value, key, c.n_target);
    else if (key == "count") read_key(value, key, c.count);
    else if (key == "split_fracs") read_key(value, key, c.split_fracs);
    else if (key == "q_flux") read_key(value, key, c.q_flux);
    else if (key == "amplitude") read_key(value, key, c.domain.amplitude);
    else if (key == "wavenumber") read_key(value, key, c.domain.wavenumber);
    else if (key == "length") read_key(value, key, c.domain.length);
    else if (key == "height") read_key(value, key, c.domain.height);
    else if (key == "scalar_a_range") read_key(value, key, c.scalar_a_range);
    else if (key == "scalar_b_range") read_key(value, key, c.scalar_b_range);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  nlohmann::json merged = model_defaults;
  merged.update(model_part);
  c.model = config_from_json(merged);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + " is not valid JSON (" + e.what() + ")");
  }
  return from_json(j);
}

// ---------------------------------------------------------------- report

std::string format_report_csv(const std::vector<ReportRow>& rows, bool with_reference) {
  std::ostringstream os;
  for (std::size_t i = 0; i < kReportColumns.size(); ++i) os << (i ? "," : "") << kReportColumns[i];
  os << '\n';
  for (const auto& r : rows) {
    os << shortest(r.gamma) << ',' << (r.error.empty() ? percent_cell(r.l2, 2) : "error");
    for (Component c : kReportComponents) os << ',' << (r.error.empty() ? percent_cell(r.spikes[c], 1) : kNotApplicable);
    os << '\n';
  }
  for (const auto& r : rows) {
    if (!r.error.empty()) os << "# gamma " << shortest(r.gamma) << " failed: " << r.error << '\n';
  }
  if (with_reference) {
    os << "# reference (full-scale published values, percent)\n"
       << "# mode,gamma,L2\n"
       << "# spectral_only,0,0.71\n"
       << "# full,0,1.04\n";
  }
  return os.str();
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<ReportRow> rows;
  bool header = false;
  std::size_t line_no = 0;
  auto number = [&](const std::string& cell) -> std::optional<double> {
    if (cell == kNotApplicable) return std::nullopt;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cell.size() || cell.empty()) {
      throw FormatError("report line " + std::to_string(line_no) + ": bad cell '" + cell + "'");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != kReportColumns.size()) {
      throw FormatError("report line " + std::to_string(line_no) + ": expected " +
                        std::to_string(kReportColumns.size()) + " cells");
    }
    if (!header) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] != kReportColumns[i]) throw FormatError("report header column " + std::to_string(i) + " is '" + cells[i] + "'");
      }
      header = true;
      continue;
    }
    ReportRow r;
    r.gamma = number(cells[0]).value_or(0.0);
    if (cells[1] == "error") {
      r.error = "error";
    } else if (auto v = number(cells[1])) {
      r.l2 = *v / 100.0;
    }
    for (std::size_t i = 0; i < kReportComponents.size(); ++i) {
      if (auto v = number(cells[2 + i])) r.spikes.rates[static_cast<std::size_t>(kReportComponents[i])] = *v / 100.0;
    }
    rows.push_back(r);
  }
  if (!header) throw FormatError("report has no header row");
  return rows;
}

// ---------------------------------------------------------------- commands

int cmd_generate(const RunConfig& cfg, bool force, std::ostream& out) {
  cfg.validate();
  const fs::path dir = cfg.dataset;
  if (fs::exists(dir)) {
    if (!force) throw IoError(dir.string() + " already exists (use --force to overwrite)");
    for (const char* f : {"meta.json", "mesh.json", "samples.bin", "config.json"}) fs::remove(dir / f);
  }
  const Dataset ds = generate_dataset(cfg.generate_options());
  write_dataset(dir, ds);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  const auto& m = ds.meta;
  out << "dataset " << dir.string() << '\n'
      << "  nodes n = " << m.n << ", channels k = " << m.k << ", inputs q = " << m.q << '\n'
      << "  splits train/val/test = " << m.splits.train << '/' << m.splits.val << '/' << m.splits.test << '\n'
      << "  reconstruction ratio = " << fixed(m.reconstruction_ratio(), 1) << ":1\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const Prepared p = prepare(cfg.dataset, cfg.model);
  const TrainOutcome r = train_into(cfg, p, cfg.out);
  print_metrics(out, "validation (best epoch " + std::to_string(r.best_epoch) + ")", r.val, p.data.meta,
                cfg.loss.gamma);
  return kOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const fs::path ck_path = cfg.checkpoint.empty() ? fs::path(cfg.out) / "checkpoint_best.bin" : fs::path(cfg.checkpoint);
  const Checkpoint ck = read_checkpoint(ck_path);
  const ModelConfig& mc = ck.model.config();
  const Split split = parse_split(cfg.split);
  const Prepared p = prepare(cfg.dataset, mc);
  const auto& meta = p.data.meta;
  if (mc.input_dim != meta.q || mc.output_channels != meta.k || ck.model.edge_count() != p.graph.edge_count()) {
    throw Incompatible("checkpoint expects q=" + std::to_string(mc.input_dim) + ", k=" +
                       std::to_string(mc.output_channels) + ", " + std::to_string(ck.model.edge_count()) +
                       " edges; dataset has q=" + std::to_string(meta.q) + ", k=" + std::to_string(meta.k) + ", " +
                       std::to_string(p.graph.edge_count()) + " edges");
  }

  Metrics m;
  if (ck.echo_truth) {
    const auto idx = p.data.indices(split);
    if (idx.empty()) throw EmptyDataset(cfg.split + " split is empty");
    m.l2.per_channel.assign(meta.k, 0.0);
    for (std::size_t i : idx) {
      const RelativeL2 r = relative_l2(p.data.outputs[i], p.data.outputs[i]);
      for (std::size_t c = 0; c < meta.k; ++c) m.l2.per_channel[c] += r.per_channel[c] / static_cast<double>(idx.size());
    }
    for (double v : m.l2.per_channel) m.l2.mean += v / static_cast<double>(meta.k);
  } else {
    m = evaluate(ck.model, p.data, split, p.geometry(), {}, cfg.threads);
  }
  const double gamma = ck.metadata.value("gamma", cfg.loss.gamma);
  print_metrics(out, cfg.split + " metrics (" + ck_path.string() + ")", m, meta, gamma);

  nlohmann::json j = metrics_json(m);
  j["split"] = cfg.split;
  j["checkpoint"] = ck_path.string();
  j["gamma"] = gamma;
  write_text(ck_path.parent_path() / ("eval_" + cfg.split + ".json"), j.dump(2) + "\n");
  return kOk;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const Prepared p = prepare(cfg.dataset, cfg.model);
  std::vector<double> gammas = cfg.gammas;
  std::sort(gammas.begin(), gammas.end());

  std::vector<ReportRow> rows;
  std::size_t succeeded = 0;
  for (double g : gammas) {
    RunConfig run = cfg;
    run.loss.gamma = g;
    const fs::path dir = fs::path(cfg.out) / ("gamma_" + shortest(g));
    ReportRow row;
    row.gamma = g;
    try {
      log::info("sweep: gamma " + shortest(g));
      train_into(run, p, dir);
      const Checkpoint best = read_checkpoint(dir / "checkpoint_best.bin");
      const Metrics m = evaluate(best.model, p.data, Split::test, p.geometry(), run.loss, cfg.threads);
      row.l2 = m.l2.mean;
      row.spikes = m.spikes;
      ++succeeded;
    } catch (const Error& e) {
      log::error(std::string("gamma ") + shortest(g) + ": " + e.what());
      row.error = e.what();
    }
    rows.push_back(row);
  }
  const std::string report = format_report_csv(rows);
  ensure_dir(cfg.out);
  write_text(fs::path(cfg.out) / "sweep.csv", report);
  write_text(fs::path(cfg.out) / "config.json", to_json(cfg).dump(2) + "\n");
  out << report;
  return succeeded > 0 ? kOk : kNumeric;
}

// ---------------------------------------------------------------- argv

namespace {

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string mode, spiking, split, dataset, out, checkpoint;
  double gamma = 0, alpha = 0;
  std::size_t spike_steps = 0, epochs = 0, batch_size = 0, threads = 0;
  std::vector<double> gammas;
  bool force = false;
  std::vector<CLI::Option*> options;
};

void add_flags(CLI::App* app, Flags& f) {
  f.options.push_back(app->add_option("--config", f.config, "JSON run config"));
  f.options.push_back(app->add_option("--seed", f.seed, "random seed"));
  f.options.push_back(app->add_option("--mode", f.mode, "full | spectral_only"));
  f.options.push_back(app->add_option("--spiking", f.spiking, "on | bypass"));
  f.options.push_back(app->add_option("--gamma", f.gamma, "spike penalty weight"));
  f.options.push_back(app->add_option("--alpha", f.alpha, "error weight"));
  f.options.push_back(app->add_option("--spike-steps", f.spike_steps, "spike time steps T"));
  f.options.push_back(app->add_option("--epochs", f.epochs, "training epochs"));
  f.options.push_back(app->add_option("--batch-size", f.batch_size, "samples per batch"));
  f.options.push_back(app->add_option("--threads", f.threads, "worker threads"));
  f.options.push_back(app->add_option("--dataset", f.dataset, "dataset directory"));
  f.options.push_back(app->add_option("--out", f.out, "output directory"));
  f.options.push_back(app->add_option("--checkpoint", f.checkpoint, "checkpoint file (eval)"));
  f.options.push_back(app->add_option("--split", f.split, "train | val | test (eval)"));
  f.options.push_back(app->add_option("--gammas", f.gammas, "gamma list (sweep)")->delimiter(','));
  app->add_flag("--force", f.force, "overwrite an existing dataset");
}

bool given(const CLI::App* app, const std::string& name) { return app->count(name) > 0; }

RunConfig resolve(const CLI::App* app, const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  nlohmann::json o = nlohmann::json::object();
  if (given(app, "--mode")) o["mode"] = f.mode;
  if (given(app, "--spiking")) o["spiking"] = f.spiking;
  if (given(app, "--spike-steps")) o["spike_steps"] = f.spike_steps;
  if (given(app, "--seed")) o["seed"] = f.seed;
  if (given(app, "--gamma")) o["gamma"] = f.gamma;
  if (given(app, "--alpha")) o["alpha"] = f.alpha;
  if (given(app, "--epochs")) o["epochs"] = f.epochs;
  if (given(app, "--batch-size")) o["batch_size"] = f.batch_size;
  if (given(app, "--threads")) o["threads"] = f.threads;
  if (given(app, "--dataset")) o["dataset"] = f.dataset;
  if (given(app, "--out")) o["out"] = f.out;
  if (given(app, "--checkpoint")) o["checkpoint"] = f.checkpoint;
  if (given(app, "--split")) o["split"] = f.split;
  if (given(app, "--gammas")) o["gammas"] = f.gammas;
  return from_json(o, c);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variable spiking graph neural operator: data generation, training, evaluation, gamma sweeps"};
  app.require_subcommand(1);
  Flags flags;
  CLI::App* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  CLI::App* trn = app.add_subcommand("train", "train a model");
  CLI::App* evl = app.add_subcommand("eval", "evaluate a checkpoint");
  CLI::App* swp = app.add_subcommand("sweep", "train and evaluate one model per gamma");
  for (CLI::App* sub : {gen, trn, evl, swp}) add_flags(sub, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg, help;
    const int code = app.exit(e, help, msg);
    out << help.str();
    err << msg.str();
    return code == 0 ? kOk : kConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const RunConfig cfg = resolve(sub, flags);
    if (sub == gen) return cmd_generate(cfg, flags.force, out);
    if (sub == trn) return cmd_train(cfg, out);
    if (sub == evl) return cmd_eval(cfg, out);
    return cmd_sweep(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const ChecksumMismatch& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const Incompatible& e) {
    err << "incompatible: " << e.what() << '\n';
    return kIncompatible;
  } catch (const ShapeMismatch& e) {
    err << "incompatible: " << e.what() << '\n';
    return kIncompatible;
  } catch (const Error& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace vsgno::cli
