// Command-line surface for the ionic-liquid property toolkit: synthetic data
// generation, pre-training, fine-tuning, transfer studies, and screening.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ilnrs/artifact.hpp"
#include "ilnrs/data.hpp"
#include "ilnrs/oracle.hpp"
#include "ilnrs/pipeline.hpp"
#include "ilnrs/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ilnrs;

namespace {

// ---- shared helpers ---------------------------------------------------------

struct CommonArgs {
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string config_path;
};

void add_common(CLI::App* cmd, CommonArgs& common, bool out_required = true) {
  cmd->add_option("--seed", common.seed, "Base seed for every stochastic choice");
  auto* out = cmd->add_option("--out", common.out_dir, "Output directory");
  if (out_required) out->required();
  cmd->add_option("--config", common.config_path, "JSON run-configuration file");
}

// Run-configuration files hold {"option": value} pairs matching the long flag
// names. Values are injected before the explicit argv flags, which win.
std::vector<std::string> config_tokens(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  json cfg = json::parse(in);
  if (!cfg.is_object()) throw std::runtime_error("config file must hold a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (cmd->get_option_no_throw(flag) == nullptr)
      throw std::runtime_error("config file key '" + key + "' is not an option of subcommand '" +
                               cmd->get_name() + "'");
    if (value.is_array()) {
      for (const json& v : value) {
        tokens.push_back(flag);
        tokens.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
    } else {
      tokens.push_back(flag);
      tokens.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  return tokens;
}

void write_text_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << contents;
}

// Every run records its resolved configuration and seeds next to its outputs.
void write_manifest(const fs::path& out_dir, const std::string& command, const json& resolved) {
  json manifest{{"command", command}, {"resolved", resolved}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

pipeline::TrainSettings settings_from(std::uint64_t seed, std::size_t batch, int epochs,
                                      int patience, int folds, double val_fraction) {
  pipeline::TrainSettings s;
  s.seed = seed;
  s.batch_size = batch;
  s.max_epochs = epochs;
  s.patience = patience;
  s.cv_folds = folds;
  s.validation_fraction = val_fraction;
  s.validate();
  return s;
}

json settings_json(const pipeline::TrainSettings& s) {
  return json{{"batch_size", s.batch_size},   {"max_epochs", s.max_epochs},
              {"patience", s.patience},       {"validation_fraction", s.validation_fraction},
              {"cv_folds", s.cv_folds},       {"seed", s.seed}};
}

json metric_json(const pipeline::MetricReport& m) {
  return json{{"r2", m.r2},
              {"mae", m.mae},
              {"mape_percent", m.mape},
              {"n_records", m.n_records},
              {"n_ils", m.n_ils}};
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

int resolve_ion_or_suggest(const data::IonVocabulary& vocab, const std::string& name) {
  if (vocab.contains(name)) return vocab.id_of(name);
  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const std::string& candidate : vocab.names())
    ranked.emplace_back(levenshtein(name, candidate), candidate);
  std::sort(ranked.begin(), ranked.end());
  std::ostringstream msg;
  msg << "unknown " << (vocab.role() == data::IonVocabulary::Role::cation ? "cation" : "anion")
      << " '" << name << "'; nearest vocabulary matches:";
  for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i)
    msg << " '" << ranked[i].second << "'";
  throw std::runtime_error(msg.str());
}

// Synthetic universes name ions C0001.., A0001.. so files are diffable.
void synth_vocabularies(int num_cations, int num_anions, data::IonVocabulary& cations,
                        data::IonVocabulary& anions) {
  char buf[16];
  for (int i = 0; i < num_cations; ++i) {
    std::snprintf(buf, sizeof(buf), "C%04d", i + 1);
    cations.add(buf);
  }
  for (int i = 0; i < num_anions; ++i) {
    std::snprintf(buf, sizeof(buf), "A%04d", i + 1);
    anions.add(buf);
  }
}

std::vector<model::PretrainConfig> pretrain_grid(Property property,
                                                 const std::vector<std::size_t>& widths,
                                                 const std::vector<std::size_t>& blocks,
                                                 const std::vector<std::size_t>& heads) {
  std::vector<model::PretrainConfig> grid;
  for (std::size_t w : widths)
    for (std::size_t b : blocks)
      for (std::size_t h : heads) {
        model::PretrainConfig cfg = pipeline::default_pretrain_config(property);
        cfg.branch_width = w;
        cfg.blocks_per_branch = b;
        cfg.head_width = h;
        cfg.validate();
        grid.push_back(cfg);
      }
  return grid;
}

// ---- subcommand implementations ------------------------------------------------

struct GenSynthArgs {
  CommonArgs common;
  int cations = 200;
  int anions = 60;
  int anions_per_cation = 9;
  int experimental_ils = 150;
  double outlier_fraction = 0.01;
  double outlier_magnitude = 80.0;
};

int run_gen_synth(const GenSynthArgs& a) {
  oracle::OracleConfig cfg;
  cfg.seed = a.common.seed;
  cfg.outlier_fraction = a.outlier_fraction;
  cfg.outlier_magnitude = a.outlier_magnitude;

  oracle::SamplingPlan plan;
  plan.num_cations = a.cations;
  plan.num_anions = a.anions;
  plan.anions_per_cation = a.anions_per_cation;
  plan.experimental_ils_per_property = a.experimental_ils;
  plan.validate();

  const oracle::Oracle oracle(cfg, a.cations, a.anions);
  const oracle::SynthDatasets ds = oracle.emit_datasets(plan);

  data::IonVocabulary cations(data::IonVocabulary::Role::cation);
  data::IonVocabulary anions(data::IonVocabulary::Role::anion);
  synth_vocabularies(a.cations, a.anions, cations, anions);

  const fs::path out_dir(a.common.out_dir);
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "ions.csv");
    data::write_ions_csv(out, cations, anions);
  }
  for (const auto& [p, records] : ds.pretrain) {
    std::ofstream out(out_dir / (std::string("pretrain_") + to_string(p) + ".csv"));
    data::write_records_csv(out, records, cations, anions);
  }
  for (const auto& [p, records] : ds.experimental) {
    std::ofstream out(out_dir / (std::string("experimental_") + to_string(p) + ".csv"));
    data::write_records_csv(out, records, cations, anions);
  }

  write_manifest(out_dir, "gen-synth",
                 json{{"seed", a.common.seed},
                      {"cations", a.cations},
                      {"anions", a.anions},
                      {"anions_per_cation", a.anions_per_cation},
                      {"experimental_ils", a.experimental_ils},
                      {"outlier_fraction", a.outlier_fraction},
                      {"outlier_magnitude", a.outlier_magnitude},
                      {"pretrain_ils", ds.pretrain_ils.size()}});
  std::cout << "wrote synthetic universe (" << a.cations << "x" << a.anions << ", "
            << ds.pretrain_ils.size() << " pre-train ILs) to " << out_dir.string() << "\n";
  return 0;
}

struct TrainArgsCommon {
  std::size_t batch = 256;
  int epochs = 500;
  int patience = 20;
  int folds = 10;
  double val_fraction = 0.1;
};

void add_train_options(CLI::App* cmd, TrainArgsCommon& t) {
  cmd->add_option("--batch", t.batch, "Minibatch size");
  cmd->add_option("--epochs", t.epochs, "Maximum training epochs");
  cmd->add_option("--patience", t.patience, "Early-stop patience (epochs)");
  cmd->add_option("--folds", t.folds, "Cross-validation folds");
  cmd->add_option("--val-fraction", t.val_fraction, "Early-stop validation fraction of training ILs");
}

struct PretrainArgs {
  CommonArgs common;
  TrainArgsCommon train;
  std::string data_path;
  std::string ions_path;
  std::string property = "density";
  std::vector<std::size_t> branch_widths = {100};
  std::vector<std::size_t> blocks = {1};
  std::vector<std::size_t> head_widths = {100};
};

int run_pretrain(const PretrainArgs& a) {
  const Property property = property_from_string(a.property);
  data::IonVocabulary cations(data::IonVocabulary::Role::cation);
  data::IonVocabulary anions(data::IonVocabulary::Role::anion);
  data::load_ions(a.ions_path, cations, anions);

  data::LoadOptions lo;
  lo.cations = &cations;
  lo.anions = &anions;
  const data::Dataset ds = data::load_records(a.data_path, lo);
  for (const data::PropertyRecord& r : ds.records)
    if (r.property != property)
      throw std::runtime_error("pretrain: data file contains rows for '" +
                               std::string(to_string(r.property)) + "', expected '" + a.property + "'");

  const auto grid = pretrain_grid(property, a.branch_widths, a.blocks, a.head_widths);
  const auto settings = settings_from(a.common.seed, a.train.batch, a.train.epochs,
                                      a.train.patience, a.train.folds, a.train.val_fraction);

  pipeline::PretrainResult result =
      pipeline::pretrain(ds.records, cations.size(), anions.size(), grid, settings);

  const fs::path out_dir(a.common.out_dir);
  fs::create_directories(out_dir);
  const std::string artifact = (out_dir / ("encoder_" + a.property + ".ilnrs")).string();
  io::save_encoder(result.model.export_encoder(), cations, anions, artifact);
  {
    std::ofstream out(out_dir / "report_folds.csv");
    pipeline::write_fold_report_csv(out, result.grid);
  }
  const pipeline::MetricReport& best = result.grid[result.best_index].mean;
  std::ostringstream summary;
  summary << "pretrain " << a.property << "\n"
          << "records: " << ds.records.size() << ", ILs: "
          << data::distinct_ils(ds.records).size() << "\n"
          << "grid points: " << result.grid.size() << ", best index: " << result.best_index << "\n"
          << "best mean CV: MAE " << best.mae << ", R2 " << best.r2 << ", MAPE " << best.mape
          << "%\n"
          << "encoder artifact: " << artifact << "\n";
  write_text_file(out_dir / "summary.txt", summary.str());

  json grid_json = json::array();
  for (const auto& e : result.grid)
    grid_json.push_back(json{{"branch_width", e.config.branch_width},
                             {"blocks_per_branch", e.config.blocks_per_branch},
                             {"head_width", e.config.head_width},
                             {"mean", metric_json(e.mean)}});
  write_manifest(out_dir, "pretrain",
                 json{{"data", a.data_path},
                      {"ions", a.ions_path},
                      {"property", a.property},
                      {"settings", settings_json(settings)},
                      {"grid", grid_json},
                      {"best_index", result.best_index},
                      {"encoder_artifact", artifact}});
  std::cout << summary.str();
  return 0;
}

struct FinetuneArgs {
  CommonArgs common;
  TrainArgsCommon train;
  std::string encoder_path;
  std::string data_path;
  std::string property = "density";
  std::vector<std::size_t> head_widths = {100};
  bool random_baseline = false;
  bool no_temperature = false;
  bool use_pressure = false;
  bool no_pressure = false;
};

int run_finetune(const FinetuneArgs& a) {
  const Property property = property_from_string(a.property);
  io::LoadedEncoder loaded = io::load_encoder(a.encoder_path);

  std::shared_ptr<const model::EncoderSnapshot> encoder = loaded.encoder;
  if (a.random_baseline)
    encoder = model::random_encoder(loaded.encoder->config(), loaded.cations.size(),
                                    loaded.anions.size(), derive_seed(a.common.seed, 0x726e64ULL));

  data::LoadOptions lo;
  lo.cations = &loaded.cations;
  lo.anions = &loaded.anions;
  const data::Dataset ds = data::load_records(a.data_path, lo);
  for (const data::PropertyRecord& r : ds.records)
    if (r.property != property)
      throw std::runtime_error("finetune: data file contains rows for '" +
                               std::string(to_string(r.property)) + "', expected '" + a.property + "'");

  std::vector<model::FinetuneConfig> grid;
  for (std::size_t h : a.head_widths) {
    model::FinetuneConfig cfg = pipeline::default_finetune_config(property);
    cfg.head_width = h;
    if (a.no_temperature) cfg.uses_temperature = false;
    if (a.use_pressure) cfg.uses_pressure = true;
    if (a.no_pressure) cfg.uses_pressure = false;
    cfg.validate();
    grid.push_back(cfg);
  }
  const auto settings = settings_from(a.common.seed, a.train.batch, a.train.epochs,
                                      a.train.patience, a.train.folds, a.train.val_fraction);

  pipeline::FinetuneResult result = pipeline::finetune(encoder, ds.records, grid, settings);

  const fs::path out_dir(a.common.out_dir);
  fs::create_directories(out_dir);
  const std::string artifact =
      (out_dir / ("finetune_" + a.property + (a.random_baseline ? "_random_baseline" : "") +
                  ".ilnrs"))
          .string();
  io::save_finetune(result.model, loaded.cations, loaded.anions, artifact);
  {
    std::ofstream out(out_dir / "report_folds.csv");
    pipeline::write_fold_report_csv(out, result.grid);
  }
  const pipeline::MetricReport& best = result.grid[result.best_index].mean;
  std::ostringstream summary;
  summary << "finetune " << a.property << (a.random_baseline ? " (random frozen baseline)" : "")
          << "\n"
          << "encoder source: " << to_string(encoder->source_property()) << "\n"
          << "records: " << ds.records.size() << ", ILs: "
          << data::distinct_ils(ds.records).size() << "\n"
          << "best mean CV: MAE " << best.mae << ", R2 " << best.r2 << ", MAPE " << best.mape
          << "%\n"
          << "model artifact: " << artifact << "\n";
  write_text_file(out_dir / "summary.txt", summary.str());
  write_manifest(out_dir, "finetune",
                 json{{"encoder", a.encoder_path},
                      {"data", a.data_path},
                      {"property", a.property},
                      {"random_baseline", a.random_baseline},
                      {"settings", settings_json(settings)},
                      {"best_mean", metric_json(best)},
                      {"model_artifact", artifact}});
  std::cout << summary.str();
  return 0;
}

struct TransferArgs {
  CommonArgs common;
  TrainArgsCommon train;
  std::vector<std::string> encoder_paths;
  std::vector<std::string> data_paths;
};

int run_transfer_matrix(const TransferArgs& a) {
  if (a.encoder_paths.empty()) throw std::runtime_error("transfer-matrix: no encoders given");
  if (a.data_paths.empty()) throw std::runtime_error("transfer-matrix: no data files given");

  std::map<Property, std::shared_ptr<const model::EncoderSnapshot>> encoders;
  std::optional<io::LoadedEncoder> first;
  for (const std::string& path : a.encoder_paths) {
    io::LoadedEncoder loaded = io::load_encoder(path);
    if (!first) {
      first.emplace(std::move(loaded));
      encoders[first->encoder->source_property()] = first->encoder;
      continue;
    }
    if (loaded.cations.fingerprint() != first->cations.fingerprint() ||
        loaded.anions.fingerprint() != first->anions.fingerprint())
      throw std::runtime_error("transfer-matrix: encoder '" + path +
                               "' was trained on a different ion vocabulary");
    encoders[loaded.encoder->source_property()] = loaded.encoder;
  }

  data::LoadOptions lo;
  lo.cations = &first->cations;
  lo.anions = &first->anions;
  std::map<Property, std::vector<data::PropertyRecord>> experimental;
  for (const std::string& path : a.data_paths) {
    data::Dataset ds = data::load_records(path, lo);
    if (ds.records.empty()) throw std::runtime_error("transfer-matrix: '" + path + "' is empty");
    const Property p = ds.records.front().property;
    for (const data::PropertyRecord& r : ds.records)
      if (r.property != p)
        throw std::runtime_error("transfer-matrix: '" + path + "' mixes properties");
    experimental[p] = std::move(ds.records);
  }

  const auto settings = settings_from(a.common.seed, a.train.batch, a.train.epochs,
                                      a.train.patience, a.train.folds, a.train.val_fraction);
  const std::vector<pipeline::TransferCell> cells =
      pipeline::transfer_matrix(encoders, experimental, settings);

  const fs::path out_dir(a.common.out_dir);
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "transfer_matrix.csv");
    out << "source,target,within_property,fold,r2,mae,mape,n_records,n_ils\n";
    char buf[256];
    for (const pipeline::TransferCell& c : cells) {
      for (std::size_t f = 0; f < c.fold_metrics.size(); ++f) {
        const pipeline::MetricReport& m = c.fold_metrics[f];
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%zu,%.6f,%.6g,%.4f,%zu,%zu\n",
                      to_string(c.source), to_string(c.target), c.within_property ? 1 : 0, f, m.r2,
                      m.mae, m.mape, m.n_records, m.n_ils);
        out << buf;
      }
      std::snprintf(buf, sizeof(buf), "%s,%s,%d,mean,%.6f,%.6g,%.4f,%zu,%zu\n", to_string(c.source),
                    to_string(c.target), c.within_property ? 1 : 0, c.mean.r2, c.mean.mae,
                    c.mean.mape, c.mean.n_records, c.mean.n_ils);
      out << buf;
    }
  }
  std::ostringstream summary;
  summary << "transfer matrix: " << encoders.size() << " sources x " << experimental.size()
          << " targets\n";
  for (const pipeline::TransferCell& c : cells)
    summary << to_string(c.source) << " -> " << to_string(c.target)
            << (c.within_property ? " [within]" : "") << ": mean MAE " << c.mean.mae << ", R2 "
            << c.mean.r2 << "\n";
  write_text_file(out_dir / "summary.txt", summary.str());
  write_manifest(out_dir, "transfer-matrix",
                 json{{"encoders", a.encoder_paths},
                      {"data", a.data_paths},
                      {"settings", settings_json(settings)}});
  std::cout << summary.str();
  return 0;
}

struct SizeSweepArgs {
  CommonArgs common;
  TrainArgsCommon train;
  int cations = 200;
  int anions = 60;
  int experimental_ils = 150;
  std::vector<int> fractions = {1, 5, 10, 20, 35, 50};
  std::string pretrain_property = "density";
};

int run_size_sweep(const SizeSweepArgs& a) {
  oracle::OracleConfig cfg;
  cfg.seed = a.common.seed;
  oracle::SamplingPlan plan;
  plan.num_cations = a.cations;
  plan.num_anions = a.anions;
  plan.experimental_ils_per_property = a.experimental_ils;

  const oracle::Oracle oracle(cfg, a.cations, a.anions);
  const auto settings = settings_from(a.common.seed, a.train.batch, a.train.epochs,
                                      a.train.patience, a.train.folds, a.train.val_fraction);
  const Property property = property_from_string(a.pretrain_property);

  const std::vector<pipeline::SizeSweepEntry> entries =
      pipeline::size_sweep(oracle, plan, a.fractions, property, settings, settings);

  const fs::path out_dir(a.common.out_dir);
  fs::create_directories(out_dir);
  std::ostringstream summary;
  {
    std::ofstream out(out_dir / "size_sweep.csv");
    out << "anions_per_cation,stage,property,r2,mae,mape,n_records,n_ils\n";
    char buf[256];
    for (const pipeline::SizeSweepEntry& e : entries) {
      const pipeline::MetricReport& pm = e.pretrain_holdout;
      std::snprintf(buf, sizeof(buf), "%d,pretrain,%s,%.6f,%.6g,%.4f,%zu,%zu\n",
                    e.anions_per_cation, a.pretrain_property.c_str(), pm.r2, pm.mae, pm.mape,
                    pm.n_records, pm.n_ils);
      out << buf;
      summary << e.anions_per_cation << " anions/cation: pretrain MAE " << pm.mae << " (R2 "
              << pm.r2 << ")\n";
      for (const auto& [p, m] : e.finetune) {
        std::snprintf(buf, sizeof(buf), "%d,finetune,%s,%.6f,%.6g,%.4f,%zu,%zu\n",
                      e.anions_per_cation, to_string(p), m.r2, m.mae, m.mape, m.n_records, m.n_ils);
        out << buf;
        summary << "  finetune " << to_string(p) << ": MAE " << m.mae << " (R2 " << m.r2 << ")\n";
      }
    }
  }
  write_text_file(out_dir / "summary.txt", summary.str());
  write_manifest(out_dir, "size-sweep",
                 json{{"cations", a.cations},
                      {"anions", a.anions},
                      {"experimental_ils", a.experimental_ils},
                      {"fractions", a.fractions},
                      {"pretrain_property", a.pretrain_property},
                      {"settings", settings_json(settings)}});
  std::cout << summary.str();
  return 0;
}

struct PredictArgs {
  std::string model_path;
  std::string cation;
  std::string anion;
  double temperature = 298.15;
  double pressure = 1.0;
  std::string property;
};

int run_predict(const PredictArgs& a) {
  io::LoadedFinetune loaded = io::load_finetune(a.model_path);
  const model::FinetuneModel& m = *loaded.model;
  if (!a.property.empty() && property_from_string(a.property) != m.config().property)
    throw std::runtime_error("model artifact predicts '" +
                             std::string(to_string(m.config().property)) + "', not '" + a.property +
                             "'");
  const int cation = resolve_ion_or_suggest(loaded.cations, a.cation);
  const int anion = resolve_ion_or_suggest(loaded.anions, a.anion);

  const std::vector<double> value =
      m.predict(std::span(&cation, 1), std::span(&anion, 1), std::span(&a.temperature, 1),
                std::span(&a.pressure, 1));
  std::cout << to_string(m.config().property) << "(" << a.cation << ", " << a.anion;
  if (m.config().uses_temperature) std::cout << ", T=" << a.temperature << " K";
  if (m.config().uses_pressure) std::cout << ", P=" << a.pressure << " bar";
  std::cout << ") = " << value[0] << "\n";
  return 0;
}

struct FullSpaceArgs {
  CommonArgs common;
  std::vector<std::string> model_paths;
  double temperature = 298.15;
  double pressure = 1.0;
};

int run_full_space(const FullSpaceArgs& a) {
  if (a.model_paths.empty()) throw std::runtime_error("full-space: no models given");
  std::vector<io::LoadedFinetune> loaded;
  loaded.reserve(a.model_paths.size());
  std::map<Property, const model::FinetuneModel*> models;
  for (const std::string& path : a.model_paths) {
    loaded.push_back(io::load_finetune(path));
    if (loaded.size() > 1 &&
        (loaded.back().cations.fingerprint() != loaded.front().cations.fingerprint() ||
         loaded.back().anions.fingerprint() != loaded.front().anions.fingerprint()))
      throw std::runtime_error("full-space: '" + path + "' uses a different ion vocabulary");
    models[loaded.back().model->config().property] = &*loaded.back().model;
  }

  const fs::path out_dir(a.common.out_dir);
  fs::create_directories(out_dir);
  const fs::path csv_path = out_dir / "full_space.csv";
  std::size_t rows = 0;
  {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write '" + csv_path.string() + "'");
    rows = pipeline::full_space_predict(models, loaded.front().cations, loaded.front().anions,
                                        a.temperature, a.pressure, out);
  }
  write_manifest(out_dir, "full-space",
                 json{{"models", a.model_paths},
                      {"temperature_K", a.temperature},
                      {"pressure_bar", a.pressure},
                      {"rows", rows},
                      {"output", csv_path.string()}});
  std::cout << "wrote " << rows << " rows to " << csv_path.string() << "\n";
  return 0;
}

struct AuditArgs {
  CommonArgs common;
  std::string density_path;
  std::string viscosity_path;
  std::string surface_tension_path;
  double temperature = 298.15;
  double pressure = 1.0;
  int max_ils = 0;  // 0: the whole universe
};

int run_audit(const AuditArgs& a) {
  io::LoadedFinetune density = io::load_finetune(a.density_path);
  io::LoadedFinetune viscosity = io::load_finetune(a.viscosity_path);
  io::LoadedFinetune surface = io::load_finetune(a.surface_tension_path);
  for (const io::LoadedFinetune* l : {&viscosity, &surface})
    if (l->cations.fingerprint() != density.cations.fingerprint() ||
        l->anions.fingerprint() != density.anions.fingerprint())
      throw std::runtime_error("audit: models use different ion vocabularies");

  const std::size_t vc = density.cations.size(), va = density.anions.size();
  std::size_t n = vc * va;
  if (a.max_ils > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(a.max_ils));

  std::vector<int> cation_ids(n), anion_ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    cation_ids[i] = static_cast<int>(i / va);
    anion_ids[i] = static_cast<int>(i % va);
  }
  const std::vector<double> temps(n, a.temperature), pressures(n, a.pressure);
  const std::vector<double> rho = density.model->predict(cation_ids, anion_ids, temps, pressures);
  const std::vector<double> ln_mu =
      viscosity.model->predict(cation_ids, anion_ids, temps, pressures);
  const std::vector<double> sigma = surface.model->predict(cation_ids, anion_ids, temps, pressures);

  const pipeline::CorrelationFit fit = pipeline::correlation_audit(rho, ln_mu, sigma);

  const fs::path out_dir(a.common.out_dir);
  fs::create_directories(out_dir);
  json result{{"k3", fit.k3},
              {"mu_exponent", fit.mu_exponent},
              {"rho_exponent", fit.rho_exponent},
              {"fit_r2", fit.r2},
              {"n_ils", n},
              {"temperature_K", a.temperature},
              {"pressure_bar", a.pressure}};
  write_text_file(out_dir / "audit.json", result.dump(2) + "\n");
  write_manifest(out_dir, "audit",
                 json{{"density", a.density_path},
                      {"viscosity", a.viscosity_path},
                      {"surface_tension", a.surface_tension_path},
                      {"result", result}});
  std::cout << "sigma = k3 * mu^b * rho^c fit: k3 = " << fit.k3 << ", b = " << fit.mu_exponent
            << ", c = " << fit.rho_exponent << ", R2 = " << fit.r2 << "\n";
  return 0;
}

struct EvaluateArgs {
  CommonArgs common;
  std::string model_path;
  std::string data_path;
};

int run_evaluate(const EvaluateArgs& a) {
  io::LoadedFinetune loaded = io::load_finetune(a.model_path);
  data::LoadOptions lo;
  lo.cations = &loaded.cations;
  lo.anions = &loaded.anions;
  const data::Dataset ds = data::load_records(a.data_path, lo);
  for (const data::PropertyRecord& r : ds.records)
    if (r.property != loaded.model->config().property)
      throw std::runtime_error("evaluate: data property does not match the model artifact");

  const pipeline::MetricReport m = pipeline::evaluate_finetune(*loaded.model, ds.records);
  const fs::path out_dir(a.common.out_dir);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "evaluation.json", metric_json(m).dump(2) + "\n");
  write_manifest(out_dir, "evaluate",
                 json{{"model", a.model_path}, {"data", a.data_path}, {"metrics", metric_json(m)}});
  std::cout << "R2 " << m.r2 << ", MAE " << m.mae << ", MAPE " << m.mape << "% over "
            << m.n_records << " records / " << m.n_ils << " ILs\n";
  return 0;
}

void apply_take_last(CLI::App* cmd) {
  for (CLI::Option* opt : cmd->get_options())
    if (opt->get_expected_min() == 1 && opt->get_expected_max() == 1)
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ionic-liquid property prediction via a pre-trained neural recommender"};
  app.require_subcommand(1);

  GenSynthArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic benchmark universe");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--cations", gen.cations, "Cation count");
  gen_cmd->add_option("--anions", gen.anions, "Anion count");
  gen_cmd->add_option("--anions-per-cation", gen.anions_per_cation, "Pre-train sampling level");
  gen_cmd->add_option("--experimental-ils", gen.experimental_ils, "Experimental ILs per property");
  gen_cmd->add_option("--outlier-fraction", gen.outlier_fraction, "ln-viscosity outlier fraction");
  gen_cmd->add_option("--outlier-magnitude", gen.outlier_magnitude, "ln-viscosity outlier ceiling");

  PretrainArgs pre;
  CLI::App* pre_cmd = app.add_subcommand("pretrain", "Pre-train a property recommender");
  add_common(pre_cmd, pre.common);
  add_train_options(pre_cmd, pre.train);
  pre_cmd->add_option("--data", pre.data_path, "Pre-training records CSV")->required();
  pre_cmd->add_option("--ions", pre.ions_path, "Ion vocabulary CSV")->required();
  pre_cmd->add_option("--property", pre.property, "Property tag");
  pre_cmd->add_option("--branch-widths", pre.branch_widths, "Branch width grid");
  pre_cmd->add_option("--blocks", pre.blocks, "Residual blocks per branch grid");
  pre_cmd->add_option("--head-widths", pre.head_widths, "Head width grid");

  FinetuneArgs fin;
  CLI::App* fin_cmd = app.add_subcommand("finetune", "Fine-tune on sparse experimental data");
  add_common(fin_cmd, fin.common);
  add_train_options(fin_cmd, fin.train);
  fin_cmd->add_option("--encoder", fin.encoder_path, "Encoder artifact")->required();
  fin_cmd->add_option("--data", fin.data_path, "Experimental records CSV")->required();
  fin_cmd->add_option("--property", fin.property, "Target property tag");
  fin_cmd->add_option("--head-widths", fin.head_widths, "Head width grid");
  fin_cmd->add_flag("--random-baseline", fin.random_baseline,
                    "Replace the encoder with a random frozen one of identical architecture");
  fin_cmd->add_flag("--no-temperature", fin.no_temperature, "Drop the temperature input");
  fin_cmd->add_flag("--use-pressure", fin.use_pressure, "Add the pressure input");
  fin_cmd->add_flag("--no-pressure", fin.no_pressure, "Drop the pressure input");

  TransferArgs tra;
  CLI::App* tra_cmd = app.add_subcommand("transfer-matrix",
                                         "Fine-tune every target on every encoder");
  add_common(tra_cmd, tra.common);
  add_train_options(tra_cmd, tra.train);
  tra_cmd->add_option("--encoder", tra.encoder_paths, "Encoder artifact (repeatable)")->required();
  tra_cmd->add_option("--data", tra.data_paths, "Experimental records CSV (repeatable)")->required();

  SizeSweepArgs swe;
  CLI::App* swe_cmd = app.add_subcommand("size-sweep",
                                         "Sweep the pre-training sampling level");
  add_common(swe_cmd, swe.common);
  add_train_options(swe_cmd, swe.train);
  swe_cmd->add_option("--cations", swe.cations, "Cation count");
  swe_cmd->add_option("--anions", swe.anions, "Anion count");
  swe_cmd->add_option("--experimental-ils", swe.experimental_ils, "Experimental ILs per property");
  swe_cmd->add_option("--fractions", swe.fractions, "Anions-per-cation levels");
  swe_cmd->add_option("--pretrain-property", swe.pretrain_property, "Source property");

  PredictArgs prd;
  CLI::App* prd_cmd = app.add_subcommand("predict", "Predict one property for one IL");
  prd_cmd->add_option("--model", prd.model_path, "Fine-tuned model artifact")->required();
  prd_cmd->add_option("--cation", prd.cation, "Cation name")->required();
  prd_cmd->add_option("--anion", prd.anion, "Anion name")->required();
  prd_cmd->add_option("--temperature", prd.temperature, "Temperature in K");
  prd_cmd->add_option("--pressure", prd.pressure, "Pressure in bar");
  prd_cmd->add_option("--property", prd.property, "Expected property tag (checked)");

  FullSpaceArgs ful;
  CLI::App* ful_cmd = app.add_subcommand("full-space",
                                         "Predict over the whole cation-anion space");
  add_common(ful_cmd, ful.common);
  ful_cmd->add_option("--model", ful.model_paths, "Fine-tuned model artifact (repeatable)")
      ->required();
  ful_cmd->add_option("--temperature", ful.temperature, "Temperature in K");
  ful_cmd->add_option("--pressure", ful.pressure, "Pressure in bar");

  AuditArgs aud;
  CLI::App* aud_cmd = app.add_subcommand("audit",
                                         "Fit sigma = k3 * mu^b * rho^c over model predictions");
  add_common(aud_cmd, aud.common);
  aud_cmd->add_option("--density", aud.density_path, "Density model artifact")->required();
  aud_cmd->add_option("--viscosity", aud.viscosity_path, "Viscosity model artifact")->required();
  aud_cmd->add_option("--surface-tension", aud.surface_tension_path,
                      "Surface tension model artifact")
      ->required();
  aud_cmd->add_option("--temperature", aud.temperature, "Temperature in K");
  aud_cmd->add_option("--pressure", aud.pressure, "Pressure in bar");
  aud_cmd->add_option("--max-ils", aud.max_ils, "Cap on audited ILs (0 = all)");

  EvaluateArgs eva;
  CLI::App* eva_cmd = app.add_subcommand("evaluate", "Metrics of a model on a records CSV");
  add_common(eva_cmd, eva.common);
  eva_cmd->add_option("--model", eva.model_path, "Fine-tuned model artifact")->required();
  eva_cmd->add_option("--data", eva.data_path, "Records CSV")->required();

  for (CLI::App* cmd : app.get_subcommands({})) apply_take_last(cmd);

  // Two-pass parse: --config contributes tokens that explicit flags override.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (!args.empty()) {
      CLI::App* cmd = app.get_subcommand_no_throw(args.front());
      for (std::size_t i = 1; cmd != nullptr && i + 1 < args.size() + 1; ++i) {
        if (i < args.size() && args[i] == "--config") {
          if (i + 1 >= args.size()) throw std::runtime_error("--config needs a path");
          const std::vector<std::string> injected = config_tokens(cmd, args[i + 1]);
          args.insert(args.begin() + 1, injected.begin(), injected.end());
          break;
        }
      }
    }
    std::vector<const char*> cargs;
    cargs.push_back("ilnrs");
    for (const std::string& s : args) cargs.push_back(s.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_synth(gen);
    if (pre_cmd->parsed()) return run_pretrain(pre);
    if (fin_cmd->parsed()) return run_finetune(fin);
    if (tra_cmd->parsed()) return run_transfer_matrix(tra);
    if (swe_cmd->parsed()) return run_size_sweep(swe);
    if (prd_cmd->parsed()) return run_predict(prd);
    if (ful_cmd->parsed()) return run_full_space(ful);
    if (aud_cmd->parsed()) return run_audit(aud);
    if (eva_cmd->parsed()) return run_evaluate(eva);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
