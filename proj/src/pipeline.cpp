#include "ilnrs/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "ilnrs/rng.hpp"

namespace ilnrs::pipeline {

namespace {

using data::ILKey;
using data::PropertyRecord;

// All pipeline entry points canonicalize record order first, so results are
// invariant to how the input file happened to be sorted.
std::vector<PropertyRecord> canonical(std::span<const PropertyRecord> records) {
  std::vector<PropertyRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(), [](const PropertyRecord& a, const PropertyRecord& b) {
    return std::tie(a.il.cation_id, a.il.anion_id, a.property, a.temperature_k, a.pressure_bar,
                    a.value) < std::tie(b.il.cation_id, b.il.anion_id, b.property, b.temperature_k,
                                        b.pressure_bar, b.value);
  });
  return sorted;
}

std::vector<ILKey> sorted_distinct_ils(std::span<const PropertyRecord> records) {
  std::vector<ILKey> ils = data::distinct_ils(records);
  std::sort(ils.begin(), ils.end(), [](const ILKey& a, const ILKey& b) {
    return a.cation_id != b.cation_id ? a.cation_id < b.cation_id : a.anion_id < b.anion_id;
  });
  return ils;
}

// IL-grouped holdout: first `fraction` of the seeded shuffle becomes the
// held-out set. Always leaves at least one IL on each side.
std::pair<std::vector<PropertyRecord>, std::vector<PropertyRecord>> split_by_il(
    std::span<const PropertyRecord> records, double fraction, std::uint64_t seed) {
  std::vector<ILKey> ils = sorted_distinct_ils(records);
  if (ils.size() < 2)
    throw std::invalid_argument("split_by_il: need at least two distinct ILs");
  Rng rng(derive_seed(seed, 0x73706c69ULL));
  rng.shuffle(ils);
  std::size_t n_held = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(ils.size())));
  n_held = std::clamp<std::size_t>(n_held, 1, ils.size() - 1);
  data::ILKeySet held(ils.begin(), ils.begin() + static_cast<std::ptrdiff_t>(n_held));
  std::pair<std::vector<PropertyRecord>, std::vector<PropertyRecord>> out;
  for (const PropertyRecord& r : records)
    (held.count(r.il) ? out.second : out.first).push_back(r);
  return out;  // {train, held-out}
}

struct IdTargetArrays {
  std::vector<int> cations;
  std::vector<int> anions;
  std::vector<double> values;
  std::vector<double> temps;
  std::vector<double> pressures;
};

IdTargetArrays extract(std::span<const PropertyRecord> records) {
  IdTargetArrays a;
  a.cations.reserve(records.size());
  a.anions.reserve(records.size());
  a.values.reserve(records.size());
  a.temps.reserve(records.size());
  a.pressures.reserve(records.size());
  for (const PropertyRecord& r : records) {
    a.cations.push_back(r.il.cation_id);
    a.anions.push_back(r.il.anion_id);
    a.values.push_back(r.value);
    a.temps.push_back(r.temperature_k);
    a.pressures.push_back(r.pressure_bar);
  }
  return a;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, 0x65706f63ULL, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(perm);
  return perm;
}

// Tukey-style fences (4.5 IQR beyond the quartiles) fit on the training slice.
// Simulated property sets occasionally carry gross artifacts - the paper-style
// ln-viscosity rows near 80 - which would otherwise dominate the MSE; honest
// data stays untouched since the fences sit near +-6 sigma.
struct WinsorFences {
  double lo;
  double hi;

  bool inside(double v) const { return v >= lo && v <= hi; }
};

WinsorFences fit_winsor_fences(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&sorted](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < sorted.size() ? sorted[i] * (1.0 - frac) + sorted[i + 1] * frac : sorted[i];
  };
  const double q1 = quantile(0.25), q3 = quantile(0.75);
  const double iqr = q3 - q1;
  return WinsorFences{q1 - 4.5 * iqr, q3 + 4.5 * iqr};
}

MetricReport mean_of(std::span<const MetricReport> folds) {
  MetricReport mean;
  for (const MetricReport& m : folds) {
    mean.r2 += m.r2;
    mean.mae += m.mae;
    mean.mape += m.mape;
    mean.n_records += m.n_records;
    mean.n_ils += m.n_ils;
  }
  const double k = static_cast<double>(folds.size());
  mean.r2 /= k;
  mean.mae /= k;
  mean.mape /= k;
  return mean;
}

std::size_t pick_best(std::span<const MetricReport> means) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < means.size(); ++i) {
    if (means[i].mae < means[best].mae ||
        (means[i].mae == means[best].mae && means[i].r2 > means[best].r2))
      best = i;
  }
  return best;
}

void require_single_property(std::span<const PropertyRecord> records, const char* what) {
  for (const PropertyRecord& r : records)
    if (r.property != records.front().property)
      throw std::invalid_argument(std::string(what) + ": records mix multiple properties");
}

}  // namespace

void TrainSettings::validate() const {
  if (batch_size == 0) throw std::invalid_argument("TrainSettings: batch_size must be > 0");
  if (max_epochs < 1) throw std::invalid_argument("TrainSettings: max_epochs must be >= 1");
  if (patience < 1 || patience >= max_epochs)
    throw std::invalid_argument("TrainSettings: patience must lie in [1, max_epochs)");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("TrainSettings: validation_fraction must lie in (0, 1)");
  if (cv_folds < 2) throw std::invalid_argument("TrainSettings: cv_folds must be >= 2");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    throw std::invalid_argument("TrainSettings: lr_decay_factor must lie in (0, 1]");
}

// ---- metrics ----------------------------------------------------------------

MetricReport metrics(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size())
    throw std::invalid_argument("metrics: arrays differ in length");
  if (predicted.empty()) throw std::invalid_argument("metrics: empty arrays");

  const double n = static_cast<double>(target.size());
  double abs_err = 0.0, pct_err = 0.0, target_mean = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    abs_err += std::fabs(predicted[i] - target[i]);
    target_mean += target[i];
  }
  target_mean /= n;

  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double e = predicted[i] - target[i];
    ss_res += e * e;
    ss_tot += (target[i] - target_mean) * (target[i] - target_mean);
  }
  if (ss_tot == 0.0)
    throw std::domain_error("metrics: R^2 undefined for a zero-variance target");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0)
      throw std::domain_error("metrics: MAPE undefined for a zero target value");
    pct_err += std::fabs((predicted[i] - target[i]) / target[i]);
  }

  MetricReport m;
  m.mae = abs_err / n;
  m.mape = 100.0 * pct_err / n;
  m.r2 = 1.0 - ss_res / ss_tot;
  m.n_records = target.size();
  return m;
}

model::PretrainConfig default_pretrain_config(Property p) {
  model::PretrainConfig cfg;
  cfg.property = p;
  return cfg;
}

model::FinetuneConfig default_finetune_config(Property p) {
  model::FinetuneConfig cfg;
  cfg.property = p;
  cfg.uses_temperature = !is_condition_free(p);
  cfg.uses_pressure = p == Property::density;
  return cfg;
}

// ---- pre-training: one run -----------------------------------------------------

TrainedPretrain train_pretrain_once(std::span<const PropertyRecord> raw_records,
                                    std::size_t num_cations, std::size_t num_anions,
                                    const model::PretrainConfig& config,
                                    const TrainSettings& settings, std::uint64_t seed) {
  settings.validate();
  config.validate();
  if (raw_records.empty()) throw std::invalid_argument("train_pretrain_once: no records");
  require_single_property(raw_records, "train_pretrain_once");

  const std::vector<PropertyRecord> records = canonical(raw_records);

  // IL-grouped early-stop slice.
  std::vector<ILKey> ils = sorted_distinct_ils(records);
  if (ils.size() < 2)
    throw std::invalid_argument("train_pretrain_once: need at least two distinct ILs");
  Rng val_rng(derive_seed(seed, 0x76616cULL));
  val_rng.shuffle(ils);
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(settings.validation_fraction * static_cast<double>(ils.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, ils.size() - 1);
  data::ILKeySet val_ils(ils.begin(), ils.begin() + static_cast<std::ptrdiff_t>(n_val));

  std::vector<PropertyRecord> fit, val;
  for (const PropertyRecord& r : records) (val_ils.count(r.il) ? val : fit).push_back(r);

  {
    // Trim artifact rows before anything else sees them.
    std::vector<double> fit_values;
    fit_values.reserve(fit.size());
    for (const PropertyRecord& r : fit) fit_values.push_back(r.value);
    const WinsorFences fences = fit_winsor_fences(fit_values);
    auto trimmed = [&fences](const PropertyRecord& r) { return !fences.inside(r.value); };
    fit.erase(std::remove_if(fit.begin(), fit.end(), trimmed), fit.end());
    val.erase(std::remove_if(val.begin(), val.end(), trimmed), val.end());
    if (fit.empty() || val.empty())
      throw std::invalid_argument("train_pretrain_once: outlier trimming left an empty split");
  }

  IdTargetArrays fit_a = extract(fit), val_a = extract(val);
  TrainedPretrain out{model::PretrainModel::build(config, num_cations, num_anions,
                                                  derive_seed(seed, 0x696e69ULL)),
                      data::fit_scaler(fit_a.values), 0.0, 0};

  std::vector<double> fit_scaled(fit_a.values.size()), val_scaled(val_a.values.size());
  for (std::size_t i = 0; i < fit_scaled.size(); ++i)
    fit_scaled[i] = out.target_scaler.transform(fit_a.values[i]);
  for (std::size_t i = 0; i < val_scaled.size(); ++i)
    val_scaled[i] = out.target_scaler.transform(val_a.values[i]);

  nn::AdamConfig adam{config.learning_rate};
  auto params = out.model.parameters();
  std::vector<Matrix> best_values;
  double best_loss = std::numeric_limits<double>::infinity();
  int bad_epochs = 0, stalled = 0;
  const int decay_patience = std::max(2, settings.patience / 3);

  auto validation_loss = [&]() {
    double acc = 0.0;
    const std::size_t chunk = 4096;
    for (std::size_t at = 0; at < val_a.cations.size(); at += chunk) {
      const std::size_t n = std::min(chunk, val_a.cations.size() - at);
      Matrix pred = out.model.predict({val_a.cations.data() + at, n}, {val_a.anions.data() + at, n});
      for (std::size_t i = 0; i < n; ++i) {
        const double e = pred(i, 0) - val_scaled[at + i];
        acc += e * e;
      }
    }
    return acc / static_cast<double>(val_a.cations.size());
  };

  for (int epoch = 0; epoch < settings.max_epochs; ++epoch) {
    const std::vector<std::size_t> perm = epoch_permutation(fit_a.cations.size(), seed, epoch);
    for (std::size_t at = 0; at < perm.size(); at += settings.batch_size) {
      const std::size_t n = std::min(settings.batch_size, perm.size() - at);
      std::vector<int> bc(n), ba(n);
      Matrix target(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = perm[at + i];
        bc[i] = fit_a.cations[idx];
        ba[i] = fit_a.anions[idx];
        target(i, 0) = fit_scaled[idx];
      }
      Matrix pred = out.model.forward(bc, ba, nn::Mode::train);
      nn::LossGrad lg = nn::mse_loss_grad(pred, target);
      out.model.backward(lg.grad);
      out.model.adam_step_all(adam);
    }
    out.epochs_run = epoch + 1;

    const double vl = validation_loss();
    if (vl < best_loss) {
      best_loss = vl;
      best_values.clear();
      for (const nn::Parameter* p : params) best_values.push_back(p->value);
      bad_epochs = 0;
      stalled = 0;
    } else {
      if (++bad_epochs >= settings.patience) break;
      if (settings.lr_decay_factor < 1.0 && ++stalled >= decay_patience) {
        adam.learning_rate *= settings.lr_decay_factor;
        stalled = 0;
      }
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  out.best_validation_loss = best_loss;
  return out;
}

MetricReport evaluate_pretrain(const model::PretrainModel& model, const data::Scaler& scaler,
                               std::span<const PropertyRecord> records) {
  if (records.empty()) throw std::invalid_argument("evaluate_pretrain: no records");
  IdTargetArrays a = extract(records);
  std::vector<double> pred(a.values.size());
  const std::size_t chunk = 4096;
  for (std::size_t at = 0; at < pred.size(); at += chunk) {
    const std::size_t n = std::min(chunk, pred.size() - at);
    Matrix scaled = model.predict({a.cations.data() + at, n}, {a.anions.data() + at, n});
    for (std::size_t i = 0; i < n; ++i) pred[at + i] = scaler.inverse_transform(scaled(i, 0));
  }
  MetricReport m = metrics(pred, a.values);
  m.n_ils = data::distinct_ils(records).size();
  return m;
}

// ---- fine-tuning: one run ---------------------------------------------------------

TrainedFinetune train_finetune_once(std::shared_ptr<const model::EncoderSnapshot> encoder,
                                    std::span<const PropertyRecord> raw_records,
                                    const model::FinetuneConfig& config,
                                    const TrainSettings& settings, std::uint64_t seed) {
  settings.validate();
  config.validate();
  if (!encoder) throw std::invalid_argument("train_finetune_once: encoder is required");
  if (raw_records.empty()) throw std::invalid_argument("train_finetune_once: no records");
  require_single_property(raw_records, "train_finetune_once");
  if (raw_records.front().property != config.property)
    throw std::invalid_argument("train_finetune_once: records do not match the configured property");

  const std::vector<PropertyRecord> records = canonical(raw_records);

  std::vector<ILKey> ils = sorted_distinct_ils(records);
  if (ils.size() < 2)
    throw std::invalid_argument("train_finetune_once: need at least two distinct ILs");
  Rng val_rng(derive_seed(seed, 0x76616cULL));
  val_rng.shuffle(ils);
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(settings.validation_fraction * static_cast<double>(ils.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, ils.size() - 1);
  data::ILKeySet val_ils(ils.begin(), ils.begin() + static_cast<std::ptrdiff_t>(n_val));

  std::vector<PropertyRecord> fit, val;
  for (const PropertyRecord& r : records) (val_ils.count(r.il) ? val : fit).push_back(r);

  IdTargetArrays fit_a = extract(fit), val_a = extract(val);

  TrainedFinetune out{
      model::FinetuneModel::build(encoder, config, derive_seed(seed, 0x696e69ULL)), 0.0, 0};
  out.model.target_scaler = data::fit_scaler(fit_a.values);
  if (config.uses_temperature)
    out.model.temperature_scaler = data::fit_condition_scaler(fit_a.temps);
  if (config.uses_pressure)
    out.model.pressure_scaler = data::fit_condition_scaler(fit_a.pressures);

  // The frozen encoder is dropout-free and constant, so features and the
  // assembled head inputs are computed exactly once.
  const Matrix fit_features = encoder->encode(fit_a.cations, fit_a.anions);
  out.model.fit_feature_scaler(fit_features);
  const Matrix fit_input = out.model.assemble_input(fit_features, fit_a.temps, fit_a.pressures);
  const Matrix val_input = out.model.assemble_input(
      encoder->encode(val_a.cations, val_a.anions), val_a.temps, val_a.pressures);

  std::vector<double> fit_scaled(fit_a.values.size()), val_scaled(val_a.values.size());
  for (std::size_t i = 0; i < fit_scaled.size(); ++i)
    fit_scaled[i] = out.model.target_scaler.transform(fit_a.values[i]);
  for (std::size_t i = 0; i < val_scaled.size(); ++i)
    val_scaled[i] = out.model.target_scaler.transform(val_a.values[i]);

  nn::AdamConfig adam{config.learning_rate};
  auto params = out.model.head_parameters();
  std::vector<Matrix> best_values;
  double best_loss = std::numeric_limits<double>::infinity();
  int bad_epochs = 0, stalled = 0;
  const int decay_patience = std::max(2, settings.patience / 3);

  auto validation_loss = [&]() {
    Matrix pred = out.model.head_apply(val_input);
    double acc = 0.0;
    for (std::size_t i = 0; i < val_scaled.size(); ++i) {
      const double e = pred(i, 0) - val_scaled[i];
      acc += e * e;
    }
    return acc / static_cast<double>(val_scaled.size());
  };

  for (int epoch = 0; epoch < settings.max_epochs; ++epoch) {
    const std::vector<std::size_t> perm = epoch_permutation(fit_scaled.size(), seed, epoch);
    for (std::size_t at = 0; at < perm.size(); at += settings.batch_size) {
      const std::size_t n = std::min(settings.batch_size, perm.size() - at);
      Matrix input(n, fit_input.cols);
      Matrix target(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = perm[at + i];
        std::copy_n(fit_input.row_ptr(idx), fit_input.cols, input.row_ptr(i));
        target(i, 0) = fit_scaled[idx];
      }
      Matrix pred = out.model.head_forward(input, nn::Mode::train);
      nn::LossGrad lg = nn::mse_loss_grad(pred, target);
      out.model.head_backward(lg.grad);
      out.model.adam_step_head(adam);
    }
    out.epochs_run = epoch + 1;

    const double vl = validation_loss();
    if (vl < best_loss) {
      best_loss = vl;
      best_values.clear();
      for (const nn::Parameter* p : params) best_values.push_back(p->value);
      bad_epochs = 0;
      stalled = 0;
    } else {
      if (++bad_epochs >= settings.patience) break;
      if (settings.lr_decay_factor < 1.0 && ++stalled >= decay_patience) {
        adam.learning_rate *= settings.lr_decay_factor;
        stalled = 0;
      }
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  out.best_validation_loss = best_loss;
  return out;
}

MetricReport evaluate_finetune(const model::FinetuneModel& model,
                               std::span<const PropertyRecord> records) {
  if (records.empty()) throw std::invalid_argument("evaluate_finetune: no records");
  IdTargetArrays a = extract(records);
  const std::vector<double> pred = model.predict(a.cations, a.anions, a.temps, a.pressures);
  MetricReport m = metrics(pred, a.values);
  m.n_ils = data::distinct_ils(records).size();
  return m;
}

// ---- grid search with IL-grouped CV -------------------------------------------------

namespace {

// Shared CV scaffolding: trains per (grid point, fold) in parallel, fills
// fold metrics, and reports the best grid index by mean MAE (R^2 tie-break).
template <typename Config, typename TrainEval>
std::size_t run_grid_cv(std::span<const Config> grid, const std::vector<PropertyRecord>& records,
                        const TrainSettings& settings, std::vector<GridEntry<Config>>& entries,
                        const TrainEval& train_eval) {
  const data::FoldPlan plan =
      data::kfold_by_il(records, settings.cv_folds, derive_seed(settings.seed, 0x6376ULL));

  std::vector<int> record_fold(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) record_fold[i] = plan.fold_of(records[i].il);

  entries.resize(grid.size());
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    entries[gi].config = grid[gi];
    entries[gi].fold_metrics.resize(static_cast<std::size_t>(settings.cv_folds));
  }

  const long total = static_cast<long>(grid.size()) * settings.cv_folds;
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic, 1)
  for (long job = 0; job < total; ++job) {
    bool skip = false;
#pragma omp critical(ilnrs_cv_failure)
    skip = failure != nullptr;
    if (skip) continue;
    try {
      const std::size_t gi = static_cast<std::size_t>(job) / settings.cv_folds;
      const int fold = static_cast<int>(job % settings.cv_folds);
      std::vector<PropertyRecord> train, test;
      for (std::size_t i = 0; i < records.size(); ++i)
        (record_fold[i] == fold ? test : train).push_back(records[i]);
      // Seed depends on the fold alone: identical grid points train
      // identically, and differing ones are compared on equal terms.
      entries[gi].fold_metrics[static_cast<std::size_t>(fold)] =
          train_eval(grid[gi], train, test,
                     derive_seed(settings.seed, 0x67726964ULL, static_cast<std::uint64_t>(fold)));
    } catch (...) {
#pragma omp critical(ilnrs_cv_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<MetricReport> means(entries.size());
  for (std::size_t gi = 0; gi < entries.size(); ++gi) {
    entries[gi].mean = mean_of(entries[gi].fold_metrics);
    means[gi] = entries[gi].mean;
  }
  return pick_best(means);
}

}  // namespace

PretrainResult pretrain(std::span<const PropertyRecord> raw_records, std::size_t num_cations,
                        std::size_t num_anions, std::span<const model::PretrainConfig> grid,
                        const TrainSettings& settings) {
  settings.validate();
  if (grid.empty()) throw std::invalid_argument("pretrain: empty config grid");
  if (raw_records.empty()) throw std::invalid_argument("pretrain: no records");
  require_single_property(raw_records, "pretrain");
  for (const PropertyRecord& r : raw_records)
    if (r.temperature_k != raw_records.front().temperature_k ||
        r.pressure_bar != raw_records.front().pressure_bar)
      throw std::invalid_argument("pretrain: records must share one fixed temperature and pressure");

  const std::vector<PropertyRecord> records = canonical(raw_records);

  std::vector<GridEntry<model::PretrainConfig>> entries;
  const std::size_t best = run_grid_cv<model::PretrainConfig>(
      grid, records, settings, entries,
      [&](const model::PretrainConfig& cfg, const std::vector<PropertyRecord>& train,
          const std::vector<PropertyRecord>& test, std::uint64_t seed) {
        TrainedPretrain tp =
            train_pretrain_once(train, num_cations, num_anions, cfg, settings, seed);
        return evaluate_pretrain(tp.model, tp.target_scaler, test);
      });

  TrainedPretrain final_fit = train_pretrain_once(records, num_cations, num_anions, grid[best],
                                                  settings, derive_seed(settings.seed, 0x66696eULL));
  return PretrainResult{std::move(final_fit.model), final_fit.target_scaler, std::move(entries),
                        best, final_fit.best_validation_loss};
}

FinetuneResult finetune(std::shared_ptr<const model::EncoderSnapshot> encoder,
                        std::span<const PropertyRecord> raw_records,
                        std::span<const model::FinetuneConfig> grid,
                        const TrainSettings& settings) {
  settings.validate();
  if (grid.empty()) throw std::invalid_argument("finetune: empty config grid");
  if (raw_records.empty()) throw std::invalid_argument("finetune: no records");

  const std::vector<PropertyRecord> records = canonical(raw_records);

  std::vector<GridEntry<model::FinetuneConfig>> entries;
  const std::size_t best = run_grid_cv<model::FinetuneConfig>(
      grid, records, settings, entries,
      [&](const model::FinetuneConfig& cfg, const std::vector<PropertyRecord>& train,
          const std::vector<PropertyRecord>& test, std::uint64_t seed) {
        TrainedFinetune tf = train_finetune_once(encoder, train, cfg, settings, seed);
        return evaluate_finetune(tf.model, test);
      });

  TrainedFinetune final_fit = train_finetune_once(encoder, records, grid[best], settings,
                                                  derive_seed(settings.seed, 0x66696eULL));
  return FinetuneResult{std::move(final_fit.model), std::move(entries), best,
                        final_fit.best_validation_loss};
}

// ---- transfer matrix ------------------------------------------------------------------

std::vector<TransferCell> transfer_matrix(
    const std::map<Property, std::shared_ptr<const model::EncoderSnapshot>>& encoders,
    const std::map<Property, std::vector<PropertyRecord>>& experimental,
    const TrainSettings& settings) {
  if (encoders.empty()) throw std::invalid_argument("transfer_matrix: no encoders");
  if (experimental.empty()) throw std::invalid_argument("transfer_matrix: no experimental data");

  std::vector<TransferCell> cells;
  for (const auto& [source, encoder] : encoders) {
    for (const auto& [target, records] : experimental) {
      const model::FinetuneConfig cfg = default_finetune_config(target);
      FinetuneResult result = finetune(encoder, records, std::span(&cfg, 1), settings);
      TransferCell cell;
      cell.source = source;
      cell.target = target;
      cell.within_property = source == target;
      cell.fold_metrics = std::move(result.grid[result.best_index].fold_metrics);
      cell.mean = result.grid[result.best_index].mean;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// ---- size sweep -----------------------------------------------------------------------

std::vector<SizeSweepEntry> size_sweep(const oracle::Oracle& oracle,
                                       const oracle::SamplingPlan& base_plan,
                                       std::span<const int> fractions, Property pretrain_property,
                                       const TrainSettings& pretrain_settings,
                                       const TrainSettings& finetune_settings) {
  pretrain_settings.validate();
  finetune_settings.validate();
  if (fractions.empty()) throw std::invalid_argument("size_sweep: no fractions");
  const std::uint64_t seed = pretrain_settings.seed;

  std::vector<SizeSweepEntry> out;
  for (int anions_per_cation : fractions) {
    oracle::SamplingPlan plan = base_plan;
    plan.anions_per_cation = anions_per_cation;
    const oracle::SynthDatasets ds = oracle.emit_datasets(plan);

    SizeSweepEntry entry;
    entry.anions_per_cation = anions_per_cation;

    const auto& pre_records = ds.pretrain.at(pretrain_property);
    auto [pre_train, pre_holdout] =
        split_by_il(pre_records, 0.2,
                    derive_seed(seed, 0x737765ULL, static_cast<std::uint64_t>(anions_per_cation)));
    TrainedPretrain tp = train_pretrain_once(
        pre_train, static_cast<std::size_t>(oracle.num_cations()),
        static_cast<std::size_t>(oracle.num_anions()), default_pretrain_config(pretrain_property),
        pretrain_settings,
        derive_seed(seed, 0x737770ULL, static_cast<std::uint64_t>(anions_per_cation)));
    entry.pretrain_holdout = evaluate_pretrain(tp.model, tp.target_scaler, pre_holdout);

    auto encoder = std::make_shared<const model::EncoderSnapshot>(tp.model.export_encoder());
    for (Property target : kAllProperties) {
      const auto& records = ds.experimental.at(target);
      // The split seed depends only on the target, so every fraction is
      // evaluated on the identical held-out set.
      auto [ft_train, ft_holdout] = split_by_il(
          records, 0.2, derive_seed(seed, 0x737766ULL, oracle::property_index(target)));
      TrainedFinetune tf = train_finetune_once(
          encoder, ft_train, default_finetune_config(target), finetune_settings,
          derive_seed(seed, 0x737767ULL, static_cast<std::uint64_t>(anions_per_cation),
                      oracle::property_index(target)));
      entry.finetune.emplace(target, evaluate_finetune(tf.model, ft_holdout));
    }
    out.push_back(std::move(entry));
  }
  return out;
}

// ---- correlation audit ------------------------------------------------------------------

CorrelationFit correlation_audit(std::span<const double> density,
                                 std::span<const double> ln_viscosity,
                                 std::span<const double> surface_tension) {
  const std::size_t n = density.size();
  if (ln_viscosity.size() != n || surface_tension.size() != n)
    throw std::invalid_argument("correlation_audit: arrays differ in length");
  if (n < 3) throw std::invalid_argument("correlation_audit: need at least 3 points");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(density[i] > 0.0))
      throw std::domain_error("correlation_audit: non-positive density");
    if (!(surface_tension[i] > 0.0))
      throw std::domain_error("correlation_audit: non-positive surface tension");
  }

  // Normal equations for y = b0 + b1 ln(mu) + b2 ln(rho), in extended precision.
  long double xtx[3][3] = {};
  long double xty[3] = {};
  long double y_sum = 0.0L, yy_sum = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const long double x[3] = {1.0L, static_cast<long double>(ln_viscosity[i]),
                              std::log(static_cast<long double>(density[i]))};
    const long double y = std::log(static_cast<long double>(surface_tension[i]));
    for (int r = 0; r < 3; ++r) {
      xty[r] += x[r] * y;
      for (int c = 0; c < 3; ++c) xtx[r][c] += x[r] * x[c];
    }
    y_sum += y;
    yy_sum += y * y;
  }

  // Gaussian elimination with partial pivoting on the 3x3 system.
  long double a[3][4];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a[r][c] = xtx[r][c];
    a[r][3] = xty[r];
  }
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(static_cast<double>(a[r][col])) >
          std::fabs(static_cast<double>(a[pivot][col])))
        pivot = r;
    for (int c = 0; c < 4; ++c) std::swap(a[col][c], a[pivot][c]);
    if (a[col][col] == 0.0L)
      throw std::domain_error("correlation_audit: singular design matrix");
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const long double f = a[r][col] / a[col][col];
      for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
    }
  }
  const long double beta[3] = {a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]};

  long double ss_res = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const long double fit = beta[0] + beta[1] * static_cast<long double>(ln_viscosity[i]) +
                            beta[2] * std::log(static_cast<long double>(density[i]));
    const long double y = std::log(static_cast<long double>(surface_tension[i]));
    ss_res += (y - fit) * (y - fit);
  }
  const long double ss_tot = yy_sum - y_sum * y_sum / static_cast<long double>(n);
  if (ss_tot <= 0.0L)
    throw std::domain_error("correlation_audit: constant ln(sigma), fit R^2 undefined");

  CorrelationFit fit;
  fit.k3 = std::exp(static_cast<double>(beta[0]));
  fit.mu_exponent = static_cast<double>(beta[1]);
  fit.rho_exponent = static_cast<double>(beta[2]);
  fit.r2 = static_cast<double>(1.0L - ss_res / ss_tot);
  return fit;
}

// ---- full combinatorial space --------------------------------------------------------------

std::size_t full_space_predict(const std::map<Property, const model::FinetuneModel*>& models,
                               const data::IonVocabulary& cations,
                               const data::IonVocabulary& anions, double temperature_k,
                               double pressure_bar, std::ostream& out) {
  if (models.empty()) throw std::invalid_argument("full_space_predict: no models");
  for (const auto& [p, m] : models) {
    if (m == nullptr) throw std::invalid_argument("full_space_predict: null model");
    if (m->encoder().num_cations() != cations.size() || m->encoder().num_anions() != anions.size())
      throw std::invalid_argument("full_space_predict: model vocabulary does not match (" +
                                  std::string(to_string(p)) + ")");
  }

  out << "cation,anion";
  for (const auto& [p, m] : models) out << ',' << to_string(p);
  out << '\n';

  const std::size_t va = anions.size();
  std::vector<int> anion_ids(va);
  for (std::size_t a = 0; a < va; ++a) anion_ids[a] = static_cast<int>(a);
  const std::vector<double> temps(va, temperature_k), pressures(va, pressure_bar);

  char buf[32];
  std::size_t rows = 0;
  std::vector<std::vector<double>> columns(models.size());
  for (std::size_t c = 0; c < cations.size(); ++c) {
    const std::vector<int> cation_ids(va, static_cast<int>(c));
    std::size_t mi = 0;
    for (const auto& [p, m] : models)
      columns[mi++] = m->predict(cation_ids, anion_ids, temps, pressures);
    for (std::size_t a = 0; a < va; ++a) {
      out << cations.name_of(static_cast<int>(c)) << ',' << anions.name_of(static_cast<int>(a));
      for (std::size_t j = 0; j < columns.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", columns[j][a]);
        out << ',' << buf;
      }
      out << '\n';
      ++rows;
    }
  }
  return rows;
}

// ---- run reports -----------------------------------------------------------------------------

namespace {

void write_report_header(std::ostream& out) {
  out << "grid_index,config,fold,r2,mae,mape,n_records,n_ils\n";
}

void write_entry_rows(std::ostream& out, std::size_t gi, const std::string& config,
                      std::span<const MetricReport> folds, const MetricReport& mean) {
  char buf[256];
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::snprintf(buf, sizeof(buf), "%zu,%s,%zu,%.6f,%.6g,%.4f,%zu,%zu\n", gi, config.c_str(), f,
                  folds[f].r2, folds[f].mae, folds[f].mape, folds[f].n_records, folds[f].n_ils);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%zu,%s,mean,%.6f,%.6g,%.4f,%zu,%zu\n", gi, config.c_str(),
                mean.r2, mean.mae, mean.mape, mean.n_records, mean.n_ils);
  out << buf;
}

}  // namespace

void write_fold_report_csv(std::ostream& out,
                           std::span<const GridEntry<model::PretrainConfig>> grid) {
  write_report_header(out);
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    std::ostringstream cfg;
    cfg << "W=" << grid[gi].config.branch_width << ";blocks=" << grid[gi].config.blocks_per_branch
        << ";head=" << grid[gi].config.head_width;
    write_entry_rows(out, gi, cfg.str(), grid[gi].fold_metrics, grid[gi].mean);
  }
}

void write_fold_report_csv(std::ostream& out,
                           std::span<const GridEntry<model::FinetuneConfig>> grid) {
  write_report_header(out);
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    std::ostringstream cfg;
    cfg << "head=" << grid[gi].config.head_width << ";T=" << (grid[gi].config.uses_temperature ? 1 : 0)
        << ";P=" << (grid[gi].config.uses_pressure ? 1 : 0);
    write_entry_rows(out, gi, cfg.str(), grid[gi].fold_metrics, grid[gi].mean);
  }
}

}  // namespace ilnrs::pipeline
