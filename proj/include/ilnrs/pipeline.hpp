#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ilnrs/data.hpp"
#include "ilnrs/finetune_model.hpp"
#include "ilnrs/oracle.hpp"
#include "ilnrs/pretrain_model.hpp"

namespace ilnrs::pipeline {

struct TrainSettings {
  std::size_t batch_size = 256;
  int max_epochs = 500;
  int patience = 20;              // epochs without validation improvement
  double validation_fraction = 0.1;  // fraction of training ILs held for early stop
  int cv_folds = 10;
  std::uint64_t seed = 0;
  // Halve the learning rate after patience/3 stalled epochs; 1.0 disables.
  double lr_decay_factor = 0.5;

  void validate() const;
};

// Metrics on unscaled values, exactly as reported.
struct MetricReport {
  double r2 = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // percent
  std::size_t n_records = 0;
  std::size_t n_ils = 0;
};

// MAE/MAPE/R2 of predictions against targets. Throws std::domain_error when
// R2 is undefined (zero-variance target) or MAPE is undefined (zero target).
MetricReport metrics(std::span<const double> predicted, std::span<const double> target);

// Sensible per-property defaults; pressure is an input only for density.
model::PretrainConfig default_pretrain_config(Property p);
model::FinetuneConfig default_finetune_config(Property p);

// ---- single training runs ----------------------------------------------------

struct TrainedPretrain {
  model::PretrainModel model;
  data::Scaler target_scaler;
  double best_validation_loss = 0.0;
  int epochs_run = 0;
};

// Trains one pre-training model with early stopping on an IL-grouped
// validation slice carved from `records`. Input order does not matter:
// records are canonicalized before any seeded draw.
TrainedPretrain train_pretrain_once(std::span<const data::PropertyRecord> records,
                                    std::size_t num_cations, std::size_t num_anions,
                                    const model::PretrainConfig& config,
                                    const TrainSettings& settings, std::uint64_t seed);

MetricReport evaluate_pretrain(const model::PretrainModel& model, const data::Scaler& scaler,
                               std::span<const data::PropertyRecord> records);

struct TrainedFinetune {
  model::FinetuneModel model;
  double best_validation_loss = 0.0;
  int epochs_run = 0;
};

TrainedFinetune train_finetune_once(std::shared_ptr<const model::EncoderSnapshot> encoder,
                                    std::span<const data::PropertyRecord> records,
                                    const model::FinetuneConfig& config,
                                    const TrainSettings& settings, std::uint64_t seed);

MetricReport evaluate_finetune(const model::FinetuneModel& model,
                               std::span<const data::PropertyRecord> records);

// ---- grid search with IL-grouped cross-validation ------------------------------

template <typename Config>
struct GridEntry {
  Config config;
  std::vector<MetricReport> fold_metrics;
  MetricReport mean;
};

struct PretrainResult {
  model::PretrainModel model;  // best grid point retrained on all records
  data::Scaler target_scaler;
  std::vector<GridEntry<model::PretrainConfig>> grid;
  std::size_t best_index = 0;
  double best_validation_loss = 0.0;
};

PretrainResult pretrain(std::span<const data::PropertyRecord> records, std::size_t num_cations,
                        std::size_t num_anions, std::span<const model::PretrainConfig> grid,
                        const TrainSettings& settings);

struct FinetuneResult {
  model::FinetuneModel model;
  std::vector<GridEntry<model::FinetuneConfig>> grid;
  std::size_t best_index = 0;
  double best_validation_loss = 0.0;
};

FinetuneResult finetune(std::shared_ptr<const model::EncoderSnapshot> encoder,
                        std::span<const data::PropertyRecord> records,
                        std::span<const model::FinetuneConfig> grid,
                        const TrainSettings& settings);

// ---- transfer matrix ------------------------------------------------------------

struct TransferCell {
  Property source;
  Property target;
  bool within_property = false;
  std::vector<MetricReport> fold_metrics;
  MetricReport mean;
};

// Fine-tunes every target property on top of every supplied encoder using the
// per-target default config; one cell per (source, target).
std::vector<TransferCell> transfer_matrix(
    const std::map<Property, std::shared_ptr<const model::EncoderSnapshot>>& encoders,
    const std::map<Property, std::vector<data::PropertyRecord>>& experimental,
    const TrainSettings& settings);

// ---- pre-training size sweep ------------------------------------------------------

struct SizeSweepEntry {
  int anions_per_cation = 0;
  MetricReport pretrain_holdout;                 // held-out-IL metrics of the encoder model
  std::map<Property, MetricReport> finetune;     // held-out-IL metrics per target
};

// Re-samples the pre-training set at each fraction (experimental sets stay
// fixed), pre-trains, then fine-tunes all five targets on held-out splits.
// Pre-training and fine-tuning budgets are independent.
std::vector<SizeSweepEntry> size_sweep(const oracle::Oracle& oracle,
                                       const oracle::SamplingPlan& base_plan,
                                       std::span<const int> fractions, Property pretrain_property,
                                       const TrainSettings& pretrain_settings,
                                       const TrainSettings& finetune_settings);

// ---- correlation audit ---------------------------------------------------------

struct CorrelationFit {
  double k3 = 0.0;
  double mu_exponent = 0.0;
  double rho_exponent = 0.0;
  double r2 = 0.0;
};

// Ordinary least squares of ln(sigma) on [1, ln(mu), ln(rho)]. Density and
// surface tension must be strictly positive.
CorrelationFit correlation_audit(std::span<const double> density,
                                 std::span<const double> ln_viscosity,
                                 std::span<const double> surface_tension);

// ---- full combinatorial space ----------------------------------------------------

// Streams one CSV row per (cation, anion) with a column per supplied model.
// Bounded memory: one cation block at a time. Returns the data row count.
std::size_t full_space_predict(const std::map<Property, const model::FinetuneModel*>& models,
                               const data::IonVocabulary& cations,
                               const data::IonVocabulary& anions, double temperature_k,
                               double pressure_bar, std::ostream& out);

// ---- run reports -----------------------------------------------------------------

void write_fold_report_csv(std::ostream& out,
                           std::span<const GridEntry<model::PretrainConfig>> grid);
void write_fold_report_csv(std::ostream& out,
                           std::span<const GridEntry<model::FinetuneConfig>> grid);

}  // namespace ilnrs::pipeline
