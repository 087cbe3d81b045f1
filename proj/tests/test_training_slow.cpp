#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cstdio>

#include "ilnrs/pipeline.hpp"

using namespace ilnrs;

// Training-scale check: a noise-free pre-training run on the 12,000-IL
// synthetic universe at 15% sampling must essentially solve the surface.
TEST_CASE("noise-free pre-training reaches held-out R^2 >= 0.99") {
  oracle::OracleConfig cfg;
  cfg.seed = 2;
  cfg.noise_std = {0, 0, 0, 0, 0};
  cfg.bias_multiplicative = {1, 1, 1, 1, 1};
  cfg.bias_additive = {0, 0, 0, 0, 0};
  cfg.outlier_fraction = 0.0;
  const oracle::Oracle oracle(cfg, 200, 60);
  oracle::SamplingPlan plan;  // 200x60, 9 anions per cation
  const auto ds = oracle.emit_datasets(plan);
  const auto& records = ds.pretrain.at(Property::density);

  pipeline::TrainSettings settings;
  settings.seed = 1;
  settings.batch_size = 128;
  settings.max_epochs = 900;
  settings.patience = 140;
  settings.validation_fraction = 0.1;

  // Held-out ILs: use the experimental density ILs, which are excluded from
  // the pre-training pairs by construction, as a clean test set.
  std::vector<data::PropertyRecord> holdout;
  for (const data::ILKey& il : ds.experimental_ils.at(Property::density))
    holdout.push_back({il, Property::density, 298.0, 1.0,
                       oracle.true_property(il, Property::density, 298.0, 1.0)});

  model::PretrainConfig config = pipeline::default_pretrain_config(Property::density);
  config.head_width = 200;

  const auto t0 = std::chrono::steady_clock::now();
  const auto trained = pipeline::train_pretrain_once(records, 200, 60, config, settings, 7);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto holdout_metrics =
      pipeline::evaluate_pretrain(trained.model, trained.target_scaler, holdout);
  std::printf("pretrain noise-free: %d epochs in %.1fs, holdout R2=%.5f MAE=%.3f MAPE=%.2f%%\n",
              trained.epochs_run, seconds, holdout_metrics.r2, holdout_metrics.mae,
              holdout_metrics.mape);
  CHECK(holdout_metrics.r2 >= 0.99);
}
