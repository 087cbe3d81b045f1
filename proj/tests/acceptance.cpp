// Acceptance suite: every release-gating claim of the toolkit, one pass/fail
// line per criterion. Run all (`acceptance`) or a subset (`acceptance A3 A7`).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ilnrs/artifact.hpp"
#include "ilnrs/data.hpp"
#include "ilnrs/finetune_model.hpp"
#include "ilnrs/oracle.hpp"
#include "ilnrs/pipeline.hpp"
#include "ilnrs/pretrain_model.hpp"
#include "ilnrs/rng.hpp"

using namespace ilnrs;
using data::ILKey;
using data::PropertyRecord;

namespace {

// ---- shared protocol settings ---------------------------------------------------

pipeline::TrainSettings pretrain_settings(std::uint64_t seed) {
  pipeline::TrainSettings s;
  s.seed = seed;
  s.batch_size = 256;
  s.max_epochs = 500;
  s.patience = 90;
  s.validation_fraction = 0.1;
  return s;
}

pipeline::TrainSettings finetune_settings(std::uint64_t seed) {
  pipeline::TrainSettings s;
  s.seed = seed;
  s.batch_size = 32;
  s.max_epochs = 600;
  s.patience = 80;
  s.validation_fraction = 0.15;
  s.cv_folds = 5;
  return s;
}

// The default synthetic benchmark: 200x60 ions, 15% pre-train sampling,
// 150-IL sparse experimental sets, default noise/bias/outlier knobs.
struct BenchmarkFixture {
  oracle::SynthDatasets datasets;
  std::map<Property, std::shared_ptr<const model::EncoderSnapshot>> encoders;
};

// Encoders are trained lazily, once per (seed, property), and reused by every
// criterion that evaluates the same benchmark.
class FixtureCache {
 public:
  const oracle::SynthDatasets& datasets(std::uint64_t seed) { return fixture(seed).datasets; }

  std::shared_ptr<const model::EncoderSnapshot> encoder(std::uint64_t seed, Property p) {
    BenchmarkFixture& fx = fixture(seed);
    auto it = fx.encoders.find(p);
    if (it != fx.encoders.end()) return it->second;
    const auto trained = pipeline::train_pretrain_once(
        fx.datasets.pretrain.at(p), 200, 60, pipeline::default_pretrain_config(p),
        pretrain_settings(seed), derive_seed(seed, 1, oracle::property_index(p)));
    auto snapshot = std::make_shared<const model::EncoderSnapshot>(trained.model.export_encoder());
    fx.encoders.emplace(p, snapshot);
    return snapshot;
  }

 private:
  BenchmarkFixture& fixture(std::uint64_t seed) {
    auto it = fixtures_.find(seed);
    if (it != fixtures_.end()) return it->second;
    oracle::OracleConfig cfg;
    cfg.seed = 1000 + seed;
    const oracle::Oracle oracle(cfg, 200, 60);
    oracle::SamplingPlan plan;
    BenchmarkFixture fx;
    fx.datasets = oracle.emit_datasets(plan);
    return fixtures_.emplace(seed, std::move(fx)).first->second;
  }

  std::map<std::uint64_t, BenchmarkFixture> fixtures_;
};

FixtureCache g_fixtures;

// 5-fold CV mean MAE of fine-tuning `target` on `records` with `encoder`.
double cv_mean_mae(std::shared_ptr<const model::EncoderSnapshot> encoder,
                   const std::vector<PropertyRecord>& records, Property target,
                   std::uint64_t seed) {
  const data::FoldPlan plan =
      data::kfold_by_il(records, 5, derive_seed(seed, 7, oracle::property_index(target)));
  double mae = 0.0;
  for (int f = 0; f < 5; ++f) {
    std::vector<PropertyRecord> train, test;
    for (const PropertyRecord& r : records) (plan.fold_of(r.il) == f ? test : train).push_back(r);
    const auto trained =
        pipeline::train_finetune_once(encoder, train, pipeline::default_finetune_config(target),
                                      finetune_settings(seed), derive_seed(seed, 11, f));
    mae += pipeline::evaluate_finetune(trained.model, test).mae;
  }
  return mae / 5.0;
}

// ---- criteria ----------------------------------------------------------------------

// Gradient fidelity of the full pre-train and fine-tune architectures.
bool run_a1(std::string& detail) {
  model::PretrainConfig cfg = pipeline::default_pretrain_config(Property::density);
  cfg.dropout_rate = 0.0;
  model::PretrainModel pretrain = model::PretrainModel::build(cfg, 30, 30, 5);

  Rng rng(17);
  const std::size_t batch = 16;
  std::vector<int> cations(batch), anions(batch);
  Matrix target(batch, 1);
  for (std::size_t i = 0; i < batch; ++i) {
    cations[i] = static_cast<int>(rng.below(30));
    anions[i] = static_cast<int>(rng.below(30));
    target(i, 0) = rng.next_normal();
  }

  nn::GradCheckOptions opt;
  opt.max_samples = 220;
  opt.seed = 3;
  const auto params = pretrain.parameters();
  const double pre_err = nn::gradient_check(params, [&] {
    const Matrix pred = pretrain.forward(cations, anions, nn::Mode::train);
    const nn::LossGrad lg = nn::mse_loss_grad(pred, target);
    pretrain.backward(lg.grad);
    return lg.loss;
  }, opt);

  auto encoder = std::make_shared<const model::EncoderSnapshot>(pretrain.export_encoder());
  model::FinetuneConfig ft_cfg = pipeline::default_finetune_config(Property::density);
  ft_cfg.dropout_rate = 0.0;
  model::FinetuneModel finetune = model::FinetuneModel::build(encoder, ft_cfg, 6);
  finetune.temperature_scaler = {300.0, 20.0, false};
  finetune.pressure_scaler = {5.0, 2.0, false};
  std::vector<double> temps(batch), pressures(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    temps[i] = 283.0 + 6.0 * static_cast<double>(i);
    pressures[i] = 1.0 + static_cast<double>(i % 4);
  }
  const Matrix input = finetune.assemble_input(encoder->encode(cations, anions), temps, pressures);
  const auto head_params = finetune.head_parameters();
  const double ft_err = nn::gradient_check(head_params, [&] {
    const Matrix pred = finetune.head_forward(input, nn::Mode::train);
    const nn::LossGrad lg = nn::mse_loss_grad(pred, target);
    finetune.head_backward(lg.grad);
    return lg.loss;
  }, opt);

  std::ostringstream os;
  os << "max rel err: pretrain " << pre_err << ", finetune " << ft_err << " (bound 1e-4)";
  detail = os.str();
  return pre_err < 1e-4 && ft_err < 1e-4;
}

// Leakage: zero IL overlap in any CV fold; pre-train and experimental IL sets
// disjoint. 100 randomized datasets, exhaustive scan.
bool run_a2(std::string& detail) {
  std::size_t folds_checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(20, static_cast<std::uint64_t>(trial)));
    const int nc = 20 + static_cast<int>(rng.below(40));
    const int na = 10 + static_cast<int>(rng.below(20));
    oracle::OracleConfig cfg;
    cfg.seed = derive_seed(21, static_cast<std::uint64_t>(trial));
    const oracle::Oracle oracle(cfg, nc, na);
    oracle::SamplingPlan plan;
    plan.num_cations = nc;
    plan.num_anions = na;
    plan.anions_per_cation = 2 + static_cast<int>(rng.below(4));
    plan.experimental_ils_per_property = 15 + static_cast<int>(rng.below(20));
    const auto ds = oracle.emit_datasets(plan);

    data::ILKeySet experimental;
    for (const auto& [p, ils] : ds.experimental_ils) experimental.insert(ils.begin(), ils.end());
    for (const ILKey& il : ds.pretrain_ils)
      if (experimental.count(il)) {
        detail = "pre-train/experimental overlap in trial " + std::to_string(trial);
        return false;
      }

    const int k = 2 + static_cast<int>(rng.below(9));
    for (const auto& [p, records] : ds.experimental) {
      if (data::distinct_ils(records).size() < static_cast<std::size_t>(k)) continue;
      const data::FoldPlan fold_plan = data::kfold_by_il(records, k, rng.next_u64());
      for (int f = 0; f < k; ++f) {
        data::ILKeySet train_ils, test_ils;
        for (const PropertyRecord& r : records)
          (fold_plan.fold_of(r.il) == f ? test_ils : train_ils).insert(r.il);
        for (const ILKey& il : test_ils)
          if (train_ils.count(il)) {
            detail = "fold leakage in trial " + std::to_string(trial);
            return false;
          }
        ++folds_checked;
      }
    }
  }
  detail = "100 datasets, " + std::to_string(folds_checked) + " folds scanned, zero overlap";
  return true;
}

// Transfer benefit: transferred density encoder beats the random frozen
// baseline by >= 30% MAE on every target, for 3 of 3 seeds.
bool run_a3(std::string& detail) {
  std::ostringstream os;
  bool pass = true;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto& ds = g_fixtures.datasets(seed);
    const auto transferred = g_fixtures.encoder(seed, Property::density);
    const auto baseline = model::random_encoder(
        pipeline::default_pretrain_config(Property::density), 200, 60, derive_seed(seed, 99));
    for (Property target : kAllProperties) {
      const auto& records = ds.experimental.at(target);
      const double mae_t = cv_mean_mae(transferred, records, target, seed);
      const double mae_b = cv_mean_mae(baseline, records, target, seed);
      const double ratio = mae_t / mae_b;
      worst = std::max(worst, ratio);
      if (!(ratio <= 0.7)) {
        pass = false;
        os << " [seed " << seed << " " << to_string(target) << " ratio " << ratio << "]";
      }
    }
  }
  std::ostringstream head;
  head << "worst transferred/baseline MAE ratio " << worst << " (bound 0.7, 3 seeds x 5 targets)";
  detail = head.str() + os.str();
  return pass;
}

// Within-property transfer at least matches cross-property transfer for the
// viscosity and heat-capacity targets, averaged over 3 seeds.
bool run_a4(std::string& detail) {
  const std::array<Property, 2> targets = {Property::ln_viscosity, Property::heat_capacity};
  std::map<Property, double> within_sum, cross_sum;
  std::map<Property, int> cross_count;

  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto& ds = g_fixtures.datasets(seed);
    std::map<Property, std::shared_ptr<const model::EncoderSnapshot>> encoders;
    for (Property source : kPretrainProperties) encoders[source] = g_fixtures.encoder(seed, source);

    std::map<Property, std::vector<PropertyRecord>> experimental;
    for (Property t : targets) experimental[t] = ds.experimental.at(t);

    auto settings = finetune_settings(seed);
    const auto cells = pipeline::transfer_matrix(encoders, experimental, settings);
    for (const pipeline::TransferCell& cell : cells) {
      if (cell.within_property) {
        within_sum[cell.target] += cell.mean.mae;
      } else {
        cross_sum[cell.target] += cell.mean.mae;
        ++cross_count[cell.target];
      }
    }
  }

  std::ostringstream os;
  bool pass = true;
  for (Property t : targets) {
    const double within = within_sum[t] / 3.0;
    const double cross = cross_sum[t] / cross_count[t];
    os << to_string(t) << ": within " << within << " vs cross " << cross << "; ";
    if (!(within <= cross)) pass = false;
  }
  detail = os.str();
  return pass;
}

// Size-sweep shape: pre-train MAE drops >= 3x from 1 to 5 anions per cation;
// fine-tune MAE varies by < 25% across fractions {1, 5, 50}. Means over two
// seeded sweeps on ion-pooled experimental sets (the literature-style regime).
bool run_a5(std::string& detail) {
  const std::array<int, 3> fractions = {1, 5, 50};
  std::map<Property, std::array<double, 3>> mae;
  for (Property p : kAllProperties) mae[p] = {0.0, 0.0, 0.0};
  double pre_1 = 0.0, pre_5 = 0.0;
  const int n_seeds = 2;

  for (int s = 0; s < n_seeds; ++s) {
    oracle::OracleConfig cfg;
    cfg.seed = 500 + s;
    const oracle::Oracle oracle(cfg, 200, 60);
    oracle::SamplingPlan plan;
    plan.experimental_ils_per_property = 450;
    plan.experimental_cation_pool = 68;
    plan.experimental_anion_pool = 25;

    pipeline::TrainSettings pre = pretrain_settings(42 + s);
    pre.batch_size = 128;
    pre.max_epochs = 600;
    pipeline::TrainSettings fine = pre;
    fine.batch_size = 64;
    fine.max_epochs = 1000;
    fine.patience = 150;
    fine.validation_fraction = 0.15;

    const auto entries = pipeline::size_sweep(oracle, plan, fractions, Property::density, pre, fine);
    pre_1 += entries[0].pretrain_holdout.mae;
    pre_5 += entries[1].pretrain_holdout.mae;
    for (std::size_t f = 0; f < fractions.size(); ++f)
      for (const auto& [p, m] : entries[f].finetune) mae[p][f] += m.mae;
  }

  const double drop = pre_1 / pre_5;
  std::ostringstream os;
  os << "pretrain MAE drop 1->5: " << drop << "x (need >= 3);";
  bool pass = drop >= 3.0;
  for (Property p : kAllProperties) {
    double lo = mae[p][0], hi = mae[p][0];
    for (double v : mae[p]) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double spread = (hi - lo) / lo;
    os << " " << to_string(p) << " " << 100.0 * spread << "%";
    if (!(spread < 0.25)) pass = false;
  }
  detail = os.str() + " (need < 25%)";
  return pass;
}

// Metric oracle: brute-force agreement on 1,000 random arrays plus the three
// hand-computed examples.
bool run_a6(std::string& detail) {
  {  // hand examples
    const std::vector<double> t = {1.0, 2.0, 3.0};
    const pipeline::MetricReport perfect = pipeline::metrics(t, t);
    if (perfect.mae != 0.0 || perfect.mape != 0.0 || perfect.r2 != 1.0) {
      detail = "perfect-fit example failed";
      return false;
    }
    bool threw = false;
    const std::vector<double> degen_pred = {1.0, 2.0, 3.0}, degen_target = {2.0, 2.0, 2.0};
    try {
      pipeline::metrics(degen_pred, degen_target);
    } catch (const std::domain_error&) {
      threw = true;
    }
    if (!threw) {
      detail = "zero-variance target did not raise";
      return false;
    }
    const std::vector<double> hp = {1.0, 3.0}, ht = {2.0, 6.0};
    const pipeline::MetricReport hand = pipeline::metrics(hp, ht);
    if (std::fabs(hand.mae - 2.0) > 1e-15 || std::fabs(hand.mape - 50.0) > 1e-12 ||
        std::fabs(hand.r2 + 0.25) > 1e-15) {
      detail = "hand-computed example failed";
      return false;
    }
  }

  Rng rng(2025);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(200);
    std::vector<double> pred(n), target(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = 20.0 * rng.next_normal();
      target[i] = 20.0 * rng.next_normal() + 10.0;
      if (target[i] == 0.0) target[i] = 1.0;
    }
    const pipeline::MetricReport m = pipeline::metrics(pred, target);

    // independent route: extended precision, direct formulas
    long double abs_sum = 0.0L, pct_sum = 0.0L, mean = 0.0L;
    for (double v : target) mean += v;
    mean /= static_cast<long double>(n);
    long double ss_res = 0.0L, ss_tot = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const long double e = static_cast<long double>(pred[i]) - target[i];
      abs_sum += e < 0 ? -e : e;
      pct_sum += (e < 0 ? -e : e) / std::fabs(static_cast<long double>(target[i]));
      ss_res += e * e;
      ss_tot += (target[i] - mean) * (target[i] - mean);
    }
    const double mae = static_cast<double>(abs_sum / static_cast<long double>(n));
    const double mape = static_cast<double>(100.0L * pct_sum / static_cast<long double>(n));
    const double r2 = static_cast<double>(1.0L - ss_res / ss_tot);
    worst = std::max({worst, std::fabs(m.mae - mae), std::fabs(m.mape - mape),
                      std::fabs(m.r2 - r2)});
  }
  std::ostringstream os;
  os << "1000 arrays, worst |delta| " << worst << " (bound 1e-10)";
  detail = os.str();
  return worst < 1e-10;
}

// Outlier robustness: adding the default ln-viscosity outliers to the
// pre-training set moves the fine-tuned viscosity CV MAE by < 15%.
bool run_a7(std::string& detail) {
  double mae_clean = 0.0, mae_outliers = 0.0;
  for (int with_outliers = 0; with_outliers < 2; ++with_outliers) {
    oracle::OracleConfig cfg;
    cfg.seed = 700;
    if (!with_outliers) cfg.outlier_fraction = 0.0;  // default knobs otherwise
    const oracle::Oracle oracle(cfg, 200, 60);
    oracle::SamplingPlan plan;
    const auto ds = oracle.emit_datasets(plan);

    const auto trained = pipeline::train_pretrain_once(
        ds.pretrain.at(Property::ln_viscosity), 200, 60,
        pipeline::default_pretrain_config(Property::ln_viscosity), pretrain_settings(3),
        derive_seed(3, 2));
    auto encoder = std::make_shared<const model::EncoderSnapshot>(trained.model.export_encoder());
    const double mae =
        cv_mean_mae(encoder, ds.experimental.at(Property::ln_viscosity), Property::ln_viscosity, 3);
    (with_outliers ? mae_outliers : mae_clean) = mae;
  }
  const double change = std::fabs(mae_outliers - mae_clean) / mae_clean;
  std::ostringstream os;
  os << "fine-tuned viscosity CV MAE " << mae_clean << " clean vs " << mae_outliers
     << " with outliers: " << 100.0 * change << "% change (bound 15%)";
  detail = os.str();
  return change < 0.15;
}

// Full-space enumeration over the 2,268 x 311 vocabulary.
bool run_a8(std::string& detail) {
  data::IonVocabulary cations(data::IonVocabulary::Role::cation);
  data::IonVocabulary anions(data::IonVocabulary::Role::anion);
  char buf[16];
  for (int i = 0; i < 2268; ++i) {
    std::snprintf(buf, sizeof(buf), "C%04d", i + 1);
    cations.add(buf);
  }
  for (int i = 0; i < 311; ++i) {
    std::snprintf(buf, sizeof(buf), "A%04d", i + 1);
    anions.add(buf);
  }

  auto encoder = model::random_encoder(pipeline::default_pretrain_config(Property::density), 2268,
                                       311, 7);
  model::FinetuneModel density =
      model::FinetuneModel::build(encoder, pipeline::default_finetune_config(Property::density), 8);
  density.target_scaler = {1200.0, 100.0};
  density.temperature_scaler = {300.0, 25.0, false};
  density.pressure_scaler = {5.0, 2.0, false};
  const std::map<Property, const model::FinetuneModel*> models = {{Property::density, &density}};

  const auto path = std::filesystem::temp_directory_path() / "ilnrs_full_space.csv";
  std::size_t rows = 0;
  {
    std::ofstream out(path);
    rows = pipeline::full_space_predict(models, cations, anions, 298.15, 1.0, out);
  }
  std::size_t lines = 0;
  {
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) ++lines;
  }
  std::filesystem::remove(path);
  std::ostringstream os;
  os << rows << " rows emitted, " << lines << " lines on disk (expected 705348 + header)";
  detail = os.str();
  return rows == 705348 && lines == 705349;
}

// Persistence: bitwise round-trip on 1,000 random queries; corrupted
// artifacts always rejected.
bool run_a9(std::string& detail) {
  const auto dir = std::filesystem::temp_directory_path() / "ilnrs_a9";
  std::filesystem::create_directories(dir);
  data::IonVocabulary cations(data::IonVocabulary::Role::cation);
  data::IonVocabulary anions(data::IonVocabulary::Role::anion);
  for (int i = 0; i < 40; ++i) cations.add("cat" + std::to_string(i));
  for (int i = 0; i < 30; ++i) anions.add("an" + std::to_string(i));

  model::PretrainModel pretrain = model::PretrainModel::build(
      pipeline::default_pretrain_config(Property::ln_viscosity), 40, 30, 9);
  auto encoder = std::make_shared<const model::EncoderSnapshot>(pretrain.export_encoder());
  model::FinetuneModel original = model::FinetuneModel::build(
      encoder, pipeline::default_finetune_config(Property::ln_viscosity), 10);
  original.target_scaler = {5.0, 1.4};
  original.temperature_scaler = {310.0, 22.0, false};

  const std::string path = (dir / "model.ilnrs").string();
  io::save_finetune(original, cations, anions, path);
  const io::LoadedFinetune loaral = io::load_finetune(path);

  Rng rng(11);
  std::vector<int> qc(1000), qa(1000);
  std::vector<double> qt(1000), qp(1000, 1.0);
  for (std::size_t i = 0; i < 1000; ++i) {
    qc[i] = static_cast<int>(rng.below(40));
    qa[i] = static_cast<int>(rng.below(30));
    qt[i] = 280.0 + 80.0 * rng.next_unit();
  }
  const auto before = original.predict(qc, qa, qt, qp);
  const auto after = loaral.model->predict(qc, qa, qt, qp);
  if (std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) != 0) {
    detail = "round-trip predictions differ";
    std::filesystem::remove_all(dir);
    return false;
  }

  // Corruption battery: random byte flips, truncations, and a kind swap.
  const auto size = std::filesystem::file_size(path);
  std::size_t rejected = 0, attempts = 0;
  auto expect_reject = [&](const std::string& corrupt_path) {
    ++attempts;
    try {
      io::load_finetune(corrupt_path);
    } catch (const std::exception&) {
      ++rejected;
    }
  };
  for (int trial = 0; trial < 48; ++trial) {
    const std::string copy = (dir / ("flip" + std::to_string(trial) + ".ilnrs")).string();
    std::filesystem::copy_file(path, copy);
    std::fstream f(copy, std::ios::in | std::ios::out | std::ios::binary);
    const std::size_t at = static_cast<std::size_t>(rng.below(size));
    f.seekg(static_cast<std::streamoff>(at));
    char b = 0;
    f.read(&b, 1);
    b = static_cast<char>(b ^ (1 + static_cast<char>(rng.below(255))));
    f.seekp(static_cast<std::streamoff>(at));
    f.write(&b, 1);
    f.close();
    expect_reject(copy);
  }
  for (std::size_t cut : {std::size_t{1}, std::size_t{8}, size / 2, size - 16}) {
    const std::string copy = (dir / ("cut" + std::to_string(cut) + ".ilnrs")).string();
    std::filesystem::copy_file(path, copy);
    std::filesystem::resize_file(copy, size - cut);
    expect_reject(copy);
  }
  {
    // an encoder artifact where a fine-tuned model is expected
    const std::string enc_path = (dir / "encoder.ilnrs").string();
    io::save_encoder(*encoder, cations, anions, enc_path);
    expect_reject(enc_path);
  }
  std::filesystem::remove_all(dir);

  std::ostringstream os;
  os << "bitwise round-trip on 1000 queries; " << rejected << "/" << attempts
     << " corrupted artifacts rejected";
  detail = os.str();
  return rejected == attempts;
}

// Correlation audit: exact recovery on generator ground truth, and fit
// R^2 >= 0.8 on trained-model predictions.
bool run_a10(std::string& detail) {
  oracle::OracleConfig cfg;
  cfg.seed = 1000;  // matches benchmark seed 0
  const oracle::Oracle oracle(cfg, 200, 60);

  std::vector<double> rho, ln_mu, sigma;
  for (int c = 0; c < 100; ++c)
    for (int a = 0; a < 6; ++a) {
      const ILKey il{c, a};
      rho.push_back(oracle.true_property(il, Property::density, 298.0, 1.0));
      ln_mu.push_back(oracle.true_property(il, Property::ln_viscosity, 298.0, 1.0));
      sigma.push_back(oracle.true_property(il, Property::surface_tension, 298.0, 1.0));
    }
  const pipeline::CorrelationFit exact = pipeline::correlation_audit(rho, ln_mu, sigma);
  const double k3_err = std::fabs(exact.k3 - oracle.config().k3) / oracle.config().k3;
  const double b_err = std::fabs(exact.mu_exponent - oracle.config().mu_exponent);
  const double c_err = std::fabs(exact.rho_exponent - oracle.config().rho_exponent);
  if (k3_err > 1e-6 || b_err > 1e-6 || c_err > 1e-6) {
    std::ostringstream os;
    os << "ground-truth recovery errors k3 " << k3_err << ", b " << b_err << ", c " << c_err;
    detail = os.str();
    return false;
  }

  // Trained route: fine-tune the three properties on the benchmark with the
  // shared density encoder, then audit their predictions over unseen ILs.
  const std::uint64_t seed = 0;
  const auto& ds = g_fixtures.datasets(seed);
  const auto encoder = g_fixtures.encoder(seed, Property::density);
  std::map<Property, model::FinetuneModel> models;
  for (Property p : {Property::density, Property::ln_viscosity, Property::surface_tension}) {
    auto trained =
        pipeline::train_finetune_once(encoder, ds.experimental.at(p),
                                      pipeline::default_finetune_config(p), finetune_settings(seed),
                                      derive_seed(seed, 31, oracle::property_index(p)));
    models.emplace(p, std::move(trained.model));
  }

  std::vector<int> qc, qa;
  for (int c = 0; c < 150; ++c)
    for (int a = 0; a < 4; ++a) {
      qc.push_back(c);
      qa.push_back((a * 17 + c) % 60);
    }
  const std::vector<double> qt(qc.size(), 298.0), qp(qc.size(), 1.0);
  const auto rho_hat = models.at(Property::density).predict(qc, qa, qt, qp);
  const auto mu_hat = models.at(Property::ln_viscosity).predict(qc, qa, qt, qp);
  const auto sigma_hat = models.at(Property::surface_tension).predict(qc, qa, qt, qp);
  for (double v : sigma_hat)
    if (!(v > 0.0)) {
      detail = "trained surface-tension prediction non-positive; audit undefined";
      return false;
    }
  const pipeline::CorrelationFit fit = pipeline::correlation_audit(rho_hat, mu_hat, sigma_hat);

  std::ostringstream os;
  os << "ground truth exact (errors <= " << std::max({k3_err, b_err, c_err})
     << "); trained-prediction fit R^2 " << fit.r2 << " (bound 0.8), b " << fit.mu_exponent
     << ", c " << fit.rho_exponent;
  detail = os.str();
  return fit.r2 >= 0.8;
}

struct Criterion {
  const char* id;
  const char* label;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"A1", "gradient fidelity", run_a1},
      {"A2", "leakage suite", run_a2},
      {"A3", "transfer benefit vs random baseline", run_a3},
      {"A4", "within- vs cross-property direction", run_a4},
      {"A5", "size-sweep shape", run_a5},
      {"A6", "metric oracle", run_a6},
      {"A7", "outlier robustness", run_a7},
      {"A8", "full-space enumeration", run_a8},
      {"A9", "persistence round-trip and corruption", run_a9},
      {"A10", "correlation audit", run_a10},
  };

  std::set<std::string> requested;
  for (int i = 1; i < argc; ++i) requested.insert(argv[i]);

  bool all_pass = true;
  for (const Criterion& c : criteria) {
    if (!requested.empty() && !requested.count(c.id)) continue;
    std::string detail;
    bool pass = false;
    const auto start = std::chrono::steady_clock::now();
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%-4s %-38s %s  (%.1fs)  %s\n", c.id, c.label, pass ? "PASS" : "FAIL", seconds,
                detail.c_str());
    std::fflush(stdout);
    all_pass &= pass;
  }
  return all_pass ? 0 : 1;
}
