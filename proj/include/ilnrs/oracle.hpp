#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "ilnrs/data.hpp"
#include "ilnrs/matrix.hpp"
#include "ilnrs/property.hpp"

namespace ilnrs::oracle {

inline constexpr std::size_t kLatentDim = 8;

inline std::size_t property_index(Property p) { return static_cast<std::size_t>(p); }

// Hidden per-ion structure. Models never see these vectors; every model-facing
// interface carries only integer ids, temperature, and pressure.
struct IonFeatureTable {
  Matrix z;                  // [ions x kLatentDim], seeded standard normal
  std::vector<double> size;  // strictly positive scalar derived from z
};

struct LatentIonFeatures {
  IonFeatureTable cations;
  IonFeatureTable anions;
};

LatentIonFeatures generate_ions(int num_cations, int num_anions, std::uint64_t seed);

struct OracleConfig {
  std::uint64_t seed = 0;

  // Measurement/simulation noise per property (indexed by Property). Sized
  // like cross-laboratory scatter in literature compilations (~1% of scale).
  std::array<double, 5> noise_std = {15.0, 0.25, 0.0025, 6.0, 6.0};

  // Simulation bias applied to pre-training rows only: value*mult + add.
  std::array<double, 5> bias_multiplicative = {1.02, 1.02, 1.0, 1.02, 1.0};
  std::array<double, 5> bias_additive = {4.0, 0.15, 0.0, 2.5, 0.0};

  // ln-viscosity outliers in the pre-training set; fraction 0 disables them.
  double outlier_fraction = 0.01;
  double outlier_magnitude = 80.0;

  // sigma = k3 * mu^b * rho^c, the built-in cross-property correlation.
  double k3 = 8.5e-7;
  double mu_exponent = 0.3;
  double rho_exponent = 1.2;

  void validate() const;
};

struct SamplingPlan {
  int num_cations = 200;
  int num_anions = 60;
  int anions_per_cation = 9;             // 15% of the 200x60 universe
  int experimental_ils_per_property = 150;
  // Optional per-property ion subpool for the experimental draw (0 = whole
  // universe). Literature compilations reuse a modest set of popular ions, so
  // restricted pools reproduce that regime: the same cation shows up in
  // several measured ILs.
  int experimental_cation_pool = 0;
  int experimental_anion_pool = 0;
  double temperature_min_k = 283.15;
  double temperature_max_k = 373.15;
  int min_temps_per_il = 5;
  int max_temps_per_il = 9;
  double pressure_min_bar = 1.0;   // density rows sample pressure in this range;
  double pressure_max_bar = 100.0; // all other properties stay at 1 bar

  void validate() const;
};

struct SynthDatasets {
  // Dense simulated sets at 298 K / 1 bar for the three pre-train properties.
  std::map<Property, std::vector<data::PropertyRecord>> pretrain;
  // Sparse experimental-like sets over a temperature grid for all five.
  std::map<Property, std::vector<data::PropertyRecord>> experimental;
  std::vector<data::ILKey> pretrain_ils;
  std::map<Property, std::vector<data::ILKey>> experimental_ils;
};

// Deterministic property surface generator. Pure function of (config, seed):
// regenerating with the same inputs is bitwise identical.
class Oracle {
 public:
  Oracle(const OracleConfig& config, int num_cations, int num_anions);

  // Noise-free ground truth. T in [273, 473] K, P in [0.5, 100] bar.
  double true_property(const data::ILKey& il, Property p, double temperature_k,
                       double pressure_bar) const;

  SynthDatasets emit_datasets(const SamplingPlan& plan) const;

  const LatentIonFeatures& features() const { return features_; }
  const OracleConfig& config() const { return config_; }
  int num_cations() const { return num_cations_; }
  int num_anions() const { return num_anions_; }

 private:
  double interaction(int cation, int anion, std::size_t which) const;

  OracleConfig config_;
  int num_cations_;
  int num_anions_;
  LatentIonFeatures features_;
  // One weight vector per interaction term g1..g4, sharing a common component
  // so the property surfaces stay correlated across properties.
  std::array<std::vector<double>, 4> weights_;
  std::array<double, 4> tanh_gain_;
};

}  // namespace ilnrs::oracle
