#include "ilnrs/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ilnrs/rng.hpp"

namespace ilnrs::oracle {

namespace {

constexpr std::uint64_t kTagCation = 0x636174696f6eULL;
constexpr std::uint64_t kTagAnion = 0x616e696f6eULL;
constexpr std::uint64_t kTagWeights = 0x77656967687473ULL;
constexpr std::uint64_t kTagExpIls = 0x657870696cULL;
constexpr std::uint64_t kTagPairs = 0x7061697273ULL;
constexpr std::uint64_t kTagPre = 0x707265ULL;
constexpr std::uint64_t kTagExp = 0x657870ULL;

// Variance budget of the interaction g = w.[zc | za | zc*za] + q tanh(zc.za).
// Additive per-ion terms dominate, mirroring how IL properties are mostly
// sums of ion contributions; the product term is concentrated on two latent
// dimensions so a recommender can recover it from a handful of observations
// per ion; the tanh term stays small. The scale keeps >= 99% of
// default-config densities inside [900, 1600] kg/m^3.
constexpr double kSharedFraction = 0.96;    // cos of the angle to the shared axis
constexpr double kAdditiveBlockVar = 0.2;    // per ion side
constexpr double kProductVar = 0.002;
constexpr std::size_t kProductDims = 2;
constexpr double kTanhGain = 0.02;

IonFeatureTable make_table(int count, std::uint64_t seed, std::uint64_t role_tag) {
  IonFeatureTable t;
  t.z = Matrix(static_cast<std::size_t>(count), kLatentDim);
  t.size.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, role_tag, static_cast<std::uint64_t>(i)));
    for (std::size_t d = 0; d < kLatentDim; ++d)
      t.z(static_cast<std::size_t>(i), d) = rng.next_normal();
    t.size[static_cast<std::size_t>(i)] = std::exp(0.25 * t.z(static_cast<std::size_t>(i), 0));
  }
  return t;
}

void normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
}

std::uint64_t il_tag(const data::ILKey& il) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(il.cation_id)) << 32) |
         static_cast<std::uint32_t>(il.anion_id);
}

}  // namespace

LatentIonFeatures generate_ions(int num_cations, int num_anions, std::uint64_t seed) {
  if (num_cations <= 0 || num_anions <= 0)
    throw std::invalid_argument("generate_ions: counts must be > 0");
  return LatentIonFeatures{make_table(num_cations, seed, kTagCation),
                           make_table(num_anions, seed, kTagAnion)};
}

void OracleConfig::validate() const {
  for (double n : noise_std)
    if (n < 0.0) throw std::invalid_argument("OracleConfig: noise_std must be >= 0");
  if (outlier_fraction < 0.0 || outlier_fraction > 1.0)
    throw std::invalid_argument("OracleConfig: outlier_fraction must lie in [0, 1]");
  if (!(outlier_magnitude > 0.0))
    throw std::invalid_argument("OracleConfig: outlier_magnitude must be > 0");
  if (!(k3 > 0.0)) throw std::invalid_argument("OracleConfig: k3 must be > 0");
}

void SamplingPlan::validate() const {
  if (num_cations <= 0 || num_anions <= 0)
    throw std::invalid_argument("SamplingPlan: universe sizes must be > 0");
  if (anions_per_cation <= 0 || anions_per_cation > num_anions)
    throw std::invalid_argument("SamplingPlan: anions_per_cation must lie in [1, num_anions]");
  if (experimental_ils_per_property <= 0 ||
      static_cast<long>(experimental_ils_per_property) >
          static_cast<long>(num_cations) * num_anions)
    throw std::invalid_argument("SamplingPlan: experimental_ils_per_property out of range");
  if (experimental_cation_pool < 0 || experimental_anion_pool < 0)
    throw std::invalid_argument("SamplingPlan: experimental ion pools must be >= 0");
  const int pool_c =
      experimental_cation_pool > 0 ? std::min(experimental_cation_pool, num_cations) : num_cations;
  const int pool_a =
      experimental_anion_pool > 0 ? std::min(experimental_anion_pool, num_anions) : num_anions;
  if (static_cast<long>(experimental_ils_per_property) > static_cast<long>(pool_c) * pool_a)
    throw std::invalid_argument(
        "SamplingPlan: experimental ion pools too small for the requested IL count");
  if (!(temperature_min_k > 0.0) || !(temperature_max_k > temperature_min_k))
    throw std::invalid_argument("SamplingPlan: bad temperature range");
  if (min_temps_per_il < 1 || max_temps_per_il < min_temps_per_il)
    throw std::invalid_argument("SamplingPlan: bad temps-per-IL range");
  if (!(pressure_min_bar > 0.0) || !(pressure_max_bar >= pressure_min_bar))
    throw std::invalid_argument("SamplingPlan: bad pressure range");
}

namespace {

// Unit vector at angle acos(cos_shared) to `shared`, lying in span(shared, own).
std::vector<double> mix_direction(const std::vector<double>& shared, std::vector<double> own,
                                  double cos_shared) {
  double proj = 0.0;
  for (std::size_t i = 0; i < shared.size(); ++i) proj += own[i] * shared[i];
  for (std::size_t i = 0; i < shared.size(); ++i) own[i] -= proj * shared[i];
  normalize(own);
  const double own_frac = std::sqrt(1.0 - cos_shared * cos_shared);
  std::vector<double> mixed(shared.size());
  for (std::size_t i = 0; i < shared.size(); ++i)
    mixed[i] = cos_shared * shared[i] + own_frac * own[i];
  return mixed;
}

std::vector<double> random_unit(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.next_normal();
  normalize(v);
  return v;
}

}  // namespace

Oracle::Oracle(const OracleConfig& config, int num_cations, int num_anions)
    : config_(config),
      num_cations_(num_cations),
      num_anions_(num_anions),
      features_(generate_ions(num_cations, num_anions, config.seed)) {
  config.validate();
  Rng rng(derive_seed(config_.seed, kTagWeights));
  const std::vector<double> shared_c = random_unit(rng, kLatentDim);
  const std::vector<double> shared_a = random_unit(rng, kLatentDim);
  const std::vector<double> shared_p = random_unit(rng, kProductDims);
  const double add_scale = std::sqrt(kAdditiveBlockVar);
  const double prod_scale = std::sqrt(kProductVar);

  for (std::size_t g = 0; g < 4; ++g) {
    const std::vector<double> dir_c =
        mix_direction(shared_c, random_unit(rng, kLatentDim), kSharedFraction);
    const std::vector<double> dir_a =
        mix_direction(shared_a, random_unit(rng, kLatentDim), kSharedFraction);
    const std::vector<double> dir_p =
        mix_direction(shared_p, random_unit(rng, kProductDims), kSharedFraction);

    weights_[g].assign(3 * kLatentDim, 0.0);
    for (std::size_t d = 0; d < kLatentDim; ++d) {
      weights_[g][d] = add_scale * dir_c[d];
      weights_[g][kLatentDim + d] = add_scale * dir_a[d];
    }
    for (std::size_t d = 0; d < kProductDims; ++d)
      weights_[g][2 * kLatentDim + d] = prod_scale * dir_p[d];
    tanh_gain_[g] = kTanhGain;
  }
}

double Oracle::interaction(int cation, int anion, std::size_t which) const {
  const double* zc = features_.cations.z.row_ptr(static_cast<std::size_t>(cation));
  const double* za = features_.anions.z.row_ptr(static_cast<std::size_t>(anion));
  const std::vector<double>& w = weights_[which];
  double acc = 0.0;
  double dot = 0.0;
  for (std::size_t d = 0; d < kLatentDim; ++d) {
    acc += w[d] * zc[d] + w[kLatentDim + d] * za[d] + w[2 * kLatentDim + d] * zc[d] * za[d];
    dot += zc[d] * za[d];
  }
  return acc + tanh_gain_[which] * std::tanh(dot);
}

double Oracle::true_property(const data::ILKey& il, Property p, double temperature_k,
                             double pressure_bar) const {
  if (il.cation_id < 0 || il.cation_id >= num_cations_ || il.anion_id < 0 ||
      il.anion_id >= num_anions_)
    throw std::out_of_range("Oracle::true_property: IL outside the generated universe");
  if (temperature_k < 273.0 || temperature_k > 473.0)
    throw std::invalid_argument("Oracle::true_property: temperature outside [273, 473] K");
  if (pressure_bar < 0.5 || pressure_bar > 100.0)
    throw std::invalid_argument("Oracle::true_property: pressure outside [0.5, 100] bar");

  const int c = il.cation_id, a = il.anion_id;
  switch (p) {
    case Property::density:
      return 1250.0 + 150.0 * interaction(c, a, 0) - 0.6 * (temperature_k - 298.0) +
             0.045 * (pressure_bar - 1.0);
    case Property::ln_viscosity:
      return 1.5 + 2.0 * interaction(c, a, 1) + 800.0 / (temperature_k - 150.0);
    case Property::surface_tension: {
      const double mu = std::exp(true_property(il, Property::ln_viscosity, temperature_k, 1.0));
      const double rho = true_property(il, Property::density, temperature_k, pressure_bar);
      return config_.k3 * std::pow(mu, config_.mu_exponent) *
             std::pow(rho, config_.rho_exponent);
    }
    case Property::heat_capacity:
      return 300.0 + 120.0 * interaction(c, a, 2) + 0.8 * (temperature_k - 298.0);
    case Property::melting_point:
      return 280.0 + 60.0 * interaction(c, a, 3);
  }
  throw std::invalid_argument("Oracle::true_property: unknown property");
}

SynthDatasets Oracle::emit_datasets(const SamplingPlan& plan) const {
  plan.validate();
  if (plan.num_cations != num_cations_ || plan.num_anions != num_anions_)
    throw std::invalid_argument("emit_datasets: plan universe differs from oracle universe");

  SynthDatasets out;

  // Experimental IL subsets first; they are excluded from every pre-training
  // set. Each property draws its ILs inside a seeded ion subpool so ions
  // recur across measured ILs the way they do in literature compilations.
  data::ILKeySet forbidden;
  for (Property p : kAllProperties) {
    Rng rng(derive_seed(config_.seed, kTagExpIls, property_index(p)));
    const auto pick_pool = [&rng](int universe, int pool_size) {
      std::vector<int> ids(static_cast<std::size_t>(universe));
      for (int i = 0; i < universe; ++i) ids[static_cast<std::size_t>(i)] = i;
      if (pool_size <= 0 || pool_size >= universe) return ids;
      rng.shuffle(ids);
      ids.resize(static_cast<std::size_t>(pool_size));
      return ids;
    };
    const std::vector<int> pool_c = pick_pool(num_cations_, plan.experimental_cation_pool);
    const std::vector<int> pool_a = pick_pool(num_anions_, plan.experimental_anion_pool);

    data::ILKeySet chosen;
    std::vector<data::ILKey> ils;
    while (ils.size() < static_cast<std::size_t>(plan.experimental_ils_per_property)) {
      data::ILKey il{pool_c[rng.below(pool_c.size())], pool_a[rng.below(pool_a.size())]};
      if (chosen.insert(il).second) ils.push_back(il);
    }
    forbidden.insert(ils.begin(), ils.end());
    out.experimental_ils.emplace(p, std::move(ils));
  }

  const std::vector<data::ILKey> sampled = data::sample_pairs(
      num_cations_, num_anions_, plan.anions_per_cation, derive_seed(config_.seed, kTagPairs));
  out.pretrain_ils = data::exclude_ils(sampled, forbidden);

  // Dense simulated sets: fixed 298 K / 1 bar, affine simulation bias + noise.
  for (Property p : kPretrainProperties) {
    const std::size_t pi = property_index(p);
    std::vector<data::PropertyRecord> records;
    records.reserve(out.pretrain_ils.size());
    for (const data::ILKey& il : out.pretrain_ils) {
      Rng rng(derive_seed(config_.seed, kTagPre, pi, il_tag(il)));
      data::PropertyRecord rec{il, p, 298.0, 1.0, 0.0};
      const bool outlier = p == Property::ln_viscosity && config_.outlier_fraction > 0.0 &&
                           rng.next_unit() < config_.outlier_fraction;
      if (outlier) {
        // Unrealistically large simulated value, drawn between 20 and the
        // configured magnitude.
        rec.value = 20.0 + (config_.outlier_magnitude - 20.0) * rng.next_unit();
      } else {
        const double truth = true_property(il, p, 298.0, 1.0);
        rec.value = truth * config_.bias_multiplicative[pi] + config_.bias_additive[pi] +
                    config_.noise_std[pi] * rng.next_normal();
      }
      records.push_back(rec);
    }
    out.pretrain.emplace(p, std::move(records));
  }

  // Sparse experimental-like sets over a temperature grid.
  for (Property p : kAllProperties) {
    const std::size_t pi = property_index(p);
    std::vector<data::PropertyRecord> records;
    for (const data::ILKey& il : out.experimental_ils.at(p)) {
      Rng rng(derive_seed(config_.seed, kTagExp, pi, il_tag(il)));
      if (is_condition_free(p)) {
        // A single structure-only measurement with placeholder conditions.
        data::PropertyRecord rec{il, p, 298.15, 1.0,
                                 true_property(il, p, 298.15, 1.0) +
                                     config_.noise_std[pi] * rng.next_normal()};
        records.push_back(rec);
        continue;
      }
      const int spread = plan.max_temps_per_il - plan.min_temps_per_il + 1;
      const int n_temps =
          plan.min_temps_per_il + static_cast<int>(rng.below(static_cast<std::uint64_t>(spread)));
      for (int t = 0; t < n_temps; ++t) {
        data::PropertyRecord rec;
        rec.il = il;
        rec.property = p;
        rec.temperature_k = rng.uniform(plan.temperature_min_k, plan.temperature_max_k);
        rec.pressure_bar = p == Property::density
                               ? rng.uniform(plan.pressure_min_bar, plan.pressure_max_bar)
                               : 1.0;
        rec.value = true_property(il, p, rec.temperature_k, rec.pressure_bar) +
                    config_.noise_std[pi] * rng.next_normal();
        records.push_back(rec);
      }
    }
    out.experimental.emplace(p, std::move(records));
  }
  return out;
}

}  // namespace ilnrs::oracle
