#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ilnrs/property.hpp"

namespace ilnrs::data {

// Bidirectional name <-> dense id map for one ion role. Ids are assigned in
// first-appearance order, so reloading the same file reproduces them exactly.
class IonVocabulary {
 public:
  enum class Role { cation, anion };

  explicit IonVocabulary(Role role) : role_(role) {}

  // Returns the existing id or assigns the next one.
  int add(const std::string& name);

  // Throws std::out_of_range for unknown names.
  int id_of(const std::string& name) const;
  bool contains(const std::string& name) const { return ids_.count(name) > 0; }
  const std::string& name_of(int id) const;

  std::size_t size() const { return names_.size(); }
  Role role() const { return role_; }
  const std::vector<std::string>& names() const { return names_; }

  // Content hash binding a model artifact to this exact id assignment.
  std::uint64_t fingerprint() const;

 private:
  Role role_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

// An ionic liquid is identified solely by its (cation, anion) id pair.
struct ILKey {
  int cation_id = -1;
  int anion_id = -1;

  bool operator==(const ILKey&) const = default;
};

struct ILKeyHash {
  std::size_t operator()(const ILKey& k) const {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.cation_id)) << 32) |
                                      static_cast<std::uint32_t>(k.anion_id));
  }
};

using ILKeySet = std::unordered_set<ILKey, ILKeyHash>;

// One observation. Melting-point rows carry placeholder conditions that the
// models never read.
struct PropertyRecord {
  ILKey il;
  Property property = Property::density;
  double temperature_k = 0.0;
  double pressure_bar = 0.0;
  double value = 0.0;
};

// Assignment of ILs (not records) to k folds; the leakage-safety unit.
struct FoldPlan {
  int k = 0;
  std::unordered_map<ILKey, int, ILKeyHash> assignment;

  int fold_of(const ILKey& il) const;
};

struct Dataset {
  IonVocabulary cations{IonVocabulary::Role::cation};
  IonVocabulary anions{IonVocabulary::Role::anion};
  std::vector<PropertyRecord> records;
};

struct LoadOptions {
  // When set, ion names must already exist in the supplied vocabularies and
  // no new ids are assigned. Keeps id spaces consistent across files.
  const IonVocabulary* cations = nullptr;
  const IonVocabulary* anions = nullptr;
  // Opt-in: drop later rows with an identical (il, property, T, P) tuple.
  bool deduplicate = false;
};

// Reads the records CSV `cation,anion,property,temperature_K,pressure_bar,value`.
// Header row mandatory; malformed rows raise with their line number.
Dataset load_records(const std::string& path, const LoadOptions& opt = {});
Dataset load_records(std::istream& in, const std::string& origin, const LoadOptions& opt = {});

void write_records_csv(std::ostream& out, std::span<const PropertyRecord> records,
                       const IonVocabulary& cations, const IonVocabulary& anions);

// Reads / writes the ions CSV `role,name` (role in {cation, anion}).
void load_ions(const std::string& path, IonVocabulary& cations, IonVocabulary& anions);
void write_ions_csv(std::ostream& out, const IonVocabulary& cations, const IonVocabulary& anions);

// Stratified pair sampling: for every cation, `anions_per_cation` distinct
// anions drawn uniformly without replacement. Deterministic per seed.
std::vector<ILKey> sample_pairs(int num_cations, int num_anions, int anions_per_cation,
                                std::uint64_t seed);

// Drops every pair present in `forbidden`, preserving order otherwise.
std::vector<ILKey> exclude_ils(std::span<const ILKey> pairs, const ILKeySet& forbidden);

// IL-grouped k-fold plan: distinct ILs shuffled with a seeded generator and
// dealt round-robin, so fold sizes differ by at most one IL.
FoldPlan kfold_by_il(std::span<const PropertyRecord> records, int k, std::uint64_t seed);

// z-score statistics (population stddev). A zero-variance column keeps
// stddev 1 so transform/inverse_transform round-trip for any input.
struct Scaler {
  double mean = 0.0;
  double stddev = 1.0;

  double transform(double x) const { return (x - mean) / stddev; }
  double inverse_transform(double z) const { return z * stddev + mean; }
};

Scaler fit_scaler(std::span<const double> values);

// Condition (T/P) scaling: a zero-variance column maps every input, seen or
// unseen, to exactly 0 so a degenerate condition cannot perturb predictions.
struct ConditionScaler {
  double mean = 0.0;
  double stddev = 1.0;
  bool degenerate = false;

  double transform(double x) const { return degenerate ? 0.0 : (x - mean) / stddev; }
};

ConditionScaler fit_condition_scaler(std::span<const double> values);

// Distinct ILs in record order of first appearance.
std::vector<ILKey> distinct_ils(std::span<const PropertyRecord> records);

}  // namespace ilnrs::data
