#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ilnrs/data.hpp"
#include "ilnrs/rng.hpp"

using namespace ilnrs;
using data::ILKey;

namespace {

const char* kHeader = "cation,anion,property,temperature_K,pressure_bar,value\n";

data::Dataset load_string(const std::string& body, const data::LoadOptions& opt = {}) {
  std::istringstream in(std::string(kHeader) + body);
  return data::load_records(in, "test.csv", opt);
}

}  // namespace

// ---- vocabulary ----------------------------------------------------------------

TEST_CASE("vocabulary is a bijection with first-appearance ids") {
  data::IonVocabulary v(data::IonVocabulary::Role::cation);
  CHECK(v.add("im14") == 0);
  CHECK(v.add("py4") == 1);
  CHECK(v.add("im14") == 0);  // repeat keeps the id
  CHECK(v.size() == 2);
  CHECK(v.id_of("py4") == 1);
  CHECK(v.name_of(0) == "im14");
  CHECK_THROWS_AS(v.id_of("absent"), std::out_of_range);
  CHECK_THROWS_AS(v.name_of(7), std::out_of_range);
}

TEST_CASE("vocabulary fingerprint binds the id order") {
  data::IonVocabulary a(data::IonVocabulary::Role::anion);
  data::IonVocabulary b(data::IonVocabulary::Role::anion);
  a.add("cl");
  a.add("br");
  b.add("br");
  b.add("cl");
  CHECK(a.fingerprint() != b.fingerprint());
  data::IonVocabulary c(data::IonVocabulary::Role::anion);
  c.add("cl");
  c.add("br");
  CHECK(a.fingerprint() == c.fingerprint());
}

// ---- record loading --------------------------------------------------------------

TEST_CASE("empty file with header loads an empty dataset") {
  const data::Dataset ds = load_string("");
  CHECK(ds.records.empty());
  CHECK(ds.cations.size() == 0);
  CHECK(ds.anions.size() == 0);
}

TEST_CASE("duplicate (il, property, T, P) rows are both retained by default") {
  const std::string body =
      "c1,a1,density,298,1,1100\n"
      "c1,a1,density,298,1,1102\n"
      "c1,a1,density,298,1,1100\n";
  CHECK(load_string(body).records.size() == 3);

  data::LoadOptions dedupe;
  dedupe.deduplicate = true;
  CHECK(load_string(body, dedupe).records.size() == 1);
}

TEST_CASE("malformed rows are rejected with their line number") {
  CHECK_THROWS_WITH_AS(load_string("c1,a1,density,-5,1,1100\n"),
                       doctest::Contains("test.csv:2"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(load_string("c1,a1,density,298,1\n"), doctest::Contains("test.csv:2"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(load_string("c1,a1,density,abc,1,1100\n"), doctest::Contains("non-numeric"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(load_string("c1,a1,enthalpy,298,1,1100\n"),
                       doctest::Contains("unknown property tag"), std::invalid_argument);
  std::istringstream bad_header("cation,anion\nc1,a1\n");
  CHECK_THROWS_AS(data::load_records(bad_header, "h.csv"), std::invalid_argument);
}

TEST_CASE("fixed vocabularies reject unknown ion names") {
  data::IonVocabulary cations(data::IonVocabulary::Role::cation);
  data::IonVocabulary anions(data::IonVocabulary::Role::anion);
  cations.add("c1");
  anions.add("a1");
  data::LoadOptions opt;
  opt.cations = &cations;
  opt.anions = &anions;
  CHECK(load_string("c1,a1,density,298,1,1100\n", opt).records.size() == 1);
  CHECK_THROWS_AS(load_string("c9,a1,density,298,1,1100\n", opt), std::out_of_range);
}

TEST_CASE("vocabulary ids are stable across reloads of the same file") {
  const std::string body =
      "zz,a2,density,298,1,1\n"
      "aa,a1,density,298,1,2\n"
      "zz,a1,density,298,1,3\n";
  const data::Dataset first = load_string(body);
  const data::Dataset second = load_string(body);
  CHECK(first.cations.names() == second.cations.names());
  CHECK(first.anions.names() == second.anions.names());
  CHECK(first.cations.id_of("zz") == 0);  // first appearance wins
  CHECK(first.cations.id_of("aa") == 1);
}

TEST_CASE("records CSV round-trips through write and load") {
  const std::string body =
      "c1,a1,ln_viscosity,303.15,1,4.25\n"
      "c2,a1,ln_viscosity,313.15,1,3.75\n";
  const data::Dataset ds = load_string(body);
  std::ostringstream out;
  data::write_records_csv(out, ds.records, ds.cations, ds.anions);
  std::istringstream in(out.str());
  const data::Dataset again = data::load_records(in, "roundtrip.csv");
  REQUIRE(again.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(again.records[i].il == ds.records[i].il);
    CHECK(again.records[i].value == ds.records[i].value);
    CHECK(again.records[i].temperature_k == ds.records[i].temperature_k);
  }
}

// ---- pair sampling ------------------------------------------------------------------

TEST_CASE("sample_pairs with n equal to the anion count is the full product") {
  const auto pairs = data::sample_pairs(3, 4, 4, 99);
  CHECK(pairs.size() == 12);
  std::set<std::pair<int, int>> seen;
  for (const ILKey& p : pairs) seen.emplace(p.cation_id, p.anion_id);
  CHECK(seen.size() == 12);
}

TEST_CASE("the full-scale stratified sampling yields 113,400 pairs") {
  const auto pairs = data::sample_pairs(2268, 311, 50, 1);
  CHECK(pairs.size() == 113400);
  std::set<int> anions;
  for (int i = 0; i < 50; ++i) anions.insert(pairs[static_cast<std::size_t>(i)].anion_id);
  CHECK(anions.size() == 50);  // distinct within one cation
}

TEST_CASE("sample_pairs is deterministic per seed") {
  const auto a = data::sample_pairs(5, 9, 1, 7);
  const auto b = data::sample_pairs(5, 9, 1, 7);
  CHECK(a == b);
  const auto c = data::sample_pairs(5, 9, 1, 8);
  CHECK(a != c);
}

TEST_CASE("sample_pairs rejects impossible requests") {
  CHECK_THROWS_AS(data::sample_pairs(2, 3, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(data::sample_pairs(0, 3, 1, 0), std::invalid_argument);
}

TEST_CASE("sample_pairs marginal uniformity over many seeds") {
  // n = 1: each anion should be drawn ~uniformly for a fixed cation.
  const int num_anions = 20;
  const int trials = 10000;
  std::vector<int> counts(num_anions, 0);
  for (int seed = 0; seed < trials; ++seed) {
    const auto pairs = data::sample_pairs(3, num_anions, 1, static_cast<std::uint64_t>(seed));
    ++counts[static_cast<std::size_t>(pairs[1].anion_id)];  // middle cation
  }
  const double p = 1.0 / num_anions;
  const double expected = trials * p;
  const double sigma = std::sqrt(trials * p * (1 - p));
  for (int c : counts) CHECK(std::fabs(c - expected) < 5.0 * sigma);
}

// ---- exclusion -----------------------------------------------------------------------

TEST_CASE("exclude_ils basics") {
  const auto pairs = data::sample_pairs(4, 4, 2, 3);
  CHECK(data::exclude_ils(pairs, {}) == pairs);

  data::ILKeySet all(pairs.begin(), pairs.end());
  CHECK(data::exclude_ils(pairs, all).empty());
}

TEST_CASE("exclude_ils agrees with a brute-force set difference") {
  Rng rng(17);
  std::vector<ILKey> pairs;
  for (int i = 0; i < 100; ++i)
    pairs.push_back(ILKey{static_cast<int>(rng.below(10)), static_cast<int>(rng.below(10))});
  data::ILKeySet forbidden;
  for (int i = 0; i < 30; ++i)
    forbidden.insert(ILKey{static_cast<int>(rng.below(10)), static_cast<int>(rng.below(10))});

  const auto kept = data::exclude_ils(pairs, forbidden);

  std::vector<ILKey> expected;  // independent route: linear scan per element
  for (const ILKey& p : pairs) {
    bool hit = false;
    for (const ILKey& f : forbidden)
      if (f == p) hit = true;
    if (!hit) expected.push_back(p);
  }
  CHECK(kept == expected);
}

// ---- k-fold by IL ---------------------------------------------------------------------

namespace {

std::vector<data::PropertyRecord> records_for(const std::vector<ILKey>& ils, int per_il = 1) {
  std::vector<data::PropertyRecord> records;
  for (const ILKey& il : ils)
    for (int i = 0; i < per_il; ++i)
      records.push_back({il, Property::density, 298.0 + i, 1.0, 1000.0 + i});
  return records;
}

}  // namespace

TEST_CASE("kfold_by_il splits 4 ILs into 2 balanced folds") {
  const auto records = records_for({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, 3);
  const data::FoldPlan plan = data::kfold_by_il(records, 2, 11);
  CHECK(plan.k == 2);
  int fold0 = 0, fold1 = 0;
  for (const auto& [il, fold] : plan.assignment) (fold == 0 ? fold0 : fold1)++;
  CHECK(fold0 == 2);
  CHECK(fold1 == 2);
}

TEST_CASE("kfold_by_il rejects degenerate fold counts") {
  const auto records = records_for({{0, 0}, {1, 1}});
  CHECK_THROWS_AS(data::kfold_by_il(records, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(data::kfold_by_il(records, 3, 0), std::invalid_argument);
}

TEST_CASE("kfold_by_il: exhaustive leakage scan on 97 ILs") {
  Rng rng(23);
  std::vector<ILKey> ils;
  for (int i = 0; i < 97; ++i) ils.push_back(ILKey{i / 10, i % 10});
  std::vector<data::PropertyRecord> records;
  for (int r = 0; r < 1000; ++r) {
    const ILKey il = ils[static_cast<std::size_t>(rng.below(ils.size()))];
    records.push_back({il, Property::density, 290.0 + static_cast<double>(rng.below(60)), 1.0,
                       1000.0 + rng.next_normal()});
  }
  const data::FoldPlan plan = data::kfold_by_il(records, 10, 5);

  // Every IL in exactly one fold, spread <= 1.
  std::vector<int> fold_sizes(10, 0);
  for (const auto& [il, fold] : plan.assignment) ++fold_sizes[static_cast<std::size_t>(fold)];
  int total = 0;
  for (int s : fold_sizes) total += s;
  CHECK(total == static_cast<int>(data::distinct_ils(records).size()));
  const auto [lo, hi] = std::minmax_element(fold_sizes.begin(), fold_sizes.end());
  CHECK(*hi - *lo <= 1);

  // Brute-force overlap scan: no IL on both sides of any fold.
  for (int f = 0; f < 10; ++f) {
    data::ILKeySet train_ils, test_ils;
    for (const data::PropertyRecord& r : records)
      (plan.fold_of(r.il) == f ? test_ils : train_ils).insert(r.il);
    for (const ILKey& il : test_ils) CHECK(train_ils.count(il) == 0);
  }
}

TEST_CASE("kfold_by_il ignores record order") {
  auto records = records_for({{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {2, 1}}, 2);
  const data::FoldPlan a = data::kfold_by_il(records, 3, 42);
  std::reverse(records.begin(), records.end());
  const data::FoldPlan b = data::kfold_by_il(records, 3, 42);
  CHECK(a.assignment == b.assignment);
}

// ---- scalers ----------------------------------------------------------------------------

TEST_CASE("fit_scaler: constant column maps to zeros and round-trips") {
  const std::vector<double> constant = {5.0, 5.0, 5.0};
  const data::Scaler s = data::fit_scaler(constant);
  CHECK(s.mean == 5.0);
  CHECK(s.stddev == 1.0);
  for (double v : constant) CHECK(s.transform(v) == 0.0);
  CHECK(s.inverse_transform(s.transform(123.25)) == doctest::Approx(123.25).epsilon(1e-10));
}

TEST_CASE("fit_scaler: population statistics of {0, 2}") {
  const std::vector<double> values = {0.0, 2.0};
  const data::Scaler s = data::fit_scaler(values);
  CHECK(s.mean == doctest::Approx(1.0));
  CHECK(s.stddev == doctest::Approx(1.0));
  CHECK_THROWS_AS(data::fit_scaler({}), std::invalid_argument);
}

TEST_CASE("scaler round-trip identity over random values") {
  Rng rng(4);
  std::vector<double> values(100);
  for (double& v : values) v = 1000.0 * rng.next_normal() + 50.0;
  const data::Scaler s = data::fit_scaler(values);
  for (double v : values)
    CHECK(s.inverse_transform(s.transform(v)) == doctest::Approx(v).epsilon(1e-10));
}

TEST_CASE("condition scaler maps a degenerate column to exactly zero everywhere") {
  const std::vector<double> constant = {1.0, 1.0, 1.0, 1.0};
  const data::ConditionScaler s = data::fit_condition_scaler(constant);
  CHECK(s.degenerate);
  CHECK(s.transform(1.0) == 0.0);
  CHECK(s.transform(1.5) == 0.0);
  CHECK(s.transform(-40.0) == 0.0);

  const std::vector<double> varied = {280.0, 300.0, 320.0};
  const data::ConditionScaler v = data::fit_condition_scaler(varied);
  CHECK(!v.degenerate);
  CHECK(v.transform(300.0) == doctest::Approx(0.0));
}
