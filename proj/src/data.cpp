#include "ilnrs/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ilnrs/rng.hpp"

namespace ilnrs::data {

namespace {

const char* role_name(IonVocabulary::Role r) {
  return r == IonVocabulary::Role::cation ? "cation" : "anion";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const std::string& origin, std::size_t line,
                    const char* column) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument(origin + ":" + std::to_string(line) + ": non-numeric " + column +
                                " '" + s + "'");
  }
  if (pos != s.size())
    throw std::invalid_argument(origin + ":" + std::to_string(line) + ": non-numeric " + column +
                                " '" + s + "'");
  return v;
}

// %.17g round-trips every finite double exactly.
std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// ---- IonVocabulary ----------------------------------------------------------

int IonVocabulary::add(const std::string& name) {
  if (name.empty()) throw std::invalid_argument("ion name must not be empty");
  auto [it, inserted] = ids_.try_emplace(name, static_cast<int>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

int IonVocabulary::id_of(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end())
    throw std::out_of_range(std::string("unknown ") + role_name(role_) + " '" + name + "'");
  return it->second;
}

const std::string& IonVocabulary::name_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size())
    throw std::out_of_range(std::string(role_name(role_)) + " id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(names_.size()));
  return names_[static_cast<std::size_t>(id)];
}

std::uint64_t IonVocabulary::fingerprint() const {
  // FNV-1a over role and the ordered name list; order changes the hash.
  std::uint64_t h = 14695981039346656037ULL;
  auto feed = [&h](const char* s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(s[i]);
      h *= 1099511628211ULL;
    }
  };
  const char* role = role_name(role_);
  feed(role, std::string(role).size());
  for (const std::string& name : names_) {
    feed("\x1f", 1);
    feed(name.data(), name.size());
  }
  return h;
}

int FoldPlan::fold_of(const ILKey& il) const {
  auto it = assignment.find(il);
  if (it == assignment.end()) throw std::out_of_range("FoldPlan: IL not in plan");
  return it->second;
}

// ---- CSV I/O ---------------------------------------------------------------

Dataset load_records(const std::string& path, const LoadOptions& opt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open records file '" + path + "'");
  return load_records(in, path, opt);
}

Dataset load_records(std::istream& in, const std::string& origin, const LoadOptions& opt) {
  Dataset ds;
  if (opt.cations) ds.cations = *opt.cations;
  if (opt.anions) ds.anions = *opt.anions;
  const bool fixed_vocab = opt.cations != nullptr || opt.anions != nullptr;

  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument(origin + ": missing header row");
  {
    auto header = split_csv_line(line);
    const std::vector<std::string> expected = {"cation",        "anion",        "property",
                                               "temperature_K", "pressure_bar", "value"};
    if (header != expected)
      throw std::invalid_argument(origin + ":1: header must be "
                                  "cation,anion,property,temperature_K,pressure_bar,value");
  }

  std::unordered_set<std::string> seen;  // dedupe keys, only if requested
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 6)
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": expected 6 columns, got " +
                                  std::to_string(fields.size()));

    PropertyRecord rec;
    if (fixed_vocab) {
      try {
        rec.il.cation_id = ds.cations.id_of(fields[0]);
        rec.il.anion_id = ds.anions.id_of(fields[1]);
      } catch (const std::out_of_range& e) {
        throw std::out_of_range(origin + ":" + std::to_string(line_no) + ": " + e.what());
      }
    } else {
      rec.il.cation_id = ds.cations.add(fields[0]);
      rec.il.anion_id = ds.anions.add(fields[1]);
    }
    try {
      rec.property = property_from_string(fields[2]);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": unknown property tag '" +
                                  fields[2] + "'");
    }
    rec.temperature_k = parse_double(fields[3], origin, line_no, "temperature_K");
    rec.pressure_bar = parse_double(fields[4], origin, line_no, "pressure_bar");
    rec.value = parse_double(fields[5], origin, line_no, "value");

    if (!(rec.temperature_k > 0.0))
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": temperature_K must be > 0");
    if (!(rec.pressure_bar > 0.0))
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": pressure_bar must be > 0");
    if (!std::isfinite(rec.value))
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": value must be finite");

    if (opt.deduplicate) {
      std::string key = fields[0] + '|' + fields[1] + '|' + fields[2] + '|' + fields[3] + '|' + fields[4];
      if (!seen.insert(std::move(key)).second) continue;
    }
    ds.records.push_back(rec);
  }
  return ds;
}

void write_records_csv(std::ostream& out, std::span<const PropertyRecord> records,
                       const IonVocabulary& cations, const IonVocabulary& anions) {
  out << "cation,anion,property,temperature_K,pressure_bar,value\n";
  for (const PropertyRecord& r : records) {
    out << cations.name_of(r.il.cation_id) << ',' << anions.name_of(r.il.anion_id) << ','
        << to_string(r.property) << ',' << format_double(r.temperature_k) << ','
        << format_double(r.pressure_bar) << ',' << format_double(r.value) << '\n';
  }
}

void load_ions(const std::string& path, IonVocabulary& cations, IonVocabulary& anions) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ions file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"role", "name"})
    throw std::invalid_argument(path + ":1: header must be role,name");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 2)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected 2 columns");
    if (fields[0] == "cation")
      cations.add(fields[1]);
    else if (fields[0] == "anion")
      anions.add(fields[1]);
    else
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": role must be cation or anion");
  }
}

void write_ions_csv(std::ostream& out, const IonVocabulary& cations, const IonVocabulary& anions) {
  out << "role,name\n";
  for (const std::string& n : cations.names()) out << "cation," << n << '\n';
  for (const std::string& n : anions.names()) out << "anion," << n << '\n';
}

// ---- sampling / folds --------------------------------------------------------

std::vector<ILKey> sample_pairs(int num_cations, int num_anions, int anions_per_cation,
                                std::uint64_t seed) {
  if (num_cations <= 0 || num_anions <= 0)
    throw std::invalid_argument("sample_pairs: vocabulary sizes must be > 0");
  if (anions_per_cation <= 0 || anions_per_cation > num_anions)
    throw std::invalid_argument("sample_pairs: anions_per_cation must lie in [1, num_anions]");

  std::vector<ILKey> pairs;
  pairs.reserve(static_cast<std::size_t>(num_cations) * static_cast<std::size_t>(anions_per_cation));
  std::vector<int> pool(static_cast<std::size_t>(num_anions));
  for (int c = 0; c < num_cations; ++c) {
    // Partial Fisher-Yates: first n entries are a uniform sample w/o replacement.
    for (int a = 0; a < num_anions; ++a) pool[static_cast<std::size_t>(a)] = a;
    Rng rng(derive_seed(seed, 0x70616972ULL, static_cast<std::uint64_t>(c)));
    for (int i = 0; i < anions_per_cation; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(i) +
          static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(num_anions - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      pairs.push_back(ILKey{c, pool[static_cast<std::size_t>(i)]});
    }
  }
  return pairs;
}

std::vector<ILKey> exclude_ils(std::span<const ILKey> pairs, const ILKeySet& forbidden) {
  std::vector<ILKey> kept;
  kept.reserve(pairs.size());
  for (const ILKey& p : pairs)
    if (forbidden.find(p) == forbidden.end()) kept.push_back(p);
  return kept;
}

std::vector<ILKey> distinct_ils(std::span<const PropertyRecord> records) {
  std::vector<ILKey> ils;
  ILKeySet seen;
  for (const PropertyRecord& r : records)
    if (seen.insert(r.il).second) ils.push_back(r.il);
  return ils;
}

FoldPlan kfold_by_il(std::span<const PropertyRecord> records, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_by_il: k must be >= 2 (no held-out fold otherwise)");
  std::vector<ILKey> ils = distinct_ils(records);
  // Canonical order before the seeded shuffle: the plan depends on the IL set
  // and the seed, never on record order.
  std::sort(ils.begin(), ils.end(), [](const ILKey& a, const ILKey& b) {
    return a.cation_id != b.cation_id ? a.cation_id < b.cation_id : a.anion_id < b.anion_id;
  });
  if (ils.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("kfold_by_il: fewer distinct ILs (" + std::to_string(ils.size()) +
                                ") than folds (" + std::to_string(k) + ")");
  Rng rng(derive_seed(seed, 0x666f6c64ULL));
  rng.shuffle(ils);
  FoldPlan plan;
  plan.k = k;
  for (std::size_t i = 0; i < ils.size(); ++i)
    plan.assignment.emplace(ils[i], static_cast<int>(i % static_cast<std::size_t>(k)));
  return plan;
}

// ---- scalers -----------------------------------------------------------------

Scaler fit_scaler(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("fit_scaler: no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  Scaler s;
  s.mean = mean;
  s.stddev = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

ConditionScaler fit_condition_scaler(std::span<const double> values) {
  const Scaler base = fit_scaler(values);
  ConditionScaler s;
  s.mean = base.mean;
  double var = 0.0;
  for (double v : values) var += (v - base.mean) * (v - base.mean);
  s.degenerate = var <= 0.0;
  s.stddev = s.degenerate ? 1.0 : base.stddev;
  return s;
}

}  // namespace ilnrs::data
