#include "ilnrs/artifact.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace ilnrs::io {

namespace {

using nlohmann::json;

constexpr char kMagic[6] = {'I', 'L', 'N', 'R', 'S', '\n'};

static_assert(std::endian::native == std::endian::little,
              "artifact payload is little-endian; byte-swapping is not implemented");

std::uint64_t fnv1a64(const unsigned char* bytes, std::size_t n, std::uint64_t h = 14695981039346656037ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void append_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void append_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

struct NamedTensor {
  std::string name;
  const Matrix* matrix;
};

std::vector<NamedTensor> encoder_tensors(const model::EncoderSnapshot& e) {
  std::vector<NamedTensor> out;
  out.push_back({"cation_table", &e.cation_table().table.value});
  out.push_back({"anion_table", &e.anion_table().table.value});
  auto branch = [&out](const char* prefix, const model::Branch& b) {
    out.push_back({std::string(prefix) + ".proj.weight", &b.proj.weight.value});
    out.push_back({std::string(prefix) + ".proj.bias", &b.proj.bias.value});
    for (std::size_t i = 0; i < b.blocks.size(); ++i) {
      out.push_back({std::string(prefix) + ".block" + std::to_string(i) + ".weight",
                     &b.blocks[i].fc.weight.value});
      out.push_back({std::string(prefix) + ".block" + std::to_string(i) + ".bias",
                     &b.blocks[i].fc.bias.value});
    }
  };
  branch("cation_branch", e.cation_branch());
  branch("anion_branch", e.anion_branch());
  return out;
}

std::vector<NamedTensor> head_tensors(const model::Head& h) {
  return {
      {"head.fc1.weight", &h.fc1.weight.value}, {"head.fc1.bias", &h.fc1.bias.value},
      {"head.fc2.weight", &h.fc2.weight.value}, {"head.fc2.bias", &h.fc2.bias.value},
      {"head.out.weight", &h.out.weight.value}, {"head.out.bias", &h.out.bias.value},
  };
}

json encoder_config_json(const model::PretrainConfig& cfg) {
  return json{{"source_property", to_string(cfg.property)},
              {"embedding_dim", cfg.embedding_dim},
              {"branch_width", cfg.branch_width},
              {"blocks_per_branch", cfg.blocks_per_branch},
              {"head_width", cfg.head_width},
              {"dropout_rate", cfg.dropout_rate},
              {"learning_rate", cfg.learning_rate}};
}

model::PretrainConfig encoder_config_from_json(const json& j) {
  model::PretrainConfig cfg;
  cfg.property = property_from_string(j.at("source_property").get<std::string>());
  cfg.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  cfg.branch_width = j.at("branch_width").get<std::size_t>();
  cfg.blocks_per_branch = j.at("blocks_per_branch").get<std::size_t>();
  cfg.head_width = j.at("head_width").get<std::size_t>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  return cfg;
}

json vocabulary_json(const data::IonVocabulary& cations, const data::IonVocabulary& anions) {
  return json{{"cations", cations.names()},
              {"anions", anions.names()},
              {"cation_fingerprint", cations.fingerprint()},
              {"anion_fingerprint", anions.fingerprint()}};
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write artifact '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to artifact '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

void save_artifact(const json& header, const std::vector<NamedTensor>& tensors,
                   const std::string& path) {
  json full = header;
  json dir = json::array();
  for (const NamedTensor& t : tensors)
    dir.push_back(json{{"name", t.name}, {"rows", t.matrix->rows}, {"cols", t.matrix->cols}});
  full["tensors"] = dir;
  const std::string header_str = full.dump();

  std::string bytes;
  bytes.append(kMagic, sizeof(kMagic));
  append_u32(bytes, static_cast<std::uint32_t>(kArtifactVersion));
  append_u64(bytes, header_str.size());
  bytes += header_str;
  for (const NamedTensor& t : tensors)
    bytes.append(reinterpret_cast<const char*>(t.matrix->data.data()),
                 t.matrix->data.size() * sizeof(double));
  append_u64(bytes, fnv1a64(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
  write_file_atomic(path, bytes);
}

struct RawArtifact {
  json header;
  std::vector<std::pair<std::string, Matrix>> tensors;
};

RawArtifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open artifact '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::size_t min_size = sizeof(kMagic) + 4 + 8 + 8;
  if (bytes.size() < min_size)
    throw std::runtime_error("artifact '" + path + "': truncated payload");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("artifact '" + path + "': bad magic");

  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), 4);
  if (version != static_cast<std::uint32_t>(kArtifactVersion))
    throw std::runtime_error("artifact '" + path + "': unsupported format version " +
                             std::to_string(version));

  std::uint64_t stored_sum = 0;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - 8, 8);
  const std::uint64_t computed =
      fnv1a64(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size() - 8);
  if (stored_sum != computed)
    throw std::runtime_error("artifact '" + path + "': checksum mismatch (corrupted file)");

  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + sizeof(kMagic) + 4, 8);
  const std::size_t header_at = sizeof(kMagic) + 4 + 8;
  if (header_at + header_len + 8 > bytes.size())
    throw std::runtime_error("artifact '" + path + "': truncated header");

  RawArtifact raw;
  try {
    raw.header = json::parse(bytes.substr(header_at, header_len));
  } catch (const json::exception& e) {
    throw std::runtime_error("artifact '" + path + "': malformed header (" + e.what() + ")");
  }

  std::size_t at = header_at + header_len;
  const std::size_t payload_end = bytes.size() - 8;
  for (const json& t : raw.header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::size_t rows = t.at("rows").get<std::size_t>();
    const std::size_t cols = t.at("cols").get<std::size_t>();
    const std::size_t n_bytes = rows * cols * sizeof(double);
    if (at + n_bytes > payload_end)
      throw std::runtime_error("artifact '" + path + "': truncated tensor payload (" + name + ")");
    Matrix m(rows, cols);
    std::memcpy(m.data.data(), bytes.data() + at, n_bytes);
    at += n_bytes;
    raw.tensors.emplace_back(name, std::move(m));
  }
  if (at != payload_end)
    throw std::runtime_error("artifact '" + path + "': trailing bytes after tensor payload");
  return raw;
}

data::IonVocabulary vocabulary_from_json(const json& v, const char* key,
                                         data::IonVocabulary::Role role, const char* fp_key,
                                         const std::string& path) {
  data::IonVocabulary vocab(role);
  for (const json& name : v.at(key)) vocab.add(name.get<std::string>());
  const std::uint64_t stored = v.at(fp_key).get<std::uint64_t>();
  if (vocab.fingerprint() != stored)
    throw std::runtime_error("artifact '" + path + "': vocabulary fingerprint mismatch (" + key + ")");
  return vocab;
}

// Copies tensors into the destination parameters; names and shapes must match
// the directory exactly, in order.
void assign_tensors(const std::vector<std::pair<std::string, Matrix>>& loaded,
                    const std::vector<NamedTensor>& expected, const std::string& path) {
  if (loaded.size() != expected.size())
    throw std::runtime_error("artifact '" + path + "': tensor count mismatch");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (loaded[i].first != expected[i].name)
      throw std::runtime_error("artifact '" + path + "': unexpected tensor '" + loaded[i].first +
                               "' (wanted '" + expected[i].name + "')");
    if (loaded[i].second.rows != expected[i].matrix->rows ||
        loaded[i].second.cols != expected[i].matrix->cols)
      throw std::runtime_error("artifact '" + path + "': tensor '" + loaded[i].first +
                               "' shape does not match the declared architecture");
    *const_cast<Matrix*>(expected[i].matrix) = loaded[i].second;
  }
}

}  // namespace

void save_encoder(const model::EncoderSnapshot& encoder, const data::IonVocabulary& cations,
                  const data::IonVocabulary& anions, const std::string& path) {
  if (cations.size() != encoder.num_cations() || anions.size() != encoder.num_anions())
    throw std::invalid_argument("save_encoder: vocabularies do not match the encoder");
  json header{{"magic", "ILNRS"},
              {"kind", "encoder"},
              {"property", to_string(encoder.source_property())},
              {"encoder", encoder_config_json(encoder.config())},
              {"vocabulary", vocabulary_json(cations, anions)}};
  save_artifact(header, encoder_tensors(encoder), path);
}

LoadedEncoder load_encoder(const std::string& path) {
  RawArtifact raw = load_artifact(path);
  const std::string kind = raw.header.at("kind").get<std::string>();
  if (kind != "encoder")
    throw std::runtime_error("artifact '" + path + "': expected an encoder artifact, found kind '" +
                             kind + "'");

  LoadedEncoder out;
  const json& vocab = raw.header.at("vocabulary");
  out.cations = vocabulary_from_json(vocab, "cations", data::IonVocabulary::Role::cation,
                                     "cation_fingerprint", path);
  out.anions = vocabulary_from_json(vocab, "anions", data::IonVocabulary::Role::anion,
                                    "anion_fingerprint", path);

  const model::PretrainConfig cfg = encoder_config_from_json(raw.header.at("encoder"));
  model::PretrainModel scaffold =
      model::PretrainModel::build(cfg, out.cations.size(), out.anions.size(), 0);
  model::EncoderSnapshot snapshot = scaffold.export_encoder();
  assign_tensors(raw.tensors, encoder_tensors(snapshot), path);
  out.encoder = std::make_shared<const model::EncoderSnapshot>(std::move(snapshot));
  return out;
}

void save_finetune(const model::FinetuneModel& m, const data::IonVocabulary& cations,
                   const data::IonVocabulary& anions, const std::string& path) {
  if (cations.size() != m.encoder().num_cations() || anions.size() != m.encoder().num_anions())
    throw std::invalid_argument("save_finetune: vocabularies do not match the encoder");
  const model::FinetuneConfig& cfg = m.config();
  json header{{"magic", "ILNRS"},
              {"kind", "finetune"},
              {"property", to_string(cfg.property)},
              {"encoder", encoder_config_json(m.encoder().config())},
              {"finetune",
               {{"head_width", cfg.head_width},
                {"dropout_rate", cfg.dropout_rate},
                {"learning_rate", cfg.learning_rate},
                {"uses_temperature", cfg.uses_temperature},
                {"uses_pressure", cfg.uses_pressure}}},
              {"scalers",
               {{"target_mean", m.target_scaler.mean},
                {"target_stddev", m.target_scaler.stddev},
                {"temperature_mean", m.temperature_scaler.mean},
                {"temperature_stddev", m.temperature_scaler.stddev},
                {"temperature_degenerate", m.temperature_scaler.degenerate},
                {"pressure_mean", m.pressure_scaler.mean},
                {"pressure_stddev", m.pressure_scaler.stddev},
                {"pressure_degenerate", m.pressure_scaler.degenerate}}},
              {"vocabulary", vocabulary_json(cations, anions)}};

  std::vector<NamedTensor> tensors = encoder_tensors(m.encoder());
  for (NamedTensor& t : head_tensors(m.head_)) tensors.push_back(t);
  tensors.push_back({"feature_scaler.mean", &m.feature_mean});
  tensors.push_back({"feature_scaler.stddev", &m.feature_stddev});
  save_artifact(header, tensors, path);
}

LoadedFinetune load_finetune(const std::string& path) {
  RawArtifact raw = load_artifact(path);
  const std::string kind = raw.header.at("kind").get<std::string>();
  if (kind != "finetune")
    throw std::runtime_error("artifact '" + path +
                             "': expected a fine-tuned model artifact, found kind '" + kind + "'");

  LoadedFinetune out;
  const json& vocab = raw.header.at("vocabulary");
  out.cations = vocabulary_from_json(vocab, "cations", data::IonVocabulary::Role::cation,
                                     "cation_fingerprint", path);
  out.anions = vocabulary_from_json(vocab, "anions", data::IonVocabulary::Role::anion,
                                    "anion_fingerprint", path);

  const model::PretrainConfig enc_cfg = encoder_config_from_json(raw.header.at("encoder"));
  const json& ft = raw.header.at("finetune");
  model::FinetuneConfig cfg;
  cfg.property = property_from_string(raw.header.at("property").get<std::string>());
  cfg.head_width = ft.at("head_width").get<std::size_t>();
  cfg.dropout_rate = ft.at("dropout_rate").get<double>();
  cfg.learning_rate = ft.at("learning_rate").get<double>();
  cfg.uses_temperature = ft.at("uses_temperature").get<bool>();
  cfg.uses_pressure = ft.at("uses_pressure").get<bool>();

  model::PretrainModel scaffold =
      model::PretrainModel::build(enc_cfg, out.cations.size(), out.anions.size(), 0);
  auto encoder = std::make_shared<model::EncoderSnapshot>(scaffold.export_encoder());
  model::FinetuneModel m = model::FinetuneModel::build(
      std::shared_ptr<const model::EncoderSnapshot>(encoder), cfg, 0);

  std::vector<NamedTensor> expected = encoder_tensors(*encoder);
  for (NamedTensor& t : head_tensors(m.head_)) expected.push_back(t);
  expected.push_back({"feature_scaler.mean", &m.feature_mean});
  expected.push_back({"feature_scaler.stddev", &m.feature_stddev});
  assign_tensors(raw.tensors, expected, path);

  const json& sc = raw.header.at("scalers");
  m.target_scaler.mean = sc.at("target_mean").get<double>();
  m.target_scaler.stddev = sc.at("target_stddev").get<double>();
  m.temperature_scaler.mean = sc.at("temperature_mean").get<double>();
  m.temperature_scaler.stddev = sc.at("temperature_stddev").get<double>();
  m.temperature_scaler.degenerate = sc.at("temperature_degenerate").get<bool>();
  m.pressure_scaler.mean = sc.at("pressure_mean").get<double>();
  m.pressure_scaler.stddev = sc.at("pressure_stddev").get<double>();
  m.pressure_scaler.degenerate = sc.at("pressure_degenerate").get<bool>();

  out.model.emplace(std::move(m));
  return out;
}

std::string peek_kind(const std::string& path) {
  return load_artifact(path).header.at("kind").get<std::string>();
}

}  // namespace ilnrs::io
