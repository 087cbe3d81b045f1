#pragma once

#include <memory>
#include <optional>
#include <string>

#include "ilnrs/data.hpp"
#include "ilnrs/finetune_model.hpp"
#include "ilnrs/pretrain_model.hpp"

namespace ilnrs::io {

// Versioned model artifact: a JSON header (kind, architecture, scalers, ion
// name lists with fingerprints, tensor directory) followed by raw row-major
// 64-bit little-endian tensor payloads and a whole-file checksum. Loading
// verifies magic, version, shapes, fingerprints, payload length, and checksum;
// any mismatch is a hard error. Files are written atomically
// (write-temp-then-rename) and round-trip bitwise.

inline constexpr int kArtifactVersion = 1;

void save_encoder(const model::EncoderSnapshot& encoder, const data::IonVocabulary& cations,
                  const data::IonVocabulary& anions, const std::string& path);

struct LoadedEncoder {
  std::shared_ptr<const model::EncoderSnapshot> encoder;
  data::IonVocabulary cations{data::IonVocabulary::Role::cation};
  data::IonVocabulary anions{data::IonVocabulary::Role::anion};
};

LoadedEncoder load_encoder(const std::string& path);

void save_finetune(const model::FinetuneModel& model, const data::IonVocabulary& cations,
                   const data::IonVocabulary& anions, const std::string& path);

struct LoadedFinetune {
  std::optional<model::FinetuneModel> model;
  data::IonVocabulary cations{data::IonVocabulary::Role::cation};
  data::IonVocabulary anions{data::IonVocabulary::Role::anion};
};

LoadedFinetune load_finetune(const std::string& path);

// Kind tag from the header without materializing a model.
std::string peek_kind(const std::string& path);

}  // namespace ilnrs::io
