#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ilnrs/nn.hpp"
#include "ilnrs/property.hpp"

namespace ilnrs::model {

struct PretrainConfig {
  std::size_t embedding_dim = 100;    // fixed at 100
  std::size_t branch_width = 100;     // {100, 200, 300}
  std::size_t blocks_per_branch = 1;  // {1, 2}
  std::size_t head_width = 100;       // {50, 100, 200, 400}; layer 2 is half
  double dropout_rate = 0.05;
  double learning_rate = 0.001;
  Property property = Property::density;

  void validate() const;
};

// Residual unit: x + dropout(relu(dense(x))), width preserved.
struct ResidualBlock {
  ResidualBlock(std::size_t width, double rate, std::uint64_t seed);

  Matrix forward(const Matrix& x, nn::Mode mode);
  Matrix backward(const Matrix& gout);
  Matrix apply(const Matrix& x) const;
  void collect(std::vector<nn::Parameter*>& out);

  nn::Dense fc;
  nn::Relu relu;
  nn::Dropout drop;
};

// One ion pathway: projection dense(embedding_dim -> width) + ReLU + dropout,
// then the residual stack.
struct Branch {
  Branch(std::size_t in_dim, std::size_t width, std::size_t blocks, double rate,
         std::uint64_t seed);

  Matrix forward(const Matrix& emb, nn::Mode mode);
  Matrix backward(const Matrix& gout);
  Matrix apply(const Matrix& emb) const;
  void collect(std::vector<nn::Parameter*>& out);

  nn::Dense proj;
  nn::Relu proj_relu;
  nn::Dropout proj_drop;
  std::vector<ResidualBlock> blocks;
};

// Two hidden dense layers (second half the width of the first) and a linear
// scalar output.
struct Head {
  Head(std::size_t in_dim, std::size_t width, double rate, std::uint64_t seed);

  Matrix forward(const Matrix& x, nn::Mode mode);
  Matrix backward(const Matrix& gout);
  Matrix apply(const Matrix& x) const;
  void collect(std::vector<nn::Parameter*>& out);

  nn::Dense fc1;
  nn::Relu relu1;
  nn::Dropout drop1;
  nn::Dense fc2;
  nn::Relu relu2;
  nn::Dropout drop2;
  nn::Dense out;
};

class EncoderSnapshot;

// Pre-training recommender: per-ion embeddings -> per-branch residual stacks
// -> concatenation -> regression head. Predicts one property at fixed T, P.
class PretrainModel {
 public:
  static PretrainModel build(const PretrainConfig& config, std::size_t num_cations,
                             std::size_t num_anions, std::uint64_t seed);

  // Training-path forward; train mode applies dropout and fills caches.
  Matrix forward(std::span<const int> cation_ids, std::span<const int> anion_ids, nn::Mode mode);

  // Backpropagates d loss / d prediction into every parameter's grad.
  void backward(const Matrix& grad_pred);

  // Pure inference; bitwise deterministic and safe for concurrent readers.
  Matrix predict(std::span<const int> cation_ids, std::span<const int> anion_ids) const;

  // Activations at the concatenation layer (dropout-free), the exact surface
  // an exported encoder reproduces.
  Matrix encode(std::span<const int> cation_ids, std::span<const int> anion_ids) const;

  std::vector<nn::Parameter*> parameters();
  void adam_step_all(const nn::AdamConfig& cfg);

  const PretrainConfig& config() const { return config_; }
  std::size_t num_cations() const { return cation_table_.vocab_size(); }
  std::size_t num_anions() const { return anion_table_.vocab_size(); }
  std::size_t concat_width() const { return 2 * config_.branch_width; }

  // Deep frozen copy of everything up to and including the concatenation.
  EncoderSnapshot export_encoder() const;

  nn::Embedding cation_table_;
  nn::Embedding anion_table_;
  Branch cation_branch_;
  Branch anion_branch_;
  Head head_;

 private:
  PretrainModel(const PretrainConfig& config, std::size_t num_cations, std::size_t num_anions,
                std::uint64_t seed);

  PretrainConfig config_;
};

// Frozen copy of a pre-trained model up to and including the concatenation
// layer. Immutable once exported; encoding is dropout-free and deterministic.
class EncoderSnapshot {
 public:
  EncoderSnapshot(const PretrainConfig& config, const nn::Embedding& cation_table,
                  const nn::Embedding& anion_table, const Branch& cation_branch,
                  const Branch& anion_branch);

  Matrix encode(std::span<const int> cation_ids, std::span<const int> anion_ids) const;

  std::size_t width() const { return 2 * config_.branch_width; }
  std::size_t num_cations() const { return cation_table_.vocab_size(); }
  std::size_t num_anions() const { return anion_table_.vocab_size(); }
  const PretrainConfig& config() const { return config_; }
  Property source_property() const { return config_.property; }

  // Frozen parameters in a stable order, for freeze-invariance checks and
  // serialization.
  std::vector<const nn::Parameter*> parameters() const;

  const nn::Embedding& cation_table() const { return cation_table_; }
  const nn::Embedding& anion_table() const { return anion_table_; }
  const Branch& cation_branch() const { return cation_branch_; }
  const Branch& anion_branch() const { return anion_branch_; }

 private:
  PretrainConfig config_;
  nn::Embedding cation_table_;
  nn::Embedding anion_table_;
  Branch cation_branch_;
  Branch anion_branch_;
};

}  // namespace ilnrs::model
