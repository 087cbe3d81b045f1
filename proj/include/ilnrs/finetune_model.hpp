#pragma once

#include <memory>

#include "ilnrs/data.hpp"
#include "ilnrs/pretrain_model.hpp"

namespace ilnrs::model {

struct FinetuneConfig {
  std::size_t head_width = 100;  // {50, 100, 200}; layer 2 is half
  double dropout_rate = 0.05;
  double learning_rate = 0.01;
  bool uses_temperature = true;
  bool uses_pressure = false;
  Property property = Property::density;

  void validate() const;
  std::size_t condition_count() const {
    return (uses_temperature ? 1u : 0u) + (uses_pressure ? 1u : 0u);
  }
};

// Fine-tuning network: frozen encoder output concatenated with standardized
// temperature/pressure, then a trainable two-layer head with linear output.
// Target and condition scalers are fit by the training pipeline from the
// training fold only.
class FinetuneModel {
 public:
  static FinetuneModel build(std::shared_ptr<const EncoderSnapshot> encoder,
                             const FinetuneConfig& config, std::uint64_t seed);

  // Head input width: encoder width + condition columns.
  std::size_t input_dim() const { return encoder_->width() + config_.condition_count(); }
  std::size_t encoder_width() const { return encoder_->width(); }

  // Builds the head input from precomputed encoder features plus scaled
  // condition columns. Row counts must agree.
  Matrix assemble_input(const Matrix& features, std::span<const double> temperature_k,
                        std::span<const double> pressure_bar) const;

  Matrix head_forward(const Matrix& input, nn::Mode mode) { return head_.forward(input, mode); }
  void head_backward(const Matrix& grad_pred) { head_.backward(grad_pred); }
  Matrix head_apply(const Matrix& input) const { return head_.apply(input); }

  std::vector<nn::Parameter*> head_parameters() { return trainable_; }
  void adam_step_head(const nn::AdamConfig& cfg);

  // End-to-end inference in native property units: encode, standardize
  // conditions with the stored statistics, run the head dropout-free, then
  // inverse-transform the target scaling.
  std::vector<double> predict(std::span<const int> cation_ids, std::span<const int> anion_ids,
                              std::span<const double> temperature_k,
                              std::span<const double> pressure_bar) const;

  const EncoderSnapshot& encoder() const { return *encoder_; }
  std::shared_ptr<const EncoderSnapshot> encoder_ptr() const { return encoder_; }
  const FinetuneConfig& config() const { return config_; }

  data::Scaler target_scaler;
  data::ConditionScaler temperature_scaler;
  data::ConditionScaler pressure_scaler;
  // Per-column z-score statistics for the frozen encoder features, fit on the
  // training fold; identity until fit. Keeps weakly-trained encoders readable
  // by the head and the input columns on one scale.
  Matrix feature_mean;    // [1 x encoder width]
  Matrix feature_stddev;  // [1 x encoder width]

  void fit_feature_scaler(const Matrix& training_features);

  Head head_;

 private:
  FinetuneModel(std::shared_ptr<const EncoderSnapshot> encoder, const FinetuneConfig& config,
                std::uint64_t seed);

  std::shared_ptr<const EncoderSnapshot> encoder_;
  FinetuneConfig config_;
  std::vector<nn::Parameter*> trainable_;
};

// The transfer-benefit control: an encoder of the same architecture with
// randomly initialized, never-trained weights, frozen exactly like a real one.
std::shared_ptr<const EncoderSnapshot> random_encoder(const PretrainConfig& architecture,
                                                      std::size_t num_cations,
                                                      std::size_t num_anions, std::uint64_t seed);

}  // namespace ilnrs::model
