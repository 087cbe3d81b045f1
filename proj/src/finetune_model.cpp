#include "ilnrs/finetune_model.hpp"

#include <cmath>
#include <stdexcept>

namespace ilnrs::model {

void FinetuneConfig::validate() const {
  if (head_width != 50 && head_width != 100 && head_width != 200)
    throw std::invalid_argument("FinetuneConfig: head_width must be one of {50, 100, 200}");
  if (head_width % 2 != 0) throw std::invalid_argument("FinetuneConfig: head_width must be even");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("FinetuneConfig: dropout_rate must lie in [0, 1)");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("FinetuneConfig: learning_rate must be > 0");
  if (property == Property::melting_point && (uses_temperature || uses_pressure))
    throw std::invalid_argument(
        "FinetuneConfig: melting point depends only on structure; T/P inputs must be off");
}

FinetuneModel::FinetuneModel(std::shared_ptr<const EncoderSnapshot> encoder,
                             const FinetuneConfig& config, std::uint64_t seed)
    : feature_mean(1, encoder->width(), 0.0),
      feature_stddev(1, encoder->width(), 1.0),
      head_(encoder->width() + config.condition_count(), config.head_width, config.dropout_rate,
            derive_seed(seed, 0x66746864ULL)),
      encoder_(std::move(encoder)),
      config_(config) {
  head_.collect(trainable_);
}

void FinetuneModel::fit_feature_scaler(const Matrix& training_features) {
  if (training_features.cols != encoder_->width())
    throw std::invalid_argument("fit_feature_scaler: width mismatch");
  if (training_features.rows == 0)
    throw std::invalid_argument("fit_feature_scaler: no rows");
  const double n = static_cast<double>(training_features.rows);
  for (std::size_t c = 0; c < training_features.cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < training_features.rows; ++r) mean += training_features(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < training_features.rows; ++r) {
      const double d = training_features(r, c) - mean;
      var += d * d;
    }
    var /= n;
    feature_mean(0, c) = mean;
    feature_stddev(0, c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
}

FinetuneModel FinetuneModel::build(std::shared_ptr<const EncoderSnapshot> encoder,
                                   const FinetuneConfig& config, std::uint64_t seed) {
  config.validate();
  if (!encoder) throw std::invalid_argument("FinetuneModel: encoder is required");
  FinetuneModel m(std::move(encoder), config, seed);
  Rng rng(derive_seed(seed, 0x6674696eULL));
  m.head_.fc1.init(rng);
  m.head_.fc2.init(rng);
  m.head_.out.init(rng);
  return m;
}

Matrix FinetuneModel::assemble_input(const Matrix& features, std::span<const double> temperature_k,
                                     std::span<const double> pressure_bar) const {
  if (features.cols != encoder_->width())
    throw std::invalid_argument("assemble_input: feature width does not match encoder");
  if (config_.uses_temperature && temperature_k.size() != features.rows)
    throw std::invalid_argument("assemble_input: temperature column length mismatch");
  if (config_.uses_pressure && pressure_bar.size() != features.rows)
    throw std::invalid_argument("assemble_input: pressure column length mismatch");

  Matrix input(features.rows, input_dim());
  const double* mean = feature_mean.data.data();
  const double* stddev = feature_stddev.data.data();
  for (std::size_t r = 0; r < features.rows; ++r) {
    double* dst = input.row_ptr(r);
    const double* src = features.row_ptr(r);
    for (std::size_t c = 0; c < features.cols; ++c) dst[c] = (src[c] - mean[c]) / stddev[c];
    std::size_t col = features.cols;
    if (config_.uses_temperature) dst[col++] = temperature_scaler.transform(temperature_k[r]);
    if (config_.uses_pressure) dst[col++] = pressure_scaler.transform(pressure_bar[r]);
  }
  return input;
}

void FinetuneModel::adam_step_head(const nn::AdamConfig& cfg) {
  for (nn::Parameter* p : trainable_) nn::adam_step(*p, cfg);
}

std::vector<double> FinetuneModel::predict(std::span<const int> cation_ids,
                                           std::span<const int> anion_ids,
                                           std::span<const double> temperature_k,
                                           std::span<const double> pressure_bar) const {
  if (config_.uses_temperature)
    for (double t : temperature_k)
      if (!std::isfinite(t)) throw std::invalid_argument("predict: non-finite temperature");
  if (config_.uses_pressure)
    for (double p : pressure_bar)
      if (!std::isfinite(p)) throw std::invalid_argument("predict: non-finite pressure");

  const Matrix features = encoder_->encode(cation_ids, anion_ids);
  const Matrix scaled = head_apply(assemble_input(features, temperature_k, pressure_bar));
  std::vector<double> out(scaled.rows);
  for (std::size_t r = 0; r < scaled.rows; ++r)
    out[r] = target_scaler.inverse_transform(scaled(r, 0));
  return out;
}

std::shared_ptr<const EncoderSnapshot> random_encoder(const PretrainConfig& architecture,
                                                      std::size_t num_cations,
                                                      std::size_t num_anions, std::uint64_t seed) {
  PretrainModel untrained = PretrainModel::build(architecture, num_cations, num_anions, seed);
  return std::make_shared<const EncoderSnapshot>(untrained.export_encoder());
}

}  // namespace ilnrs::model
