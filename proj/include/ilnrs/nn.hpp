#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ilnrs/matrix.hpp"
#include "ilnrs/rng.hpp"

namespace ilnrs::nn {

enum class Mode { train, infer };

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// A trainable tensor with its gradient and Adam state. Freezing a parameter
// makes the optimizer skip it entirely; gradients may still be written.
struct Parameter {
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
  long step_count = 0;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::size_t r, std::size_t c)
      : value(r, c), grad(r, c), adam_m(r, c), adam_v(r, c) {}

  void zero_grad() { grad.fill(0.0); }
};

// Bias-corrected Adam. No-op on frozen parameters; zeroes the gradient after
// a real update so batches never leak into each other.
void adam_step(Parameter& p, const AdamConfig& cfg);

// ---- layers -------------------------------------------------------------

// Fully connected layer, weight [in x out], bias [1 x out].
class Dense {
 public:
  Dense(std::size_t in, std::size_t out) : weight(in, out), bias(1, out) {}

  // Scaled symmetric uniform init, bound sqrt(6/(fan_in+fan_out)); bias zero.
  void init(Rng& rng);

  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& gout);

  // Pure inference path; never touches caches, safe for concurrent readers.
  Matrix apply(const Matrix& x) const;

  std::size_t in_dim() const { return weight.value.rows; }
  std::size_t out_dim() const { return weight.value.cols; }

  Parameter weight;
  Parameter bias;

 private:
  Matrix cached_input_;
};

class Relu {
 public:
  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& gout);
  Matrix apply(const Matrix& x) const;

 private:
  Matrix cached_input_;
};

// Inverted dropout: survivors are scaled by 1/(1-rate) so inference is the
// identity. Each forward call in train mode draws a fresh seeded mask.
class Dropout {
 public:
  Dropout(double rate, std::uint64_t seed);

  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& gout);
  Matrix apply(const Matrix& x) const { return x; }

  double rate() const { return rate_; }

 private:
  double rate_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
  Matrix mask_;
  bool identity_ = false;  // last forward was a no-op (infer or rate 0)
};

// Embedding table [V x D]; forward gathers rows, backward scatter-adds.
class Embedding {
 public:
  Embedding(std::size_t vocab, std::size_t dim) : table(vocab, dim) {}

  void init(Rng& rng, double bound);

  Matrix forward(std::span<const int> ids);
  void backward(const Matrix& gout);
  Matrix apply(std::span<const int> ids) const;

  std::size_t vocab_size() const { return table.value.rows; }
  std::size_t dim() const { return table.value.cols; }

  Parameter table;

 private:
  std::vector<int> cached_ids_;
};

// ---- stateless ops --------------------------------------------------------

// Elementwise sum; backward passes the upstream gradient to both inputs.
Matrix residual_add(const Matrix& x, const Matrix& y);

// Column-wise concatenation of parts with equal row counts.
Matrix concat_cols(std::span<const Matrix* const> parts);

// Splits a gradient back into column ranges of the given widths.
std::vector<Matrix> split_cols(const Matrix& g, std::span<const std::size_t> widths);

// ---- loss -----------------------------------------------------------------

double mse_loss(const Matrix& pred, const Matrix& target);

struct LossGrad {
  double loss;
  Matrix grad;  // d loss / d pred = 2 (pred - target) / B
};
LossGrad mse_loss_grad(const Matrix& pred, const Matrix& target);

// ---- numerical gradient verification ---------------------------------------

struct GradCheckOptions {
  double step = 1e-5;          // central-difference perturbation
  std::size_t max_samples = 200;
  std::uint64_t seed = 0;
};

// Compares analytic gradients against central finite differences over a
// sampled subset of parameter entries. `loss_with_backward` must zero nothing
// itself: the checker zeroes gradients, calls it once to collect analytic
// grads, then re-evaluates the loss under perturbations. Dropout must be
// disabled by the caller. Returns the max relative error with denominator
// max(|analytic|, |numeric|, 1e-8).
double gradient_check(std::span<Parameter* const> params,
                      const std::function<double()>& loss_with_backward,
                      const GradCheckOptions& opt = {});

}  // namespace ilnrs::nn
