#include "ilnrs/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "ilnrs/kernels.hpp"

namespace ilnrs::nn {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("AdamConfig: learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("AdamConfig: beta1 out of (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("AdamConfig: beta2 out of (0,1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("AdamConfig: epsilon must be > 0");
}

void adam_step(Parameter& p, const AdamConfig& cfg) {
  if (p.frozen) return;
  ++p.step_count;
  kernels::adam_update(p.value, p.grad, p.adam_m, p.adam_v, p.step_count, cfg.learning_rate,
                       cfg.beta1, cfg.beta2, cfg.epsilon);
  p.zero_grad();
}

// ---- Dense -----------------------------------------------------------------

void Dense::init(Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
  for (double& v : weight.value.data) v = rng.uniform(-bound, bound);
  bias.value.fill(0.0);
}

Matrix Dense::forward(const Matrix& x, Mode mode) {
  if (x.cols != in_dim())
    throw std::invalid_argument("Dense::forward: input width " + std::to_string(x.cols) +
                                " does not match layer width " + std::to_string(in_dim()));
  if (mode == Mode::train) cached_input_ = x;
  Matrix out;
  kernels::gemm_nn(x, weight.value, out);
  kernels::add_row_vector(out, bias.value);
  return out;
}

Matrix Dense::apply(const Matrix& x) const {
  if (x.cols != in_dim()) throw std::invalid_argument("Dense::apply: input width mismatch");
  Matrix out;
  kernels::gemm_nn(x, weight.value, out);
  kernels::add_row_vector(out, bias.value);
  return out;
}

Matrix Dense::backward(const Matrix& gout) {
  if (cached_input_.rows != gout.rows)
    throw std::invalid_argument("Dense::backward: no cached forward for this batch");
  kernels::gemm_tn_acc(cached_input_, gout, weight.grad);
  kernels::col_sums_acc(gout, bias.grad);
  Matrix gin;
  kernels::gemm_nt(gout, weight.value, gin);
  return gin;
}

// ---- Relu ------------------------------------------------------------------

Matrix Relu::forward(const Matrix& x, Mode mode) {
  if (mode == Mode::train) cached_input_ = x;
  Matrix out;
  kernels::relu_forward(x, out);
  return out;
}

Matrix Relu::apply(const Matrix& x) const {
  Matrix out;
  kernels::relu_forward(x, out);
  return out;
}

Matrix Relu::backward(const Matrix& gout) {
  Matrix gin;
  kernels::relu_backward(cached_input_, gout, gin);
  return gin;
}

// ---- Dropout ---------------------------------------------------------------

Dropout::Dropout(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("Dropout: rate must lie in [0, 1), got " + std::to_string(rate));
}

Matrix Dropout::forward(const Matrix& x, Mode mode) {
  if (mode == Mode::infer || rate_ == 0.0) {
    identity_ = true;
    return x;
  }
  identity_ = false;
  Matrix out;
  kernels::dropout_forward(x, rate_, derive_seed(seed_, ++calls_), out, mask_);
  return out;
}

Matrix Dropout::backward(const Matrix& gout) {
  if (identity_) return gout;
  Matrix gin;
  kernels::apply_mask(gout, mask_, gin);
  return gin;
}

// ---- Embedding ---------------------------------------------------------------

void Embedding::init(Rng& rng, double bound) {
  for (double& v : table.value.data) v = rng.uniform(-bound, bound);
}

Matrix Embedding::forward(std::span<const int> ids) {
  cached_ids_.assign(ids.begin(), ids.end());
  Matrix out;
  kernels::embedding_gather(table.value, ids, out);
  return out;
}

Matrix Embedding::apply(std::span<const int> ids) const {
  Matrix out;
  kernels::embedding_gather(table.value, ids, out);
  return out;
}

void Embedding::backward(const Matrix& gout) {
  kernels::embedding_scatter_add(table.grad, cached_ids_, gout);
}

// ---- stateless ops -----------------------------------------------------------

Matrix residual_add(const Matrix& x, const Matrix& y) {
  require_same_shape(x, y, "residual_add");
  Matrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] + y.data[i];
  return out;
}

Matrix concat_cols(std::span<const Matrix* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t rows = parts.front()->rows;
  std::size_t total = 0;
  for (const Matrix* p : parts) {
    if (p->rows != rows) throw std::invalid_argument("concat_cols: row counts differ");
    total += p->cols;
  }
  Matrix out(rows, total);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.row_ptr(r);
    for (const Matrix* p : parts) {
      const double* src = p->row_ptr(r);
      for (std::size_t c = 0; c < p->cols; ++c) *dst++ = src[c];
    }
  }
  return out;
}

std::vector<Matrix> split_cols(const Matrix& g, std::span<const std::size_t> widths) {
  std::size_t total = 0;
  for (std::size_t w : widths) total += w;
  if (total != g.cols) throw std::invalid_argument("split_cols: widths do not sum to column count");
  std::vector<Matrix> parts;
  parts.reserve(widths.size());
  std::size_t offset = 0;
  for (std::size_t w : widths) {
    Matrix part(g.rows, w);
    for (std::size_t r = 0; r < g.rows; ++r) {
      const double* src = g.row_ptr(r) + offset;
      double* dst = part.row_ptr(r);
      for (std::size_t c = 0; c < w; ++c) dst[c] = src[c];
    }
    offset += w;
    parts.push_back(std::move(part));
  }
  return parts;
}

// ---- loss ---------------------------------------------------------------------

double mse_loss(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "mse_loss");
  if (pred.rows == 0) throw std::invalid_argument("mse_loss: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred.data[i] - target.data[i];
    acc += e * e;
  }
  return acc / static_cast<double>(pred.size());
}

LossGrad mse_loss_grad(const Matrix& pred, const Matrix& target) {
  LossGrad out{mse_loss(pred, target), Matrix(pred.rows, pred.cols)};
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    out.grad.data[i] = scale * (pred.data[i] - target.data[i]);
  return out;
}

// ---- gradient check --------------------------------------------------------------

double gradient_check(std::span<Parameter* const> params,
                      const std::function<double()>& loss_with_backward,
                      const GradCheckOptions& opt) {
  std::size_t total = 0;
  for (const Parameter* p : params) total += p->value.size();
  if (total == 0) return 0.0;

  for (Parameter* p : params) p->zero_grad();
  loss_with_backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad.data);

  const std::size_t samples = std::min(opt.max_samples, total);
  Rng rng(derive_seed(opt.seed, 0x67726164ULL));
  double max_rel = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t flat = samples == total ? s : static_cast<std::size_t>(rng.below(total));
    std::size_t pi = 0;
    while (flat >= params[pi]->value.size()) flat -= params[pi++]->value.size();
    double& theta = params[pi]->value.data[flat];

    const double saved = theta;
    theta = saved + opt.step;
    const double loss_plus = loss_with_backward();
    theta = saved - opt.step;
    const double loss_minus = loss_with_backward();
    theta = saved;

    const double numeric = (loss_plus - loss_minus) / (2.0 * opt.step);
    const double a = analytic[pi][flat];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
  }
  for (Parameter* p : params) p->zero_grad();
  return max_rel;
}

}  // namespace ilnrs::nn
