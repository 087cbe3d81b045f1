#include <cmath>
#include <stdexcept>

#include "ilnrs/kernels.hpp"
#include "ilnrs/rng.hpp"

namespace ilnrs::kernels::ref {

namespace {

inline double element_unit(std::uint64_t seed, std::uint64_t index) {
  return static_cast<double>(mix_u64(seed ^ mix_u64(index)) >> 11) * 0x1.0p-53;
}

}  // namespace

void gemm_nn(const Matrix& a, const Matrix& w, Matrix& out) {
  if (a.cols != w.rows) throw std::invalid_argument("ref::gemm_nn: inner dimensions differ");
  out = Matrix(a.rows, w.cols);
  for (std::size_t b = 0; b < a.rows; ++b)
    for (std::size_t i = 0; i < a.cols; ++i)
      for (std::size_t o = 0; o < w.cols; ++o) out(b, o) += a(b, i) * w(i, o);
}

void gemm_tn_acc(const Matrix& a, const Matrix& g, Matrix& out) {
  if (a.rows != g.rows) throw std::invalid_argument("ref::gemm_tn_acc: batch dimensions differ");
  require_shape(out, a.cols, g.cols, "ref::gemm_tn_acc");
  for (std::size_t i = 0; i < a.cols; ++i)
    for (std::size_t b = 0; b < a.rows; ++b)
      for (std::size_t o = 0; o < g.cols; ++o) out(i, o) += a(b, i) * g(b, o);
}

void gemm_nt(const Matrix& g, const Matrix& w, Matrix& out) {
  if (g.cols != w.cols) throw std::invalid_argument("ref::gemm_nt: output dimensions differ");
  out = Matrix(g.rows, w.rows);
  for (std::size_t b = 0; b < g.rows; ++b)
    for (std::size_t i = 0; i < w.rows; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < w.cols; ++o) acc += g(b, o) * w(i, o);
      out(b, i) = acc;
    }
}

void add_row_vector(Matrix& m, const Matrix& bias) {
  require_shape(bias, 1, m.cols, "ref::add_row_vector bias");
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) += bias(0, c);
}

void col_sums_acc(const Matrix& g, Matrix& out) {
  require_shape(out, 1, g.cols, "ref::col_sums_acc");
  for (std::size_t c = 0; c < g.cols; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < g.rows; ++r) acc += g(r, c);
    out(0, c) += acc;
  }
}

void relu_forward(const Matrix& in, Matrix& out) {
  out = Matrix(in.rows, in.cols);
  for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
}

void relu_backward(const Matrix& in, const Matrix& gout, Matrix& gin) {
  require_same_shape(in, gout, "ref::relu_backward");
  gin = Matrix(in.rows, in.cols);
  for (std::size_t i = 0; i < in.size(); ++i) gin.data[i] = in.data[i] > 0.0 ? gout.data[i] : 0.0;
}

void dropout_forward(const Matrix& in, double rate, std::uint64_t seed, Matrix& out, Matrix& mask) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("ref::dropout_forward: rate must lie in [0, 1)");
  out = Matrix(in.rows, in.cols);
  mask = Matrix(in.rows, in.cols);
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double keep = element_unit(seed, static_cast<std::uint64_t>(i)) >= rate ? scale : 0.0;
    mask.data[i] = keep;
    out.data[i] = in.data[i] * keep;
  }
}

void apply_mask(const Matrix& gout, const Matrix& mask, Matrix& gin) {
  require_same_shape(gout, mask, "ref::apply_mask");
  gin = Matrix(gout.rows, gout.cols);
  for (std::size_t i = 0; i < gout.size(); ++i) gin.data[i] = gout.data[i] * mask.data[i];
}

void embedding_gather(const Matrix& table, std::span<const int> ids, Matrix& out) {
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows)
      throw std::out_of_range("ref::embedding_gather: id outside vocabulary");
  out = Matrix(ids.size(), table.cols);
  for (std::size_t b = 0; b < ids.size(); ++b)
    for (std::size_t j = 0; j < table.cols; ++j)
      out(b, j) = table(static_cast<std::size_t>(ids[b]), j);
}

void embedding_scatter_add(Matrix& table_grad, std::span<const int> ids, const Matrix& gout) {
  if (gout.rows != ids.size())
    throw std::invalid_argument("ref::embedding_scatter_add: ids/grad row mismatch");
  if (gout.cols != table_grad.cols)
    throw std::invalid_argument("ref::embedding_scatter_add: width mismatch");
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= table_grad.rows)
      throw std::out_of_range("ref::embedding_scatter_add: id outside vocabulary");
  for (std::size_t j = 0; j < table_grad.cols; ++j)
    for (std::size_t b = 0; b < ids.size(); ++b)
      table_grad(static_cast<std::size_t>(ids[b]), j) += gout(b, j);
}

void adam_update(Matrix& value, const Matrix& grad, Matrix& m, Matrix& v, long step,
                 double learning_rate, double beta1, double beta2, double epsilon) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < value.size(); ++k) {
    const double g = grad.data[k];
    m.data[k] = beta1 * m.data[k] + (1.0 - beta1) * g;
    v.data[k] = beta2 * v.data[k] + (1.0 - beta2) * g * g;
    value.data[k] -= learning_rate * (m.data[k] / bc1) / (std::sqrt(v.data[k] / bc2) + epsilon);
  }
}

}  // namespace ilnrs::kernels::ref
