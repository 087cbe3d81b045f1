#include "ilnrs/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ilnrs/rng.hpp"

namespace ilnrs::kernels {

namespace {

// Dropout decision for one element: hash of (seed, flat index) -> unit double.
inline double element_unit(std::uint64_t seed, std::uint64_t index) {
  return static_cast<double>(mix_u64(seed ^ mix_u64(index)) >> 11) * 0x1.0p-53;
}

constexpr std::ptrdiff_t kParallelCutoff = 4096;  // elements of work per region

}  // namespace

void gemm_nn(const Matrix& a, const Matrix& w, Matrix& out) {
  if (a.cols != w.rows)
    throw std::invalid_argument("gemm_nn: inner dimensions differ (" + std::to_string(a.cols) +
                                " vs " + std::to_string(w.rows) + ")");
  out = Matrix(a.rows, w.cols);
  const std::ptrdiff_t br = static_cast<std::ptrdiff_t>(a.rows);
  const std::size_t inner = a.cols, oc = w.cols;

#pragma omp parallel for schedule(static) if (br * static_cast<std::ptrdiff_t>(inner * oc) > kParallelCutoff)
  for (std::ptrdiff_t b = 0; b < br; ++b) {
    double* out_row = out.row_ptr(static_cast<std::size_t>(b));
    const double* a_row = a.row_ptr(static_cast<std::size_t>(b));
    for (std::size_t i = 0; i < inner; ++i) {
      const double av = a_row[i];
      const double* w_row = w.row_ptr(i);
      for (std::size_t o = 0; o < oc; ++o) out_row[o] += av * w_row[o];
    }
  }
}

void gemm_tn_acc(const Matrix& a, const Matrix& g, Matrix& out) {
  if (a.rows != g.rows) throw std::invalid_argument("gemm_tn_acc: batch dimensions differ");
  require_shape(out, a.cols, g.cols, "gemm_tn_acc");
  const std::ptrdiff_t ic = static_cast<std::ptrdiff_t>(a.cols);
  const std::size_t batch = a.rows, oc = g.cols;

#pragma omp parallel for schedule(static) if (ic * static_cast<std::ptrdiff_t>(batch * oc) > kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < ic; ++i) {
    double* out_row = out.row_ptr(static_cast<std::size_t>(i));
    for (std::size_t b = 0; b < batch; ++b) {
      const double av = a(b, static_cast<std::size_t>(i));
      const double* g_row = g.row_ptr(b);
      for (std::size_t o = 0; o < oc; ++o) out_row[o] += av * g_row[o];
    }
  }
}

void gemm_nt(const Matrix& g, const Matrix& w, Matrix& out) {
  if (g.cols != w.cols)
    throw std::invalid_argument("gemm_nt: output dimensions differ");
  out = Matrix(g.rows, w.rows);
  const std::ptrdiff_t br = static_cast<std::ptrdiff_t>(g.rows);
  const std::size_t ic = w.rows, oc = w.cols;

  // Transposed copy turns the inner loop into contiguous axpy updates; the
  // per-element accumulation stays in ascending o, matching the reference.
  Matrix wt(oc, ic);
  for (std::size_t i = 0; i < ic; ++i)
    for (std::size_t o = 0; o < oc; ++o) wt(o, i) = w(i, o);

#pragma omp parallel for schedule(static) if (br * static_cast<std::ptrdiff_t>(ic * oc) > kParallelCutoff)
  for (std::ptrdiff_t b = 0; b < br; ++b) {
    double* out_row = out.row_ptr(static_cast<std::size_t>(b));
    const double* g_row = g.row_ptr(static_cast<std::size_t>(b));
    for (std::size_t o = 0; o < oc; ++o) {
      const double gv = g_row[o];
      const double* wt_row = wt.row_ptr(o);
      for (std::size_t i = 0; i < ic; ++i) out_row[i] += gv * wt_row[i];
    }
  }
}

void add_row_vector(Matrix& m, const Matrix& bias) {
  require_shape(bias, 1, m.cols, "add_row_vector bias");
  const std::ptrdiff_t br = static_cast<std::ptrdiff_t>(m.rows);
  const std::size_t c = m.cols;

#pragma omp parallel for schedule(static) if (br * static_cast<std::ptrdiff_t>(c) > kParallelCutoff)
  for (std::ptrdiff_t r = 0; r < br; ++r) {
    double* row = m.row_ptr(static_cast<std::size_t>(r));
    const double* b = bias.data.data();
    for (std::size_t j = 0; j < c; ++j) row[j] += b[j];
  }
}

void col_sums_acc(const Matrix& g, Matrix& out) {
  require_shape(out, 1, g.cols, "col_sums_acc");
  const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(g.cols);
  const std::size_t br = g.rows;

#pragma omp parallel for schedule(static) if (cc * static_cast<std::ptrdiff_t>(br) > kParallelCutoff)
  for (std::ptrdiff_t c = 0; c < cc; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < br; ++r) acc += g(r, static_cast<std::size_t>(c));
    out.data[static_cast<std::size_t>(c)] += acc;
  }
}

void relu_forward(const Matrix& in, Matrix& out) {
  out = Matrix(in.rows, in.cols);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());

#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double v = in.data[static_cast<std::size_t>(i)];
    out.data[static_cast<std::size_t>(i)] = v > 0.0 ? v : 0.0;
  }
}

void relu_backward(const Matrix& in, const Matrix& gout, Matrix& gin) {
  require_same_shape(in, gout, "relu_backward");
  gin = Matrix(in.rows, in.cols);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());

#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    gin.data[k] = in.data[k] > 0.0 ? gout.data[k] : 0.0;
  }
}

void dropout_forward(const Matrix& in, double rate, std::uint64_t seed, Matrix& out, Matrix& mask) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout_forward: rate must lie in [0, 1)");
  out = Matrix(in.rows, in.cols);
  mask = Matrix(in.rows, in.cols);
  const double scale = 1.0 / (1.0 - rate);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());

#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const double keep = element_unit(seed, static_cast<std::uint64_t>(k)) >= rate ? scale : 0.0;
    mask.data[k] = keep;
    out.data[k] = in.data[k] * keep;
  }
}

void apply_mask(const Matrix& gout, const Matrix& mask, Matrix& gin) {
  require_same_shape(gout, mask, "apply_mask");
  gin = Matrix(gout.rows, gout.cols);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(gout.size());

#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    gin.data[k] = gout.data[k] * mask.data[k];
  }
}

void embedding_gather(const Matrix& table, std::span<const int> ids, Matrix& out) {
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows)
      throw std::out_of_range("embedding_gather: id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(table.rows));
  out = Matrix(ids.size(), table.cols);
  const std::ptrdiff_t br = static_cast<std::ptrdiff_t>(ids.size());
  const std::size_t d = table.cols;

#pragma omp parallel for schedule(static) if (br * static_cast<std::ptrdiff_t>(d) > kParallelCutoff)
  for (std::ptrdiff_t b = 0; b < br; ++b) {
    const double* src = table.row_ptr(static_cast<std::size_t>(ids[static_cast<std::size_t>(b)]));
    double* dst = out.row_ptr(static_cast<std::size_t>(b));
    for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
  }
}

void embedding_scatter_add(Matrix& table_grad, std::span<const int> ids, const Matrix& gout) {
  if (gout.rows != ids.size())
    throw std::invalid_argument("embedding_scatter_add: ids/grad row mismatch");
  if (gout.cols != table_grad.cols)
    throw std::invalid_argument("embedding_scatter_add: width mismatch");
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= table_grad.rows)
      throw std::out_of_range("embedding_scatter_add: id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(table_grad.rows));
  // Parallel over column chunks: each (row, column) cell accumulates in
  // ascending batch order on exactly one thread, matching the serial
  // reference bit for bit, while each thread walks contiguous row segments.
  const std::size_t dc = table_grad.cols;
  const std::size_t batch = ids.size();
  constexpr std::size_t kChunk = 16;
  const std::ptrdiff_t n_chunks = static_cast<std::ptrdiff_t>((dc + kChunk - 1) / kChunk);

#pragma omp parallel for schedule(static) if (static_cast<std::ptrdiff_t>(dc * batch) > 8 * kParallelCutoff)
  for (std::ptrdiff_t chunk = 0; chunk < n_chunks; ++chunk) {
    const std::size_t c0 = static_cast<std::size_t>(chunk) * kChunk;
    const std::size_t c1 = std::min(c0 + kChunk, dc);
    for (std::size_t b = 0; b < batch; ++b) {
      double* dst = table_grad.row_ptr(static_cast<std::size_t>(ids[b]));
      const double* src = gout.row_ptr(b);
      for (std::size_t j = c0; j < c1; ++j) dst[j] += src[j];
    }
  }
}

void adam_update(Matrix& value, const Matrix& grad, Matrix& m, Matrix& v, long step,
                 double learning_rate, double beta1, double beta2, double epsilon) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(value.size());

#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const double g = grad.data[k];
    const double mk = beta1 * m.data[k] + (1.0 - beta1) * g;
    const double vk = beta2 * v.data[k] + (1.0 - beta2) * g * g;
    m.data[k] = mk;
    v.data[k] = vk;
    const double m_hat = mk / bc1;
    const double v_hat = vk / bc2;
    value.data[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon);
  }
}

}  // namespace ilnrs::kernels
