#pragma once

#include <cstdint>
#include <span>

#include "ilnrs/matrix.hpp"

namespace ilnrs::kernels {

// Hot inner loops of the engine. Every kernel is OpenMP-parallel over
// independent output elements; the per-element reduction order is fixed, so
// results are bitwise identical to the serial reference for any thread count.

// out[BxO] = a[BxI] * w[IxO]
void gemm_nn(const Matrix& a, const Matrix& w, Matrix& out);

// out[IxO] += a^T * g   with a[BxI], g[BxO]  (weight gradient)
void gemm_tn_acc(const Matrix& a, const Matrix& g, Matrix& out);

// out[BxI] = g[BxO] * w^T   with w stored [IxO]  (input gradient)
void gemm_nt(const Matrix& g, const Matrix& w, Matrix& out);

// m[r,c] += bias[0,c] for every row
void add_row_vector(Matrix& m, const Matrix& bias);

// out[0,c] += sum_r g[r,c]  (bias gradient)
void col_sums_acc(const Matrix& g, Matrix& out);

void relu_forward(const Matrix& in, Matrix& out);

// gin = gout where in > 0, else 0 (subgradient 0 at the kink)
void relu_backward(const Matrix& in, const Matrix& gout, Matrix& gin);

// Inverted dropout. mask[i] is 0 or 1/(1-rate); out = in * mask. The mask is
// a pure function of (seed, element index), so generation order is free.
void dropout_forward(const Matrix& in, double rate, std::uint64_t seed, Matrix& out, Matrix& mask);

// gin = gout * mask (elementwise)
void apply_mask(const Matrix& gout, const Matrix& mask, Matrix& gin);

// out[b,:] = table[ids[b],:]
void embedding_gather(const Matrix& table, std::span<const int> ids, Matrix& out);

// table_grad[ids[b],:] += gout[b,:], accumulated in ascending b per row
void embedding_scatter_add(Matrix& table_grad, std::span<const int> ids, const Matrix& gout);

// One bias-corrected Adam update over all elements; grad is left untouched.
void adam_update(Matrix& value, const Matrix& grad, Matrix& m, Matrix& v, long step,
                 double learning_rate, double beta1, double beta2, double epsilon);

// Serial reference implementations: the simplest possible loops, kept for
// equivalence tests and the kernel benchmark. Results must match the parallel
// kernels bit for bit.
namespace ref {

void gemm_nn(const Matrix& a, const Matrix& w, Matrix& out);
void gemm_tn_acc(const Matrix& a, const Matrix& g, Matrix& out);
void gemm_nt(const Matrix& g, const Matrix& w, Matrix& out);
void add_row_vector(Matrix& m, const Matrix& bias);
void col_sums_acc(const Matrix& g, Matrix& out);
void relu_forward(const Matrix& in, Matrix& out);
void relu_backward(const Matrix& in, const Matrix& gout, Matrix& gin);
void dropout_forward(const Matrix& in, double rate, std::uint64_t seed, Matrix& out, Matrix& mask);
void apply_mask(const Matrix& gout, const Matrix& mask, Matrix& gin);
void embedding_gather(const Matrix& table, std::span<const int> ids, Matrix& out);
void embedding_scatter_add(Matrix& table_grad, std::span<const int> ids, const Matrix& gout);
void adam_update(Matrix& value, const Matrix& grad, Matrix& m, Matrix& v, long step,
                 double learning_rate, double beta1, double beta2, double epsilon);

}  // namespace ref

}  // namespace ilnrs::kernels
