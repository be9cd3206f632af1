#pragma once

#include "hsnorm/nn/graph.hpp"

#include <vector>

namespace hsnorm::nn {

// Shapes follow the row-per-item convention: an n x d matrix holds n items of
// width d. Broadcasting is always explicit.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);           // element-wise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, Var s);    // s is 1 x 1
Var add_row(Var a, Var row);     // a: n x d, row: 1 x d
Var scale_rows(Var a, Var w);    // a: n x d, w: n x 1

// x W (+ b); W is in x out, b is 1 x out.
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);

Var relu(Var a);
Var sigmoid(Var a);
Var silu(Var a);
Var softplus(Var a);
Var exp(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);  // zero gradient outside [lo, hi]

Var sum(Var a);                  // 1 x 1
Var mean(Var a);                 // 1 x 1
Var row_mean(Var a);             // n x 1
Var col_max(Var a);              // 1 x d, max over rows
Var row_max(Var a);              // n x 1, max over columns
Var group_max(Var a, int group); // (n*group) x d -> n x d, max within consecutive row groups
Var softmax_rows_per_col(Var a); // softmax over the row dimension, independently per column

Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var a, const std::vector<int>& rows);
Var repeat_rows(Var row, Eigen::Index n);           // 1 x d -> n x d
Var repeat_interleave_rows(Var a, int times);       // row i repeated `times` times consecutively

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var l2_normalize(Var a, double eps = 1e-12);        // per row
Var norm(Var a);                                    // Frobenius norm, 1 x 1

// For each row i: max over j in nbr(i) of (x_j - x_i).
Var neighbor_max_diff(Var x, const NeighborTable& nbr);

// y[t, d] = b[d] + sum_k w[k, d] * x[t - (K-1) + k, d], zero padded on the left.
Var causal_depthwise_conv(Var x, Var w, Var b);

// Selective scan with diagonal continuous-time A (D x S):
//   h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t,  y_t = C_t h_t + d * u_t
// u, delta: L x D; b, c: L x S; d_skip: 1 x D.
Var selective_scan(Var u, Var delta, Var a, Var b, Var c, Var d_skip);

}  // namespace hsnorm::nn
