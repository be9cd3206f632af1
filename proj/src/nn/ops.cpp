#include "hsnorm/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace hsnorm::nn {

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) fail(ErrorKind::shape, std::string(op) + ": " + detail);
}

std::string dims(const Mat& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) fail(ErrorKind::shape, "operands belong to different graphs");
}

template <class F>
Var unary(Var a, Mat value, F dfdx_times_gy) {
  const int ia = a.id();
  return a.graph().make(std::move(value), {a}, [ia, dfdx_times_gy](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    g.grad_acc(ia) += dfdx_times_gy(g.value(ia), g.value(self), g.grad(self));
  });
}

double softplus_scalar(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

Var matmul(Var a, Var b) {
  same_graph(a, b);
  require(a.cols() == b.rows(), "matmul", dims(a.value()) + " * " + dims(b.value()));
  const int ia = a.id(), ib = b.id();
  Mat y = a.value() * b.value();
  return a.graph().make(std::move(y), {a, b}, [ia, ib](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    if (g.requires_grad(ia)) g.grad_acc(ia).noalias() += gy * g.value(ib).transpose();
    if (g.requires_grad(ib)) g.grad_acc(ib).noalias() += g.value(ia).transpose() * gy;
  });
}

Var transpose(Var a) {
  const int ia = a.id();
  Mat y = a.value().transpose();
  return a.graph().make(std::move(y), {a}, [ia](Graph& g, int self) {
    if (g.requires_grad(ia)) g.grad_acc(ia) += g.grad(self).transpose();
  });
}

Var add(Var a, Var b) {
  same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", dims(a.value()) + " + " + dims(b.value()));
  const int ia = a.id(), ib = b.id();
  return a.graph().make(a.value() + b.value(), {a, b}, [ia, ib](Graph& g, int self) {
    if (g.requires_grad(ia)) g.grad_acc(ia) += g.grad(self);
    if (g.requires_grad(ib)) g.grad_acc(ib) += g.grad(self);
  });
}

Var sub(Var a, Var b) {
  same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", dims(a.value()) + " - " + dims(b.value()));
  const int ia = a.id(), ib = b.id();
  return a.graph().make(a.value() - b.value(), {a, b}, [ia, ib](Graph& g, int self) {
    if (g.requires_grad(ia)) g.grad_acc(ia) += g.grad(self);
    if (g.requires_grad(ib)) g.grad_acc(ib) -= g.grad(self);
  });
}

Var mul(Var a, Var b) {
  same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul", dims(a.value()) + " .* " + dims(b.value()));
  const int ia = a.id(), ib = b.id();
  Mat y = a.value().cwiseProduct(b.value());
  return a.graph().make(std::move(y), {a, b}, [ia, ib](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    if (g.requires_grad(ia)) g.grad_acc(ia) += gy.cwiseProduct(g.value(ib));
    if (g.requires_grad(ib)) g.grad_acc(ib) += gy.cwiseProduct(g.value(ia));
  });
}

Var scale(Var a, double s) {
  return unary(a, a.value() * s, [s](const Mat&, const Mat&, const Mat& gy) -> Mat { return gy * s; });
}

Var add_scalar(Var a, double s) {
  Mat y = a.value().array() + s;
  return unary(a, std::move(y), [](const Mat&, const Mat&, const Mat& gy) -> Mat { return gy; });
}

Var mul_scalar(Var a, Var s) {
  same_graph(a, s);
  require(s.rows() == 1 && s.cols() == 1, "mul_scalar", "scale must be 1x1, got " + dims(s.value()));
  const int ia = a.id(), is = s.id();
  Mat y = a.value() * s.value()(0, 0);
  return a.graph().make(std::move(y), {a, s}, [ia, is](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    if (g.requires_grad(ia)) g.grad_acc(ia) += gy * g.value(is)(0, 0);
    if (g.requires_grad(is)) g.grad_acc(is)(0, 0) += gy.cwiseProduct(g.value(ia)).sum();
  });
}

Var add_row(Var a, Var row) {
  same_graph(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", dims(a.value()) + " + " + dims(row.value()));
  const int ia = a.id(), ir = row.id();
  Mat y = a.value().rowwise() + row.value().row(0);
  return a.graph().make(std::move(y), {a, row}, [ia, ir](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    if (g.requires_grad(ia)) g.grad_acc(ia) += gy;
    if (g.requires_grad(ir)) g.grad_acc(ir) += gy.colwise().sum();
  });
}

Var scale_rows(Var a, Var w) {
  same_graph(a, w);
  require(w.cols() == 1 && w.rows() == a.rows(), "scale_rows", dims(a.value()) + " by " + dims(w.value()));
  const int ia = a.id(), iw = w.id();
  Mat y = w.value().col(0).asDiagonal() * a.value();
  return a.graph().make(std::move(y), {a, w}, [ia, iw](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    if (g.requires_grad(ia)) g.grad_acc(ia) += g.value(iw).col(0).asDiagonal() * gy;
    if (g.requires_grad(iw)) g.grad_acc(iw) += gy.cwiseProduct(g.value(ia)).rowwise().sum();
  });
}

Var linear(Var x, Var w, Var b) {
  same_graph(x, w);
  same_graph(x, b);
  require(x.cols() == w.rows(), "linear", dims(x.value()) + " * " + dims(w.value()));
  require(b.rows() == 1 && b.cols() == w.cols(), "linear", "bias " + dims(b.value()));
  const int ix = x.id(), iw = w.id(), ib = b.id();
  Mat y(x.rows(), w.cols());
  y.noalias() = x.value() * w.value();
  y.rowwise() += b.value().row(0);
  return x.graph().make(std::move(y), {x, w, b}, [ix, iw, ib](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    if (g.requires_grad(ix)) g.grad_acc(ix).noalias() += gy * g.value(iw).transpose();
    if (g.requires_grad(iw)) g.grad_acc(iw).noalias() += g.value(ix).transpose() * gy;
    if (g.requires_grad(ib)) g.grad_acc(ib) += gy.colwise().sum();
  });
}

Var linear(Var x, Var w) { return matmul(x, w); }

Var relu(Var a) {
  Mat y = a.value().cwiseMax(0.0);
  return unary(a, std::move(y), [](const Mat& x, const Mat&, const Mat& gy) -> Mat {
    return (x.array() > 0.0).select(gy.array(), 0.0).matrix();
  });
}

Var sigmoid(Var a) {
  Mat y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return unary(a, std::move(y), [](const Mat&, const Mat& y, const Mat& gy) -> Mat {
    return (gy.array() * y.array() * (1.0 - y.array())).matrix();
  });
}

Var silu(Var a) {
  Mat y = (a.value().array() / (1.0 + (-a.value().array()).exp())).matrix();
  return unary(a, std::move(y), [](const Mat& x, const Mat&, const Mat& gy) -> Mat {
    const auto s = 1.0 / (1.0 + (-x.array()).exp());
    return (gy.array() * s * (1.0 + x.array() * (1.0 - s))).matrix();
  });
}

Var softplus(Var a) {
  Mat y = a.value().unaryExpr([](double v) { return softplus_scalar(v); });
  return unary(a, std::move(y), [](const Mat& x, const Mat&, const Mat& gy) -> Mat {
    return (gy.array() / (1.0 + (-x.array()).exp())).matrix();
  });
}

Var exp(Var a) {
  Mat y = a.value().array().exp().matrix();
  return unary(a, std::move(y), [](const Mat&, const Mat& y, const Mat& gy) -> Mat {
    return gy.cwiseProduct(y);
  });
}

Var square(Var a) {
  Mat y = a.value().array().square().matrix();
  return unary(a, std::move(y), [](const Mat& x, const Mat&, const Mat& gy) -> Mat {
    return 2.0 * gy.cwiseProduct(x);
  });
}

Var clamp(Var a, double lo, double hi) {
  Mat y = a.value().cwiseMax(lo).cwiseMin(hi);
  return unary(a, std::move(y), [lo, hi](const Mat& x, const Mat&, const Mat& gy) -> Mat {
    return (x.array() >= lo && x.array() <= hi).select(gy.array(), 0.0).matrix();
  });
}

Var sum(Var a) {
  Mat y(1, 1);
  y(0, 0) = a.value().sum();
  const int ia = a.id();
  return a.graph().make(std::move(y), {a}, [ia](Graph& g, int self) {
    if (g.requires_grad(ia)) g.grad_acc(ia).array() += g.grad(self)(0, 0);
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  require(n > 0, "mean", "empty input");
  return scale(sum(a), 1.0 / n);
}

Var row_mean(Var a) {
  const double n = static_cast<double>(a.cols());
  Mat y = a.value().rowwise().mean();
  const int ia = a.id();
  return a.graph().make(std::move(y), {a}, [ia, n](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    g.grad_acc(ia).colwise() += g.grad(self).col(0) / n;
  });
}

Var col_max(Var a) {
  require(a.rows() > 0, "col_max", "empty input");
  const Mat& x = a.value();
  auto arg = std::make_shared<std::vector<Eigen::Index>>(x.cols());
  Mat y(1, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) y(0, c) = x.col(c).maxCoeff(&(*arg)[c]);
  const int ia = a.id();
  return a.graph().make(std::move(y), {a}, [ia, arg](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    const Mat& gy = g.grad(self);
    Mat& gx = g.grad_acc(ia);
    for (Eigen::Index c = 0; c < gy.cols(); ++c) gx((*arg)[c], c) += gy(0, c);
  });
}

Var row_max(Var a) {
  require(a.cols() > 0, "row_max", "empty input");
  const Mat& x = a.value();
  auto arg = std::make_shared<std::vector<Eigen::Index>>(x.rows());
  Mat y(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) y(r, 0) = x.row(r).maxCoeff(&(*arg)[r]);
  const int ia = a.id();
  return a.graph().make(std::move(y), {a}, [ia, arg](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    const Mat& gy = g.grad(self);
    Mat& gx = g.grad_acc(ia);
    for (Eigen::Index r = 0; r < gy.rows(); ++r) gx(r, (*arg)[r]) += gy(r, 0);
  });
}

Var group_max(Var a, int group) {
  require(group > 0 && a.rows() % group == 0, "group_max",
          std::to_string(a.rows()) + " rows not divisible by " + std::to_string(group));
  const Mat& x = a.value();
  const Eigen::Index n = x.rows() / group, d = x.cols();
  Mat y(n, d);
  auto arg = std::make_shared<Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index base = i * group;
    y.row(i) = x.row(base);
    arg->row(i).setConstant(base);
    for (int k = 1; k < group; ++k) {
      const auto xr = x.row(base + k);
      for (Eigen::Index c = 0; c < d; ++c) {
        if (xr(c) > y(i, c)) {
          y(i, c) = xr(c);
          (*arg)(i, c) = base + k;
        }
      }
    }
  }
  const int ia = a.id();
  return a.graph().make(std::move(y), {a}, [ia, arg](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    const Mat& gy = g.grad(self);
    Mat& gx = g.grad_acc(ia);
    for (Eigen::Index i = 0; i < gy.rows(); ++i) {
      for (Eigen::Index c = 0; c < gy.cols(); ++c) gx((*arg)(i, c), c) += gy(i, c);
    }
  });
}

Var softmax_rows_per_col(Var a) {
  const Mat& x = a.value();
  require(x.rows() > 0, "softmax", "empty input");
  Mat y = x.rowwise() - x.colwise().maxCoeff();
  y = y.array().exp().matrix();
  const Eigen::RowVectorXd z = y.colwise().sum();
  y.array().rowwise() /= z.array();
  const int ia = a.id();
  return a.graph().make(std::move(y), {a}, [ia](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    const Mat& gy = g.grad(self);
    const Mat& s = g.value(self);
    const Eigen::RowVectorXd dot = gy.cwiseProduct(s).colwise().sum();
    g.grad_acc(ia) += (s.array() * (gy.rowwise() - dot).array()).matrix();
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    same_graph(parts.front(), p);
    require(p.rows() == rows, "concat_cols", "row mismatch " + dims(p.value()));
    cols += p.cols();
  }
  Mat y(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    layout.emplace_back(p.id(), c);
    c += p.cols();
  }
  return parts.front().graph().make(std::move(y), parts, [layout](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    for (auto [id, off] : layout) {
      if (g.requires_grad(id)) g.grad_acc(id) += gy.middleCols(off, g.value(id).cols());
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows",
          "range [" + std::to_string(start) + ", " + std::to_string(start + count) + ") of " + dims(a.value()));
  const int ia = a.id();
  Mat y = a.value().middleRows(start, count);
  return a.graph().make(std::move(y), {a}, [ia, start, count](Graph& g, int self) {
    if (g.requires_grad(ia)) g.grad_acc(ia).middleRows(start, count) += g.grad(self);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols",
          "range [" + std::to_string(start) + ", " + std::to_string(start + count) + ") of " + dims(a.value()));
  const int ia = a.id();
  Mat y = a.value().middleCols(start, count);
  return a.graph().make(std::move(y), {a}, [ia, start, count](Graph& g, int self) {
    if (g.requires_grad(ia)) g.grad_acc(ia).middleCols(start, count) += g.grad(self);
  });
}

Var gather_rows(Var a, const std::vector<int>& rows) {
  const Mat& x = a.value();
  Mat y(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] >= 0 && rows[r] < x.rows(), "gather_rows", "index out of range");
    y.row(r) = x.row(rows[r]);
  }
  const int ia = a.id();
  auto idx = std::make_shared<std::vector<int>>(rows);
  return a.graph().make(std::move(y), {a}, [ia, idx](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    const Mat& gy = g.grad(self);
    Mat& gx = g.grad_acc(ia);
    for (std::size_t r = 0; r < idx->size(); ++r) gx.row((*idx)[r]) += gy.row(r);
  });
}

Var repeat_rows(Var row, Eigen::Index n) {
  require(row.rows() == 1, "repeat_rows", "expects a row vector, got " + dims(row.value()));
  const int ir = row.id();
  Mat y = row.value().replicate(n, 1);
  return row.graph().make(std::move(y), {row}, [ir](Graph& g, int self) {
    if (g.requires_grad(ir)) g.grad_acc(ir) += g.grad(self).colwise().sum();
  });
}

Var repeat_interleave_rows(Var a, int times) {
  require(times > 0, "repeat_interleave_rows", "times must be positive");
  const Mat& x = a.value();
  Mat y(x.rows() * times, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y.middleRows(i * times, times) = x.row(i).replicate(times, 1);
  const int ia = a.id();
  return a.graph().make(std::move(y), {a}, [ia, times](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    const Mat& gy = g.grad(self);
    Mat& gx = g.grad_acc(ia);
    for (Eigen::Index i = 0; i < gx.rows(); ++i) gx.row(i) += gy.middleRows(i * times, times).colwise().sum();
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  same_graph(x, gamma);
  same_graph(x, beta);
  const Eigen::Index d = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d, "layer_norm",
          "affine shape mismatch");
  const Mat& xv = x.value();
  auto xhat = std::make_shared<Mat>(xv.rows(), d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (xv.row(r).array() - mu) * (*inv_std)(r);
  }
  Mat y = (xhat->array().rowwise() * gamma.value().row(0).array()).matrix();
  y.rowwise() += beta.value().row(0);
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.graph().make(std::move(y), {x, gamma, beta}, [ix, ig, ib, xhat, inv_std](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    if (g.requires_grad(ig)) g.grad_acc(ig) += gy.cwiseProduct(*xhat).colwise().sum();
    if (g.requires_grad(ib)) g.grad_acc(ib) += gy.colwise().sum();
    if (!g.requires_grad(ix)) return;
    const Mat gxhat = (gy.array().rowwise() * g.value(ig).row(0).array()).matrix();
    const double n = static_cast<double>(gy.cols());
    Mat& gx = g.grad_acc(ix);
    for (Eigen::Index r = 0; r < gy.rows(); ++r) {
      const double m1 = gxhat.row(r).mean();
      const double m2 = gxhat.row(r).dot(xhat->row(r)) / n;
      gx.row(r).array() += (*inv_std)(r) * (gxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
    }
  });
}

Var l2_normalize(Var a, double eps) {
  const Mat& x = a.value();
  auto len = std::make_shared<Eigen::VectorXd>(x.rowwise().norm());
  Mat y = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) y.row(r) /= std::max((*len)(r), eps);
  const int ia = a.id();
  return a.graph().make(std::move(y), {a}, [ia, len, eps](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    const Mat& gy = g.grad(self);
    const Mat& y = g.value(self);
    Mat& gx = g.grad_acc(ia);
    for (Eigen::Index r = 0; r < gy.rows(); ++r) {
      const double l = std::max((*len)(r), eps);
      gx.row(r) += (gy.row(r) - y.row(r) * gy.row(r).dot(y.row(r))) / l;
    }
  });
}

Var norm(Var a) {
  Mat y(1, 1);
  y(0, 0) = a.value().norm();
  const int ia = a.id();
  return a.graph().make(std::move(y), {a}, [ia](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    const double n = g.value(self)(0, 0);
    if (n == 0.0) return;  // subgradient 0 at the origin
    g.grad_acc(ia) += g.value(ia) * (g.grad(self)(0, 0) / n);
  });
}

Var neighbor_max_diff(Var x, const NeighborTable& nbr) {
  const Mat& xv = x.value();
  require(nbr.rows() == xv.rows(), "neighbor_max_diff", "neighbor table rows mismatch");
  const Eigen::Index n = xv.rows(), d = xv.cols(), k = nbr.cols();
  require(k > 0, "neighbor_max_diff", "empty neighbourhood");
  Mat y(n, d);
  auto arg = std::make_shared<NeighborTable>(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      int best = nbr(i, 0);
      double bv = xv(best, c);
      for (Eigen::Index j = 1; j < k; ++j) {
        const int q = nbr(i, j);
        if (xv(q, c) > bv) {
          bv = xv(q, c);
          best = q;
        }
      }
      y(i, c) = bv - xv(i, c);
      (*arg)(i, c) = best;
    }
  }
  const int ix = x.id();
  return x.graph().make(std::move(y), {x}, [ix, arg](Graph& g, int self) {
    if (!g.requires_grad(ix)) return;
    const Mat& gy = g.grad(self);
    Mat& gx = g.grad_acc(ix);
    for (Eigen::Index i = 0; i < gy.rows(); ++i) {
      for (Eigen::Index c = 0; c < gy.cols(); ++c) {
        gx((*arg)(i, c), c) += gy(i, c);
        gx(i, c) -= gy(i, c);
      }
    }
  });
}

Var causal_depthwise_conv(Var x, Var w, Var b) {
  same_graph(x, w);
  same_graph(x, b);
  const Mat& xv = x.value();
  const Eigen::Index len = xv.rows(), d = xv.cols(), kw = w.rows();
  require(w.cols() == d && b.rows() == 1 && b.cols() == d && kw > 0, "causal_depthwise_conv",
          "kernel " + dims(w.value()) + " bias " + dims(b.value()) + " input " + dims(xv));
  Mat y = b.value().replicate(len, 1);
  const Mat& wv = w.value();
  for (Eigen::Index t = 0; t < len; ++t) {
    for (Eigen::Index k = 0; k < kw; ++k) {
      const Eigen::Index src = t - (kw - 1) + k;
      if (src >= 0) y.row(t).array() += wv.row(k).array() * xv.row(src).array();
    }
  }
  const int ix = x.id(), iw = w.id(), ib = b.id();
  return x.graph().make(std::move(y), {x, w, b}, [ix, iw, ib](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    const Mat& xv = g.value(ix);
    const Mat& wv = g.value(iw);
    const Eigen::Index len = gy.rows(), kw = wv.rows();
    if (g.requires_grad(ib)) g.grad_acc(ib) += gy.colwise().sum();
    const bool gx_on = g.requires_grad(ix), gw_on = g.requires_grad(iw);
    Mat* gx = gx_on ? &g.grad_acc(ix) : nullptr;
    Mat* gw = gw_on ? &g.grad_acc(iw) : nullptr;
    for (Eigen::Index t = 0; t < len; ++t) {
      for (Eigen::Index k = 0; k < kw; ++k) {
        const Eigen::Index src = t - (kw - 1) + k;
        if (src < 0) continue;
        if (gx) gx->row(src).array() += wv.row(k).array() * gy.row(t).array();
        if (gw) gw->row(k).array() += xv.row(src).array() * gy.row(t).array();
      }
    }
  });
}

Var selective_scan(Var u, Var delta, Var a, Var b, Var c, Var d_skip) {
  for (Var v : {delta, a, b, c, d_skip}) same_graph(u, v);
  const Mat& uv = u.value();
  const Eigen::Index len = uv.rows(), d = uv.cols(), s = a.cols();
  require(delta.rows() == len && delta.cols() == d, "selective_scan", "delta " + dims(delta.value()));
  require(a.rows() == d, "selective_scan", "A " + dims(a.value()));
  require(b.rows() == len && b.cols() == s, "selective_scan", "B " + dims(b.value()));
  require(c.rows() == len && c.cols() == s, "selective_scan", "C " + dims(c.value()));
  require(d_skip.rows() == 1 && d_skip.cols() == d, "selective_scan", "D " + dims(d_skip.value()));

  const Mat& dv = delta.value();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  const Mat& cv = c.value();
  const bool keep = u.graph().grad_enabled();

  // Per-step states and transitions are kept only when a backward pass may follow.
  auto states = std::make_shared<std::vector<Mat>>();
  auto trans = std::make_shared<std::vector<Mat>>();
  if (keep) {
    states->reserve(len);
    trans->reserve(len);
  }
  Mat h = Mat::Zero(d, s);
  Mat abar(d, s);
  Mat y(len, d);
  for (Eigen::Index t = 0; t < len; ++t) {
    abar = (dv.row(t).transpose().asDiagonal() * av).array().exp().matrix();
    const Eigen::VectorXd du = dv.row(t).transpose().cwiseProduct(uv.row(t).transpose());
    h = abar.cwiseProduct(h);
    h.noalias() += du * bv.row(t);
    y.row(t).noalias() = (h * cv.row(t).transpose()).transpose();
    if (keep) {
      states->push_back(h);
      trans->push_back(abar);
    }
  }
  y.array() += uv.array().rowwise() * d_skip.value().row(0).array();

  const int iu = u.id(), idl = delta.id(), ia = a.id(), ib = b.id(), ic = c.id(), id = d_skip.id();
  return u.graph().make(std::move(y), {u, delta, a, b, c, d_skip},
                        [iu, idl, ia, ib, ic, id, states, trans](Graph& g, int self) {
    const Mat& gy = g.grad(self);
    const Mat& uv = g.value(iu);
    const Mat& dv = g.value(idl);
    const Mat& av = g.value(ia);
    const Mat& bv = g.value(ib);
    const Mat& cv = g.value(ic);
    const Eigen::Index len = gy.rows(), dd = gy.cols(), ss = av.cols();

    Mat gu = gy.array().rowwise() * g.value(id).row(0).array();
    if (g.requires_grad(id)) g.grad_acc(id) += gy.cwiseProduct(uv).colwise().sum();
    Mat gdelta = Mat::Zero(len, dd);
    Mat ga = Mat::Zero(dd, ss);
    Mat gb = Mat::Zero(len, ss);
    Mat gc = Mat::Zero(len, ss);

    Mat gh = Mat::Zero(dd, ss);
    Mat tmp(dd, ss);
    for (Eigen::Index t = len - 1; t >= 0; --t) {
      const Mat& h = (*states)[t];
      if (t + 1 < len) gh = gh.cwiseProduct((*trans)[t + 1]);
      gh.noalias() += gy.row(t).transpose() * cv.row(t);
      gc.row(t).noalias() = gy.row(t) * h;
      if (t > 0) {
        // d/d(abar) = gh .* h_{t-1}; abar = exp(delta A)
        tmp = gh.cwiseProduct((*states)[t - 1]).cwiseProduct((*trans)[t]);
        ga.noalias() += dv.row(t).transpose().asDiagonal() * tmp;
        gdelta.row(t) += tmp.cwiseProduct(av).rowwise().sum().transpose();
      }
      const Eigen::VectorXd ghb = gh * bv.row(t).transpose();  // D
      gdelta.row(t) += ghb.cwiseProduct(uv.row(t).transpose()).transpose();
      gu.row(t) += ghb.cwiseProduct(dv.row(t).transpose()).transpose();
      const Eigen::VectorXd du = dv.row(t).transpose().cwiseProduct(uv.row(t).transpose());
      gb.row(t).noalias() += du.transpose() * gh;
    }
    if (g.requires_grad(iu)) g.grad_acc(iu) += gu;
    if (g.requires_grad(idl)) g.grad_acc(idl) += gdelta;
    if (g.requires_grad(ia)) g.grad_acc(ia) += ga;
    if (g.requires_grad(ib)) g.grad_acc(ib) += gb;
    if (g.requires_grad(ic)) g.grad_acc(ic) += gc;
  });
}

}  // namespace hsnorm::nn
