#include "mqmrc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mqmrc/errors.hpp"

namespace mqmrc {

namespace {

bool tracing(const Tensor& a) { return active_tape() && a.requires_grad(); }
bool tracing(const Tensor& a, const Tensor& b) {
  return active_tape() && (a.requires_grad() || b.requires_grad());
}

void trace(Tensor& out, std::function<void()> step) {
  out.set_requires_grad(true);
  active_tape()->record(std::move(step));
}

struct MatDims {
  std::size_t batch;  // number of 2-d slices
  std::size_t m, p, q;
  bool a_broadcast;  // a is rank-2, reused for every batch
  bool b_broadcast;
};

MatDims matmul_dims(const Tensor& a, const Tensor& b) {
  const auto bad = [&] {
    return ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  };
  if (a.rank() == 2 && b.rank() == 2) {
    if (a.dim(1) != b.dim(0)) throw bad();
    return {1, a.dim(0), a.dim(1), b.dim(1), false, false};
  }
  if (a.rank() == 3 && b.rank() == 3) {
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) throw bad();
    return {a.dim(0), a.dim(1), a.dim(2), b.dim(2), false, false};
  }
  if (a.rank() == 3 && b.rank() == 2) {
    if (a.dim(2) != b.dim(0)) throw bad();
    return {a.dim(0), a.dim(1), a.dim(2), b.dim(1), false, true};
  }
  if (a.rank() == 2 && b.rank() == 3) {
    if (a.dim(1) != b.dim(1)) throw bad();
    return {b.dim(0), a.dim(0), a.dim(1), b.dim(2), true, false};
  }
  throw bad();
}

// C[m,q] += A[m,p] @ B[p,q]
void gemm_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t p,
              std::size_t q) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = A + i * p;
    double* c_row = C + i * q;
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = a_row[k];
      const double* b_row = B + k * q;
      for (std::size_t j = 0; j < q; ++j) c_row[j] += aik * b_row[j];
    }
  }
}

// dA[m,p] += dC[m,q] @ B[p,q]^T
void gemm_grad_a(const double* dC, const double* B, double* dA, std::size_t m, std::size_t p,
                 std::size_t q) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* dc_row = dC + i * q;
    double* da_row = dA + i * p;
    for (std::size_t k = 0; k < p; ++k) {
      const double* b_row = B + k * q;
      double acc = 0.0;
      for (std::size_t j = 0; j < q; ++j) acc += dc_row[j] * b_row[j];
      da_row[k] += acc;
    }
  }
}

// dB[p,q] += A[m,p]^T @ dC[m,q]
void gemm_grad_b(const double* A, const double* dC, double* dB, std::size_t m, std::size_t p,
                 std::size_t q) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = A + i * p;
    const double* dc_row = dC + i * q;
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = a_row[k];
      double* db_row = dB + k * q;
      for (std::size_t j = 0; j < q; ++j) db_row[j] += aik * dc_row[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatDims d = matmul_dims(a, b);
  Shape out_shape = (a.rank() == 2 && b.rank() == 2)
                        ? Shape{d.m, d.q}
                        : Shape{d.batch, d.m, d.q};
  Tensor out(out_shape);
  const std::size_t a_stride = d.a_broadcast ? 0 : d.m * d.p;
  const std::size_t b_stride = d.b_broadcast ? 0 : d.p * d.q;
  for (std::size_t s = 0; s < d.batch; ++s) {
    gemm_acc(a.data().data() + s * a_stride, b.data().data() + s * b_stride,
             out.data().data() + s * d.m * d.q, d.m, d.p, d.q);
  }
  if (tracing(a, b)) {
    trace(out, [a, b, out, d, a_stride, b_stride]() {
      const auto& go = out.grad();
      for (std::size_t s = 0; s < d.batch; ++s) {
        const double* dc = go.data() + s * d.m * d.q;
        if (a.requires_grad()) {
          gemm_grad_a(dc, b.data().data() + s * b_stride, a.grad().data() + s * a_stride, d.m,
                      d.p, d.q);
        }
        if (b.requires_grad()) {
          gemm_grad_b(a.data().data() + s * a_stride, dc, b.grad().data() + s * b_stride, d.m,
                      d.p, d.q);
        }
      }
    });
  }
  return out;
}

namespace {

struct EwPlan {
  Shape out_shape;
  std::size_t n;          // total elements
  std::size_t lane;       // broadcast vector length (n when no broadcast)
  bool a_is_vec;          // a broadcast across rows
  bool b_is_vec;
};

EwPlan ew_plan(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return {a.shape(), a.size(), a.size(), false, false};
  if (b.rank() == 1 && !a.shape().empty() && a.shape().back() == b.dim(0)) {
    return {a.shape(), a.size(), b.dim(0), false, true};
  }
  if (a.rank() == 1 && !b.shape().empty() && b.shape().back() == a.dim(0)) {
    return {b.shape(), b.size(), a.dim(0), true, false};
  }
  throw ShapeError("elementwise: shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " do not broadcast");
}

}  // namespace

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  const EwPlan plan = ew_plan(a, b);
  Tensor out(plan.out_shape);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < plan.n; ++i) {
    const double x = plan.a_is_vec ? av[i % plan.lane] : av[i];
    const double y = plan.b_is_vec ? bv[i % plan.lane] : bv[i];
    switch (kind) {
      case EwKind::Mul: ov[i] = x * y; break;
      case EwKind::Add: ov[i] = x + y; break;
      case EwKind::Sub: ov[i] = x - y; break;
      case EwKind::Max: ov[i] = x >= y ? x : y; break;
    }
  }
  if (tracing(a, b)) {
    trace(out, [kind, a, b, out, plan]() {
      const auto& go = out.grad();
      const auto& av2 = a.data();
      const auto& bv2 = b.data();
      double* ga = a.requires_grad() ? a.grad().data() : nullptr;
      double* gb = b.requires_grad() ? b.grad().data() : nullptr;
      for (std::size_t i = 0; i < plan.n; ++i) {
        const std::size_t ia = plan.a_is_vec ? i % plan.lane : i;
        const std::size_t ib = plan.b_is_vec ? i % plan.lane : i;
        const double g = go[i];
        switch (kind) {
          case EwKind::Mul:
            if (ga) ga[ia] += g * bv2[ib];
            if (gb) gb[ib] += g * av2[ia];
            break;
          case EwKind::Add:
            if (ga) ga[ia] += g;
            if (gb) gb[ib] += g;
            break;
          case EwKind::Sub:
            if (ga) ga[ia] += g;
            if (gb) gb[ib] -= g;
            break;
          case EwKind::Max:
            // ties go to a
            if (av2[ia] >= bv2[ib]) {
              if (ga) ga[ia] += g;
            } else if (gb) {
              gb[ib] += g;
            }
            break;
        }
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * c;
  if (tracing(x)) {
    trace(out, [x, out, c]() {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += c * go[i];
    });
  }
  return out;
}

namespace {

struct AxisPlan {
  std::size_t outer, n, stride;
};

AxisPlan axis_plan(const Tensor& x, int axis) {
  const int r = static_cast<int>(x.rank());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  }
  AxisPlan p{1, x.dim(static_cast<std::size_t>(axis)), 1};
  for (int i = 0; i < axis; ++i) p.outer *= x.dim(static_cast<std::size_t>(i));
  for (int i = axis + 1; i < r; ++i) p.stride *= x.dim(static_cast<std::size_t>(i));
  return p;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const AxisPlan p = axis_plan(x, axis);
  Tensor out(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t o = 0; o < p.outer; ++o) {
    for (std::size_t s = 0; s < p.stride; ++s) {
      const std::size_t base = o * p.n * p.stride + s;
      double mx = xv[base];
      for (std::size_t j = 1; j < p.n; ++j) mx = std::max(mx, xv[base + j * p.stride]);
      double total = 0.0;
      for (std::size_t j = 0; j < p.n; ++j) {
        const double e = std::exp(xv[base + j * p.stride] - mx);
        ov[base + j * p.stride] = e;
        total += e;
      }
      for (std::size_t j = 0; j < p.n; ++j) ov[base + j * p.stride] /= total;
    }
  }
  if (tracing(x)) {
    trace(out, [x, out, p]() {
      const auto& go = out.grad();
      const auto& y = out.data();
      auto& gx = x.grad();
      for (std::size_t o = 0; o < p.outer; ++o) {
        for (std::size_t s = 0; s < p.stride; ++s) {
          const std::size_t base = o * p.n * p.stride + s;
          double dot = 0.0;
          for (std::size_t j = 0; j < p.n; ++j) {
            const std::size_t k = base + j * p.stride;
            dot += go[k] * y[k];
          }
          for (std::size_t j = 0; j < p.n; ++j) {
            const std::size_t k = base + j * p.stride;
            gx[k] += (go[k] - dot) * y[k];
          }
        }
      }
    });
  }
  return out;
}

namespace {

// Row cross-entropy with a stable log-sum-exp; writes softmax probs if asked.
double row_cross_entropy(const double* logits, std::size_t n, std::size_t target,
                         double* probs_out) {
  double mx = logits[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += std::exp(logits[j] - mx);
  const double lse = mx + std::log(total);
  if (probs_out) {
    for (std::size_t j = 0; j < n; ++j) probs_out[j] = std::exp(logits[j] - mx) / total;
  }
  return lse - logits[target];
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  if (logits.rank() != 1) {
    throw ShapeError("cross_entropy: logits must be a vector, got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.size();
  if (target >= n) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                     std::to_string(n) + " classes");
  }
  Tensor out = Tensor::scalar(row_cross_entropy(logits.data().data(), n, target, nullptr));
  if (tracing(logits)) {
    trace(out, [logits, out, target, n]() {
      const double g = out.grad()[0];
      std::vector<double> probs(n);
      row_cross_entropy(logits.data().data(), n, target, probs.data());
      auto& gx = logits.grad();
      for (std::size_t j = 0; j < n; ++j) {
        gx[j] += g * (probs[j] - (j == target ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<std::size_t>& targets) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy_mean: logits must be [N,C], got " + shape_str(logits.shape()));
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy_mean: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " rows");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (targets[i] >= cols) {
      throw IndexError("cross_entropy_mean: target " + std::to_string(targets[i]) +
                       " out of range for " + std::to_string(cols) + " classes");
    }
    total += row_cross_entropy(logits.data().data() + i * cols, cols, targets[i], nullptr);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(rows));
  if (tracing(logits)) {
    trace(out, [logits, out, targets, rows, cols]() {
      const double g = out.grad()[0] / static_cast<double>(rows);
      std::vector<double> probs(cols);
      auto& gx = logits.grad();
      for (std::size_t i = 0; i < rows; ++i) {
        row_cross_entropy(logits.data().data() + i * cols, cols, targets[i], probs.data());
        for (std::size_t j = 0; j < cols; ++j) {
          gx[i * cols + j] += g * (probs[j] - (j == targets[i] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
  if (x.shape().empty()) throw ShapeError("layer_norm: empty tensor");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) + "], got " +
                     shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.size() / d;
  Tensor out(x.shape());
  const auto& xv = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  auto& ov = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      ov[r * d + j] = gv[j] * ((row[j] - mu) * inv) + bv[j];
    }
  }
  if (tracing(x, gamma) || tracing(beta)) {
    trace(out, [x, gamma, beta, out, eps, rows, d]() {
      const auto& go = out.grad();
      const auto& xv2 = x.data();
      const auto& gv2 = gamma.data();
      double* gx = x.requires_grad() ? x.grad().data() : nullptr;
      double* gg = gamma.requires_grad() ? gamma.grad().data() : nullptr;
      double* gb = beta.requires_grad() ? beta.grad().data() : nullptr;
      std::vector<double> xhat(d), gl(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv2.data() + r * d;
        const double* grow = go.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double c = row[j] - mu;
          var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        double mean_gl = 0.0, mean_glx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          xhat[j] = (row[j] - mu) * inv;
          gl[j] = grow[j] * gv2[j];
          mean_gl += gl[j];
          mean_glx += gl[j] * xhat[j];
        }
        mean_gl /= static_cast<double>(d);
        mean_glx /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          if (gx) gx[r * d + j] += (gl[j] - mean_gl - xhat[j] * mean_glx) * inv;
          if (gg) gg[j] += grow[j] * xhat[j];
          if (gb) gb[j] += grow[j];
        }
      }
    });
  }
  return out;
}

namespace {

Tensor pointwise(const Tensor& x, double (*fwd)(double), double (*grad_from_xy)(double, double)) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = fwd(x.data()[i]);
  if (tracing(x)) {
    trace(out, [x, out, grad_from_xy]() {
      const auto& go = out.grad();
      const auto& xv = x.data();
      const auto& yv = out.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * grad_from_xy(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  return pointwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      // subgradient at 0 is 0
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return pointwise(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& x) {
  return pointwise(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::inv_sqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::inv_sqrt2));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must be in [0,1)");
  if (rate == 0.0) return x;
  Tensor out(x.shape());
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double inv_keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = unit(rng) < rate ? 0.0 : inv_keep;
    out.data()[i] = x.data()[i] * (*mask)[i];
  }
  if (tracing(x)) {
    trace(out, [x, out, mask]() {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (*mask)[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (tracing(x)) {
    trace(out, [x, out]() {
      const double g = out.grad()[0];
      auto& gx = x.grad();
      for (double& v : gx) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(new_shape) +
                     " changes element count");
  }
  Tensor out(std::move(new_shape), x.data());
  if (tracing(x)) {
    trace(out, [x, out]() {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose_last2 needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t m = x.shape()[x.rank() - 2];
  const std::size_t n = x.shape()[x.rank() - 1];
  const std::size_t batch = x.size() / (m * n);
  Shape out_shape = x.shape();
  std::swap(out_shape[x.rank() - 2], out_shape[x.rank() - 1]);
  Tensor out(out_shape);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t off = s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ov[off + j * m + i] = xv[off + i * n + j];
    }
  }
  if (tracing(x)) {
    trace(out, [x, out, batch, m, n]() {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t s = 0; s < batch; ++s) {
        const std::size_t off = s * m * n;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gx[off + i * n + j] += go[off + j * m + i];
        }
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (x.shape().empty()) throw ShapeError("gather_rows: empty tensor");
  const std::size_t n = x.dim(0);
  const std::size_t width = x.size() / n;
  for (std::size_t r : rows) {
    if (r >= n) {
      throw IndexError("gather_rows: row " + std::to_string(r) + " out of range for " +
                       shape_str(x.shape()));
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data().data() + rows[i] * width, width, out.data().data() + i * width);
  }
  if (tracing(x)) {
    trace(out, [x, out, rows, width]() {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) gx[rows[i] * width + j] += go[i * width + j];
      }
    });
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("stack_rows: no tensors");
  const Shape& inner = parts[0].shape();
  for (const Tensor& t : parts) {
    if (t.shape() != inner) {
      throw ShapeError("stack_rows: mixed shapes " + shape_str(inner) + " and " +
                       shape_str(t.shape()));
    }
  }
  Shape out_shape;
  out_shape.push_back(parts.size());
  out_shape.insert(out_shape.end(), inner.begin(), inner.end());
  Tensor out(out_shape);
  const std::size_t width = parts[0].size();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::copy_n(parts[i].data().data(), width, out.data().data() + i * width);
  }
  bool any_grad = false;
  for (const Tensor& t : parts) any_grad = any_grad || t.requires_grad();
  if (active_tape() && any_grad) {
    trace(out, [parts, out, width]() {
      const auto& go = out.grad();
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!parts[i].requires_grad()) continue;
        auto& gp = parts[i].grad();
        for (std::size_t j = 0; j < width; ++j) gp[j] += go[i * width + j];
      }
    });
  }
  return out;
}

Tensor split_heads(const Tensor& x, std::size_t n_heads) {
  if (x.rank() != 2) throw ShapeError("split_heads needs [n,d], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n_heads == 0 || d % n_heads != 0) {
    throw ShapeError("split_heads: " + std::to_string(n_heads) + " heads do not divide dim " +
                     std::to_string(d));
  }
  const std::size_t dh = d / n_heads;
  Tensor out(Shape{n_heads, n, dh});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dh; ++j) ov[(h * n + i) * dh + j] = xv[i * d + h * dh + j];
    }
  }
  if (tracing(x)) {
    trace(out, [x, out, n_heads, n, d, dh]() {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t h = 0; h < n_heads; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < dh; ++j) gx[i * d + h * dh + j] += go[(h * n + i) * dh + j];
        }
      }
    });
  }
  return out;
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("merge_heads needs [h,n,dh], got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), n = x.dim(1), dh = x.dim(2);
  const std::size_t d = h * dh;
  Tensor out(Shape{n, d});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t hi = 0; hi < h; ++hi) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dh; ++j) ov[i * d + hi * dh + j] = xv[(hi * n + i) * dh + j];
    }
  }
  if (tracing(x)) {
    trace(out, [x, out, h, n, dh, d]() {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t hi = 0; hi < h; ++hi) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < dh; ++j) gx[(hi * n + i) * dh + j] += go[i * d + hi * dh + j];
        }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

}  // namespace mqmrc
