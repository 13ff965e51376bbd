#include "gaslt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace gaslt::ops {

namespace {

using detail::Node;

void require_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-d tensor, got " +
                     shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// Accumulate into a parent's grad if it participates in the sweep.
bool wants_grad(Node& parent) {
  if (!parent.requires_grad) return false;
  parent.ensure_grad();
  return true;
}

std::size_t last_dim(const Tensor& t) {
  if (t.rank() == 0) {
    throw ShapeError("softmax_last_dim: scalar input");
  }
  return t.shape().back();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2) {
    throw ShapeError("matmul: inner extents do not match, " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    const double* arow = av + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return Tensor::from_op(
      {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double* g = self.grad.data();
        if (wants_grad(pa)) {
          // dA = dC * B^T
          const double* bv = pb.values.data();
          for (std::size_t i = 0; i < m; ++i) {
            double* garow = pa.grad.data() + i * k;
            const double* grow = g + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double* brow = bv + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              garow[p] += acc;
            }
          }
        }
        if (wants_grad(pb)) {
          // dB = A^T * dC
          const double* av = pa.values.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* arow = av + i * k;
            const double* grow = g + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              double* gbrow = pb.grad.data() + p * n;
              const double aip = arow[p];
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_2d(x, "linear");
  require_2d(w, "linear");
  const std::size_t m = x.rows(), k = x.cols(), n = w.rows();
  if (w.cols() != k) {
    throw ShapeError("linear: input width " + std::to_string(k) +
                     " does not match weight " + shape_string(w.shape()));
  }
  const bool has_bias = b.defined();
  if (has_bias && b.size() != n) {
    throw ShapeError("linear: bias size " + std::to_string(b.size()) +
                     " does not match " + std::to_string(n) + " outputs");
  }
  std::vector<double> out(m * n);
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* xrow = xv + i * k;
    double* orow = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* wrow = wv + j * k;
      double acc = has_bias ? b.values()[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += xrow[p] * wrow[p];
      orow[j] = acc;
    }
  }
  std::vector<Tensor> parents = {x, w};
  if (has_bias) parents.push_back(b);
  return Tensor::from_op(
      {m, n}, std::move(out), parents, [m, k, n, has_bias](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        const double* g = self.grad.data();
        if (wants_grad(px)) {
          // dX = dY * W
          const double* wv = pw.values.data();
          for (std::size_t i = 0; i < m; ++i) {
            double* gxrow = px.grad.data() + i * k;
            const double* grow = g + i * n;
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = grow[j];
              if (gij == 0.0) continue;
              const double* wrow = wv + j * k;
              for (std::size_t p = 0; p < k; ++p) gxrow[p] += gij * wrow[p];
            }
          }
        }
        if (wants_grad(pw)) {
          // dW = dY^T * X
          const double* xv = px.values.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* xrow = xv + i * k;
            const double* grow = g + i * n;
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = grow[j];
              if (gij == 0.0) continue;
              double* gwrow = pw.grad.data() + j * k;
              for (std::size_t p = 0; p < k; ++p) gwrow[p] += gij * xrow[p];
            }
          }
        }
        if (has_bias) {
          Node& pb = *self.parents[2];
          if (wants_grad(pb)) {
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = g + i * n;
              for (std::size_t j = 0; j < n; ++j) pb.grad[j] += grow[j];
            }
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (int p = 0; p < 2; ++p) {
      Node& parent = *self.parents[p];
      if (!wants_grad(parent)) continue;
      for (std::size_t i = 0; i < self.size(); ++i)
        parent.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] - b.values()[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (wants_grad(pa)) {
      for (std::size_t i = 0; i < self.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (wants_grad(pb)) {
      for (std::size_t i = 0; i < self.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (wants_grad(pa)) {
      for (std::size_t i = 0; i < self.size(); ++i)
        pa.grad[i] += self.grad[i] * pb.values[i];
    }
    if (wants_grad(pb)) {
      for (std::size_t i = 0; i < self.size(); ++i)
        pb.grad[i] += self.grad[i] * pa.values[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [c](Node& self) {
    Node& pa = *self.parents[0];
    if (!wants_grad(pa)) return;
    for (std::size_t i = 0; i < self.size(); ++i)
      pa.grad[i] += self.grad[i] * c;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!wants_grad(pa)) return;
    for (std::size_t i = 0; i < self.size(); ++i) pa.grad[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!wants_grad(pa)) return;
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < self.size(); ++i)
      if (pa.values[i] > 0.0) pa.grad[i] += self.grad[i];
  });
}

Tensor softmax_last_dim(const Tensor& a) {
  const std::size_t dim = last_dim(a);
  if (dim == 0) throw ShapeError("softmax_last_dim: empty last dimension");
  const std::size_t rows = a.size() / dim;
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.values().data() + r * dim;
    double* y = out.data() + r * dim;
    double mx = x[0];
    for (std::size_t i = 1; i < dim; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      y[i] = std::exp(x[i] - mx);
      sum += y[i];
    }
    for (std::size_t i = 0; i < dim; ++i) y[i] /= sum;
  }
  return Tensor::from_op(
      a.shape(), std::move(out), {a}, [rows, dim](Node& self) {
        Node& pa = *self.parents[0];
        if (!wants_grad(pa)) return;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = self.values.data() + r * dim;
          const double* g = self.grad.data() + r * dim;
          double dot = 0.0;
          for (std::size_t i = 0; i < dim; ++i) dot += y[i] * g[i];
          double* gx = pa.grad.data() + r * dim;
          for (std::size_t i = 0; i < dim; ++i) gx[i] += y[i] * (g[i] - dot);
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t dim = x.shape().back();
  if (gain.size() != dim || bias.size() != dim) {
    throw ShapeError("layer_norm: gain/bias size must be " +
                     std::to_string(dim) + ", got " +
                     std::to_string(gain.size()) + "/" +
                     std::to_string(bias.size()));
  }
  const std::size_t rows = x.size() / dim;
  std::vector<double> out(x.size());
  auto saved = std::make_shared<std::vector<double>>(x.size() + rows);
  // saved layout: normalized values (rows*dim), then 1/std per row (rows)
  double* xhat = saved->data();
  double* inv_std = saved->data() + x.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * dim;
    double mean = 0.0;
    for (std::size_t i = 0; i < dim; ++i) mean += xr[i];
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = xr[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(dim);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    double* h = xhat + r * dim;
    double* y = out.data() + r * dim;
    for (std::size_t i = 0; i < dim; ++i) {
      h[i] = (xr[i] - mean) * is;
      y[i] = h[i] * gain.values()[i] + bias.values()[i];
    }
  }
  return Tensor::from_op(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, dim, saved](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const double* xhat = saved->data();
        const double* inv_std = saved->data() + rows * dim;
        const bool gx = wants_grad(px);
        const bool gg = wants_grad(pg);
        const bool gb = wants_grad(pb);
        std::vector<double> dxhat(dim);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * dim;
          const double* h = xhat + r * dim;
          if (gg || gb) {
            for (std::size_t i = 0; i < dim; ++i) {
              if (gg) pg.grad[i] += g[i] * h[i];
              if (gb) pb.grad[i] += g[i];
            }
          }
          if (gx) {
            double mean_dx = 0.0, mean_dxh = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
              dxhat[i] = g[i] * pg.values[i];
              mean_dx += dxhat[i];
              mean_dxh += dxhat[i] * h[i];
            }
            mean_dx /= static_cast<double>(dim);
            mean_dxh /= static_cast<double>(dim);
            double* grow = px.grad.data() + r * dim;
            for (std::size_t i = 0; i < dim; ++i) {
              grow[i] += inv_std[r] * (dxhat[i] - mean_dx - h[i] * mean_dxh);
            }
          }
        }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double momentum,
                  double eps) {
  require_2d(x, "batch_norm");
  const std::size_t n = x.rows(), dim = x.cols();
  if (gamma.size() != dim || beta.size() != dim) {
    throw ShapeError("batch_norm: gamma/beta size must be " +
                     std::to_string(dim));
  }
  if (state.running_mean.size() != dim || state.running_var.size() != dim) {
    throw ShapeError("batch_norm: running stats size " +
                     std::to_string(state.running_mean.size()) +
                     " does not match feature dim " + std::to_string(dim));
  }

  if (!training) {
    std::vector<double> out(x.size());
    std::vector<double> inv_std(dim);
    for (std::size_t j = 0; j < dim; ++j)
      inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + eps);
    for (std::size_t r = 0; r < n; ++r) {
      const double* xr = x.values().data() + r * dim;
      double* y = out.data() + r * dim;
      for (std::size_t j = 0; j < dim; ++j) {
        y[j] = (xr[j] - state.running_mean[j]) * inv_std[j] * gamma.values()[j] +
               beta.values()[j];
      }
    }
    auto mean_copy = std::make_shared<std::vector<double>>(state.running_mean);
    auto is_copy = std::make_shared<std::vector<double>>(std::move(inv_std));
    return Tensor::from_op(
        x.shape(), std::move(out), {x, gamma, beta},
        [n, dim, mean_copy, is_copy](Node& self) {
          Node& px = *self.parents[0];
          Node& pg = *self.parents[1];
          Node& pb = *self.parents[2];
          const bool gx = wants_grad(px);
          const bool gg = wants_grad(pg);
          const bool gb = wants_grad(pb);
          for (std::size_t r = 0; r < n; ++r) {
            const double* g = self.grad.data() + r * dim;
            const double* xr = px.values.data() + r * dim;
            for (std::size_t j = 0; j < dim; ++j) {
              const double xhat = (xr[j] - (*mean_copy)[j]) * (*is_copy)[j];
              if (gg) pg.grad[j] += g[j] * xhat;
              if (gb) pb.grad[j] += g[j];
              if (gx) px.grad[r * dim + j] += g[j] * pg.values[j] * (*is_copy)[j];
            }
          }
        });
  }

  if (n < 2) {
    throw ContractError(
        "batch_norm: training mode needs at least 2 rows, got " +
        std::to_string(n) + " (variance undefined)");
  }
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.values().data() + r * dim;
    for (std::size_t j = 0; j < dim; ++j) mean[j] += xr[j];
  }
  for (std::size_t j = 0; j < dim; ++j) mean[j] /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.values().data() + r * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = xr[j] - mean[j];
      var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < dim; ++j) var[j] /= static_cast<double>(n);

  // Running stats: unbiased variance, torch-style momentum update.
  const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
  for (std::size_t j = 0; j < dim; ++j) {
    state.running_mean[j] =
        (1.0 - momentum) * state.running_mean[j] + momentum * mean[j];
    state.running_var[j] =
        (1.0 - momentum) * state.running_var[j] + momentum * var[j] * unbias;
  }

  auto saved = std::make_shared<std::vector<double>>(x.size() + dim);
  double* xhat = saved->data();
  double* inv_std = saved->data() + x.size();
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < dim; ++j)
    inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.values().data() + r * dim;
    double* h = xhat + r * dim;
    double* y = out.data() + r * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      h[j] = (xr[j] - mean[j]) * inv_std[j];
      y[j] = h[j] * gamma.values()[j] + beta.values()[j];
    }
  }
  return Tensor::from_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, dim, saved](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const double* xhat = saved->data();
        const double* inv_std = saved->data() + n * dim;
        const bool gx = wants_grad(px);
        const bool gg = wants_grad(pg);
        const bool gb = wants_grad(pb);
        std::vector<double> sum_g(dim, 0.0), sum_gh(dim, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
          const double* g = self.grad.data() + r * dim;
          const double* h = xhat + r * dim;
          for (std::size_t j = 0; j < dim; ++j) {
            sum_g[j] += g[j];
            sum_gh[j] += g[j] * h[j];
          }
        }
        if (gg || gb) {
          for (std::size_t j = 0; j < dim; ++j) {
            if (gg) pg.grad[j] += sum_gh[j];
            if (gb) pb.grad[j] += sum_g[j];
          }
        }
        if (gx) {
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < n; ++r) {
            const double* g = self.grad.data() + r * dim;
            const double* h = xhat + r * dim;
            double* grow = px.grad.data() + r * dim;
            for (std::size_t j = 0; j < dim; ++j) {
              grow[j] += pg.values[j] * inv_std[j] *
                         (g[j] - inv_n * sum_g[j] - h[j] * inv_n * sum_gh[j]);
            }
          }
        }
      });
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64* rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout: rate must be in [0, 1), got " +
                      std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  if (rng == nullptr) {
    throw ContractError("dropout: training mode requires a generator");
  }
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = uni(*rng) < p ? 0.0 : keep_scale;
    (*mask)[i] = m;
    out[i] = x.values()[i] * m;
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [mask](Node& self) {
    Node& px = *self.parents[0];
    if (!wants_grad(px)) return;
    for (std::size_t i = 0; i < self.size(); ++i)
      px.grad[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor mean_rows(const Tensor& x) {
  require_2d(x, "mean_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0) throw ContractError("mean_rows: empty input");
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = x.values().data() + r * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += xr[j];
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < n; ++j) out[j] *= inv_m;
  return Tensor::from_op({n}, std::move(out), {x}, [m, n, inv_m](Node& self) {
    Node& px = *self.parents[0];
    if (!wants_grad(px)) return;
    for (std::size_t r = 0; r < m; ++r) {
      double* grow = px.grad.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) grow[j] += self.grad[j] * inv_m;
    }
  });
}

Tensor max_rows(const Tensor& x) {
  require_2d(x, "max_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0) throw ContractError("max_rows: empty input");
  std::vector<double> out(n);
  auto argmax = std::make_shared<std::vector<std::size_t>>(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    double best = x.values()[j];
    std::size_t best_r = 0;
    for (std::size_t r = 1; r < m; ++r) {
      const double v = x.values()[r * n + j];
      if (v > best) {
        best = v;
        best_r = r;
      }
    }
    out[j] = best;
    (*argmax)[j] = best_r;
  }
  return Tensor::from_op({n}, std::move(out), {x}, [n, argmax](Node& self) {
    Node& px = *self.parents[0];
    if (!wants_grad(px)) return;
    for (std::size_t j = 0; j < n; ++j)
      px.grad[(*argmax)[j] * n + j] += self.grad[j];
  });
}

Tensor mean_all(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean_all: empty input");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return Tensor::from_op({}, {acc * inv}, {x}, [inv](Node& self) {
    Node& px = *self.parents[0];
    if (!wants_grad(px)) return;
    const double g = self.grad[0] * inv;
    for (std::size_t i = 0; i < px.size(); ++i) px.grad[i] += g;
  });
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return Tensor::from_op({}, {acc}, {x}, [](Node& self) {
    Node& px = *self.parents[0];
    if (!wants_grad(px)) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < px.size(); ++i) px.grad[i] += g;
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) {
    throw ShapeError("cosine_similarity: expected two equal-length vectors, " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a.values()[i] * b.values()[i];
    na += a.values()[i] * a.values()[i];
    nb += b.values()[i] * b.values()[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na == 0.0 || nb == 0.0) {
    throw ContractError("cosine_similarity: zero-norm vector");
  }
  const double cos = dot / (na * nb);
  return Tensor::from_op({}, {cos}, {a, b}, [na, nb, cos](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double g = self.grad[0];
    const double inv = 1.0 / (na * nb);
    if (wants_grad(pa)) {
      for (std::size_t i = 0; i < pa.size(); ++i)
        pa.grad[i] += g * (pb.values[i] * inv - cos * pa.values[i] / (na * na));
    }
    if (wants_grad(pb)) {
      for (std::size_t i = 0; i < pb.size(); ++i)
        pb.grad[i] += g * (pa.values[i] * inv - cos * pb.values[i] / (nb * nb));
    }
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_2d(table, "embedding_lookup");
  const std::size_t vocab = table.rows(), dim = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw ContractError("embedding_lookup: id " + std::to_string(id) +
                          " outside vocabulary of " + std::to_string(vocab));
    }
  }
  std::vector<double> out(ids.size() * dim);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const double* src = table.values().data() + static_cast<std::size_t>(ids[r]) * dim;
    std::copy(src, src + dim, out.data() + r * dim);
  }
  auto idx = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  return Tensor::from_op(
      {ids.size(), dim}, std::move(out), {table}, [dim, idx](Node& self) {
        Node& pt = *self.parents[0];
        if (!wants_grad(pt)) return;
        for (std::size_t r = 0; r < idx->size(); ++r) {
          const double* g = self.grad.data() + r * dim;
          double* dst = pt.grad.data() + static_cast<std::size_t>((*idx)[r]) * dim;
          for (std::size_t j = 0; j < dim; ++j) dst[j] += g[j];
        }
      });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_rows");
  require_2d(b, "concat_rows");
  if (a.cols() != b.cols()) {
    throw ShapeError("concat_rows: widths differ, " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
  const std::size_t ma = a.rows(), mb = b.rows(), n = a.cols();
  std::vector<double> out;
  out.reserve((ma + mb) * n);
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return Tensor::from_op(
      {ma + mb, n}, std::move(out), {a, b}, [ma, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (wants_grad(pa)) {
          for (std::size_t i = 0; i < pa.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (wants_grad(pb)) {
          const std::size_t off = ma * n;
          for (std::size_t i = 0; i < pb.size(); ++i)
            pb.grad[i] += self.grad[off + i];
        }
      });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row counts differ, " +
                       std::to_string(m) + " vs " + std::to_string(p.rows()));
    }
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  auto widths = std::make_shared<std::vector<std::size_t>>();
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    widths->push_back(w);
    for (std::size_t r = 0; r < m; ++r) {
      std::copy(p.values().data() + r * w, p.values().data() + (r + 1) * w,
                out.data() + r * total + off);
    }
    off += w;
  }
  return Tensor::from_op(
      {m, total}, std::move(out), parts, [m, total, widths](Node& self) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
          Node& p = *self.parents[pi];
          const std::size_t w = (*widths)[pi];
          if (wants_grad(p)) {
            for (std::size_t r = 0; r < m; ++r) {
              const double* g = self.grad.data() + r * total + off;
              double* dst = p.grad.data() + r * w;
              for (std::size_t j = 0; j < w; ++j) dst[j] += g[j];
            }
          }
          off += w;
        }
      });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_2d(x, "slice_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin > end || end > m) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + std::to_string(m) +
                     " rows");
  }
  std::vector<double> out(x.values().begin() + begin * n,
                          x.values().begin() + end * n);
  return Tensor::from_op(
      {end - begin, n}, std::move(out), {x}, [begin, n](Node& self) {
        Node& px = *self.parents[0];
        if (!wants_grad(px)) return;
        const std::size_t off = begin * n;
        for (std::size_t i = 0; i < self.size(); ++i)
          px.grad[off + i] += self.grad[i];
      });
}

Tensor transpose(const Tensor& x) {
  require_2d(x, "transpose");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c * m + r] = x.values()[r * n + c];
  return Tensor::from_op({n, m}, std::move(out), {x}, [m, n](Node& self) {
    Node& px = *self.parents[0];
    if (!wants_grad(px)) return;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c)
        px.grad[r * n + c] += self.grad[c * m + r];
  });
}

}  // namespace gaslt::ops
