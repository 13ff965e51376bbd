#include "gaslt/objectives.hpp"

#include <cmath>

#include "gaslt/ops.hpp"

namespace gaslt::objectives {

namespace {
using detail::Node;
}

Tensor label_smoothed_ce(const Tensor& logits, std::span<const int> targets,
                         double eps, int pad_id) {
  if (logits.rank() != 2) {
    throw ShapeError("label_smoothed_ce: logits must be (M x V), got " +
                     shape_string(logits.shape()));
  }
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) {
    throw ShapeError("label_smoothed_ce: " + std::to_string(m) +
                     " logit rows vs " + std::to_string(targets.size()) +
                     " targets");
  }
  if (eps < 0.0 || eps >= 1.0) {
    throw ConfigError("label_smoothed_ce: smoothing must be in [0, 1)");
  }
  if (v < 2) throw ContractError("label_smoothed_ce: vocabulary too small");

  // log-softmax rows and the smoothed cross-entropy, skipping pad targets
  auto rows = std::make_shared<std::vector<std::size_t>>();
  auto softmax = std::make_shared<std::vector<double>>();
  const double off_mass = eps / static_cast<double>(v - 1);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const int gold = targets[r];
    if (gold == pad_id) continue;
    if (gold < 0 || static_cast<std::size_t>(gold) >= v) {
      throw ContractError("label_smoothed_ce: target id " +
                          std::to_string(gold) + " outside vocabulary of " +
                          std::to_string(v));
    }
    const double* row = logits.values().data() + r * v;
    double mx = row[0];
    for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    const double log_z = std::log(z) + mx;

    double row_loss = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      const double p =
          c == static_cast<std::size_t>(gold) ? 1.0 - eps : off_mass;
      row_loss -= p * (row[c] - log_z);
      softmax->push_back(std::exp(row[c] - log_z));
    }
    rows->push_back(r);
    loss += row_loss;
  }
  if (rows->empty()) {
    throw ContractError("label_smoothed_ce: every target is padding");
  }
  const double inv_n = 1.0 / static_cast<double>(rows->size());
  loss *= inv_n;

  std::vector<int> gold(targets.begin(), targets.end());
  return Tensor::from_op(
      {}, {loss}, {logits},
      [v, eps, off_mass, inv_n, rows, softmax, gold](Node& self) {
        Node& pl = *self.parents[0];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const double g = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < rows->size(); ++i) {
          const std::size_t r = (*rows)[i];
          const auto target = static_cast<std::size_t>(gold[r]);
          const double* q = softmax->data() + i * v;
          double* gr = pl.grad.data() + r * v;
          for (std::size_t c = 0; c < v; ++c) {
            const double p = c == target ? 1.0 - eps : off_mass;
            gr[c] += g * (q[c] - p);
          }
        }
      });
}

Tensor kt_loss(const Tensor& a, const Tensor& b, double s) {
  Tensor gap = ops::add_scalar(ops::cosine_similarity(a, b), -s);
  return ops::mul(gap, gap);
}

Tensor kt_loss_batch(const std::vector<Tensor>& embeddings,
                     const DenseMatrix& s) {
  const std::size_t n = embeddings.size();
  if (s.rows != n || s.cols != n) {
    throw ShapeError("kt_loss_batch: " + std::to_string(n) +
                     " embeddings vs " + std::to_string(s.rows) + "x" +
                     std::to_string(s.cols) + " similarities");
  }
  if (n < 2) return Tensor::scalar(0.0);
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      acc = ops::add(acc, kt_loss(embeddings[i], embeddings[j], s.at(i, j)));
    }
  }
  return ops::scale(acc, 1.0 / static_cast<double>(n * n - n));
}

Tensor total_loss(const Tensor& translation, const Tensor& kt,
                  double lambda_kt) {
  if (lambda_kt < 0.0) throw ConfigError("total_loss: negative kt weight");
  return ops::add(translation, ops::scale(kt, lambda_kt));
}

}  // namespace gaslt::objectives
