#pragma once

#include <span>

#include "gaslt/matrix.hpp"
#include "gaslt/tensor.hpp"

namespace gaslt::objectives {

// Component losses of one batch, detached for logging.
struct LossReport {
  double translation = 0.0;
  double kt = 0.0;
  double total = 0.0;
  std::size_t tokens = 0;  // non-pad target positions
};

// Cross-entropy of logits (M x V) against the smoothed target distribution
// (1-eps on the gold token, eps/(V-1) elsewhere), averaged over non-pad rows.
Tensor label_smoothed_ce(const Tensor& logits, std::span<const int> targets,
                         double eps = 0.4, int pad_id = 0);

// Similarity-transfer penalty of one pair: (cos(a, b) - s)^2.
Tensor kt_loss(const Tensor& a, const Tensor& b, double s);

// Mean of kt_loss over all ordered pairs i != j of the batch, with s[i,j]
// taken from the similarity submatrix. Zero when fewer than two embeddings.
Tensor kt_loss_batch(const std::vector<Tensor>& embeddings,
                     const DenseMatrix& s);

// translation + lambda_kt * kt
Tensor total_loss(const Tensor& translation, const Tensor& kt,
                  double lambda_kt = 1.0);

}  // namespace gaslt::objectives
