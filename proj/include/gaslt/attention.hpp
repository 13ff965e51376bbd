#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gaslt/matrix.hpp"
#include "gaslt/tensor.hpp"

namespace gaslt::attention {

enum class Variant { kSelf, kGloss, kSliding };

Variant variant_from_string(const std::string& name);
std::string variant_name(Variant v);

// Attention weights of one head in one layer, detached from the graph.
// key_len is T for full/sliding attention and N (the sampled positions) for
// gloss attention, in which case `positions` holds the fractional sampling
// position of every weight.
struct AttentionMap {
  int layer = 0;
  int head = 0;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::size_t source_len = 0;          // true frame count T
  std::vector<double> weights;         // query_len x key_len, rows sum to 1
  std::vector<double> positions;       // gloss only: query_len x key_len

  bool gloss() const { return !positions.empty(); }

  // Weights laid out over the key axis (query_len x source_len). Gloss
  // weights are deposited at floor(p) and the circular next frame using the
  // interpolation fractions; full/sliding maps are returned as-is.
  DenseMatrix key_space() const;
};

// Count of attention score evaluations (one per query/key dot product) since
// the last reset. Used to assert the O(NT) vs O(T^2) cost claim exactly.
std::uint64_t score_eval_count();
void reset_score_eval_count();

// One head's projections. w_q/w_k/w_v are (d_head x d_in); w_offset is the
// (N x d_head) offset map of gloss attention (undefined for other variants).
struct HeadParams {
  Tensor w_q, w_k, w_v;
  Tensor w_offset;
  int positions = 0;  // N
};

// Key-side masking. `valid` marks keys that may be attended to with nonzero
// entries (empty means all); `causal` restricts query t to keys <= t.
struct KeyMask {
  std::span<const std::uint8_t> valid = {};
  bool causal = false;
};

struct AttentionResult {
  Tensor output;
  AttentionMap map;
};

// Initial window of N attention positions for query t: consecutive integers
// starting at t - ceil(N/2), returned unwrapped (possibly negative).
std::vector<double> init_positions(std::size_t t, int n);

// Adds offsets to raw positions and wraps by floored modulo into [0, len).
// Differentiable in the offsets (unit gradient away from wrap points).
Tensor adjust_positions(std::span<const double> raw, const Tensor& offsets,
                        std::size_t len);

// Linear interpolation of key/value rows at fractional positions in [0, T).
// The upper index wraps circularly; the interpolation weight is computed
// against the unwrapped upper index. Differentiable in positions, k and v.
std::pair<Tensor, Tensor> interpolate_kv(const Tensor& positions,
                                         const Tensor& k, const Tensor& v);

// Full scaled dot-product attention on projected q (Tq x d), k, v (Tk x d).
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k,
                                     const Tensor& v, KeyMask mask = {});

// Spec surface: single-head attention on raw input x (T x d_in), projections
// applied inside.
AttentionResult self_attention(const Tensor& x, const HeadParams& p,
                               KeyMask mask = {});

// Gloss attention: every query attends to N positions initialized as a local
// window, shifted by learned query-dependent offsets, with keys/values
// sampled by linear interpolation. true_len (default: all rows) is the
// unpadded length used for the position modulo.
AttentionResult gloss_attention(const Tensor& x, const HeadParams& p,
                                std::size_t true_len = 0);

// Plain sliding-window baseline: full attention banded to the fixed integer
// window t - ceil(w/2) .. t - ceil(w/2) + w - 1, wrapped mod T like the gloss
// init window. No offsets, no interpolation.
AttentionResult sliding_window_attention(const Tensor& x, const HeadParams& p,
                                         int window, KeyMask mask = {});

struct MultiHeadParams {
  std::vector<HeadParams> heads;
  Tensor w_out, b_out;  // output projection (d_model x d_model, d_model)
  int window = 0;       // sliding variant
};

struct MultiHeadResult {
  Tensor output;
  std::vector<AttentionMap> maps;
};

// Runs one attention variant per head on split projections, concatenates the
// head outputs and applies the output projection. kv_input allows decoder
// cross-attention (gloss requires q_input == kv_input).
MultiHeadResult multi_head(const Tensor& q_input, const Tensor& kv_input,
                           Variant variant, const MultiHeadParams& p,
                           KeyMask mask = {}, std::size_t true_len = 0);
MultiHeadResult multi_head(const Tensor& x, Variant variant,
                           const MultiHeadParams& p, KeyMask mask = {},
                           std::size_t true_len = 0);

}  // namespace gaslt::attention
