#include "gaslt/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gaslt/ops.hpp"

namespace gaslt::attention {

namespace {

using detail::Node;

thread_local std::uint64_t g_score_evals = 0;

bool wants_grad(Node& parent) {
  if (!parent.requires_grad) return false;
  parent.ensure_grad();
  return true;
}

double floored_mod(double x, double len) {
  double r = std::fmod(x, len);
  if (r < 0.0) r += len;
  if (r >= len) r = 0.0;  // guard against rounding at the boundary
  return r;
}

int ceil_half(int n) { return (n + 1) / 2; }

}  // namespace

Variant variant_from_string(const std::string& name) {
  if (name == "self") return Variant::kSelf;
  if (name == "gloss") return Variant::kGloss;
  if (name == "sliding") return Variant::kSliding;
  throw ConfigError("attention: unknown variant '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kSelf: return "self";
    case Variant::kGloss: return "gloss";
    case Variant::kSliding: return "sliding";
  }
  return "?";
}

std::uint64_t score_eval_count() { return g_score_evals; }
void reset_score_eval_count() { g_score_evals = 0; }

DenseMatrix AttentionMap::key_space() const {
  DenseMatrix out(query_len, source_len);
  if (!gloss()) {
    if (key_len != source_len) {
      throw ContractError("attention map: dense map key axis " +
                          std::to_string(key_len) + " != source length " +
                          std::to_string(source_len));
    }
    out.data = weights;
    return out;
  }
  for (std::size_t t = 0; t < query_len; ++t) {
    for (std::size_t i = 0; i < key_len; ++i) {
      const double p = positions[t * key_len + i];
      const double w = weights[t * key_len + i];
      const auto lo = static_cast<std::size_t>(std::floor(p));
      const std::size_t hi = (lo + 1) % source_len;
      const double frac = p - std::floor(p);
      out.at(t, lo) += w * (1.0 - frac);
      out.at(t, hi) += w * frac;
    }
  }
  return out;
}

std::vector<double> init_positions(std::size_t t, int n) {
  if (n < 1) throw ConfigError("init_positions: window must be >= 1");
  std::vector<double> p(static_cast<std::size_t>(n));
  const double start = static_cast<double>(t) - ceil_half(n);
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = start + i;
  return p;
}

Tensor adjust_positions(std::span<const double> raw, const Tensor& offsets,
                        std::size_t len) {
  if (len < 2) {
    throw ContractError("adjust_positions: sequence length must be >= 2");
  }
  if (offsets.size() != raw.size()) {
    throw ShapeError("adjust_positions: " + std::to_string(raw.size()) +
                     " positions vs " + std::to_string(offsets.size()) +
                     " offsets");
  }
  const auto dlen = static_cast<double>(len);
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = floored_mod(raw[i] + offsets.values()[i], dlen);
  return Tensor::from_op({raw.size()}, std::move(out), {offsets},
                         [](Node& self) {
                           Node& po = *self.parents[0];
                           if (!wants_grad(po)) return;
                           for (std::size_t i = 0; i < self.size(); ++i)
                             po.grad[i] += self.grad[i];
                         });
}

std::pair<Tensor, Tensor> interpolate_kv(const Tensor& positions,
                                         const Tensor& k, const Tensor& v) {
  if (k.rank() != 2 || v.rank() != 2 || k.shape() != v.shape()) {
    throw ShapeError("interpolate_kv: keys " + shape_string(k.shape()) +
                     " and values " + shape_string(v.shape()) +
                     " must be equal 2-d shapes");
  }
  const std::size_t frames = k.rows(), dim = k.cols(), n = positions.size();
  const auto dframes = static_cast<double>(frames);
  auto lo = std::make_shared<std::vector<std::size_t>>(n);
  auto hi = std::make_shared<std::vector<std::size_t>>(n);
  auto frac = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = positions.values()[i];
    if (!(p >= 0.0) || p >= dframes) {
      throw ContractError("interpolate_kv: position " + std::to_string(p) +
                          " outside [0, " + std::to_string(frames) + ")");
    }
    const double fl = std::floor(p);
    (*lo)[i] = static_cast<std::size_t>(fl);
    (*hi)[i] = ((*lo)[i] + 1) % frames;
    (*frac)[i] = p - fl;
  }
  auto gather = [&](const Tensor& src) {
    std::vector<double> out(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
      const double* a = src.values().data() + (*lo)[i] * dim;
      const double* b = src.values().data() + (*hi)[i] * dim;
      const double f = (*frac)[i];
      double* dst = out.data() + i * dim;
      for (std::size_t j = 0; j < dim; ++j)
        dst[j] = (1.0 - f) * a[j] + f * b[j];
    }
    // parents: {positions, source}
    return Tensor::from_op(
        {n, dim}, std::move(out), {positions, src},
        [n, dim, lo, hi, frac](Node& self) {
          Node& pp = *self.parents[0];
          Node& ps = *self.parents[1];
          const bool gp = wants_grad(pp);
          const bool gs = wants_grad(ps);
          for (std::size_t i = 0; i < n; ++i) {
            const double* g = self.grad.data() + i * dim;
            const double f = (*frac)[i];
            const double* a = ps.values.data() + (*lo)[i] * dim;
            const double* b = ps.values.data() + (*hi)[i] * dim;
            if (gs) {
              double* ga = ps.grad.data() + (*lo)[i] * dim;
              double* gb = ps.grad.data() + (*hi)[i] * dim;
              for (std::size_t j = 0; j < dim; ++j) {
                ga[j] += (1.0 - f) * g[j];
                gb[j] += f * g[j];
              }
            }
            if (gp) {
              double acc = 0.0;
              for (std::size_t j = 0; j < dim; ++j) acc += g[j] * (b[j] - a[j]);
              pp.grad[i] += acc;
            }
          }
        });
  };
  return {gather(k), gather(v)};
}

namespace {

// Shared full-attention core: scores over an allowed key set per query.
// band_width == 0 disables banding; otherwise query t may attend the window
// of band_width circular positions starting at t - ceil(band_width/2).
AttentionResult attention_core(const Tensor& q, const Tensor& k,
                               const Tensor& v, KeyMask mask, int band_width) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("attention: q/k/v must be 2-d");
  }
  const std::size_t tq = q.rows(), tk = k.rows(), dim = q.cols();
  if (k.cols() != dim || v.rows() != tk || v.cols() != dim) {
    throw ShapeError("attention: q " + shape_string(q.shape()) + ", k " +
                     shape_string(k.shape()) + ", v " +
                     shape_string(v.shape()) + " do not conform");
  }
  if (tq < 1 || tk < 1) throw ContractError("attention: empty sequence");
  if (!mask.valid.empty() && mask.valid.size() != tk) {
    throw ShapeError("attention: mask length " +
                     std::to_string(mask.valid.size()) + " vs " +
                     std::to_string(tk) + " keys");
  }
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dim));

  const bool grads = detail::grad_enabled() &&
                     (q.requires_grad() || k.requires_grad() ||
                      v.requires_grad());

  std::vector<double> out(tq * dim, 0.0);
  std::vector<double> weight_matrix(tq * tk, 0.0);
  // flattened allowed-key lists + weights for backward
  auto allowed = std::make_shared<std::vector<std::uint32_t>>();
  auto weights = std::make_shared<std::vector<double>>();
  auto offsets = std::make_shared<std::vector<std::size_t>>(tq + 1, 0);

  std::vector<std::uint32_t> row_keys;
  std::vector<double> scores;
  row_keys.reserve(tk);
  scores.reserve(tk);
  const double* qv = q.values().data();
  const double* kv = k.values().data();
  const double* vv = v.values().data();

  for (std::size_t t = 0; t < tq; ++t) {
    row_keys.clear();
    if (band_width > 0) {
      const long lo =
          static_cast<long>(t) - ceil_half(band_width);
      const long width = std::min<long>(band_width, static_cast<long>(tk));
      for (long i = 0; i < width; ++i) {
        const long j = ((lo + i) % static_cast<long>(tk) +
                        static_cast<long>(tk)) %
                       static_cast<long>(tk);
        const auto jj = static_cast<std::size_t>(j);
        if (!mask.valid.empty() && !mask.valid[jj]) continue;
        if (mask.causal && jj > t) continue;
        row_keys.push_back(static_cast<std::uint32_t>(jj));
      }
      std::sort(row_keys.begin(), row_keys.end());
      row_keys.erase(std::unique(row_keys.begin(), row_keys.end()),
                     row_keys.end());
    } else {
      const std::size_t limit = mask.causal ? std::min(t + 1, tk) : tk;
      for (std::size_t j = 0; j < limit; ++j) {
        if (!mask.valid.empty() && !mask.valid[j]) continue;
        row_keys.push_back(static_cast<std::uint32_t>(j));
      }
    }
    if (row_keys.empty()) {
      throw ContractError("attention: all keys masked for query " +
                          std::to_string(t));
    }
    g_score_evals += row_keys.size();

    scores.resize(row_keys.size());
    const double* qrow = qv + t * dim;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < row_keys.size(); ++i) {
      const double* krow = kv + row_keys[i] * dim;
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) acc += qrow[j] * krow[j];
      scores[i] = acc * inv_scale;
      mx = std::max(mx, scores[i]);
    }
    double sum = 0.0;
    for (double& s : scores) {
      s = std::exp(s - mx);
      sum += s;
    }
    double* orow = out.data() + t * dim;
    for (std::size_t i = 0; i < row_keys.size(); ++i) {
      const double a = scores[i] / sum;
      scores[i] = a;
      weight_matrix[t * tk + row_keys[i]] = a;
      const double* vrow = vv + row_keys[i] * dim;
      for (std::size_t j = 0; j < dim; ++j) orow[j] += a * vrow[j];
    }
    if (grads) {
      allowed->insert(allowed->end(), row_keys.begin(), row_keys.end());
      weights->insert(weights->end(), scores.begin(), scores.end());
    }
    (*offsets)[t + 1] = (*offsets)[t] + row_keys.size();
  }

  Tensor output = Tensor::from_op(
      {tq, dim}, std::move(out), {q, k, v},
      [tq, dim, inv_scale, allowed, weights, offsets](Node& self) {
        Node& pq = *self.parents[0];
        Node& pk = *self.parents[1];
        Node& pv = *self.parents[2];
        const bool gq = wants_grad(pq);
        const bool gk = wants_grad(pk);
        const bool gv = wants_grad(pv);
        std::vector<double> ga;
        for (std::size_t t = 0; t < tq; ++t) {
          const std::size_t begin = (*offsets)[t], end = (*offsets)[t + 1];
          const double* gz = self.grad.data() + t * dim;
          const double* qrow = pq.values.data() + t * dim;
          ga.assign(end - begin, 0.0);
          double dot = 0.0;
          for (std::size_t i = begin; i < end; ++i) {
            const double* vrow = pv.values.data() + (*allowed)[i] * dim;
            double acc = 0.0;
            for (std::size_t j = 0; j < dim; ++j) acc += gz[j] * vrow[j];
            ga[i - begin] = acc;
            dot += acc * (*weights)[i];
          }
          for (std::size_t i = begin; i < end; ++i) {
            const double a = (*weights)[i];
            const std::size_t key = (*allowed)[i];
            const double gs = a * (ga[i - begin] - dot);
            if (gv) {
              double* gvrow = pv.grad.data() + key * dim;
              for (std::size_t j = 0; j < dim; ++j) gvrow[j] += a * gz[j];
            }
            if (gq) {
              const double* krow = pk.values.data() + key * dim;
              double* gqrow = pq.grad.data() + t * dim;
              const double c = gs * inv_scale;
              for (std::size_t j = 0; j < dim; ++j) gqrow[j] += c * krow[j];
            }
            if (gk) {
              double* gkrow = pk.grad.data() + key * dim;
              const double c = gs * inv_scale;
              for (std::size_t j = 0; j < dim; ++j) gkrow[j] += c * qrow[j];
            }
          }
        }
      });

  AttentionMap map;
  map.query_len = tq;
  map.key_len = tk;
  map.source_len = tk;
  map.weights = std::move(weight_matrix);
  return {std::move(output), std::move(map)};
}

}  // namespace

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k,
                                     const Tensor& v, KeyMask mask) {
  return attention_core(q, k, v, mask, 0);
}

AttentionResult self_attention(const Tensor& x, const HeadParams& p,
                               KeyMask mask) {
  const Tensor q = ops::linear(x, p.w_q);
  const Tensor k = ops::linear(x, p.w_k);
  const Tensor v = ops::linear(x, p.w_v);
  return attention_core(q, k, v, mask, 0);
}

AttentionResult sliding_window_attention(const Tensor& x, const HeadParams& p,
                                         int window, KeyMask mask) {
  if (window < 1) {
    throw ConfigError("sliding_window_attention: window must be >= 1");
  }
  const Tensor q = ops::linear(x, p.w_q);
  const Tensor k = ops::linear(x, p.w_k);
  const Tensor v = ops::linear(x, p.w_v);
  if (static_cast<std::size_t>(window) >= x.rows()) {
    return attention_core(q, k, v, mask, 0);  // window covers everything
  }
  return attention_core(q, k, v, mask, window);
}

AttentionResult gloss_attention(const Tensor& x, const HeadParams& p,
                                std::size_t true_len) {
  if (x.rank() != 2) throw ShapeError("gloss_attention: input must be 2-d");
  std::size_t frames = true_len == 0 ? x.rows() : true_len;
  if (frames < 2) {
    throw ContractError(
        "gloss_attention: needs at least 2 frames for interpolation");
  }
  if (frames > x.rows()) {
    throw ContractError("gloss_attention: true length " +
                        std::to_string(frames) + " exceeds " +
                        std::to_string(x.rows()) + " rows");
  }
  const int n = p.positions;
  if (n < 1) throw ConfigError("gloss_attention: N must be >= 1");
  if (!p.w_offset.defined()) {
    throw ConfigError("gloss_attention: missing offset matrix");
  }
  const Tensor input =
      frames == x.rows() ? x : ops::slice_rows(x, 0, frames);
  const Tensor q = ops::linear(input, p.w_q);
  const Tensor k = ops::linear(input, p.w_k);
  const Tensor v = ops::linear(input, p.w_v);
  const std::size_t dim = q.cols();
  if (p.w_offset.rows() != static_cast<std::size_t>(n) ||
      p.w_offset.cols() != dim) {
    throw ShapeError("gloss_attention: offset matrix " +
                     shape_string(p.w_offset.shape()) + " wants (" +
                     std::to_string(n) + "x" + std::to_string(dim) + ")");
  }
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  const auto un = static_cast<std::size_t>(n);
  const double dframes = static_cast<double>(frames);

  const bool grads = detail::grad_enabled() &&
                     (q.requires_grad() || k.requires_grad() ||
                      v.requires_grad() || p.w_offset.requires_grad());

  std::vector<double> out(frames * dim, 0.0);
  std::vector<double> weight_matrix(frames * un);
  std::vector<double> position_matrix(frames * un);
  auto lo = std::make_shared<std::vector<std::uint32_t>>(frames * un);
  auto hi = std::make_shared<std::vector<std::uint32_t>>(frames * un);
  auto frac = std::make_shared<std::vector<double>>(frames * un);
  auto attn = std::make_shared<std::vector<double>>(frames * un);

  const double* qv = q.values().data();
  const double* kvals = k.values().data();
  const double* vvals = v.values().data();
  const double* wo = p.w_offset.values().data();

  std::vector<double> khat(un * dim), vhat(un * dim), scores(un);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* qrow = qv + t * dim;
    const double window_start =
        static_cast<double>(t) - ceil_half(n);
    for (std::size_t i = 0; i < un; ++i) {
      // offset O_i = <W_o row i, q_t>; position wrapped into [0, frames)
      const double* worow = wo + i * dim;
      double off = 0.0;
      for (std::size_t j = 0; j < dim; ++j) off += worow[j] * qrow[j];
      const double pos = floored_mod(window_start + static_cast<double>(i) + off,
                                     dframes);
      position_matrix[t * un + i] = pos;
      const double fl = std::floor(pos);
      const auto b = static_cast<std::size_t>(fl);
      const std::size_t u = (b + 1) % frames;
      const double f = pos - fl;
      (*lo)[t * un + i] = static_cast<std::uint32_t>(b);
      (*hi)[t * un + i] = static_cast<std::uint32_t>(u);
      (*frac)[t * un + i] = f;
      const double* ka = kvals + b * dim;
      const double* kb = kvals + u * dim;
      const double* va = vvals + b * dim;
      const double* vb = vvals + u * dim;
      double* kh = khat.data() + i * dim;
      double* vh = vhat.data() + i * dim;
      double score = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        kh[j] = (1.0 - f) * ka[j] + f * kb[j];
        vh[j] = (1.0 - f) * va[j] + f * vb[j];
        score += qrow[j] * kh[j];
      }
      scores[i] = score * inv_scale;
    }
    g_score_evals += un;

    double mx = scores[0];
    for (std::size_t i = 1; i < un; ++i) mx = std::max(mx, scores[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < un; ++i) {
      scores[i] = std::exp(scores[i] - mx);
      sum += scores[i];
    }
    double* orow = out.data() + t * dim;
    for (std::size_t i = 0; i < un; ++i) {
      const double a = scores[i] / sum;
      weight_matrix[t * un + i] = a;
      (*attn)[t * un + i] = a;
      const double* vh = vhat.data() + i * dim;
      for (std::size_t j = 0; j < dim; ++j) orow[j] += a * vh[j];
    }
  }

  auto wo_tensor = p.w_offset;
  Tensor output = Tensor::from_op(
      {frames, dim}, std::move(out), {q, k, v, wo_tensor},
      [frames, dim, un, inv_scale, lo, hi, frac, attn](Node& self) {
        Node& pq = *self.parents[0];
        Node& pk = *self.parents[1];
        Node& pv = *self.parents[2];
        Node& po = *self.parents[3];
        const bool gq = wants_grad(pq);
        const bool gk = wants_grad(pk);
        const bool gv = wants_grad(pv);
        const bool go = wants_grad(po);
        std::vector<double> ga(un), gs(un), khat_row(dim), vhat_row(dim);
        for (std::size_t t = 0; t < frames; ++t) {
          const double* gz = self.grad.data() + t * dim;
          const double* qrow = pq.values.data() + t * dim;
          // softmax backward over the N sampled keys
          double dot = 0.0;
          for (std::size_t i = 0; i < un; ++i) {
            const std::size_t b = (*lo)[t * un + i];
            const std::size_t u = (*hi)[t * un + i];
            const double f = (*frac)[t * un + i];
            const double* va = pv.values.data() + b * dim;
            const double* vb = pv.values.data() + u * dim;
            double acc = 0.0;
            for (std::size_t j = 0; j < dim; ++j)
              acc += gz[j] * ((1.0 - f) * va[j] + f * vb[j]);
            ga[i] = acc;
            dot += acc * (*attn)[t * un + i];
          }
          for (std::size_t i = 0; i < un; ++i) {
            const double a = (*attn)[t * un + i];
            gs[i] = a * (ga[i] - dot);
          }
          for (std::size_t i = 0; i < un; ++i) {
            const std::size_t b = (*lo)[t * un + i];
            const std::size_t u = (*hi)[t * un + i];
            const double f = (*frac)[t * un + i];
            const double a = (*attn)[t * un + i];
            const double* ka = pk.values.data() + b * dim;
            const double* kb = pk.values.data() + u * dim;
            const double* va = pv.values.data() + b * dim;
            const double* vb = pv.values.data() + u * dim;

            // d/dv-hat = a * gz, scattered through the interpolation
            if (gv) {
              double* gva = pv.grad.data() + b * dim;
              double* gvb = pv.grad.data() + u * dim;
              for (std::size_t j = 0; j < dim; ++j) {
                const double g = a * gz[j];
                gva[j] += (1.0 - f) * g;
                gvb[j] += f * g;
              }
            }
            // d/dk-hat = gs * q / sqrt(d)
            const double ck = gs[i] * inv_scale;
            if (gk) {
              double* gka = pk.grad.data() + b * dim;
              double* gkb = pk.grad.data() + u * dim;
              for (std::size_t j = 0; j < dim; ++j) {
                const double g = ck * qrow[j];
                gka[j] += (1.0 - f) * g;
                gkb[j] += f * g;
              }
            }
            // d/dq via the scores: gs * k-hat / sqrt(d)
            if (gq) {
              double* gqrow = pq.grad.data() + t * dim;
              for (std::size_t j = 0; j < dim; ++j)
                gqrow[j] += ck * ((1.0 - f) * ka[j] + f * kb[j]);
            }
            // position gradient: through k-hat and v-hat interpolation
            if (go || gq) {
              double gpos = 0.0;
              for (std::size_t j = 0; j < dim; ++j) {
                gpos += ck * qrow[j] * (kb[j] - ka[j]);
                gpos += a * gz[j] * (vb[j] - va[j]);
              }
              // position = window + <W_o row i, q_t> (mod frames)
              if (go) {
                double* gorow = po.grad.data() + i * dim;
                for (std::size_t j = 0; j < dim; ++j)
                  gorow[j] += gpos * qrow[j];
              }
              if (gq) {
                const double* worow = po.values.data() + i * dim;
                double* gqrow = pq.grad.data() + t * dim;
                for (std::size_t j = 0; j < dim; ++j)
                  gqrow[j] += gpos * worow[j];
              }
            }
          }
        }
      });
  (void)grads;

  AttentionMap map;
  map.query_len = frames;
  map.key_len = un;
  map.source_len = frames;
  map.weights = std::move(weight_matrix);
  map.positions = std::move(position_matrix);
  return {std::move(output), std::move(map)};
}

MultiHeadResult multi_head(const Tensor& q_input, const Tensor& kv_input,
                           Variant variant, const MultiHeadParams& p,
                           KeyMask mask, std::size_t true_len) {
  if (p.heads.empty()) throw ConfigError("multi_head: no heads");
  const bool cross = q_input.node() != kv_input.node();
  if (cross && variant != Variant::kSelf) {
    throw ContractError("multi_head: cross-attention supports only the full "
                        "attention variant");
  }
  std::vector<Tensor> outputs;
  outputs.reserve(p.heads.size());
  MultiHeadResult result;
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const HeadParams& head = p.heads[h];
    AttentionResult r = [&] {
      switch (variant) {
        case Variant::kSelf: {
          const Tensor q = ops::linear(q_input, head.w_q);
          const Tensor k = ops::linear(kv_input, head.w_k);
          const Tensor v = ops::linear(kv_input, head.w_v);
          return attention_core(q, k, v, mask, 0);
        }
        case Variant::kGloss:
          return gloss_attention(q_input, head, true_len);
        case Variant::kSliding:
          return sliding_window_attention(q_input, head, p.window, mask);
      }
      throw ConfigError("multi_head: bad variant");
    }();
    r.map.head = static_cast<int>(h);
    outputs.push_back(std::move(r.output));
    result.maps.push_back(std::move(r.map));
  }
  const Tensor merged =
      outputs.size() == 1 ? outputs[0] : ops::concat_cols(outputs);
  result.output = ops::linear(merged, p.w_out, p.b_out);
  return result;
}

MultiHeadResult multi_head(const Tensor& x, Variant variant,
                           const MultiHeadParams& p, KeyMask mask,
                           std::size_t true_len) {
  return multi_head(x, x, variant, p, mask, true_len);
}

}  // namespace gaslt::attention
