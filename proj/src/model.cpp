#include "gaslt/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace gaslt::model {

namespace fs = std::filesystem;
using attention::Variant;

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "mean") return Aggregation::kMean;
  if (name == "max") return Aggregation::kMax;
  if (name == "cls") return Aggregation::kCls;
  throw ConfigError("unknown aggregation '" + name + "'");
}

std::string aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::kMean: return "mean";
    case Aggregation::kMax: return "max";
    case Aggregation::kCls: return "cls";
  }
  throw ConfigError("unknown aggregation value");
}

void ModelConfig::validate() const {
  if (d_model < 2 || d_model % 2 != 0) {
    throw ConfigError("model: d_model must be even and >= 2, got " +
                      std::to_string(d_model));
  }
  if (heads < 1 || d_model % heads != 0) {
    throw ConfigError("model: d_model " + std::to_string(d_model) +
                      " is not divisible into " + std::to_string(heads) +
                      " heads");
  }
  if (window < 1) throw ConfigError("model: attention window must be >= 1");
  if (ff_dim < 1) throw ConfigError("model: ff_dim must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("model: dropout must be in [0, 1), got " +
                      std::to_string(dropout));
  }
  if (vocab_size < 4) {
    throw ConfigError("model: vocab must cover the reserved ids, got size " +
                      std::to_string(vocab_size));
  }
  if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
}

namespace {

std::size_t read_size(const KeyValues& kv, const std::string& key,
                      std::size_t fallback) {
  const long long v = kv.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw ConfigError("key '" + key + "': negative value");
  return static_cast<std::size_t>(v);
}

std::string fmt_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

ModelConfig config_from_kv(const KeyValues& kv) {
  ModelConfig c;
  c.d_model = read_size(kv, "d_model", c.d_model);
  c.heads = read_size(kv, "heads", c.heads);
  c.encoder_layers = read_size(kv, "encoder_layers", c.encoder_layers);
  c.decoder_layers = read_size(kv, "decoder_layers", c.decoder_layers);
  c.window = static_cast<int>(kv.get_int("window", c.window));
  c.ff_dim = read_size(kv, "ff_dim", 4 * c.d_model);
  c.dropout = kv.get_double("dropout", c.dropout);
  c.variant = attention::variant_from_string(kv.get("variant", "gloss"));
  c.aggregation = aggregation_from_string(kv.get("aggregation", "mean"));
  c.vocab_size = read_size(kv, "vocab_size", c.vocab_size);
  c.input_dim = read_size(kv, "input_dim", c.input_dim);
  c.validate();
  return c;
}

void config_to_kv(const ModelConfig& c, KeyValues& kv) {
  kv.set("d_model", std::to_string(c.d_model));
  kv.set("heads", std::to_string(c.heads));
  kv.set("encoder_layers", std::to_string(c.encoder_layers));
  kv.set("decoder_layers", std::to_string(c.decoder_layers));
  kv.set("window", std::to_string(c.window));
  kv.set("ff_dim", std::to_string(c.ff_dim));
  kv.set("dropout", fmt_double(c.dropout));
  kv.set("variant", attention::variant_name(c.variant));
  kv.set("aggregation", aggregation_name(c.aggregation));
  kv.set("vocab_size", std::to_string(c.vocab_size));
  kv.set("input_dim", std::to_string(c.input_dim));
}

std::vector<double> positional_encoding(std::size_t pos,
                                        std::size_t d_model) {
  if (d_model < 2 || d_model % 2 != 0) {
    throw ConfigError("positional encoding needs an even width, got " +
                      std::to_string(d_model));
  }
  std::vector<double> pe(d_model);
  for (std::size_t i = 0; i < d_model / 2; ++i) {
    const double angle =
        static_cast<double>(pos) /
        std::pow(10000.0, 2.0 * static_cast<double>(i) /
                              static_cast<double>(d_model));
    pe[2 * i] = std::sin(angle);
    pe[2 * i + 1] = std::cos(angle);
  }
  return pe;
}

Tensor positional_table(std::size_t len, std::size_t d_model) {
  std::vector<double> values;
  values.reserve(len * d_model);
  for (std::size_t pos = 0; pos < len; ++pos) {
    const std::vector<double> pe = positional_encoding(pos, d_model);
    values.insert(values.end(), pe.begin(), pe.end());
  }
  return Tensor({len, d_model}, std::move(values));
}

Tensor sentence_embedding(const Tensor& hidden, Aggregation mode) {
  if (!hidden.defined() || hidden.rank() != 2 || hidden.rows() == 0) {
    throw ContractError("sentence embedding needs a nonempty T x d matrix");
  }
  switch (mode) {
    case Aggregation::kMean: return ops::mean_rows(hidden);
    case Aggregation::kMax: return ops::max_rows(hidden);
    case Aggregation::kCls:
      return ops::mean_rows(ops::slice_rows(hidden, 0, 1));
  }
  throw ConfigError("unknown aggregation value");
}

Tensor frames_to_tensor(const data::FeatureSequence& seq,
                        std::size_t true_len) {
  const std::size_t rows = true_len > 0 ? true_len : seq.frames;
  if (rows > seq.frames) {
    throw ContractError("frames_to_tensor: true length " +
                        std::to_string(rows) + " exceeds " +
                        std::to_string(seq.frames) + " frames");
  }
  std::vector<double> values(rows * seq.dim);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<double>(seq.values[i]);
  return Tensor({rows, seq.dim}, std::move(values));
}

// --- construction ------------------------------------------------------------

namespace {

Tensor xavier(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> uni(-bound, bound);
  std::vector<double> values(out * in);
  for (double& v : values) v = uni(rng);
  return Tensor({out, in}, std::move(values), true);
}

Tensor zero_vec(std::size_t n) { return Tensor::zeros({n}, true); }
Tensor one_vec(std::size_t n) { return Tensor::ones({n}, true); }

}  // namespace

attention::MultiHeadParams Translator::make_attention(bool gloss,
                                                      std::mt19937_64& rng) {
  const std::size_t d = config_.d_model;
  const std::size_t dh = d / config_.heads;
  attention::MultiHeadParams p;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    attention::HeadParams head;
    head.w_q = xavier(dh, d, rng);
    head.w_k = xavier(dh, d, rng);
    head.w_v = xavier(dh, d, rng);
    if (gloss) {
      // offsets start at zero so training begins from the plain local window
      head.w_offset =
          Tensor::zeros({static_cast<std::size_t>(config_.window), dh}, true);
      head.positions = config_.window;
    }
    p.heads.push_back(std::move(head));
  }
  p.w_out = xavier(d, d, rng);
  p.b_out = zero_vec(d);
  p.window = config_.window;
  return p;
}

Translator::Translator(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), dropout_rng_(seed ^ 0x9e3779b97f4a7c15ull) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.d_model;

  video_.w = xavier(d, config_.input_dim, rng);
  video_.b = zero_vec(d);
  video_.gamma = one_vec(d);
  video_.beta = zero_vec(d);
  video_.state = ops::BatchNormState(d);

  {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(d)));
    std::vector<double> table(config_.vocab_size * d);
    for (double& v : table) v = normal(rng);
    text_table_ = Tensor({config_.vocab_size, d}, std::move(table), true);
  }
  text_.w = xavier(d, d, rng);
  text_.b = zero_vec(d);
  text_.gamma = one_vec(d);
  text_.beta = zero_vec(d);
  text_.state = ops::BatchNormState(d);

  cls_frame_ = Tensor::zeros({1, d}, true);

  const bool gloss = config_.variant == Variant::kGloss;
  for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
    EncoderLayer layer;
    layer.attn = make_attention(gloss, rng);
    layer.attn_norm = {one_vec(d), zero_vec(d)};
    layer.mlp = {xavier(config_.ff_dim, d, rng), zero_vec(config_.ff_dim),
                 xavier(d, config_.ff_dim, rng), zero_vec(d)};
    layer.mlp_norm = {one_vec(d), zero_vec(d)};
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
    DecoderLayer layer;
    layer.self = make_attention(false, rng);
    layer.self_norm = {one_vec(d), zero_vec(d)};
    layer.cross = make_attention(false, rng);
    layer.cross_norm = {one_vec(d), zero_vec(d)};
    layer.mlp = {xavier(config_.ff_dim, d, rng), zero_vec(config_.ff_dim),
                 xavier(d, config_.ff_dim, rng), zero_vec(d)};
    layer.mlp_norm = {one_vec(d), zero_vec(d)};
    decoder_.push_back(std::move(layer));
  }

  memory_norm_ = {one_vec(d), zero_vec(d)};
  dec_norm_ = {one_vec(d), zero_vec(d)};
  out_w_ = xavier(config_.vocab_size, d, rng);
  out_b_ = zero_vec(config_.vocab_size);
}

// --- forward -----------------------------------------------------------------

Tensor Translator::drop(const Tensor& x, bool training) {
  return ops::dropout(x, config_.dropout, training, &dropout_rng_);
}

// Normalization always uses the running statistics gathered so far; training
// forwards then fold the current rows into those statistics. Normalizing
// with batch statistics here would let every row see the whole sequence
// (sequences are whole samples in this codebase), which on the text side
// leaks the tokens being predicted into their own inputs.
Tensor Translator::embed_front(const Tensor& rows, Embed& e, bool training) {
  Tensor h = ops::linear(rows, e.w, e.b);
  Tensor n = ops::batch_norm(h, e.gamma, e.beta, e.state, false);
  if (training) {
    NoGradGuard stats_only;
    ops::batch_norm(h, e.gamma, e.beta, e.state, true);
  }
  h = ops::relu(n);
  return ops::add(h, positional_table(h.rows(), config_.d_model));
}

Tensor Translator::embed_video(const Tensor& frames, bool training) {
  if (!frames.defined() || frames.rank() != 2 ||
      frames.cols() != config_.input_dim) {
    throw ShapeError("embed_video: expected (T x " +
                     std::to_string(config_.input_dim) + ") frames");
  }
  if (frames.rows() == 0) return Tensor({0, config_.d_model}, {});
  return embed_front(frames, video_, training);
}

Tensor Translator::embed_text(std::span<const int> ids, bool training) {
  if (ids.empty()) return Tensor({0, config_.d_model}, {});
  const Tensor rows = ops::embedding_lookup(text_table_, ids);
  return embed_front(rows, text_, training);
}

EncoderOutput Translator::encode(const Tensor& frames, bool training,
                                 std::size_t true_len) {
  Tensor input = frames;
  if (true_len > 0) {
    if (!frames.defined() || frames.rank() != 2 || true_len > frames.rows()) {
      throw ContractError("encode: true length exceeds the given frames");
    }
    input = ops::slice_rows(frames, 0, true_len);
  }
  if (!input.defined() || input.rank() != 2 || input.rows() == 0) {
    throw ContractError("encode: need at least one frame");
  }

  Tensor x = embed_video(input, training);
  if (config_.aggregation == Aggregation::kCls) {
    x = ops::concat_rows(cls_frame_, x);
  }
  x = drop(x, training);

  EncoderOutput out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    EncoderLayer& layer = encoder_[i];
    const Tensor normed =
        ops::layer_norm(x, layer.attn_norm.gain, layer.attn_norm.bias);
    attention::MultiHeadResult res =
        attention::multi_head(normed, config_.variant, layer.attn);
    for (attention::AttentionMap& m : res.maps) {
      m.layer = static_cast<int>(i);
      out.maps.push_back(std::move(m));
    }
    const Tensor z = ops::add(x, drop(res.output, training));
    const Tensor normed2 =
        ops::layer_norm(z, layer.mlp_norm.gain, layer.mlp_norm.bias);
    x = ops::add(z, drop(mlp_forward(normed2, layer.mlp, training), training));
  }
  out.hidden = x;
  out.sentence = sentence_embedding(x, config_.aggregation);
  return out;
}

Tensor Translator::mlp_forward(const Tensor& x, const Mlp& m, bool training) {
  (void)training;
  return ops::linear(ops::relu(ops::linear(x, m.w1, m.b1)), m.w2, m.b2);
}

Tensor Translator::decode_logits(const EncoderOutput& enc,
                                 std::span<const int> inputs, bool training,
                                 std::vector<attention::AttentionMap>* maps) {
  if (inputs.empty()) {
    throw ContractError("decode: need at least one input token");
  }
  if (!enc.hidden.defined()) {
    throw ContractError("decode: encoder output is undefined");
  }
  const attention::KeyMask causal{{}, true};

  // The pre-norm stack leaves residual streams unnormalized, so the decoder
  // reads the encoder through its own norm and closes with one before the
  // output projection.
  const Tensor memory =
      ops::layer_norm(enc.hidden, memory_norm_.gain, memory_norm_.bias);

  Tensor y = drop(embed_text(inputs, training), training);
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    DecoderLayer& layer = decoder_[i];
    Tensor normed =
        ops::layer_norm(y, layer.self_norm.gain, layer.self_norm.bias);
    attention::MultiHeadResult self =
        attention::multi_head(normed, Variant::kSelf, layer.self, causal);
    y = ops::add(y, drop(self.output, training));

    normed = ops::layer_norm(y, layer.cross_norm.gain, layer.cross_norm.bias);
    attention::MultiHeadResult cross =
        attention::multi_head(normed, memory, Variant::kSelf, layer.cross);
    y = ops::add(y, drop(cross.output, training));

    normed = ops::layer_norm(y, layer.mlp_norm.gain, layer.mlp_norm.bias);
    y = ops::add(y, drop(mlp_forward(normed, layer.mlp, training), training));

    if (maps) {
      for (attention::AttentionMap& m : self.maps) {
        m.layer = static_cast<int>(i);
        maps->push_back(std::move(m));
      }
      for (attention::AttentionMap& m : cross.maps) {
        m.layer = static_cast<int>(i);
        maps->push_back(std::move(m));
      }
    }
  }
  y = ops::layer_norm(y, dec_norm_.gain, dec_norm_.bias);
  return ops::linear(y, out_w_, out_b_);
}

// --- decoding ----------------------------------------------------------------

namespace {

std::size_t argmax_row(const std::vector<double>& flat, std::size_t row,
                       std::size_t width) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < width; ++i) {
    if (flat[row * width + i] > flat[row * width + best]) best = i;
  }
  return best;
}

std::vector<double> log_softmax_row(const std::vector<double>& flat,
                                    std::size_t row, std::size_t width) {
  double mx = flat[row * width];
  for (std::size_t i = 1; i < width; ++i)
    mx = std::max(mx, flat[row * width + i]);
  double z = 0.0;
  for (std::size_t i = 0; i < width; ++i)
    z += std::exp(flat[row * width + i] - mx);
  const double log_z = mx + std::log(z);
  std::vector<double> lp(width);
  for (std::size_t i = 0; i < width; ++i) lp[i] = flat[row * width + i] - log_z;
  return lp;
}

}  // namespace

std::vector<int> Translator::greedy_decode(const EncoderOutput& enc,
                                           std::size_t max_len) {
  if (max_len < 1) throw ConfigError("decode: max length must be >= 1");
  NoGradGuard no_grad;
  std::vector<int> ids = {data::Vocabulary::kBos};
  for (std::size_t step = 0; step < max_len; ++step) {
    const Tensor logits = decode_logits(enc, ids, false);
    const std::size_t next =
        argmax_row(logits.values(), logits.rows() - 1, config_.vocab_size);
    ids.push_back(static_cast<int>(next));
    if (static_cast<int>(next) == data::Vocabulary::kEos) break;
  }
  return ids;
}

std::vector<int> Translator::beam_decode(const EncoderOutput& enc,
                                         std::size_t max_len,
                                         std::size_t width) {
  if (max_len < 1) throw ConfigError("decode: max length must be >= 1");
  if (width < 1) throw ConfigError("decode: beam width must be >= 1");
  NoGradGuard no_grad;

  struct Hyp {
    std::vector<int> ids;
    double score = 0.0;  // sum of token log-probabilities
  };
  auto per_token = [](const Hyp& h) {
    return h.score / static_cast<double>(std::max<std::size_t>(
                         1, h.ids.size() - 1));
  };

  std::vector<Hyp> live = {{{data::Vocabulary::kBos}, 0.0}};
  std::vector<Hyp> done;
  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Hyp> candidates;
    for (const Hyp& h : live) {
      const Tensor logits = decode_logits(enc, h.ids, false);
      const std::vector<double> lp = log_softmax_row(
          logits.values(), logits.rows() - 1, config_.vocab_size);
      // expanding by the `width` best tokens per hypothesis is sufficient:
      // at most `width` survivors are kept overall
      std::vector<std::size_t> order(lp.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return lp[a] != lp[b] ? lp[a] > lp[b] : a < b;
      });
      for (std::size_t i = 0; i < std::min(width, order.size()); ++i) {
        Hyp next = h;
        next.ids.push_back(static_cast<int>(order[i]));
        next.score += lp[order[i]];
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Hyp& a, const Hyp& b) {
                return a.score != b.score ? a.score > b.score
                                          : a.ids.back() < b.ids.back();
              });
    live.clear();
    for (Hyp& h : candidates) {
      if (live.size() >= width && done.size() >= width) break;
      if (h.ids.back() == data::Vocabulary::kEos) {
        if (done.size() < width) done.push_back(std::move(h));
      } else if (live.size() < width) {
        live.push_back(std::move(h));
      }
    }
  }

  // unfinished hypotheses compete too (EOS may never have been emitted)
  for (Hyp& h : live) done.push_back(std::move(h));
  const Hyp* best = nullptr;
  for (const Hyp& h : done) {
    if (!best || per_token(h) > per_token(*best)) best = &h;
  }
  return best ? best->ids : std::vector<int>{data::Vocabulary::kBos};
}

// --- parameter registry --------------------------------------------------

namespace {

void list_attention(const std::string& prefix,
                    const attention::MultiHeadParams& p,
                    std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h) + ".";
    out.emplace_back(hp + "w_q", p.heads[h].w_q);
    out.emplace_back(hp + "w_k", p.heads[h].w_k);
    out.emplace_back(hp + "w_v", p.heads[h].w_v);
    if (p.heads[h].w_offset.defined())
      out.emplace_back(hp + "w_offset", p.heads[h].w_offset);
  }
  out.emplace_back(prefix + ".w_out", p.w_out);
  out.emplace_back(prefix + ".b_out", p.b_out);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> Translator::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed_video.w", video_.w);
  out.emplace_back("embed_video.b", video_.b);
  out.emplace_back("embed_video.gamma", video_.gamma);
  out.emplace_back("embed_video.beta", video_.beta);
  out.emplace_back("embed_text.table", text_table_);
  out.emplace_back("embed_text.w", text_.w);
  out.emplace_back("embed_text.b", text_.b);
  out.emplace_back("embed_text.gamma", text_.gamma);
  out.emplace_back("embed_text.beta", text_.beta);
  out.emplace_back("cls_frame", cls_frame_);
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    list_attention(p + ".attn", encoder_[i].attn, out);
    out.emplace_back(p + ".attn_norm.gain", encoder_[i].attn_norm.gain);
    out.emplace_back(p + ".attn_norm.bias", encoder_[i].attn_norm.bias);
    out.emplace_back(p + ".mlp.w1", encoder_[i].mlp.w1);
    out.emplace_back(p + ".mlp.b1", encoder_[i].mlp.b1);
    out.emplace_back(p + ".mlp.w2", encoder_[i].mlp.w2);
    out.emplace_back(p + ".mlp.b2", encoder_[i].mlp.b2);
    out.emplace_back(p + ".mlp_norm.gain", encoder_[i].mlp_norm.gain);
    out.emplace_back(p + ".mlp_norm.bias", encoder_[i].mlp_norm.bias);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const std::string p = "dec" + std::to_string(i);
    list_attention(p + ".self", decoder_[i].self, out);
    out.emplace_back(p + ".self_norm.gain", decoder_[i].self_norm.gain);
    out.emplace_back(p + ".self_norm.bias", decoder_[i].self_norm.bias);
    list_attention(p + ".cross", decoder_[i].cross, out);
    out.emplace_back(p + ".cross_norm.gain", decoder_[i].cross_norm.gain);
    out.emplace_back(p + ".cross_norm.bias", decoder_[i].cross_norm.bias);
    out.emplace_back(p + ".mlp.w1", decoder_[i].mlp.w1);
    out.emplace_back(p + ".mlp.b1", decoder_[i].mlp.b1);
    out.emplace_back(p + ".mlp.w2", decoder_[i].mlp.w2);
    out.emplace_back(p + ".mlp.b2", decoder_[i].mlp.b2);
    out.emplace_back(p + ".mlp_norm.gain", decoder_[i].mlp_norm.gain);
    out.emplace_back(p + ".mlp_norm.bias", decoder_[i].mlp_norm.bias);
  }
  out.emplace_back("memory_norm.gain", memory_norm_.gain);
  out.emplace_back("memory_norm.bias", memory_norm_.bias);
  out.emplace_back("dec_norm.gain", dec_norm_.gain);
  out.emplace_back("dec_norm.bias", dec_norm_.bias);
  out.emplace_back("output.w", out_w_);
  out.emplace_back("output.b", out_b_);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>>
Translator::named_buffers() {
  return {
      {"embed_video.running_mean", &video_.state.running_mean},
      {"embed_video.running_var", &video_.state.running_var},
      {"embed_text.running_mean", &text_.state.running_mean},
      {"embed_text.running_var", &text_.state.running_var},
  };
}

// --- checkpoints -----------------------------------------------------------

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(bits >> (8 * i)));
}

// bounds-checked little-endian cursor over a checkpoint blob
struct Reader {
  const unsigned char* p;
  std::size_t size, pos = 0;
  std::string name;

  void need(std::size_t n) const {
    if (pos + n > size) {
      throw IoError(name + ": truncated checkpoint at byte " +
                    std::to_string(pos));
    }
  }
  std::uint16_t u16() {
    need(2);
    const std::uint16_t v =
        static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(p[pos + static_cast<std::size_t>(i)])
           << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(p[pos + static_cast<std::size_t>(i)])
           << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

void put_entry(std::string& out, const std::string& name, const Shape& shape,
               const std::vector<double>& values) {
  put_u16(out, static_cast<std::uint16_t>(name.size()));
  out += name;
  out.push_back(static_cast<char>(shape.size()));
  for (std::size_t dim : shape) put_u32(out, static_cast<std::uint32_t>(dim));
  for (double v : values) put_f64(out, v);
}

}  // namespace

void Translator::save_checkpoint(const fs::path& path) {
  std::string out;
  out += "GSLT";
  put_u16(out, 1);

  KeyValues kv;
  config_to_kv(config_, kv);
  const std::string cfg = kv.serialize();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;

  const auto params = named_parameters();
  const auto buffers = named_buffers();
  put_u32(out, static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (const auto& [name, t] : params)
    put_entry(out, name, t.shape(), t.values());
  for (const auto& [name, vec] : buffers)
    put_entry(out, name, {vec->size()}, *vec);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Translator Translator::load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  const std::string raw((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const unsigned char*>(raw.data()), raw.size(), 0,
           path.string()};

  if (raw.size() < 4 || raw.compare(0, 4, "GSLT") != 0) {
    throw IoError(path.string() + ": bad magic, not a checkpoint");
  }
  r.pos = 4;
  const std::uint16_t version = r.u16();
  if (version != 1) {
    throw IoError(path.string() + ": unsupported checkpoint version " +
                  std::to_string(version));
  }
  const ModelConfig config =
      config_from_kv(KeyValues::parse(r.bytes(r.u32())));
  Translator model(config, 0);

  std::map<std::string, std::pair<Shape, std::vector<double>>> entries;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u16());
    const std::size_t rank = static_cast<unsigned char>(r.bytes(1)[0]);
    Shape shape(rank);
    std::size_t total = 1;
    for (std::size_t d = 0; d < rank; ++d) {
      shape[d] = r.u32();
      total *= shape[d];
    }
    std::vector<double> values(total);
    for (double& v : values) v = r.f64();
    if (!entries.emplace(name, std::pair{std::move(shape),
                                         std::move(values)}).second) {
      throw IoError(path.string() + ": duplicate entry '" + name + "'");
    }
  }
  if (r.pos != r.size) {
    throw IoError(path.string() + ": trailing data after " +
                  std::to_string(r.pos) + " bytes");
  }

  std::size_t used = 0;
  for (auto& [name, t] : model.named_parameters()) {
    const auto it = entries.find(name);
    if (it == entries.end()) {
      throw IoError(path.string() + ": missing parameter '" + name + "'");
    }
    if (it->second.first != t.shape()) {
      throw IoError(path.string() + ": parameter '" + name + "' has shape " +
                    shape_string(it->second.first) + ", model expects " +
                    shape_string(t.shape()));
    }
    t.mutable_values() = it->second.second;
    ++used;
  }
  for (auto& [name, vec] : model.named_buffers()) {
    const auto it = entries.find(name);
    if (it == entries.end()) {
      throw IoError(path.string() + ": missing buffer '" + name + "'");
    }
    if (it->second.second.size() != vec->size()) {
      throw IoError(path.string() + ": buffer '" + name + "' has wrong size");
    }
    *vec = it->second.second;
    ++used;
  }
  if (used != entries.size()) {
    throw IoError(path.string() + ": checkpoint carries entries the model "
                  "does not expect");
  }
  return model;
}

}  // namespace gaslt::model
