#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gaslt/attention.hpp"
#include "gaslt/data.hpp"
#include "gaslt/kv.hpp"
#include "gaslt/ops.hpp"
#include "gaslt/tensor.hpp"

namespace gaslt::model {

// How the encoder states are pooled into one sentence embedding.
enum class Aggregation { kMean, kMax, kCls };

Aggregation aggregation_from_string(const std::string& name);
std::string aggregation_name(Aggregation a);

struct ModelConfig {
  std::size_t d_model = 512;
  std::size_t heads = 8;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  // attention positions per query (gloss) / band width (sliding)
  int window = 7;
  std::size_t ff_dim = 2048;  // MLP hidden width
  double dropout = 0.5;
  attention::Variant variant = attention::Variant::kGloss;
  Aggregation aggregation = Aggregation::kMean;
  std::size_t vocab_size = 0;
  std::size_t input_dim = 0;  // D_in of the video features

  void validate() const;  // throws ConfigError
};

// Round trip through flat key=value form (configs and checkpoints).
ModelConfig config_from_kv(const KeyValues& kv);
void config_to_kv(const ModelConfig& c, KeyValues& kv);

// Sinusoidal code for one position: even dims sin(pos/10000^(2i/d)), odd
// dims cos of the same angle.
std::vector<double> positional_encoding(std::size_t pos, std::size_t d_model);
// All codes up to len as a constant (len x d_model) tensor.
Tensor positional_table(std::size_t len, std::size_t d_model);

// Masked-free pooling over the (T x d) encoder states; T >= 1. kCls reads
// row 0, which encode() reserves for the learned CLS frame in that mode.
Tensor sentence_embedding(const Tensor& hidden, Aggregation mode);

// (T x D_in) float frames as a tensor; true_len > 0 keeps only that prefix.
Tensor frames_to_tensor(const data::FeatureSequence& seq,
                        std::size_t true_len = 0);

struct EncoderOutput {
  Tensor hidden;    // T x d_model (T+1 with a CLS frame)
  Tensor sentence;  // d_model
  std::vector<attention::AttentionMap> maps;  // layer-major, head-minor
};

// The full translator. One instance owns all parameters; forward passes are
// per sample at true length, which makes padding invariance exact.
class Translator {
 public:
  Translator(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // x'_t -> relu(BN(W x'_t + b)) + f_pos(t); frames is (T x D_in)
  Tensor embed_video(const Tensor& frames, bool training);
  // token ids -> relu(BN(W Emb(id) + b)) + f_pos(m); empty input allowed
  Tensor embed_text(std::span<const int> ids, bool training);

  // Embeds, optionally slices to true_len, runs the pre-norm encoder stack
  // and pools the sentence embedding.
  EncoderOutput encode(const Tensor& frames, bool training,
                       std::size_t true_len = 0);

  // Teacher-forced logits (inputs.size() x vocab) with causal self-attention
  // and full cross-attention. Row m only sees inputs 0..m.
  Tensor decode_logits(const EncoderOutput& enc, std::span<const int> inputs,
                       bool training,
                       std::vector<attention::AttentionMap>* maps = nullptr);

  // BOS-seeded autoregressive decoding, at most max_len generated tokens.
  std::vector<int> greedy_decode(const EncoderOutput& enc,
                                 std::size_t max_len);
  std::vector<int> beam_decode(const EncoderOutput& enc, std::size_t max_len,
                               std::size_t width);

  // Stable-order parameter registry (optimizer + checkpoints).
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // Batch-norm running statistics, checkpointed alongside the parameters.
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();

  // Single self-describing binary: magic "GSLT", u16 version, the config as
  // key=value text, then named f64 little-endian arrays with shapes.
  void save_checkpoint(const std::filesystem::path& path);
  static Translator load_checkpoint(const std::filesystem::path& path);

 private:
  struct Embed {
    Tensor w, b, gamma, beta;
    ops::BatchNormState state;
  };
  struct Norm {
    Tensor gain, bias;
  };
  struct Mlp {
    Tensor w1, b1, w2, b2;
  };
  struct EncoderLayer {
    attention::MultiHeadParams attn;
    Norm attn_norm;
    Mlp mlp;
    Norm mlp_norm;
  };
  struct DecoderLayer {
    attention::MultiHeadParams self;
    Norm self_norm;
    attention::MultiHeadParams cross;
    Norm cross_norm;
    Mlp mlp;
    Norm mlp_norm;
  };

  Tensor embed_front(const Tensor& rows, Embed& e, bool training);
  Tensor mlp_forward(const Tensor& x, const Mlp& m, bool training);
  Tensor drop(const Tensor& x, bool training);
  attention::MultiHeadParams make_attention(bool gloss, std::mt19937_64& rng);

  ModelConfig config_;
  Embed video_, text_;
  Tensor text_table_;  // vocab x d_model
  Tensor cls_frame_;   // 1 x d_model, used by the kCls aggregation
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Norm memory_norm_;  // decoder's view of the encoder stream
  Norm dec_norm_;     // pre-logit norm closing the decoder's pre-norm stack
  Tensor out_w_, out_b_;  // vocab x d_model, vocab
  std::mt19937_64 dropout_rng_;
};

}  // namespace gaslt::model
