#include "gaslt/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "gaslt/attention.hpp"
#include "gaslt/objectives.hpp"
#include "gaslt/ops.hpp"

namespace gaslt::train {

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("train: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (adam_eps <= 0.0) throw ConfigError("train: Adam eps must be positive");
  if (weight_decay < 0.0) throw ConfigError("train: negative weight decay");
  if (lr_factor <= 0.0 || lr_factor >= 1.0) {
    throw ConfigError("train: lr factor must lie in (0, 1)");
  }
  if (lr_floor <= 0.0) throw ConfigError("train: lr floor must be positive");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw ConfigError("train: label smoothing must lie in [0, 1)");
  }
  if (lambda_kt < 0.0) throw ConfigError("train: negative lambda_kt");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (max_decode_len < 1) {
    throw ConfigError("train: max decode length must be >= 1");
  }
}

TrainConfig train_config_from_kv(const KeyValues& kv) {
  TrainConfig c;
  c.lr = kv.get_double("lr", c.lr);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.adam_eps = kv.get_double("adam_eps", c.adam_eps);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.patience = static_cast<std::size_t>(
      kv.get_int("patience", static_cast<long long>(c.patience)));
  c.lr_factor = kv.get_double("lr_factor", c.lr_factor);
  c.lr_floor = kv.get_double("lr_floor", c.lr_floor);
  c.batch_size = static_cast<std::size_t>(
      kv.get_int("batch_size", static_cast<long long>(c.batch_size)));
  c.label_smoothing = kv.get_double("label_smoothing", c.label_smoothing);
  c.lambda_kt = kv.get_double("lambda_kt", c.lambda_kt);
  c.epochs = static_cast<std::size_t>(
      kv.get_int("epochs", static_cast<long long>(c.epochs)));
  c.max_decode_len = static_cast<std::size_t>(
      kv.get_int("max_decode_len", static_cast<long long>(c.max_decode_len)));
  c.seed = static_cast<std::uint64_t>(
      kv.get_int("seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void train_config_to_kv(const TrainConfig& c, KeyValues& kv) {
  kv.set("lr", fmt(c.lr));
  kv.set("beta1", fmt(c.beta1));
  kv.set("beta2", fmt(c.beta2));
  kv.set("adam_eps", fmt(c.adam_eps));
  kv.set("weight_decay", fmt(c.weight_decay));
  kv.set("patience", std::to_string(c.patience));
  kv.set("lr_factor", fmt(c.lr_factor));
  kv.set("lr_floor", fmt(c.lr_floor));
  kv.set("batch_size", std::to_string(c.batch_size));
  kv.set("label_smoothing", fmt(c.label_smoothing));
  kv.set("lambda_kt", fmt(c.lambda_kt));
  kv.set("epochs", std::to_string(c.epochs));
  kv.set("max_decode_len", std::to_string(c.max_decode_len));
  kv.set("seed", std::to_string(c.seed));
}

model::ModelConfig resolve_model_config(const KeyValues& kv,
                                        std::size_t corpus_vocab,
                                        std::size_t corpus_input_dim) {
  KeyValues merged = kv;
  const std::pair<const char*, std::size_t> derived[] = {
      {"vocab_size", corpus_vocab}, {"input_dim", corpus_input_dim}};
  for (const auto& [key, value] : derived) {
    if (!merged.has(key)) {
      merged.set(key, std::to_string(value));
    } else if (merged.get_int(key, 0) != static_cast<long long>(value)) {
      throw ConfigError("corpus/config mismatch: " + std::string(key) +
                        " is " + merged.require(key) +
                        " in the config but " + std::to_string(value) +
                        " in the corpus");
    }
  }
  return model::config_from_kv(merged);
}

// --- optimizer ---------------------------------------------------------------

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params,
           const TrainConfig& cfg)
    : lr_(cfg.lr),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {
  for (auto& [name, t] : params) {
    if (!t.requires_grad()) {
      throw ContractError("optimizer: parameter '" + name +
                          "' does not require gradients");
    }
    slots_.push_back({t, std::vector<double>(t.size(), 0.0),
                      std::vector<double>(t.size(), 0.0)});
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

void Adam::step() {
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (Slot& s : slots_) {
    if (!s.param.has_grad()) continue;  // untouched by this loss
    const std::vector<double>& grad = s.param.grad();
    std::vector<double>& theta = s.param.mutable_values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + weight_decay_ * theta[i];
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
      theta[i] -= lr_ * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + eps_);
    }
  }
}

bool PlateauScheduler::step(double metric) {
  if (!seen_ || metric > best_) {
    best_ = metric;
    seen_ = true;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ > patience_) {
    bad_epochs_ = 0;
    return true;
  }
  return false;
}

// --- evaluation ------------------------------------------------------------

KeyValues EvalReport::to_kv() const {
  KeyValues kv;
  for (std::size_t n = 0; n < bleu.size(); ++n)
    kv.set("bleu" + std::to_string(n + 1), fmt(bleu[n]));
  kv.set("rouge_l", fmt(rouge_l));
  kv.set("asd", fmt(asd));
  kv.set("cad", fmt(cad));
  return kv;
}

EvalReport evaluate_split(model::Translator& m,
                          const std::vector<data::Sample>& samples,
                          const data::Vocabulary& vocab,
                          const metrics::SimilarityMatrix& oracle,
                          std::size_t beam, std::size_t max_len) {
  if (samples.size() < 2) {
    throw ContractError("evaluate: need at least two samples, got " +
                        std::to_string(samples.size()));
  }
  if (beam < 1) throw ConfigError("evaluate: beam width must be >= 1");
  NoGradGuard no_grad;

  std::vector<metrics::TokenList> hyps, refs;
  DenseMatrix embeddings(samples.size(), m.config().d_model);
  double cad_sum = 0.0;
  std::size_t cad_count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const data::Sample& s = samples[i];
    const model::EncoderOutput enc =
        m.encode(model::frames_to_tensor(s.features), false);
    for (const attention::AttentionMap& map : enc.maps) {
      cad_sum += metrics::cad(map, 0.1);
      ++cad_count;
    }
    for (std::size_t d = 0; d < m.config().d_model; ++d)
      embeddings.at(i, d) = enc.sentence.values()[d];
    const std::vector<int> ids = beam == 1
                                     ? m.greedy_decode(enc, max_len)
                                     : m.beam_decode(enc, max_len, beam);
    hyps.push_back(vocab.decode(ids));
    refs.push_back(s.words);
  }

  EvalReport report;
  report.bleu = metrics::bleu(hyps, refs, 4);
  report.rouge_l = metrics::rouge_l_corpus(hyps, refs);

  DenseMatrix want(samples.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::size_t oi = oracle.index_of(samples[i].id);
    for (std::size_t j = 0; j < samples.size(); ++j)
      want.at(i, j) = oracle.values.at(oi, oracle.index_of(samples[j].id));
  }
  report.asd = metrics::asd(metrics::embedding_similarity(embeddings), want);
  report.cad = cad_count > 0 ? cad_sum / static_cast<double>(cad_count) : 0.0;
  return report;
}

// --- training loop -----------------------------------------------------------

std::string EpochLog::line() const {
  std::ostringstream out;
  out.precision(10);
  out << "epoch=" << epoch << " lr=" << lr << " loss=" << loss
      << " kt=" << kt;
  for (std::size_t n = 0; n < dev.bleu.size(); ++n)
    out << " dev_bleu" << (n + 1) << "=" << dev.bleu[n];
  out << " dev_rouge_l=" << dev.rouge_l << " dev_asd=" << dev.asd
      << " dev_cad=" << dev.cad;
  return out.str();
}

TrainResult train_model(model::Translator& m, const data::Corpus& corpus,
                        const data::Vocabulary& vocab,
                        const metrics::SimilarityMatrix& train_sim,
                        const metrics::SimilarityMatrix& dev_sim,
                        const TrainConfig& cfg,
                        const std::filesystem::path& best_checkpoint,
                        std::ostream* log_out) {
  cfg.validate();
  if (corpus.train.empty()) throw ContractError("train: empty training split");

  Adam opt(m.named_parameters(), cfg);
  PlateauScheduler scheduler(cfg.patience);
  std::mt19937_64 shuffle_rng(cfg.seed + 1);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<data::Sample> shuffled = corpus.train;
    std::shuffle(shuffled.begin(), shuffled.end(), shuffle_rng);

    double loss_sum = 0.0, kt_sum = 0.0, tokens_total = 0.0;
    std::size_t batches = 0;
    for (const data::Batch& batch :
         data::batch_and_mask(shuffled, vocab, cfg.batch_size)) {
      opt.zero_grad();
      const std::size_t count = batch.ids.size();

      // token-weighted CE: every target token counts equally, so long
      // sentences are not diluted by per-sample averaging
      Tensor ce_sum = Tensor::scalar(0.0);
      double batch_tokens = 0.0;
      std::vector<Tensor> sentences;
      for (std::size_t i = 0; i < count; ++i) {
        const Tensor frames =
            model::frames_to_tensor(batch.features[i], batch.frame_lens[i]);
        const model::EncoderOutput enc = m.encode(frames, true);
        const std::size_t len = batch.token_lens[i];
        const std::span<const int> all(batch.tokens[i]);
        const Tensor logits =
            m.decode_logits(enc, all.subspan(0, len - 1), true);
        const Tensor sample_ce = objectives::label_smoothed_ce(
            logits, all.subspan(1, len - 1), cfg.label_smoothing,
            data::Vocabulary::kPad);
        const double tokens = static_cast<double>(len - 1);
        ce_sum = ops::add(ce_sum, ops::scale(sample_ce, tokens));
        batch_tokens += tokens;
        if (cfg.lambda_kt > 0.0) sentences.push_back(enc.sentence);
      }
      const Tensor ce = ops::scale(ce_sum, 1.0 / batch_tokens);

      Tensor kt = Tensor::scalar(0.0);
      if (cfg.lambda_kt > 0.0) {
        DenseMatrix sim(count, count);
        for (std::size_t i = 0; i < count; ++i) {
          const std::size_t oi = train_sim.index_of(batch.ids[i]);
          for (std::size_t j = 0; j < count; ++j) {
            sim.at(i, j) =
                train_sim.values.at(oi, train_sim.index_of(batch.ids[j]));
          }
        }
        kt = objectives::kt_loss_batch(sentences, sim);
      }

      const Tensor total = objectives::total_loss(ce, kt, cfg.lambda_kt);
      total.backward();
      opt.step();

      loss_sum += ce.item() * batch_tokens;
      tokens_total += batch_tokens;
      kt_sum += kt.item();
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = opt.lr();
    entry.loss = loss_sum / tokens_total;
    entry.kt = cfg.lambda_kt > 0.0
                   ? kt_sum / static_cast<double>(batches)
                   : 0.0;
    entry.dev =
        evaluate_split(m, corpus.dev, vocab, dev_sim, 1, cfg.max_decode_len);
    if (log_out) (*log_out) << entry.line() << "\n";

    const double bleu4 = entry.dev.bleu[3];
    if (bleu4 > result.best_bleu4) {
      result.best_bleu4 = bleu4;
      result.best_epoch = epoch;
      if (!best_checkpoint.empty()) m.save_checkpoint(best_checkpoint);
    }
    if (scheduler.step(bleu4)) opt.set_lr(opt.lr() * cfg.lr_factor);
    result.log.push_back(std::move(entry));

    if (opt.lr() < cfg.lr_floor) {
      result.stopped_on_lr_floor = true;
      break;
    }
  }
  return result;
}

}  // namespace gaslt::train
