#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "gaslt/data.hpp"
#include "gaslt/kv.hpp"
#include "gaslt/metrics.hpp"
#include "gaslt/model.hpp"

namespace gaslt::train {

// Full training recipe. The defaults are the reference setup; model geometry
// travels separately in ModelConfig.
struct TrainConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.998;
  double adam_eps = 1e-8;
  double weight_decay = 1e-3;
  std::size_t patience = 9;   // plateau epochs before a cut
  double lr_factor = 0.5;     // cut multiplier
  double lr_floor = 1e-7;     // stop once lr drops below
  std::size_t batch_size = 32;
  double label_smoothing = 0.4;
  double lambda_kt = 1.0;
  std::size_t epochs = 50;
  std::size_t max_decode_len = 32;
  std::uint64_t seed = 42;

  void validate() const;  // throws ConfigError
};

TrainConfig train_config_from_kv(const KeyValues& kv);
void train_config_to_kv(const TrainConfig& c, KeyValues& kv);

// Model geometry from the same flat file, with vocab/input width taken from
// the corpus when the file does not pin them. Pinned-but-mismatched values
// are a config error (caught before any training step).
model::ModelConfig resolve_model_config(const KeyValues& kv,
                                        std::size_t corpus_vocab,
                                        std::size_t corpus_input_dim);

// Adam over named parameters, with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params,
       const TrainConfig& cfg);

  void zero_grad();
  void step();  // applies accumulated gradients, advances the step count

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t steps() const { return steps_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;  // first/second moment estimates
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::size_t steps_ = 0;
};

// Plateau watcher on a maximized metric: after `patience` consecutive epochs
// without a new best, step() reports that the rate should be cut.
class PlateauScheduler {
 public:
  PlateauScheduler(std::size_t patience) : patience_(patience) {}

  bool step(double metric);
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  double best_ = -1e300;
  bool seen_ = false;
};

// The 7-metric evaluation report of one split.
struct EvalReport {
  std::vector<double> bleu;  // orders 1..4
  double rouge_l = 0.0;
  double asd = 0.0;
  double cad = 0.0;  // mean over samples and encoder maps, delta = 0.1

  KeyValues to_kv() const;
};

// Greedy (beam == 1) or beam decoding over a split, scored against the
// references, plus ASD of the sentence embeddings against the oracle and
// mean encoder-attention diagonality.
EvalReport evaluate_split(model::Translator& m,
                          const std::vector<data::Sample>& samples,
                          const data::Vocabulary& vocab,
                          const metrics::SimilarityMatrix& oracle,
                          std::size_t beam, std::size_t max_len);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // per-token translation loss over the epoch
  double kt = 0.0;    // mean knowledge-transfer loss (exactly 0 when off)
  EvalReport dev;

  std::string line() const;  // one space-separated key=value record
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_bleu4 = -1.0;
  std::size_t best_epoch = 0;
  bool stopped_on_lr_floor = false;
};

// The full loop: shuffled batches, label-smoothed translation loss plus
// lambda-weighted knowledge transfer, Adam, plateau-scheduled lr on dev
// BLEU-4, best-checkpoint tracking. Logs one line per epoch to `log_out`
// when given; saves the best model to `best_checkpoint` unless empty.
TrainResult train_model(model::Translator& m, const data::Corpus& corpus,
                        const data::Vocabulary& vocab,
                        const metrics::SimilarityMatrix& train_sim,
                        const metrics::SimilarityMatrix& dev_sim,
                        const TrainConfig& cfg,
                        const std::filesystem::path& best_checkpoint = {},
                        std::ostream* log_out = nullptr);

}  // namespace gaslt::train
