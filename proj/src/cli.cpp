#include "gaslt/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gaslt/bench.hpp"
#include "gaslt/data.hpp"
#include "gaslt/errors.hpp"
#include "gaslt/kv.hpp"
#include "gaslt/model.hpp"
#include "gaslt/segments.hpp"
#include "gaslt/train.hpp"

namespace gaslt::cli {

namespace {

namespace fs = std::filesystem;

std::size_t read_size(const KeyValues& kv, const std::string& key,
                      std::size_t fallback) {
  const long long v = kv.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

// Configs are flat files shared across subcommands, so a key outside the
// subcommand's vocabulary is almost always a typo or the wrong file.
void reject_unknown_keys(const KeyValues& kv,
                         const std::set<std::string>& known,
                         const std::string& what) {
  for (const auto& [key, value] : kv.entries()) {
    (void)value;
    if (!known.count(key))
      throw ConfigError("unknown " + what + " key '" + key + "'");
  }
}

const std::set<std::string> kModelKeys = {
    "d_model",  "heads",   "encoder_layers", "decoder_layers",
    "window",   "ff_dim",  "dropout",        "variant",
    "aggregation", "vocab_size", "input_dim"};
const std::set<std::string> kTrainKeys = {
    "lr",        "beta1",     "beta2",           "adam_eps",
    "weight_decay", "patience", "lr_factor",     "lr_floor",
    "batch_size",   "label_smoothing", "lambda_kt", "epochs",
    "max_decode_len", "seed"};

data::SyntheticSpec spec_from_kv(const KeyValues& kv) {
  reject_unknown_keys(kv,
                      {"format", "gloss_vocab", "feature_dim", "min_segment",
                       "max_segment", "min_glosses", "max_glosses", "noise",
                       "reorder", "train_size", "dev_size", "test_size",
                       "seed"},
                      "corpus");
  data::SyntheticSpec s;
  s.gloss_vocab = read_size(kv, "gloss_vocab", s.gloss_vocab);
  s.feature_dim = read_size(kv, "feature_dim", s.feature_dim);
  s.min_segment = read_size(kv, "min_segment", s.min_segment);
  s.max_segment = read_size(kv, "max_segment", s.max_segment);
  s.min_glosses = read_size(kv, "min_glosses", s.min_glosses);
  s.max_glosses = read_size(kv, "max_glosses", s.max_glosses);
  s.noise = kv.get_double("noise", s.noise);
  s.reorder = kv.get_bool("reorder", s.reorder);
  s.train_size = read_size(kv, "train_size", s.train_size);
  s.dev_size = read_size(kv, "dev_size", s.dev_size);
  s.test_size = read_size(kv, "test_size", s.test_size);
  s.seed = read_size(kv, "seed", s.seed);
  return s;
}

std::vector<std::string> split_list(const std::string& key,
                                    const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    const std::size_t a = item.find_first_not_of(" \t");
    const std::size_t b = item.find_last_not_of(" \t");
    if (a == std::string::npos)
      throw ConfigError(key + " has an empty list entry");
    out.push_back(item.substr(a, b - a + 1));
  }
  if (out.empty()) throw ConfigError(key + " is empty");
  return out;
}

std::vector<std::size_t> size_list(const std::string& key,
                                   const std::string& csv) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(key, csv)) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      throw ConfigError(key + " entry '" + item + "' is not an integer");
    }
    if (used != item.size() || v < 1)
      throw ConfigError(key + " entry '" + item +
                        "' is not a positive integer");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// Mirrors stream output into two buffers (metric log file + stdout).
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == traits_type::eof()) return c;
    a_->sputc(static_cast<char>(c));
    b_->sputc(static_cast<char>(c));
    return c;
  }
  int sync() override { return (a_->pubsync() | b_->pubsync()) ? -1 : 0; }

 private:
  std::streambuf *a_, *b_;
};

void write_matrix_csv(const fs::path& path, const std::vector<double>& values,
                      std::size_t rows, std::size_t cols) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out << ',';
      out << values[r * cols + c];
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

struct Args {
  std::string config;
  std::string out;
  std::string split = "test";
  long long seed = -1;  // -1: flag absent
  std::size_t beam = 1;
};

int cmd_gen_data(const Args& a) {
  const KeyValues kv =
      a.config.empty() ? KeyValues() : KeyValues::load(a.config);
  data::SyntheticSpec spec = spec_from_kv(kv);
  if (a.seed >= 0) spec.seed = static_cast<std::uint64_t>(a.seed);
  const data::GeneratedCorpus generated =
      data::generate_corpus_with_segments(spec);
  const std::size_t n = data::write_corpus(a.out, spec, generated);
  std::cout << "wrote " << n << " samples to " << a.out << "\n";
  return 0;
}

int cmd_train(const Args& a) {
  const KeyValues kv = KeyValues::load(a.config);
  std::set<std::string> known = {"data_dir"};
  known.insert(kModelKeys.begin(), kModelKeys.end());
  known.insert(kTrainKeys.begin(), kTrainKeys.end());
  reject_unknown_keys(kv, known, "training");
  const fs::path data_dir = kv.require("data_dir");
  const data::Corpus corpus = data::load_corpus(data_dir);
  if (corpus.train.empty())
    throw ConfigError("corpus has no training samples");
  const data::Vocabulary vocab = data::Vocabulary::load(data_dir / "vocab.txt");
  const metrics::SimilarityMatrix train_sim =
      data::load_similarity(data_dir, "train");
  const metrics::SimilarityMatrix dev_sim =
      data::load_similarity(data_dir, "dev");

  train::TrainConfig tc = train::train_config_from_kv(kv);
  if (a.seed >= 0) tc.seed = static_cast<std::uint64_t>(a.seed);
  const model::ModelConfig mc = train::resolve_model_config(
      kv, vocab.size(), corpus.train.front().features.dim);

  const fs::path out(a.out);
  fs::create_directories(out);
  KeyValues resolved;
  resolved.set("data_dir", data_dir.string());
  model::config_to_kv(mc, resolved);
  train::train_config_to_kv(tc, resolved);
  resolved.save(out / "config.txt");

  model::Translator m(mc, tc.seed);
  std::ofstream log_file(out / "metrics.log");
  if (!log_file) throw IoError("cannot write " + (out / "metrics.log").string());
  TeeBuf tee(log_file.rdbuf(), std::cout.rdbuf());
  std::ostream log(&tee);
  const train::TrainResult res = train::train_model(
      m, corpus, vocab, train_sim, dev_sim, tc, out / "best.ckpt", &log);
  std::cout << "best_epoch=" << res.best_epoch
            << " best_dev_bleu4=" << std::setprecision(10) << res.best_bleu4
            << "\n";
  return 0;
}

int cmd_evaluate(const Args& a) {
  const KeyValues kv = KeyValues::load(a.config);
  reject_unknown_keys(kv, {"checkpoint", "data_dir", "max_decode_len"},
                      "evaluation");
  model::Translator m =
      model::Translator::load_checkpoint(kv.require("checkpoint"));
  const fs::path data_dir = kv.require("data_dir");
  const data::Corpus corpus = data::load_corpus(data_dir);
  const data::Vocabulary vocab = data::Vocabulary::load(data_dir / "vocab.txt");
  const metrics::SimilarityMatrix sim = data::load_similarity(data_dir, a.split);
  const std::size_t max_len = read_size(kv, "max_decode_len", 32);
  const train::EvalReport rep = train::evaluate_split(
      m, corpus.split(a.split), vocab, sim, a.beam, max_len);
  const std::string text = rep.to_kv().serialize();
  std::cout << text;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    rep.to_kv().save(fs::path(a.out) / ("report." + a.split + ".txt"));
  }
  return 0;
}

int cmd_bench(const Args& a) {
  const KeyValues kv =
      a.config.empty() ? KeyValues() : KeyValues::load(a.config);
  reject_unknown_keys(
      kv, {"t_values", "window", "dim", "repeats", "variants", "seed"},
      "bench");
  const std::vector<std::size_t> t_values =
      size_list("t_values", kv.get("t_values", "512,1024,2048,4096"));
  const int window = static_cast<int>(read_size(kv, "window", 7));
  const std::size_t dim = read_size(kv, "dim", 64);
  const int repeats = static_cast<int>(read_size(kv, "repeats", 3));
  const std::vector<std::string> variants =
      split_list("variants", kv.get("variants", "gloss,self"));
  std::uint64_t seed = read_size(kv, "seed", 42);
  if (a.seed >= 0) seed = static_cast<std::uint64_t>(a.seed);
  const std::vector<bench::BenchRow> rows =
      bench::run_bench(t_values, window, dim, variants, repeats, seed);
  const std::string csv = bench::bench_csv(rows);
  std::cout << csv;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream file(fs::path(a.out) / "bench.csv");
    if (!file) throw IoError("cannot write bench.csv under " + a.out);
    file << csv;
  }
  return 0;
}

int cmd_dump_attn(const Args& a, bool split_given) {
  const KeyValues kv = KeyValues::load(a.config);
  reject_unknown_keys(kv, {"checkpoint", "data_dir", "sample"}, "dump");
  model::Translator m =
      model::Translator::load_checkpoint(kv.require("checkpoint"));
  const fs::path data_dir = kv.require("data_dir");
  const std::string wanted = kv.require("sample");
  const data::Corpus corpus = data::load_corpus(data_dir);

  const data::Sample* sample = nullptr;
  std::vector<std::string> splits = {"train", "dev", "test"};
  if (split_given) splits = {a.split};
  for (const std::string& name : splits) {
    for (const data::Sample& s : corpus.split(name)) {
      if (s.id == wanted) sample = &s;
    }
  }
  if (!sample)
    throw ConfigError("sample '" + wanted + "' not found in the corpus");

  NoGradGuard guard;
  const model::EncoderOutput enc =
      m.encode(model::frames_to_tensor(sample->features), false);
  const fs::path out(a.out);
  fs::create_directories(out);
  std::size_t files = 0;
  for (const attention::AttentionMap& map : enc.maps) {
    const std::string base =
        "enc" + std::to_string(map.layer) + ".h" + std::to_string(map.head);
    write_matrix_csv(out / (base + ".weights.csv"), map.weights,
                     map.query_len, map.key_len);
    ++files;
    if (map.gloss()) {
      write_matrix_csv(out / (base + ".positions.csv"), map.positions,
                       map.query_len, map.key_len);
      ++files;
    }
  }
  std::cout << "wrote " << files << " files for sample " << wanted << " to "
            << a.out << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"gloss-attention sign language translation toolkit"};
  app.require_subcommand(1);
  Args args;
  int rc = 0;

  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate a synthetic segmented-feature corpus");
  gen->add_option("--config", args.config, "corpus spec (key=value lines)")
      ->check(CLI::ExistingFile);
  gen->add_option("--out", args.out, "output corpus directory")->required();
  gen->add_option("--seed", args.seed, "override the spec seed")
      ->check(CLI::NonNegativeNumber);
  gen->callback([&] { rc = cmd_gen_data(args); });

  CLI::App* train = app.add_subcommand(
      "train", "Train a translator on a generated corpus");
  train->add_option("--config", args.config,
                    "training config with data_dir, model and recipe keys")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", args.out, "run directory for artifacts")
      ->required();
  train->add_option("--seed", args.seed, "override the config seed")
      ->check(CLI::NonNegativeNumber);
  train->callback([&] { rc = cmd_train(args); });

  CLI::App* eval = app.add_subcommand(
      "evaluate", "Score a checkpoint on one corpus split");
  eval->add_option("--config", args.config,
                   "eval config with checkpoint and data_dir keys")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--split", args.split, "corpus split (default test)")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  eval->add_option("--beam", args.beam, "beam width (1 = greedy)")
      ->check(CLI::PositiveNumber);
  eval->add_option("--out", args.out, "optional directory for the report");
  eval->callback([&] { rc = cmd_evaluate(args); });

  CLI::App* bench = app.add_subcommand(
      "bench", "Time attention variants across sequence lengths");
  bench->add_option("--config", args.config,
                    "bench config (t_values, window, dim, repeats, variants)")
      ->check(CLI::ExistingFile);
  bench->add_option("--out", args.out, "optional directory for bench.csv");
  bench->add_option("--seed", args.seed, "override the bench seed")
      ->check(CLI::NonNegativeNumber);
  bench->callback([&] { rc = cmd_bench(args); });

  CLI::App* dump = app.add_subcommand(
      "dump-attn", "Write one sample's attention maps as CSV files");
  CLI::Option* dump_split =
      dump->add_option("--split", args.split, "restrict the sample lookup")
          ->check(CLI::IsMember({"train", "dev", "test"}));
  dump->add_option("--config", args.config,
                   "dump config with checkpoint, data_dir and sample keys")
      ->required()
      ->check(CLI::ExistingFile);
  dump->add_option("--out", args.out, "output directory for the CSV files")
      ->required();
  dump->callback([&] { rc = cmd_dump_attn(args, dump_split->count() > 0); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.push_back("gaslt");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const std::string& s : full) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace gaslt::cli
