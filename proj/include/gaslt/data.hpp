#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gaslt/errors.hpp"
#include "gaslt/metrics.hpp"

namespace gaslt::data {

// Generator knobs for the synthetic segmented-feature corpus. Each of the G
// glosses gets a random prototype frame; a sample is a sentence of distinct
// glosses rendered as noisy prototype segments.
struct SyntheticSpec {
  std::size_t gloss_vocab = 20;   // G
  std::size_t feature_dim = 64;   // D_in
  std::size_t min_segment = 8;    // frames per gloss
  std::size_t max_segment = 20;
  std::size_t min_glosses = 3;    // glosses per sentence
  std::size_t max_glosses = 8;
  double noise = 0.1;             // frame noise sigma
  bool reorder = true;            // swap adjacent word pairs in the target
  std::size_t train_size = 500;
  std::size_t dev_size = 50;
  std::size_t test_size = 50;
  std::uint64_t seed = 42;

  void validate() const;  // throws ConfigError on violated invariants
};

// T x D_in frames, stored at the 32-bit precision of the file format.
struct FeatureSequence {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // row-major

  float at(std::size_t t, std::size_t d) const { return values[t * dim + d]; }
};

struct Sample {
  std::string id;
  FeatureSequence features;
  std::vector<std::string> words;  // target sentence, no BOS/EOS
};

struct Corpus {
  std::vector<Sample> train, dev, test;

  const std::vector<Sample>& split(const std::string& name) const;
};

// Closed whitespace-token vocabulary with reserved control ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0, kUnk = 1, kBos = 2, kEos = 3;

  // specials + sorted unique words of the training sentences
  static Vocabulary build(const std::vector<Sample>& samples);

  std::size_t size() const { return words_.size(); }
  const std::string& word(int id) const;
  int id(const std::string& word) const;  // kUnk when unknown

  // BOS + ids + EOS
  std::vector<int> encode(const std::vector<std::string>& words) const;
  // drops pad/BOS, stops at EOS
  std::vector<std::string> decode(std::span<const int> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  void reindex();
};

std::vector<std::string> tokenize(const std::string& line);

// Deterministic corpus from the spec; segmentation-free view (the generator
// that also exposes gold segment boundaries lives in segments.hpp).
Corpus generate_corpus(const SyntheticSpec& spec);

// Bag-of-words cosine similarities of the given sentences; an empty sentence
// counts as a single UNK token.
metrics::SimilarityMatrix similarity_oracle(
    const std::vector<std::string>& ids,
    const std::vector<std::vector<std::string>>& sentences);

// --- feature file format -------------------------------------------------
// "GASL" magic, u16 version = 1, u32 frames, u32 dim, then frames*dim 32-bit
// little-endian floats in row-major order.
void write_features(const std::filesystem::path& path,
                    const FeatureSequence& seq);
FeatureSequence read_features(const std::filesystem::path& path);

// --- similarity CSV ------------------------------------------------------
// header: id,<id_1>,...,<id_n>; one row per id with n values
void write_similarity_csv(const std::filesystem::path& path,
                          const metrics::SimilarityMatrix& s);
metrics::SimilarityMatrix read_similarity_csv(
    const std::filesystem::path& path);

// --- batching ------------------------------------------------------------
struct Batch {
  std::vector<std::string> ids;
  std::size_t frame_len = 0;  // padded lengths
  std::size_t token_len = 0;
  // per sample: frame_len x dim features (zero padded) and token_len ids
  // (BOS + sentence + EOS, then pad)
  std::vector<FeatureSequence> features;
  std::vector<std::vector<int>> tokens;
  std::vector<std::size_t> frame_lens;  // true lengths
  std::vector<std::size_t> token_lens;
  std::vector<std::uint8_t> frame_mask;  // samples x frame_len, row-major
  std::vector<std::uint8_t> token_mask;
};

std::vector<Batch> batch_and_mask(const std::vector<Sample>& samples,
                                  const Vocabulary& vocab,
                                  std::size_t batch_size);

// --- on-disk corpus ------------------------------------------------------
// layout written by the generator tooling and read back here:
//   manifest.txt, vocab.txt, <split>.ids, <split>.text,
//   similarity.<split>.csv, features/<id>.gasl
Corpus load_corpus(const std::filesystem::path& dir);
metrics::SimilarityMatrix load_similarity(const std::filesystem::path& dir,
                                          const std::string& split);

}  // namespace gaslt::data
