#include "gaslt/segments.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "gaslt/kv.hpp"

namespace gaslt::data {

namespace fs = std::filesystem;

namespace {

std::string gloss_word(std::size_t gloss) {
  std::string n = std::to_string(gloss);
  if (n.size() < 2) n.insert(0, 2 - n.size(), '0');
  return "w" + n;
}

std::string sample_id(const std::string& split, std::size_t index) {
  std::string n = std::to_string(index);
  if (n.size() < 4) n.insert(0, 4 - n.size(), '0');
  return split + n;
}

// first m entries of a Fisher-Yates pass over 0..g-1: m distinct glosses
std::vector<int> draw_glosses(std::mt19937_64& rng, std::size_t m,
                              std::size_t g) {
  std::vector<int> pool(g);
  for (std::size_t i = 0; i < g; ++i) pool[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, g - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(m);
  return pool;
}

}  // namespace

GeneratedCorpus generate_corpus_with_segments(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);

  // fixed prototype frame per gloss
  std::vector<std::vector<double>> prototypes(spec.gloss_vocab);
  for (auto& proto : prototypes) {
    proto.resize(spec.feature_dim);
    for (double& x : proto) x = unit_normal(rng);
  }

  std::uniform_int_distribution<std::size_t> sentence_len(spec.min_glosses,
                                                          spec.max_glosses);
  std::uniform_int_distribution<std::size_t> segment_len(spec.min_segment,
                                                         spec.max_segment);

  GeneratedCorpus out;
  const std::pair<std::string, std::size_t> splits[] = {
      {"train", spec.train_size}, {"dev", spec.dev_size},
      {"test", spec.test_size}};
  for (const auto& [split, size] : splits) {
    std::vector<Sample>& dest = split == "train"  ? out.corpus.train
                                : split == "dev" ? out.corpus.dev
                                                 : out.corpus.test;
    for (std::size_t i = 0; i < size; ++i) {
      Sample s;
      s.id = sample_id(split, i);
      SampleSegments gold;
      gold.id = s.id;

      const std::size_t m = sentence_len(rng);
      const std::vector<int> glosses = draw_glosses(rng, m, spec.gloss_vocab);

      s.features.dim = spec.feature_dim;
      for (int gloss : glosses) {
        const std::size_t len = segment_len(rng);
        gold.segments.push_back({gloss, s.features.frames, len});
        const auto& proto = prototypes[static_cast<std::size_t>(gloss)];
        for (std::size_t t = 0; t < len; ++t) {
          for (double mu : proto) {
            const double x = spec.noise > 0.0
                                 ? mu + spec.noise * unit_normal(rng)
                                 : mu;
            s.features.values.push_back(static_cast<float>(x));
          }
        }
        s.features.frames += len;
      }

      // target = gloss words in sign order, optionally with adjacent pairs
      // swapped to mimic sign/spoken word-order divergence
      for (int gloss : glosses)
        s.words.push_back(gloss_word(static_cast<std::size_t>(gloss)));
      if (spec.reorder) {
        for (std::size_t j = 0; j + 1 < s.words.size(); j += 2)
          std::swap(s.words[j], s.words[j + 1]);
      }

      dest.push_back(std::move(s));
      out.segments.push_back(std::move(gold));
    }
  }
  return out;
}

Corpus generate_corpus(const SyntheticSpec& spec) {
  return generate_corpus_with_segments(spec).corpus;
}

// --- segment files ---------------------------------------------------------

void write_segments(const fs::path& path,
                    const std::vector<SampleSegments>& segments) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const SampleSegments& s : segments) {
    out << s.id;
    for (const GlossSegment& seg : s.segments)
      out << "\t" << seg.gloss << ":" << seg.start << ":" << seg.length;
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<SampleSegments> read_segments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<SampleSegments> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    SampleSegments s;
    std::string field;
    std::getline(fields, s.id, '\t');
    while (std::getline(fields, field, '\t')) {
      GlossSegment seg;
      if (std::sscanf(field.c_str(), "%d:%zu:%zu", &seg.gloss, &seg.start,
                      &seg.length) != 3) {
        throw IoError(path.string() + ": line " + std::to_string(line_no) +
                      ": bad segment '" + field + "'");
      }
      s.segments.push_back(seg);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// --- full corpus layout ------------------------------------------------------

namespace {

void write_split(const fs::path& dir, const std::string& name,
                 const std::vector<Sample>& samples) {
  std::ofstream ids(dir / (name + ".ids"));
  std::ofstream text(dir / (name + ".text"));
  if (!ids || !text) throw IoError("cannot write split files in " +
                                   dir.string());
  std::vector<std::string> id_list;
  std::vector<std::vector<std::string>> sentences;
  for (const Sample& s : samples) {
    ids << s.id << "\n";
    for (std::size_t i = 0; i < s.words.size(); ++i)
      text << (i ? " " : "") << s.words[i];
    text << "\n";
    write_features(dir / "features" / (s.id + ".gasl"), s.features);
    id_list.push_back(s.id);
    sentences.push_back(s.words);
  }
  if (!ids || !text) throw IoError("failed writing split files in " +
                                   dir.string());
  if (samples.size() >= 2) {
    write_similarity_csv(dir / ("similarity." + name + ".csv"),
                         similarity_oracle(id_list, sentences));
  }
}

}  // namespace

std::size_t write_corpus(const fs::path& dir, const SyntheticSpec& spec,
                         const GeneratedCorpus& generated) {
  spec.validate();
  fs::create_directories(dir / "features");

  write_split(dir, "train", generated.corpus.train);
  write_split(dir, "dev", generated.corpus.dev);
  write_split(dir, "test", generated.corpus.test);
  Vocabulary::build(generated.corpus.train).save(dir / "vocab.txt");
  write_segments(dir / "segments.txt", generated.segments);

  KeyValues manifest;
  manifest.set("format", "gaslt-corpus");
  manifest.set("gloss_vocab", std::to_string(spec.gloss_vocab));
  manifest.set("feature_dim", std::to_string(spec.feature_dim));
  manifest.set("min_segment", std::to_string(spec.min_segment));
  manifest.set("max_segment", std::to_string(spec.max_segment));
  manifest.set("min_glosses", std::to_string(spec.min_glosses));
  manifest.set("max_glosses", std::to_string(spec.max_glosses));
  manifest.set("noise", std::to_string(spec.noise));
  manifest.set("reorder", spec.reorder ? "true" : "false");
  manifest.set("train_size", std::to_string(spec.train_size));
  manifest.set("dev_size", std::to_string(spec.dev_size));
  manifest.set("test_size", std::to_string(spec.test_size));
  manifest.set("seed", std::to_string(spec.seed));
  manifest.save(dir / "manifest.txt");

  return generated.corpus.train.size() + generated.corpus.dev.size() +
         generated.corpus.test.size();
}

}  // namespace gaslt::data
