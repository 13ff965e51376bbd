#include "gaslt/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace gaslt::data {

namespace fs = std::filesystem;

void SyntheticSpec::validate() const {
  if (gloss_vocab == 0) throw ConfigError("spec: gloss vocabulary is empty");
  if (feature_dim == 0) throw ConfigError("spec: feature dim is zero");
  if (min_segment < 1 || min_segment > max_segment) {
    throw ConfigError("spec: segment length range [" +
                      std::to_string(min_segment) + ", " +
                      std::to_string(max_segment) +
                      "] must satisfy 1 <= min <= max");
  }
  if (min_glosses < 1 || min_glosses > max_glosses) {
    throw ConfigError("spec: sentence length range [" +
                      std::to_string(min_glosses) + ", " +
                      std::to_string(max_glosses) +
                      "] must satisfy 1 <= min <= max");
  }
  if (max_glosses > gloss_vocab) {
    throw ConfigError(
        "spec: sentences draw distinct glosses, so max sentence length " +
        std::to_string(max_glosses) + " needs a vocabulary of at least that "
        "size, got " + std::to_string(gloss_vocab));
  }
  if (noise < 0.0) throw ConfigError("spec: negative noise sigma");
  if (train_size == 0) throw ConfigError("spec: empty training split");
}

const std::vector<Sample>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "'");
}

// --- vocabulary ------------------------------------------------------------

namespace {
const char* kSpecials[] = {"<pad>", "<unk>", "<bos>", "<eos>"};
}

Vocabulary Vocabulary::build(const std::vector<Sample>& samples) {
  std::set<std::string> unique;
  for (const Sample& s : samples)
    unique.insert(s.words.begin(), s.words.end());
  Vocabulary v;
  for (const char* sp : kSpecials) v.words_.emplace_back(sp);
  for (const std::string& w : unique) v.words_.push_back(w);
  v.reindex();
  return v;
}

void Vocabulary::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < words_.size(); ++i)
    index_[words_[i]] = static_cast<int>(i);
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw ContractError("vocabulary: id " + std::to_string(id) +
                        " outside size " + std::to_string(words_.size()));
  }
  return words_[static_cast<std::size_t>(id)];
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size() + 2);
  ids.push_back(kBos);
  for (const std::string& w : words) ids.push_back(id(w));
  ids.push_back(kEos);
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out.push_back(word(id));
  }
  return out;
}

void Vocabulary::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const std::string& w : words_) out << w << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

Vocabulary Vocabulary::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) v.words_.push_back(line);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (v.words_.size() <= i || v.words_[i] != kSpecials[i]) {
      throw IoError(path.string() + ": not a vocabulary file (reserved " +
                    "tokens missing)");
    }
  }
  v.reindex();
  return v;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(std::move(tok));
  return out;
}

// --- similarity oracle -------------------------------------------------------

metrics::SimilarityMatrix similarity_oracle(
    const std::vector<std::string>& ids,
    const std::vector<std::vector<std::string>>& sentences) {
  const std::size_t n = ids.size();
  if (n != sentences.size()) {
    throw ContractError("similarity oracle: " + std::to_string(n) +
                        " ids vs " + std::to_string(sentences.size()) +
                        " sentences");
  }
  if (n < 2) throw ContractError("similarity oracle: need >= 2 sentences");

  // term-frequency vectors; empty sentences count one UNK token
  std::vector<std::unordered_map<std::string, double>> tf(n);
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (sentences[i].empty()) {
      tf[i]["<unk>"] = 1.0;
    } else {
      for (const std::string& w : sentences[i]) tf[i][w] += 1.0;
    }
    double acc = 0.0;
    for (const auto& [w, c] : tf[i]) acc += c * c;
    norm[i] = std::sqrt(acc);
  }

  metrics::SimilarityMatrix s;
  s.ids = ids;
  s.values = DenseMatrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s.values.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& small = tf[i].size() <= tf[j].size() ? tf[i] : tf[j];
      const auto& large = tf[i].size() <= tf[j].size() ? tf[j] : tf[i];
      double dot = 0.0;
      for (const auto& [w, c] : small) {
        auto it = large.find(w);
        if (it != large.end()) dot += c * it->second;
      }
      const double v = dot / (norm[i] * norm[j]);
      s.values.at(i, j) = v;
      s.values.at(j, i) = v;
    }
  }
  return s;
}

// --- feature files -----------------------------------------------------------

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
std::uint16_t take_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t take_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 4;

}  // namespace

void write_features(const fs::path& path, const FeatureSequence& seq) {
  if (seq.values.size() != seq.frames * seq.dim) {
    throw ContractError("write_features: " + std::to_string(seq.values.size()) +
                        " values for " + std::to_string(seq.frames) + "x" +
                        std::to_string(seq.dim));
  }
  for (float v : seq.values) {
    if (!std::isfinite(v)) {
      throw ContractError("write_features: non-finite value");
    }
  }
  std::string out;
  out.reserve(kHeaderBytes + seq.values.size() * 4);
  out += "GASL";
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(seq.frames));
  put_u32(out, static_cast<std::uint32_t>(seq.dim));
  for (float v : seq.values) put_u32(out, std::bit_cast<std::uint32_t>(v));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

FeatureSequence read_features(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::string raw((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());

  if (raw.size() < 4 || raw.compare(0, 4, "GASL") != 0) {
    throw IoError(path.string() + ": bad magic, not a feature file");
  }
  if (raw.size() < kHeaderBytes) {
    throw IoError(path.string() + ": truncated header, expected " +
                  std::to_string(kHeaderBytes) + " bytes, got " +
                  std::to_string(raw.size()));
  }
  const std::uint16_t version = take_u16(p + 4);
  if (version != 1) {
    throw IoError(path.string() + ": unsupported version " +
                  std::to_string(version));
  }
  FeatureSequence seq;
  seq.frames = take_u32(p + 6);
  seq.dim = take_u32(p + 10);
  const std::size_t expect = kHeaderBytes + seq.frames * seq.dim * 4;
  if (raw.size() < expect) {
    throw IoError(path.string() + ": truncated payload, expected " +
                  std::to_string(expect) + " bytes, got " +
                  std::to_string(raw.size()));
  }
  if (raw.size() > expect) {
    throw IoError(path.string() + ": trailing data, expected " +
                  std::to_string(expect) + " bytes, got " +
                  std::to_string(raw.size()));
  }
  seq.values.resize(seq.frames * seq.dim);
  for (std::size_t i = 0; i < seq.values.size(); ++i) {
    seq.values[i] =
        std::bit_cast<float>(take_u32(p + kHeaderBytes + 4 * i));
  }
  return seq;
}

// --- similarity CSV ----------------------------------------------------------

void write_similarity_csv(const fs::path& path,
                          const metrics::SimilarityMatrix& s) {
  std::ostringstream out;
  out.precision(17);
  out << "id";
  for (const std::string& id : s.ids) out << "," << id;
  out << "\n";
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    out << s.ids[i];
    for (std::size_t j = 0; j < s.ids.size(); ++j)
      out << "," << s.values.at(i, j);
    out << "\n";
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << out.str();
  if (!f) throw IoError("failed writing " + path.string());
}

metrics::SimilarityMatrix read_similarity_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line) || line.rfind("id,", 0) != 0) {
    throw IoError(path.string() + ": missing similarity header");
  }
  metrics::SimilarityMatrix s;
  std::size_t pos = 3;
  while (pos <= line.size()) {
    const std::size_t comma = line.find(',', pos);
    s.ids.push_back(line.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos));
    pos = comma == std::string::npos ? line.size() + 1 : comma + 1;
  }
  const std::size_t n = s.ids.size();
  s.values = DenseMatrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(f, line)) {
      throw IoError(path.string() + ": truncated after " + std::to_string(i) +
                    " rows, expected " + std::to_string(n));
    }
    std::istringstream row(line);
    std::string cell;
    if (!std::getline(row, cell, ',') || cell != s.ids[i]) {
      throw IoError(path.string() + ": row " + std::to_string(i) +
                    " is keyed '" + cell + "', expected '" + s.ids[i] + "'");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::getline(row, cell, ',')) {
        throw IoError(path.string() + ": row " + std::to_string(i) +
                      " has fewer than " + std::to_string(n) + " values");
      }
      s.values.at(i, j) = std::stod(cell);
    }
  }
  return s;
}

// --- batching ----------------------------------------------------------------

std::vector<Batch> batch_and_mask(const std::vector<Sample>& samples,
                                  const Vocabulary& vocab,
                                  std::size_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch_and_mask: batch size 0");
  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, samples.size());
    Batch b;
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& s = samples[i];
      b.ids.push_back(s.id);
      b.frame_lens.push_back(s.features.frames);
      b.tokens.push_back(vocab.encode(s.words));
      b.token_lens.push_back(b.tokens.back().size());
      b.frame_len = std::max(b.frame_len, s.features.frames);
      b.token_len = std::max(b.token_len, b.tokens.back().size());
    }
    const std::size_t count = end - begin;
    b.frame_mask.assign(count * b.frame_len, 0);
    b.token_mask.assign(count * b.token_len, 0);
    for (std::size_t i = 0; i < count; ++i) {
      const Sample& s = samples[begin + i];
      FeatureSequence padded;
      padded.frames = b.frame_len;
      padded.dim = s.features.dim;
      padded.values.assign(b.frame_len * padded.dim, 0.0f);
      std::copy(s.features.values.begin(), s.features.values.end(),
                padded.values.begin());
      b.features.push_back(std::move(padded));
      b.tokens[i].resize(b.token_len, Vocabulary::kPad);
      for (std::size_t t = 0; t < b.frame_lens[i]; ++t)
        b.frame_mask[i * b.frame_len + t] = 1;
      for (std::size_t t = 0; t < b.token_lens[i]; ++t)
        b.token_mask[i * b.token_len + t] = 1;
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

// --- on-disk corpus ------------------------------------------------------

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

std::vector<Sample> load_split(const fs::path& dir, const std::string& name) {
  const auto ids = read_lines(dir / (name + ".ids"));
  const auto text = read_lines(dir / (name + ".text"));
  if (ids.size() != text.size()) {
    throw IoError(dir.string() + ": " + name + " has " +
                  std::to_string(ids.size()) + " ids but " +
                  std::to_string(text.size()) + " sentences");
  }
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Sample s;
    s.id = ids[i];
    s.words = tokenize(text[i]);
    s.features = read_features(dir / "features" / (s.id + ".gasl"));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Corpus load_corpus(const fs::path& dir) {
  Corpus c;
  c.train = load_split(dir, "train");
  c.dev = load_split(dir, "dev");
  c.test = load_split(dir, "test");
  return c;
}

metrics::SimilarityMatrix load_similarity(const fs::path& dir,
                                          const std::string& split) {
  return read_similarity_csv(dir / ("similarity." + split + ".csv"));
}

}  // namespace gaslt::data
