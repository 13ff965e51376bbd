#include "gaslt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "gaslt/errors.hpp"

namespace gaslt::metrics {

namespace {

// n-gram -> count, grams joined with an unprintable separator
std::unordered_map<std::string, int> ngram_counts(const TokenList& toks,
                                                  std::size_t n) {
  std::unordered_map<std::string, int> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += toks[i + j];
    }
    ++counts[key];
  }
  return counts;
}

std::size_t lcs_length(const TokenList& a, const TokenList& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

}  // namespace

std::size_t SimilarityMatrix::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return i;
  }
  throw ContractError("similarity matrix: unknown sample id '" + id + "'");
}

void validate_similarity(const SimilarityMatrix& s, double tol) {
  const std::size_t n = s.ids.size();
  if (s.values.rows != n || s.values.cols != n) {
    throw ContractError("similarity matrix: " + std::to_string(n) +
                        " ids but " + std::to_string(s.values.rows) + "x" +
                        std::to_string(s.values.cols) + " values");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::fabs(s.values.at(i, i) - 1.0) > tol) {
      throw ContractError("similarity matrix: diagonal entry " +
                          std::to_string(i) + " is not 1");
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double v = s.values.at(i, j);
      if (v < -1.0 - tol || v > 1.0 + tol) {
        throw ContractError("similarity matrix: entry out of [-1,1]");
      }
      if (std::fabs(v - s.values.at(j, i)) > tol) {
        throw ContractError("similarity matrix: asymmetric at (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

std::vector<double> bleu(const std::vector<TokenList>& hypotheses,
                         const std::vector<TokenList>& references, int n_max) {
  if (hypotheses.empty()) throw ContractError("bleu: empty corpus");
  if (hypotheses.size() != references.size()) {
    throw ContractError("bleu: " + std::to_string(hypotheses.size()) +
                        " hypotheses vs " + std::to_string(references.size()) +
                        " references");
  }
  if (n_max < 1) throw ConfigError("bleu: n_max must be >= 1");

  const auto un = static_cast<std::size_t>(n_max);
  std::vector<double> matched(un, 0.0), total(un, 0.0);
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const TokenList& hyp = hypotheses[s];
    const TokenList& ref = references[s];
    hyp_len += static_cast<double>(hyp.size());
    ref_len += static_cast<double>(ref.size());
    for (std::size_t n = 1; n <= un; ++n) {
      if (hyp.size() < n) continue;
      total[n - 1] += static_cast<double>(hyp.size() - n + 1);
      auto ref_counts = ngram_counts(ref, n);
      for (const auto& [gram, count] : ngram_counts(hyp, n)) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end())
          matched[n - 1] += std::min(count, it->second);
      }
    }
  }

  const double bp =
      hyp_len >= ref_len ? 1.0
      : hyp_len == 0.0   ? 0.0
                         : std::exp(1.0 - ref_len / hyp_len);
  std::vector<double> scores(un, 0.0);
  double log_sum = 0.0;
  bool dead = false;
  for (std::size_t n = 1; n <= un; ++n) {
    const double p =
        total[n - 1] > 0.0 ? matched[n - 1] / total[n - 1] : 0.0;
    if (p == 0.0) dead = true;  // no smoothing: a zero precision zeroes
    if (!dead) {                // this order and all higher ones
      log_sum += std::log(p);
      scores[n - 1] = bp * std::exp(log_sum / static_cast<double>(n));
    }
  }
  return scores;
}

double rouge_l(const TokenList& hypothesis, const TokenList& reference,
               double beta) {
  if (reference.empty()) throw ContractError("rouge_l: empty reference");
  if (hypothesis.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(hypothesis, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(hypothesis.size());
  const double r = lcs / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l_corpus(const std::vector<TokenList>& hypotheses,
                      const std::vector<TokenList>& references, double beta) {
  if (hypotheses.empty()) throw ContractError("rouge_l: empty corpus");
  if (hypotheses.size() != references.size()) {
    throw ContractError("rouge_l: hypothesis/reference count mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    acc += rouge_l(hypotheses[i], references[i], beta);
  return acc / static_cast<double>(hypotheses.size());
}

double asd(const DenseMatrix& a, const DenseMatrix& b) {
  const std::size_t n = a.rows;
  if (n < 2) throw ContractError("asd: need at least 2 sentences");
  if (a.cols != n || b.rows != n || b.cols != n) {
    throw ContractError("asd: shape mismatch, " + std::to_string(a.rows) +
                        "x" + std::to_string(a.cols) + " vs " +
                        std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      acc += std::fabs(a.at(i, j) - b.at(i, j));
    }
  }
  return acc / static_cast<double>(n * n - n);
}

double cad(const DenseMatrix& weights, double delta) {
  if (delta <= 0.0 || delta > 1.0) {
    throw ConfigError("cad: band fraction must be in (0, 1]");
  }
  const std::size_t tq = weights.rows, k = weights.cols;
  if (tq == 0 || k == 0) throw ContractError("cad: empty attention map");
  const double band = delta * static_cast<double>(k);
  double acc = 0.0;
  for (std::size_t t = 0; t < tq; ++t) {
    const double r =
        tq == 1 ? (static_cast<double>(k) - 1.0) / 2.0
                : static_cast<double>(t) * (static_cast<double>(k) - 1.0) /
                      (static_cast<double>(tq) - 1.0);
    for (std::size_t j = 0; j < k; ++j) {
      if (std::fabs(static_cast<double>(j) - r) <= band)
        acc += weights.at(t, j);
    }
  }
  return acc / static_cast<double>(tq);
}

double cad(const attention::AttentionMap& map, double delta) {
  return cad(map.key_space(), delta);
}

DenseMatrix embedding_similarity(const DenseMatrix& embeddings) {
  const std::size_t n = embeddings.rows, d = embeddings.cols;
  if (n == 0 || d == 0) throw ContractError("embedding_similarity: empty");
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c)
      acc += embeddings.at(i, c) * embeddings.at(i, c);
    norm[i] = std::sqrt(acc);
    if (norm[i] == 0.0) {
      throw ContractError("embedding_similarity: zero-norm row " +
                          std::to_string(i));
    }
  }
  DenseMatrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c)
        dot += embeddings.at(i, c) * embeddings.at(j, c);
      const double v = dot / (norm[i] * norm[j]);
      s.at(i, j) = v;
      s.at(j, i) = v;
    }
  }
  return s;
}

}  // namespace gaslt::metrics
