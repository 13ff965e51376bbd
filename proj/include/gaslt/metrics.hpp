#pragma once

#include <string>
#include <vector>

#include "gaslt/attention.hpp"
#include "gaslt/matrix.hpp"

namespace gaslt::metrics {

using TokenList = std::vector<std::string>;

// Pairwise sentence similarities with the sample ids they are keyed by.
struct SimilarityMatrix {
  std::vector<std::string> ids;
  DenseMatrix values;  // ids.size() x ids.size()

  std::size_t size() const { return ids.size(); }
  // index of an id; throws ContractError when absent
  std::size_t index_of(const std::string& id) const;
};

// Throws ContractError unless values is square over ids, symmetric within
// tol, unit diagonal, entries in [-1, 1].
void validate_similarity(const SimilarityMatrix& s, double tol = 1e-9);

// Corpus-level BLEU-1..n_max: modified n-gram precision with uniform 1/n
// weights and brevity penalty, no smoothing. Scores on [0, 1].
std::vector<double> bleu(const std::vector<TokenList>& hypotheses,
                         const std::vector<TokenList>& references,
                         int n_max = 4);

// LCS-based F score, beta weighting recall: F = (1+b^2)PR / (R + b^2 P).
double rouge_l(const TokenList& hypothesis, const TokenList& reference,
               double beta = 1.2);
double rouge_l_corpus(const std::vector<TokenList>& hypotheses,
                      const std::vector<TokenList>& references,
                      double beta = 1.2);

// Average absolute off-diagonal gap between two similarity matrices:
// (1/(n^2-n)) sum_{i != j} |a[i,j] - b[i,j]|.
double asd(const DenseMatrix& a, const DenseMatrix& b);

// Banded diagonal mass of an attention map. Gloss maps are first expanded
// onto the key axis (see AttentionMap::key_space). With K columns, query t's
// diagonal anchor is r(t) = t (K-1)/(Tq-1) (center column when Tq == 1) and
// the band keeps columns with |j - r(t)| <= delta * K.
double cad(const attention::AttentionMap& map, double delta = 0.1);
double cad(const DenseMatrix& weights, double delta = 0.1);

// S-hat[i,j] = cos(row_i, row_j); errors on zero-norm rows.
DenseMatrix embedding_similarity(const DenseMatrix& embeddings);

}  // namespace gaslt::metrics
