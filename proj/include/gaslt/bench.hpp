#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gaslt::bench {

// One measurement: a single attention head run forward over `frames` rows.
struct BenchRow {
  std::string variant;            // "gloss" or "self"
  std::size_t frames = 0;         // T
  double median_seconds = 0.0;    // median over `repeats` forward passes
  std::uint64_t score_evals = 0;  // exact score evaluations in one forward
};

// Times each variant at each T on seeded standard-normal inputs (T x d),
// gradients off, single thread. `window` is the gloss window N. Both
// variants at a given T see the same input matrix.
std::vector<BenchRow> run_bench(const std::vector<std::size_t>& t_values,
                                int window, std::size_t d,
                                const std::vector<std::string>& variants,
                                int repeats, std::uint64_t seed);

// CSV with header: variant,frames,median_seconds,score_evals
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace gaslt::bench
