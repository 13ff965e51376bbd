#include "gaslt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <random>
#include <sstream>

#include "gaslt/attention.hpp"
#include "gaslt/errors.hpp"
#include "gaslt/tensor.hpp"

namespace gaslt::bench {

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> values(rows * cols);
  for (double& v : values) v = dist(rng);
  return Tensor({rows, cols}, std::move(values), false);
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  if (xs.size() % 2 == 1) return xs[mid];
  return 0.5 * (xs[mid - 1] + xs[mid]);
}

}  // namespace

std::vector<BenchRow> run_bench(const std::vector<std::size_t>& t_values,
                                int window, std::size_t d,
                                const std::vector<std::string>& variants,
                                int repeats, std::uint64_t seed) {
  if (t_values.empty()) throw ConfigError("bench needs at least one T value");
  if (window < 1) throw ConfigError("bench window must be >= 1");
  if (d < 1) throw ConfigError("bench dim must be >= 1");
  if (repeats < 1) throw ConfigError("bench repeats must be >= 1");
  if (variants.empty())
    throw ConfigError("bench needs at least one variant");
  for (const std::string& v : variants) {
    if (v != "gloss" && v != "self")
      throw ConfigError("unknown bench variant '" + v +
                        "' (expected gloss or self)");
  }
  for (std::size_t t : t_values) {
    if (t < 2 * static_cast<std::size_t>(window))
      throw ConfigError("bench T=" + std::to_string(t) +
                        " is below 2*window=" + std::to_string(2 * window));
  }

  NoGradGuard guard;
  std::mt19937_64 rng(seed);
  attention::HeadParams params;
  params.w_q = random_matrix(d, d, rng);
  params.w_k = random_matrix(d, d, rng);
  params.w_v = random_matrix(d, d, rng);
  params.w_offset = random_matrix(static_cast<std::size_t>(window), d, rng);
  params.positions = window;

  std::vector<BenchRow> rows;
  for (std::size_t t : t_values) {
    // Same input for every variant at this T.
    std::mt19937_64 input_rng(seed ^ (0x517cc1b727220a95ULL * (t + 1)));
    const Tensor x = random_matrix(t, d, input_rng);
    for (const std::string& variant : variants) {
      auto forward = [&] {
        if (variant == "gloss") return attention::gloss_attention(x, params);
        return attention::self_attention(x, params);
      };
      forward();  // warm-up, excluded from timing
      attention::reset_score_eval_count();
      forward();
      const std::uint64_t evals = attention::score_eval_count();
      std::vector<double> times;
      times.reserve(static_cast<std::size_t>(repeats));
      for (int r = 0; r < repeats; ++r) {
        const auto start = std::chrono::steady_clock::now();
        forward();
        const auto stop = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(stop - start).count());
      }
      rows.push_back({variant, t, median(std::move(times)), evals});
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(9);
  out << "variant,frames,median_seconds,score_evals\n";
  for (const BenchRow& row : rows) {
    out << row.variant << ',' << row.frames << ',' << row.median_seconds
        << ',' << row.score_evals << '\n';
  }
  return out.str();
}

}  // namespace gaslt::bench
