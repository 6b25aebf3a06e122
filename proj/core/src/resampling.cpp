#include "hsde/resampling.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace hsde {

double effective_sample_size(std::span<const double> weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return 1.0 / sq;
}

std::vector<int> resample_indices(std::span<const double> weights, ResamplingScheme scheme,
                                  Rng& rng) {
  const int n = static_cast<int>(weights.size());
  if (n == 0) throw std::logic_error("cannot resample an empty ensemble");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(std::abs(total - 1.0) <= 1e-6)) {
    throw std::logic_error("resampling weights must be normalised (sum = " + std::to_string(total) + ")");
  }
  std::vector<int> out(n);
  if (scheme == ResamplingScheme::multinomial) {
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    for (auto& i : out) i = pick(rng);
    return out;
  }
  const double step = 1.0 / n;
  const double start = rng.uniform() * step;
  double cum = weights[0];
  int i = 0;
  for (int j = 0; j < n; ++j) {
    const double pos = start + j * step;
    while (pos > cum && i < n - 1) cum += weights[++i];
    out[j] = i;
  }
  return out;
}

}  // namespace hsde
