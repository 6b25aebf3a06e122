#pragma once

#include <span>
#include <vector>

#include "hsde/random.hpp"

namespace hsde {

enum class ResamplingScheme { systematic, multinomial };

/// 1 / sum(w^2) for normalised weights.
double effective_sample_size(std::span<const double> weights);

/// Ancestor indices, one per offspring (size == weights.size()). Weights must
/// sum to 1 within 1e-6; throws std::logic_error otherwise.
std::vector<int> resample_indices(std::span<const double> weights, ResamplingScheme scheme,
                                  Rng& rng);

}  // namespace hsde
