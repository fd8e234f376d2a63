#pragma once

#include <cmath>
#include <vector>

#include "pb/path.hpp"
#include "pb/rng.hpp"

namespace pbt {

// Brownian-like sample path generated from the counter rng
inline pb::Path random_walk_path(std::uint64_t seed, std::uint64_t id,
                                 double horizon, std::size_t steps,
                                 double scale = 1.0, int dim = 1) {
  std::vector<double> times(steps + 1), values((steps + 1) * dim, 0.0);
  const double dt = horizon / static_cast<double>(steps);
  for (std::size_t k = 0; k <= steps; ++k)
    times[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  for (std::size_t k = 1; k <= steps; ++k)
    for (int c = 0; c < dim; ++c)
      values[k * dim + c] =
          values[(k - 1) * dim + c] +
          scale * std::sqrt(dt) *
              pb::rng::normal(seed, id, k, static_cast<std::uint64_t>(c));
  return pb::Path(dim, std::move(times), std::move(values));
}

// random-walk path rescaled to sit strictly inside the (alpha, mu) ball
inline pb::Path random_ball_path(std::uint64_t seed, std::uint64_t id,
                                 double horizon, std::size_t steps,
                                 double alpha, double mu, int dim = 1) {
  pb::Path w = random_walk_path(seed, id, horizon, steps, 1.0, dim);
  const double mod = pb::holder_modulus(w, alpha);
  const double frac = 0.3 + 0.65 * pb::rng::uniform(seed, id, 0, 777);
  const double s = mod > 0.0 ? frac * mu / mod : 1.0;
  std::vector<double> times(w.times().begin(), w.times().end());
  std::vector<double> values(w.raw_values().begin(), w.raw_values().end());
  for (double& v : values) v *= s;
  return pb::Path(dim, std::move(times), std::move(values));
}

}  // namespace pbt
