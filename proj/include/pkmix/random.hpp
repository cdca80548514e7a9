// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace pkmix {

using Rng = std::mt19937_64;

// Uniform on the open interval (0, 1), 53 bits, identical on every platform.
inline double uniform01(Rng& rng) {
  for (;;) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

inline double standard_gumbel(Rng& rng) { return -std::log(-std::log(uniform01(rng))); }

// Index drawn with probability proportional to exp(log_w[i]) (Gumbel-max).
// Entries equal to -inf are never chosen.
inline std::size_t sample_log_categorical(std::span<const double> log_w, Rng& rng) {
  std::size_t best = 0;
  double best_v = -INFINITY;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    if (log_w[i] == -INFINITY) continue;
    const double v = log_w[i] + standard_gumbel(rng);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

}  // namespace pkmix
