// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <array>
#include <cstdint>

namespace pkmix {

// Exact running sum of doubles.  Every finite double is a multiple of
// 2^-1074 below 2^1024, so the sum lives in a fixed-point register of
// 32-bit digits; add and subtract are exact and order independent, and
// adding then removing a value restores the register bit for bit.
class ExactSum {
 public:
  void add(double x) { accumulate(x, false); }
  void subtract(double x) { accumulate(x, true); }

  // Nearest-ish double to the exact sum (within one ulp); a pure function of
  // the exact value.
  double value() const;

  bool is_zero() const;
  bool operator==(const ExactSum& o) const;

 private:
  static constexpr int kLimbs = 68;  // 68 * 32 bits > 1074 + 1024 + headroom
  void accumulate(double x, bool negate);
  void normalize() const;
  double compute_value() const;

  // Digits in base 2^32, least significant first, kept in int64 so carries
  // can be deferred.
  mutable std::array<std::int64_t, kLimbs> limb_{};
  mutable int pending_ = 0;
  mutable double cached_ = 0.0;
  mutable bool cache_valid_ = true;
};

}  // namespace pkmix
