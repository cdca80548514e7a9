// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/exact_sum.hpp"

#include <cmath>

#include "pkmix/errors.hpp"

namespace pkmix {

namespace {
constexpr int kBias = 1074;  // bit 0 of the register is 2^-1074
constexpr int kNormalizeEvery = 1 << 30;
}  // namespace

void ExactSum::accumulate(double x, bool negate) {
  if (x == 0.0) return;
  if (!std::isfinite(x)) throw DomainError("ExactSum: non-finite value");
  cache_valid_ = false;
  int e = 0;
  const double m = std::frexp(std::abs(x), &e);
  auto mant = static_cast<std::uint64_t>(std::ldexp(m, 53));
  int pos = e - 53 + kBias;
  while (pos < 0) {  // subnormal inputs carry trailing zeros
    mant >>= 1;
    ++pos;
  }
  const int q = pos / 32;
  const unsigned __int128 shifted = static_cast<unsigned __int128>(mant) << (pos % 32);
  const bool minus = (x < 0.0) != negate;
  for (int k = 0; k < 3; ++k) {
    const auto digit = static_cast<std::int64_t>((shifted >> (32 * k)) & 0xffffffffu);
    limb_[static_cast<std::size_t>(q + k)] += minus ? -digit : digit;
  }
  if (++pending_ >= kNormalizeEvery) normalize();
}

void ExactSum::normalize() const {
  for (int i = 0; i + 1 < kLimbs; ++i) {
    auto& l = limb_[static_cast<std::size_t>(i)];
    const std::int64_t carry = l >> 32;  // floor division
    l -= carry * (std::int64_t{1} << 32);
    limb_[static_cast<std::size_t>(i + 1)] += carry;
  }
  pending_ = 0;
}

double ExactSum::value() const {
  if (cache_valid_) return cached_;
  cached_ = compute_value();
  cache_valid_ = true;
  return cached_;
}

double ExactSum::compute_value() const {
  normalize();
  std::array<std::int64_t, kLimbs> mag = limb_;
  const bool negative = mag[kLimbs - 1] < 0;
  if (negative) {
    for (auto& l : mag) l = -l;
    for (int i = 0; i + 1 < kLimbs; ++i) {
      auto& l = mag[static_cast<std::size_t>(i)];
      const std::int64_t carry = l >> 32;
      l -= carry * (std::int64_t{1} << 32);
      mag[static_cast<std::size_t>(i + 1)] += carry;
    }
  }
  int h = kLimbs - 1;
  while (h >= 0 && mag[static_cast<std::size_t>(h)] == 0) --h;
  if (h < 0) return 0.0;
  unsigned __int128 top = 0;
  const int lo = h >= 2 ? h - 2 : 0;
  for (int i = h; i >= lo; --i) {
    top = (top << 32) | static_cast<std::uint64_t>(mag[static_cast<std::size_t>(i)]);
  }
  bool sticky = false;
  for (int i = lo - 1; i >= 0; --i) sticky |= mag[static_cast<std::size_t>(i)] != 0;
  if (sticky) top |= 1;  // breaks round-half-even ties the right way
  const double v = std::ldexp(static_cast<double>(top), 32 * lo - kBias);
  return negative ? -v : v;
}

bool ExactSum::is_zero() const {
  normalize();
  for (auto l : limb_) {
    if (l != 0) return false;
  }
  return true;
}

bool ExactSum::operator==(const ExactSum& o) const {
  normalize();
  o.normalize();
  return limb_ == o.limb_;
}

}  // namespace pkmix
