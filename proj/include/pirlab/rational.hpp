#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pirlab {

// Exact rational arithmetic on int64 numerator / denominator, always stored
// in lowest terms with a positive denominator. Intermediate products go
// through __int128 and overflow past int64 throws.
class Rational
{
public:
  constexpr Rational()
    : num_(0)
    , den_(1)
  {
  }

  constexpr Rational(std::int64_t value)
    : num_(value)
    , den_(1)
  {
  }

  Rational(std::int64_t num, std::int64_t den)
  {
    if (den == 0) {
      throw std::invalid_argument("Rational: zero denominator");
    }
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    num_ = (g == 0) ? 0 : num / g;
    den_ = (g == 0) ? 1 : den / g;
  }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  friend Rational operator+(const Rational& a, const Rational& b)
  {
    const __int128 n = static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_;
    const __int128 d = static_cast<__int128>(a.den_) * b.den_;
    return from_wide(n, d);
  }

  friend Rational operator-(const Rational& a, const Rational& b) { return a + Rational(-b.num_, b.den_); }

  friend Rational operator-(const Rational& a) { return Rational(-a.num_, a.den_); }

  friend Rational operator*(const Rational& a, const Rational& b)
  {
    const __int128 n = static_cast<__int128>(a.num_) * b.num_;
    const __int128 d = static_cast<__int128>(a.den_) * b.den_;
    return from_wide(n, d);
  }

  friend Rational operator/(const Rational& a, const Rational& b)
  {
    if (b.num_ == 0) {
      throw std::domain_error("Rational: division by zero");
    }
    const __int128 n = static_cast<__int128>(a.num_) * b.den_;
    const __int128 d = static_cast<__int128>(a.den_) * b.num_;
    return from_wide(n, d);
  }

  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }
  Rational& operator/=(const Rational& o) { return *this = *this / o; }

  friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

  friend bool operator<(const Rational& a, const Rational& b)
  {
    return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
  }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

  Rational abs() const { return num_ < 0 ? Rational(-num_, den_) : *this; }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  // "n/d" in lowest terms, bare "n" for integers.
  std::string to_string() const
  {
    if (den_ == 1) {
      return std::to_string(num_);
    }
    return std::to_string(num_) + "/" + std::to_string(den_);
  }

  // Fixed-point decimal rendering with `places` digits after the point.
  std::string to_decimal(int places = 12) const
  {
    const bool neg = num_ < 0;
    __int128 n = neg ? -static_cast<__int128>(num_) : static_cast<__int128>(num_);
    const __int128 d = den_;
    std::string out = neg ? "-" : "";
    out += std::to_string(static_cast<std::int64_t>(n / d));
    out += '.';
    __int128 rem = n % d;
    for (int i = 0; i < places; ++i) {
      rem *= 10;
      out += static_cast<char>('0' + static_cast<int>(rem / d));
      rem %= d;
    }
    return out;
  }

private:
  static Rational from_wide(__int128 n, __int128 d)
  {
    if (d < 0) {
      n = -n;
      d = -d;
    }
    const __int128 g = gcd_wide(n < 0 ? -n : n, d);
    if (g != 0) {
      n /= g;
      d /= g;
    } else {
      d = 1;
    }
    constexpr __int128 lo = INT64_MIN;
    constexpr __int128 hi = INT64_MAX;
    if (n < lo || n > hi || d > hi) {
      throw std::overflow_error("Rational: value exceeds 64-bit range");
    }
    Rational r;
    r.num_ = static_cast<std::int64_t>(n);
    r.den_ = static_cast<std::int64_t>(d);
    return r;
  }

  static __int128 gcd_wide(__int128 a, __int128 b)
  {
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }

  std::int64_t num_;
  std::int64_t den_;
};

} // namespace pirlab
