#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "elastic/error.hpp"

namespace elastic {

/// Node-count set such as {1, 2, 4, 8, 16}: strictly increasing powers of two.
using LegalSet = std::vector<int>;

inline bool is_power_of_two(int k) { return k > 0 && std::has_single_bit(static_cast<unsigned>(k)); }

inline int exact_log2(int k) { return std::bit_width(static_cast<unsigned>(k)) - 1; }

inline LegalSet default_legal_set() { return {1, 2, 4, 8, 16}; }

/// Powers of two from 1 up to and including `max_nodes`.
inline LegalSet powers_of_two_up_to(int max_nodes) {
  LegalSet out;
  for (int k = 1; k <= max_nodes && k > 0; k *= 2) out.push_back(k);
  return out;
}

inline void validate_legal_set(std::span<const int> legal) {
  if (legal.empty() || legal.front() != 1)
    throw Error(ErrorKind::config, "legal node set must start at 1");
  for (std::size_t i = 0; i < legal.size(); ++i) {
    if (!is_power_of_two(legal[i]))
      throw Error(ErrorKind::config,
                  "legal node set contains non power of two " + std::to_string(legal[i]));
    if (i > 0 && legal[i] <= legal[i - 1])
      throw Error(ErrorKind::config, "legal node set must be strictly increasing");
  }
  if (legal.back() > (1 << 20))
    throw Error(ErrorKind::config, "legal node set exceeds 2^20 nodes");
}

/// Speed retained per doubling of the node count, kept as an exact ratio so
/// that speeds are correctly rounded: speed(16) == 4096.0 / 625.0 == 6.5536.
struct Attenuation {
  std::uint32_t numerator = 4;
  std::uint32_t denominator = 5;

  double value() const { return static_cast<double>(numerator) / denominator; }

  /// Parses a decimal such as "0.8" into 4/5.
  static Attenuation from_decimal(const std::string& text) {
    std::uint64_t num = 0, den = 1;
    bool seen_point = false, any_digit = false;
    for (char c : text) {
      if (c == '.') {
        if (seen_point) throw Error(ErrorKind::parse, "bad attenuation '" + text + "'");
        seen_point = true;
      } else if (c >= '0' && c <= '9') {
        any_digit = true;
        num = num * 10 + static_cast<std::uint64_t>(c - '0');
        if (seen_point) den *= 10;
        if (den > 1000000) throw Error(ErrorKind::parse, "attenuation has too many digits");
      } else {
        throw Error(ErrorKind::parse, "bad attenuation '" + text + "'");
      }
    }
    if (!any_digit) throw Error(ErrorKind::parse, "bad attenuation '" + text + "'");
    const std::uint64_t g = std::gcd(num, den);
    Attenuation a{static_cast<std::uint32_t>(num / g), static_cast<std::uint32_t>(den / g)};
    a.validate();
    return a;
  }

  // Strictly increasing speed requires base > 1/2; concavity requires base <= 1.
  void validate() const {
    if (denominator == 0 || 2ULL * numerator <= denominator || numerator > denominator)
      throw Error(ErrorKind::config, "attenuation base must lie in (0.5, 1]");
  }

  friend bool operator==(const Attenuation&, const Attenuation&) = default;
};

/// Node count -> training speed (node-hours of 1-node work per hour):
/// speed(k) = k * base^log2(k). speed(0) is defined as 0 for idle jobs.
class SpeedCurve {
 public:
  explicit SpeedCurve(LegalSet legal = default_legal_set(), Attenuation base = {})
      : legal_(std::move(legal)), base_(base) {
    validate_legal_set(legal_);
    base_.validate();
    speeds_.reserve(legal_.size());
    for (int k : legal_) speeds_.push_back(exact_speed(k, base_));
  }

  const LegalSet& legal_set() const { return legal_; }
  Attenuation attenuation() const { return base_; }

  bool contains(int k) const { return std::binary_search(legal_.begin(), legal_.end(), k); }

  double speed(int k) const {
    if (k == 0) return 0.0;
    auto it = std::lower_bound(legal_.begin(), legal_.end(), k);
    if (it == legal_.end() || *it != k)
      throw Error(ErrorKind::domain, "node count " + std::to_string(k) + " is not in the legal set");
    return speeds_[static_cast<std::size_t>(it - legal_.begin())];
  }

  /// Work served over one planning step of `step_hours` hours.
  double step_progress(int k, double step_hours) const { return step_hours * speed(k); }

  /// Work served per simulated second.
  double per_second_progress(int k) const { return speed(k) / 3600.0; }

  /// k * (num/den)^m evaluated as one division of exact integers.
  static double exact_speed(int k, Attenuation base) {
    if (!is_power_of_two(k))
      throw Error(ErrorKind::domain, "node count " + std::to_string(k) + " is not a power of two");
    const int m = exact_log2(k);
    long double num = k, den = 1;
    for (int i = 0; i < m; ++i) {
      num *= base.numerator;
      den *= base.denominator;
    }
    // Both operands are exact integers below 2^64 for k <= 2^20 and a
    // single-digit ratio; the quotient is rounded once.
    if (num < 0x1.0p63L && den < 0x1.0p63L)
      return static_cast<double>(static_cast<std::uint64_t>(num)) /
             static_cast<double>(static_cast<std::uint64_t>(den));
    return static_cast<double>(num / den);
  }

 private:
  LegalSet legal_;
  Attenuation base_;
  std::vector<double> speeds_;
};

}  // namespace elastic
