#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace swp {

// Unsigned big integer, base 1e9 limbs. Candidate counts like 31^50 overflow
// every machine word, and they only ever cross module boundaries as strings,
// so a tiny multiply/compare/print type is all we need.
class BigUint {
public:
  BigUint() : limbs_{0} {}
  explicit BigUint(std::uint64_t v);

  static BigUint pow(std::uint64_t base, unsigned exp);

  BigUint& operator*=(const BigUint& o);
  BigUint operator*(const BigUint& o) const {
    BigUint r = *this;
    r *= o;
    return r;
  }

  bool operator==(const BigUint& o) const { return limbs_ == o.limbs_; }
  bool operator!=(const BigUint& o) const { return !(*this == o); }
  bool operator<(const BigUint& o) const;
  bool operator>(const BigUint& o) const { return o < *this; }

  std::string to_string() const;

private:
  void trim();
  std::vector<std::uint32_t> limbs_;  // little-endian, base 1e9
};

}  // namespace swp
