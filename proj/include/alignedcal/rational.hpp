#pragma once

#include "alignedcal/core.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>

namespace alignedcal {

/// Parses "p/q", integers and plain or scientific decimals exactly.
inline Rational parse_rational(std::string_view text) {
  std::string s(text);
  auto trim = [](std::string& str) {
    while (!str.empty() && std::isspace(static_cast<unsigned char>(str.front()))) str.erase(str.begin());
    while (!str.empty() && std::isspace(static_cast<unsigned char>(str.back()))) str.pop_back();
  };
  trim(s);
  if (s.empty()) throw InvalidArgument("empty rational literal");
  if (auto slash = s.find('/'); slash != std::string::npos) {
    std::string num = s.substr(0, slash), den = s.substr(slash + 1);
    trim(num);
    trim(den);
    auto strip_zeros = [](std::string& str) {
      const std::size_t sign = (!str.empty() && (str[0] == '-' || str[0] == '+')) ? 1 : 0;
      while (str.size() > sign + 1 && str[sign] == '0') str.erase(sign, 1);
    };
    strip_zeros(num);
    strip_zeros(den);
    try {
      boost::multiprecision::cpp_int n(num), d(den);
      if (d == 0) throw InvalidArgument("zero denominator in '" + s + "'");
      return Rational(n, d);
    } catch (const std::runtime_error&) {
      throw InvalidArgument("malformed rational literal '" + s + "'");
    }
  }
  bool negative = false;
  std::size_t pos = 0;
  if (s[pos] == '+' || s[pos] == '-') negative = s[pos++] == '-';
  std::string digits;
  long exponent = 0;
  bool seen_point = false, seen_digit = false;
  for (; pos < s.size(); ++pos) {
    const char ch = s[pos];
    if (std::isdigit(static_cast<unsigned char>(ch))) {
      digits.push_back(ch);
      seen_digit = true;
      if (seen_point) --exponent;
    } else if (ch == '.' && !seen_point) {
      seen_point = true;
    } else if (ch == 'e' || ch == 'E') {
      long e = 0;
      const char* first = s.data() + pos + 1;
      const char* last = s.data() + s.size();
      if (first < last && *first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, e);
      if (ec != std::errc() || ptr != last) throw InvalidArgument("malformed exponent in '" + s + "'");
      exponent += e;
      pos = s.size();
      break;
    } else {
      throw InvalidArgument("malformed rational literal '" + s + "'");
    }
  }
  if (!seen_digit) throw InvalidArgument("malformed rational literal '" + s + "'");
  // cpp_int reads a leading zero as an octal prefix.
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
  boost::multiprecision::cpp_int mantissa(digits);
  boost::multiprecision::cpp_int scale = boost::multiprecision::pow(boost::multiprecision::cpp_int(10),
                                                                    static_cast<unsigned>(std::labs(exponent)));
  Rational value = exponent >= 0 ? Rational(mantissa * scale) : Rational(mantissa, scale);
  return negative ? Rational(-value) : value;
}

/// Shortest round-trip decimal of a double, e.g. 0.2 -> "0.2".
inline std::string shortest_decimal(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Rational whose decimal expansion is the shortest representation of v,
/// so user-facing values such as 0.2 become exactly 1/5.
inline Rational rational_from_double(double v) {
  if (!std::isfinite(v)) throw InvalidArgument("non-finite value cannot be made rational");
  return parse_rational(shortest_decimal(v));
}

template <typename T>
T scalar_from_double(double v) {
  if constexpr (std::is_same_v<T, Rational>) {
    return rational_from_double(v);
  } else {
    return static_cast<T>(v);
  }
}

inline std::string to_string(const Rational& r) {
  std::ostringstream oss;
  oss << r;
  return oss.str();
}

}  // namespace alignedcal
