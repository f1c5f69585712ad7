#pragma once

// Shared domain vocabulary: AS numbers, IPv4 addresses and prefixes,
// AS-level paths, UTC timestamps, and the error taxonomy used by the
// parsers and analyses.

#include <charconv>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cipollino {

using AsNumber = std::uint32_t;  // valid AS numbers are > 0
using AsSet = std::set<AsNumber>;
using AsPath = std::vector<AsNumber>;  // ordered hops, loop-free
using PathSet = std::set<AsPath>;
using Timestamp = std::int64_t;  // seconds since the Unix epoch, UTC

// Input rejected while reading a byte stream; carries the 1-based line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that contradicts itself (duplicate edge with a
// different relationship, duplicate prefix with a different origin, ...).
class ConsistencyError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structural violation inside one record set (cycle in a destination
// graph, duplicate relay fingerprint, ...).
class IntegrityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ArgumentError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Query names an AS unknown to the loaded topology.
class LookupError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// No exit relay can carry the requested destination.
class NoExitError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exposure sets cannot be established; callers treat the circuit as unsafe.
class ExposureError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class SelectionError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::optional<std::uint64_t> parse_u64(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::uint64_t value = 0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

}  // namespace detail

inline std::optional<AsNumber> parse_asn(std::string_view s) {
  auto v = detail::parse_u64(s);
  if (!v || *v == 0 || *v > 0xFFFFFFFFull) return std::nullopt;
  return static_cast<AsNumber>(*v);
}

inline std::optional<std::uint32_t> parse_ipv4(std::string_view s) {
  std::uint32_t ip = 0;
  int octets = 0;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t dot = s.find('.', pos);
    std::string_view part =
        s.substr(pos, dot == std::string_view::npos ? s.size() - pos : dot - pos);
    auto v = detail::parse_u64(part);
    if (!v || *v > 255) return std::nullopt;
    ip = (ip << 8) | static_cast<std::uint32_t>(*v);
    ++octets;
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  if (octets != 4) return std::nullopt;
  return ip;
}

inline std::string format_ipv4(std::uint32_t ip) {
  return std::to_string((ip >> 24) & 0xFF) + "." + std::to_string((ip >> 16) & 0xFF) +
         "." + std::to_string((ip >> 8) & 0xFF) + "." + std::to_string(ip & 0xFF);
}

// IPv4 prefix in canonical form: host bits below the length are zero.
struct Prefix {
  std::uint32_t network = 0;
  int length = 0;

  std::uint32_t mask() const {
    return length == 0 ? 0u : ~std::uint32_t{0} << (32 - length);
  }
  bool contains(std::uint32_t ip) const { return (ip & mask()) == network; }
  // True when this prefix equals or encloses `other`.
  bool covers(const Prefix& other) const {
    return length <= other.length && contains(other.network);
  }
  std::string to_string() const {
    return format_ipv4(network) + "/" + std::to_string(length);
  }
  auto operator<=>(const Prefix&) const = default;
};

inline std::optional<Prefix> parse_prefix(std::string_view s) {
  std::size_t slash = s.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto net = parse_ipv4(s.substr(0, slash));
  auto len = detail::parse_u64(s.substr(slash + 1));
  if (!net || !len || *len > 32) return std::nullopt;
  Prefix p{*net, static_cast<int>(*len)};
  if ((*net & p.mask()) != *net) return std::nullopt;  // host bits must be zero
  return p;
}

// Minimal RFC3339 UTC parser, "YYYY-MM-DDTHH:MM:SSZ" only.
inline std::optional<Timestamp> parse_rfc3339_utc(std::string_view s) {
  if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' ||
      s[13] != ':' || s[16] != ':' || s[19] != 'Z')
    return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t n) -> std::optional<std::int64_t> {
    auto v = detail::parse_u64(s.substr(pos, n));
    if (!v) return std::nullopt;
    return static_cast<std::int64_t>(*v);
  };
  auto y = num(0, 4), mo = num(5, 2), d = num(8, 2);
  auto h = num(11, 2), mi = num(14, 2), sec = num(17, 2);
  if (!y || !mo || !d || !h || !mi || !sec) return std::nullopt;
  if (*mo < 1 || *mo > 12 || *d < 1 || *d > 31 || *h > 23 || *mi > 59 || *sec > 60)
    return std::nullopt;
  // Days-from-civil (Howard Hinnant's algorithm).
  std::int64_t yy = *y - (*mo <= 2);
  std::int64_t era = (yy >= 0 ? yy : yy - 399) / 400;
  std::int64_t yoe = yy - era * 400;
  std::int64_t doy = (153 * (*mo + (*mo > 2 ? -3 : 9)) + 2) / 5 + *d - 1;
  std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  std::int64_t days = era * 146097 + doe - 719468;
  return days * 86400 + *h * 3600 + *mi * 60 + *sec;
}

inline std::string format_rfc3339_utc(Timestamp t) {
  std::int64_t days = t / 86400;
  std::int64_t rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t z = days + 719468;
  std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  std::int64_t doe = z - era * 146097;
  std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  std::int64_t yy = yoe + era * 400;
  std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  std::int64_t mp = (5 * doy + 2) / 153;
  std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
  std::int64_t mo = mp + (mp < 10 ? 3 : -9);
  yy += (mo <= 2);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04lld-%02lld-%02lldT%02lld:%02lld:%02lldZ",
                static_cast<long long>(yy), static_cast<long long>(mo),
                static_cast<long long>(d), static_cast<long long>(rem / 3600),
                static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return std::string(buf);
}

}  // namespace cipollino
