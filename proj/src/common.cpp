#include "riverpath/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rp {

Error::Error(Errc code, const std::string& msg)
    : std::runtime_error(std::string(errc_name(code)) + ": " + msg),
      code_(code) {}

void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::bad_config:
    case Errc::bad_argument:
      return 2;
    case Errc::numerical_failure:
    case Errc::rank_deficient:
      return 4;
    default:
      return 3;
  }
}

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::bad_config: return "bad_config";
    case Errc::bad_argument: return "bad_argument";
    case Errc::io_failure: return "io_failure";
    case Errc::malformed_header: return "malformed_header";
    case Errc::malformed_csv: return "malformed_csv";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::nonfinite_value: return "nonfinite_value";
    case Errc::axis_not_increasing: return "axis_not_increasing";
    case Errc::duplicate_sample: return "duplicate_sample";
    case Errc::unknown_site: return "unknown_site";
    case Errc::duplicate_name: return "duplicate_name";
    case Errc::bad_timestamp: return "bad_timestamp";
    case Errc::empty_input: return "empty_input";
    case Errc::value_out_of_range: return "value_out_of_range";
    case Errc::missing_flow_model: return "missing_flow_model";
    case Errc::underdetermined_fit: return "underdetermined_fit";
    case Errc::zero_variance: return "zero_variance";
    case Errc::invalid_path_spec: return "invalid_path_spec";
    case Errc::inconsistent_windows: return "inconsistent_windows";
    case Errc::zero_standard: return "zero_standard";
    case Errc::numerical_failure: return "numerical_failure";
    case Errc::rank_deficient: return "rank_deficient";
  }
  return "unknown";
}

// ---- rng ----

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (have_cached_) {
    have_cached_ = false;
    return cached_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  cached_ = r * std::sin(a);
  have_cached_ = true;
  return r * std::cos(a);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) fail(Errc::bad_argument, "uniform_int: empty range");
  std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1u;
  if (span == 0) return static_cast<std::int64_t>(next_u64());  // full range
  std::uint64_t limit = ~0ull - (~0ull % span);
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // one splitmix step over a combined state; cheap and well spread
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1u);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ---- text / numbers ----

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const char* what) {
  s = {s.data(), s.size()};
  std::string t = trim(s);
  if (t.empty()) fail(Errc::malformed_csv, std::string(what) + ": empty number");
  double v = 0.0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    fail(Errc::malformed_csv, std::string(what) + ": bad number '" + t + "'");
  return v;
}

std::int64_t parse_int(std::string_view s, const char* what) {
  std::string t = trim(s);
  if (t.empty()) fail(Errc::malformed_csv, std::string(what) + ": empty integer");
  std::int64_t v = 0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    fail(Errc::malformed_csv, std::string(what) + ": bad integer '" + t + "'");
  return v;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == delim) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(Errc::io_failure, "read failed on " + path);
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "cannot create " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(Errc::io_failure, "write failed on " + path);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::string text = read_text_file(path);
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      std::string_view line(text.data() + start, i - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!trim(line).empty()) {
        auto cells = split(line, ',');
        for (auto& c : cells) c = trim(c);
        rows.push_back(std::move(cells));
      }
      start = i + 1;
    }
  }
  return rows;
}

// ---- timestamps ----

namespace {

// days since 1970-01-01 for a civil date (proleptic Gregorian)
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

bool is_leap(std::int64_t y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

unsigned days_in_month(std::int64_t y, unsigned m) {
  static const unsigned n[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return n[m - 1];
}

int two_digits(const std::string& s, std::size_t pos) {
  char a = s[pos], b = s[pos + 1];
  if (a < '0' || a > '9' || b < '0' || b > '9') return -1;
  return (a - '0') * 10 + (b - '0');
}

}  // namespace

std::int64_t parse_iso8601_utc(const std::string& s) {
  // fixed layout: 2013-05-14T06:00:00Z
  if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' ||
      s[13] != ':' || s[16] != ':' || s[19] != 'Z')
    fail(Errc::bad_timestamp, "expected YYYY-MM-DDTHH:MM:SSZ, got '" + s + "'");
  for (int i : {0, 1, 2, 3}) {
    if (s[i] < '0' || s[i] > '9')
      fail(Errc::bad_timestamp, "bad year in '" + s + "'");
  }
  std::int64_t year = (s[0] - '0') * 1000 + (s[1] - '0') * 100 +
                      (s[2] - '0') * 10 + (s[3] - '0');
  int month = two_digits(s, 5), day = two_digits(s, 8);
  int hh = two_digits(s, 11), mm = two_digits(s, 14), ss = two_digits(s, 17);
  if (month < 1 || month > 12 || day < 1 || hh < 0 || mm < 0 || ss < 0 ||
      hh > 23 || mm > 59 || ss > 60)
    fail(Errc::bad_timestamp, "bad field in '" + s + "'");
  if (static_cast<unsigned>(day) > days_in_month(year, month))
    fail(Errc::bad_timestamp, "bad day of month in '" + s + "'");
  return days_from_civil(year, month, day) * 86400 + hh * 3600 + mm * 60 + ss;
}

std::string format_iso8601_utc(std::int64_t t) {
  std::int64_t days = t / 86400;
  std::int64_t sod = t % 86400;
  if (sod < 0) {
    sod += 86400;
    days -= 1;
  }
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  if (y < 0 || y > 9999)
    fail(Errc::bad_timestamp, "timestamp outside 4-digit-year range");
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(y), m, d,
                static_cast<long long>(sod / 3600),
                static_cast<long long>((sod / 60) % 60),
                static_cast<long long>(sod % 60));
  return std::string(buf);
}

// ---- stats ----

double pearson_or_zero(const double* x, const double* y, int n) {
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double pearson_or_zero(const Vec& x, const Vec& y) {
  if (x.size() != y.size())
    fail(Errc::dimension_mismatch, "pearson: length mismatch");
  return pearson_or_zero(x.data(), y.data(), static_cast<int>(x.size()));
}

}  // namespace rp
