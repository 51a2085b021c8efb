// Shared plumbing: error codes, deterministic RNG, text/number IO, small stats.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Errc {
  // configuration / usage
  bad_config,
  bad_argument,
  // data
  io_failure,
  malformed_header,
  malformed_csv,
  dimension_mismatch,
  nonfinite_value,
  axis_not_increasing,
  duplicate_sample,
  unknown_site,
  duplicate_name,
  bad_timestamp,
  empty_input,
  value_out_of_range,
  missing_flow_model,
  underdetermined_fit,
  zero_variance,
  invalid_path_spec,
  inconsistent_windows,
  zero_standard,
  // numerical
  numerical_failure,
  rank_deficient,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg);
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& msg);

// Process exit code category: 2 config, 3 data, 4 numerical.
int exit_code_for(Errc code);
const char* errc_name(Errc code);

// Execution policy for kernels that have an OpenMP path. Serial is the
// reference; both must produce bit-identical results.
enum class Exec { serial, parallel };

// SplitMix64. Self-contained so streams are stable across platforms and
// independent of libstdc++ distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();   // Box-Muller, one value per call (pair cached)
  // inclusive bounds, rejection sampled
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(
          uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Stream derivation for independent substreams (window ids, starts, folds).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// ---- text / numbers ----

// Shortest round-trip decimal form; parse_double(format_double(x)) == x bitwise.
std::string format_double(double v);
double parse_double(std::string_view s, const char* what);
std::int64_t parse_int(std::string_view s, const char* what);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Whole-file CSV: rows of trimmed cells. Blank lines are skipped.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

// ---- timestamps ----

// Strict "YYYY-MM-DDTHH:MM:SSZ"; epoch seconds (UTC, proleptic Gregorian).
std::int64_t parse_iso8601_utc(const std::string& s);
std::string format_iso8601_utc(std::int64_t epoch_s);

// ---- small stats ----

// Pearson correlation; returns 0 when either side has zero variance.
double pearson_or_zero(const double* x, const double* y, int n);
double pearson_or_zero(const Vec& x, const Vec& y);

}  // namespace rp
