// Sample bundles, dataset manifests, flow and site tables.
#pragma once

#include "riverpath/common.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace rp {

// One measured chromatogram: intensity is n_mz x n_rt, axes strictly
// increasing, all values finite and non-negative.
struct ChromatogramSample {
  std::string site_id;
  std::int64_t timestamp = 0;  // epoch seconds UTC
  double water_level = std::numeric_limits<double>::quiet_NaN();  // optional
  Vec mz_axis;  // n_mz
  Vec rt_axis;  // n_rt, minutes
  Mat intensity;  // n_mz x n_rt

  int n_mz() const { return static_cast<int>(mz_axis.size()); }
  int n_rt() const { return static_cast<int>(rt_axis.size()); }
  bool has_water_level() const { return std::isfinite(water_level); }
};

struct FlowTableRow {
  std::string reach_id;  // "<from>-<to>"
  std::string from_site;
  std::string to_site;
  double water_level_cm = 0.0;
  double flow_time_h = 0.0;  // > 0
};

struct SiteRecord {
  std::string site_id;
  std::string name;
  double river_km = 0.0;
  std::string bank;  // left | middle | right
  // matching window to the next site on the path; NaN marks the terminal site
  double tolerance_h = std::numeric_limits<double>::quiet_NaN();

  bool has_tolerance() const { return std::isfinite(tolerance_h); }
};

struct SiteSeries {
  std::string site_id;
  std::vector<ChromatogramSample> samples;  // sorted by timestamp
};

struct Dataset {
  std::vector<SiteSeries> sites;  // sorted by site_id

  const SiteSeries* find(const std::string& site_id) const;
};

// Bundle = <base>.hdr + <base>.csv. `base` may be given with or without the
// .hdr suffix. Round trips are bit-exact for every numeric field.
ChromatogramSample load_sample(const std::string& base);
void save_sample(const ChromatogramSample& s, const std::string& base);

// Validation used by both the loader and the writer.
void validate_sample(const ChromatogramSample& s);

// Column sums of the intensity matrix (length n_rt).
Vec compute_tic(const ChromatogramSample& s);

// Manifest CSV: site_id,timestamp,bundle_path (paths relative to the
// manifest's directory). When `known_sites` is given, every site id must be
// present in it. Rejects duplicate (site, timestamp) pairs and manifest rows
// whose site differs from the bundle header.
Dataset load_dataset(const std::string& manifest_path,
                     const std::vector<SiteRecord>* known_sites = nullptr);

std::vector<FlowTableRow> load_flow_table(const std::string& path);
std::vector<SiteRecord> load_site_table(const std::string& path);

void save_flow_table(const std::vector<FlowTableRow>& rows,
                     const std::string& path);
void save_site_table(const std::vector<SiteRecord>& rows,
                     const std::string& path);

// Generic numeric matrix CSV with a single header row naming the columns.
void save_matrix_csv(const std::string& path,
                     const std::vector<std::string>& col_names, const Mat& m,
                     const std::vector<std::string>* row_labels = nullptr,
                     const std::string& row_label_header = "");
struct LabeledMatrix {
  std::vector<std::string> col_names;
  std::vector<std::string> row_labels;  // empty when the CSV has no label col
  Mat values;
};
LabeledMatrix load_matrix_csv(const std::string& path, bool first_col_labels);

}  // namespace rp
