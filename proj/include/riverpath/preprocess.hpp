// Reference-grid resampling, asymmetric least squares baselines, and
// correlation optimized warping.
#pragma once

#include "riverpath/chromio.hpp"
#include "riverpath/common.hpp"

#include <string>
#include <vector>

namespace rp {

// Uniform grid from 0 to the maximum retention time; r counts intervals, so
// the grid has r + 1 points.
struct ReferenceGrid {
  Vec points;
  double spacing = 0.0;
  int intervals() const { return static_cast<int>(points.size()) - 1; }
};

ReferenceGrid build_reference_grid(
    const std::vector<const ChromatogramSample*>& samples, int r);
ReferenceGrid build_reference_grid(const std::vector<ChromatogramSample>& samples,
                                   int r);

// Nearest-grid-index assignment; colliding source columns are summed so the
// total intensity is conserved exactly. Ties pick the lower index.
ChromatogramSample resample_sample(const ChromatogramSample& s,
                                   const ReferenceGrid& grid);
int nearest_grid_index(const ReferenceGrid& grid, double t);

struct AslsParams {
  double lambda = 1e6;
  double p = 0.001;
  int max_iter = 20;
};

struct AslsResult {
  Vec baseline;
  int iterations = 0;
  bool converged = false;  // weight pattern stabilized before max_iter
};

// Whittaker-style smoother with asymmetric weights; second-difference
// penalty, pentadiagonal normal equations.
AslsResult asls_baseline(const Vec& y, const AslsParams& params = {});

struct CowParams {
  int seg_len = 50;  // points per segment on the target axis
  int slack = 5;     // max boundary shift in points
};

// Piecewise-linear boundary map from target grid indices to source (sample)
// grid indices. Endpoints are fixed.
struct WarpPath {
  std::vector<int> target;  // boundary positions on the target axis
  std::vector<int> source;  // matched positions on the sample axis
};

struct CowResult {
  WarpPath path;
  Vec warped;
  double score = 0.0;  // summed per-segment correlation achieved
};

// Exact dynamic program over boundary shifts in [-slack, +slack] maximizing
// the summed per-segment Pearson correlation (zero-variance segments score
// 0). Signal and target must have equal length.
CowResult cow_warp(const Vec& signal, const Vec& target,
                   const CowParams& params = {});

// Applies a boundary map to any signal on the same source axis.
Vec apply_warp(const WarpPath& path, const Vec& signal);

struct AlignParams {
  AslsParams asls;
  CowParams cow;
};

struct AlignReportRow {
  std::string site_id;
  std::int64_t timestamp = 0;
  double corr_before = 0.0;  // TIC correlation with the reference sample
  double corr_after = 0.0;
  bool baseline_converged = true;
};

struct AlignResult {
  std::vector<ChromatogramSample> samples;  // on the reference grid
  int reference_index = -1;                 // within the input order
  std::vector<AlignReportRow> report;
};

// Pipeline for one resolution group: resample to the grid, remove the
// TIC-estimated baseline (per channel, scaled by the channel's share of the
// TIC), then warp every sample onto the median-total-intensity reference.
AlignResult align_dataset(const std::vector<ChromatogramSample>& samples,
                          const ReferenceGrid& grid,
                          const AlignParams& params = {},
                          Exec exec = Exec::parallel);

}  // namespace rp
