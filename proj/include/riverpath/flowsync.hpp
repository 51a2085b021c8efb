// Water-level driven flow-time models and cross-site volume matching.
#pragma once

#include "riverpath/chromio.hpp"
#include "riverpath/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace rp {

// flow_time_h(L) = c0 + c1 L + c2 L^2 + c3 L^3, least squares over the
// training rows of one reach.
struct FlowModel {
  std::string reach_id;
  std::string from_site;
  std::string to_site;
  Eigen::Vector4d coeff = Eigen::Vector4d::Zero();
  double level_min = 0.0;  // training range, drives the extrapolation flag
  double level_max = 0.0;
  double fit_residual_rms = 0.0;
  int n_rows = 0;

  double eval(double level) const {
    return coeff[0] + level * (coeff[1] + level * (coeff[2] + level * coeff[3]));
  }
};

struct FlowEstimate {
  double flow_time_h = 0.0;
  bool extrapolated = false;  // level outside the training range
  bool valid = false;         // finite and > 0
};

// Fits one reach from a full flow table (rows are filtered by reach id).
// Requires >= 4 rows with >= 4 distinct water levels.
FlowModel fit_flow_model(const std::vector<FlowTableRow>& table,
                         const std::string& reach_id);

// Fits every reach present in the table.
std::map<std::string, FlowModel> fit_all_flow_models(
    const std::vector<FlowTableRow>& table);

FlowEstimate estimate_flow_time(const FlowModel& m, double water_level);

// One matching constraint derived from the configured path. Main-stem sites
// chain off the previous main-stem site; a tributary site is anchored at the
// next main-stem site that its reach flows into (the junction), using the
// tributary's own tolerance.
struct PathConstraint {
  std::string upstream;    // site whose water level drives the flow time
  std::string downstream;
  std::string reach_id;
  double tolerance_h = 0.0;
  bool tributary = false;
};

// Derives the constraint list in resolution order (main stem in path order,
// each junction immediately followed by its tributaries). Fails with
// missing_flow_model when a site cannot be anchored.
std::vector<PathConstraint> resolve_path(
    const std::map<std::string, FlowModel>& models,
    const std::vector<SiteRecord>& sites,
    const std::vector<std::string>& path);

struct SyncedSample {
  std::string site_id;
  std::int64_t timestamp = 0;
  int sample_index = -1;  // index into the site's time-sorted sample list
};

struct SynchronizedVolume {
  std::vector<SyncedSample> samples;  // one per path site, in path order
  bool any_extrapolated = false;      // some flow estimate left training range
};

// For every sample at the first path site, searches for the complete chain
// minimizing the sequence of |arrival - predicted| values lexicographically
// in resolution order (ties broken by earlier timestamp). Returns only
// complete chains, ordered by the first site's sample time. Samples must
// carry water levels.
std::vector<SynchronizedVolume> match_volumes(
    const Dataset& ds, const std::map<std::string, FlowModel>& models,
    const std::vector<SiteRecord>& sites, const std::vector<std::string>& path,
    Exec exec = Exec::parallel);

void save_volumes(const std::vector<SynchronizedVolume>& volumes,
                  const std::vector<std::string>& path,
                  const std::string& out_path);
// Returns the path (header row) and fills `volumes`.
std::vector<std::string> load_volumes(const std::string& in_path,
                                      std::vector<SynchronizedVolume>* volumes);

}  // namespace rp
