// Synthetic river-network dataset generator with a known ground truth.
#pragma once

#include "riverpath/chromio.hpp"
#include "riverpath/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rp {

struct ScenarioSite {
  std::string id;
  std::string name;
  double river_km = 0.0;
  std::string bank = "middle";
  double tolerance_h = 0.0;  // NaN marks the terminal site
  double level_base = 500.0; // cm
  double level_amp = 120.0;
  double level_period_h = 0.0;
  double level_phase = 0.0;
};

struct ScenarioReach {
  std::string from, to;
  Eigen::Vector4d flow_coeff{0, 0, 0, 0};  // true flow time cubic in level cm
  double mixing = 1.0;        // fraction of upstream mass surviving transport
  double dispersion_h = 0.5;  // arrival-time spread
  std::string id() const { return from + "-" + to; }
};

enum class ComponentRole { standard, source, bank_local, tributary, midreach };

struct ScenarioComponent {
  std::string name;
  ComponentRole role = ComponentRole::source;
  std::string injection_site;      // empty for standards
  std::string injection_reach;     // midreach only, "FROM-TO"
  double injection_offset = 0.5;   // fraction along the reach
  std::vector<double> mz;          // stick spectrum
  std::vector<double> intensity;
  double elution_center_min = 0.0;
  double elution_sigma_min = 0.08;
  double amplitude = 1.0;
  double period_h = 0.0;   // 0 keeps the level constant
  double phase = 0.0;
  double pulse_width_h = 0.0;  // > 0 switches to periodic pulses
};

struct Scenario {
  std::uint64_t seed = 421;
  std::vector<ScenarioSite> sites;
  std::vector<ScenarioReach> reaches;
  std::vector<std::string> path;  // main analysis chain, upstream first
  std::vector<ScenarioComponent> components;

  // sampling plan
  int n_volumes = 80;
  double volume_spacing_h = 6.0;
  double start_offset_h = 24.0;
  double jitter_frac = 0.35;     // of the site tolerance
  double extra_rate = 0.15;      // decoy samples per scheduled one
  double dropout_rate = 0.02;    // chance a scheduled sample is skipped
  std::int64_t epoch = 0;        // timestamp of simulation hour 0

  // simulation grid
  double horizon_h = 600.0;
  double time_step_h = 0.05;

  // chromatogram rendering
  std::vector<double> mz_axis;
  int native_rt_points = 541;
  double rt_step_min = 0.03125;
  int grid_intervals = 360;
  double shift_max_points = 3.0;  // per-sample retention shift
  double intensity_spread = 0.25; // per-sample response factor half-range
  double baseline_amp = 0.06;     // of the typical peak height
  double noise_rel = 0.006;
  double quantum = 0.125;         // intensities round to this step

  // flow table
  int levels_per_reach = 9;

  std::vector<double> window_boundaries_min;
};

// Built-in nine-site network with two internal standards, shared and
// bank-local source compounds, one tributary tracer, and one mid-reach
// injection.
Scenario mini_rhine_scenario(std::uint64_t seed);

struct SampleEvent {
  std::string site_id;
  std::int64_t timestamp = 0;
  double level_cm = 0.0;
  int volume = -1;  // scheduled volume index, -1 for decoys
};

struct RiverSeries {
  std::vector<double> grid_h;           // simulation times
  std::vector<std::string> site_ids;    // scenario order
  std::vector<Mat> conc;                // per site, n_times x n_components
  std::vector<std::vector<SampleEvent>> events;  // per site, time sorted
};

RiverSeries gen_river_series(const Scenario& sc);

double site_level_cm(const Scenario& sc, int site_index, double t_h);
double true_flow_time_h(const ScenarioReach& r, double level_cm);

// Per-component concentration at one site and time, interpolated on the
// simulation grid.
Vec sample_concentration(const Scenario& sc, const RiverSeries& rs,
                         int site_index, double t_h);

struct SynthOutput {
  std::string manifest_path;
  std::string flow_table_path;
  std::string site_table_path;
  std::string library_path;
  std::string truth_dir;
  std::string config_path;
  int n_samples = 0;
};

// Renders every sample event to a chromatogram bundle and writes the
// manifest, flow table, site table, spectral library, pipeline config, and
// a truth ledger of the underlying concentrations.
SynthOutput gen_chromatograms(const Scenario& sc, const RiverSeries& rs,
                              const std::string& out_dir,
                              Exec exec = Exec::parallel);

}  // namespace rp
