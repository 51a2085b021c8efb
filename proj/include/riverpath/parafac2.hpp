// Multi-way decomposition of stacked elution windows with per-slab profile
// rotations, rank diagnostics, and concentration extraction.
#pragma once

#include "riverpath/common.hpp"
#include "riverpath/preprocess.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rp {

// Half-open column range [start, end) on the reference grid.
struct WindowSpec {
  int start = 0;
  int end = 0;
  std::string id;
  int width() const { return end - start; }
};

// Boundaries are retention times; each consecutive pair becomes a window.
std::vector<WindowSpec> segment_windows(const ReferenceGrid& grid,
                                        const std::vector<double>& boundaries);

// Cuts one window out of every sample; slab k is n_mz x width.
std::vector<Mat> window_slabs(const std::vector<ChromatogramSample>& samples,
                              const WindowSpec& w);

struct Parafac2Params {
  int n_starts = 5;
  int max_iter = 2000;
  double tol = 1e-8;  // relative loss change per sweep
  std::uint64_t seed = 1;
};

struct Parafac2Model {
  Mat A;               // I x F spectra, non-negative, unit column norm
  Mat B;               // F x F shared profile basis, unit column norm
  std::vector<Mat> P;  // per-slab J x F orthonormal rotations
  Mat C;               // K x F slab weights (carry the scale)
  double loss = 0.0;   // final squared residual
  double fit = 0.0;    // 100 * (1 - loss / total SS)
  int iterations = 0;
  bool converged = false;
  int best_start = -1;

  Mat profile(int k) const { return P[k] * B; }  // J x F elution profiles
  Mat cross_product() const { return B.transpose() * B; }  // constant over k
};

Parafac2Model fit_parafac2(const std::vector<Mat>& slabs, int n_factors,
                           const Parafac2Params& params = {});

double fit_percent(const Parafac2Model& m, const std::vector<Mat>& slabs);

// Diagnostic in (-inf, 100]; compares the implied core array against the
// ideal superdiagonal one. 100 means perfectly trilinear after rotation.
double core_consistency(const Parafac2Model& m, const std::vector<Mat>& slabs);

struct RankSelectParams {
  int f_min = 1;
  int f_max = 7;
  double core_threshold = 80.0;  // minimum acceptable core consistency
  double min_gain = 1.0;         // fit percentage points over rank - 1
  Parafac2Params fit;
  Exec exec = Exec::parallel;
};

struct RankRow {
  int n_factors = 0;
  double fit = 0.0;
  double gain = 0.0;
  double core = 0.0;
  bool selected = false;
};

struct RankSelection {
  int best = 1;
  std::vector<RankRow> table;
  std::vector<Parafac2Model> models;  // indexed by n_factors - f_min
  const Parafac2Model& best_model() const;
};

RankSelection select_rank(const std::vector<Mat>& slabs,
                          const RankSelectParams& params = {});

struct ClassifyParams {
  double peak_ratio = 5.0;      // max / median of the mean profile
  double span_fraction = 0.8;   // occupied fraction of the window
  double span_level = 0.1;      // of the profile maximum
};

enum class ComponentClass { chemical, baseline };

double elution_peak_ratio(const Vec& mean_profile);
double elution_span_fraction(const Vec& mean_profile, double level);
ComponentClass classify_component(const Vec& mean_profile,
                                  const ClassifyParams& params = {});

struct ComponentRecord {
  std::string id;  // w<window>_f<factor>
  int window_index = 0;
  int factor_index = 0;
  Vec spectrum;      // unit norm, non-negative
  Vec mean_elution;  // window width, averaged over slabs
  ComponentClass cls = ComponentClass::chemical;
  bool is_standard = false;
  std::string annotation;
  double annotation_score = 0.0;
};

struct ExtractResult {
  Mat conc;  // K x total factors, window-major column order
  std::vector<ComponentRecord> components;
};

// Concatenates slab weights across windows and builds the registry; signs
// are fixed so each mean elution profile points up.
ExtractResult extract_concentrations(const std::vector<Parafac2Model>& models,
                                     const std::vector<WindowSpec>& windows,
                                     const ClassifyParams& params = {});

// Divides each row by the mean of its internal-standard cells. A
// non-positive mean is an error naming the offending row.
Mat normalize_internal_standards(const Mat& conc,
                                 const std::vector<int>& standard_cols,
                                 const std::vector<std::string>& row_labels);

}  // namespace rp
