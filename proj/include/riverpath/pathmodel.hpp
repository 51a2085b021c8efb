// Multiblock path modelling: per-block latent projections wired along a
// directed acyclic site graph, with inner regressions between score sets.
#pragma once

#include "riverpath/common.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rp {

struct PathSpec {
  std::vector<std::string> blocks;  // declaration order is the block order
  std::vector<std::pair<std::string, std::string>> edges;  // source -> target

  std::vector<std::string> predecessors(const std::string& block) const;
  std::vector<std::string> successors(const std::string& block) const;
  bool has_block(const std::string& id) const;
};

// CSV with header source,target; blocks appear in first-mention order.
PathSpec load_path_spec(const std::string& path);
void save_path_spec(const PathSpec& spec, const std::string& path);

// Throws on cycles, self-edges, duplicate edges, or unknown block ids.
void validate_path_spec(const PathSpec& spec);

struct BlockData {
  std::string id;
  std::vector<std::string> var_names;
  std::vector<std::string> row_labels;
  Mat X;  // N x p
};

struct SimplsModel {
  Vec x_mean, y_mean;
  Mat W;     // p x A projection weights, scores = Xc * W
  Mat P;     // p x A X loadings
  Mat Q;     // q x A Y loadings
  Mat T;     // N x A training scores, orthonormal columns
  Mat coef;  // p x q regression matrix on centered data
  int n_lv = 0;
};

SimplsModel simpls_fit(const Mat& X, const Mat& Y, int n_lv);
Mat simpls_predict(const SimplsModel& m, const Mat& X_new);
Mat simpls_scores(const SimplsModel& m, const Mat& X_new);

struct CvParams {
  int outer_folds = 5;
  int inner_folds = 5;
  int max_lv = 10;
  std::uint64_t seed = 17;
};

struct CvChoice {
  int n_lv = 1;
  std::vector<int> per_fold;
  bool degraded = false;  // too few rows for the double loop
};

// Double cross-validation: the inner loop picks the latent-variable count
// per outer fold, the final count is the median of those picks.
CvChoice select_lv_doublecv(const Mat& X, const Mat& Y, const CvParams& params);

struct BlockScaling {
  Vec mean;
  Vec std;             // sample standard deviation, N - 1
  double block_factor = 1.0;  // 1 / sqrt(p)
  Mat apply(const Mat& X) const;
  Mat invert(const Mat& Z) const;
};

BlockScaling fit_block_scaling(const Mat& X);

struct OuterBlock {
  std::string id;
  std::vector<std::string> var_names;
  BlockScaling scaling;
  bool has_successors = false;
  bool has_predecessors = false;
  int n_lv = 0;
  Mat score_proj;  // p x lv, scores = Z * score_proj
  Mat loadings;    // p x lv, reconstruction = scores * loadings'
  Mat scores;      // N x lv training scores
  double r2 = 0.0; // explained variance of the own block
};

struct OuterParams {
  CvParams cv;
  Exec exec = Exec::parallel;
};

struct OuterModel {
  PathSpec spec;
  std::vector<OuterBlock> blocks;  // spec block order
  int n_rows = 0;
  const OuterBlock& block(const std::string& id) const;
};

OuterModel fit_outer(const std::vector<BlockData>& data, const PathSpec& spec,
                     const OuterParams& params = {});

struct InnerBlock {
  std::string target;
  std::vector<std::string> predecessors;  // spec block order
  SimplsModel reg;   // concatenated predecessor scores -> target scores
  int n_lv = 0;
  double p2 = 0.0;   // explained target-score variance
  std::vector<double> partials;  // per predecessor, sums to p2
};

struct InnerModel {
  std::vector<InnerBlock> blocks;  // one per block with predecessors
  const InnerBlock* find(const std::string& target) const;
};

InnerModel fit_inner(const OuterModel& outer, const CvParams& cv,
                     Exec exec = Exec::parallel);

struct ProcessModel {
  OuterModel outer;
  InnerModel inner;
};

ProcessModel fit_process_model(const std::vector<BlockData>& data,
                               const PathSpec& spec,
                               const OuterParams& params = {});

// Predicts a block from measured predecessor data (original units). Every
// predecessor of the target block must be present.
Mat predict_block(const ProcessModel& m, const std::string& target,
                  const std::map<std::string, Mat>& predecessors);

// Root mean squared error over the population standard deviation of the
// measured values. Errors out when that deviation is zero.
double nrmse(const Vec& measured, const Vec& predicted);

struct ReportRow {
  std::string kind;  // block_r2 | inner_p2 | edge_partial
  std::string source;
  std::string target;
  double value = 0.0;
};

std::vector<ReportRow> report_model(const ProcessModel& m);

void save_process_model(const ProcessModel& m, const std::string& dir);
ProcessModel load_process_model(const std::string& dir);

}  // namespace rp
