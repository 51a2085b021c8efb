#include "riverpath/pathmodel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "riverpath/chromio.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rp {

std::vector<std::string> PathSpec::predecessors(const std::string& block) const {
  std::vector<std::string> out;
  for (const auto& id : blocks)
    for (const auto& e : edges)
      if (e.second == block && e.first == id) out.push_back(id);
  return out;
}

std::vector<std::string> PathSpec::successors(const std::string& block) const {
  std::vector<std::string> out;
  for (const auto& id : blocks)
    for (const auto& e : edges)
      if (e.first == block && e.second == id) out.push_back(id);
  return out;
}

bool PathSpec::has_block(const std::string& id) const {
  return std::find(blocks.begin(), blocks.end(), id) != blocks.end();
}

PathSpec load_path_spec(const std::string& path) {
  auto rows = read_csv(path);
  if (rows.empty()) fail(Errc::empty_input, "empty path file: " + path);
  if (rows[0] != std::vector<std::string>{"source", "target"})
    fail(Errc::malformed_csv, "path file needs a source,target header");
  PathSpec spec;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2)
      fail(Errc::malformed_csv, "path row " + std::to_string(i + 1));
    for (const auto& id : rows[i])
      if (!spec.has_block(id)) spec.blocks.push_back(id);
    spec.edges.emplace_back(rows[i][0], rows[i][1]);
  }
  validate_path_spec(spec);
  return spec;
}

void save_path_spec(const PathSpec& spec, const std::string& path) {
  std::string text = "source,target\n";
  for (const auto& e : spec.edges) text += e.first + "," + e.second + "\n";
  write_text_file(path, text);
}

void validate_path_spec(const PathSpec& spec) {
  if (spec.blocks.empty() || spec.edges.empty())
    fail(Errc::invalid_path_spec, "path needs blocks and edges");
  std::set<std::string> ids(spec.blocks.begin(), spec.blocks.end());
  if (ids.size() != spec.blocks.size())
    fail(Errc::invalid_path_spec, "duplicate block ids");
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, int> indeg;
  std::map<std::string, std::vector<std::string>> adj;
  std::set<std::string> touched;
  for (const auto& e : spec.edges) {
    if (!ids.count(e.first) || !ids.count(e.second))
      fail(Errc::invalid_path_spec, "edge uses unknown block");
    if (e.first == e.second)
      fail(Errc::invalid_path_spec, "block linked to itself: " + e.first);
    if (!seen.insert(e).second)
      fail(Errc::invalid_path_spec,
           "edge repeated: " + e.first + "-" + e.second);
    adj[e.first].push_back(e.second);
    ++indeg[e.second];
    touched.insert(e.first);
    touched.insert(e.second);
  }
  for (const auto& id : spec.blocks)
    if (!touched.count(id))
      fail(Errc::invalid_path_spec, "block has no edges: " + id);
  // Kahn's toposort detects cycles
  std::vector<std::string> queue;
  for (const auto& id : spec.blocks)
    if (indeg[id] == 0) queue.push_back(id);
  size_t done = 0;
  while (done < queue.size()) {
    std::string cur = queue[done++];
    for (const auto& nxt : adj[cur])
      if (--indeg[nxt] == 0) queue.push_back(nxt);
  }
  if (done != spec.blocks.size())
    fail(Errc::invalid_path_spec, "the block graph has a cycle");
}

SimplsModel simpls_fit(const Mat& X, const Mat& Y, int n_lv) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const int q = static_cast<int>(Y.cols());
  if (Y.rows() != n) fail(Errc::dimension_mismatch, "row counts differ");
  if (n < 2 || p < 1 || q < 1) fail(Errc::empty_input, "too little data to fit");
  if (!X.allFinite() || !Y.allFinite())
    fail(Errc::nonfinite_value, "non-finite training values");
  if (n_lv < 0) fail(Errc::bad_config, "negative latent count");

  SimplsModel m;
  m.x_mean = X.colwise().mean();
  m.y_mean = Y.colwise().mean();
  Mat Xc = X.rowwise() - m.x_mean.transpose();
  Mat Yc = Y.rowwise() - m.y_mean.transpose();

  const int a_max = std::min({n_lv, p, n - 1});
  Mat S = Xc.transpose() * Yc;
  const double s0 = S.norm();
  m.W.resize(p, 0);
  m.P.resize(p, 0);
  m.Q.resize(q, 0);
  m.T.resize(n, 0);
  Mat V(p, 0);
  for (int a = 0; a < a_max; ++a) {
    if (S.norm() <= 1e-12 * std::max(1.0, s0)) break;
    // dominant direction of S'S picks the y weights
    Eigen::SelfAdjointEigenSolver<Mat> es(S.transpose() * S);
    Vec qa = es.eigenvectors().col(q - 1);
    int big = 0;
    for (int i = 1; i < q; ++i)
      if (std::abs(qa[i]) > std::abs(qa[big])) big = i;
    if (qa[big] < 0.0) qa = -qa;
    Vec r = S * qa;
    Vec t = Xc * r;
    double tn = t.norm();
    if (tn <= 1e-12 * std::max(1.0, std::sqrt(static_cast<double>(n)))) break;
    t /= tn;
    r /= tn;
    Vec pa = Xc.transpose() * t;
    Vec qload = Yc.transpose() * t;
    Vec v = pa;
    if (V.cols() > 0) v -= V * (V.transpose() * pa);
    double vn = v.norm();
    if (vn <= 1e-12) break;
    v /= vn;
    S -= v * (v.transpose() * S);

    m.W.conservativeResize(p, m.W.cols() + 1);
    m.W.col(m.W.cols() - 1) = r;
    m.P.conservativeResize(p, m.P.cols() + 1);
    m.P.col(m.P.cols() - 1) = pa;
    m.Q.conservativeResize(q, m.Q.cols() + 1);
    m.Q.col(m.Q.cols() - 1) = qload;
    m.T.conservativeResize(n, m.T.cols() + 1);
    m.T.col(m.T.cols() - 1) = t;
    V.conservativeResize(p, V.cols() + 1);
    V.col(V.cols() - 1) = v;
  }
  m.n_lv = static_cast<int>(m.W.cols());
  m.coef = m.n_lv > 0 ? Mat(m.W * m.Q.transpose()) : Mat(Mat::Zero(p, q));
  return m;
}

Mat simpls_predict(const SimplsModel& m, const Mat& X_new) {
  if (X_new.cols() != m.x_mean.size())
    fail(Errc::dimension_mismatch, "prediction width differs from training");
  Mat out = (X_new.rowwise() - m.x_mean.transpose()) * m.coef;
  out.rowwise() += m.y_mean.transpose();
  return out;
}

Mat simpls_scores(const SimplsModel& m, const Mat& X_new) {
  if (X_new.cols() != m.x_mean.size())
    fail(Errc::dimension_mismatch, "score width differs from training");
  return (X_new.rowwise() - m.x_mean.transpose()) * m.W;
}

namespace {

double rmse_for_lv(const Mat& X, const Mat& Y,
                   const std::vector<std::vector<int>>& folds, int lv) {
  double sse = 0.0;
  long count = 0;
  const int n = static_cast<int>(X.rows());
  for (const auto& holdout : folds) {
    if (holdout.empty()) continue;
    std::vector<char> held(n, 0);
    for (int i : holdout) held[i] = 1;
    std::vector<int> train;
    for (int i = 0; i < n; ++i)
      if (!held[i]) train.push_back(i);
    if (train.size() < 2) continue;
    Mat Xt(train.size(), X.cols()), Yt(train.size(), Y.cols());
    for (size_t i = 0; i < train.size(); ++i) {
      Xt.row(i) = X.row(train[i]);
      Yt.row(i) = Y.row(train[i]);
    }
    auto m = simpls_fit(Xt, Yt, lv);
    for (int i : holdout) {
      Mat pred = simpls_predict(m, X.row(i));
      sse += (pred.row(0).transpose() - Y.row(i).transpose()).squaredNorm();
      count += Y.cols();
    }
  }
  if (count == 0) return std::numeric_limits<double>::infinity();
  return std::sqrt(sse / static_cast<double>(count));
}

int argmin_lv(const Mat& X, const Mat& Y,
              const std::vector<std::vector<int>>& folds, int max_lv) {
  int best = 1;
  double best_rmse = std::numeric_limits<double>::infinity();
  for (int lv = 1; lv <= max_lv; ++lv) {
    double r = rmse_for_lv(X, Y, folds, lv);
    if (r < best_rmse) {
      best_rmse = r;
      best = lv;
    }
  }
  return best;
}

std::vector<std::vector<int>> assign_folds(const std::vector<int>& order,
                                           int n_folds) {
  std::vector<std::vector<int>> folds(n_folds);
  for (size_t i = 0; i < order.size(); ++i)
    folds[i % n_folds].push_back(order[i]);
  return folds;
}

}  // namespace

CvChoice select_lv_doublecv(const Mat& X, const Mat& Y, const CvParams& params) {
  const int n = static_cast<int>(X.rows());
  if (Y.rows() != n) fail(Errc::dimension_mismatch, "row counts differ");
  if (params.outer_folds < 2 || params.inner_folds < 2)
    fail(Errc::bad_config, "folds must be at least two");
  CvChoice out;
  const int max_lv = std::max(1, std::min<int>(params.max_lv,
                                               static_cast<int>(X.cols())));
  if (n < 4) {
    out.n_lv = 1;
    out.degraded = true;
    out.per_fold = {1};
    return out;
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(params.seed);
  rng.shuffle(order);

  if (n < 10) {
    // one plain cross-validation, there is too little to nest
    auto folds = assign_folds(order, std::min(params.inner_folds, n));
    int pick = argmin_lv(X, Y, folds, std::min(max_lv, n - 2));
    out.n_lv = pick;
    out.per_fold = {pick};
    out.degraded = true;
    return out;
  }

  const int n_outer = std::min(params.outer_folds, n);
  auto outer_folds = assign_folds(order, n_outer);
  for (int o = 0; o < n_outer; ++o) {
    std::vector<char> held(n, 0);
    for (int i : outer_folds[o]) held[i] = 1;
    std::vector<int> rest;
    for (int i : order)
      if (!held[i]) rest.push_back(i);
    Mat Xr(rest.size(), X.cols()), Yr(rest.size(), Y.cols());
    for (size_t i = 0; i < rest.size(); ++i) {
      Xr.row(i) = X.row(rest[i]);
      Yr.row(i) = Y.row(rest[i]);
    }
    std::vector<int> inner_order(rest.size());
    std::iota(inner_order.begin(), inner_order.end(), 0);
    auto inner = assign_folds(inner_order,
                              std::min<int>(params.inner_folds, rest.size()));
    int lim = std::min<int>(max_lv, static_cast<int>(rest.size()) - 2);
    out.per_fold.push_back(argmin_lv(Xr, Yr, inner, std::max(1, lim)));
  }
  std::vector<int> sorted = out.per_fold;
  std::sort(sorted.begin(), sorted.end());
  out.n_lv = sorted[(sorted.size() - 1) / 2];
  return out;
}

Mat BlockScaling::apply(const Mat& X) const {
  Mat Z = X.rowwise() - mean.transpose();
  for (int j = 0; j < Z.cols(); ++j) Z.col(j) /= std[j];
  return Z * block_factor;
}

Mat BlockScaling::invert(const Mat& Z) const {
  Mat X = Z / block_factor;
  for (int j = 0; j < X.cols(); ++j) X.col(j) *= std[j];
  X.rowwise() += mean.transpose();
  return X;
}

BlockScaling fit_block_scaling(const Mat& X) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n < 2 || p < 1) fail(Errc::empty_input, "too little data to scale");
  BlockScaling s;
  s.mean = X.colwise().mean();
  s.std.resize(p);
  for (int j = 0; j < p; ++j) {
    double ss = (X.col(j).array() - s.mean[j]).square().sum();
    s.std[j] = std::sqrt(ss / (n - 1));
    if (!(s.std[j] > 0.0))
      fail(Errc::zero_variance, "variable " + std::to_string(j + 1) +
                                    " never changes");
  }
  s.block_factor = 1.0 / std::sqrt(static_cast<double>(p));
  return s;
}

const OuterBlock& OuterModel::block(const std::string& id) const {
  for (const auto& b : blocks)
    if (b.id == id) return b;
  fail(Errc::bad_argument, "no block named " + id);
}

namespace {

Mat concat_cols(const std::vector<const Mat*>& parts) {
  int cols = 0;
  for (const auto* m : parts) cols += static_cast<int>(m->cols());
  Mat out(parts[0]->rows(), cols);
  int at = 0;
  for (const auto* m : parts) {
    out.middleCols(at, m->cols()) = *m;
    at += static_cast<int>(m->cols());
  }
  return out;
}

}  // namespace

OuterModel fit_outer(const std::vector<BlockData>& data, const PathSpec& spec,
                     const OuterParams& params) {
  validate_path_spec(spec);
  if (data.size() != spec.blocks.size())
    fail(Errc::bad_argument, "data blocks do not match the path");
  std::map<std::string, const BlockData*> by_id;
  for (const auto& b : data) {
    if (!spec.has_block(b.id))
      fail(Errc::bad_argument, "data for unknown block " + b.id);
    if (!by_id.emplace(b.id, &b).second)
      fail(Errc::bad_argument, "block given twice: " + b.id);
  }
  const int N = static_cast<int>(data[0].X.rows());
  if (N < 4) fail(Errc::empty_input, "too few rows for path modelling");
  for (const auto& b : data) {
    if (b.X.rows() != N) fail(Errc::dimension_mismatch, "row counts differ");
    if (!b.X.allFinite()) fail(Errc::nonfinite_value, "block " + b.id);
  }

  OuterModel model;
  model.spec = spec;
  model.n_rows = N;
  model.blocks.resize(spec.blocks.size());

  std::vector<Mat> Z(spec.blocks.size());
  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const BlockData& b = *by_id.at(spec.blocks[i]);
    OuterBlock& ob = model.blocks[i];
    ob.id = b.id;
    ob.var_names = b.var_names;
    ob.scaling = fit_block_scaling(b.X);
    Z[i] = ob.scaling.apply(b.X);
  }
  auto index_of = [&](const std::string& id) {
    return static_cast<int>(std::find(spec.blocks.begin(), spec.blocks.end(), id) -
                            spec.blocks.begin());
  };

  const int nb = static_cast<int>(spec.blocks.size());
  auto fit_one = [&](int i) {
    OuterBlock& ob = model.blocks[i];
    auto succ = spec.successors(ob.id);
    auto pred = spec.predecessors(ob.id);
    ob.has_successors = !succ.empty();
    ob.has_predecessors = !pred.empty();
    CvParams cv = params.cv;
    cv.seed = mix_seed(params.cv.seed, static_cast<std::uint64_t>(i));
    if (ob.has_successors) {
      std::vector<const Mat*> parts;
      for (const auto& s : succ) parts.push_back(&Z[index_of(s)]);
      Mat Y = concat_cols(parts);
      auto choice = select_lv_doublecv(Z[i], Y, cv);
      auto pls = simpls_fit(Z[i], Y, choice.n_lv);
      ob.n_lv = pls.n_lv;
      ob.score_proj = pls.W;
      ob.scores = pls.T;
      ob.loadings = Z[i].transpose() * pls.T;
      ob.r2 = ob.loadings.squaredNorm() / static_cast<double>(N - 1);
    } else {
      // terminal block: its structure comes from everything upstream
      std::vector<const Mat*> parts;
      for (const auto& s : pred) parts.push_back(&Z[index_of(s)]);
      Mat Xj = concat_cols(parts);
      auto choice = select_lv_doublecv(Xj, Z[i], cv);
      auto joint = simpls_fit(Xj, Z[i], choice.n_lv);
      Mat Q = Z[i].transpose() * joint.T;
      ob.n_lv = joint.n_lv;
      ob.loadings = Q;
      Mat QtQ = Q.transpose() * Q;
      ob.score_proj =
          Eigen::CompleteOrthogonalDecomposition<Mat>(QtQ).solve(Q.transpose())
              .transpose();
      ob.scores = Z[i] * ob.score_proj;
      ob.r2 = Q.squaredNorm() / static_cast<double>(N - 1);
    }
  };
  if (params.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < nb; ++i) fit_one(i);
  } else {
    for (int i = 0; i < nb; ++i) fit_one(i);
  }
  return model;
}

const InnerBlock* InnerModel::find(const std::string& target) const {
  for (const auto& b : blocks)
    if (b.target == target) return &b;
  return nullptr;
}

InnerModel fit_inner(const OuterModel& outer, const CvParams& cv, Exec exec) {
  std::vector<int> targets;
  for (size_t i = 0; i < outer.blocks.size(); ++i)
    if (outer.blocks[i].has_predecessors) targets.push_back(static_cast<int>(i));
  InnerModel inner;
  inner.blocks.resize(targets.size());

  auto fit_one = [&](int ti) {
    const OuterBlock& tb = outer.blocks[targets[ti]];
    InnerBlock ib;
    ib.target = tb.id;
    ib.predecessors = outer.spec.predecessors(tb.id);
    std::vector<const Mat*> parts;
    for (const auto& pid : ib.predecessors)
      parts.push_back(&outer.block(pid).scores);
    Mat X = concat_cols(parts);
    const Mat& Y = tb.scores;
    CvParams c = cv;
    c.seed = mix_seed(cv.seed, 1000 + static_cast<std::uint64_t>(targets[ti]));
    auto choice = select_lv_doublecv(X, Y, c);
    ib.reg = simpls_fit(X, Y, choice.n_lv);
    ib.n_lv = ib.reg.n_lv;
    double ss_tot = Y.squaredNorm();
    double ss_full = (Y - simpls_predict(ib.reg, X)).squaredNorm();
    double p2 = ss_tot > 0.0 ? 1.0 - ss_full / ss_tot : 0.0;

    const int np = static_cast<int>(ib.predecessors.size());
    ib.partials.assign(np, 0.0);
    if (np == 1) {
      ib.partials[0] = p2;
      ib.p2 = p2;
    } else {
      // leave one predecessor out and share the explained part by the loss
      std::vector<double> delta(np, 0.0);
      double total = 0.0;
      for (int z = 0; z < np; ++z) {
        std::vector<const Mat*> keep;
        for (int w = 0; w < np; ++w)
          if (w != z) keep.push_back(parts[w]);
        Mat Xz = concat_cols(keep);
        int lv_z = std::min(ib.n_lv, static_cast<int>(Xz.cols()));
        auto reg_z = simpls_fit(Xz, Y, std::max(1, lv_z));
        double ss_z = (Y - simpls_predict(reg_z, Xz)).squaredNorm();
        delta[z] = std::max(0.0, ss_z - ss_full);
        total += delta[z];
      }
      for (int z = 0; z + 1 < np; ++z)
        ib.partials[z] =
            total > 0.0 ? p2 * (delta[z] / total) : p2 / np;
      double others = 0.0;
      for (int z = 0; z + 1 < np; ++z) others += ib.partials[z];
      ib.partials[np - 1] = p2 - others;
      double sum = 0.0;
      for (double v : ib.partials) sum += v;
      ib.p2 = sum;  // the stored split adds up exactly
    }
    inner.blocks[ti] = std::move(ib);
  };
  const int nt = static_cast<int>(targets.size());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < nt; ++i) fit_one(i);
  } else {
    for (int i = 0; i < nt; ++i) fit_one(i);
  }
  return inner;
}

ProcessModel fit_process_model(const std::vector<BlockData>& data,
                               const PathSpec& spec, const OuterParams& params) {
  ProcessModel m;
  m.outer = fit_outer(data, spec, params);
  m.inner = fit_inner(m.outer, params.cv, params.exec);
  return m;
}

Mat predict_block(const ProcessModel& m, const std::string& target,
                  const std::map<std::string, Mat>& predecessors) {
  const InnerBlock* ib = m.inner.find(target);
  if (!ib) fail(Errc::bad_argument, "block has nothing upstream: " + target);
  const OuterBlock& tb = m.outer.block(target);
  int n = -1;
  std::vector<Mat> score_parts;
  for (const auto& pid : ib->predecessors) {
    auto it = predecessors.find(pid);
    if (it == predecessors.end())
      fail(Errc::bad_argument, "missing predecessor data: " + pid);
    const OuterBlock& pb = m.outer.block(pid);
    if (it->second.cols() != pb.scaling.mean.size())
      fail(Errc::dimension_mismatch, "width differs for " + pid);
    if (n < 0) n = static_cast<int>(it->second.rows());
    if (it->second.rows() != n)
      fail(Errc::dimension_mismatch, "row counts differ between blocks");
    score_parts.push_back(pb.scaling.apply(it->second) * pb.score_proj);
  }
  std::vector<const Mat*> ptrs;
  for (const auto& s : score_parts) ptrs.push_back(&s);
  Mat chi = concat_cols(ptrs);
  Mat xi_hat = simpls_predict(ib->reg, chi);
  return tb.scaling.invert(xi_hat * tb.loadings.transpose());
}

double nrmse(const Vec& measured, const Vec& predicted) {
  const int n = static_cast<int>(measured.size());
  if (n == 0) fail(Errc::empty_input, "nothing to score");
  if (predicted.size() != n) fail(Errc::dimension_mismatch, "length mismatch");
  if (!measured.allFinite() || !predicted.allFinite())
    fail(Errc::nonfinite_value, "non-finite values in scoring");
  double mean = measured.mean();
  double var = (measured.array() - mean).square().sum() / n;
  if (!(var > 0.0)) fail(Errc::zero_variance, "measured values never change");
  double mse = (measured - predicted).squaredNorm() / n;
  return std::sqrt(mse / var);
}

std::vector<ReportRow> report_model(const ProcessModel& m) {
  std::vector<ReportRow> rows;
  for (const auto& b : m.outer.blocks)
    rows.push_back({"block_r2", "", b.id, b.r2});
  for (const auto& b : m.outer.blocks) {
    const InnerBlock* ib = m.inner.find(b.id);
    if (!ib) continue;
    rows.push_back({"inner_p2", "", ib->target, ib->p2});
  }
  for (const auto& b : m.outer.blocks) {
    const InnerBlock* ib = m.inner.find(b.id);
    if (!ib) continue;
    for (size_t z = 0; z < ib->predecessors.size(); ++z)
      rows.push_back(
          {"edge_partial", ib->predecessors[z], ib->target, ib->partials[z]});
  }
  return rows;
}

namespace {

namespace fs = std::filesystem;

void save_mat(const std::string& path, const Mat& m,
              const std::string& col_prefix) {
  std::vector<std::string> cols;
  for (int j = 0; j < m.cols(); ++j)
    cols.push_back(col_prefix + std::to_string(j + 1));
  save_matrix_csv(path, cols, m);
}

Mat load_mat(const std::string& path) {
  return load_matrix_csv(path, false).values;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += v[i];
  }
  return out;
}

}  // namespace

void save_process_model(const ProcessModel& m, const std::string& dir) {
  fs::create_directories(dir);
  save_path_spec(m.outer.spec, (fs::path(dir) / "path_edges.csv").string());
  std::string blocks = "block_id,n_vars,n_lv,r2,has_successors,has_predecessors,"
                       "block_factor,n_rows,var_names\n";
  for (const auto& b : m.outer.blocks) {
    blocks += b.id + "," + std::to_string(b.scaling.mean.size()) + "," +
              std::to_string(b.n_lv) + "," + format_double(b.r2) + "," +
              (b.has_successors ? "1" : "0") + "," +
              (b.has_predecessors ? "1" : "0") + "," +
              format_double(b.scaling.block_factor) + "," +
              std::to_string(m.outer.n_rows) + "," + join_list(b.var_names) +
              "\n";
  }
  write_text_file((fs::path(dir) / "blocks.csv").string(), blocks);
  for (const auto& b : m.outer.blocks) {
    Mat ms(b.scaling.mean.size(), 2);
    ms.col(0) = b.scaling.mean;
    ms.col(1) = b.scaling.std;
    save_mat((fs::path(dir) / ("scaling_" + b.id + ".csv")).string(), ms, "c");
    save_mat((fs::path(dir) / ("proj_" + b.id + ".csv")).string(), b.score_proj,
             "lv");
    save_mat((fs::path(dir) / ("load_" + b.id + ".csv")).string(), b.loadings,
             "lv");
    save_mat((fs::path(dir) / ("scores_" + b.id + ".csv")).string(), b.scores,
             "lv");
  }
  std::string inner = "target,n_lv,p2,predecessors,partials\n";
  for (const auto& ib : m.inner.blocks) {
    std::vector<std::string> parts;
    for (double v : ib.partials) parts.push_back(format_double(v));
    inner += ib.target + "," + std::to_string(ib.n_lv) + "," +
             format_double(ib.p2) + "," + join_list(ib.predecessors) + "," +
             join_list(parts) + "\n";
    const auto base = fs::path(dir) / ("inner_" + ib.target);
    save_mat(base.string() + "_coef.csv", ib.reg.coef, "y");
    Mat xm(ib.reg.x_mean.size(), 1);
    xm.col(0) = ib.reg.x_mean;
    save_mat(base.string() + "_xmean.csv", xm, "c");
    Mat ym(ib.reg.y_mean.size(), 1);
    ym.col(0) = ib.reg.y_mean;
    save_mat(base.string() + "_ymean.csv", ym, "c");
  }
  write_text_file((fs::path(dir) / "inner.csv").string(), inner);
}

ProcessModel load_process_model(const std::string& dir) {
  ProcessModel m;
  m.outer.spec = load_path_spec((fs::path(dir) / "path_edges.csv").string());
  auto rows = read_csv((fs::path(dir) / "blocks.csv").string());
  if (rows.size() < 2 || rows[0].size() != 9)
    fail(Errc::malformed_csv, "blocks table is malformed");
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    OuterBlock b;
    b.id = r[0];
    b.n_lv = static_cast<int>(parse_int(r[2], "n_lv"));
    b.r2 = parse_double(r[3], "r2");
    b.has_successors = r[4] == "1";
    b.has_predecessors = r[5] == "1";
    b.var_names = r[8].empty() ? std::vector<std::string>{} : split(r[8], ';');
    m.outer.n_rows = static_cast<int>(parse_int(r[7], "n_rows"));
    Mat ms = load_mat((fs::path(dir) / ("scaling_" + b.id + ".csv")).string());
    b.scaling.mean = ms.col(0);
    b.scaling.std = ms.col(1);
    b.scaling.block_factor = parse_double(r[6], "block_factor");
    b.score_proj = load_mat((fs::path(dir) / ("proj_" + b.id + ".csv")).string());
    b.loadings = load_mat((fs::path(dir) / ("load_" + b.id + ".csv")).string());
    b.scores = load_mat((fs::path(dir) / ("scores_" + b.id + ".csv")).string());
    m.outer.blocks.push_back(std::move(b));
  }
  auto irows = read_csv((fs::path(dir) / "inner.csv").string());
  if (irows.empty() || irows[0].size() != 5)
    fail(Errc::malformed_csv, "inner table is malformed");
  for (size_t i = 1; i < irows.size(); ++i) {
    const auto& r = irows[i];
    InnerBlock ib;
    ib.target = r[0];
    ib.n_lv = static_cast<int>(parse_int(r[1], "n_lv"));
    ib.p2 = parse_double(r[2], "p2");
    ib.predecessors = split(r[3], ';');
    for (const auto& s : split(r[4], ';'))
      ib.partials.push_back(parse_double(s, "partial"));
    const auto base = fs::path(dir) / ("inner_" + ib.target);
    ib.reg.coef = load_mat(base.string() + "_coef.csv");
    ib.reg.x_mean = load_mat(base.string() + "_xmean.csv").col(0);
    ib.reg.y_mean = load_mat(base.string() + "_ymean.csv").col(0);
    ib.reg.n_lv = ib.n_lv;
    m.inner.blocks.push_back(std::move(ib));
  }
  return m;
}

}  // namespace rp
