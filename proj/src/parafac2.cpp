#include "riverpath/parafac2.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rp {

std::vector<WindowSpec> segment_windows(const ReferenceGrid& grid,
                                        const std::vector<double>& boundaries) {
  if (boundaries.size() < 2)
    fail(Errc::bad_config, "need at least two window boundaries");
  for (size_t i = 1; i < boundaries.size(); ++i)
    if (!(boundaries[i] > boundaries[i - 1]))
      fail(Errc::bad_config, "window boundaries must increase");
  std::vector<WindowSpec> out;
  const int n = static_cast<int>(boundaries.size()) - 1;
  for (int i = 0; i < n; ++i) {
    WindowSpec w;
    w.start = nearest_grid_index(grid, boundaries[i]);
    w.end = nearest_grid_index(grid, boundaries[i + 1]);
    if (i == n - 1) ++w.end;  // the last boundary column stays inside
    w.id = "w" + std::to_string(i + 1);
    if (w.width() < 2) fail(Errc::bad_config, "window narrower than two columns");
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Mat> window_slabs(const std::vector<ChromatogramSample>& samples,
                              const WindowSpec& w) {
  if (samples.empty()) fail(Errc::empty_input, "no samples to slice");
  std::vector<Mat> slabs;
  slabs.reserve(samples.size());
  for (const auto& s : samples) {
    if (w.start < 0 || w.end > s.n_rt())
      fail(Errc::value_out_of_range, "window exceeds the grid");
    slabs.push_back(s.intensity.middleCols(w.start, w.width()));
  }
  return slabs;
}

namespace {

// Nonnegative solve of min x'Hx/2 - g'x via active sets on the normal
// equations.
Vec fnnls(const Mat& H, const Vec& g) {
  const int F = static_cast<int>(H.rows());
  Vec x = Vec::Zero(F);
  std::vector<bool> passive(F, false);
  Vec w = g;
  const double tol = 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff());
  int outer = 30 * F + 30;
  while (outer-- > 0) {
    int cand = -1;
    double best = tol;
    for (int i = 0; i < F; ++i)
      if (!passive[i] && w[i] > best) {
        best = w[i];
        cand = i;
      }
    if (cand < 0) break;
    passive[cand] = true;
    int inner = 30 * F + 30;
    while (inner-- > 0) {
      std::vector<int> idx;
      for (int i = 0; i < F; ++i)
        if (passive[i]) idx.push_back(i);
      const int m = static_cast<int>(idx.size());
      Mat Hp(m, m);
      Vec gp(m);
      for (int a = 0; a < m; ++a) {
        gp[a] = g[idx[a]];
        for (int b = 0; b < m; ++b) Hp(a, b) = H(idx[a], idx[b]);
      }
      Vec s = Eigen::CompleteOrthogonalDecomposition<Mat>(Hp).solve(gp);
      bool all_pos = true;
      for (int a = 0; a < m; ++a)
        if (s[a] <= 0.0) all_pos = false;
      if (all_pos) {
        x.setZero();
        for (int a = 0; a < m; ++a) x[idx[a]] = s[a];
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (int a = 0; a < m; ++a)
        if (s[a] <= 0.0) {
          double xa = x[idx[a]];
          alpha = std::min(alpha, xa / (xa - s[a]));
        }
      if (!std::isfinite(alpha)) break;
      for (int a = 0; a < m; ++a) {
        double nx = x[idx[a]] + alpha * (s[a] - x[idx[a]]);
        x[idx[a]] = nx;
      }
      double tiny = 1e-14 * std::max(1.0, x.maxCoeff());
      for (int a = 0; a < m; ++a)
        if (x[idx[a]] <= tiny && s[a] <= 0.0) {
          x[idx[a]] = 0.0;
          passive[idx[a]] = false;
        }
    }
    w = g - H * x;
  }
  return x;
}

Mat orthonormal_polar(const Mat& G) {
  const int F = static_cast<int>(G.cols());
  Mat W = G.transpose() * G;
  Eigen::SelfAdjointEigenSolver<Mat> es(W);
  const Vec& lam = es.eigenvalues();
  double lmax = lam[F - 1];
  if (lmax > 0.0 && lam[0] > 1e-24 * lmax) {
    Vec inv_sqrt(F);
    for (int i = 0; i < F; ++i) inv_sqrt[i] = 1.0 / std::sqrt(lam[i]);
    return G * es.eigenvectors() * inv_sqrt.asDiagonal() *
           es.eigenvectors().transpose();
  }
  Eigen::JacobiSVD<Mat> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

struct FitState {
  Mat A, B, C;
  std::vector<Mat> P;
  double loss = 0.0;
  int iterations = 0;
  bool converged = false;
};

FitState run_single_start(const std::vector<Mat>& slabs, int F,
                          const Parafac2Params& params, int start,
                          double total_ss) {
  const int K = static_cast<int>(slabs.size());
  const int I = static_cast<int>(slabs[0].rows());

  FitState st;
  if (start == 0) {
    Mat M = Mat::Zero(I, I);
    for (const auto& t : slabs) M += t * t.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    st.A.resize(I, F);
    for (int f = 0; f < F; ++f)
      st.A.col(f) = es.eigenvectors().col(I - 1 - f).cwiseAbs();
    st.B = Mat::Identity(F, F);
    st.C = Mat::Ones(K, F);
  } else {
    Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(start)));
    st.A.resize(I, F);
    for (int i = 0; i < I; ++i)
      for (int f = 0; f < F; ++f) st.A(i, f) = std::abs(rng.normal());
    Mat R(F, F);
    for (int i = 0; i < F; ++i)
      for (int f = 0; f < F; ++f) R(i, f) = rng.normal();
    st.B = Eigen::HouseholderQR<Mat>(R).householderQ() * Mat::Identity(F, F);
    st.C.resize(K, F);
    for (int k = 0; k < K; ++k)
      for (int f = 0; f < F; ++f) st.C(k, f) = 0.5 + std::abs(rng.normal());
  }
  st.P.assign(K, Mat());

  std::vector<Mat> Y(K);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= params.max_iter; ++it) {
    // per-slab rotations, then the projected views
    double proj_ss = 0.0;
    for (int k = 0; k < K; ++k) {
      Mat M = st.A * st.C.row(k).asDiagonal() * st.B.transpose();
      st.P[k] = orthonormal_polar(slabs[k].transpose() * M);
      Y[k] = slabs[k] * st.P[k];
      proj_ss += Y[k].squaredNorm();
    }

    // spectra, nonnegative row by row
    Mat BtB = st.B.transpose() * st.B;
    Mat H = (st.C.transpose() * st.C).cwiseProduct(BtB);
    Mat G = Mat::Zero(I, F);
    for (int k = 0; k < K; ++k)
      G += Y[k] * st.B * st.C.row(k).asDiagonal();
    for (int i = 0; i < I; ++i)
      st.A.row(i) = fnnls(H, G.row(i).transpose()).transpose();

    // shared profile basis
    Mat AtA = st.A.transpose() * st.A;
    Mat M2 = (st.C.transpose() * st.C).cwiseProduct(AtA);
    Mat N = Mat::Zero(F, F);
    for (int k = 0; k < K; ++k)
      N += Y[k].transpose() * st.A * st.C.row(k).asDiagonal();
    st.B = Eigen::CompleteOrthogonalDecomposition<Mat>(M2)
               .solve(N.transpose())
               .transpose();

    // slab weights
    BtB = st.B.transpose() * st.B;
    Mat Hc = AtA.cwiseProduct(BtB);
    Eigen::CompleteOrthogonalDecomposition<Mat> cod_c(Hc);
    for (int k = 0; k < K; ++k) {
      Mat M1 = st.A.transpose() * Y[k];
      Vec r = (M1.cwiseProduct(st.B.transpose())).rowwise().sum();
      st.C.row(k) = cod_c.solve(r).transpose();
    }

    // loss on the full data, using the rotation identity
    double sse = total_ss - proj_ss;
    for (int k = 0; k < K; ++k)
      sse += (Y[k] - st.A * st.C.row(k).asDiagonal() * st.B.transpose())
                 .squaredNorm();
    sse = std::max(0.0, sse);
    st.loss = sse;
    st.iterations = it;
    if (sse / total_ss < 1e-15) {
      st.converged = true;
      break;
    }
    if (std::isfinite(prev) &&
        (prev - sse) / std::max(prev, 1e-300) < params.tol) {
      st.converged = true;
      break;
    }
    prev = sse;
  }
  // rotations consistent with the final factors
  double proj_ss = 0.0;
  for (int k = 0; k < K; ++k) {
    Mat M = st.A * st.C.row(k).asDiagonal() * st.B.transpose();
    st.P[k] = orthonormal_polar(slabs[k].transpose() * M);
    Y[k] = slabs[k] * st.P[k];
    proj_ss += Y[k].squaredNorm();
  }
  double sse = total_ss - proj_ss;
  for (int k = 0; k < K; ++k)
    sse += (Y[k] - st.A * st.C.row(k).asDiagonal() * st.B.transpose())
               .squaredNorm();
  st.loss = std::max(0.0, sse);
  return st;
}

}  // namespace

Parafac2Model fit_parafac2(const std::vector<Mat>& slabs, int n_factors,
                           const Parafac2Params& params) {
  if (slabs.empty()) fail(Errc::empty_input, "no slabs to fit");
  const int K = static_cast<int>(slabs.size());
  const int I = static_cast<int>(slabs[0].rows());
  if (n_factors < 1) fail(Errc::bad_config, "factor count must be positive");
  if (params.n_starts < 1 || params.max_iter < 1 || !(params.tol > 0.0))
    fail(Errc::bad_config, "bad fit parameters");
  double total_ss = 0.0;
  for (const auto& t : slabs) {
    if (t.rows() != I) fail(Errc::dimension_mismatch, "slab row counts differ");
    if (t.cols() < n_factors || I < n_factors)
      fail(Errc::bad_config, "factor count exceeds a slab dimension");
    if (!t.allFinite()) fail(Errc::nonfinite_value, "slab has non-finite values");
    total_ss += t.squaredNorm();
  }

  Parafac2Model m;
  if (total_ss == 0.0) {
    const int F = n_factors;
    m.A = Mat::Identity(I, F);
    m.B = Mat::Identity(F, F);
    m.C = Mat::Zero(K, F);
    m.P.assign(K, Mat());
    for (int k = 0; k < K; ++k)
      m.P[k] = Mat::Identity(slabs[k].cols(), F);
    m.loss = 0.0;
    m.fit = 100.0;
    m.converged = true;
    m.iterations = 0;
    m.best_start = 0;
    return m;
  }

  FitState best;
  best.loss = std::numeric_limits<double>::infinity();
  int best_start = -1;
  for (int s = 0; s < params.n_starts; ++s) {
    FitState st = run_single_start(slabs, n_factors, params, s, total_ss);
    if (st.loss < best.loss) {
      best = std::move(st);
      best_start = s;
    }
  }

  // unit column norms on spectra and basis; scale lives in the weights
  const int F = n_factors;
  for (int f = 0; f < F; ++f) {
    double na = best.A.col(f).norm();
    if (na > 0.0) {
      best.A.col(f) /= na;
      best.C.col(f) *= na;
    }
    double nb = best.B.col(f).norm();
    if (nb > 0.0) {
      best.B.col(f) /= nb;
      best.C.col(f) *= nb;
    }
  }
  // profiles point up on average
  {
    Vec col_sign = Vec::Zero(F);
    for (const auto& p : best.P)
      col_sign += (p * best.B).colwise().sum().transpose();
    for (int f = 0; f < F; ++f)
      if (col_sign[f] < 0.0) {
        best.B.col(f) *= -1.0;
        best.C.col(f) *= -1.0;
      }
  }

  m.A = std::move(best.A);
  m.B = std::move(best.B);
  m.C = std::move(best.C);
  m.P = std::move(best.P);
  m.loss = best.loss;
  m.fit = 100.0 * (1.0 - best.loss / total_ss);
  m.iterations = best.iterations;
  m.converged = best.converged;
  m.best_start = best_start;
  return m;
}

double fit_percent(const Parafac2Model& m, const std::vector<Mat>& slabs) {
  double total = 0.0, sse = 0.0;
  for (size_t k = 0; k < slabs.size(); ++k) {
    total += slabs[k].squaredNorm();
    sse += (slabs[k] -
            m.A * m.C.row(k).asDiagonal() * (m.P[k] * m.B).transpose())
               .squaredNorm();
  }
  if (total == 0.0) return 100.0;
  return 100.0 * (1.0 - sse / total);
}

double core_consistency(const Parafac2Model& m, const std::vector<Mat>& slabs) {
  const int F = static_cast<int>(m.A.cols());
  if (F == 1) return 100.0;
  const int K = static_cast<int>(slabs.size());
  Mat Ap = Eigen::CompleteOrthogonalDecomposition<Mat>(m.A).pseudoInverse();
  Mat Bp = Eigen::CompleteOrthogonalDecomposition<Mat>(m.B).pseudoInverse();
  Mat Cp = Eigen::CompleteOrthogonalDecomposition<Mat>(m.C).pseudoInverse();
  std::vector<Mat> Z(K);
  for (int k = 0; k < K; ++k)
    Z[k] = Ap * (slabs[k] * m.P[k]) * Bp.transpose();
  double num = 0.0;
  for (int r = 0; r < F; ++r) {
    Mat Gr = Mat::Zero(F, F);
    for (int k = 0; k < K; ++k) Gr += Cp(r, k) * Z[k];
    Gr(r, r) -= 1.0;
    num += Gr.squaredNorm();
  }
  return 100.0 * (1.0 - num / F);
}

const Parafac2Model& RankSelection::best_model() const {
  for (size_t i = 0; i < table.size(); ++i)
    if (table[i].n_factors == best) return models[i];
  fail(Errc::bad_argument, "selection table is inconsistent");
}

RankSelection select_rank(const std::vector<Mat>& slabs,
                          const RankSelectParams& params) {
  if (params.f_min < 1 || params.f_max < params.f_min)
    fail(Errc::bad_config, "bad factor range");
  const int n = params.f_max - params.f_min + 1;
  RankSelection sel;
  sel.models.resize(n);
  sel.table.resize(n);
  std::vector<double> cores(n);

  auto one = [&](int j) {
    int F = params.f_min + j;
    Parafac2Params p = params.fit;
    p.seed = mix_seed(params.fit.seed, static_cast<std::uint64_t>(F));
    sel.models[j] = fit_parafac2(slabs, F, p);
    cores[j] = core_consistency(sel.models[j], slabs);
  };
  if (params.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int j = 0; j < n; ++j) one(j);
  } else {
    for (int j = 0; j < n; ++j) one(j);
  }

  double prev_fit = 0.0;
  for (int j = 0; j < n; ++j) {
    RankRow row;
    row.n_factors = params.f_min + j;
    row.fit = sel.models[j].fit;
    row.gain = row.fit - prev_fit;
    row.core = cores[j];
    prev_fit = row.fit;
    sel.table[j] = row;
  }
  sel.best = params.f_min;
  for (int j = 0; j < n; ++j)
    if (sel.table[j].core >= params.core_threshold &&
        sel.table[j].gain >= params.min_gain)
      sel.best = sel.table[j].n_factors;
  for (int j = 0; j < n; ++j)
    sel.table[j].selected = (sel.table[j].n_factors == sel.best);
  return sel;
}

double elution_peak_ratio(const Vec& mean_profile) {
  Vec v = mean_profile.cwiseMax(0.0);
  double mx = v.maxCoeff();
  if (mx <= 0.0) return 1.0;
  std::vector<double> s(v.data(), v.data() + v.size());
  std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
  double med = s[s.size() / 2];
  if (s.size() % 2 == 0) {
    double lo = *std::max_element(s.begin(), s.begin() + s.size() / 2);
    med = 0.5 * (med + lo);
  }
  if (med <= 0.0) return std::numeric_limits<double>::infinity();
  return mx / med;
}

double elution_span_fraction(const Vec& mean_profile, double level) {
  Vec v = mean_profile.cwiseMax(0.0);
  double mx = v.maxCoeff();
  if (mx <= 0.0) return 1.0;
  int above = 0;
  for (int i = 0; i < v.size(); ++i)
    if (v[i] > level * mx) ++above;
  return static_cast<double>(above) / static_cast<double>(v.size());
}

ComponentClass classify_component(const Vec& mean_profile,
                                  const ClassifyParams& params) {
  if (mean_profile.size() == 0) fail(Errc::empty_input, "empty profile");
  if (elution_peak_ratio(mean_profile) < params.peak_ratio)
    return ComponentClass::baseline;
  if (elution_span_fraction(mean_profile, params.span_level) >
      params.span_fraction)
    return ComponentClass::baseline;
  return ComponentClass::chemical;
}

ExtractResult extract_concentrations(const std::vector<Parafac2Model>& models,
                                     const std::vector<WindowSpec>& windows,
                                     const ClassifyParams& params) {
  if (models.empty()) fail(Errc::empty_input, "no window models");
  if (models.size() != windows.size())
    fail(Errc::inconsistent_windows, "window and model counts differ");
  const int K = static_cast<int>(models[0].C.rows());
  int total = 0;
  for (const auto& m : models) {
    if (m.C.rows() != K)
      fail(Errc::inconsistent_windows, "slab counts differ between windows");
    total += static_cast<int>(m.C.cols());
  }
  ExtractResult out;
  out.conc.resize(K, total);
  int col = 0;
  for (size_t w = 0; w < models.size(); ++w) {
    const auto& m = models[w];
    const int F = static_cast<int>(m.C.cols());
    const int Kw = static_cast<int>(m.P.size());
    for (int f = 0; f < F; ++f, ++col) {
      ComponentRecord rec;
      rec.window_index = static_cast<int>(w);
      rec.factor_index = f;
      rec.id = windows[w].id + "_f" + std::to_string(f + 1);
      rec.spectrum = m.A.col(f);
      Vec mean_prof = Vec::Zero(windows[w].width());
      for (int k = 0; k < Kw; ++k) mean_prof += m.P[k] * m.B.col(f);
      mean_prof /= static_cast<double>(Kw);
      rec.mean_elution = mean_prof;
      rec.cls = classify_component(mean_prof, params);
      out.conc.col(col) = m.C.col(f);
      out.components.push_back(std::move(rec));
    }
  }
  return out;
}

Mat normalize_internal_standards(const Mat& conc,
                                 const std::vector<int>& standard_cols,
                                 const std::vector<std::string>& row_labels) {
  if (standard_cols.empty())
    fail(Errc::bad_config, "no internal standard columns given");
  for (int c : standard_cols)
    if (c < 0 || c >= conc.cols())
      fail(Errc::bad_argument, "standard column out of range");
  Mat out = conc;
  for (int r = 0; r < conc.rows(); ++r) {
    double m = 0.0;
    for (int c : standard_cols) m += conc(r, c);
    m /= static_cast<double>(standard_cols.size());
    if (!(m > 0.0)) {
      std::string label = r < static_cast<int>(row_labels.size())
                              ? row_labels[r]
                              : ("row " + std::to_string(r));
      fail(Errc::zero_standard, "standard response vanished for " + label);
    }
    out.row(r) /= m;
  }
  return out;
}

}  // namespace rp
