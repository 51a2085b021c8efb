#include "riverpath/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rp {

namespace {

// Linear interpolation of signal[u0..u1] onto m equally spaced points.
void interp_segment(const Vec& signal, int u0, int u1, int m, double* out) {
  const double span = u1 - u0;
  for (int t = 0; t < m; ++t) {
    double x = u0 + span * t / (m - 1);
    int j = std::min(static_cast<int>(std::floor(x)), u1 - 1);
    double f = x - j;
    out[t] = signal[j] * (1.0 - f) + signal[j + 1] * f;
  }
}

double segment_score(const Vec& signal, int u0, int u1, const Vec& target,
                     int b0, int b1) {
  const int m = b1 - b0 + 1;
  Vec w(m);
  interp_segment(signal, u0, u1, m, w.data());
  return pearson_or_zero(w, target.segment(b0, m));
}

std::vector<int> target_boundaries(int length, int n_segments) {
  std::vector<int> b(n_segments + 1);
  for (int i = 0; i <= n_segments; ++i)
    b[i] = static_cast<int>(
        std::llround(static_cast<double>(i) * (length - 1) / n_segments));
  return b;
}

// Symmetric pentadiagonal LDL^T solve; diag/sub1/sub2 hold the lower bands.
Vec penta_solve(Vec diag, Vec sub1, Vec sub2, const Vec& rhs) {
  const int n = static_cast<int>(diag.size());
  Vec d(n), l1(std::max(0, n - 1)), l2(std::max(0, n - 2));
  for (int j = 0; j < n; ++j) {
    double dj = diag[j];
    if (j >= 1) dj -= l1[j - 1] * l1[j - 1] * d[j - 1];
    if (j >= 2) dj -= l2[j - 2] * l2[j - 2] * d[j - 2];
    if (!(dj > 0.0))
      fail(Errc::numerical_failure, "smoother system lost definiteness");
    d[j] = dj;
    if (j + 1 < n) {
      double v = sub1[j];
      if (j >= 1) v -= l2[j - 1] * l1[j - 1] * d[j - 1];
      l1[j] = v / dj;
    }
    if (j + 2 < n) l2[j] = sub2[j] / dj;
  }
  Vec z = rhs;
  for (int j = 0; j < n; ++j) {
    if (j >= 1) z[j] -= l1[j - 1] * z[j - 1];
    if (j >= 2) z[j] -= l2[j - 2] * z[j - 2];
  }
  for (int j = 0; j < n; ++j) z[j] /= d[j];
  for (int j = n - 1; j >= 0; --j) {
    if (j + 1 < n) z[j] -= l1[j] * z[j + 1];
    if (j + 2 < n) z[j] -= l2[j] * z[j + 2];
  }
  return z;
}

}  // namespace

ReferenceGrid build_reference_grid(
    const std::vector<const ChromatogramSample*>& samples, int r) {
  if (r < 1) fail(Errc::bad_config, "grid needs at least one interval");
  if (samples.empty()) fail(Errc::empty_input, "no samples for grid");
  double max_rt = 0.0;
  for (const auto* s : samples)
    max_rt = std::max(max_rt, s->rt_axis[s->rt_axis.size() - 1]);
  if (!(max_rt > 0.0)) fail(Errc::value_out_of_range, "grid span is zero");
  ReferenceGrid g;
  g.points.resize(r + 1);
  for (int i = 0; i <= r; ++i) g.points[i] = i * max_rt / r;
  g.spacing = max_rt / r;
  return g;
}

ReferenceGrid build_reference_grid(const std::vector<ChromatogramSample>& samples,
                                   int r) {
  std::vector<const ChromatogramSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return build_reference_grid(ptrs, r);
}

int nearest_grid_index(const ReferenceGrid& grid, double t) {
  const int n = static_cast<int>(grid.points.size());
  int lo = static_cast<int>(std::floor(t / grid.spacing));
  lo = std::clamp(lo, 0, n - 1);
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = std::max(0, lo - 1); c <= std::min(n - 1, lo + 1); ++c) {
    double d = std::abs(grid.points[c] - t);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

ChromatogramSample resample_sample(const ChromatogramSample& s,
                                   const ReferenceGrid& grid) {
  ChromatogramSample out;
  out.site_id = s.site_id;
  out.timestamp = s.timestamp;
  out.water_level = s.water_level;
  out.mz_axis = s.mz_axis;
  out.rt_axis = grid.points;
  out.intensity = Mat::Zero(s.n_mz(), grid.points.size());
  for (int j = 0; j < s.n_rt(); ++j)
    out.intensity.col(nearest_grid_index(grid, s.rt_axis[j])) +=
        s.intensity.col(j);
  return out;
}

AslsResult asls_baseline(const Vec& y, const AslsParams& params) {
  if (!(params.lambda > 0.0)) fail(Errc::bad_config, "lambda must be positive");
  if (!(params.p > 0.0 && params.p < 1.0))
    fail(Errc::bad_config, "asymmetry must lie in (0, 1)");
  if (params.max_iter < 1) fail(Errc::bad_config, "need at least one sweep");
  const int n = static_cast<int>(y.size());
  if (n == 0) fail(Errc::empty_input, "empty signal");
  if (!y.allFinite()) fail(Errc::nonfinite_value, "signal has non-finite values");
  if (n <= 2) return {y, 1, true};

  // lambda * D'D for the second difference matrix, lower bands
  Vec pen0(n), pen1(n - 1), pen2(n - 2);
  for (int j = 0; j < n; ++j) {
    double v = 0.0;
    for (int i = std::max(0, j - 2); i <= std::min(n - 3, j); ++i) {
      double c = (j == i) ? 1.0 : (j == i + 1 ? -2.0 : 1.0);
      v += c * c;
    }
    pen0[j] = params.lambda * v;
  }
  for (int j = 0; j + 1 < n; ++j) {
    double v = 0.0;
    for (int i = std::max(0, j - 1); i <= std::min(n - 3, j); ++i) {
      double cj = (j == i) ? 1.0 : -2.0;
      double ck = (j + 1 == i + 1) ? -2.0 : 1.0;
      v += cj * ck;
    }
    pen1[j] = params.lambda * v;
  }
  for (int j = 0; j + 2 < n; ++j) pen2[j] = params.lambda;

  Vec w = Vec::Ones(n);
  Vec z(n);
  int it = 0;
  bool converged = false;
  for (it = 1; it <= params.max_iter; ++it) {
    Vec diag = pen0 + w;
    z = penta_solve(diag, pen1, pen2, (w.array() * y.array()).matrix());
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      double wi = (y[i] > z[i]) ? params.p : 1.0 - params.p;
      if (wi != w[i]) {
        w[i] = wi;
        changed = true;
      }
    }
    if (!changed) {
      converged = true;
      break;
    }
  }
  return {z, std::min(it, params.max_iter), converged};
}

CowResult cow_warp(const Vec& signal, const Vec& target,
                   const CowParams& params) {
  const int L = static_cast<int>(target.size());
  if (static_cast<int>(signal.size()) != L)
    fail(Errc::dimension_mismatch, "signal and target lengths differ");
  if (params.seg_len < 2) fail(Errc::bad_config, "segments need two points");
  if (params.slack < 0) fail(Errc::bad_config, "slack cannot be negative");
  if (L < 5) fail(Errc::value_out_of_range, "signal too short to warp");
  int n_seg = std::max(
      1, static_cast<int>(std::llround(static_cast<double>(L - 1) / params.seg_len)));
  while (n_seg > 1 && (L - 1) / n_seg < 2) --n_seg;
  const auto b = target_boundaries(L, n_seg);
  const int S = 2 * params.slack + 1;
  const double neg = -std::numeric_limits<double>::infinity();

  // shift candidates ordered by (|s|, s) so ties settle nearest to identity
  std::vector<int> order(S);
  std::iota(order.begin(), order.end(), -params.slack);
  std::sort(order.begin(), order.end(), [](int a, int b2) {
    return std::abs(a) != std::abs(b2) ? std::abs(a) < std::abs(b2) : a < b2;
  });

  std::vector<std::vector<double>> best(n_seg + 1,
                                        std::vector<double>(S, neg));
  std::vector<std::vector<int>> pred(n_seg + 1, std::vector<int>(S, 0));
  auto sidx = [&](int s) { return s + params.slack; };
  auto feasible = [&](int i, int s) {
    if (i == 0 || i == n_seg) return s == 0;
    int u = b[i] + s;
    return u >= 1 && u <= L - 2;
  };
  best[0][sidx(0)] = 0.0;
  for (int i = 0; i < n_seg; ++i) {
    for (int s_next : order) {
      if (!feasible(i + 1, s_next)) continue;
      double acc = neg;
      int arg = 0;
      for (int s : order) {
        if (!feasible(i, s)) continue;
        if (best[i][sidx(s)] == neg) continue;
        int u0 = b[i] + s, u1 = b[i + 1] + s_next;
        if (u1 - u0 < 2) continue;
        double sc = best[i][sidx(s)] +
                    segment_score(signal, u0, u1, target, b[i], b[i + 1]);
        if (sc > acc) {
          acc = sc;
          arg = s;
        }
      }
      if (acc != neg) {
        best[i + 1][sidx(s_next)] = acc;
        pred[i + 1][sidx(s_next)] = arg;
      }
    }
  }
  if (best[n_seg][sidx(0)] == neg)
    fail(Errc::numerical_failure, "no feasible warp path");

  CowResult res;
  res.score = best[n_seg][sidx(0)];
  std::vector<int> shifts(n_seg + 1);
  shifts[n_seg] = 0;
  for (int i = n_seg; i > 0; --i)
    shifts[i - 1] = pred[i][sidx(shifts[i])];
  res.path.target = b;
  res.path.source.resize(n_seg + 1);
  for (int i = 0; i <= n_seg; ++i) res.path.source[i] = b[i] + shifts[i];
  res.warped = apply_warp(res.path, signal);
  return res;
}

Vec apply_warp(const WarpPath& path, const Vec& signal) {
  const int n_seg = static_cast<int>(path.target.size()) - 1;
  if (n_seg < 1 || path.source.size() != path.target.size())
    fail(Errc::bad_argument, "warp path is malformed");
  if (path.source.back() >= static_cast<int>(signal.size()))
    fail(Errc::dimension_mismatch, "warp path exceeds the signal");
  const int L = path.target.back() + 1;
  Vec out(L);
  for (int i = 0; i < n_seg; ++i) {
    int b0 = path.target[i], b1 = path.target[i + 1];
    int u0 = path.source[i], u1 = path.source[i + 1];
    if (u1 - u0 < 1 || b1 - b0 < 1)
      fail(Errc::bad_argument, "warp path is not increasing");
    int m = b1 - b0 + 1;
    Vec seg(m);
    interp_segment(signal, u0, u1, m, seg.data());
    for (int t = 0; t < m; ++t) out[b0 + t] = seg[t];
  }
  return out;
}

namespace {

struct Corrected {
  ChromatogramSample sample;
  Vec tic;
  bool baseline_converged = true;
};

Corrected resample_and_debase(const ChromatogramSample& s,
                              const ReferenceGrid& grid,
                              const AslsParams& asls) {
  Corrected c;
  c.sample = resample_sample(s, grid);
  Vec tic = compute_tic(c.sample);
  auto base = asls_baseline(tic, asls);
  c.baseline_converged = base.converged;
  const int n_rt = c.sample.n_rt();
  for (int j = 0; j < n_rt; ++j) {
    double t = tic[j];
    if (t <= 0.0) continue;
    double scale = std::max(0.0, 1.0 - std::max(0.0, base.baseline[j]) / t);
    c.sample.intensity.col(j) *= scale;
  }
  c.tic = compute_tic(c.sample);
  return c;
}

}  // namespace

AlignResult align_dataset(const std::vector<ChromatogramSample>& samples,
                          const ReferenceGrid& grid, const AlignParams& params,
                          Exec exec) {
  if (samples.empty()) fail(Errc::empty_input, "nothing to align");
  const int n = static_cast<int>(samples.size());
  std::vector<Corrected> corrected(n);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i)
      corrected[i] = resample_and_debase(samples[i], grid, params.asls);
  } else {
    for (int i = 0; i < n; ++i)
      corrected[i] = resample_and_debase(samples[i], grid, params.asls);
  }

  std::vector<int> by_total(n);
  std::iota(by_total.begin(), by_total.end(), 0);
  std::vector<double> totals(n);
  for (int i = 0; i < n; ++i) totals[i] = corrected[i].tic.sum();
  std::stable_sort(by_total.begin(), by_total.end(), [&](int a, int b) {
    return totals[a] != totals[b] ? totals[a] < totals[b] : a < b;
  });
  const int ref = by_total[(n - 1) / 2];
  const Vec& ref_tic = corrected[ref].tic;

  AlignResult out;
  out.samples.resize(n);
  out.report.resize(n);
  out.reference_index = ref;
  auto process_one = [&](int i) {
    AlignReportRow row;
    row.site_id = corrected[i].sample.site_id;
    row.timestamp = corrected[i].sample.timestamp;
    row.baseline_converged = corrected[i].baseline_converged;
    row.corr_before = pearson_or_zero(corrected[i].tic, ref_tic);
    if (i == ref) {
      row.corr_after = row.corr_before;
      out.samples[i] = std::move(corrected[i].sample);
    } else {
      auto warp = cow_warp(corrected[i].tic, ref_tic, params.cow);
      ChromatogramSample w = corrected[i].sample;
      for (int r = 0; r < w.n_mz(); ++r)
        w.intensity.row(r) =
            apply_warp(warp.path, corrected[i].sample.intensity.row(r).transpose())
                .transpose();
      row.corr_after = pearson_or_zero(compute_tic(w), ref_tic);
      out.samples[i] = std::move(w);
    }
    out.report[i] = std::move(row);
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) process_one(i);
  } else {
    for (int i = 0; i < n; ++i) process_one(i);
  }
  return out;
}

}  // namespace rp
