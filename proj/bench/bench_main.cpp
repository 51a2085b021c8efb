// Times every parallel kernel against its serial reference on fixed
// workloads and checks that both produce identical results. Wall times vary
// with the machine; the identity column must always read yes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "riverpath/common.hpp"
#include "riverpath/flowsync.hpp"
#include "riverpath/parafac2.hpp"
#include "riverpath/pathmodel.hpp"
#include "riverpath/preprocess.hpp"
#include "riverpath/synthgen.hpp"

namespace fs = std::filesystem;
using namespace rp;

namespace {

struct Timed {
  double ms = 0.0;
};

template <typename F>
double time_ms(F&& f) {
  auto t0 = std::chrono::steady_clock::now();
  f();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void report(const char* name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-24s %9.1f ms %9.1f ms %7.2fx   %s\n", name, serial_ms,
              parallel_ms, serial_ms / std::max(parallel_ms, 1e-9),
              identical ? "yes" : "NO");
}

bool same_samples(const std::vector<ChromatogramSample>& a,
                  const std::vector<ChromatogramSample>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].site_id != b[i].site_id || a[i].timestamp != b[i].timestamp)
      return false;
    if ((a[i].intensity - b[i].intensity).cwiseAbs().maxCoeff() != 0.0)
      return false;
  }
  return true;
}

std::vector<ChromatogramSample> shifted_family(int n_samples) {
  Rng rng(4242);
  std::vector<ChromatogramSample> out;
  const int n_mz = 24, n_rt = 361;
  Vec mz(n_mz);
  for (int i = 0; i < n_mz; ++i) mz[i] = 40 + 4 * i;
  for (int s = 0; s < n_samples; ++s) {
    ChromatogramSample smp;
    smp.site_id = "S" + std::to_string(s % 7);
    smp.timestamp = 1368514800 + 3600 * s;
    smp.water_level = 300.0;
    smp.mz_axis = mz;
    smp.rt_axis.resize(n_rt);
    for (int j = 0; j < n_rt; ++j) smp.rt_axis[j] = j * (16.875 / (n_rt - 1));
    smp.intensity.resize(n_mz, n_rt);
    double shift = rng.uniform(-4.0, 4.0);
    for (int i = 0; i < n_mz; ++i) {
      double c1 = 90 + 3.0 * i + shift, c2 = 240 - 2.0 * i + shift;
      for (int j = 0; j < n_rt; ++j) {
        double v = 40.0 * std::exp(-0.5 * (j - c1) * (j - c1) / 16.0) +
                   25.0 * std::exp(-0.5 * (j - c2) * (j - c2) / 25.0) +
                   2.0 + 0.01 * j + 0.2 * rng.normal();
        smp.intensity(i, j) = std::max(0.0, v);
      }
    }
    out.push_back(std::move(smp));
  }
  return out;
}

void bench_align() {
  auto samples = shifted_family(40);
  ReferenceGrid grid = build_reference_grid(samples, 360);
  AlignResult rs, rp_;
  double s = time_ms([&] { rs = align_dataset(samples, grid, {}, Exec::serial); });
  double p =
      time_ms([&] { rp_ = align_dataset(samples, grid, {}, Exec::parallel); });
  report("sample alignment", s, p, same_samples(rs.samples, rp_.samples));
}

void bench_rank() {
  Rng rng(515);
  const int I = 30, J = 40, K = 12, F = 3;
  Mat A(I, F), B(F, F), C(K, F);
  for (int i = 0; i < I; ++i)
    for (int f = 0; f < F; ++f) A(i, f) = std::abs(rng.normal());
  for (int i = 0; i < F; ++i)
    for (int f = 0; f < F; ++f) B(i, f) = rng.normal() + 0.4;
  for (int k = 0; k < K; ++k)
    for (int f = 0; f < F; ++f) C(k, f) = 0.5 + rng.uniform();
  std::vector<Mat> slabs;
  for (int k = 0; k < K; ++k) {
    Mat R(J, F);
    for (int j = 0; j < J; ++j)
      for (int f = 0; f < F; ++f) R(j, f) = rng.normal();
    Mat P = Eigen::HouseholderQR<Mat>(R).householderQ() * Mat::Identity(J, F);
    slabs.push_back(A * C.row(k).asDiagonal() * (P * B).transpose());
  }
  RankSelectParams prm;
  prm.f_min = 1;
  prm.f_max = 4;
  prm.fit.n_starts = 2;
  prm.fit.max_iter = 300;
  RankSelection rs, rp_;
  double s = time_ms([&] {
    auto q = prm;
    q.exec = Exec::serial;
    rs = select_rank(slabs, q);
  });
  double p = time_ms([&] {
    auto q = prm;
    q.exec = Exec::parallel;
    rp_ = select_rank(slabs, q);
  });
  bool same = rs.best == rp_.best && rs.table.size() == rp_.table.size();
  for (std::size_t i = 0; same && i < rs.table.size(); ++i)
    same = rs.table[i].fit == rp_.table[i].fit &&
           rs.table[i].core == rp_.table[i].core;
  report("rank scan", s, p, same);
}

void bench_outer() {
  Rng rng(99);
  const int N = 400;
  auto block = [&](const std::string& id, int p_) {
    BlockData b;
    b.id = id;
    b.X.resize(N, p_);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < p_; ++j) b.X(i, j) = rng.normal();
    for (int j = 0; j < p_; ++j)
      b.var_names.push_back(id + "_x" + std::to_string(j));
    for (int i = 0; i < N; ++i) b.row_labels.push_back("r" + std::to_string(i));
    return b;
  };
  std::vector<BlockData> data;
  PathSpec spec;
  for (int k = 0; k < 6; ++k) {
    std::string id = "B" + std::to_string(k);
    data.push_back(block(id, 8));
    spec.blocks.push_back(id);
    if (k) spec.edges.push_back({"B" + std::to_string(k - 1), id});
  }
  for (int k = 1; k < 6; ++k)
    data[k].X += 0.8 * data[k - 1].X;  // correlated chain, non-trivial lvs
  OuterParams op;
  op.cv.max_lv = 6;
  ProcessModel ms, mp;
  double s = time_ms([&] {
    auto q = op;
    q.exec = Exec::serial;
    ms = fit_process_model(data, spec, q);
  });
  double p = time_ms([&] {
    auto q = op;
    q.exec = Exec::parallel;
    mp = fit_process_model(data, spec, q);
  });
  bool same = true;
  for (std::size_t b = 0; b < ms.outer.blocks.size(); ++b)
    same = same && ms.outer.blocks[b].r2 == mp.outer.blocks[b].r2 &&
           ms.outer.blocks[b].n_lv == mp.outer.blocks[b].n_lv;
  for (std::size_t b = 0; b < ms.inner.blocks.size(); ++b)
    same = same && ms.inner.blocks[b].p2 == mp.inner.blocks[b].p2;
  report("path model fit", s, p, same);
}

void bench_match() {
  // dense five-site chain with loose windows keeps the search busy
  Rng rng(2024);
  Dataset ds;
  std::vector<SiteRecord> sites;
  std::map<std::string, FlowModel> models;
  std::vector<std::string> path;
  const int n_sites = 5, per_site = 2000;
  for (int k = 0; k < n_sites; ++k) {
    std::string id = "S" + std::to_string(k);
    path.push_back(id);
    SiteRecord r;
    r.site_id = id;
    r.name = id;
    r.river_km = 100.0 + 40.0 * k;
    r.bank = "right";
    r.tolerance_h = (k + 1 < n_sites)
                        ? 6.0
                        : std::numeric_limits<double>::quiet_NaN();
    sites.push_back(r);
    SiteSeries series;
    series.site_id = id;
    for (int i = 0; i < per_site; ++i) {
      ChromatogramSample smp;
      smp.site_id = id;
      smp.timestamp =
          1368514800 + 3600 * (4 * k + 3 * i) / 2 +
          static_cast<std::int64_t>(rng.uniform(-5400.0, 5400.0));
      smp.water_level = 300.0 + 30.0 * std::sin(0.3 * i + k);
      smp.mz_axis = Vec::Constant(1, 50.0);
      smp.rt_axis = Vec::Constant(1, 0.0);
      smp.intensity = Mat::Constant(1, 1, 1.0);
      series.samples.push_back(std::move(smp));
    }
    ds.sites.push_back(std::move(series));
    if (k) {
      FlowModel m;
      m.reach_id = "S" + std::to_string(k - 1) + "-" + id;
      m.from_site = "S" + std::to_string(k - 1);
      m.to_site = id;
      m.coeff = Eigen::Vector4d(4.0, 0.002, 0.0, 0.0);
      m.level_min = 200.0;
      m.level_max = 400.0;
      models[m.reach_id] = m;
    }
  }
  std::vector<SynchronizedVolume> vs, vp;
  double s = time_ms(
      [&] { vs = match_volumes(ds, models, sites, path, Exec::serial); });
  double p = time_ms(
      [&] { vp = match_volumes(ds, models, sites, path, Exec::parallel); });
  bool same = vs.size() == vp.size() && !vs.empty();
  for (std::size_t i = 0; same && i < vs.size(); ++i)
    for (std::size_t k = 0; k < vs[i].samples.size(); ++k)
      same = same && vs[i].samples[k].timestamp == vp[i].samples[k].timestamp;
  report("volume matching", s, p, same);
}

void bench_render() {
  Scenario sc = mini_rhine_scenario(5);
  sc.n_volumes = 8;
  sc.horizon_h = 160.0;
  RiverSeries rs = gen_river_series(sc);
  std::string base =
      (fs::temp_directory_path() / "riverpath_bench").string();
  fs::remove_all(base);
  fs::create_directories(base + "/s");
  fs::create_directories(base + "/p");
  double s = time_ms([&] { gen_chromatograms(sc, rs, base + "/s", Exec::serial); });
  double p =
      time_ms([&] { gen_chromatograms(sc, rs, base + "/p", Exec::parallel); });
  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool same = true;
  for (const auto& e : fs::recursive_directory_iterator(base + "/s")) {
    if (!e.is_regular_file()) continue;
    std::string rel = fs::relative(e.path(), base + "/s").string();
    if (rel == "pipeline.cfg") continue;  // embeds its own output paths
    same = same && slurp(e.path().string()) == slurp(base + "/p/" + rel);
  }
  report("chromatogram render", s, p, same);
  fs::remove_all(base);
}

}  // namespace

int main() {
  std::printf("%-24s %12s %12s %9s   %s\n", "kernel", "serial", "parallel",
              "speedup", "identical");
  bench_align();
  bench_rank();
  bench_outer();
  bench_match();
  bench_render();
  return 0;
}
