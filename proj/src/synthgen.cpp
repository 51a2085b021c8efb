#include "riverpath/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "riverpath/specmatch.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rp {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHeightScale = 40.0;  // peak height per concentration unit

// decreasing, positive cubic in level/100 scaled by the nominal hours
Eigen::Vector4d reach_cubic(double t0) {
  return {1.9 * t0, -0.18 * t0 / 1e2, 0.004 * t0 / 1e4, -0.0002 * t0 / 1e6};
}

void set_spectrum(ScenarioComponent& c, const std::vector<double>& mz_axis,
                  std::initializer_list<std::pair<int, double>> peaks) {
  for (auto [ch, inten] : peaks) {
    c.mz.push_back(mz_axis[ch]);
    c.intensity.push_back(inten);
  }
}

}  // namespace

Scenario mini_rhine_scenario(std::uint64_t seed) {
  Scenario sc;
  sc.seed = seed;
  sc.mz_axis.resize(20);
  const double masses[20] = {41,  45,  51,  55,  57,  63,  69,  77,  81,  85,
                             91,  95,  97,  105, 109, 115, 119, 123, 127, 131};
  for (int i = 0; i < 20; ++i) sc.mz_axis[i] = masses[i];

  auto site = [&](const char* id, const char* name, double km, const char* bank,
                  double tol, double base, double amp, double period,
                  double phase) {
    ScenarioSite s;
    s.id = id;
    s.name = name;
    s.river_km = km;
    s.bank = bank;
    s.tolerance_h = tol;
    s.level_base = base;
    s.level_amp = amp;
    s.level_period_h = period;
    s.level_phase = phase;
    sc.sites.push_back(std::move(s));
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  site("HON", "Honnef", 640, "middle", 3.0, 420, 110, 84, 0.3);
  site("ORL", "Orsoy left", 762, "left", 1.0, 450, 95, 76, 1.1);
  site("ORM", "Orsoy middle", 763, "middle", 1.0, 452, 96, 77, 1.3);
  site("ORR", "Orsoy right", 764, "right", 3.0, 455, 98, 78, 1.6);
  site("WSL", "Wesel tributary", 780, "left", 1.0, 180, 45, 66, 0.9);
  site("WSR", "Wesel right", 781, "right", 3.0, 470, 105, 81, 2.2);
  site("REE", "Rees", 837, "middle", 3.0, 500, 115, 88, 0.5);
  site("LOB", "Lobith", 865, "middle", 2.0, 520, 120, 91, 1.9);
  site("BIM", "Bimmen", 900, "middle", nan, 540, 125, 95, 2.7);

  auto reach = [&](const char* from, const char* to, double t0, double mixing,
                   double disp) {
    ScenarioReach r;
    r.from = from;
    r.to = to;
    r.flow_coeff = reach_cubic(t0);
    r.mixing = mixing;
    r.dispersion_h = disp;
    sc.reaches.push_back(std::move(r));
  };
  reach("HON", "ORL", 20.0, 0.92, 0.6);
  reach("ORL", "ORM", 0.5, 0.95, 0.15);
  reach("ORM", "ORR", 0.5, 0.95, 0.15);
  reach("ORR", "WSR", 3.2, 0.90, 0.4);
  reach("WSL", "WSR", 1.4, 0.35, 0.3);
  reach("WSR", "REE", 9.0, 0.90, 0.8);
  reach("REE", "LOB", 4.6, 0.93, 0.5);
  reach("LOB", "BIM", 6.0, 0.91, 0.55);

  sc.path = {"HON", "ORL", "ORM", "ORR", "WSL", "WSR", "REE", "LOB", "BIM"};
  sc.window_boundaries_min = {0.0, 4.21875, 8.4375, 12.65625, 16.875};

  auto comp = [&](const char* name, ComponentRole role, const char* inj,
                  double center, double sigma, double amp, double period,
                  double phase,
                  std::initializer_list<std::pair<int, double>> peaks) {
    ScenarioComponent c;
    c.name = name;
    c.role = role;
    c.injection_site = inj;
    c.elution_center_min = center;
    c.elution_sigma_min = sigma;
    c.amplitude = amp;
    c.period_h = period;
    c.phase = phase;
    set_spectrum(c, sc.mz_axis, peaks);
    sc.components.push_back(std::move(c));
  };
  using R = ComponentRole;
  comp("istd_alpha", R::standard, "", 1.40625, 0.09, 1.0, 0, 0,
       {{2, 999}, {7, 430}, {12, 210}});
  comp("istd_beta", R::standard, "", 9.375, 0.09, 1.0, 0, 0,
       {{4, 999}, {9, 380}, {15, 240}});
  comp("riverwide_a", R::source, "HON", 2.4375, 0.10, 1.2, 36, 0.0,
       {{0, 999}, {5, 520}, {10, 180}, {16, 90}});
  comp("riverwide_b", R::source, "HON", 3.28125, 0.08, 0.9, 52, 0.8,
       {{1, 999}, {6, 610}, {11, 330}});
  comp("riverwide_c", R::source, "HON", 5.15625, 0.11, 1.5, 73, 1.7,
       {{3, 999}, {8, 450}, {13, 270}, {18, 120}});
  comp("riverwide_d", R::source, "HON", 6.09375, 0.09, 0.7, 91, 2.9,
       {{5, 999}, {14, 520}, {19, 300}});
  comp("riverwide_e", R::source, "HON", 10.3125, 0.12, 1.1, 110, 4.1,
       {{6, 999}, {11, 740}, {17, 150}});
  comp("bankmark_l", R::bank_local, "ORL", 7.078125, 0.10, 1.0, 61, 0.4,
       {{8, 999}, {0, 340}, {15, 420}});
  comp("bankmark_m", R::bank_local, "ORM", 11.25, 0.08, 0.8, 44, 1.2,
       {{9, 999}, {2, 280}, {16, 510}});
  comp("bankmark_r", R::bank_local, "ORR", 13.359375, 0.10, 1.3, 83, 2.1,
       {{10, 999}, {3, 390}, {17, 260}});
  comp("tribmark_w", R::tributary, "WSL", 14.4375, 0.09, 2.2, 67, 3.3,
       {{12, 999}, {4, 310}, {18, 480}});
  {
    ScenarioComponent c;
    c.name = "midpulse_r";
    c.role = R::midreach;
    c.injection_site = "REE";  // enters between Wesel and Rees
    c.injection_reach = "WSR-REE";
    c.injection_offset = 0.5;
    c.elution_center_min = 15.46875;
    c.elution_sigma_min = 0.11;
    c.amplitude = 1.4;
    c.period_h = 57;
    c.phase = 1.5;
    set_spectrum(c, sc.mz_axis, {{13, 999}, {1, 350}, {19, 410}});
    sc.components.push_back(std::move(c));
  }
  return sc;
}

double site_level_cm(const Scenario& sc, int site_index, double t_h) {
  const auto& s = sc.sites[site_index];
  return s.level_base +
         s.level_amp * std::sin(2.0 * kPi * t_h / s.level_period_h +
                                s.level_phase);
}

double true_flow_time_h(const ScenarioReach& r, double level_cm) {
  const auto& c = r.flow_coeff;
  return ((c[3] * level_cm + c[2]) * level_cm + c[1]) * level_cm + c[0];
}

namespace {

double component_pattern(const ScenarioComponent& c, double t_h) {
  if (c.role == ComponentRole::standard) return c.amplitude;
  if (c.period_h <= 0.0) return c.amplitude;
  if (c.pulse_width_h > 0.0) {
    double s = std::fmod(t_h / c.period_h + c.phase / (2.0 * kPi), 1.0);
    if (s < 0.0) s += 1.0;
    double frac = s * c.period_h / c.pulse_width_h;
    if (frac >= 1.0) return 0.0;
    double u = std::sin(kPi * frac);
    return c.amplitude * u * u;
  }
  return c.amplitude *
         (0.55 + 0.45 * std::sin(2.0 * kPi * t_h / c.period_h + c.phase));
}

std::vector<int> topo_site_order(const Scenario& sc) {
  std::map<std::string, int> idx;
  for (size_t i = 0; i < sc.sites.size(); ++i) idx[sc.sites[i].id] = static_cast<int>(i);
  std::vector<int> indeg(sc.sites.size(), 0);
  std::vector<std::vector<int>> adj(sc.sites.size());
  for (const auto& r : sc.reaches) {
    if (!idx.count(r.from) || !idx.count(r.to))
      fail(Errc::bad_config, "reach uses unknown site");
    adj[idx[r.from]].push_back(idx[r.to]);
    ++indeg[idx[r.to]];
  }
  std::vector<int> order;
  for (size_t i = 0; i < sc.sites.size(); ++i)
    if (indeg[i] == 0) order.push_back(static_cast<int>(i));
  for (size_t h = 0; h < order.size(); ++h)
    for (int nxt : adj[order[h]])
      if (--indeg[nxt] == 0) order.push_back(nxt);
  if (order.size() != sc.sites.size())
    fail(Errc::bad_config, "river reaches form a cycle");
  return order;
}

}  // namespace

RiverSeries gen_river_series(const Scenario& sc) {
  if (sc.sites.empty() || sc.components.empty())
    fail(Errc::bad_config, "scenario has no sites or components");
  if (!(sc.time_step_h > 0.0) || !(sc.horizon_h > sc.time_step_h))
    fail(Errc::bad_config, "bad simulation grid");
  RiverSeries rs;
  const int nt = static_cast<int>(std::floor(sc.horizon_h / sc.time_step_h)) + 1;
  rs.grid_h.resize(nt);
  for (int i = 0; i < nt; ++i) rs.grid_h[i] = i * sc.time_step_h;
  const int ns = static_cast<int>(sc.sites.size());
  const int nc = static_cast<int>(sc.components.size());
  for (int s = 0; s < ns; ++s) rs.site_ids.push_back(sc.sites[s].id);
  rs.conc.assign(ns, Mat::Zero(nt, nc));

  std::map<std::string, int> site_idx;
  for (int s = 0; s < ns; ++s) site_idx[sc.sites[s].id] = s;

  // local injections
  for (int c = 0; c < nc; ++c) {
    const auto& comp = sc.components[c];
    if (comp.role == ComponentRole::standard) continue;
    auto it = site_idx.find(comp.injection_site);
    if (it == site_idx.end())
      fail(Errc::bad_config, "component enters at unknown site " +
                                 comp.injection_site);
    Mat& m = rs.conc[it->second];
    for (int i = 0; i < nt; ++i)
      m(i, c) += component_pattern(comp, rs.grid_h[i]);
  }

  // transport downstream in dependency order
  auto order = topo_site_order(sc);
  for (int s : order) {
    for (const auto& r : sc.reaches) {
      if (site_idx.at(r.to) != s) continue;
      int u = site_idx.at(r.from);
      const Mat& up = rs.conc[u];
      Mat& down = rs.conc[s];
      for (int i = 0; i < nt; ++i) {
        double a = rs.grid_h[i] + true_flow_time_h(r, site_level_cm(sc, u, rs.grid_h[i]));
        if (r.dispersion_h <= 0.0) {
          int j = static_cast<int>(std::llround(a / sc.time_step_h));
          if (j >= 0 && j < nt)
            for (int c = 0; c < nc; ++c)
              if (sc.components[c].role != ComponentRole::standard)
                down(j, c) += r.mixing * up(i, c);
          continue;
        }
        const double sig = r.dispersion_h;
        int j0 = std::max(0, static_cast<int>(std::ceil((a - 4 * sig) / sc.time_step_h)));
        int j1 = std::min(nt - 1, static_cast<int>(std::floor((a + 4 * sig) / sc.time_step_h)));
        if (j0 > j1) continue;
        double total = 0.0;
        for (int j = j0; j <= j1; ++j) {
          double d = (rs.grid_h[j] - a) / sig;
          total += std::exp(-0.5 * d * d);
        }
        if (total <= 0.0) continue;
        for (int j = j0; j <= j1; ++j) {
          double d = (rs.grid_h[j] - a) / sig;
          double w = std::exp(-0.5 * d * d) / total;
          for (int c = 0; c < nc; ++c)
            if (sc.components[c].role != ComponentRole::standard)
              down(j, c) += r.mixing * w * up(i, c);
        }
      }
    }
  }

  // spiked standards are present everywhere at the nominal level
  for (int c = 0; c < nc; ++c)
    if (sc.components[c].role == ComponentRole::standard)
      for (int s = 0; s < ns; ++s)
        rs.conc[s].col(c).setConstant(sc.components[c].amplitude);

  // sampling schedule: follow each scheduled volume down the path
  std::map<std::string, const ScenarioReach*> reach_by_from;
  for (const auto& r : sc.reaches) reach_by_from[r.from] = &r;
  rs.events.assign(ns, {});
  Rng jit(mix_seed(sc.seed, 101));
  Rng decoy_rng(mix_seed(sc.seed, 102));
  Rng drop_rng(mix_seed(sc.seed, 103));

  auto level_at = [&](int s, double t) { return site_level_cm(sc, s, t); };
  auto round_h = [&](double t_h) {
    return static_cast<double>(std::llround(t_h * 3600.0)) / 3600.0;
  };

  // a path site with no reach from the previous main-stem site joins through
  // its own outgoing reach (tributary); scheduled after the main stem so the
  // meeting constraint holds against the junction sample actually taken
  std::vector<std::vector<double>> ideal(ns);
  for (int v = 0; v < sc.n_volumes; ++v) {
    double t = sc.start_offset_h + v * sc.volume_spacing_h;
    std::map<int, double> sched;
    std::vector<int> tributaries;
    double prev_t = 0.0;
    int prev_site = -1;
    for (const auto& sid : sc.path) {
      int s = site_idx.at(sid);
      if (prev_site < 0) {
        sched[s] = round_h(t);
      } else {
        const ScenarioReach* direct = nullptr;
        for (const auto& r : sc.reaches)
          if (r.from == sc.sites[prev_site].id && r.to == sid) direct = &r;
        if (!direct) {
          tributaries.push_back(s);
          continue;
        }
        double tol = sc.sites[prev_site].tolerance_h;
        double base = prev_t + true_flow_time_h(*direct, level_at(prev_site, prev_t));
        sched[s] = round_h(base + jit.uniform(-1.0, 1.0) * sc.jitter_frac * tol);
      }
      prev_t = sched[s];
      prev_site = s;
    }
    for (int s : tributaries) {
      const std::string& sid = sc.sites[s].id;
      const ScenarioReach* out =
          reach_by_from.count(sid) ? reach_by_from.at(sid) : nullptr;
      if (!out) fail(Errc::bad_config, "path site has no outgoing reach: " + sid);
      int junction = site_idx.at(out->to);
      if (!sched.count(junction))
        fail(Errc::bad_config, "tributary joins outside the path: " + sid);
      double junc_t = sched.at(junction);
      double guess = junc_t - true_flow_time_h(*out, level_at(s, junc_t));
      for (int k = 0; k < 6; ++k)
        guess = junc_t - true_flow_time_h(*out, level_at(s, guess));
      double tol = sc.sites[s].tolerance_h;
      sched[s] = round_h(guess + jit.uniform(-1.0, 1.0) * 0.5 * sc.jitter_frac * tol);
    }
    for (const auto& sid : sc.path) {
      int s = site_idx.at(sid);
      double this_t = sched.at(s);
      bool dropped = drop_rng.uniform() < sc.dropout_rate;
      if (!dropped && this_t >= 0.0 && this_t <= sc.horizon_h) {
        SampleEvent ev;
        ev.site_id = sid;
        ev.timestamp = sc.epoch + static_cast<std::int64_t>(std::llround(this_t * 3600.0));
        ev.level_cm = level_at(s, this_t);
        ev.volume = v;
        rs.events[s].push_back(ev);
      }
      ideal[s].push_back(this_t);
    }
  }

  // decoy samples keep their distance from every scheduled window
  for (int s = 0; s < ns; ++s) {
    int n_decoys = static_cast<int>(std::floor(sc.extra_rate * sc.n_volumes));
    double tol = sc.sites[s].tolerance_h;
    double guard = (std::isfinite(tol) ? tol : 3.0) + 1.5;
    for (int d = 0; d < n_decoys; ++d) {
      for (int attempt = 0; attempt < 24; ++attempt) {
        double t = round_h(decoy_rng.uniform(0.0, sc.horizon_h));
        bool clear = true;
        for (double id_t : ideal[s])
          if (std::abs(id_t - t) < guard) clear = false;
        if (!clear) continue;
        SampleEvent ev;
        ev.site_id = sc.sites[s].id;
        ev.timestamp = sc.epoch + static_cast<std::int64_t>(std::llround(t * 3600.0));
        ev.level_cm = level_at(s, t);
        ev.volume = -1;
        rs.events[s].push_back(ev);
        break;
      }
    }
    std::sort(rs.events[s].begin(), rs.events[s].end(),
              [](const SampleEvent& a, const SampleEvent& b) {
                return a.timestamp < b.timestamp;
              });
    // collapsing duplicate timestamps keeps the manifest loadable
    rs.events[s].erase(
        std::unique(rs.events[s].begin(), rs.events[s].end(),
                    [](const SampleEvent& a, const SampleEvent& b) {
                      return a.timestamp == b.timestamp;
                    }),
        rs.events[s].end());
  }
  return rs;
}

Vec sample_concentration(const Scenario& sc, const RiverSeries& rs,
                         int site_index, double t_h) {
  const Mat& m = rs.conc[site_index];
  const int nt = static_cast<int>(rs.grid_h.size());
  double x = t_h / sc.time_step_h;
  int i = std::clamp(static_cast<int>(std::floor(x)), 0, nt - 2);
  double f = std::clamp(x - i, 0.0, 1.0);
  return (1.0 - f) * m.row(i).transpose() + f * m.row(i + 1).transpose();
}

namespace {

std::string compact_timestamp(std::int64_t t) {
  std::string iso = format_iso8601_utc(t);
  std::string out;
  for (char c : iso)
    if (c != '-' && c != ':') out += c;
  return out;
}

}  // namespace

SynthOutput gen_chromatograms(const Scenario& sc, const RiverSeries& rs,
                              const std::string& out_dir, Exec exec) {
  fs::create_directories(fs::path(out_dir) / "data");
  fs::create_directories(fs::path(out_dir) / "truth");

  const int ns = static_cast<int>(sc.sites.size());
  const int nc = static_cast<int>(sc.components.size());
  const int n_mz = static_cast<int>(sc.mz_axis.size());
  const int n_rt = sc.native_rt_points;
  const double rt_max = (n_rt - 1) * sc.rt_step_min;

  std::map<std::string, int> site_idx;
  for (int s = 0; s < ns; ++s) site_idx[sc.sites[s].id] = s;

  // channel weights for the drifting baseline, fixed across samples
  Vec chan_w(n_mz);
  for (int i = 0; i < n_mz; ++i) chan_w[i] = std::exp(-0.12 * i);
  chan_w /= chan_w.sum();

  struct Job {
    int site;
    int event;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < ns; ++s)
    for (size_t e = 0; e < rs.events[s].size(); ++e)
      jobs.push_back({s, static_cast<int>(e)});

  struct Rendered {
    std::string rel_path;
    ChromatogramSample sample;
    Vec truth_conc;
    double shift_min = 0.0;
    double factor = 1.0;
  };
  std::vector<Rendered> rendered(jobs.size());

  auto render_one = [&](size_t ji) {
    const Job& job = jobs[ji];
    const auto& ev = rs.events[job.site][job.event];
    double t_h = static_cast<double>(ev.timestamp - sc.epoch) / 3600.0;
    Rng rng(mix_seed(mix_seed(sc.seed, static_cast<std::uint64_t>(job.site + 7)),
                     static_cast<std::uint64_t>(ev.timestamp)));
    Rendered out;
    out.truth_conc = sample_concentration(sc, rs, job.site, t_h);
    out.shift_min =
        rng.uniform(-1.0, 1.0) * sc.shift_max_points * (rt_max / sc.grid_intervals);
    out.factor = 1.0 + rng.uniform(-1.0, 1.0) * sc.intensity_spread;

    ChromatogramSample s;
    s.site_id = ev.site_id;
    s.timestamp = ev.timestamp;
    s.water_level = ev.level_cm;
    s.mz_axis = Eigen::Map<const Vec>(sc.mz_axis.data(), n_mz);
    s.rt_axis.resize(n_rt);
    for (int j = 0; j < n_rt; ++j) s.rt_axis[j] = j * sc.rt_step_min;
    s.intensity = Mat::Zero(n_mz, n_rt);

    for (int c = 0; c < nc; ++c) {
      double conc = out.truth_conc[c];
      if (conc <= 0.0) continue;
      const auto& comp = sc.components[c];
      double ctr = comp.elution_center_min + out.shift_min;
      double sig = comp.elution_sigma_min;
      int j0 = std::max(0, static_cast<int>(std::floor((ctr - 5 * sig) / sc.rt_step_min)));
      int j1 = std::min(n_rt - 1, static_cast<int>(std::ceil((ctr + 5 * sig) / sc.rt_step_min)));
      for (size_t p = 0; p < comp.mz.size(); ++p) {
        // sticks are scaled so the tallest is one
        double rel = comp.intensity[p] / 999.0;
        int ch = -1;
        for (int i = 0; i < n_mz; ++i)
          if (sc.mz_axis[i] == comp.mz[p]) ch = i;
        if (ch < 0) continue;
        double h = kHeightScale * conc * rel;
        for (int j = j0; j <= j1; ++j) {
          double d = (s.rt_axis[j] - ctr) / sig;
          s.intensity(ch, j) += h * std::exp(-0.5 * d * d);
        }
      }
    }

    // smooth drifting floor plus detector noise
    double phase = rng.uniform(0.0, 2.0 * kPi);
    double b_amp = sc.baseline_amp * kHeightScale;
    for (int j = 0; j < n_rt; ++j) {
      double prof = b_amp * (0.8 + 0.4 * std::sin(kPi * s.rt_axis[j] / rt_max + phase));
      for (int i = 0; i < n_mz; ++i) s.intensity(i, j) += prof * chan_w[i] * n_mz;
    }
    s.intensity *= out.factor;
    double noise = sc.noise_rel * kHeightScale;
    for (int i = 0; i < n_mz; ++i)
      for (int j = 0; j < n_rt; ++j) {
        double v = s.intensity(i, j) + noise * rng.normal();
        v = std::max(0.0, v);
        s.intensity(i, j) = std::round(v / sc.quantum) * sc.quantum;
      }

    out.rel_path = "data/" + ev.site_id + "_" + compact_timestamp(ev.timestamp);
    out.sample = std::move(s);
    rendered[ji] = std::move(out);
  };

  const int nj = static_cast<int>(jobs.size());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < nj; ++i) render_one(i);
  } else {
    for (int i = 0; i < nj; ++i) render_one(i);
  }

  for (const auto& r : rendered)
    save_sample(r.sample, (fs::path(out_dir) / r.rel_path).string());

  SynthOutput out;
  out.n_samples = nj;

  // manifest, sorted by site then time
  {
    std::vector<size_t> order(rendered.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (rendered[a].sample.site_id != rendered[b].sample.site_id)
        return rendered[a].sample.site_id < rendered[b].sample.site_id;
      return rendered[a].sample.timestamp < rendered[b].sample.timestamp;
    });
    std::string text = "site_id,timestamp,bundle_path\n";
    for (size_t i : order)
      text += rendered[i].sample.site_id + "," +
              format_iso8601_utc(rendered[i].sample.timestamp) + "," +
              rendered[i].rel_path + "\n";
    out.manifest_path = (fs::path(out_dir) / "manifest.csv").string();
    write_text_file(out.manifest_path, text);
  }

  // flow table from the true cubics, noise free
  {
    std::vector<FlowTableRow> rows;
    for (const auto& r : sc.reaches) {
      int u = site_idx.at(r.from);
      double lo = sc.sites[u].level_base - sc.sites[u].level_amp - 5.0;
      double hi = sc.sites[u].level_base + sc.sites[u].level_amp + 5.0;
      for (int i = 0; i < sc.levels_per_reach; ++i) {
        double lv = lo + (hi - lo) * i / (sc.levels_per_reach - 1);
        FlowTableRow row;
        row.reach_id = r.id();
        row.from_site = r.from;
        row.to_site = r.to;
        row.water_level_cm = lv;
        row.flow_time_h = true_flow_time_h(r, lv);
        rows.push_back(row);
      }
    }
    out.flow_table_path = (fs::path(out_dir) / "flow_table.csv").string();
    save_flow_table(rows, out.flow_table_path);
  }

  // site table
  {
    std::vector<SiteRecord> rows;
    for (const auto& s : sc.sites) {
      SiteRecord rec;
      rec.site_id = s.id;
      rec.name = s.name;
      rec.river_km = s.river_km;
      rec.bank = s.bank;
      rec.tolerance_h = s.tolerance_h;
      rows.push_back(rec);
    }
    out.site_table_path = (fs::path(out_dir) / "sites.csv").string();
    save_site_table(rows, out.site_table_path);
  }

  // spectral library: every real component plus a few distractors
  {
    std::vector<LibrarySpectrum> lib;
    for (const auto& c : sc.components)
      lib.push_back({c.name, c.mz, c.intensity});
    lib.push_back({"decoy_one", {sc.mz_axis[7], sc.mz_axis[14]}, {999, 300}});
    lib.push_back({"decoy_two", {sc.mz_axis[11], sc.mz_axis[2]}, {999, 250}});
    lib.push_back({"decoy_three", {sc.mz_axis[16], sc.mz_axis[5]}, {999, 350}});
    out.library_path = (fs::path(out_dir) / "library.msp").string();
    save_library(lib, out.library_path);
  }

  // truth ledger: sampled concentrations and rendering factors per site
  {
    out.truth_dir = (fs::path(out_dir) / "truth").string();
    for (int s = 0; s < ns; ++s) {
      std::vector<std::string> cols{"volume", "level_cm", "shift_min", "factor"};
      for (const auto& c : sc.components) cols.push_back(c.name);
      Mat vals(rs.events[s].size(), cols.size());
      std::vector<std::string> labels;
      int row = 0;
      for (size_t e = 0; e < rs.events[s].size(); ++e) {
        const auto& ev = rs.events[s][e];
        labels.push_back(format_iso8601_utc(ev.timestamp));
        // find the rendered record for the factors
        const Rendered* rr = nullptr;
        for (size_t ji = 0; ji < jobs.size(); ++ji)
          if (jobs[ji].site == s && jobs[ji].event == static_cast<int>(e))
            rr = &rendered[ji];
        vals(row, 0) = ev.volume;
        vals(row, 1) = ev.level_cm;
        vals(row, 2) = rr ? rr->shift_min : 0.0;
        vals(row, 3) = rr ? rr->factor : 1.0;
        for (int c = 0; c < nc; ++c) vals(row, 4 + c) = rr->truth_conc[c];
        ++row;
      }
      save_matrix_csv((fs::path(out.truth_dir) / ("conc_" + sc.sites[s].id + ".csv")).string(),
                      cols, vals, &labels, "timestamp");
    }
    // complete chains in the synchronized-volume file format
    std::string header = "volume";
    for (const auto& sid : sc.path) header += "," + sid;
    std::string text = header + "\n";
    for (int v = 0; v < sc.n_volumes; ++v) {
      std::vector<std::string> stamps;
      bool complete = true;
      for (const auto& sid : sc.path) {
        int s = site_idx.at(sid);
        const SampleEvent* hit = nullptr;
        for (const auto& ev : rs.events[s])
          if (ev.volume == v) hit = &ev;
        if (!hit) {
          complete = false;
          break;
        }
        stamps.push_back(format_iso8601_utc(hit->timestamp));
      }
      if (!complete) continue;
      text += std::to_string(v);
      for (const auto& st : stamps) text += "," + st;
      text += "\n";
    }
    write_text_file((fs::path(out.truth_dir) / "volumes.csv").string(), text);
  }

  return out;
}

}  // namespace rp
