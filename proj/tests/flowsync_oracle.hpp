// Exhaustive matching oracle and randomized schedule generator. The oracle
// enumerates every complete tuple satisfying the pairwise windows and picks
// the lexicographic minimum of the (|delta|, timestamp) key sequence, written
// independently of the production DFS.
#pragma once

#include "riverpath/flowsync.hpp"

#include <map>
#include <string>
#include <vector>

namespace rptest {

struct SyncCase {
  rp::Dataset ds;
  std::map<std::string, rp::FlowModel> models;
  std::vector<rp::SiteRecord> sites;
  std::vector<std::string> path;
};

struct OraclePick {
  std::int64_t time = 0;
  double level = 0.0;
};

namespace detail {

using Key = std::vector<std::pair<double, std::int64_t>>;

struct SiteSamples {
  std::vector<std::int64_t> times;
  std::vector<double> levels;
};

}  // namespace detail

// Full oracle. Kept as straightforward nested recursion over the constraint
// list; no ordering tricks, a plain global minimum at the leaves.
inline std::vector<rp::SynchronizedVolume> oracle_match(const SyncCase& sc) {
  auto cons = rp::resolve_path(sc.models, sc.sites, sc.path);

  std::map<std::string, detail::SiteSamples> table;
  for (const auto& id : sc.path) {
    detail::SiteSamples ss;
    const rp::SiteSeries* series = sc.ds.find(id);
    if (series) {
      std::vector<std::pair<std::int64_t, double>> tl;
      for (const auto& s : series->samples)
        tl.push_back({s.timestamp, s.water_level});
      std::sort(tl.begin(), tl.end());
      for (auto& [t, l] : tl) {
        ss.times.push_back(t);
        ss.levels.push_back(l);
      }
    }
    table[id] = std::move(ss);
  }

  using Key = detail::Key;
  std::vector<rp::SynchronizedVolume> out;
  const auto& first = table.at(sc.path[0]);

  for (std::size_t i0 = 0; i0 < first.times.size(); ++i0) {
    bool found = false;
    Key best_key;
    std::map<std::string, OraclePick> best_picks;

    std::map<std::string, OraclePick> picks;
    picks[sc.path[0]] = {first.times[i0], first.levels[i0]};
    Key key;

    // recursive lambda over constraints
    auto rec = [&](auto&& self, std::size_t k) -> void {
      if (k == cons.size()) {
        if (!found || key < best_key) {
          found = true;
          best_key = key;
          best_picks = picks;
        }
        return;
      }
      const auto& c = cons[k];
      const auto& model = sc.models.at(c.reach_id);
      const double tol_s = c.tolerance_h * 3600.0;
      if (!c.tributary) {
        const auto up = picks.at(c.upstream);
        auto est = rp::estimate_flow_time(model, up.level);
        if (!est.valid) return;
        double pred = static_cast<double>(up.time) + est.flow_time_h * 3600.0;
        const auto& cand = table.at(c.downstream);
        for (std::size_t i = 0; i < cand.times.size(); ++i) {
          double d = std::abs(static_cast<double>(cand.times[i]) - pred);
          if (d > tol_s) continue;
          picks[c.downstream] = {cand.times[i], cand.levels[i]};
          key.push_back({d, cand.times[i]});
          self(self, k + 1);
          key.pop_back();
          picks.erase(c.downstream);
        }
      } else {
        const auto junction = picks.at(c.downstream);
        const auto& cand = table.at(c.upstream);
        for (std::size_t i = 0; i < cand.times.size(); ++i) {
          auto est = rp::estimate_flow_time(model, cand.levels[i]);
          if (!est.valid) continue;
          double pred =
              static_cast<double>(cand.times[i]) + est.flow_time_h * 3600.0;
          double d = std::abs(static_cast<double>(junction.time) - pred);
          if (d > tol_s) continue;
          picks[c.upstream] = {cand.times[i], cand.levels[i]};
          key.push_back({d, cand.times[i]});
          self(self, k + 1);
          key.pop_back();
          picks.erase(c.upstream);
        }
      }
    };
    rec(rec, 0);

    if (found) {
      rp::SynchronizedVolume v;
      for (const auto& id : sc.path)
        v.samples.push_back({id, best_picks.at(id).time, -1});
      out.push_back(std::move(v));
    }
  }
  return out;
}

inline bool same_chains(const std::vector<rp::SynchronizedVolume>& a,
                        const std::vector<rp::SynchronizedVolume>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].samples.size() != b[i].samples.size()) return false;
    for (std::size_t k = 0; k < a[i].samples.size(); ++k) {
      if (a[i].samples[k].site_id != b[i].samples[k].site_id) return false;
      if (a[i].samples[k].timestamp != b[i].samples[k].timestamp) return false;
    }
  }
  return true;
}

inline rp::ChromatogramSample tiny_sample(const std::string& site,
                                          std::int64_t t, double level) {
  rp::ChromatogramSample s;
  s.site_id = site;
  s.timestamp = t;
  s.water_level = level;
  s.mz_axis = rp::Vec::Constant(1, 50.0);
  s.rt_axis = rp::Vec::Constant(1, 0.0);
  s.intensity = rp::Mat::Constant(1, 1, 1.0);
  return s;
}

// Randomized schedule: linear path of up to max_sites sites, sometimes with
// one tributary, jitter straddling the tolerance windows plus decoy samples.
inline SyncCase random_sync_case(rp::Rng& rng, int max_sites,
                                 int max_samples_per_site) {
  SyncCase sc;
  int n_main = static_cast<int>(rng.uniform_int(2, max_sites));
  bool with_trib = n_main >= 2 && max_sites >= 3 && rng.uniform() < 0.45;
  if (with_trib) n_main = std::min(n_main, max_sites - 1);

  std::vector<std::string> main_ids;
  for (int i = 0; i < n_main; ++i) main_ids.push_back("S" + std::to_string(i));
  int junction = with_trib
                     ? static_cast<int>(rng.uniform_int(1, n_main - 1))
                     : -1;

  // site table + path (tributary inserted right before its junction)
  for (int i = 0; i < n_main; ++i) {
    rp::SiteRecord r;
    r.site_id = main_ids[i];
    r.name = r.site_id;
    r.river_km = 100.0 + 50.0 * i;
    r.bank = "right";
    r.tolerance_h = (i + 1 < n_main) ? rng.uniform(0.5, 3.0)
                                     : std::numeric_limits<double>::quiet_NaN();
    sc.sites.push_back(r);
  }
  if (with_trib) {
    rp::SiteRecord r;
    r.site_id = "T";
    r.name = "T";
    r.river_km = 5.0;
    r.bank = "left";
    r.tolerance_h = rng.uniform(0.5, 3.0);
    sc.sites.push_back(r);
  }
  for (int i = 0; i < n_main; ++i) {
    if (with_trib && i == junction) sc.path.push_back("T");
    sc.path.push_back(main_ids[i]);
  }

  auto make_model = [&](const std::string& from, const std::string& to) {
    rp::FlowModel m;
    m.reach_id = from + "-" + to;
    m.from_site = from;
    m.to_site = to;
    double base = rng.uniform(2.0, 30.0);
    m.coeff << base, rng.uniform(-0.012, 0.002), rng.uniform(-1e-5, 1e-5), 0.0;
    m.level_min = 50.0;
    m.level_max = 650.0;
    m.fit_residual_rms = 0.0;
    m.n_rows = 8;
    sc.models[m.reach_id] = m;
  };
  for (int i = 0; i + 1 < n_main; ++i) make_model(main_ids[i], main_ids[i + 1]);
  if (with_trib) make_model("T", main_ids[junction]);

  // schedules
  int nv = static_cast<int>(rng.uniform_int(2, 7));
  std::map<std::string, std::map<std::int64_t, double>> samples;  // site -> t -> level
  auto add_sample = [&](const std::string& site, std::int64_t t, double lv) {
    auto& m = samples[site];
    while (m.count(t)) ++t;
    m[t] = lv;
  };
  auto tol_of = [&](const std::string& id) {
    for (const auto& s : sc.sites)
      if (s.site_id == id) return s.tolerance_h;
    return 1.0;
  };

  for (int v = 0; v < nv; ++v) {
    std::int64_t t = 1368511200 + static_cast<std::int64_t>(
                                      rng.uniform(0.0, 30.0 * 86400.0));
    double lv = rng.uniform(100.0, 500.0);
    add_sample(main_ids[0], t, lv);
    for (int i = 1; i < n_main; ++i) {
      const auto& m = sc.models.at(main_ids[i - 1] + "-" + main_ids[i]);
      double tf = m.eval(lv);
      double jitter = rng.uniform(-1.25, 1.25) * tol_of(main_ids[i - 1]);
      t = t + static_cast<std::int64_t>(std::llround((tf + jitter) * 3600.0));
      lv = rng.uniform(100.0, 500.0);
      add_sample(main_ids[i], t, lv);
      if (with_trib && i == junction) {
        const auto& tm = sc.models.at("T-" + main_ids[junction]);
        double tlv = rng.uniform(100.0, 500.0);
        double tjit = rng.uniform(-1.25, 1.25) * tol_of("T");
        std::int64_t tt = t - static_cast<std::int64_t>(std::llround(
                                  (tm.eval(tlv) - tjit) * 3600.0));
        add_sample("T", tt, tlv);
      }
    }
  }
  // decoys
  for (const auto& id : sc.path) {
    int extra = static_cast<int>(rng.uniform_int(0, 4));
    for (int e = 0; e < extra; ++e) {
      std::int64_t t = 1368511200 + static_cast<std::int64_t>(
                                        rng.uniform(0.0, 40.0 * 86400.0));
      add_sample(id, t, rng.uniform(100.0, 500.0));
    }
    while (static_cast<int>(samples[id].size()) > max_samples_per_site)
      samples[id].erase(std::prev(samples[id].end()));
  }

  for (const auto& id : sc.path) {
    rp::SiteSeries series;
    series.site_id = id;
    for (const auto& [t, lv] : samples[id])
      series.samples.push_back(tiny_sample(id, t, lv));
    sc.ds.sites.push_back(std::move(series));
  }
  std::sort(sc.ds.sites.begin(), sc.ds.sites.end(),
            [](const rp::SiteSeries& a, const rp::SiteSeries& b) {
              return a.site_id < b.site_id;
            });
  return sc;
}

}  // namespace rptest
