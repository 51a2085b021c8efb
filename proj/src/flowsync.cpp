#include "riverpath/flowsync.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rp {

FlowModel fit_flow_model(const std::vector<FlowTableRow>& table,
                         const std::string& reach_id) {
  std::vector<const FlowTableRow*> rows;
  for (const auto& r : table)
    if (r.reach_id == reach_id) rows.push_back(&r);
  if (rows.empty())
    fail(Errc::missing_flow_model, "no flow rows for reach " + reach_id);
  std::set<double> distinct;
  for (const auto* r : rows) distinct.insert(r->water_level_cm);
  if (rows.size() < 4 || distinct.size() < 4)
    fail(Errc::underdetermined_fit,
         "reach " + reach_id + " needs >= 4 rows with >= 4 distinct levels, got " +
             std::to_string(rows.size()) + " rows / " +
             std::to_string(distinct.size()) + " levels");

  const int n = static_cast<int>(rows.size());
  Mat v(n, 4);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    double L = rows[i]->water_level_cm;
    v(i, 0) = 1.0;
    v(i, 1) = L;
    v(i, 2) = L * L;
    v(i, 3) = L * L * L;
    y[i] = rows[i]->flow_time_h;
  }
  FlowModel m;
  m.reach_id = reach_id;
  m.from_site = rows[0]->from_site;
  m.to_site = rows[0]->to_site;
  m.coeff = v.colPivHouseholderQr().solve(y);
  if (!m.coeff.allFinite())
    fail(Errc::numerical_failure, "flow fit failed for reach " + reach_id);
  m.level_min = *distinct.begin();
  m.level_max = *distinct.rbegin();
  m.fit_residual_rms = std::sqrt((v * m.coeff - y).squaredNorm() / n);
  m.n_rows = n;
  return m;
}

std::map<std::string, FlowModel> fit_all_flow_models(
    const std::vector<FlowTableRow>& table) {
  std::set<std::string> reaches;
  for (const auto& r : table) reaches.insert(r.reach_id);
  if (reaches.empty()) fail(Errc::empty_input, "empty flow table");
  std::map<std::string, FlowModel> out;
  for (const auto& id : reaches) out[id] = fit_flow_model(table, id);
  return out;
}

FlowEstimate estimate_flow_time(const FlowModel& m, double water_level) {
  FlowEstimate e;
  e.flow_time_h = m.eval(water_level);
  e.extrapolated = water_level < m.level_min || water_level > m.level_max;
  e.valid = std::isfinite(e.flow_time_h) && e.flow_time_h > 0.0;
  return e;
}

namespace {

const SiteRecord& site_record(const std::vector<SiteRecord>& sites,
                              const std::string& id) {
  for (const auto& s : sites)
    if (s.site_id == id) return s;
  fail(Errc::unknown_site, "site " + id + " not in site table");
}

double tolerance_of(const std::vector<SiteRecord>& sites,
                    const std::string& id) {
  const auto& s = site_record(sites, id);
  if (!s.has_tolerance())
    fail(Errc::bad_config, "site " + id + " has no matching tolerance");
  return s.tolerance_h;
}

}  // namespace

std::vector<PathConstraint> resolve_path(
    const std::map<std::string, FlowModel>& models,
    const std::vector<SiteRecord>& sites,
    const std::vector<std::string>& path) {
  if (path.size() < 2)
    fail(Errc::invalid_path_spec, "path needs at least two sites");
  {
    std::set<std::string> uniq(path.begin(), path.end());
    if (uniq.size() != path.size())
      fail(Errc::invalid_path_spec, "path repeats a site");
  }
  for (const auto& id : path) site_record(sites, id);  // existence check

  auto has_model = [&](const std::string& a, const std::string& b) {
    return models.count(a + "-" + b) != 0;
  };

  // pass 1: greedy main stem
  std::vector<bool> main_stem(path.size(), false);
  main_stem[0] = true;
  std::size_t last_main = 0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (has_model(path[last_main], path[i])) {
      main_stem[i] = true;
      last_main = i;
    }
  }
  // pass 2: anchor tributaries at the next main-stem site downstream
  struct Trib {
    std::size_t pos;
    std::size_t junction;
  };
  std::vector<std::vector<std::size_t>> tribs_at(path.size());
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (main_stem[i]) continue;
    bool anchored = false;
    for (std::size_t j = i + 1; j < path.size() && !anchored; ++j) {
      if (main_stem[j] && has_model(path[i], path[j])) {
        tribs_at[j].push_back(i);
        anchored = true;
      }
    }
    if (!anchored)
      fail(Errc::missing_flow_model,
           "no flow model anchors site " + path[i] + " to the path");
  }

  std::vector<PathConstraint> out;
  std::size_t prev_main = 0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!main_stem[i]) continue;
    PathConstraint c;
    c.upstream = path[prev_main];
    c.downstream = path[i];
    c.reach_id = c.upstream + "-" + c.downstream;
    c.tolerance_h = tolerance_of(sites, c.upstream);
    c.tributary = false;
    out.push_back(c);
    for (std::size_t t : tribs_at[i]) {
      PathConstraint tc;
      tc.upstream = path[t];
      tc.downstream = path[i];
      tc.reach_id = tc.upstream + "-" + tc.downstream;
      tc.tolerance_h = tolerance_of(sites, tc.upstream);
      tc.tributary = true;
      out.push_back(tc);
    }
    prev_main = i;
  }
  return out;
}

namespace {

struct SiteIndex {
  std::vector<std::int64_t> times;
  std::vector<double> levels;
};

struct Slot {
  // resolution-order slot: fix a sample at `site` given the already fixed
  // sample at `anchor_slot`
  std::string site;
  int anchor_slot = -1;
  const FlowModel* model = nullptr;
  double tol_s = 0.0;
  bool reverse = false;  // tributary: this slot's site is the flow's upstream
};

struct Pick {
  int sample_index;
  std::int64_t time;
  double level;
  bool extrapolated;
};

// candidates within the window sorted by (|delta|, timestamp)
struct Cand {
  double adelta;
  std::int64_t time;
  int index;
  bool extrapolated;
  bool operator<(const Cand& o) const {
    if (adelta != o.adelta) return adelta < o.adelta;
    return time < o.time;
  }
};

bool search_slots(const std::vector<Slot>& slots,
                  const std::vector<const SiteIndex*>& slot_site,
                  std::size_t k, std::vector<Pick>& picks) {
  if (k == slots.size()) return true;
  const Slot& sl = slots[k];
  const SiteIndex& si = *slot_site[k];
  const Pick& anchor = picks[sl.anchor_slot];

  std::vector<Cand> cands;
  if (!sl.reverse) {
    // forward: anchor is upstream, its level drives the flow time
    FlowEstimate e = estimate_flow_time(*sl.model, anchor.level);
    if (e.valid) {
      double pred = static_cast<double>(anchor.time) + e.flow_time_h * 3600.0;
      auto lo = std::lower_bound(si.times.begin(), si.times.end(),
                                 static_cast<std::int64_t>(
                                     std::floor(pred - sl.tol_s - 1.0)));
      for (auto it = lo; it != si.times.end(); ++it) {
        double d = static_cast<double>(*it) - pred;
        if (d > sl.tol_s) break;
        if (std::abs(d) <= sl.tol_s) {
          int idx = static_cast<int>(it - si.times.begin());
          cands.push_back({std::abs(d), *it, idx, e.extrapolated});
        }
      }
    }
  } else {
    // tributary: candidate is upstream of the fixed junction sample, so the
    // flow time depends on the candidate's own level
    for (std::size_t i = 0; i < si.times.size(); ++i) {
      FlowEstimate e = estimate_flow_time(*sl.model, si.levels[i]);
      if (!e.valid) continue;
      double pred =
          static_cast<double>(si.times[i]) + e.flow_time_h * 3600.0;
      double d = static_cast<double>(anchor.time) - pred;
      if (std::abs(d) <= sl.tol_s)
        cands.push_back({std::abs(d), si.times[i], static_cast<int>(i),
                         e.extrapolated});
    }
  }
  std::sort(cands.begin(), cands.end());
  for (const auto& c : cands) {
    picks[k] = {c.index, c.time, slot_site[k]->levels[c.index],
                c.extrapolated};
    if (search_slots(slots, slot_site, k + 1, picks)) return true;
  }
  return false;
}

}  // namespace

std::vector<SynchronizedVolume> match_volumes(
    const Dataset& ds, const std::map<std::string, FlowModel>& models,
    const std::vector<SiteRecord>& sites, const std::vector<std::string>& path,
    Exec exec) {
  auto constraints = resolve_path(models, sites, path);

  // canonical per-site time-sorted index; water levels are required
  std::map<std::string, SiteIndex> index;
  for (const auto& id : path) {
    SiteIndex si;
    const SiteSeries* series = ds.find(id);
    if (series) {
      std::vector<const ChromatogramSample*> ptrs;
      for (const auto& s : series->samples) ptrs.push_back(&s);
      std::sort(ptrs.begin(), ptrs.end(),
                [](const ChromatogramSample* a, const ChromatogramSample* b) {
                  return a->timestamp < b->timestamp;
                });
      for (const auto* s : ptrs) {
        if (!s->has_water_level())
          fail(Errc::value_out_of_range,
               "sample " + id + " @ " + format_iso8601_utc(s->timestamp) +
                   " has no water_level; required for matching");
        si.times.push_back(s->timestamp);
        si.levels.push_back(s->water_level);
      }
    }
    index[id] = std::move(si);
  }

  // slots in resolution order; slot 0 is the first path site
  std::vector<Slot> slots(1);
  std::vector<std::string> slot_sites = {path[0]};
  for (const auto& c : constraints) {
    Slot sl;
    sl.site = c.tributary ? c.upstream : c.downstream;
    const std::string& anchor_site = c.tributary ? c.downstream : c.upstream;
    auto pos = std::find(slot_sites.begin(), slot_sites.end(), anchor_site);
    sl.anchor_slot = static_cast<int>(pos - slot_sites.begin());
    auto mit = models.find(c.reach_id);
    sl.model = &mit->second;
    sl.tol_s = c.tolerance_h * 3600.0;
    sl.reverse = c.tributary;
    slots.push_back(sl);
    slot_sites.push_back(sl.site);
  }
  std::vector<const SiteIndex*> slot_site;
  for (const auto& s : slot_sites) slot_site.push_back(&index[s]);

  const SiteIndex& first = *slot_site[0];
  const int n0 = static_cast<int>(first.times.size());
  std::vector<char> complete(n0, 0);
  std::vector<std::vector<Pick>> all_picks(n0);

  auto solve_one = [&](int i) {
    std::vector<Pick> picks(slots.size());
    picks[0] = {i, first.times[i], first.levels[i], false};
    if (search_slots(slots, slot_site, 1, picks)) {
      complete[i] = 1;
      all_picks[i] = std::move(picks);
    }
  };

  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n0; ++i) solve_one(i);
  } else {
    for (int i = 0; i < n0; ++i) solve_one(i);
  }

  std::vector<SynchronizedVolume> out;
  for (int i = 0; i < n0; ++i) {
    if (!complete[i]) continue;
    SynchronizedVolume v;
    v.samples.resize(path.size());
    bool extrap = false;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const auto& pk = all_picks[i][k];
      extrap = extrap || pk.extrapolated;
      auto pos = std::find(path.begin(), path.end(), slot_sites[k]);
      v.samples[pos - path.begin()] = {slot_sites[k], pk.time,
                                       pk.sample_index};
    }
    v.any_extrapolated = extrap;
    out.push_back(std::move(v));
  }
  return out;
}

void save_volumes(const std::vector<SynchronizedVolume>& volumes,
                  const std::vector<std::string>& path,
                  const std::string& out_path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i)
    out += (i ? "," : "") + path[i];
  out += "\n";
  for (const auto& v : volumes) {
    for (std::size_t i = 0; i < v.samples.size(); ++i) {
      if (i) out += ',';
      out += format_iso8601_utc(v.samples[i].timestamp);
    }
    out += "\n";
  }
  write_text_file(out_path, out);
}

std::vector<std::string> load_volumes(const std::string& in_path,
                                      std::vector<SynchronizedVolume>* volumes) {
  auto rows = read_csv(in_path);
  if (rows.empty()) fail(Errc::empty_input, in_path + ": empty volumes file");
  std::vector<std::string> path = rows[0];
  if (volumes) {
    volumes->clear();
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != path.size())
        fail(Errc::dimension_mismatch,
             in_path + ": row " + std::to_string(i) + " width");
      SynchronizedVolume v;
      for (std::size_t k = 0; k < path.size(); ++k)
        v.samples.push_back({path[k], parse_iso8601_utc(rows[i][k]), -1});
      volumes->push_back(std::move(v));
    }
  }
  return path;
}

}  // namespace rp
