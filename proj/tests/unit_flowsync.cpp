#include "riverpath/flowsync.hpp"

#include <cmath>

#include "doctest.h"
#include "flowsync_oracle.hpp"
#include "test_util.hpp"

using namespace rp;

namespace {

// training rows from an exact cubic over a modest level range
std::vector<FlowTableRow> exact_cubic_rows(const Eigen::Vector4d& c,
                                           const std::string& reach,
                                           int n = 12) {
  std::vector<FlowTableRow> rows;
  for (int i = 0; i < n; ++i) {
    double L = 1.0 + i * 1.25;
    FlowTableRow r;
    r.reach_id = reach;
    r.from_site = "A";
    r.to_site = "B";
    r.water_level_cm = L;
    r.flow_time_h = c[0] + c[1] * L + c[2] * L * L + c[3] * L * L * L;
    rows.push_back(r);
  }
  return rows;
}

// independent least squares route: explicit normal equations
Eigen::Vector4d normal_equations_fit(const std::vector<FlowTableRow>& rows) {
  Eigen::Matrix4d vtv = Eigen::Matrix4d::Zero();
  Eigen::Vector4d vty = Eigen::Vector4d::Zero();
  for (const auto& r : rows) {
    Eigen::Vector4d v;
    double L = r.water_level_cm;
    v << 1.0, L, L * L, L * L * L;
    vtv += v * v.transpose();
    vty += v * r.flow_time_h;
  }
  return vtv.ldlt().solve(vty);
}

}  // namespace

TEST_SUITE_BEGIN("flowsync");

TEST_CASE("cubic recovery matches the normal-equations oracle") {
  Eigen::Vector4d truth;
  truth << 10.0, -0.01, 1e-5, -1e-9;
  auto rows = exact_cubic_rows(truth, "A-B");
  auto m = fit_flow_model(rows, "A-B");
  auto oracle = normal_equations_fit(rows);
  double scale = truth.cwiseAbs().maxCoeff();
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(m.coeff[i] - truth[i]) <= 1e-6 * scale);
    CHECK(std::abs(m.coeff[i] - oracle[i]) <= 1e-6 * scale);
  }
  CHECK(m.fit_residual_rms <= 1e-9 * scale);
  CHECK(m.n_rows == 12);

  SUBCASE("random cubics agree with the oracle too") {
    Rng rng(99);
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::Vector4d c;
      c << rng.uniform(1.0, 40.0), rng.uniform(-0.5, 0.5),
          rng.uniform(-0.05, 0.05), rng.uniform(-0.005, 0.005);
      auto rr = exact_cubic_rows(c, "A-B", 4 + static_cast<int>(rep % 6));
      auto fit = fit_flow_model(rr, "A-B");
      auto ora = normal_equations_fit(rr);
      double s = std::max(1.0, c.cwiseAbs().maxCoeff());
      for (int i = 0; i < 4; ++i)
        CHECK(std::abs(fit.coeff[i] - ora[i]) <= 1e-6 * s);
    }
  }
}

TEST_CASE("constant flow times give a constant polynomial") {
  std::vector<FlowTableRow> rows;
  for (int i = 0; i < 8; ++i)
    rows.push_back({"A-B", "A", "B", 100.0 + 30.0 * i, 12.5});
  auto m = fit_flow_model(rows, "A-B");
  CHECK(m.coeff[0] == doctest::Approx(12.5).epsilon(1e-9));
  for (int i = 1; i < 4; ++i) CHECK(std::abs(m.coeff[i]) <= 1e-9);
}

TEST_CASE("fewer than four distinct levels is underdetermined") {
  std::vector<FlowTableRow> rows = {{"A-B", "A", "B", 100, 10},
                                    {"A-B", "A", "B", 200, 9},
                                    {"A-B", "A", "B", 300, 8},
                                    {"A-B", "A", "B", 300, 8}};
  CHECK_FAILS_WITH(Errc::underdetermined_fit, fit_flow_model(rows, "A-B"));
  CHECK_FAILS_WITH(Errc::missing_flow_model, fit_flow_model(rows, "X-Y"));
}

TEST_CASE("flow estimates reproduce training rows and flag edge cases") {
  Eigen::Vector4d truth;
  truth << 20.0, -0.8, 0.02, -0.0005;
  auto rows = exact_cubic_rows(truth, "A-B");
  auto m = fit_flow_model(rows, "A-B");
  for (const auto& r : rows) {
    auto e = estimate_flow_time(m, r.water_level_cm);
    CHECK(e.valid);
    CHECK(!e.extrapolated);
    CHECK(std::abs(e.flow_time_h - r.flow_time_h) <= 1e-9 * r.flow_time_h);
  }
  auto hi = estimate_flow_time(m, m.level_max + 5.0);
  CHECK(hi.extrapolated);
  auto lo = estimate_flow_time(m, m.level_min - 0.5);
  CHECK(lo.extrapolated);

  SUBCASE("negative prediction is invalid") {
    FlowModel bad;
    bad.coeff << -2.0, 0.0, 0.0, 0.0;
    bad.level_min = 0;
    bad.level_max = 1000;
    auto e = estimate_flow_time(bad, 100.0);
    CHECK(!e.valid);
    CHECK(e.flow_time_h == doctest::Approx(-2.0));
  }
}

namespace {

// nine-site layout mirroring a main stem with one tributary joining at WSR
rptest::SyncCase nine_site_case() {
  rptest::SyncCase sc;
  const std::vector<std::string> main_ids = {"HON", "ORL", "ORM", "ORR",
                                             "WSR", "REE", "LOB", "BIM"};
  const std::vector<double> tol = {3, 1, 1, 3, 3, 3, 2};
  sc.path = {"HON", "ORL", "ORM", "ORR", "WSL", "WSR", "REE", "LOB", "BIM"};
  for (std::size_t i = 0; i < main_ids.size(); ++i) {
    SiteRecord r;
    r.site_id = main_ids[i];
    r.name = main_ids[i];
    r.river_km = 640.0 + 30.0 * i;
    r.bank = "right";
    r.tolerance_h = i < tol.size() ? tol[i]
                                   : std::numeric_limits<double>::quiet_NaN();
    sc.sites.push_back(r);
  }
  SiteRecord wsl;
  wsl.site_id = "WSL";
  wsl.name = "WSL";
  wsl.river_km = 3.56;
  wsl.bank = "right";
  wsl.tolerance_h = 1.0;
  sc.sites.push_back(wsl);

  auto constant_model = [&](const std::string& from, const std::string& to,
                            double hours) {
    FlowModel m;
    m.reach_id = from + "-" + to;
    m.from_site = from;
    m.to_site = to;
    m.coeff << hours, 0, 0, 0;
    m.level_min = 50;
    m.level_max = 650;
    sc.models[m.reach_id] = m;
  };
  constant_model("HON", "ORL", 25.0);
  constant_model("ORL", "ORM", 0.25);
  constant_model("ORM", "ORR", 0.25);
  constant_model("ORR", "WSR", 4.0);
  constant_model("WSL", "WSR", 2.0);
  constant_model("WSR", "REE", 4.5);
  constant_model("REE", "LOB", 5.0);
  constant_model("LOB", "BIM", 0.5);
  return sc;
}

}  // namespace

TEST_CASE("exact nine-site schedule matches every volume") {
  auto sc = nine_site_case();
  const int nv = 7;
  std::map<std::string, std::vector<std::pair<std::int64_t, double>>> sched;
  for (int v = 0; v < nv; ++v) {
    std::int64_t t = 1368511200 + v * 43200;
    double lv = 200.0 + v;
    sched["HON"].push_back({t, lv});
    const char* chain[] = {"HON", "ORL", "ORM", "ORR", "WSR", "REE", "LOB",
                           "BIM"};
    for (int i = 1; i < 8; ++i) {
      const auto& m = sc.models.at(std::string(chain[i - 1]) + "-" + chain[i]);
      t += static_cast<std::int64_t>(m.eval(lv) * 3600.0);
      sched[chain[i]].push_back({t, lv});
      if (std::string(chain[i]) == "WSR") {
        const auto& tm = sc.models.at("WSL-WSR");
        sched["WSL"].push_back(
            {t - static_cast<std::int64_t>(tm.eval(lv) * 3600.0), lv});
      }
    }
  }
  for (const auto& id : sc.path) {
    SiteSeries series;
    series.site_id = id;
    for (auto [t, lv] : sched[id])
      series.samples.push_back(rptest::tiny_sample(id, t, lv));
    sc.ds.sites.push_back(std::move(series));
  }

  auto cons = resolve_path(sc.models, sc.sites, sc.path);
  REQUIRE(cons.size() == 8);
  CHECK(cons[4].tributary);  // WSL resolves right after WSR
  CHECK(cons[4].upstream == "WSL");
  CHECK(cons[4].downstream == "WSR");

  auto vols = match_volumes(sc.ds, sc.models, sc.sites, sc.path);
  REQUIRE(vols.size() == nv);
  for (const auto& v : vols) {
    REQUIRE(v.samples.size() == 9);
    for (std::size_t i = 0; i < sc.path.size(); ++i)
      CHECK(v.samples[i].site_id == sc.path[i]);
    CHECK(!v.any_extrapolated);
  }

  SUBCASE("shifting one site beyond tolerance breaks every chain") {
    for (auto& series : sc.ds.sites) {
      if (series.site_id != "REE") continue;
      for (auto& s : series.samples) s.timestamp += 4 * 3600 + 60;
    }
    auto broken = match_volumes(sc.ds, sc.models, sc.sites, sc.path);
    CHECK(broken.empty());
  }

  SUBCASE("oracle agrees on the nine-site layout") {
    auto oracle = rptest::oracle_match(sc);
    CHECK(rptest::same_chains(vols, oracle));
  }

  SUBCASE("serial and parallel execution match exactly") {
    auto ser = match_volumes(sc.ds, sc.models, sc.sites, sc.path, Exec::serial);
    CHECK(rptest::same_chains(vols, ser));
  }
}

TEST_CASE("randomized schedules agree with the exhaustive oracle") {
  Rng rng(2024);
  int nonempty = 0;
  for (int rep = 0; rep < 40; ++rep) {
    auto sc = rptest::random_sync_case(rng, 5, 30);
    auto got = match_volumes(sc.ds, sc.models, sc.sites, sc.path);
    auto want = rptest::oracle_match(sc);
    bool ok = rptest::same_chains(got, want);
    CHECK_MESSAGE(ok, "case " << rep << ": got " << got.size() << " chains, oracle "
                              << want.size());
    nonempty += !got.empty();

    // every reported chain satisfies all windows
    auto cons = resolve_path(sc.models, sc.sites, sc.path);
    for (const auto& v : got) {
      std::map<std::string, std::pair<std::int64_t, double>> by_site;
      for (const auto& s : v.samples) {
        double lv = 0.0;
        for (const auto& smp : sc.ds.find(s.site_id)->samples)
          if (smp.timestamp == s.timestamp) lv = smp.water_level;
        by_site[s.site_id] = {s.timestamp, lv};
      }
      for (const auto& c : cons) {
        auto [tu, lu] = by_site.at(c.upstream);
        auto [td, ld] = by_site.at(c.downstream);
        auto e = estimate_flow_time(sc.models.at(c.reach_id), lu);
        REQUIRE(e.valid);
        double delta =
            std::abs(static_cast<double>(td) -
                     (static_cast<double>(tu) + e.flow_time_h * 3600.0));
        CHECK(delta <= c.tolerance_h * 3600.0 + 1e-6);
      }
    }
  }
  CHECK(nonempty >= 5);  // the generator must produce real matches
}

TEST_CASE("chain count is monotone in the tolerance") {
  Rng rng(515);
  for (int rep = 0; rep < 12; ++rep) {
    auto sc = rptest::random_sync_case(rng, 4, 20);
    auto base = match_volumes(sc.ds, sc.models, sc.sites, sc.path);
    auto wide_sites = sc.sites;
    for (auto& s : wide_sites)
      if (s.has_tolerance()) s.tolerance_h *= 1.5;
    auto wide = match_volumes(sc.ds, sc.models, wide_sites, sc.path);
    CHECK(wide.size() >= base.size());
  }
}

TEST_CASE("matching is independent of input ordering") {
  Rng rng(77);
  auto sc = rptest::random_sync_case(rng, 5, 25);
  auto a = match_volumes(sc.ds, sc.models, sc.sites, sc.path);

  // reverse sample order within each site and shuffle site blocks
  rptest::SyncCase perm = sc;
  std::reverse(perm.ds.sites.begin(), perm.ds.sites.end());
  for (auto& series : perm.ds.sites)
    std::reverse(series.samples.begin(), series.samples.end());
  auto b = match_volumes(perm.ds, perm.models, perm.sites, perm.path);
  CHECK(rptest::same_chains(a, b));
}

TEST_CASE("matching requires water levels and flow models") {
  auto sc = nine_site_case();
  SiteSeries hon;
  hon.site_id = "HON";
  auto s = rptest::tiny_sample("HON", 1368511200, 200.0);
  s.water_level = std::numeric_limits<double>::quiet_NaN();
  hon.samples.push_back(s);
  sc.ds.sites.push_back(hon);
  CHECK_FAILS_WITH(Errc::value_out_of_range,
                   match_volumes(sc.ds, sc.models, sc.sites, sc.path));

  SUBCASE("missing reach model") {
    auto models = sc.models;
    models.erase("WSL-WSR");
    CHECK_FAILS_WITH(Errc::missing_flow_model,
                     resolve_path(models, sc.sites, sc.path));
  }
  SUBCASE("degenerate path") {
    CHECK_FAILS_WITH(Errc::invalid_path_spec,
                     resolve_path(sc.models, sc.sites, {"HON"}));
    CHECK_FAILS_WITH(Errc::invalid_path_spec,
                     resolve_path(sc.models, sc.sites, {"HON", "HON"}));
  }
}

TEST_CASE("volumes csv round trip") {
  auto sc = nine_site_case();
  std::vector<SynchronizedVolume> vols(2);
  for (int v = 0; v < 2; ++v)
    for (const auto& id : sc.path)
      vols[v].samples.push_back({id, 1368511200 + v * 1000, v});
  rptest::TempDir dir("flowsync_csv");
  save_volumes(vols, sc.path, dir / "volumes.csv");
  std::vector<SynchronizedVolume> back;
  auto path = load_volumes(dir / "volumes.csv", &back);
  CHECK(path == sc.path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].samples[3].timestamp == 1368512200);
}

TEST_SUITE_END();
