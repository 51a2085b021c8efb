#include "riverpath/specmatch.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"

using namespace rp;

namespace {

// Written-out weighted cosine for the oracle comparisons.
double by_hand(const std::vector<double>& mz, const std::vector<double>& qi,
               const std::vector<double>& ri) {
  double dot = 0, a = 0, b = 0;
  for (size_t i = 0; i < mz.size(); ++i) {
    double w = std::pow(mz[i], 1.3);
    double q = w * std::pow(qi[i], 0.53);
    double r = w * std::pow(ri[i], 0.53);
    dot += q * r;
    a += q * q;
    b += r * r;
  }
  return dot / std::sqrt(a * b);
}

}  // namespace

TEST_SUITE_BEGIN("specmatch");

TEST_CASE("identical spectra score one") {
  Vec mz(3), in(3);
  mz << 50, 77, 105;
  in << 100, 300, 999;
  LibrarySpectrum ref{"self", {50, 77, 105}, {100, 300, 999}};
  CHECK(match_spectrum(mz, in, ref) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("score is scale invariant on both sides") {
  Vec mz(4), in(4);
  mz << 41, 55, 69, 83;
  in << 10, 999, 120, 45;
  LibrarySpectrum ref{"r", {41, 55, 69, 83}, {20, 1800, 300, 60}};
  double base = match_spectrum(mz, in, ref);
  LibrarySpectrum scaled = ref;
  for (auto& v : scaled.intensity) v *= 7.25;
  CHECK(match_spectrum(mz, in, scaled) == doctest::Approx(base).epsilon(1e-12));
  Vec in2 = in * 0.031;
  CHECK(match_spectrum(mz, in2, ref) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("score matches a hand computation with partial overlap") {
  Vec mz(3), in(3);
  mz << 60, 74, 88;
  in << 500, 200, 50;
  LibrarySpectrum ref{"r", {60.1, 74.0}, {450, 260}};  // 88 channel empty
  double got = match_spectrum(mz, in, ref);
  double want = by_hand({60, 74, 88}, {500, 200, 50}, {450, 260, 0});
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("reference peaks bin to the nearest channel within tolerance") {
  Vec mz(3), in(3);
  mz << 50, 51, 52;
  in << 10, 0, 10;
  // two peaks land in the same channel and add up
  LibrarySpectrum ref{"r", {49.9, 50.2, 51.8}, {5, 5, 7}};
  double got = match_spectrum(mz, in, ref);
  double want = by_hand({50, 51, 52}, {10, 0, 10}, {10, 0, 7});
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  // outside tolerance the peak is dropped entirely
  LibrarySpectrum far{"f", {50.0, 52.45}, {10, 999}};
  double got2 = match_spectrum(mz, in, far);
  double want2 = by_hand({50, 51, 52}, {10, 0, 10}, {10, 0, 0});
  CHECK(got2 == doctest::Approx(want2).epsilon(1e-12));

  // the boundary itself still binds
  MatchParams prm;
  prm.mz_tol = 0.5;
  LibrarySpectrum edge{"e", {52.5}, {10}};
  CHECK(match_spectrum(mz, in, edge, prm) > 0.0);
}

TEST_CASE("disjoint spectra score zero") {
  Vec mz(2), in(2);
  mz << 50, 60;
  in << 10, 10;
  LibrarySpectrum ref{"r", {70, 80}, {10, 10}};
  CHECK(match_spectrum(mz, in, ref) == 0.0);
  LibrarySpectrum empty_overlap{"z", {55}, {10}};
  CHECK(match_spectrum(mz, in, empty_overlap) == 0.0);
}

TEST_CASE("negative decomposition artifacts clamp to zero") {
  Vec mz(3), in(3);
  mz << 50, 60, 70;
  in << 100, -5, 40;
  LibrarySpectrum ref{"r", {50, 70}, {100, 40}};
  double got = match_spectrum(mz, in, ref);
  CHECK(std::isfinite(got));
  CHECK(got == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("library search ranks by score with name ties") {
  Vec mz(3), in(3);
  mz << 50, 77, 105;
  in << 100, 300, 999;
  std::vector<LibrarySpectrum> lib{
      {"partial", {50, 77}, {100, 300}},
      {"exact", {50, 77, 105}, {100, 300, 999}},
      {"none", {200}, {10}},
      {"exact_twin", {50, 77, 105}, {100, 300, 999}},
  };
  auto hits = search_library(mz, in, lib, 0);
  REQUIRE(hits.size() == 4);
  CHECK(hits[0].name == "exact");  // ties break alphabetically
  CHECK(hits[1].name == "exact_twin");
  CHECK(hits[0].score == hits[1].score);
  CHECK(hits[2].name == "partial");
  CHECK(hits[3].name == "none");
  for (int i = 0; i < 4; ++i) CHECK(hits[i].rank == i + 1);
  auto top2 = search_library(mz, in, lib, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[1].name == "exact_twin");
}

TEST_CASE("library files round trip and reject malformed input") {
  rptest::TempDir dir("specmatch");
  std::vector<LibrarySpectrum> lib{
      {"alpha", {50.5, 77.25}, {100, 999}},
      {"beta", {60, 61, 62}, {1, 2, 3}},
  };
  save_library(lib, dir / "lib.msp");
  auto back = parse_library(dir / "lib.msp");
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "alpha");
  CHECK(back[0].mz == lib[0].mz);
  CHECK(back[0].intensity == lib[0].intensity);
  CHECK(back[1].intensity == lib[1].intensity);

  write_text_file(dir / "t1.msp", "NAME: x\nNUMPEAKS: 3\n50 10\n60 20\n");
  CHECK_FAILS_WITH(Errc::malformed_csv, parse_library(dir / "t1.msp"));
  write_text_file(dir / "t2.msp", "NUMPEAKS: 1\n50 10\n");
  CHECK_FAILS_WITH(Errc::malformed_header, parse_library(dir / "t2.msp"));
  write_text_file(dir / "t3.msp",
                  "NAME: a\nNUMPEAKS: 1\n50 10\n\nNAME: a\nNUMPEAKS: 1\n60 5\n");
  CHECK_FAILS_WITH(Errc::duplicate_name, parse_library(dir / "t3.msp"));
  write_text_file(dir / "t4.msp", "NAME: a\nNUMPEAKS: 1\n-50 10\n");
  CHECK_FAILS_WITH(Errc::value_out_of_range, parse_library(dir / "t4.msp"));
  write_text_file(dir / "t5.msp", "\n\n");
  CHECK_FAILS_WITH(Errc::empty_input, parse_library(dir / "t5.msp"));
  write_text_file(dir / "t6.msp", "NAME: a\nNUMPEAKS: 1\n50 10 extra\n");
  CHECK_FAILS_WITH(Errc::malformed_csv, parse_library(dir / "t6.msp"));
}

TEST_CASE("matcher input validation") {
  Vec mz(2), in(3);
  mz << 50, 60;
  in << 1, 2, 3;
  LibrarySpectrum ref{"r", {50}, {1}};
  CHECK_FAILS_WITH(Errc::dimension_mismatch, match_spectrum(mz, in, ref));
  CHECK_FAILS_WITH(Errc::empty_input, match_spectrum(Vec(), Vec(), ref));
  MatchParams bad;
  bad.mz_tol = 0.0;
  Vec in2(2);
  in2 << 1, 2;
  CHECK_FAILS_WITH(Errc::bad_config, match_spectrum(mz, in2, ref, bad));
  CHECK_FAILS_WITH(Errc::empty_input, search_library(mz, in2, {}, 3));
}

TEST_SUITE_END();
