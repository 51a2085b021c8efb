// Stick-spectrum library parsing and weighted cosine matching.
#pragma once

#include "riverpath/common.hpp"

#include <string>
#include <vector>

namespace rp {

struct LibrarySpectrum {
  std::string name;
  std::vector<double> mz;
  std::vector<double> intensity;
};

// Minimal MSP subset: NAME:, NUMPEAKS:, then that many "mz intensity"
// lines; records are separated by blank lines.
std::vector<LibrarySpectrum> parse_library(const std::string& path);
void save_library(const std::vector<LibrarySpectrum>& lib,
                  const std::string& path);

struct MatchParams {
  double mz_tol = 0.3;
  double mz_power = 1.3;
  double intensity_power = 0.53;
};

// Cosine of mz^a * I^b weighted vectors on the query's mz grid; reference
// peaks bin to the nearest query channel within mz_tol, the rest drop.
double match_spectrum(const Vec& query_mz, const Vec& query_intensity,
                      const LibrarySpectrum& ref,
                      const MatchParams& params = {});

struct MatchHit {
  std::string name;
  double score = 0.0;
  int rank = 0;  // 1-based
};

std::vector<MatchHit> search_library(const Vec& query_mz,
                                     const Vec& query_intensity,
                                     const std::vector<LibrarySpectrum>& lib,
                                     int top_n, const MatchParams& params = {});

}  // namespace rp
