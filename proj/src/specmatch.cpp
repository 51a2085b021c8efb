#include "riverpath/specmatch.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

namespace rp {

std::vector<LibrarySpectrum> parse_library(const std::string& path) {
  std::string text = read_text_file(path);
  std::vector<std::string> lines = split(text, '\n');
  std::vector<LibrarySpectrum> out;
  std::set<std::string> seen;
  size_t i = 0;
  auto skip_blank = [&] {
    while (i < lines.size() && trim(lines[i]).empty()) ++i;
  };
  skip_blank();
  while (i < lines.size()) {
    std::string name_line = trim(lines[i]);
    if (name_line.rfind("NAME:", 0) != 0)
      fail(Errc::malformed_header, "expected NAME: at line " + std::to_string(i + 1));
    LibrarySpectrum spec;
    spec.name = trim(name_line.substr(5));
    if (spec.name.empty())
      fail(Errc::malformed_header, "empty spectrum name at line " + std::to_string(i + 1));
    if (!seen.insert(spec.name).second)
      fail(Errc::duplicate_name, "spectrum listed twice: " + spec.name);
    ++i;
    if (i >= lines.size() || trim(lines[i]).rfind("NUMPEAKS:", 0) != 0)
      fail(Errc::malformed_header, "expected NUMPEAKS: after " + spec.name);
    int n = static_cast<int>(
        parse_int(trim(trim(lines[i]).substr(9)), "peak count"));
    if (n < 1) fail(Errc::value_out_of_range, "peak count must be positive");
    ++i;
    for (int p = 0; p < n; ++p, ++i) {
      if (i >= lines.size() || trim(lines[i]).empty())
        fail(Errc::malformed_csv, "spectrum " + spec.name + " is truncated");
      std::istringstream ss(lines[i]);
      std::string a, b, extra;
      ss >> a >> b;
      if (b.empty() || (ss >> extra))
        fail(Errc::malformed_csv, "bad peak line in " + spec.name);
      double mz = parse_double(a, "peak mass");
      double it = parse_double(b, "peak intensity");
      if (!(mz > 0.0)) fail(Errc::value_out_of_range, "mass must be positive");
      if (!(it >= 0.0) || !std::isfinite(it))
        fail(Errc::value_out_of_range, "intensity must be nonnegative");
      spec.mz.push_back(mz);
      spec.intensity.push_back(it);
    }
    out.push_back(std::move(spec));
    skip_blank();
  }
  if (out.empty()) fail(Errc::empty_input, "library has no spectra: " + path);
  return out;
}

void save_library(const std::vector<LibrarySpectrum>& lib,
                  const std::string& path) {
  std::string text;
  for (size_t s = 0; s < lib.size(); ++s) {
    if (s) text += "\n";
    text += "NAME: " + lib[s].name + "\n";
    text += "NUMPEAKS: " + std::to_string(lib[s].mz.size()) + "\n";
    for (size_t p = 0; p < lib[s].mz.size(); ++p)
      text += format_double(lib[s].mz[p]) + " " +
              format_double(lib[s].intensity[p]) + "\n";
  }
  write_text_file(path, text);
}

double match_spectrum(const Vec& query_mz, const Vec& query_intensity,
                      const LibrarySpectrum& ref, const MatchParams& params) {
  const int n = static_cast<int>(query_mz.size());
  if (query_intensity.size() != n)
    fail(Errc::dimension_mismatch, "query axes differ in length");
  if (n == 0) fail(Errc::empty_input, "empty query spectrum");
  if (!(params.mz_tol > 0.0)) fail(Errc::bad_config, "tolerance must be positive");

  // bin the reference onto the query channels
  Vec binned = Vec::Zero(n);
  for (size_t p = 0; p < ref.mz.size(); ++p) {
    int best = 0;
    double bd = std::abs(query_mz[0] - ref.mz[p]);
    for (int i = 1; i < n; ++i) {
      double d = std::abs(query_mz[i] - ref.mz[p]);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    if (bd <= params.mz_tol) binned[best] += ref.intensity[p];
  }

  double dot = 0.0, nq = 0.0, nr = 0.0;
  for (int i = 0; i < n; ++i) {
    double mzw = std::pow(query_mz[i], params.mz_power);
    double q = mzw * std::pow(std::max(0.0, query_intensity[i]),
                              params.intensity_power);
    double r = mzw * std::pow(binned[i], params.intensity_power);
    dot += q * r;
    nq += q * q;
    nr += r * r;
  }
  if (nq == 0.0 || nr == 0.0) return 0.0;
  return dot / std::sqrt(nq * nr);
}

std::vector<MatchHit> search_library(const Vec& query_mz,
                                     const Vec& query_intensity,
                                     const std::vector<LibrarySpectrum>& lib,
                                     int top_n, const MatchParams& params) {
  if (lib.empty()) fail(Errc::empty_input, "empty spectral library");
  std::vector<MatchHit> hits(lib.size());
  for (size_t s = 0; s < lib.size(); ++s) {
    hits[s].name = lib[s].name;
    hits[s].score = match_spectrum(query_mz, query_intensity, lib[s], params);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const MatchHit& a, const MatchHit& b) {
    return a.score != b.score ? a.score > b.score : a.name < b.name;
  });
  for (size_t s = 0; s < hits.size(); ++s) hits[s].rank = static_cast<int>(s) + 1;
  if (top_n > 0 && top_n < static_cast<int>(hits.size())) hits.resize(top_n);
  return hits;
}

}  // namespace rp
