#include "riverpath/chromio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

namespace rp {

namespace {

std::string strip_hdr_suffix(const std::string& base) {
  if (base.size() > 4 && base.compare(base.size() - 4, 4, ".hdr") == 0)
    return base.substr(0, base.size() - 4);
  return base;
}

Vec parse_axis(const std::string& text, const char* what) {
  auto cells = split(text, ',');
  Vec v(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = parse_double(cells[i], what);
  return v;
}

std::string format_axis(const Vec& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace

void validate_sample(const ChromatogramSample& s) {
  if (s.site_id.empty())
    fail(Errc::malformed_header, "sample has empty site id");
  if (s.mz_axis.size() == 0 || s.rt_axis.size() == 0)
    fail(Errc::empty_input, "sample axes must be non-empty");
  if (s.intensity.rows() != s.mz_axis.size() ||
      s.intensity.cols() != s.rt_axis.size())
    fail(Errc::dimension_mismatch,
         "intensity is " + std::to_string(s.intensity.rows()) + "x" +
             std::to_string(s.intensity.cols()) + " but axes say " +
             std::to_string(s.mz_axis.size()) + "x" +
             std::to_string(s.rt_axis.size()));
  for (Eigen::Index i = 0; i + 1 < s.mz_axis.size(); ++i)
    if (!(s.mz_axis[i] < s.mz_axis[i + 1]))
      fail(Errc::axis_not_increasing, "mz_axis not strictly increasing");
  for (Eigen::Index i = 0; i + 1 < s.rt_axis.size(); ++i)
    if (!(s.rt_axis[i] < s.rt_axis[i + 1]))
      fail(Errc::axis_not_increasing, "rt_axis not strictly increasing");
  if (!s.mz_axis.allFinite() || !s.rt_axis.allFinite())
    fail(Errc::nonfinite_value, "non-finite axis value");
  if (s.rt_axis[0] < 0.0)
    fail(Errc::value_out_of_range, "rt_axis must start at >= 0");
  if (!s.intensity.allFinite())
    fail(Errc::nonfinite_value, "non-finite intensity value");
  if ((s.intensity.array() < 0.0).any())
    fail(Errc::value_out_of_range, "negative intensity value");
}

ChromatogramSample load_sample(const std::string& base_in) {
  const std::string base = strip_hdr_suffix(base_in);
  const std::string hdr_text = read_text_file(base + ".hdr");

  std::map<std::string, std::string> kv;
  std::istringstream in(hdr_text);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto pos = line.find(':');
    if (pos == std::string::npos)
      fail(Errc::malformed_header, base + ".hdr: line without ':': " + line);
    std::string key = trim(line.substr(0, pos));
    if (kv.count(key))
      fail(Errc::malformed_header, base + ".hdr: duplicate key " + key);
    kv[key] = trim(line.substr(pos + 1));
  }
  static const std::set<std::string> required = {"site",  "timestamp", "n_mz",
                                                 "n_rt",  "mz_axis",   "rt_axis"};
  for (const auto& k : required)
    if (!kv.count(k))
      fail(Errc::malformed_header, base + ".hdr: missing key " + k);
  for (const auto& [k, v] : kv)
    if (!required.count(k) && k != "water_level")
      fail(Errc::malformed_header, base + ".hdr: unknown key " + k);

  ChromatogramSample s;
  s.site_id = kv["site"];
  s.timestamp = parse_iso8601_utc(kv["timestamp"]);
  if (kv.count("water_level"))
    s.water_level = parse_double(kv["water_level"], "water_level");
  const auto n_mz = parse_int(kv["n_mz"], "n_mz");
  const auto n_rt = parse_int(kv["n_rt"], "n_rt");
  s.mz_axis = parse_axis(kv["mz_axis"], "mz_axis");
  s.rt_axis = parse_axis(kv["rt_axis"], "rt_axis");
  if (s.mz_axis.size() != n_mz)
    fail(Errc::dimension_mismatch, base + ".hdr: mz_axis has " +
                                       std::to_string(s.mz_axis.size()) +
                                       " entries, n_mz says " +
                                       std::to_string(n_mz));
  if (s.rt_axis.size() != n_rt)
    fail(Errc::dimension_mismatch, base + ".hdr: rt_axis has " +
                                       std::to_string(s.rt_axis.size()) +
                                       " entries, n_rt says " +
                                       std::to_string(n_rt));

  const std::string csv_text = read_text_file(base + ".csv");
  s.intensity.resize(n_mz, n_rt);
  Eigen::Index row = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= csv_text.size(); ++i) {
    if (i != csv_text.size() && csv_text[i] != '\n') continue;
    std::string_view linev(csv_text.data() + start, i - start);
    start = i + 1;
    if (!linev.empty() && linev.back() == '\r') linev.remove_suffix(1);
    if (linev.empty()) continue;
    if (row >= n_mz)
      fail(Errc::dimension_mismatch, base + ".csv: more than " +
                                         std::to_string(n_mz) + " rows");
    // hot path: manual strtod walk instead of split() to keep loading cheap
    const char* p = linev.data();
    const char* end = p + linev.size();
    Eigen::Index col = 0;
    while (p < end) {
      char* after = nullptr;
      double v = std::strtod(p, &after);
      if (after == p)
        fail(Errc::malformed_csv, base + ".csv: bad number in row " +
                                      std::to_string(row));
      if (col >= n_rt)
        fail(Errc::dimension_mismatch, base + ".csv: row " +
                                           std::to_string(row) +
                                           " has more than " +
                                           std::to_string(n_rt) + " values");
      s.intensity(row, col++) = v;
      p = after;
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p < end) {
        if (*p != ',')
          fail(Errc::malformed_csv, base + ".csv: expected ',' in row " +
                                        std::to_string(row));
        ++p;
      }
    }
    if (col != n_rt)
      fail(Errc::dimension_mismatch,
           base + ".csv: row " + std::to_string(row) + " has " +
               std::to_string(col) + " values, expected " +
               std::to_string(n_rt));
    ++row;
  }
  if (row != n_mz)
    fail(Errc::dimension_mismatch, base + ".csv: got " + std::to_string(row) +
                                       " rows, expected " +
                                       std::to_string(n_mz));
  validate_sample(s);
  return s;
}

void save_sample(const ChromatogramSample& s, const std::string& base_in) {
  validate_sample(s);
  const std::string base = strip_hdr_suffix(base_in);
  std::string hdr;
  hdr += "site: " + s.site_id + "\n";
  hdr += "timestamp: " + format_iso8601_utc(s.timestamp) + "\n";
  if (s.has_water_level())
    hdr += "water_level: " + format_double(s.water_level) + "\n";
  hdr += "n_mz: " + std::to_string(s.n_mz()) + "\n";
  hdr += "n_rt: " + std::to_string(s.n_rt()) + "\n";
  hdr += "mz_axis: " + format_axis(s.mz_axis) + "\n";
  hdr += "rt_axis: " + format_axis(s.rt_axis) + "\n";
  write_text_file(base + ".hdr", hdr);

  std::string csv;
  csv.reserve(static_cast<std::size_t>(s.intensity.size()) * 8);
  for (Eigen::Index r = 0; r < s.intensity.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.intensity.cols(); ++c) {
      if (c) csv += ',';
      csv += format_double(s.intensity(r, c));
    }
    csv += '\n';
  }
  write_text_file(base + ".csv", csv);
}

Vec compute_tic(const ChromatogramSample& s) {
  return s.intensity.colwise().sum().transpose();
}

const SiteSeries* Dataset::find(const std::string& site_id) const {
  for (const auto& ss : sites)
    if (ss.site_id == site_id) return &ss;
  return nullptr;
}

Dataset load_dataset(const std::string& manifest_path,
                     const std::vector<SiteRecord>* known_sites) {
  auto rows = read_csv(manifest_path);
  if (rows.empty())
    fail(Errc::empty_input, manifest_path + ": empty manifest");
  const std::vector<std::string> header = {"site_id", "timestamp",
                                           "bundle_path"};
  if (rows[0] != header)
    fail(Errc::malformed_csv,
         manifest_path + ": expected header site_id,timestamp,bundle_path");

  const auto dir = std::filesystem::path(manifest_path).parent_path();
  std::map<std::string, std::vector<ChromatogramSample>> by_site;
  std::set<std::pair<std::string, std::int64_t>> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 3)
      fail(Errc::malformed_csv,
           manifest_path + ": row " + std::to_string(i) + " needs 3 cells");
    const std::string& site = r[0];
    std::int64_t ts = parse_iso8601_utc(r[1]);
    if (known_sites) {
      bool ok = false;
      for (const auto& sr : *known_sites) ok = ok || sr.site_id == site;
      if (!ok) fail(Errc::unknown_site, manifest_path + ": site " + site);
    }
    if (!seen.insert({site, ts}).second)
      fail(Errc::duplicate_sample,
           manifest_path + ": duplicate sample " + site + " @ " + r[1]);
    std::filesystem::path bp(r[2]);
    if (bp.is_relative()) bp = dir / bp;
    ChromatogramSample s = load_sample(bp.string());
    if (s.site_id != site)
      fail(Errc::unknown_site, manifest_path + ": row " + std::to_string(i) +
                                   " says site " + site + " but bundle says " +
                                   s.site_id);
    if (s.timestamp != ts)
      fail(Errc::duplicate_sample, manifest_path + ": row " +
                                       std::to_string(i) +
                                       " timestamp differs from bundle");
    by_site[site].push_back(std::move(s));
  }

  Dataset ds;
  for (auto& [site, samples] : by_site) {
    std::sort(samples.begin(), samples.end(),
              [](const ChromatogramSample& a, const ChromatogramSample& b) {
                return a.timestamp < b.timestamp;
              });
    ds.sites.push_back({site, std::move(samples)});
  }
  return ds;
}

std::vector<FlowTableRow> load_flow_table(const std::string& path) {
  auto rows = read_csv(path);
  if (rows.empty()) fail(Errc::empty_input, path + ": empty flow table");
  const std::vector<std::string> header = {"reach_id", "water_level_cm",
                                           "flow_time_h"};
  if (rows[0] != header)
    fail(Errc::malformed_csv,
         path + ": expected header reach_id,water_level_cm,flow_time_h");
  std::vector<FlowTableRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 3)
      fail(Errc::malformed_csv, path + ": row " + std::to_string(i));
    FlowTableRow f;
    f.reach_id = r[0];
    auto parts = split(r[0], '-');
    if (parts.size() != 2 || parts[0].empty() || parts[1].empty())
      fail(Errc::malformed_csv,
           path + ": reach_id must be <from>-<to>, got " + r[0]);
    f.from_site = parts[0];
    f.to_site = parts[1];
    f.water_level_cm = parse_double(r[1], "water_level_cm");
    f.flow_time_h = parse_double(r[2], "flow_time_h");
    if (!std::isfinite(f.water_level_cm) || !std::isfinite(f.flow_time_h))
      fail(Errc::nonfinite_value, path + ": row " + std::to_string(i));
    if (f.flow_time_h <= 0.0)
      fail(Errc::value_out_of_range,
           path + ": flow_time_h must be > 0 in row " + std::to_string(i));
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<SiteRecord> load_site_table(const std::string& path) {
  auto rows = read_csv(path);
  if (rows.empty()) fail(Errc::empty_input, path + ": empty site table");
  const std::vector<std::string> header = {"site_id", "name", "river_km",
                                           "bank", "tolerance_h"};
  if (rows[0] != header)
    fail(Errc::malformed_csv,
         path + ": expected header site_id,name,river_km,bank,tolerance_h");
  std::vector<SiteRecord> out;
  std::set<std::string> ids;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5)
      fail(Errc::malformed_csv, path + ": row " + std::to_string(i));
    SiteRecord s;
    s.site_id = r[0];
    if (s.site_id.empty() || s.site_id.find('-') != std::string::npos)
      fail(Errc::malformed_csv,
           path + ": site ids must be non-empty and free of '-': " + r[0]);
    if (!ids.insert(s.site_id).second)
      fail(Errc::duplicate_name, path + ": duplicate site " + s.site_id);
    s.name = r[1];
    s.river_km = parse_double(r[2], "river_km");
    s.bank = r[3];
    if (s.bank != "left" && s.bank != "middle" && s.bank != "right")
      fail(Errc::malformed_csv, path + ": bank must be left|middle|right");
    if (r[4].empty() || r[4] == "-") {
      s.tolerance_h = std::numeric_limits<double>::quiet_NaN();
    } else {
      s.tolerance_h = parse_double(r[4], "tolerance_h");
      if (!(s.tolerance_h > 0.0))
        fail(Errc::value_out_of_range,
             path + ": tolerance_h must be > 0 in row " + std::to_string(i));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_flow_table(const std::vector<FlowTableRow>& rows,
                     const std::string& path) {
  std::string out = "reach_id,water_level_cm,flow_time_h\n";
  for (const auto& r : rows)
    out += r.reach_id + "," + format_double(r.water_level_cm) + "," +
           format_double(r.flow_time_h) + "\n";
  write_text_file(path, out);
}

void save_site_table(const std::vector<SiteRecord>& rows,
                     const std::string& path) {
  std::string out = "site_id,name,river_km,bank,tolerance_h\n";
  for (const auto& r : rows) {
    out += r.site_id + "," + r.name + "," + format_double(r.river_km) + "," +
           r.bank + ",";
    out += r.has_tolerance() ? format_double(r.tolerance_h) : std::string("-");
    out += "\n";
  }
  write_text_file(path, out);
}

void save_matrix_csv(const std::string& path,
                     const std::vector<std::string>& col_names, const Mat& m,
                     const std::vector<std::string>* row_labels,
                     const std::string& row_label_header) {
  if (static_cast<Eigen::Index>(col_names.size()) != m.cols())
    fail(Errc::dimension_mismatch, path + ": column name count");
  if (row_labels &&
      static_cast<Eigen::Index>(row_labels->size()) != m.rows())
    fail(Errc::dimension_mismatch, path + ": row label count");
  std::string out;
  if (row_labels) out += row_label_header + (col_names.empty() ? "" : ",");
  for (std::size_t i = 0; i < col_names.size(); ++i) {
    if (i) out += ',';
    out += col_names[i];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (row_labels) out += (*row_labels)[r] + (m.cols() ? "," : "");
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  write_text_file(path, out);
}

LabeledMatrix load_matrix_csv(const std::string& path, bool first_col_labels) {
  auto rows = read_csv(path);
  if (rows.empty()) fail(Errc::empty_input, path + ": empty matrix csv");
  LabeledMatrix lm;
  std::size_t c0 = first_col_labels ? 1 : 0;
  if (rows[0].size() < c0)
    fail(Errc::malformed_csv, path + ": header too short");
  for (std::size_t c = c0; c < rows[0].size(); ++c)
    lm.col_names.push_back(rows[0][c]);
  const std::size_t ncol = lm.col_names.size();
  lm.values.resize(static_cast<Eigen::Index>(rows.size() - 1),
                   static_cast<Eigen::Index>(ncol));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != ncol + c0)
      fail(Errc::dimension_mismatch,
           path + ": row " + std::to_string(i) + " has " +
               std::to_string(rows[i].size()) + " cells, expected " +
               std::to_string(ncol + c0));
    if (first_col_labels) lm.row_labels.push_back(rows[i][0]);
    for (std::size_t c = 0; c < ncol; ++c)
      lm.values(static_cast<Eigen::Index>(i - 1),
                static_cast<Eigen::Index>(c)) =
          parse_double(rows[i][c + c0], "matrix cell");
  }
  return lm;
}

}  // namespace rp
