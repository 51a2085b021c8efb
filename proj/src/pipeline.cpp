#include "riverpath/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "riverpath/chromio.hpp"
#include "riverpath/flowsync.hpp"
#include "riverpath/parafac2.hpp"
#include "riverpath/pathmodel.hpp"
#include "riverpath/preprocess.hpp"
#include "riverpath/specmatch.hpp"
#include "riverpath/synthgen.hpp"

namespace rp {

namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> v = {
      {"seed", "17"},
      {"exec.mode", "parallel"},
      {"io.manifest", ""},
      {"io.flow_table", ""},
      {"io.site_table", ""},
      {"io.library", ""},
      {"sync.path", ""},
      {"grid.intervals", "360"},
      {"align.lambda", "1e6"},
      {"align.p", "0.001"},
      {"align.max_iter", "20"},
      {"align.seg_len", "40"},
      {"align.slack", "6"},
      {"windows.boundaries", ""},
      {"decompose.f_min", "1"},
      {"decompose.f_max", "5"},
      {"decompose.n_starts", "3"},
      {"decompose.max_iter", "200"},
      {"decompose.tol", "1e-7"},
      {"decompose.core_threshold", "80"},
      {"decompose.min_gain", "1"},
      {"classify.peak_ratio", "5"},
      {"classify.span_fraction", "0.8"},
      {"classify.span_level", "0.1"},
      {"standards.names", ""},
      {"match.mz_tol", "0.3"},
      {"match.mz_power", "1.3"},
      {"match.intensity_power", "0.53"},
      {"match.top_n", "3"},
      {"match.min_score", "0.75"},
      {"pathmodel.edges", ""},
      {"pathmodel.max_lv", "10"},
      {"pathmodel.outer_folds", "5"},
      {"pathmodel.inner_folds", "5"},
      {"predict.targets", ""},
  };
  return v;
}

std::string out_path(const std::string& out_dir, const std::string& leaf) {
  return (fs::path(out_dir) / leaf).string();
}

Exec exec_of(const PipelineConfig& cfg) {
  std::string mode = cfg.get_string("exec.mode");
  if (mode == "serial") return Exec::serial;
  if (mode == "parallel") return Exec::parallel;
  fail(Errc::bad_config, "exec.mode must be serial or parallel, got " + mode);
}

// config invariant: referenced inputs exist before the stage starts
std::string require_input(const PipelineConfig& cfg, const std::string& key) {
  std::string p = cfg.get_string(key);
  if (p.empty()) fail(Errc::bad_config, key + " is not set");
  if (!fs::exists(p)) fail(Errc::bad_config, key + " points to a missing file: " + p);
  return p;
}

std::string require_stage_file(const std::string& out_dir, const std::string& leaf,
                               const std::string& producer) {
  std::string p = out_path(out_dir, leaf);
  if (!fs::exists(p))
    fail(Errc::io_failure, leaf + " not found in " + out_dir + "; run the " +
                               producer + " stage first");
  return p;
}

std::string compact_timestamp(std::int64_t t) {
  std::string iso = format_iso8601_utc(t);
  std::string out;
  for (char c : iso)
    if (c != '-' && c != ':') out += c;
  return out;
}

std::vector<ChromatogramSample> flatten(const Dataset& ds) {
  std::vector<ChromatogramSample> flat;
  for (const auto& site : ds.sites)
    for (const auto& s : site.samples) flat.push_back(s);
  return flat;
}

std::string sample_key(const std::string& site, std::int64_t ts) {
  return site + "|" + format_iso8601_utc(ts);
}

constexpr const char* kAlignedManifest = "aligned_manifest.csv";
constexpr const char* kVolumesFile = "volumes.csv";
constexpr const char* kComponentsFile = "components.csv";
constexpr const char* kWindowsFile = "windows.csv";
constexpr const char* kModelDir = "model";

}  // namespace

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig cfg;
  cfg.values_ = default_values();
  return cfg;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  if (!fs::exists(path)) fail(Errc::bad_config, "config file not found: " + path);
  PipelineConfig cfg = defaults();
  bool seed_seen = false;
  int line_no = 0;
  for (const auto& raw : split(read_text_file(path), '\n')) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::bad_config, "config line " + std::to_string(line_no) +
                                 " is not key = value: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    cfg.set(key, value);
    if (key == "seed") seed_seen = true;
  }
  if (!seed_seen) fail(Errc::bad_config, "config must set seed explicitly");
  return cfg;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (!default_values().count(key))
    fail(Errc::bad_config, "unknown config key: " + key);
  values_[key] = value;
}

bool PipelineConfig::has(const std::string& key) const {
  auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

std::string PipelineConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(Errc::bad_config, "unknown config key: " + key);
  return it->second;
}

double PipelineConfig::get_double(const std::string& key) const {
  try {
    return parse_double(get_string(key), key.c_str());
  } catch (const Error& e) {
    fail(Errc::bad_config, e.what());
  }
}

int PipelineConfig::get_int(const std::string& key) const {
  try {
    return static_cast<int>(parse_int(get_string(key), key.c_str()));
  } catch (const Error& e) {
    fail(Errc::bad_config, e.what());
  }
}

std::uint64_t PipelineConfig::get_seed(const std::string& key) const {
  try {
    return static_cast<std::uint64_t>(parse_int(get_string(key), key.c_str()));
  } catch (const Error& e) {
    fail(Errc::bad_config, e.what());
  }
}

bool PipelineConfig::get_bool(const std::string& key) const {
  std::string v = get_string(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(Errc::bad_config, key + " must be true or false, got " + v);
}

std::vector<std::string> PipelineConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& item : split(get_string(key), ';')) {
    std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<double> PipelineConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  try {
    for (const auto& item : get_list(key))
      out.push_back(parse_double(item, key.c_str()));
  } catch (const Error& e) {
    fail(Errc::bad_config, e.what());
  }
  return out;
}

std::string PipelineConfig::dump() const {
  std::string text;
  for (const auto& [k, v] : values_) text += k + " = " + v + "\n";
  return text;
}

// ---------------------------------------------------------------- sync

void stage_sync(const PipelineConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto sites = load_site_table(require_input(cfg, "io.site_table"));
  auto flow_rows = load_flow_table(require_input(cfg, "io.flow_table"));
  auto models = fit_all_flow_models(flow_rows);
  Dataset ds = load_dataset(require_input(cfg, "io.manifest"), &sites);
  auto path = cfg.get_list("sync.path");
  if (path.empty()) fail(Errc::bad_config, "sync.path is not set");
  auto volumes = match_volumes(ds, models, sites, path, exec_of(cfg));
  save_volumes(volumes, path, out_path(out_dir, kVolumesFile));

  std::string text =
      "reach_id,from_site,to_site,c0,c1,c2,c3,level_min,level_max,"
      "fit_residual_rms,n_rows\n";
  for (const auto& [id, m] : models) {
    text += id + "," + m.from_site + "," + m.to_site;
    for (int i = 0; i < 4; ++i) text += "," + format_double(m.coeff[i]);
    text += "," + format_double(m.level_min) + "," + format_double(m.level_max) +
            "," + format_double(m.fit_residual_rms) + "," +
            std::to_string(m.n_rows) + "\n";
  }
  write_text_file(out_path(out_dir, "flow_models.csv"), text);
}

// ---------------------------------------------------------- preprocess

void stage_preprocess(const PipelineConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_path(out_dir, "aligned"));
  auto sites = load_site_table(require_input(cfg, "io.site_table"));
  Dataset ds = load_dataset(require_input(cfg, "io.manifest"), &sites);
  auto samples = flatten(ds);
  if (samples.empty()) fail(Errc::empty_input, "manifest lists no samples");

  ReferenceGrid grid = build_reference_grid(samples, cfg.get_int("grid.intervals"));
  AlignParams params;
  params.asls.lambda = cfg.get_double("align.lambda");
  params.asls.p = cfg.get_double("align.p");
  params.asls.max_iter = cfg.get_int("align.max_iter");
  params.cow.seg_len = cfg.get_int("align.seg_len");
  params.cow.slack = cfg.get_int("align.slack");
  AlignResult res = align_dataset(samples, grid, params, exec_of(cfg));

  std::string manifest = "site_id,timestamp,bundle_path\n";
  for (const auto& s : res.samples) {
    std::string rel = "aligned/" + s.site_id + "_" + compact_timestamp(s.timestamp);
    save_sample(s, out_path(out_dir, rel));
    manifest += s.site_id + "," + format_iso8601_utc(s.timestamp) + "," + rel + "\n";
  }
  write_text_file(out_path(out_dir, kAlignedManifest), manifest);

  std::string report = "site_id,timestamp,corr_before,corr_after,baseline_converged\n";
  for (const auto& r : res.report)
    report += r.site_id + "," + format_iso8601_utc(r.timestamp) + "," +
              format_double(r.corr_before) + "," + format_double(r.corr_after) +
              "," + (r.baseline_converged ? "1" : "0") + "\n";
  write_text_file(out_path(out_dir, "align_report.csv"), report);

  Mat g(grid.points.size(), 1);
  g.col(0) = grid.points;
  save_matrix_csv(out_path(out_dir, "grid.csv"), {"rt_min"}, g);
}

// ----------------------------------------------------------- decompose

namespace {

std::string encode_spectrum(const Vec& mz, const Vec& inten) {
  std::string out;
  for (int i = 0; i < mz.size(); ++i) {
    if (inten[i] <= 0.0) continue;
    if (!out.empty()) out += ';';
    out += format_double(mz[i]) + ":" + format_double(inten[i]);
  }
  return out;
}

void decode_spectrum(const std::string& text, Vec* mz, Vec* inten) {
  std::vector<double> m, v;
  for (const auto& pair : split(text, ';')) {
    if (trim(pair).empty()) continue;
    auto colon = pair.find(':');
    if (colon == std::string::npos)
      fail(Errc::malformed_csv, "bad spectrum cell: " + pair);
    m.push_back(parse_double(trim(pair.substr(0, colon)), "spectrum mz"));
    v.push_back(parse_double(trim(pair.substr(colon + 1)), "spectrum intensity"));
  }
  if (m.empty()) fail(Errc::malformed_csv, "empty spectrum cell");
  *mz = Eigen::Map<Vec>(m.data(), m.size());
  *inten = Eigen::Map<Vec>(v.data(), v.size());
}

struct Registry {
  std::vector<ComponentRecord> components;
  std::vector<std::string> window_ids;  // per component
};

MatchParams match_params_of(const PipelineConfig& cfg) {
  MatchParams mp;
  mp.mz_tol = cfg.get_double("match.mz_tol");
  mp.mz_power = cfg.get_double("match.mz_power");
  mp.intensity_power = cfg.get_double("match.intensity_power");
  return mp;
}

}  // namespace

void stage_decompose(const PipelineConfig& cfg, const std::string& out_dir) {
  std::string manifest = require_stage_file(out_dir, kAlignedManifest, "preprocess");
  Dataset ds = load_dataset(manifest, nullptr);
  auto samples = flatten(ds);
  if (samples.empty()) fail(Errc::empty_input, "aligned manifest lists no samples");

  ReferenceGrid grid;
  grid.points = samples[0].rt_axis;
  grid.spacing = samples[0].rt_axis[1] - samples[0].rt_axis[0];
  auto boundaries = cfg.get_double_list("windows.boundaries");
  auto windows = segment_windows(grid, boundaries);

  ClassifyParams cls;
  cls.peak_ratio = cfg.get_double("classify.peak_ratio");
  cls.span_fraction = cfg.get_double("classify.span_fraction");
  cls.span_level = cfg.get_double("classify.span_level");

  std::uint64_t seed = cfg.get_seed("seed");
  std::vector<Parafac2Model> models;
  std::string windows_text = "window_id,start,end,rt_start,rt_end,n_factors\n";
  for (size_t w = 0; w < windows.size(); ++w) {
    auto slabs = window_slabs(samples, windows[w]);
    RankSelectParams rp;
    rp.f_min = cfg.get_int("decompose.f_min");
    rp.f_max = cfg.get_int("decompose.f_max");
    rp.core_threshold = cfg.get_double("decompose.core_threshold");
    rp.min_gain = cfg.get_double("decompose.min_gain");
    rp.fit.n_starts = cfg.get_int("decompose.n_starts");
    rp.fit.max_iter = cfg.get_int("decompose.max_iter");
    rp.fit.tol = cfg.get_double("decompose.tol");
    rp.fit.seed = mix_seed(seed, 500 + w);
    rp.exec = exec_of(cfg);
    RankSelection sel = select_rank(slabs, rp);
    models.push_back(sel.best_model());

    std::string table = "n_factors,fit,gain,core,selected\n";
    for (const auto& row : sel.table)
      table += std::to_string(row.n_factors) + "," + format_double(row.fit) +
               "," + format_double(row.gain) + "," + format_double(row.core) +
               "," + (row.selected ? "1" : "0") + "\n";
    write_text_file(out_path(out_dir, "rank_" + windows[w].id + ".csv"), table);
    windows_text += windows[w].id + "," + std::to_string(windows[w].start) +
                    "," + std::to_string(windows[w].end) + "," +
                    format_double(grid.points[windows[w].start]) + "," +
                    format_double(grid.points[windows[w].end - 1]) + "," +
                    std::to_string(sel.best) + "\n";
  }
  write_text_file(out_path(out_dir, kWindowsFile), windows_text);

  ExtractResult ext = extract_concentrations(models, windows, cls);

  // annotate against the library; a confident hit on a configured standard
  // name marks the column as an internal standard
  auto standard_names = cfg.get_list("standards.names");
  std::vector<LibrarySpectrum> lib;
  if (cfg.has("io.library")) lib = parse_library(require_input(cfg, "io.library"));
  MatchParams mp = match_params_of(cfg);
  double min_score = cfg.get_double("match.min_score");
  const Vec& mz_axis = samples[0].mz_axis;
  for (auto& comp : ext.components) {
    if (lib.empty()) break;
    auto hits = search_library(mz_axis, comp.spectrum, lib, 1, mp);
    if (hits.empty()) continue;
    comp.annotation = hits[0].name;
    comp.annotation_score = hits[0].score;
    bool named_standard =
        std::find(standard_names.begin(), standard_names.end(), hits[0].name) !=
        standard_names.end();
    comp.is_standard = named_standard && hits[0].score >= min_score &&
                       comp.cls == ComponentClass::chemical;
  }

  // registry
  {
    std::string text =
        "component_id,window_id,factor,class,is_standard,annotation,"
        "annotation_score,peak_ratio,span_fraction,spectrum\n";
    for (const auto& comp : ext.components) {
      text += comp.id + "," + windows[comp.window_index].id + "," +
              std::to_string(comp.factor_index) + "," +
              (comp.cls == ComponentClass::chemical ? "chemical" : "baseline") +
              "," + (comp.is_standard ? "1" : "0") + "," + comp.annotation +
              "," + format_double(comp.annotation_score) + "," +
              format_double(elution_peak_ratio(comp.mean_elution)) + "," +
              format_double(elution_span_fraction(
                  comp.mean_elution, cls.span_level)) +
              "," + encode_spectrum(mz_axis, comp.spectrum) + "\n";
    }
    write_text_file(out_path(out_dir, kComponentsFile), text);
  }

  // spectra matrix and per-window mean elution profiles
  {
    std::vector<std::string> comp_ids;
    for (const auto& c : ext.components) comp_ids.push_back(c.id);
    Mat spectra(mz_axis.size(), ext.components.size());
    for (size_t c = 0; c < ext.components.size(); ++c)
      spectra.col(c) = ext.components[c].spectrum;
    std::vector<std::string> mz_labels;
    for (int i = 0; i < mz_axis.size(); ++i)
      mz_labels.push_back(format_double(mz_axis[i]));
    save_matrix_csv(out_path(out_dir, "spectra.csv"), comp_ids, spectra,
                    &mz_labels, "mz");
    for (size_t w = 0; w < windows.size(); ++w) {
      std::vector<std::string> ids;
      std::vector<const ComponentRecord*> comps;
      for (const auto& c : ext.components)
        if (c.window_index == static_cast<int>(w)) {
          ids.push_back(c.id);
          comps.push_back(&c);
        }
      Mat prof(windows[w].width(), comps.size());
      for (size_t c = 0; c < comps.size(); ++c)
        prof.col(c) = comps[c]->mean_elution;
      std::vector<std::string> rt_labels;
      for (int j = 0; j < windows[w].width(); ++j)
        rt_labels.push_back(format_double(grid.points[windows[w].start + j]));
      save_matrix_csv(out_path(out_dir, "elution_" + windows[w].id + ".csv"),
                      ids, prof, &rt_labels, "rt_min");
    }
  }

  // concentrations: full table, then normalized per-site model tables
  std::vector<std::string> row_labels;
  for (const auto& s : samples)
    row_labels.push_back(sample_key(s.site_id, s.timestamp));
  std::vector<std::string> comp_ids;
  for (const auto& c : ext.components) comp_ids.push_back(c.id);
  save_matrix_csv(out_path(out_dir, "conc_full.csv"), comp_ids, ext.conc,
                  &row_labels, "sample");

  std::vector<int> standard_cols;
  for (size_t c = 0; c < ext.components.size(); ++c)
    if (ext.components[c].is_standard) standard_cols.push_back(static_cast<int>(c));
  if (!standard_names.empty() && standard_cols.empty())
    fail(Errc::zero_standard,
         "no component was annotated as a configured internal standard");
  Mat norm = standard_cols.empty()
                 ? ext.conc
                 : normalize_internal_standards(ext.conc, standard_cols, row_labels);

  std::vector<int> model_cols;
  std::vector<std::string> model_ids;
  for (size_t c = 0; c < ext.components.size(); ++c)
    if (!ext.components[c].is_standard &&
        ext.components[c].cls == ComponentClass::chemical) {
      model_cols.push_back(static_cast<int>(c));
      model_ids.push_back(ext.components[c].id);
    }
  if (model_cols.empty())
    fail(Errc::empty_input, "no chemical components left for modelling");

  size_t row = 0;
  for (const auto& site : ds.sites) {
    Mat m(site.samples.size(), model_cols.size());
    std::vector<std::string> labels;
    for (size_t i = 0; i < site.samples.size(); ++i, ++row) {
      labels.push_back(format_iso8601_utc(site.samples[i].timestamp));
      for (size_t c = 0; c < model_cols.size(); ++c)
        m(i, c) = norm(row, model_cols[c]);
    }
    save_matrix_csv(out_path(out_dir, "conc_model_" + site.site_id + ".csv"),
                    model_ids, m, &labels, "timestamp");
  }
}

// ----------------------------------------------------------- pathmodel

void stage_pathmodel(const PipelineConfig& cfg, const std::string& out_dir) {
  std::vector<SynchronizedVolume> volumes;
  auto path = load_volumes(require_stage_file(out_dir, kVolumesFile, "sync"),
                           &volumes);
  if (volumes.empty()) fail(Errc::empty_input, "no synchronized volumes to model");

  auto edge_specs = cfg.get_list("pathmodel.edges");
  if (edge_specs.empty()) fail(Errc::bad_config, "pathmodel.edges is not set");
  PathSpec spec;
  spec.blocks = path;
  for (const auto& e : edge_specs) {
    auto dash = e.find('-');
    if (dash == std::string::npos)
      fail(Errc::bad_config, "pathmodel.edges entries must be FROM-TO, got " + e);
    spec.edges.emplace_back(trim(e.substr(0, dash)), trim(e.substr(dash + 1)));
  }
  validate_path_spec(spec);

  std::vector<std::string> vol_labels;
  for (size_t v = 0; v < volumes.size(); ++v)
    vol_labels.push_back("v" + std::to_string(v));

  std::vector<BlockData> data;
  for (size_t b = 0; b < path.size(); ++b) {
    LabeledMatrix lm = load_matrix_csv(
        require_stage_file(out_dir, "conc_model_" + path[b] + ".csv", "decompose"),
        true);
    std::map<std::string, int> by_ts;
    for (size_t i = 0; i < lm.row_labels.size(); ++i)
      by_ts[lm.row_labels[i]] = static_cast<int>(i);
    BlockData bd;
    bd.id = path[b];
    bd.var_names = lm.col_names;
    bd.row_labels = vol_labels;
    bd.X.resize(volumes.size(), lm.values.cols());
    for (size_t v = 0; v < volumes.size(); ++v) {
      const auto& s = volumes[v].samples[b];
      if (s.site_id != path[b])
        fail(Errc::invalid_path_spec, "volume table path does not match blocks");
      auto it = by_ts.find(format_iso8601_utc(s.timestamp));
      if (it == by_ts.end())
        fail(Errc::unknown_site, "no concentration row for " +
                                     sample_key(s.site_id, s.timestamp));
      bd.X.row(v) = lm.values.row(it->second);
    }
    data.push_back(std::move(bd));
    save_matrix_csv(out_path(out_dir, "blockdata_" + path[b] + ".csv"),
                    data.back().var_names, data.back().X, &vol_labels, "volume");
  }

  OuterParams op;
  op.cv.outer_folds = cfg.get_int("pathmodel.outer_folds");
  op.cv.inner_folds = cfg.get_int("pathmodel.inner_folds");
  op.cv.max_lv = cfg.get_int("pathmodel.max_lv");
  op.cv.seed = mix_seed(cfg.get_seed("seed"), 700);
  op.exec = exec_of(cfg);
  ProcessModel pm = fit_process_model(data, spec, op);
  save_process_model(pm, out_path(out_dir, kModelDir));

  std::string text = "kind,source,target,value\n";
  for (const auto& r : report_model(pm))
    text += r.kind + "," + r.source + "," + r.target + "," +
            format_double(r.value) + "\n";
  write_text_file(out_path(out_dir, "model_report.csv"), text);
}

// ------------------------------------------------------------- predict

void stage_predict(const PipelineConfig& cfg, const std::string& out_dir) {
  ProcessModel pm = load_process_model(
      require_stage_file(out_dir, kModelDir, "pathmodel"));
  auto targets = cfg.get_list("predict.targets");
  if (targets.empty())
    for (const auto& b : pm.outer.spec.blocks)
      if (!pm.outer.spec.predecessors(b).empty()) targets.push_back(b);

  auto load_block = [&](const std::string& id) {
    return load_matrix_csv(
        require_stage_file(out_dir, "blockdata_" + id + ".csv", "pathmodel"),
        true);
  };

  std::string metrics = "target,component,corr,nrmse\n";
  for (const auto& target : targets) {
    if (!pm.outer.spec.has_block(target))
      fail(Errc::bad_config, "predict target is not a block: " + target);
    std::map<std::string, Mat> preds;
    for (const auto& p : pm.outer.spec.predecessors(target))
      preds[p] = load_block(p).values;
    LabeledMatrix measured = load_block(target);
    Mat yhat = predict_block(pm, target, preds);
    save_matrix_csv(out_path(out_dir, "pred_" + target + ".csv"),
                    measured.col_names, yhat, &measured.row_labels, "volume");
    for (int c = 0; c < yhat.cols(); ++c) {
      Vec m = measured.values.col(c), p = yhat.col(c);
      metrics += target + "," + measured.col_names[c] + "," +
                 format_double(pearson_or_zero(m, p)) + "," +
                 format_double(nrmse(m, p)) + "\n";
    }
  }
  write_text_file(out_path(out_dir, "pred_metrics.csv"), metrics);
}

// --------------------------------------------------------------- match

namespace {

void run_match(const std::string& registry_path, const std::string& library_path,
               int top_n, const MatchParams& mp, const std::string& out_file) {
  auto rows = read_csv(registry_path);
  if (rows.size() < 2) fail(Errc::empty_input, "component registry is empty");
  const auto& header = rows[0];
  int id_col = -1, spec_col = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "component_id") id_col = static_cast<int>(i);
    if (header[i] == "spectrum") spec_col = static_cast<int>(i);
  }
  if (id_col < 0 || spec_col < 0)
    fail(Errc::malformed_header,
         "registry needs component_id and spectrum columns");
  auto lib = parse_library(library_path);
  std::string text = "component_id,rank,name,score\n";
  for (size_t r = 1; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) <= std::max(id_col, spec_col))
      fail(Errc::malformed_csv, "registry row " + std::to_string(r) +
                                    " is too short");
    Vec mz, inten;
    decode_spectrum(rows[r][spec_col], &mz, &inten);
    for (const auto& hit : search_library(mz, inten, lib, top_n, mp))
      text += rows[r][id_col] + "," + std::to_string(hit.rank) + "," +
              hit.name + "," + format_double(hit.score) + "\n";
  }
  write_text_file(out_file, text);
}

}  // namespace

void stage_match(const PipelineConfig& cfg, const std::string& out_dir) {
  run_match(require_stage_file(out_dir, kComponentsFile, "decompose"),
            require_input(cfg, "io.library"), cfg.get_int("match.top_n"),
            match_params_of(cfg), out_path(out_dir, "hits.csv"));
}

// -------------------------------------------------------------- report

namespace {

std::string percent1(double frac) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * frac);
  return buf;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// minimal line-plot rendering of a few series over the volume index
std::string svg_lines(const std::vector<std::pair<std::string, Vec>>& series,
                      const std::string& title) {
  const int w = 720, h = 280, ml = 50, mr = 140, mt = 30, mb = 30;
  double lo = 0, hi = 1;
  bool first = true;
  for (const auto& [name, v] : series)
    for (int i = 0; i < v.size(); ++i) {
      if (first) lo = hi = v[i], first = false;
      lo = std::min(lo, v[i]);
      hi = std::max(hi, v[i]);
    }
  if (hi <= lo) hi = lo + 1;
  const char* colors[] = {"#1f6fb2", "#d2422a", "#3a9a4e", "#8656b8",
                          "#c78f23", "#3aa0a0"};
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
       std::to_string(w) + "\" height=\"" + std::to_string(h) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(ml) + "\" y=\"18\" font-family=\"sans-serif\" "
       "font-size=\"13\">" + title + "</text>\n";
  s += "<rect x=\"" + std::to_string(ml) + "\" y=\"" + std::to_string(mt) +
       "\" width=\"" + std::to_string(w - ml - mr) + "\" height=\"" +
       std::to_string(h - mt - mb) +
       "\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n";
  int si = 0;
  for (const auto& [name, v] : series) {
    std::string pts;
    int n = static_cast<int>(v.size());
    for (int i = 0; i < n; ++i) {
      double x = ml + (w - ml - mr) * (n > 1 ? double(i) / (n - 1) : 0.5);
      double y = (h - mb) - (h - mt - mb) * (v[i] - lo) / (hi - lo);
      pts += fixed2(x) + "," + fixed2(y) + " ";
    }
    const char* color = colors[si % 6];
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
         "\" stroke-width=\"1.5\"/>\n";
    s += "<text x=\"" + std::to_string(w - mr + 8) + "\" y=\"" +
         std::to_string(mt + 16 + 16 * si) +
         "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" + color +
         "\">" + name + "</text>\n";
    ++si;
  }
  s += "</svg>\n";
  return s;
}

}  // namespace

void stage_report(const PipelineConfig& cfg, const std::string& out_dir) {
  (void)cfg;
  fs::create_directories(out_path(out_dir, "figures"));
  ProcessModel pm = load_process_model(
      require_stage_file(out_dir, kModelDir, "pathmodel"));
  std::vector<SynchronizedVolume> volumes;
  auto path = load_volumes(require_stage_file(out_dir, kVolumesFile, "sync"),
                           &volumes);

  std::string report = "kind,id,source,target,value\n";
  report += "n_volumes,,,," + std::to_string(volumes.size()) + "\n";

  // window ranks
  auto win_rows = read_csv(require_stage_file(out_dir, kWindowsFile, "decompose"));
  for (size_t r = 1; r < win_rows.size(); ++r)
    report += "rank_selected," + win_rows[r][0] + ",,," + win_rows[r][5] + "\n";

  for (const auto& row : report_model(pm))
    report += row.kind + ",," + row.source + "," + row.target + "," +
              format_double(row.value) + "\n";

  bool have_predictions = fs::exists(out_path(out_dir, "pred_metrics.csv"));
  std::vector<std::vector<std::string>> pred_rows;
  if (have_predictions) {
    pred_rows = read_csv(out_path(out_dir, "pred_metrics.csv"));
    for (size_t r = 1; r < pred_rows.size(); ++r) {
      report += "pred_corr," + pred_rows[r][1] + ",," + pred_rows[r][0] + "," +
                pred_rows[r][2] + "\n";
      report += "pred_nrmse," + pred_rows[r][1] + ",," + pred_rows[r][0] + "," +
                pred_rows[r][3] + "\n";
    }
  }
  write_text_file(out_path(out_dir, "report.csv"), report);

  // human-readable summary
  std::string text = "riverpath run summary\n=====================\n\n";
  text += "synchronized volumes: " + std::to_string(volumes.size()) + "\n";
  text += "path: ";
  for (size_t i = 0; i < path.size(); ++i)
    text += (i ? " -> " : "") + path[i];
  text += "\n\nblock models\n";
  for (const auto& b : pm.outer.blocks)
    text += "  " + b.id + ": R2 " + percent1(b.r2) + " (" +
            std::to_string(b.n_lv) + " lv)\n";
  text += "\ninner models\n";
  for (const auto& ib : pm.inner.blocks) {
    text += "  " + ib.target + " <- ";
    for (size_t i = 0; i < ib.predecessors.size(); ++i)
      text += (i ? " + " : "") + ib.predecessors[i];
    text += ": P2 " + percent1(ib.p2);
    if (ib.predecessors.size() > 1) {
      text += " (";
      for (size_t i = 0; i < ib.predecessors.size(); ++i)
        text += (i ? ", " : "") + ib.predecessors[i] + " " +
                percent1(ib.partials[i]);
      text += ")";
    }
    text += "\n";
  }
  if (have_predictions && !pred_rows.empty()) {
    text += "\npredictions\n";
    for (size_t r = 1; r < pred_rows.size(); ++r)
      text += "  " + pred_rows[r][0] + " " + pred_rows[r][1] + ": corr " +
              fixed2(parse_double(pred_rows[r][2], "corr")) + ", nrmse " +
              fixed2(parse_double(pred_rows[r][3], "nrmse")) + "\n";
  }
  auto comp_rows = read_csv(require_stage_file(out_dir, kComponentsFile, "decompose"));
  text += "\ncomponents\n";
  for (size_t r = 1; r < comp_rows.size(); ++r) {
    text += "  " + comp_rows[r][0] + " [" + comp_rows[r][3] + "]";
    if (!comp_rows[r][5].empty())
      text += " -> " + comp_rows[r][5] + " (" +
              fixed2(parse_double(comp_rows[r][6], "score")) + ")";
    if (comp_rows[r][4] == "1") text += " [standard]";
    text += "\n";
  }
  write_text_file(out_path(out_dir, "summary.txt"), text);

  // figures: measured concentration series per block, plus overlays of
  // measured vs predicted for each prediction target
  for (const auto& b : pm.outer.blocks) {
    std::string block_file = out_path(out_dir, "blockdata_" + b.id + ".csv");
    if (!fs::exists(block_file)) continue;
    LabeledMatrix lm = load_matrix_csv(block_file, true);
    std::vector<std::pair<std::string, Vec>> series;
    for (int c = 0; c < lm.values.cols(); ++c)
      series.emplace_back(lm.col_names[c], lm.values.col(c));
    write_text_file(out_path(out_dir, "figures/conc_" + b.id + ".svg"),
                    svg_lines(series, "measured concentrations at " + b.id));
  }
  if (have_predictions) {
    for (const auto& ib : pm.inner.blocks) {
      std::string pred_file = out_path(out_dir, "pred_" + ib.target + ".csv");
      if (!fs::exists(pred_file)) continue;
      LabeledMatrix meas =
          load_matrix_csv(out_path(out_dir, "blockdata_" + ib.target + ".csv"), true);
      LabeledMatrix pred = load_matrix_csv(pred_file, true);
      std::vector<std::string> cols;
      Mat joined(meas.values.rows(), 2 * meas.values.cols());
      for (int c = 0; c < meas.values.cols(); ++c) {
        cols.push_back("measured_" + meas.col_names[c]);
        cols.push_back("predicted_" + meas.col_names[c]);
        joined.col(2 * c) = meas.values.col(c);
        joined.col(2 * c + 1) = pred.values.col(c);
        std::vector<std::pair<std::string, Vec>> series{
            {"measured", meas.values.col(c)}, {"predicted", pred.values.col(c)}};
        write_text_file(
            out_path(out_dir, "figures/pred_" + ib.target + "_" +
                                  meas.col_names[c] + ".svg"),
            svg_lines(series, ib.target + " " + meas.col_names[c]));
      }
      save_matrix_csv(out_path(out_dir, "figures/pred_" + ib.target + ".csv"),
                      cols, joined, &meas.row_labels, "volume");
    }
  }
}

// ----------------------------------------------------------------- run

std::vector<StageTiming> run_all_stages(const PipelineConfig& cfg,
                                        const std::string& out_dir) {
  using Clock = std::chrono::steady_clock;
  struct Stage {
    const char* name;
    void (*fn)(const PipelineConfig&, const std::string&);
  };
  const Stage stages[] = {
      {"sync", stage_sync},       {"preprocess", stage_preprocess},
      {"decompose", stage_decompose}, {"pathmodel", stage_pathmodel},
      {"predict", stage_predict}, {"match", stage_match},
      {"report", stage_report},
  };
  std::vector<StageTiming> timings;
  for (const auto& st : stages) {
    auto t0 = Clock::now();
    try {
      st.fn(cfg, out_dir);
    } catch (const Error& e) {
      fail(e.code(), std::string(st.name) + ": " + e.what());
    }
    timings.push_back(
        {st.name, std::chrono::duration<double>(Clock::now() - t0).count()});
  }
  std::string text = "stage,seconds\n";
  double total = 0;
  for (const auto& t : timings) {
    text += t.stage + "," + fixed2(t.seconds) + "\n";
    total += t.seconds;
  }
  text += "total," + fixed2(total) + "\n";
  write_text_file(out_path(out_dir, "run_report.txt"), text);
  return timings;
}

// --------------------------------------------------------------- synth

namespace {

Scenario load_scenario(const std::string& path, std::uint64_t* seed_override) {
  if (!fs::exists(path)) fail(Errc::bad_config, "scenario file not found: " + path);
  std::map<std::string, std::string> kv;
  int line_no = 0;
  for (const auto& raw : split(read_text_file(path), '\n')) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::bad_config, "scenario line " + std::to_string(line_no) +
                                 " is not key = value: " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (!kv.count("scenario.name"))
    fail(Errc::bad_config, "scenario.name is required");
  if (kv.at("scenario.name") != "mini-rhine")
    fail(Errc::bad_config, "unknown scenario: " + kv.at("scenario.name"));

  std::uint64_t seed = 421;
  if (kv.count("scenario.seed"))
    seed = static_cast<std::uint64_t>(parse_int(kv.at("scenario.seed"), "scenario.seed"));
  if (seed_override) seed = *seed_override;
  Scenario sc = mini_rhine_scenario(seed);

  const std::set<std::string> known = {
      "scenario.name",        "scenario.seed",
      "scenario.n_volumes",   "scenario.volume_spacing_h",
      "scenario.start_offset_h", "scenario.jitter_frac",
      "scenario.extra_rate",  "scenario.dropout_rate",
      "scenario.horizon_h",   "scenario.noise_rel",
      "scenario.baseline_amp", "scenario.shift_max_points",
      "scenario.intensity_spread"};
  for (const auto& [k, v] : kv)
    if (!known.count(k)) fail(Errc::bad_config, "unknown scenario key: " + k);

  auto dbl = [&](const char* k, double* dst) {
    if (kv.count(k)) *dst = parse_double(kv.at(k), k);
  };
  if (kv.count("scenario.n_volumes"))
    sc.n_volumes = static_cast<int>(parse_int(kv.at("scenario.n_volumes"),
                                              "scenario.n_volumes"));
  dbl("scenario.volume_spacing_h", &sc.volume_spacing_h);
  dbl("scenario.start_offset_h", &sc.start_offset_h);
  dbl("scenario.jitter_frac", &sc.jitter_frac);
  dbl("scenario.extra_rate", &sc.extra_rate);
  dbl("scenario.dropout_rate", &sc.dropout_rate);
  dbl("scenario.horizon_h", &sc.horizon_h);
  dbl("scenario.noise_rel", &sc.noise_rel);
  dbl("scenario.baseline_amp", &sc.baseline_amp);
  dbl("scenario.shift_max_points", &sc.shift_max_points);
  dbl("scenario.intensity_spread", &sc.intensity_spread);
  if (sc.n_volumes < 1) fail(Errc::bad_config, "scenario.n_volumes must be >= 1");
  return sc;
}

std::string run_synth(const Scenario& sc, const std::string& out_dir, Exec exec) {
  RiverSeries rs = gen_river_series(sc);
  SynthOutput out = gen_chromatograms(sc, rs, out_dir, exec);

  // ready-to-run pipeline configuration next to the data
  std::string cfg;
  cfg += "# generated by riverpath synth\n";
  cfg += "seed = " + std::to_string(sc.seed) + "\n";
  cfg += "io.manifest = " + out.manifest_path + "\n";
  cfg += "io.flow_table = " + out.flow_table_path + "\n";
  cfg += "io.site_table = " + out.site_table_path + "\n";
  cfg += "io.library = " + out.library_path + "\n";
  std::string path_list;
  for (const auto& sid : sc.path) path_list += (path_list.empty() ? "" : ";") + sid;
  cfg += "sync.path = " + path_list + "\n";
  std::string bounds;
  for (double b : sc.window_boundaries_min)
    bounds += (bounds.empty() ? "" : ";") + format_double(b);
  cfg += "windows.boundaries = " + bounds + "\n";
  cfg += "grid.intervals = " + std::to_string(sc.grid_intervals) + "\n";
  std::string edges;
  for (const auto& r : sc.reaches) edges += (edges.empty() ? "" : ";") + r.id();
  cfg += "pathmodel.edges = " + edges + "\n";
  std::string standards;
  for (const auto& c : sc.components)
    if (c.role == ComponentRole::standard)
      standards += (standards.empty() ? "" : ";") + c.name;
  cfg += "standards.names = " + standards + "\n";
  std::string cfg_path = out_path(out_dir, "pipeline.cfg");
  write_text_file(cfg_path, cfg);
  return cfg_path;
}

}  // namespace

// ------------------------------------------------------------ cli_main

int cli_main(int argc, char** argv) {
  CLI::App app{"riverpath: flow-synchronized non-target screening pipeline"};
  app.require_subcommand(1);

  std::string scenario_path, config_path, out_dir;
  std::string components_path, library_path, match_out;
  std::int64_t seed_arg = -1;
  int top_n = 5;
  double mz_tol = 0.3;
  bool serial = false, show_defaults = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--scenario", scenario_path, "scenario config file")->required();
  synth->add_option("--seed", seed_arg, "override the scenario seed");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_flag("--serial", serial, "disable parallel rendering");

  const char* stage_names[] = {"sync",      "preprocess", "decompose",
                               "pathmodel", "predict",    "report",
                               "run"};
  const char* stage_help[] = {
      "match samples into synchronized volumes",
      "resample, debaseline, and warp-align all samples",
      "per-window decomposition, rank selection, and annotation",
      "fit the multiblock path model over the volumes",
      "predict each target block from its predecessors",
      "write report tables, summary, and figures",
      "run all stages in order"};
  std::map<std::string, CLI::App*> stage_cmds;
  for (int i = 0; i < 7; ++i) {
    auto* cmd = app.add_subcommand(stage_names[i], stage_help[i]);
    cmd->add_option("--config", config_path, "pipeline config file")->required();
    cmd->add_option("--out", out_dir, "working/output directory")->required();
    cmd->add_flag("--serial", serial, "force serial execution");
    stage_cmds[stage_names[i]] = cmd;
  }

  // as a stage (--config + --out directory) or standalone on any registry
  // (--components + --library + --out hits file)
  auto* match_cmd = app.add_subcommand(
      "match", "search components against the spectral library");
  match_cmd->add_option("--config", config_path, "pipeline config file");
  match_cmd->add_option("--out", match_out, "stage directory or hits CSV");
  match_cmd->add_flag("--serial", serial, "force serial execution");
  match_cmd->add_option("--components", components_path, "registry CSV");
  match_cmd->add_option("--library", library_path, "library file");
  match_cmd->add_option("--top", top_n, "hits per component");
  match_cmd->add_option("--tol", mz_tol, "mass binning tolerance");

  auto* config_cmd = app.add_subcommand("config", "configuration helpers");
  config_cmd->add_flag("--defaults", show_defaults, "print the default config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      std::uint64_t seed = static_cast<std::uint64_t>(seed_arg);
      Scenario sc = load_scenario(scenario_path, seed_arg >= 0 ? &seed : nullptr);
      fs::create_directories(out_dir);
      std::string cfg_path =
          run_synth(sc, out_dir, serial ? Exec::serial : Exec::parallel);
      std::cout << "wrote dataset and " << cfg_path << "\n";
      return 0;
    }
    if (config_cmd->parsed()) {
      if (show_defaults) std::cout << PipelineConfig::defaults().dump();
      return 0;
    }
    if (match_cmd->parsed()) {
      if (!components_path.empty()) {
        if (library_path.empty())
          fail(Errc::bad_config, "match --components also needs --library");
        if (match_out.empty()) match_out = "hits.csv";
        MatchParams mp;
        mp.mz_tol = mz_tol;
        run_match(components_path, library_path, top_n, mp, match_out);
        return 0;
      }
      if (config_path.empty() || match_out.empty())
        fail(Errc::bad_config,
             "match needs either --components/--library or --config/--out");
      PipelineConfig cfg = PipelineConfig::from_file(config_path);
      if (serial) cfg.set("exec.mode", "serial");
      if (match_cmd->count("--top"))
        cfg.set("match.top_n", std::to_string(top_n));
      stage_match(cfg, match_out);
      return 0;
    }
    for (const auto& [name, cmd] : stage_cmds) {
      if (!cmd->parsed()) continue;
      PipelineConfig cfg = PipelineConfig::from_file(config_path);
      if (serial) cfg.set("exec.mode", "serial");
      fs::create_directories(out_dir);
      if (name == "run") {
        auto timings = run_all_stages(cfg, out_dir);
        for (const auto& t : timings)
          std::cout << t.stage << ": " << fixed2(t.seconds) << " s\n";
      } else if (name == "sync") {
        stage_sync(cfg, out_dir);
      } else if (name == "preprocess") {
        stage_preprocess(cfg, out_dir);
      } else if (name == "decompose") {
        stage_decompose(cfg, out_dir);
      } else if (name == "pathmodel") {
        stage_pathmodel(cfg, out_dir);
      } else if (name == "predict") {
        stage_predict(cfg, out_dir);
      } else if (name == "match") {
        stage_match(cfg, out_dir);
      } else if (name == "report") {
        stage_report(cfg, out_dir);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "riverpath: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "riverpath: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "riverpath: " << e.what() << "\n";
    return 4;
  }
  return 2;
}

}  // namespace rp
