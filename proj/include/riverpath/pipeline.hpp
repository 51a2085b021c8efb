// End-to-end orchestration: configuration, stage functions, and the command
// line front end.
#pragma once

#include "riverpath/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace rp {

// Flat key = value configuration with dotted section prefixes. Unknown keys
// are rejected so typos surface early.
class PipelineConfig {
 public:
  static PipelineConfig defaults();
  static PipelineConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_seed(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // ';' separated
  std::vector<double> get_double_list(const std::string& key) const;

  std::string dump() const;  // sorted key = value lines

 private:
  std::map<std::string, std::string> values_;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

// Stage entry points; each reads its inputs from and writes its outputs
// under the configured output directory.
void stage_sync(const PipelineConfig& cfg, const std::string& out_dir);
void stage_preprocess(const PipelineConfig& cfg, const std::string& out_dir);
void stage_decompose(const PipelineConfig& cfg, const std::string& out_dir);
void stage_pathmodel(const PipelineConfig& cfg, const std::string& out_dir);
void stage_predict(const PipelineConfig& cfg, const std::string& out_dir);
void stage_match(const PipelineConfig& cfg, const std::string& out_dir);
void stage_report(const PipelineConfig& cfg, const std::string& out_dir);

std::vector<StageTiming> run_all_stages(const PipelineConfig& cfg,
                                        const std::string& out_dir);

// argv-style entry; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace rp
