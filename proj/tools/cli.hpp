#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace neurofuse::cli {

/// Bad command-line or config values; the CLI exits with status 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Every option of every stage. Keys in the config file are the long option names
/// without the leading `--` (e.g. `max-iter`), one `key = value` per line; `#` starts a comment.
struct RunConfig {
  std::string command;
  std::filesystem::path data;  // dataset directory written by `synth`
  std::filesystem::path run;   // run directory shared by fuse/subtype/network/ubnin/report
  std::filesystem::path out;   // explicit output directory (synth, metrics, permtest)

  std::uint64_t seed = 1;
  std::size_t components = 30;
  std::size_t max_iter = 512;
  std::size_t k = 0;  // 0 = floor(sqrt(R))
  double fdr_q = 0.05;
  std::size_t n_perm = 10000;
  std::size_t n_null = 100;
  std::string hub_mode = "either";
  std::string partition = "modularity";
  bool drop_outliers = false;
  double outlier_sd = 3.0;
  bool rank_abs = false;
  std::string threshold_mean = "pd";  // pd | all
  bool self_pairs = false;            // keep GM_i-WM_i pairs in exported edge lists

  std::string subtype = "all";  // network: all | HC | PD | A | B | AB
  std::filesystem::path graph;  // metrics input
  std::filesystem::path atlas;  // metrics input
  std::filesystem::path a;      // permtest inputs
  std::filesystem::path b;
  std::string metric = "betweenness";
  std::string method = "permutation";  // permutation | t

  std::size_t n_hc = 70;
  std::size_t n_pd = 180;
  std::size_t gm_voxels = 5000;
  std::size_t wm_voxels = 5000;
  std::size_t n_sources = 8;
  double noise_sd = 0.3;
  std::size_t regions = 56;
};

/// Checks cross-field constraints; throws UsageError.
void validate(const RunConfig& config);

/// `key = value` lines in a fixed order, readable back through `--config`.
std::string serialize(const RunConfig& config);

void cmd_synth(const RunConfig& config);
void cmd_fuse(const RunConfig& config);
void cmd_subtype(const RunConfig& config);
void cmd_network(const RunConfig& config);
void cmd_metrics(const RunConfig& config);
void cmd_ubnin(const RunConfig& config);
void cmd_permtest(const RunConfig& config);
void cmd_report(const RunConfig& config);

/// Parses arguments and runs one stage. Returns the process exit code:
/// 0 success, 2 usage error, 3 data validation error, 4 numerical failure.
int run(int argc, const char* const* argv);

}  // namespace neurofuse::cli
