#pragma once
#include <map>
#include <string>

#include "gfn/config.hpp"

namespace gfn {

struct TrainResult {
  int64_t iterations = 0;
  double final_loss = 0.0;
  double final_log_z = 0.0;
  std::map<std::string, double> final_metrics;
  std::string metrics_csv;
  std::string checkpoint;
};

// Full rollout -> loss -> gradient -> update loop for the configured
// environment and objective; writes metrics.csv, checkpoint.bin,
// config_resolved.txt and timing.txt under out_dir.
TrainResult run_train(Config& cfg, const std::string& out_dir);

// Metrics of a stored checkpoint without training; writes eval.csv.
std::map<std::string, double> run_eval(Config& cfg, const std::string& checkpoint_path,
                                       const std::string& out_dir);

// kind: er-dag | ising | phylo-synthetic | modes.
void run_gendata(const std::string& kind, Config& cfg, const std::string& out_dir);

// what: dags | states | terminals. Returns a printable report.
std::string run_enumerate(const std::string& what, Config& cfg);

struct BenchReport {
  double mean_iters_per_second = 0.0;
  double stderr3 = 0.0;  // 3 sigma standard error of the mean
  int repeats = 0;
  int64_t iters = 0;
  int64_t warmup = 0;
};
BenchReport run_bench(Config& cfg);

// Alternating energy-model / sampler training on the Ising environment.
struct EbGfnResult {
  double init_neg_log_rmse = 0.0;
  double best_neg_log_rmse = 0.0;
  double final_neg_log_rmse = 0.0;
  double final_loss = 0.0;
};
EbGfnResult run_eb_gfn(Config& cfg, const std::string& out_dir);

}  // namespace gfn
