#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "gfn/config.hpp"
#include "gfn/train.hpp"

namespace {

gfn::Config load_config(const std::string& path, int seed_override) {
  gfn::Config cfg = path.empty() ? gfn::Config() : gfn::Config::from_file(path);
  if (seed_override >= 0) cfg.set("seed", std::to_string(seed_override));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GFlowNet training and evaluation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  int seed = -1;

  auto add_common = [&](CLI::App* cmd, bool need_config) {
    auto* opt = cmd->add_option("--config", config_path, "configuration file");
    if (need_config) opt->required();
    cmd->add_option("--seed", seed, "seed override");
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* train = app.add_subcommand("train", "train a sampler and log metrics");
  add_common(train, true);

  auto* eval = app.add_subcommand("eval", "evaluate a stored checkpoint");
  std::string checkpoint;
  add_common(eval, true);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

  auto* gendata = app.add_subcommand("gendata", "generate datasets and reward artifacts");
  std::string kind;
  add_common(gendata, false);
  gendata->add_option("--kind", kind, "er-dag | ising | phylo-synthetic | modes")->required();

  auto* enumerate = app.add_subcommand("enumerate", "enumeration utilities");
  std::string what;
  add_common(enumerate, false);
  enumerate->add_option("--what", what, "dags | states | terminals")->required();

  auto* bench = app.add_subcommand("bench", "measure training iterations per second");
  add_common(bench, true);

  auto* ebgfn = app.add_subcommand("eb-gfn", "alternating energy-model / sampler training");
  add_common(ebgfn, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      gfn::Config cfg = load_config(config_path, seed);
      auto res = gfn::run_train(cfg, out_dir);
      std::printf("trained %lld iterations, final loss %.6g, logZ %.6g\n",
                  static_cast<long long>(res.iterations), res.final_loss, res.final_log_z);
      for (const auto& [name, value] : res.final_metrics)
        std::printf("  %s = %.6g\n", name.c_str(), value);
      std::printf("metrics: %s\ncheckpoint: %s\n", res.metrics_csv.c_str(),
                  res.checkpoint.c_str());
    } else if (eval->parsed()) {
      gfn::Config cfg = load_config(config_path, seed);
      auto metrics = gfn::run_eval(cfg, checkpoint, out_dir);
      for (const auto& [name, value] : metrics)
        std::printf("%s = %.6g\n", name.c_str(), value);
    } else if (gendata->parsed()) {
      gfn::Config cfg = load_config(config_path, seed);
      gfn::run_gendata(kind, cfg, out_dir);
      std::printf("wrote %s data under %s\n", kind.c_str(), out_dir.c_str());
    } else if (enumerate->parsed()) {
      gfn::Config cfg = load_config(config_path, seed);
      std::fputs(gfn::run_enumerate(what, cfg).c_str(), stdout);
    } else if (bench->parsed()) {
      gfn::Config cfg = load_config(config_path, seed);
      auto rep = gfn::run_bench(cfg);
      std::printf("iterations_per_second %.2f +- %.2f (3 sigma, %d repeats of %lld iters, %lld warmup)\n",
                  rep.mean_iters_per_second, rep.stderr3, rep.repeats,
                  static_cast<long long>(rep.iters), static_cast<long long>(rep.warmup));
    } else if (ebgfn->parsed()) {
      gfn::Config cfg = load_config(config_path, seed);
      auto res = gfn::run_eb_gfn(cfg, out_dir);
      std::printf("neg_log_rmse init %.4f best %.4f final %.4f, final loss %.6g\n",
                  res.init_neg_log_rmse, res.best_neg_log_rmse, res.final_neg_log_rmse,
                  res.final_loss);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
