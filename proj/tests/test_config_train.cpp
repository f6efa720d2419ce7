#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gfn/checkpoint.hpp"
#include "gfn/config.hpp"
#include "gfn/envs/dag.hpp"
#include "gfn/envs/ising.hpp"
#include "gfn/envs/phylo.hpp"
#include "gfn/envs/sequences.hpp"
#include "gfn/errors.hpp"
#include "gfn/train.hpp"

using namespace gfn;
namespace fs = std::filesystem;

namespace {

std::string write_tmp(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/" + name;
  std::ofstream os(path);
  os << body;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const std::string path = write_tmp("gfn_cfg_test.cfg",
                                     "# comment line\n"
                                     "env.name = hypergrid\n"
                                     "env.dim=2   # trailing comment\n"
                                     "  train.iterations  =  25  \n");
  Config cfg = Config::from_file(path);
  CHECK(cfg.get_string("env.name") == "hypergrid");
  CHECK(cfg.get_int("env.dim") == 2);
  CHECK(cfg.get_int("train.iterations") == 25);
  CHECK(cfg.get_double("optimizer.lr", 1e-3) == 1e-3);
  CHECK_NOTHROW(cfg.ensure_all_consumed());

  SUBCASE("scientific-notation counts parse as integers") {
    Config c2;
    c2.set("train.iterations", "1e5");
    CHECK(c2.get_int("train.iterations") == 100000);
  }
  SUBCASE("unknown keys are hard errors") {
    Config c2;
    c2.set("optimizer.typo", "3");
    CHECK_THROWS_AS(c2.ensure_all_consumed(), config_error);
  }
  SUBCASE("duplicate keys are rejected") {
    const std::string dup = write_tmp("gfn_cfg_dup.cfg", "a.b = 1\na.b = 2\n");
    CHECK_THROWS_AS(Config::from_file(dup), config_error);
  }
  SUBCASE("missing equals sign is rejected") {
    const std::string bad = write_tmp("gfn_cfg_bad.cfg", "just words\n");
    CHECK_THROWS_AS(Config::from_file(bad), config_error);
  }
  SUBCASE("typed getters validate") {
    Config c2;
    c2.set("x", "abc");
    CHECK_THROWS_AS(c2.get_int("x"), config_error);
    CHECK_THROWS_AS(c2.get_double("x"), config_error);
    CHECK_THROWS_AS(c2.get_bool("x"), config_error);
    CHECK_THROWS_AS(c2.get_int("missing"), config_error);
  }
}

TEST_CASE("hypergrid training smoke run is deterministic and complete") {
  auto make_cfg = [] {
    Config cfg;
    cfg.set("env.name", "hypergrid");
    cfg.set("env.dim", "2");
    cfg.set("env.side", "4");
    cfg.set("train.iterations", "60");
    cfg.set("train.batch_size", "8");
    cfg.set("mlp.hidden", "16,16");
    cfg.set("eval.interval", "30");
    cfg.set("eval.metrics", "tv_buffer,tv_exact");
    cfg.set("seed", "3");
    return cfg;
  };
  fs::remove_all("/tmp/gfn_run_a");
  fs::remove_all("/tmp/gfn_run_b");
  Config a = make_cfg();
  TrainResult ra = run_train(a, "/tmp/gfn_run_a");
  Config b = make_cfg();
  TrainResult rb = run_train(b, "/tmp/gfn_run_b");
  CHECK(ra.iterations == 60);
  CHECK(std::isfinite(ra.final_loss));
  CHECK(ra.final_metrics.count("tv_buffer") == 1);
  CHECK(ra.final_metrics.at("tv_exact") > 0.0);
  // identical seeds produce byte-identical metric logs
  CHECK(slurp(ra.metrics_csv) == slurp(rb.metrics_csv));
  CHECK(slurp("/tmp/gfn_run_a/config_resolved.txt") ==
        slurp("/tmp/gfn_run_b/config_resolved.txt"));
  // csv header and shape
  std::string csv = slurp(ra.metrics_csv);
  CHECK(csv.rfind("step,loss,logZ,tv_buffer,tv_exact\n", 0) == 0);
  // checkpoint loads and eval reproduces the same metric values
  Checkpoint ck = load_checkpoint(ra.checkpoint);
  CHECK(ck.step == 60);
  Config ec = make_cfg();
  auto metrics = run_eval(ec, ra.checkpoint, "/tmp/gfn_run_a/eval");
  CHECK(metrics.at("tv_exact") == doctest::Approx(ra.final_metrics.at("tv_exact")));
  // different seed changes the run
  Config c = make_cfg();
  c.set("seed", "4");
  TrainResult rc = run_train(c, "/tmp/gfn_run_c");
  CHECK(slurp(ra.metrics_csv) != slurp(rc.metrics_csv));
}

TEST_CASE("tb training recovers the exact terminal distribution on a line") {
  Config cfg;
  cfg.set("env.name", "hypergrid");
  cfg.set("env.dim", "1");
  cfg.set("env.side", "4");
  cfg.set("train.iterations", "1500");
  cfg.set("train.batch_size", "16");
  cfg.set("mlp.hidden", "32,32");
  cfg.set("eval.interval", "1500");
  cfg.set("eval.metrics", "tv_exact");
  cfg.set("seed", "9");
  TrainResult res = run_train(cfg, "/tmp/gfn_run_line");
  CHECK(res.final_metrics.at("tv_exact") < 0.01);
}

TEST_CASE("unknown config keys abort a run") {
  Config cfg;
  cfg.set("env.name", "hypergrid");
  cfg.set("optimizer.lrr", "0.01");  // typo
  CHECK_THROWS_AS(run_train(cfg, "/tmp/gfn_run_typo"), config_error);
}

TEST_CASE("every objective trains end to end on a small grid") {
  for (const char* obj : {"tb", "db", "subtb", "fldb", "mdb"}) {
    Config cfg;
    cfg.set("env.name", "hypergrid");
    cfg.set("env.dim", "1");
    cfg.set("env.side", "4");
    cfg.set("train.iterations", "20");
    cfg.set("train.batch_size", "4");
    cfg.set("mlp.hidden", "8");
    cfg.set("eval.interval", "20");
    cfg.set("eval.metrics", "tv_buffer");
    cfg.set("objective.name", obj);
    TrainResult res = run_train(cfg, std::string("/tmp/gfn_run_") + obj);
    CHECK(std::isfinite(res.final_loss));
  }
}

TEST_CASE("learned backward policy trains") {
  Config cfg;
  cfg.set("env.name", "hypergrid");
  cfg.set("env.dim", "2");
  cfg.set("env.side", "3");
  cfg.set("train.iterations", "20");
  cfg.set("train.batch_size", "4");
  cfg.set("mlp.hidden", "8");
  cfg.set("eval.interval", "20");
  cfg.set("eval.metrics", "tv_exact");
  cfg.set("objective.learned_backward", "true");
  TrainResult res = run_train(cfg, "/tmp/gfn_run_lb");
  CHECK(std::isfinite(res.final_loss));
}

TEST_CASE("gendata writes loadable artifacts") {
  fs::remove_all("/tmp/gfn_gendata");
  SUBCASE("er-dag") {
    Config cfg;
    cfg.set("env.d", "5");
    run_gendata("er-dag", cfg, "/tmp/gfn_gendata");
    DagDataset data =
        load_dag_dataset("/tmp/gfn_gendata/dag_data.csv", "/tmp/gfn_gendata/dag_data.json");
    CHECK(data.d == 5);
    CHECK(data.n == 100);  // default sample count
  }
  SUBCASE("ising") {
    Config cfg;
    cfg.set("env.side", "3");
    cfg.set("env.data_samples", "50");
    cfg.set("gibbs.burn_in", "50");
    run_gendata("ising", cfg, "/tmp/gfn_gendata");
    auto f = load_ising_samples("/tmp/gfn_gendata/ising_data.txt");
    CHECK(f.side == 3);
    CHECK(f.samples.size() == 50);
  }
  SUBCASE("phylo-synthetic") {
    Config cfg;
    cfg.set("env.n_species", "5");
    cfg.set("env.sites", "7");
    run_gendata("phylo-synthetic", cfg, "/tmp/gfn_gendata");
    SpeciesData sp = load_species("/tmp/gfn_gendata/species.txt");
    CHECK(sp.num_species == 5);
    CHECK(sp.num_sites == 7);
  }
  SUBCASE("modes") {
    Config cfg;
    cfg.set("env.n_bits", "16");
    run_gendata("modes", cfg, "/tmp/gfn_gendata");
    ModeSet ms = load_modes("/tmp/gfn_gendata/modes.txt");
    CHECK(ms.n_bits == 16);
    CHECK(ms.modes.size() == 25);
  }
  SUBCASE("unknown kind") {
    Config cfg;
    CHECK_THROWS_AS(run_gendata("nope", cfg, "/tmp/gfn_gendata"), config_error);
  }
}

TEST_CASE("enumerate utilities") {
  Config cfg;
  cfg.set("env.d", "3");
  CHECK(run_enumerate("dags", cfg) == "dags(3) = 25\n");
  Config cfg2;
  cfg2.set("env.name", "hypergrid");
  cfg2.set("env.dim", "1");
  cfg2.set("env.side", "3");
  const std::string report = run_enumerate("terminals", cfg2);
  CHECK(report.find("terminals = 3") != std::string::npos);
  CHECK(report.find("states = 6") != std::string::npos);
}

TEST_CASE("bench reports a positive rate with spread") {
  Config cfg;
  cfg.set("env.name", "hypergrid");
  cfg.set("env.dim", "1");
  cfg.set("env.side", "3");
  cfg.set("train.batch_size", "4");
  cfg.set("mlp.hidden", "8");
  cfg.set("eval.metrics", "");
  cfg.set("bench.repeats", "2");
  cfg.set("bench.iters", "10");
  cfg.set("bench.warmup", "2");
  BenchReport rep = run_bench(cfg);
  CHECK(rep.mean_iters_per_second > 0.0);
  CHECK(rep.repeats == 2);
  CHECK(rep.stderr3 >= 0.0);
}

TEST_CASE("sequence table run trains against a synthetic table") {
  // full table over length-2 strings of a 3-symbol vocabulary
  RewardTable table;
  table.vocab = 3;
  table.length = 2;
  const std::string syms = "ABC";
  double v = 0.5;
  for (char a : syms)
    for (char b : syms) {
      table.table[std::string{a, b}] = v;
      v += 0.25;
    }
  save_reward_table(table, "/tmp/gfn_seq_table.txt");
  Config cfg;
  cfg.set("env.name", "sequence");
  cfg.set("env.scheme", "prepend-append");
  cfg.set("env.max_len", "2");
  cfg.set("env.vocab", "3");
  cfg.set("env.table_file", "/tmp/gfn_seq_table.txt");
  cfg.set("train.iterations", "30");
  cfg.set("train.batch_size", "8");
  cfg.set("mlp.hidden", "16");
  cfg.set("eval.interval", "30");
  TrainResult res = run_train(cfg, "/tmp/gfn_run_seq");
  CHECK(std::isfinite(res.final_loss));
  CHECK(res.final_metrics.at("tv_buffer") >= 0.0);
}

TEST_CASE("bitseq and dag and phylo and ising smoke runs") {
  SUBCASE("bitseq") {
    Config cfg;
    cfg.set("env.name", "bitseq");
    cfg.set("env.n_bits", "8");
    cfg.set("env.k", "2");
    cfg.set("train.iterations", "12");
    cfg.set("train.batch_size", "4");
    cfg.set("mlp.hidden", "16");
    cfg.set("eval.interval", "12");
    cfg.set("eval.mc_samples", "4");
    TrainResult res = run_train(cfg, "/tmp/gfn_run_bitseq");
    CHECK(std::isfinite(res.final_metrics.at("pearson")));
  }
  SUBCASE("dag with mdb") {
    Config cfg;
    cfg.set("env.name", "dag");
    cfg.set("env.d", "3");
    cfg.set("train.iterations", "12");
    cfg.set("train.batch_size", "8");
    cfg.set("mlp.hidden", "16");
    cfg.set("eval.interval", "12");
    TrainResult res = run_train(cfg, "/tmp/gfn_run_dag");
    CHECK(std::isfinite(res.final_metrics.at("jsd_exact")));
    CHECK(res.final_metrics.at("jsd_exact") <= std::log(2.0));
  }
  SUBCASE("phylo with fldb") {
    Config cfg;
    cfg.set("env.name", "phylo");
    cfg.set("env.n_species", "4");
    cfg.set("env.sites", "4");
    cfg.set("env.c", "2");
    cfg.set("train.iterations", "12");
    cfg.set("train.batch_size", "8");
    cfg.set("mlp.hidden", "16");
    cfg.set("eval.interval", "12");
    cfg.set("eval.policy_samples", "16");
    cfg.set("eval.mc_samples", "4");
    TrainResult res = run_train(cfg, "/tmp/gfn_run_phylo");
    CHECK(std::isfinite(res.final_loss));
  }
  SUBCASE("ising sampling with tb") {
    Config cfg;
    cfg.set("env.name", "ising");
    cfg.set("env.side", "2");
    cfg.set("env.sigma", "0.2");
    cfg.set("train.iterations", "12");
    cfg.set("train.batch_size", "8");
    cfg.set("mlp.hidden", "16");
    cfg.set("eval.interval", "12");
    TrainResult res = run_train(cfg, "/tmp/gfn_run_ising");
    CHECK(std::isfinite(res.final_metrics.at("tv_exact")));
  }
}

TEST_CASE("exact metrics on an unenumerable lattice are explicit errors") {
  Config cfg;
  cfg.set("env.name", "ising");
  cfg.set("env.side", "10");  // 2^100 configurations
  cfg.set("eval.metrics", "tv_exact");
  cfg.set("train.iterations", "1");
  CHECK_THROWS_AS(run_train(cfg, "/tmp/gfn_run_big_ising"), config_error);
}

TEST_CASE("eb-gfn loop runs and tracks the coupling error") {
  Config cfg;
  cfg.set("env.side", "2");
  cfg.set("env.sigma", "0.3");
  cfg.set("env.data_samples", "100");
  cfg.set("gibbs.burn_in", "100");
  cfg.set("train.iterations", "30");
  cfg.set("train.batch_size", "8");
  cfg.set("mlp.hidden", "16");
  cfg.set("eval.interval", "10");
  cfg.set("eb.k", "4");
  cfg.set("eb.data_batch", "16");
  EbGfnResult res = run_eb_gfn(cfg, "/tmp/gfn_run_ebgfn");
  CHECK(std::isfinite(res.final_loss));
  CHECK(res.best_neg_log_rmse >= res.init_neg_log_rmse);
  CHECK(std::isfinite(res.final_neg_log_rmse));
}
