#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <functional>

#include "gfn/envs/ising.hpp"
#include "gfn/exact.hpp"

using namespace gfn;

namespace {

IsingEnv::Params make_params(int side, double sigma) {
  IsingEnv::Params p;
  p.coupling = std::make_shared<IsingCoupling>(toroidal_coupling(side, sigma));
  return p;
}

std::vector<int8_t> spins_from_bits(uint32_t bits, int d) {
  std::vector<int8_t> s(d);
  for (int i = 0; i < d; ++i) s[i] = (bits >> i) & 1 ? 1 : -1;
  return s;
}

}  // namespace

TEST_CASE("toroidal energy hand value") {
  IsingCoupling j = toroidal_coupling(3, 0.1);
  std::vector<int8_t> ones(9, 1);
  CHECK(ising_energy(ones, j) == doctest::Approx(-3.6).epsilon(1e-12));
  // flipping every spin leaves the quadratic form unchanged
  std::vector<int8_t> flipped(9, -1);
  CHECK(ising_energy(flipped, j) == doctest::Approx(ising_energy(ones, j)));
  // energy via the undirected edge list as an independent route
  auto spins = spins_from_bits(0x1b3, 9);
  double via_edges = 0.0;
  for (int a = 0; a < 9; ++a)
    for (int b = a + 1; b < 9; ++b)
      via_edges -= 2.0 * j.at(a, b) * spins[a] * spins[b];
  CHECK(ising_energy(spins, j) == doctest::Approx(via_edges).epsilon(1e-10));
}

TEST_CASE("environment contract") {
  IsingEnv env;
  auto p = make_params(2, 0.3);
  CHECK(env.num_actions(p) == 8);  // 2D actions
  auto inst = env.reset_instance(p);
  std::vector<uint8_t> bmask(env.num_backward_actions(p));
  env.backward_action_mask(inst, p, bmask.data());
  for (uint8_t m : bmask) CHECK(m == 0);  // initial state has no parents
  // terminal exactly after D steps
  env.step_instance(inst, 1, p);   // site 0 -> +1
  env.step_instance(inst, 2, p);   // site 1 -> -1
  env.step_instance(inst, 5, p);   // site 2 -> +1
  CHECK(!inst.is_terminal);
  const double lr = env.step_instance(inst, 6, p);  // site 3 -> -1
  CHECK(inst.is_terminal);
  CHECK(lr == doctest::Approx(-ising_energy(inst.spins, *p.coupling)));
  CHECK(env.encode_terminal(inst, p) == "+-+-");
}

TEST_CASE("trajectory count to a fixed terminal is D!") {
  IsingEnv env;
  auto p = make_params(2, 0.2);
  const std::string target = "+-++";
  std::function<int(IsingEnv::Instance&)> count = [&](IsingEnv::Instance& inst) -> int {
    if (inst.is_terminal) return env.encode_terminal(inst, p) == target ? 1 : 0;
    std::vector<uint8_t> mask(env.num_actions(p));
    env.action_mask(inst, p, mask.data());
    int total = 0;
    for (int a = 0; a < env.num_actions(p); ++a) {
      if (!mask[a]) continue;
      IsingEnv::Instance next = inst;
      env.step_instance(next, a, p);
      total += count(next);
    }
    return total;
  };
  IsingEnv::Instance s0 = env.reset_instance(p);
  CHECK(count(s0) == 24);
}

TEST_CASE("round trips") {
  IsingEnv env;
  auto p = make_params(3, 0.2);
  RngKey key = make_key(71);
  IsingEnv::Instance inst = env.reset_instance(p);
  std::vector<uint8_t> mask(env.num_actions(p));
  for (int step = 0; step < 1500; ++step) {
    if (inst.is_terminal) inst = env.reset_instance(p);
    env.action_mask(inst, p, mask.data());
    std::vector<double> w(mask.begin(), mask.end());
    const int a = categorical(fold_in(key, step), w.data(), static_cast<int>(w.size()));
    IsingEnv::Instance prev = inst;
    env.step_instance(inst, a, p);
    const int bwd = env.get_backward_action(prev, a, inst, p);
    IsingEnv::Instance undone = inst;
    env.backward_step_instance(undone, bwd, p);
    CHECK(undone == prev);
    CHECK(env.get_forward_action(prev, bwd, inst, p) == a);
  }
}

TEST_CASE("heat-bath sampler") {
  SUBCASE("zero coupling gives independent fair spins") {
    IsingCoupling j = zero_coupling(3);
    auto samples = gibbs_data_sampler(j, make_key(72), 10000, {100, 2, 1, 0.2});
    double mean = 0.0;
    for (const auto& s : samples)
      for (int8_t v : s) mean += v;
    mean /= samples.size() * 9.0;
    CHECK(std::fabs(mean) < 3.0 / std::sqrt(10000.0 * 9.0));
  }
  SUBCASE("long-run distribution matches the exact Gibbs measure at N=2") {
    IsingCoupling j = toroidal_coupling(2, 0.25);
    auto exact = ising_exact_distribution(j);
    auto samples = gibbs_data_sampler(j, make_key(73), 40000, {500, 5, 1, 0.2});
    EmpiricalDistribution emp;
    for (const auto& s : samples) emp.add(spins_key(s));
    CHECK(tv_distance(emp, exact) < 0.02);
  }
  SUBCASE("parallel tempering stays on the same target") {
    IsingCoupling j = toroidal_coupling(2, 0.3);
    auto exact = ising_exact_distribution(j);
    auto samples = gibbs_data_sampler(j, make_key(74), 40000, {500, 5, 4, 0.25});
    EmpiricalDistribution emp;
    for (const auto& s : samples) emp.add(spins_key(s));
    CHECK(tv_distance(emp, exact) < 0.02);
  }
  SUBCASE("single-site kernel satisfies detailed balance on enumerated states") {
    IsingCoupling j = toroidal_coupling(2, 0.4);
    auto exact = ising_exact_distribution(j);
    const int d = 4;
    for (uint32_t xb = 0; xb < 16; ++xb) {
      auto x = spins_from_bits(xb, d);
      const double px = exact.prob_of(spins_key(x));
      for (int site = 0; site < d; ++site) {
        auto y = x;
        y[site] = static_cast<int8_t>(-y[site]);
        const double py = exact.prob_of(spins_key(y));
        const double p_up = heat_bath_prob_up(x, site, j);
        const double k_xy = (y[site] == 1 ? p_up : 1.0 - p_up) / d;
        const double p_up_y = heat_bath_prob_up(y, site, j);
        const double k_yx = (x[site] == 1 ? p_up_y : 1.0 - p_up_y) / d;
        CHECK(px * k_xy == doctest::Approx(py * k_yx).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("contrastive-divergence gradient") {
  IsingCoupling j = toroidal_coupling(2, 0.2);
  auto x = spins_from_bits(0b0110, 4);
  SUBCASE("identical pairs cancel") {
    auto g = cd_gradient({x, x}, {x, x}, j);
    for (double v : g) CHECK(v == 0.0);
  }
  SUBCASE("single pair hand value") {
    auto y = spins_from_bits(0b1010, 4);
    auto g = cd_gradient({x}, {y}, j);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const double expect =
            a == b ? 0.0
                   : static_cast<double>(y[a]) * y[b] - static_cast<double>(x[a]) * x[b];
        CHECK(g[a * 4 + b] == doctest::Approx(expect));
      }
  }
  SUBCASE("energy gradient matches finite differences") {
    IsingCoupling jj = toroidal_coupling(3, 0.17);
    auto spins = spins_from_bits(0x15f, 9);
    const double h = 1e-6;
    for (int a = 0; a < 9; ++a)
      for (int b = 0; b < 9; ++b) {
        if (a == b) continue;
        IsingCoupling up = jj, dn = jj;
        up.at(a, b) += h;
        dn.at(a, b) -= h;
        const double fd = (ising_energy(spins, up) - ising_energy(spins, dn)) / (2 * h);
        const double an = -static_cast<double>(spins[a]) * spins[b];  // grad_J E = -x x^T
        CHECK(std::fabs(fd - an) < 1e-6 * std::max(1.0, std::fabs(an)));
      }
  }
}

TEST_CASE("back-and-forth proposal") {
  IsingEnv env;
  auto p = make_params(2, 0.2);
  MlpParams policy = mlp_init(env.obs_dim(p), {16}, env.num_actions(p),
                              env.num_backward_actions(p), make_key(75));
  auto x = spins_from_bits(0b0101, 4);
  SUBCASE("zero steps return the input with ratio one") {
    auto res = back_and_forth_proposal(env, p, policy, false, x, 0, make_key(76));
    CHECK(res.proposal == x);
    CHECK(res.log_ratio == 0.0);
  }
  SUBCASE("uniform policy makes the ratio exactly zero") {
    for (Tensor* t : policy.tensors()) t->fill(0.0);
    for (int k = 1; k <= 4; ++k) {
      auto res = back_and_forth_proposal(env, p, policy, false, x, k, fold_in(make_key(77), k));
      CHECK(res.log_ratio == doctest::Approx(0.0).epsilon(1e-12));
      int assigned = 0;
      for (int8_t v : res.proposal) {
        CHECK(v != 0);
        ++assigned;
      }
      CHECK(assigned == 4);
    }
  }
  SUBCASE("full-depth proposals are fresh policy samples") {
    auto res = back_and_forth_proposal(env, p, policy, false, x, 4, make_key(78));
    CHECK(res.proposal.size() == 4);
    CHECK(std::isfinite(res.log_ratio));
  }
  SUBCASE("invalid depth throws") {
    CHECK_THROWS_AS(back_and_forth_proposal(env, p, policy, false, x, 5, make_key(79)),
                    config_error);
  }
}

TEST_CASE("back-and-forth kernel with MH correction preserves the Gibbs measure") {
  // Start from exact samples, apply one proposal + accept/reject step with an
  // arbitrary (untrained, asymmetric) policy: the output must still follow
  // the target. A wrong Hastings orientation fails this decisively.
  IsingEnv env;
  auto p = make_params(2, 0.35);
  auto exact = ising_exact_distribution(*p.coupling);
  MlpParams policy = mlp_init(env.obs_dim(p), {16}, env.num_actions(p),
                              env.num_backward_actions(p), make_key(83));
  const int n = 60000;
  auto starts = perfect_sampler(exact, make_key(84), n);
  std::vector<std::vector<int8_t>> xs(n);
  for (int i = 0; i < n; ++i) {
    xs[i].resize(4);
    for (int a = 0; a < 4; ++a) xs[i][a] = starts[i][a] == '+' ? 1 : -1;
  }
  for (int k : {2, 4}) {
    auto props = back_and_forth_batch(env, p, policy, false, xs, k, fold_in(make_key(85), k));
    EmpiricalDistribution emp;
    for (int i = 0; i < n; ++i) {
      const double ex = ising_energy(xs[i], *p.coupling);
      const double ep = ising_energy(props[i].proposal, *p.coupling);
      const bool take =
          mh_accept(ex, ep, props[i].log_ratio, fold_in(fold_in(make_key(86), k), i));
      emp.add(spins_key(take ? props[i].proposal : xs[i]));
    }
    CHECK(tv_distance(emp, exact) < 0.015);
  }
}

TEST_CASE("metropolis acceptance") {
  CHECK(mh_accept(1.0, 1.0, 0.0, make_key(80)));  // identical proposal
  CHECK(mh_accept(5.0, 0.0, 0.0, make_key(81)));  // large energy drop
  SUBCASE("empirical acceptance matches the analytic rate") {
    const double ex = 0.4, ep = 1.1, ratio = 0.2;
    const double analytic = std::exp(std::min(0.0, -ep + ex + ratio));
    int accepted = 0;
    const int trials = 100000;
    for (int i = 0; i < trials; ++i)
      accepted += mh_accept(ex, ep, ratio, fold_in(make_key(82), i)) ? 1 : 0;
    const double se = std::sqrt(analytic * (1 - analytic) / trials);
    CHECK(std::fabs(accepted / static_cast<double>(trials) - analytic) < 3 * se);
  }
}

TEST_CASE("negative log rmse") {
  IsingCoupling j = toroidal_coupling(3, 0.2);
  IsingCoupling shifted = j;
  for (double& v : shifted.j) v += 0.01;
  CHECK(neg_log_rmse(j, shifted) == doctest::Approx(-std::log(0.01)).epsilon(1e-10));
  CHECK(std::isinf(neg_log_rmse(j, j)));
  IsingCoupling doubled = j;
  for (double& v : doubled.j) v += 0.02;
  CHECK(neg_log_rmse(j, shifted) - neg_log_rmse(j, doubled) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("exact distribution and sample file io") {
  IsingCoupling j = toroidal_coupling(2, 0.3);
  auto exact = ising_exact_distribution(j);
  CHECK(exact.size() == 16);
  double total = 0.0;
  for (double q : exact.probs) total += q;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  IsingSampleFile f;
  f.side = 2;
  f.sigma = 0.3;
  f.samples = {spins_from_bits(0b1100, 4), spins_from_bits(0b0011, 4)};
  save_ising_samples(f, "/tmp/gfn_ising_test.txt");
  auto back = load_ising_samples("/tmp/gfn_ising_test.txt");
  CHECK(back.side == 2);
  CHECK(back.sigma == 0.3);
  CHECK(back.samples == f.samples);
  std::remove("/tmp/gfn_ising_test.txt");
}
