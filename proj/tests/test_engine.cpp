#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <boost/math/distributions/inverse_gaussian.hpp>
#include <cmath>
#include <map>
#include <sstream>

#include "nigrecon/engine.hpp"
#include "nigrecon/icecore.hpp"
#include "support/exact_toy.hpp"
#include "support/stat_tests.hpp"

using namespace nigrecon;
using namespace nigrecon::engine;
namespace nt = nigrecon::testing;
using nt::chron;
using nt::Comp;
using nt::grid_cdf;
using nt::kToy;
using nt::one_dim;
using nt::wasserstein;

namespace {

// Random multi-dimensional mixtures with G_i components each.
std::vector<mixtures::LayerMDP> random_layers(std::size_t n, std::size_t m, std::size_t G,
                                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<mixtures::LayerMDP> out;
  for (std::size_t i = 0; i < n; ++i) {
    mixtures::LayerMDP l;
    l.layer_index = i + 1;
    double total = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
      mixtures::MixtureComponent c;
      c.weight = 0.5 + rng.uniform();
      total += c.weight;
      for (std::size_t j = 0; j < m; ++j) {
        c.mean.push_back(rng.normal());
        c.precision.push_back(0.5 + 3.0 * rng.uniform());
      }
      l.components.push_back(c);
    }
    for (auto& c : l.components) c.weight /= total;
    out.push_back(l);
  }
  return out;
}

ChronologySet random_chron(std::size_t rows, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ChronologySet s;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> t(n);
    double acc = 0.0;
    for (auto& x : t) {
      acc += 0.05 + 0.2 * rng.uniform();
      x = acc;
    }
    s.draws.append_row(t);
  }
  return s;
}

std::string chain_text(const std::vector<ChainRecord>& recs, std::size_t n, std::size_t m) {
  std::ostringstream os;
  os << chain_header(n, m) << '\n';
  for (const auto& r : recs) os << chain_row(r) << '\n';
  return os.str();
}

EngineConfig toy_config() {
  EngineConfig c;
  c.eta = {kToy.eta};
  c.phi = {kToy.phi};
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("init_state picks heaviest components and prior-mean volatilities") {
  auto layers = random_layers(6, 2, 1, 1);
  auto ch = random_chron(3, 6, 2);
  EngineConfig cfg;
  auto s = init_state(layers, ch, cfg);
  for (auto k : s.k) CHECK(k == 0);
  for (std::size_t i = 0; i < 5; ++i) {
    const double d = ch.draws(0, i + 1) - ch.draws(0, i);
    CHECK(s.delta[i] == d);
    for (std::size_t j = 0; j < 2; ++j) CHECK(s.v(i, j) == 2.66 * d);
  }
  auto multi = one_dim({{{0.2, 0, 1}, {0.8, 1, 1}}, {{0.7, 0, 1}, {0.3, 1, 1}}});
  auto s2 = init_state(multi, chron({{0.0, 1.0}}), cfg);
  CHECK(s2.k[0] == 1);
  CHECK(s2.k[1] == 0);
}

TEST_CASE("init_state rejects mismatched inputs naming the layer") {
  auto layers = random_layers(4, 2, 2, 3);
  layers[2].components[1].mean.push_back(0.0);
  layers[2].components[1].precision.push_back(1.0);
  EngineConfig cfg;
  try {
    init_state(layers, random_chron(2, 4, 1), cfg);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("layer 3") != std::string::npos);
  }
  CHECK_THROWS_AS(init_state(random_layers(4, 2, 2, 3), random_chron(2, 5, 1), cfg),
                  std::invalid_argument);
  auto bad = random_chron(2, 4, 1);
  bad.draws(1, 2) = bad.draws(1, 1);
  CHECK_THROWS_AS(init_state(random_layers(4, 2, 2, 3), bad, cfg), std::invalid_argument);
  cfg.eta = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(init_state(random_layers(4, 2, 2, 3), random_chron(2, 4, 1), cfg),
                  std::invalid_argument);
}

TEST_CASE("run is deterministic, thread-count invariant and honours the retention rule") {
  auto layers = random_layers(12, 3, 3, 5);
  auto ch = random_chron(20, 12, 6);
  EngineConfig cfg;
  cfg.iters = 600;
  cfg.burnin = 100;
  cfg.thin = 25;
  cfg.seed = 9;
  const auto a = run(layers, ch, cfg);
  const auto b = run(layers, ch, cfg);
  cfg.threads = 3;
  const auto c = run(layers, ch, cfg);
  CHECK(chain_text(a, 12, 3) == chain_text(b, 12, 3));
  CHECK(chain_text(a, 12, 3) == chain_text(c, 12, 3));
  REQUIRE(a.size() == 20);
  for (std::size_t r = 0; r < a.size(); ++r) CHECK(a[r].iter == 125 + 25 * r);
  cfg.seed = 10;
  CHECK(chain_text(run(layers, ch, cfg), 12, 3) != chain_text(a, 12, 3));

  std::vector<ChainRecord> streamed;
  cfg.seed = 9;
  cfg.threads = 1;
  const auto kept = run(layers, ch, cfg, [&](const ChainRecord& r) { streamed.push_back(r); });
  CHECK(kept.empty());
  CHECK(chain_text(streamed, 12, 3) == chain_text(a, 12, 3));
}

TEST_CASE("zero iterations give an empty chain; bad counts are rejected") {
  auto layers = random_layers(4, 1, 2, 1);
  auto ch = random_chron(2, 4, 1);
  EngineConfig cfg;
  cfg.iters = 0;
  cfg.burnin = 0;
  CHECK(run(layers, ch, cfg).empty());
  cfg.iters = 10;
  cfg.burnin = 10;
  CHECK_THROWS_AS(run(layers, ch, cfg), std::invalid_argument);
  cfg.burnin = 2;
  cfg.thin = 0;
  CHECK_THROWS_AS(run(layers, ch, cfg), std::invalid_argument);
}

TEST_CASE("vanishing proposal scale accepts almost everything") {
  auto layers = random_layers(10, 2, 2, 4);
  EngineConfig cfg;
  cfg.iters = 2000;
  cfg.burnin = 100;
  cfg.proposal_sd = 1e-7;
  cfg.adapt = false;
  EngineState s;
  run(layers, random_chron(5, 10, 3), cfg, [](const ChainRecord&) {}, &s);
  double prop = 0.0;
  double acc = 0.0;
  for (double x : s.stats.proposed.data()) prop += x;
  for (double x : s.stats.accepted.data()) acc += x;
  CHECK(prop == doctest::Approx(1900.0 * 9 * 2));
  CHECK(acc / prop > 0.999);
}

TEST_CASE("uninformative layers return the inverse Gaussian prior") {
  // With tau -> 0 the collapsed likelihood is flat in v.
  auto layers = one_dim({{{1.0, 0.3, 1e-8}}, {{1.0, -2.0, 1e-8}}, {{1.0, 1.0, 1e-8}},
                         {{1.0, 0.0, 1e-8}}});
  auto ch = chron({{0.0, 0.5, 1.7, 2.0}});
  EngineConfig cfg;
  cfg.iters = 220000;
  cfg.burnin = 20000;
  cfg.thin = 40;
  cfg.eta = {1.3};
  cfg.phi = {3.0};
  cfg.seed = 21;
  const auto recs = run(layers, ch, cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    const double d = ch.draws(0, i + 1) - ch.draws(0, i);
    boost::math::inverse_gaussian_distribution<double> ig(1.3 * d, 3.0 * 1.3 * d * d);
    std::vector<double> xs;
    for (const auto& r : recs) xs.push_back(r.v(i, 0));
    const auto ks = nt::ks_one_sample(xs, [&](double x) { return boost::math::cdf(ig, x); });
    INFO("increment " << i << " D=" << ks.statistic);
    CHECK(ks.pvalue > 0.01);
  }
}

TEST_CASE("fixed indicators: v marginal matches the quadrature posterior") {
  std::vector<std::vector<Comp>> fixed;
  for (const auto& l : kToy.layers) fixed.push_back({{1.0, l[1].mean, l[1].prec}});
  const auto truth = kToy.solve(true, {1, 1, 1});
  auto cfg = toy_config();
  cfg.iters = 220000;
  cfg.burnin = 20000;
  cfg.thin = 40;
  const auto recs = run(one_dim(fixed), chron({{0.0, 1.0, 1.7}}), cfg);
  for (int d = 0; d < 2; ++d) {
    std::vector<double> xs;
    for (const auto& r : recs) xs.push_back(r.v(d, 0));
    const auto& w = d == 0 ? truth.weight1 : truth.weight2;
    const auto ks = nt::ks_one_sample(xs, [&](double x) { return grid_cdf(truth.grid, w, x); });
    INFO("v" << d + 1 << " D=" << ks.statistic);
    CHECK(ks.pvalue > 0.01);
  }
}

TEST_CASE("joint (K, v) posterior matches exact enumeration") {
  const auto truth = kToy.solve();
  auto cfg = toy_config();
  cfg.iters = 420000;
  cfg.burnin = 20000;
  cfg.thin = 5;
  std::vector<std::vector<Comp>> layers = kToy.layers;
  const auto recs = run(one_dim(layers), chron({{0.0, 1.0, 1.7}}), cfg);
  std::map<std::array<int, 3>, double> freq;
  for (const auto& r : recs) {
    freq[{static_cast<int>(r.k[0]), static_cast<int>(r.k[1]), static_cast<int>(r.k[2])}] += 1.0;
  }
  double tv = 0.0;
  for (const auto& [key, p] : truth.pk) tv += std::abs(p - freq[key] / recs.size());
  tv *= 0.5;
  INFO("TV = " << tv);
  CHECK(tv < 0.05);
  for (int d = 0; d < 2; ++d) {
    std::vector<double> xs;
    for (const auto& r : recs) xs.push_back(r.v(d, 0));
    const double m = nt::mean(xs);
    const double sd = std::sqrt(nt::variance(xs));
    INFO("v" << d + 1 << " mean " << m << " vs " << truth.mean[d] << ", sd " << sd << " vs "
             << truth.sd[d]);
    CHECK(std::abs(m - truth.mean[d]) < 0.05 * truth.mean[d]);
    CHECK(std::abs(sd - truth.sd[d]) < 0.05 * truth.sd[d]);
    const double w1 = wasserstein(xs, truth.grid, d == 0 ? truth.weight1 : truth.weight2);
    INFO("W1 = " << w1);
    CHECK(w1 < 0.05 * truth.sd[d]);
  }
}

TEST_CASE("indistinguishable components are always accepted") {
  auto layers = random_layers(5, 2, 2, 8);
  for (auto& l : layers) {
    l.components[1].mean = l.components[0].mean;
    l.components[1].precision = l.components[0].precision;
  }
  EngineConfig cfg;
  cfg.iters = 500;
  cfg.burnin = 50;
  EngineState s;
  run(layers, random_chron(3, 5, 1), cfg, [](const ChainRecord&) {}, &s);
  CHECK(s.stats.indicator_proposed == 450 * 5);
  CHECK(s.stats.indicator_accepted == s.stats.indicator_proposed);
}

TEST_CASE("a proposal equal to the current component is accepted") {
  auto layers = random_layers(3, 1, 2, 2);
  EngineConfig cfg;
  auto s = init_state(layers, random_chron(1, 3, 1), cfg);
  s.counting = true;
  // Force the categorical draw onto the current component by making its
  // weight 1.
  s.layers[1].weight = {s.k[1] == 0 ? 1.0 : 0.0, s.k[1] == 1 ? 1.0 : 0.0};
  Rng rng(3);
  for (int t = 0; t < 100; ++t) CHECK(update_indicator(s, 1, rng));
  CHECK(s.stats.indicator_accepted == 100);
}

TEST_CASE("single-component layers make indicator updates a no-op") {
  auto layers = random_layers(3, 1, 1, 2);
  EngineConfig cfg;
  auto s = init_state(layers, random_chron(1, 3, 1), cfg);
  Rng rng(3);
  const Rng before = rng;
  CHECK_FALSE(update_indicator(s, 0, rng));
  CHECK(rng.engine() == Rng(before).engine());
}

TEST_CASE("chronology rows are drawn uniformly whatever the layer content") {
  const std::size_t R = 7;
  auto ch = random_chron(R, 6, 4);
  for (std::uint64_t mix_seed : {1u, 2u}) {
    auto layers = random_layers(6, 2, 3, mix_seed);
    EngineConfig cfg;
    cfg.iters = 7000;
    cfg.burnin = 0;
    cfg.thin = 1;
    std::vector<double> counts(R, 0.0);
    run(layers, ch, cfg, [&](const ChainRecord& r) {
      counts[r.chron_idx] += 1.0;
    });
    CHECK(nt::chi_square_pvalue(counts, std::vector<double>(R, 1000.0)) > 0.01);
  }
  auto layers = random_layers(6, 2, 3, 1);
  EngineConfig cfg;
  auto s = init_state(layers, ch, cfg);
  Rng rng(5);
  const auto v_before = s.cache[0].v();
  const auto k_before = s.k;
  for (int t = 0; t < 20; ++t) {
    resample_chronology(s, ch, rng);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(s.delta[i] == ch.draws(s.chron_idx, i + 1) - ch.draws(s.chron_idx, i));
    }
  }
  CHECK(s.cache[0].v() == v_before);
  CHECK(s.k == k_before);

  auto single = chron({{0.0, 1.0, 2.0, 3.0, 4.0, 5.0}});
  auto s1 = init_state(layers, single, cfg);
  Rng r1(5);
  const Rng r1_before = r1;
  resample_chronology(s1, single, r1);
  CHECK(s1.chron_idx == 0);
  CHECK(r1.engine() == Rng(r1_before).engine());
}

TEST_CASE("fixed hyperparameters stay at their configured values") {
  auto layers = random_layers(5, 3, 2, 1);
  EngineConfig cfg;
  cfg.iters = 300;
  cfg.burnin = 100;
  cfg.thin = 10;
  for (const auto& r : run(layers, random_chron(4, 5, 2), cfg)) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(r.eta[j] == 2.66);
      CHECK(r.phi[j] == 15.33);
    }
  }
}

TEST_CASE("hyperparameter draws use the shared conditionals") {
  auto layers = random_layers(8, 2, 1, 4);
  EngineConfig cfg;
  auto s = init_state(layers, random_chron(1, 8, 3), cfg);
  icecore::IceHyper h;
  Rng a(17);
  Rng b(17);
  const auto phi0 = s.phi;
  update_hyper(s, h, a);
  for (std::size_t j = 0; j < 2; ++j) {
    const double eta = dists::gig_sample(
        b, icecore::eta_conditional(phi0[j], s.cache[j].v(), s.delta, h.a_eta, h.b_eta));
    const double phi = dists::gamma_sample(
        b, icecore::phi_conditional(eta, s.cache[j].v(), s.delta, h.a_phi, h.b_phi));
    CHECK(s.eta[j] == eta);
    CHECK(s.phi[j] == phi);
  }
}

TEST_CASE("hyperparameter posterior covers the generating values") {
  const double eta_true = 2.66;
  const double phi_true = 15.33;
  const std::size_t n = 201;
  auto layers = one_dim(std::vector<std::vector<Comp>>(n, {{1.0, 0.0, 1e-8}}));
  Rng master(2024);
  int cover_eta = 0;
  int cover_phi = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<double> t(n);
    for (std::size_t i = 1; i < n; ++i) t[i] = t[i - 1] + 0.02 + 0.1 * master.uniform();
    auto ch = chron({t});
    EngineConfig cfg;
    auto s = init_state(layers, ch, cfg);
    std::vector<double> v(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      v[i] = dists::ig2_sample(master, {eta_true * s.delta[i], phi_true * s.delta[i]});
    }
    s.cache[0] = lincore::MarginalCache(s.cache[0].mu(), s.cache[0].tau(), v);
    std::vector<double> etas;
    std::vector<double> phis;
    Rng rng = Rng::substream(77, rep);
    for (int it = 0; it < 2200; ++it) {
      update_hyper(s, icecore::IceHyper{}, rng);
      if (it >= 200) {
        etas.push_back(s.eta[0]);
        phis.push_back(s.phi[0]);
      }
    }
    std::sort(etas.begin(), etas.end());
    std::sort(phis.begin(), phis.end());
    const std::size_t lo = etas.size() / 20;
    const std::size_t hi = etas.size() - 1 - lo;
    cover_eta += etas[lo] <= eta_true && eta_true <= etas[hi];
    cover_phi += phis[lo] <= phi_true && phi_true <= phis[hi];
  }
  INFO("eta coverage " << cover_eta << "/" << reps << ", phi coverage " << cover_phi);
  CHECK(cover_eta >= 170);
  CHECK(cover_eta <= 190);
  CHECK(cover_phi >= 170);
  CHECK(cover_phi <= 190);
}

TEST_CASE("adapted acceptance rates land in a workable band") {
  auto layers = random_layers(40, 3, 5, 12);
  EngineConfig cfg;
  cfg.iters = 6000;
  cfg.burnin = 3000;
  cfg.thin = 100;
  EngineState s;
  run(layers, random_chron(50, 40, 13), cfg, [](const ChainRecord&) {}, &s);
  for (std::size_t c = 0; c < s.stats.proposed.data().size(); ++c) {
    const double rate = s.stats.accepted.data()[c] / s.stats.proposed.data()[c];
    CHECK(rate > 0.1);
    CHECK(rate < 0.7);
  }
}

TEST_CASE("log target tracks the incremental caches") {
  auto layers = random_layers(15, 2, 3, 3);
  auto ch = random_chron(1, 15, 3);
  EngineConfig cfg;
  cfg.iters = 300;
  cfg.burnin = 10;
  EngineState s;
  run(layers, ch, cfg, [](const ChainRecord&) {}, &s);
  std::vector<lincore::MarginalCache> fresh;
  double slow = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) slow += s.layers[i].log_weight[s.k[i]];
  for (std::size_t j = 0; j < s.m; ++j) {
    std::vector<double> mu;
    std::vector<double> tau;
    for (std::size_t i = 0; i < s.n; ++i) {
      mu.push_back(s.layers[i].mean(s.k[i], j));
      tau.push_back(s.layers[i].precision(s.k[i], j));
    }
    CHECK(s.cache[j].mu() == mu);
    CHECK(s.cache[j].tau() == tau);
    slow += lincore::marginal_logterm(mu, tau, s.cache[j].v());
    for (std::size_t i = 0; i + 1 < s.n; ++i) {
      slow += dists::ig2_logpdf(s.v(i, j), {s.eta[j] * s.delta[i], s.phi[j] * s.delta[i]}) -
              0.5 * std::log(s.v(i, j));
    }
  }
  CHECK(log_target(s) == doctest::Approx(slow).epsilon(1e-9));
}

TEST_CASE("chain and chronology files round trip") {
  auto layers = random_layers(5, 2, 3, 3);
  auto ch = random_chron(4, 5, 3);
  EngineConfig cfg;
  cfg.iters = 200;
  cfg.burnin = 100;
  cfg.thin = 20;
  const auto recs = run(layers, ch, cfg);
  std::istringstream in(chain_text(recs, 5, 2));
  const auto back = read_chain(in, "chain");
  REQUIRE(back.size() == recs.size());
  for (std::size_t r = 0; r < recs.size(); ++r) {
    CHECK(back[r].iter == recs[r].iter);
    CHECK(back[r].chron_idx == recs[r].chron_idx);
    CHECK(back[r].k == recs[r].k);
    CHECK(back[r].v == recs[r].v);
    CHECK(back[r].eta == recs[r].eta);
  }
  CHECK(chain_header(3, 2) ==
        "iter,chron_idx,k_1,k_2,k_3,v_1_1,v_1_2,v_2_1,v_2_2,eta_1,eta_2,phi_1,phi_2");

  std::ostringstream os;
  write_chronologies(os, ch);
  std::istringstream cin(os.str());
  CHECK(read_chronologies(cin, "c").draws == ch.draws);
  std::istringstream bad_header("a,b\n1,2\n");
  CHECK_THROWS(read_chronologies(bad_header, "c"));
  std::istringstream bad_order("t1,t2\n1,2\n3,2\n");
  try {
    read_chronologies(bad_order, "c.csv");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("c.csv") != std::string::npos);
  }
  std::istringstream not_chain("x,y\n1,2\n");
  CHECK_THROWS(read_chain(not_chain, "x"));
}
