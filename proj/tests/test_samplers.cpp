#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "stormrisk/samplers.hpp"
#include "stormrisk/simstudy.hpp"

#include "oracles.hpp"

using namespace stormrisk;

namespace {

SpatialGraph small_graph() {
  return build_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {1, 4}, {0, 2}});
}

EnsoCalendar cycling_calendar(int first_year, int n_years) {
  EnsoCalendar cal;
  for (int y = 0; y < n_years; ++y) cal.set(first_year + y, y % 3);
  return cal;
}

SimStudyConfig small_config() {
  SimStudyConfig config;
  config.mcmc.n_iterations = 1200;
  config.mcmc.burn_in = 400;
  config.mcmc.thin = 4;
  config.mcmc.seed = 333;
  config.n_replicates = 2;
  return config;
}

Dataset small_dataset(std::uint64_t seed = 99) {
  auto graph = small_graph();
  auto calendar = cycling_calendar(1980, 24);
  SimStudyConfig config = small_config();
  Rng rng = make_rng(seed);
  auto [data, truth] = generate_synthetic_dataset(config, graph, calendar, rng);
  return data;
}

}  // namespace

TEST_CASE("sample_proper_mcar covariance matches the dense inverse") {
  auto g = build_graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  Eigen::Matrix3d sigma;
  sigma << 1.0, 0.4, 0.2, 0.4, 1.2, 0.5, 0.2, 0.5, 0.8;
  const double rho = 0.9;
  Eigen::MatrixXd precision = Eigen::MatrixXd(g.degrees.asDiagonal()) - rho * g.adjacency;
  Eigen::MatrixXd c = precision.inverse();

  Rng rng = make_rng(77);
  const int n = 100000;
  const int dim = 12;  // location-major vec of a 3 x 4 matrix
  Eigen::MatrixXd cov_acc = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd x = sample_proper_mcar(sigma, rho, g, rng);
    Eigen::VectorXd v(dim);
    for (int s = 0; s < 4; ++s)
      for (int k = 0; k < 3; ++k) v(3 * s + k) = x(k, s);
    cov_acc += v * v.transpose();
  }
  cov_acc /= n;
  for (int s = 0; s < 4; ++s)
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          const double expected = sigma(k, l) * c(s, r);
          const double var_i = sigma(k, k) * c(s, s), var_j = sigma(l, l) * c(r, r);
          const double se = std::sqrt((var_i * var_j + expected * expected) / n);
          CHECK(std::abs(cov_acc(3 * s + k, 3 * r + l) - expected) < 4.0 * se + 1e-12);
        }
}

TEST_CASE("sample_proper_mcar rejects the singular boundary") {
  auto g = build_graph(4, {{0, 1}, {1, 2}, {2, 3}});
  CHECK_THROWS_AS(([&] {
                    Rng rng = make_rng(1);
                    sample_proper_mcar(Eigen::Matrix3d::Identity(), 1.0, g, rng);
                  }()),
                  ValidationError);
}

TEST_CASE("sample_proper_mcar independent coordinates stay uncorrelated") {
  auto g = build_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  Rng rng = make_rng(5);
  const int n = 50000;
  double cross = 0.0, var1 = 0.0, var2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd x = sample_proper_mcar(Eigen::Matrix3d::Identity(), 0.95, g, rng);
    cross += x(0, 2) * x(1, 2);
    var1 += x(0, 2) * x(0, 2);
    var2 += x(1, 2) * x(1, 2);
  }
  CHECK(std::abs(cross / std::sqrt(var1 * var2)) < 0.02);
}

TEST_CASE("generate_synthetic_dataset basics") {
  auto graph = small_graph();
  auto calendar = cycling_calendar(1990, 12);
  SimStudyConfig config = small_config();

  SECTION("zero intensity means no storms") {
    SimStudyConfig empty = config;
    empty.count.intercepts.setConstant(-30.0);
    Rng rng = make_rng(3);
    auto [data, truth] = generate_synthetic_dataset(empty, graph, calendar, rng);
    CHECK(data.storms.empty());
  }

  SECTION("paths connected, totals positive, aggregation hides multi-location splits") {
    Rng rng = make_rng(4);
    auto [data, truth] = generate_synthetic_dataset(config, graph, calendar, rng);
    REQUIRE(!data.storms.empty());
    for (std::size_t i = 0; i < data.storms.size(); ++i) {
      const auto& storm = data.storms[i];
      std::uint32_t mask = 0;
      for (int loc : storm.path) mask |= 1u << loc;
      CHECK(oracles::bfs_connected(mask, graph.adjacency));
      CHECK(storm.total_damage > 0.0);
      if (storm.n_hits() > 1)
        CHECK(storm.regional_damages.empty());
      else
        CHECK(storm.regional_damages.size() == 1);
      CHECK(truth.regional_damages[i].size() == storm.path.size());
    }
  }

  SECTION("ground truth recomputes every storm's likelihood") {
    Rng rng = make_rng(5);
    auto [data, truth] = generate_synthetic_dataset(config, graph, calendar, rng);
    auto table = enumerate_connected_subsets(graph);
    std::vector<double> times;
    for (const auto& s : data.storms) times.push_back(s.time);
    std::sort(times.begin(), times.end());
    CHECK(std::isfinite(count_log_likelihood(times, calendar.year_list(), truth.count, calendar)));
    std::vector<StormLatents> latents;
    for (std::size_t i = 0; i < data.storms.size(); ++i) {
      StormPath path;
      path.indicators.assign(graph.size(), 0);
      for (int loc : data.storms[i].path) path.indicators[loc] = 1;
      CHECK(path_log_pmf(path, data.storms[i].phase, truth.path, table).has_value());
      latents.push_back({truth.severities[i], truth.regional_damages[i]});
    }
    CHECK(std::isfinite(damage_log_likelihood(data.storms, latents, truth.damage)));
  }

  SECTION("per-phase counts match the integral oracle") {
    SimStudyConfig flat = config;
    Rng rng = make_rng(6);
    auto cal = cycling_calendar(1900, 90);
    double expected = 0.0;
    for (const auto& [year, phase] : cal.years())
      expected += integrated_intensity_phase(phase, flat.count);
    double total = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      auto [data, truth] = generate_synthetic_dataset(flat, graph, cal, rng);
      total += static_cast<double>(data.storms.size());
    }
    total /= 3.0;
    CHECK(std::abs(total - expected) < 3.0 * std::sqrt(expected / 3.0));
  }
}

TEST_CASE("run_chain determinism and seed sensitivity") {
  Dataset data = small_dataset();
  SamplerConfig config;
  config.n_iterations = 300;
  config.burn_in = 100;
  config.thin = 2;
  config.n_frequencies = 1;
  for (Submodel kind : {Submodel::Count, Submodel::Path, Submodel::Damage}) {
    Chain a = run_chain(kind, data, config, 42);
    Chain b = run_chain(kind, data, config, 42);
    Chain c = run_chain(kind, data, config, 43);
    REQUIRE(a.draws.rows() == config.n_retained());
    CHECK(a.draws == b.draws);
    CHECK(a.draws != c.draws);
  }
}

TEST_CASE("single-storm dataset runs to completion with finite draws") {
  Dataset data = small_dataset();
  data.storms.resize(1);
  data.storms[0].regional_damages.clear();
  SamplerConfig config;
  config.n_iterations = 200;
  config.burn_in = 50;
  config.thin = 1;
  config.n_frequencies = 1;
  for (Submodel kind : {Submodel::Count, Submodel::Path, Submodel::Damage}) {
    Chain chain = run_chain(kind, data, config, 7);
    CHECK(chain.draws.allFinite());
  }
}

TEST_CASE("spatial-effect rows stay centered in every retained draw") {
  Dataset data = small_dataset();
  SamplerConfig config;
  config.n_iterations = 400;
  config.burn_in = 100;
  config.thin = 2;
  config.n_frequencies = 1;
  const int S = data.graph.size();
  for (Submodel kind : {Submodel::Path, Submodel::Damage}) {
    Chain chain = run_chain(kind, data, config, 11);
    for (Eigen::Index i = 0; i < chain.draws.rows(); ++i) {
      for (int k = 0; k < 3; ++k) {
        double sum = 0.0;
        for (int s = 0; s < S; ++s) sum += chain.draws(i, 3 + k * S + s);
        CHECK(std::abs(sum) < 1e-10);
      }
    }
  }
}

TEST_CASE("latent damage splits keep summing to the observed totals") {
  Dataset data = small_dataset();
  SamplerConfig config;
  config.n_iterations = 300;
  config.burn_in = 100;
  config.thin = 2;
  config.n_frequencies = 1;
  Chain chain = run_damage_chain(data, config, 13);
  // Identify multi-location aggregated storms and their latent columns.
  for (std::size_t i = 0; i < data.storms.size(); ++i) {
    const auto& storm = data.storms[i];
    if (storm.n_hits() < 2 || !storm.regional_damages.empty()) continue;
    std::vector<int> cols;
    for (std::size_t j = 0; j < chain.latent_names.size(); ++j)
      if (chain.latent_names[j].rfind("Y." + storm.id + ".", 0) == 0)
        cols.push_back(static_cast<int>(j));
    REQUIRE(static_cast<int>(cols.size()) == storm.n_hits());
    for (Eigen::Index r = 0; r < chain.latent_draws.rows(); ++r) {
      double sum = 0.0;
      for (int c : cols) {
        CHECK(chain.latent_draws(r, c) > 0.0);
        sum += chain.latent_draws(r, c);
      }
      CHECK(sum == Catch::Approx(storm.total_damage).epsilon(1e-9));
    }
  }
}

TEST_CASE("path likelihood factor is shift-invariant on a dataset") {
  Dataset data = small_dataset();
  auto table = enumerate_connected_subsets(data.graph);
  Rng rng = make_rng(15);
  PathParams p(data.graph.size());
  for (int k = 0; k < 3; ++k) {
    p.intercepts(k) = normal(rng);
    for (int s = 0; s < data.graph.size(); ++s) p.spatial_effects(k, s) = normal(rng);
  }
  p.clustering = 0.7;
  PathParams shifted = p;
  shifted.intercepts.array() += 2.3;
  shifted.spatial_effects.array() -= 2.3;
  double base = 0.0, moved = 0.0;
  for (const auto& storm : data.storms) {
    StormPath path;
    path.indicators.assign(data.graph.size(), 0);
    for (int loc : storm.path) path.indicators[loc] = 1;
    base += *path_log_pmf(path, storm.phase, p, table);
    moved += *path_log_pmf(path, storm.phase, shifted, table);
  }
  CHECK(base == Catch::Approx(moved).margin(1e-7));
}

TEST_CASE("short simulation study produces a coherent report") {
  auto graph = small_graph();
  auto calendar = cycling_calendar(1985, 18);
  SimStudyConfig config = small_config();
  config.n_replicates = 2;
  config.n_threads = 2;
  auto report = run_simulation_study(config, graph, calendar);
  CHECK(report.n_failed == 0);
  CHECK(report.rows.size() > 20);
  CHECK(report.average_coverage() > 0.0);
  CHECK(report.row("phi").truth == 1.0);
  CHECK(std::isfinite(report.row("beta0.EN").mean_posterior_mean));
}
