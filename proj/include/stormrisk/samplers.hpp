#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stormrisk/count_model.hpp"
#include "stormrisk/damage_model.hpp"
#include "stormrisk/dataset.hpp"
#include "stormrisk/mcmc.hpp"
#include "stormrisk/path_model.hpp"

namespace stormrisk {

// ------------------------- chain column layouts --------------------------

inline std::vector<std::string> count_param_names(int n_frequencies) {
  std::vector<std::string> names;
  for (int k = 0; k < 3; ++k) names.push_back(std::string("beta0.") + phase_label(k));
  for (int p = 0; p < n_frequencies; ++p) {
    for (int k = 0; k < 3; ++k)
      names.push_back(std::string("u.") + phase_label(k) + "." + std::to_string(p + 1));
    for (int k = 0; k < 3; ++k)
      names.push_back(std::string("v.") + phase_label(k) + "." + std::to_string(p + 1));
  }
  return names;
}

inline std::vector<std::string> cov_entry_names(const std::string& prefix) {
  std::vector<std::string> names;
  for (int k = 0; k < 3; ++k)
    for (int l = k; l < 3; ++l)
      names.push_back(prefix + "." + phase_label(k) + "." + phase_label(l));
  return names;
}

inline std::vector<std::string> path_param_names(const SpatialGraph& graph) {
  std::vector<std::string> names;
  for (int k = 0; k < 3; ++k) names.push_back(std::string("gamma0.") + phase_label(k));
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < graph.size(); ++s)
      names.push_back(std::string("gamma.") + phase_label(k) + "." + graph.locations[s]);
  names.push_back("phi");
  for (auto& n : cov_entry_names("Sigma_gamma")) names.push_back(n);
  return names;
}

inline std::vector<std::string> damage_param_names(const SpatialGraph& graph) {
  std::vector<std::string> names;
  for (int k = 0; k < 3; ++k) names.push_back(std::string("xi0.") + phase_label(k));
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < graph.size(); ++s)
      names.push_back(std::string("xi.") + phase_label(k) + "." + graph.locations[s]);
  names.push_back("sigma2");
  names.push_back("sigma2_zeta");
  for (auto& n : cov_entry_names("Sigma_xi")) names.push_back(n);
  return names;
}

namespace detail {

inline void pack_cov(const Eigen::Matrix3d& cov, Eigen::VectorXd& row, int& j) {
  for (int k = 0; k < 3; ++k)
    for (int l = k; l < 3; ++l) row(j++) = cov(k, l);
}

inline Eigen::Matrix3d unpack_cov(const Eigen::VectorXd& row, int& j) {
  Eigen::Matrix3d cov;
  for (int k = 0; k < 3; ++k)
    for (int l = k; l < 3; ++l) {
      cov(k, l) = row(j);
      cov(l, k) = row(j);
      ++j;
    }
  return cov;
}

}  // namespace detail

inline Eigen::VectorXd pack_count_params(const CountParams& p) {
  const int P = p.n_frequencies();
  Eigen::VectorXd row(3 + 6 * P);
  int j = 0;
  for (int k = 0; k < 3; ++k) row(j++) = p.intercepts(k);
  for (int q = 0; q < P; ++q) {
    for (int k = 0; k < 3; ++k) row(j++) = p.sine_coeffs(k, q);
    for (int k = 0; k < 3; ++k) row(j++) = p.cosine_coeffs(k, q);
  }
  return row;
}

inline CountParams count_params_from_row(const Eigen::VectorXd& row, int n_frequencies) {
  CountParams p(n_frequencies);
  int j = 0;
  for (int k = 0; k < 3; ++k) p.intercepts(k) = row(j++);
  for (int q = 0; q < n_frequencies; ++q) {
    for (int k = 0; k < 3; ++k) p.sine_coeffs(k, q) = row(j++);
    for (int k = 0; k < 3; ++k) p.cosine_coeffs(k, q) = row(j++);
  }
  return p;
}

inline Eigen::VectorXd pack_path_params(const PathParams& p) {
  const int S = p.n_locations();
  Eigen::VectorXd row(3 + 3 * S + 1 + 6);
  int j = 0;
  for (int k = 0; k < 3; ++k) row(j++) = p.intercepts(k);
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < S; ++s) row(j++) = p.spatial_effects(k, s);
  row(j++) = p.clustering;
  detail::pack_cov(p.spatial_cov, row, j);
  return row;
}

inline PathParams path_params_from_row(const Eigen::VectorXd& row, int n_locations) {
  PathParams p(n_locations);
  int j = 0;
  for (int k = 0; k < 3; ++k) p.intercepts(k) = row(j++);
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < n_locations; ++s) p.spatial_effects(k, s) = row(j++);
  p.clustering = row(j++);
  p.spatial_cov = detail::unpack_cov(row, j);
  return p;
}

inline Eigen::VectorXd pack_damage_params(const DamageParams& p) {
  const int S = p.n_locations();
  Eigen::VectorXd row(3 + 3 * S + 2 + 6);
  int j = 0;
  for (int k = 0; k < 3; ++k) row(j++) = p.intercepts(k);
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < S; ++s) row(j++) = p.spatial_effects(k, s);
  row(j++) = p.log_damage_var;
  row(j++) = p.severity_var;
  detail::pack_cov(p.spatial_cov, row, j);
  return row;
}

inline DamageParams damage_params_from_row(const Eigen::VectorXd& row, int n_locations) {
  DamageParams p(n_locations);
  int j = 0;
  for (int k = 0; k < 3; ++k) p.intercepts(k) = row(j++);
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < n_locations; ++s) p.spatial_effects(k, s) = row(j++);
  p.log_damage_var = row(j++);
  p.severity_var = row(j++);
  p.spatial_cov = detail::unpack_cov(row, j);
  return p;
}

namespace detail {

struct ChainRecorder {
  Chain chain;
  int retained = 0;
  int unthinned_rows = 0;

  void init(Submodel kind, const SamplerConfig& config, std::uint64_t seed,
            std::vector<std::string> names, std::vector<std::string> latent_names = {}) {
    chain.kind = kind;
    chain.seed = seed;
    chain.n_frequencies = config.n_frequencies;
    chain.names = std::move(names);
    chain.latent_names = std::move(latent_names);
    chain.draws.resize(config.n_retained(), chain.names.size());
    chain.latent_draws.resize(chain.latent_names.empty() ? 0 : config.n_retained(),
                              chain.latent_names.size());
    if (config.store_unthinned)
      chain.unthinned.resize(config.n_iterations - config.burn_in, chain.names.size());
  }

  // Called once per completed sweep (0-based iteration index).
  void record(int iteration, const SamplerConfig& config, const Eigen::VectorXd& row,
              const Eigen::VectorXd* latent_row = nullptr) {
    const int past_burn_in = iteration + 1 - config.burn_in;
    if (past_burn_in <= 0) return;
    if (config.store_unthinned) chain.unthinned.row(unthinned_rows++) = row.transpose();
    if (past_burn_in % config.thin == 0 && retained < chain.draws.rows()) {
      chain.draws.row(retained) = row.transpose();
      if (latent_row != nullptr && chain.latent_draws.rows() > 0)
        chain.latent_draws.row(retained) = latent_row->transpose();
      ++retained;
    }
  }
};

}  // namespace detail

// ------------------------------ count chain ------------------------------

inline Chain run_count_chain(const Dataset& data, const SamplerConfig& config,
                             std::uint64_t seed) {
  config.validate();
  const int P = config.n_frequencies;
  Rng rng = make_rng(seed);

  // Per-phase data: storm within-year times and number of modeled years.
  std::array<std::vector<double>, 3> taus;
  std::array<int, 3> n_years{0, 0, 0};
  for (const auto& [year, phase] : data.calendar.years()) n_years[phase]++;
  for (const auto& storm : data.storms)
    taus[storm.phase].push_back(storm.time - std::floor(storm.time));

  CountParams params(P);
  for (int k = 0; k < 3; ++k) {
    const double years = std::max(n_years[k], 1);
    const double rate = std::max(taus[k].size() / (years * kSeasonLength), 0.05);
    params.intercepts(k) = std::log(rate);
  }

  auto phase_loglik = [&](int k) {
    double ll = 0.0;
    for (double tau : taus[k]) ll += seasonal_log_intensity(tau, k, params);
    ll -= n_years[k] * integrated_intensity_phase(k, params);
    return ll;
  };

  auto names = count_param_names(P);
  detail::ChainRecorder rec;
  rec.init(Submodel::Count, config, seed, names);
  std::vector<StepSizeAdapter> adapters(names.size(),
                                        StepSizeAdapter(config.initial_step, config.tuning_window,
                                                        config.adaptation_gain,
                                                        config.target_acceptance));

  auto update_scalar = [&](double& value, int k, int adapter_idx, bool adapting) {
    auto target = [&](double x) {
      const double old = value;
      value = x;
      const double ll = phase_loglik(k);
      value = old;
      return ll;
    };
    auto result = metropolis_scalar_step(value, target, adapters[adapter_idx].step(), rng);
    value = result.value;
    adapters[adapter_idx].record(result.accepted, adapting);
  };

  for (int it = 0; it < config.n_iterations; ++it) {
    const bool adapting = it < config.burn_in;
    int j = 0;
    for (int k = 0; k < 3; ++k, ++j)
      if (n_years[k] > 0) update_scalar(params.intercepts(k), k, j, adapting);
    for (int q = 0; q < P; ++q) {
      for (int k = 0; k < 3; ++k, ++j)
        if (n_years[k] > 0) update_scalar(params.sine_coeffs(k, q), k, j, adapting);
      for (int k = 0; k < 3; ++k, ++j)
        if (n_years[k] > 0) update_scalar(params.cosine_coeffs(k, q), k, j, adapting);
    }
    rec.record(it, config, pack_count_params(params));
  }

  for (std::size_t j = 0; j < names.size(); ++j) {
    rec.chain.acceptance_rates[names[j]] = adapters[j].post_burn_in_rate();
    rec.chain.final_step_sizes[names[j]] = adapters[j].step();
  }
  return rec.chain;
}

// ------------------------------ path chain -------------------------------

inline Chain run_path_chain(const Dataset& data, const SamplerConfig& config, std::uint64_t seed,
                            const ConnectedSubsetTable* shared_table = nullptr) {
  config.validate();
  const SpatialGraph& graph = data.graph;
  const int S = graph.size();
  Rng rng = make_rng(seed);

  ConnectedSubsetTable local_table;
  if (shared_table == nullptr) {
    local_table = enumerate_connected_subsets(graph);
    shared_table = &local_table;
  }
  const ConnectedSubsetTable& table = *shared_table;

  // Sufficient statistics: the autologistic likelihood is linear in every
  // parameter given (total hits, per-location hits, internal edges) by phase.
  std::array<double, 3> n_storms{0, 0, 0}, total_hits{0, 0, 0}, total_edges{0, 0, 0};
  Eigen::Matrix3Xd loc_hits = Eigen::Matrix3Xd::Zero(3, S);
  for (const auto& storm : data.storms) {
    std::uint32_t mask = 0;
    for (int loc : storm.path) mask |= (1u << loc);
    n_storms[storm.phase] += 1.0;
    total_hits[storm.phase] += storm.n_hits();
    total_edges[storm.phase] += subset_internal_edges(mask, graph.neighbor_masks);
    for (int loc : storm.path) loc_hits(storm.phase, loc) += 1.0;
  }

  PathParams params(S);
  for (int k = 0; k < 3; ++k) {
    if (n_storms[k] > 0) {
      const double rate = std::clamp(total_hits[k] / (n_storms[k] * S), 1e-3, 1.0 - 1e-3);
      params.intercepts(k) = std::log(rate / (1.0 - rate));
    } else {
      params.intercepts(k) = -2.0;
    }
  }

  const Eigen::MatrixXd laplacian = graph.laplacian();
  Eigen::Matrix3d sigma_inv = params.spatial_cov.inverse();
  auto prior_quad = [&]() {
    const Eigen::Matrix3d cross =
        params.spatial_effects * laplacian * params.spatial_effects.transpose();
    return (sigma_inv.array() * cross.array()).sum();
  };

  std::array<PathNormalizerCache, 3> caches{PathNormalizerCache(table),
                                            PathNormalizerCache(table),
                                            PathNormalizerCache(table)};
  for (int k = 0; k < 3; ++k) caches[k].rebuild(params, k);

  auto names = path_param_names(graph);
  detail::ChainRecorder rec;
  rec.init(Submodel::Path, config, seed, names);
  rec.chain.n_locations = S;

  // Adapters for phi, gamma0 (3), gamma (3 x S), addressed by name index.
  const int phi_idx = 3 + 3 * S;
  std::vector<StepSizeAdapter> adapters(names.size(),
                                        StepSizeAdapter(config.initial_step, config.tuning_window,
                                                        config.adaptation_gain,
                                                        config.target_acceptance));

  for (int it = 0; it < config.n_iterations; ++it) {
    const bool adapting = it < config.burn_in;

    // phi: Gaussian walk, proposals at or below zero rejected by the prior.
    {
      const double delta = adapters[phi_idx].step() * normal(rng);
      const double proposal = params.clustering + delta;
      bool accepted = false;
      if (proposal > 0.0) {
        double log_ratio = inverse_gamma_log_density(proposal, config.ig_shape, config.ig_rate) -
                           inverse_gamma_log_density(params.clustering, config.ig_shape,
                                                     config.ig_rate);
        std::array<double, 3> cand_logz;
        for (int k = 0; k < 3; ++k) {
          cand_logz[k] = caches[k].logz_after_clustering_shift(delta);
          log_ratio += total_edges[k] * delta -
                       n_storms[k] * (cand_logz[k] - caches[k].log_normalizer());
        }
        if (log_ratio >= 0.0 || std::log(uniform01_pos(rng)) < log_ratio) {
          params.clustering = proposal;
          for (int k = 0; k < 3; ++k) caches[k].apply_clustering_shift(delta, cand_logz[k]);
          accepted = true;
        }
      }
      adapters[phi_idx].record(accepted, adapting);
    }

    // Intercepts (flat prior; no data for a phase leaves it at its start).
    for (int k = 0; k < 3; ++k) {
      if (n_storms[k] == 0) continue;
      const double delta = adapters[k].step() * normal(rng);
      const double cand_logz = caches[k].logz_after_intercept_shift(delta);
      const double log_ratio =
          total_hits[k] * delta - n_storms[k] * (cand_logz - caches[k].log_normalizer());
      bool accepted = false;
      if (log_ratio >= 0.0 || std::log(uniform01_pos(rng)) < log_ratio) {
        params.intercepts(k) += delta;
        caches[k].apply_intercept_shift(delta, cand_logz);
        accepted = true;
      }
      adapters[k].record(accepted, adapting);
    }

    // Spatial effects: likelihood shift plus the intrinsic MCAR prior.
    for (int k = 0; k < 3; ++k) {
      for (int s = 0; s < S; ++s) {
        const int idx = 3 + k * S + s;
        const double delta = adapters[idx].step() * normal(rng);
        const double cand_logz = caches[k].logz_after_effect_shift(s, delta);
        const double quad_old = prior_quad();
        params.spatial_effects(k, s) += delta;
        const double quad_new = prior_quad();
        params.spatial_effects(k, s) -= delta;
        const double log_ratio = loc_hits(k, s) * delta -
                                 n_storms[k] * (cand_logz - caches[k].log_normalizer()) -
                                 0.5 * (quad_new - quad_old);
        bool accepted = false;
        if (log_ratio >= 0.0 || std::log(uniform01_pos(rng)) < log_ratio) {
          params.spatial_effects(k, s) += delta;
          caches[k].apply_effect_shift(s, delta, cand_logz);
          accepted = true;
        }
        adapters[idx].record(accepted, adapting);
      }
    }

    // On-the-fly zero-sum centering; in weight space this is an intercept
    // shift by the negated row mean.
    for (int k = 0; k < 3; ++k) {
      const double mean = params.spatial_effects.row(k).mean();
      if (mean == 0.0) continue;
      params.spatial_effects.row(k).array() -= mean;
      const double new_logz = caches[k].logz_after_intercept_shift(-mean);
      caches[k].apply_intercept_shift(-mean, new_logz);
    }

    // Conjugate covariance update.
    {
      auto iw = full_conditional_sigma_gamma(params.spatial_effects, graph, config.printed_iw_df);
      params.spatial_cov = sample_inverse_wishart(iw.df, iw.scale, rng);
      sigma_inv = params.spatial_cov.inverse();
    }

    // Exact normalizers are refreshed once per sweep to stop incremental
    // floating-point drift.
    for (int k = 0; k < 3; ++k) caches[k].rebuild(params, k);

    rec.record(it, config, pack_path_params(params));
  }

  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j].rfind("Sigma_", 0) == 0) continue;  // conjugate updates, no acceptance
    rec.chain.acceptance_rates[names[j]] = adapters[j].post_burn_in_rate();
    rec.chain.final_step_sizes[names[j]] = adapters[j].step();
  }
  return rec.chain;
}

// ----------------------------- damage chain ------------------------------

inline Chain run_damage_chain(const Dataset& data, const SamplerConfig& config,
                              std::uint64_t seed) {
  config.validate();
  const SpatialGraph& graph = data.graph;
  const int S = graph.size();
  const int n = static_cast<int>(data.storms.size());
  if (n == 0) throw ValidationError("damage sampler needs at least one storm");
  Rng rng = make_rng(seed);

  DamageParams params(S);
  {
    std::array<double, 3> sum{0, 0, 0};
    std::array<int, 3> cnt{0, 0, 0};
    std::vector<double> all_logs;
    for (const auto& storm : data.storms) {
      const double mean_log = std::log(storm.total_damage / storm.n_hits());
      sum[storm.phase] += mean_log;
      cnt[storm.phase]++;
      all_logs.push_back(mean_log);
    }
    double grand = 0.0;
    for (double v : all_logs) grand += v;
    grand /= all_logs.size();
    for (int k = 0; k < 3; ++k)
      params.intercepts(k) = cnt[k] > 0 ? sum[k] / cnt[k] : grand;
    double var = 1.0;
    if (all_logs.size() > 1) {
      double ss = 0.0;
      for (double v : all_logs) ss += (v - grand) * (v - grand);
      var = std::max(ss / (all_logs.size() - 1), 0.1);
    }
    params.log_damage_var = var;
    params.severity_var = var;
  }

  // Latents: severities start at zero; unobserved splits start proportional
  // to exp(intercept + spatial effect).
  std::vector<StormLatents> latents(n);
  std::vector<int> multi_storms;
  for (int i = 0; i < n; ++i) {
    const auto& storm = data.storms[i];
    latents[i].severity = 0.0;
    if (!storm.regional_damages.empty()) {
      latents[i].regional_damages = storm.regional_damages;
    } else if (storm.n_hits() == 1) {
      latents[i].regional_damages = {storm.total_damage};
    } else {
      double total_weight = 0.0;
      std::vector<double> weights;
      for (int loc : storm.path) {
        weights.push_back(
            std::exp(params.intercepts(storm.phase) + params.spatial_effects(storm.phase, loc)));
        total_weight += weights.back();
      }
      for (double w : weights)
        latents[i].regional_damages.push_back(storm.total_damage * w / total_weight);
    }
    if (storm.n_hits() >= 2 && storm.regional_damages.empty()) multi_storms.push_back(i);
  }

  // Term lists for localized likelihood deltas.
  std::array<std::vector<std::pair<int, int>>, 3> phase_terms;  // (storm, slot)
  std::vector<std::array<std::vector<std::pair<int, int>>, 3>> loc_terms(S);
  for (int i = 0; i < n; ++i) {
    const auto& storm = data.storms[i];
    for (int m = 0; m < storm.n_hits(); ++m) {
      phase_terms[storm.phase].push_back({i, m});
      loc_terms[storm.path[m]][storm.phase].push_back({i, m});
    }
  }

  const Eigen::MatrixXd laplacian = graph.laplacian();
  Eigen::Matrix3d sigma_inv = params.spatial_cov.inverse();
  auto prior_quad = [&]() {
    const Eigen::Matrix3d cross =
        params.spatial_effects * laplacian * params.spatial_effects.transpose();
    return (sigma_inv.array() * cross.array()).sum();
  };
  auto residual = [&](int i, int m) {
    const auto& storm = data.storms[i];
    return std::log(latents[i].regional_damages[m]) - params.intercepts(storm.phase) -
           params.spatial_effects(storm.phase, storm.path[m]) - latents[i].severity;
  };

  auto names = damage_param_names(graph);
  std::vector<std::string> latent_names;
  for (const auto& storm : data.storms) latent_names.push_back("zeta." + storm.id);
  for (int i : multi_storms)
    for (int loc : data.storms[i].path)
      latent_names.push_back("Y." + data.storms[i].id + "." + graph.locations[loc]);

  detail::ChainRecorder rec;
  rec.init(Submodel::Damage, config, seed, names, latent_names);
  rec.chain.n_locations = S;

  std::vector<StepSizeAdapter> adapters(names.size(),
                                        StepSizeAdapter(config.initial_step, config.tuning_window,
                                                        config.adaptation_gain,
                                                        config.target_acceptance));
  std::vector<StepSizeAdapter> latent_adapters(
      multi_storms.size(), StepSizeAdapter(0.1, config.tuning_window, config.adaptation_gain,
                                           config.target_acceptance));
  std::vector<std::vector<LognormalMatchResult>> warm_caches(multi_storms.size());
  std::array<int, 3> n_storms_phase{0, 0, 0};
  for (const auto& storm : data.storms) n_storms_phase[storm.phase]++;

  auto gather_latents = [&]() {
    Eigen::VectorXd row(latent_names.size());
    int j = 0;
    for (int i = 0; i < n; ++i) row(j++) = latents[i].severity;
    for (int i : multi_storms)
      for (double y : latents[i].regional_damages) row(j++) = y;
    return row;
  };

  for (int it = 0; it < config.n_iterations; ++it) {
    const bool adapting = it < config.burn_in;

    // Intercepts.
    for (int k = 0; k < 3; ++k) {
      if (n_storms_phase[k] == 0) continue;
      const double delta = adapters[k].step() * normal(rng);
      double resid_sum = 0.0;
      for (auto [i, m] : phase_terms[k]) resid_sum += residual(i, m);
      const double count = static_cast<double>(phase_terms[k].size());
      const double log_ratio =
          (delta * resid_sum - 0.5 * delta * delta * count) / params.log_damage_var;
      bool accepted = false;
      if (log_ratio >= 0.0 || std::log(uniform01_pos(rng)) < log_ratio) {
        params.intercepts(k) += delta;
        accepted = true;
      }
      adapters[k].record(accepted, adapting);
    }

    // Spatial effects with the MCAR prior.
    for (int k = 0; k < 3; ++k) {
      for (int s = 0; s < S; ++s) {
        const int idx = 3 + k * S + s;
        const double delta = adapters[idx].step() * normal(rng);
        double resid_sum = 0.0;
        for (auto [i, m] : loc_terms[s][k]) resid_sum += residual(i, m);
        const double count = static_cast<double>(loc_terms[s][k].size());
        const double quad_old = prior_quad();
        params.spatial_effects(k, s) += delta;
        const double quad_new = prior_quad();
        params.spatial_effects(k, s) -= delta;
        const double log_ratio =
            (delta * resid_sum - 0.5 * delta * delta * count) / params.log_damage_var -
            0.5 * (quad_new - quad_old);
        bool accepted = false;
        if (log_ratio >= 0.0 || std::log(uniform01_pos(rng)) < log_ratio) {
          params.spatial_effects(k, s) += delta;
          accepted = true;
        }
        adapters[idx].record(accepted, adapting);
      }
    }

    // Zero-sum centering.
    for (int k = 0; k < 3; ++k)
      params.spatial_effects.row(k) =
          center_zero_sum(params.spatial_effects.row(k).transpose()).transpose();

    // Conjugate updates.
    {
      auto iw = full_conditional_sigma_xi(params.spatial_effects, graph);
      params.spatial_cov = sample_inverse_wishart(iw.df, iw.scale, rng);
      sigma_inv = params.spatial_cov.inverse();
      auto ig = full_conditional_sigma2(data.storms, latents, params, config.ig_shape,
                                        config.ig_rate);
      params.log_damage_var = sample_inverse_gamma(ig.shape, ig.rate, rng);
      std::vector<double> severities;
      severities.reserve(n);
      for (const auto& latent : latents) severities.push_back(latent.severity);
      auto igz = full_conditional_sigma2_zeta(severities, config.ig_shape, config.ig_rate);
      params.severity_var = sample_inverse_gamma(igz.shape, igz.rate, rng);
    }

    // Severities.
    for (int i = 0; i < n; ++i) {
      auto nc = full_conditional_zeta(data.storms[i], latents[i], params);
      latents[i].severity = normal(rng, nc.mean, std::sqrt(nc.variance));
    }

    // Latent damage splits for aggregated multi-location storms.
    for (std::size_t b = 0; b < multi_storms.size(); ++b) {
      const int i = multi_storms[b];
      auto result = sample_latent_damages(data.storms[i], params, latents[i].severity,
                                          latents[i].regional_damages, latent_adapters[b].step(),
                                          rng, config.match_points, &warm_caches[b]);
      latent_adapters[b].record(result.accepted, adapting);
    }

    Eigen::VectorXd latent_row = gather_latents();
    rec.record(it, config, pack_damage_params(params), &latent_row);
  }

  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j].rfind("Sigma_", 0) == 0 || names[j].rfind("sigma2", 0) == 0) continue;
    rec.chain.acceptance_rates[names[j]] = adapters[j].post_burn_in_rate();
    rec.chain.final_step_sizes[names[j]] = adapters[j].step();
  }
  for (std::size_t b = 0; b < multi_storms.size(); ++b) {
    const std::string name = "Y." + data.storms[multi_storms[b]].id;
    rec.chain.acceptance_rates[name] = latent_adapters[b].post_burn_in_rate();
    rec.chain.final_step_sizes[name] = latent_adapters[b].step();
  }
  return rec.chain;
}

inline Chain run_chain(Submodel kind, const Dataset& data, const SamplerConfig& config,
                       std::uint64_t seed) {
  switch (kind) {
    case Submodel::Count: return run_count_chain(data, config, seed);
    case Submodel::Path: return run_path_chain(data, config, seed);
    default: return run_damage_chain(data, config, seed);
  }
}

}  // namespace stormrisk
