#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pbtd/dists.hpp"
#include "pbtd/errors.hpp"
#include "pbtd/tensor.hpp"
#include "pbtd/vmf.hpp"

namespace pbtd {

/// Structure of the core precision prior: one shared Gamma per block
/// (scale), one per core element (sparsity), or one per mode slice whose
/// products form element precisions (ard).
enum class PriorType { scale, sparsity, ard };

[[nodiscard]] std::string to_string(PriorType p);
[[nodiscard]] PriorType prior_from_string(const std::string& s);

struct BtdConfig {
    std::vector<int> data_dims;
    int num_blocks = 1;
    std::vector<std::vector<int>> block_ranks;  // per block, per mode
    PriorType prior_type = PriorType::sparsity;
    double alpha_tau = 1e-3;
    double beta_tau = 1e-3;
    double alpha_psi = 1e-3;
    double beta_psi = 1e-3;
    int max_iter = 500;
    double elbo_rel_tol = 1e-8;
    std::uint64_t seed = 0;
};

/// Throws ConfigError unless ranks fit the data dimensions (each block rank
/// at most the mode dimension, concatenated blocks jointly orthonormalizable).
void validate_config(const BtdConfig& cfg);

struct FactorPosterior {
    VmfMatrix posterior;  // concentration
    Matrix moment;        // cached E[U]
};

struct ModelState {
    std::vector<std::vector<FactorPosterior>> factors;    // [block][mode]
    std::vector<DiagGaussian> cores;                      // vec(G_t)
    std::vector<std::vector<GammaDist>> core_precisions;  // [block], layout by prior type
    GammaDist noise;
    std::vector<double> elbo_trace;
    double data_norm_sq = 0.0;
    std::vector<Vector> block_recon;  // cached posterior-mean reconstruction per block
};

struct FitReport {
    double final_elbo = 0.0;
    int iterations = 0;
    bool converged = false;
    double noise_precision_mean = 0.0;
    double pruned_core_fraction = 0.0;
    double wall_time_seconds = 0.0;
};

/// Deterministic initialization from cfg.seed: factor moments are damped
/// orthonormal draws, core means the orthonormal projections of the data.
[[nodiscard]] ModelState init_state(const DenseTensor& x, const BtdConfig& cfg);

/// Coordinate update of one factor's vMF posterior (block t, mode n).
void update_factor(ModelState& s, const DenseTensor& x, const BtdConfig& cfg, int t, int n);

/// Coordinate update of one block's core posterior; covariance is diagonal
/// because factors are almost surely orthonormal.
void update_core(ModelState& s, const DenseTensor& x, const BtdConfig& cfg, int t);

/// Coordinate update of block t's precision Gammas per the prior type.
void update_core_precision(ModelState& s, const BtdConfig& cfg, int t);

/// For the per-mode prior, scaling mode n's slice precisions by c_n with
/// prod c_n = 1 leaves every element precision unchanged, so the likelihood
/// cannot distinguish such gauges; this picks the one maximizing the bound,
/// which stops mode scales drifting apart with the update order. No-op for
/// the other priors. Never decreases the bound.
void rebalance_core_precisions(ModelState& s, const BtdConfig& cfg);

/// Coordinate update of the noise precision Gamma.
void update_noise(ModelState& s, const DenseTensor& x, const BtdConfig& cfg);

/// Recompute every cached block reconstruction from the current posteriors.
/// Needed after editing a state directly; the coordinate updates maintain
/// the cache themselves.
void refresh_block_cache(ModelState& s);

/// Expected squared residual E||x - model||^2 under the current posteriors.
[[nodiscard]] double expected_residual(const ModelState& s, const DenseTensor& x);

[[nodiscard]] double compute_elbo(const ModelState& s, const DenseTensor& x,
                                  const BtdConfig& cfg);

/// Full coordinate-ascent loop until relative ELBO change drops below
/// cfg.elbo_rel_tol or cfg.max_iter sweeps.
[[nodiscard]] std::pair<ModelState, FitReport> fit(const DenseTensor& x, const BtdConfig& cfg);

/// Posterior-mean reconstruction, the sum of all block reconstructions.
[[nodiscard]] DenseTensor reconstruct(const ModelState& s);

/// Fraction of core elements whose precision mean exceeds 1e3 times the
/// median over all elements (the pruning diagnostic).
[[nodiscard]] double pruned_core_fraction(const ModelState& s, const BtdConfig& cfg);

}  // namespace pbtd
