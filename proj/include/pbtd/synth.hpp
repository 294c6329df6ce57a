#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pbtd/engine.hpp"
#include "pbtd/tensor.hpp"

namespace pbtd {

struct GroundTruth {
    DenseTensor signal;  // noiseless reconstruction
    DenseTensor noisy;   // signal plus scaled Gaussian noise
    BtdConfig config;    // generating structure
    std::vector<std::vector<Matrix>> factors;  // [block][mode], jointly orthonormal per mode
    std::vector<Vector> cores;                 // vec(G_t)
    double true_tau = 0.0;
    std::uint64_t seed = 0;
};

/// One fitted cell of a sweep or grid experiment.
struct SweepRow {
    int truth_index = 0;
    std::string truth_label;
    double snr_db = 0.0;
    int fit_index = 0;
    std::string fit_label;
    int restart = 0;
    std::uint64_t truth_seed = 0;
    std::uint64_t fit_seed = 0;
    double relative_error = 0.0;
    double elbo = 0.0;
    int iterations = 0;
    double noise_precision_mean = 0.0;
    double wall_time_seconds = 0.0;
    bool ok = false;
    bool best = false;  // highest ELBO within its cell
    std::string status;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

struct StructureGridResult {
    SweepResult cells;
    std::vector<std::string> labels;  // structure labels, rows == columns
    Matrix scaled_elbo;               // best ELBO per cell over its row maximum
    Matrix rel_error;                 // relative error of the best-ELBO restart
};

/// Draws ground-truth factors as jointly orthonormalized per-mode blocks,
/// standard-normal cores, and Gaussian noise rescaled so the realized SNR
/// equals snr_db exactly. An infinite snr_db means noise-free data.
[[nodiscard]] GroundTruth generate_btd(const BtdConfig& cfg, double snr_db, std::uint64_t seed);

/// ||estimate - truth|| / ||truth|| in Euclidean norm over the flattened
/// values. Throws std::invalid_argument on dimension mismatch or zero truth.
[[nodiscard]] double relative_error(const DenseTensor& estimate, const DenseTensor& truth);

/// Uniform cubic structure of c blocks with rank d in every mode.
[[nodiscard]] BtdConfig structure_config(const std::vector<int>& dims, int c, int d);
[[nodiscard]] std::string structure_label(int c, int d);
[[nodiscard]] std::string config_label(const BtdConfig& cfg);

/// For every (snr, fit config, restart) triple: draw a fresh ground truth
/// (shared across fit configs at the same snr and restart), fit, and record
/// one row. Failures become rows with ok == false; the highest-ELBO restart
/// per (snr, fit config) cell is flagged best. Deterministic in base_seed
/// regardless of thread count.
[[nodiscard]] SweepResult run_snr_sweep(const BtdConfig& truth_cfg,
                                        const std::vector<BtdConfig>& fit_cfgs,
                                        const std::vector<double>& snr_grid, int restarts,
                                        std::uint64_t base_seed, int threads = 1);

/// For every true structure: generate one dataset, fit every candidate
/// structure with the given number of restarts, and keep the highest-ELBO
/// restart per cell. Emits the per-restart rows plus row-max-scaled ELBO and
/// relative-error matrices. max_iter and elbo_rel_tol bound each fit.
[[nodiscard]] StructureGridResult run_structure_grid(
    const std::vector<std::pair<int, int>>& structures, const std::vector<int>& dims,
    double snr_db, int restarts, std::uint64_t base_seed, int threads = 1,
    int max_iter = 500, double elbo_rel_tol = 1e-8);

}  // namespace pbtd
