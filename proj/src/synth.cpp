#include "pbtd/synth.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "pbtd/parallel.hpp"
#include "pbtd/rng.hpp"

namespace pbtd {
namespace {

// Disjoint seed domains so truth and fit streams never collide.
constexpr std::uint64_t kTruthDomain = 0x1000000000000000ull;
constexpr std::uint64_t kFitDomain = 0x2000000000000000ull;
constexpr std::uint64_t kGridTruthDomain = 0x3000000000000000ull;
constexpr std::uint64_t kGridFitDomain = 0x4000000000000000ull;

SweepRow fit_cell(const GroundTruth& truth, BtdConfig fit_cfg, std::uint64_t fit_seed) {
    SweepRow row;
    row.truth_seed = truth.seed;
    row.fit_seed = fit_seed;
    fit_cfg.data_dims = truth.noisy.dims;
    fit_cfg.seed = fit_seed;
    try {
        auto [state, rep] = fit(truth.noisy, fit_cfg);
        row.relative_error = relative_error(reconstruct(state), truth.signal);
        row.elbo = rep.final_elbo;
        row.iterations = rep.iterations;
        row.noise_precision_mean = rep.noise_precision_mean;
        row.wall_time_seconds = rep.wall_time_seconds;
        row.ok = true;
        row.status = "ok";
    } catch (const std::exception& e) {
        row.ok = false;
        row.status = e.what();
    }
    return row;
}

void flag_best_per_cell(std::vector<SweepRow>& rows, int restarts) {
    for (size_t base = 0; base < rows.size(); base += restarts) {
        int best = -1;
        for (int r = 0; r < restarts; ++r) {
            const SweepRow& row = rows[base + r];
            if (row.ok && (best < 0 || row.elbo > rows[base + best].elbo)) best = r;
        }
        if (best >= 0) rows[base + best].best = true;
    }
}

}  // namespace

GroundTruth generate_btd(const BtdConfig& cfg, double snr_db, std::uint64_t seed) {
    validate_config(cfg);
    if (std::isnan(snr_db) || (std::isinf(snr_db) && snr_db < 0))
        throw ConfigError("snr_db must be finite or +infinity");

    const int N = static_cast<int>(cfg.data_dims.size());
    const int T = cfg.num_blocks;
    Rng rng(seed);

    // one joint orthonormal frame per mode, split column-wise into blocks
    std::vector<std::vector<Matrix>> factors(T, std::vector<Matrix>(N));
    for (int n = 0; n < N; ++n) {
        int total = 0;
        for (int t = 0; t < T; ++t) total += cfg.block_ranks[t][n];
        Matrix joint = random_orthonormal(rng, cfg.data_dims[n], total);
        int off = 0;
        for (int t = 0; t < T; ++t) {
            factors[t][n] = joint.middleCols(off, cfg.block_ranks[t][n]);
            off += cfg.block_ranks[t][n];
        }
    }

    GroundTruth truth;
    truth.config = cfg;
    truth.seed = seed;
    truth.factors = factors;
    truth.signal = DenseTensor(cfg.data_dims);
    for (int t = 0; t < T; ++t) {
        DenseTensor core(cfg.block_ranks[t]);
        for (Eigen::Index i = 0; i < core.size(); ++i) core.values[i] = rng.normal();
        truth.cores.push_back(core.values);
        truth.signal.values += multilinear_reconstruct(core, factors[t]).values;
    }

    if (std::isinf(snr_db)) {
        truth.noisy = truth.signal;
        truth.true_tau = std::numeric_limits<double>::infinity();
        return truth;
    }

    Vector noise(truth.signal.size());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
    const double scale =
        truth.signal.norm() / (noise.norm() * std::pow(10.0, snr_db / 20.0));
    truth.noisy = DenseTensor(cfg.data_dims, truth.signal.values + scale * noise);
    truth.true_tau = 1.0 / (scale * scale);
    return truth;
}

double relative_error(const DenseTensor& estimate, const DenseTensor& truth) {
    if (estimate.dims != truth.dims)
        throw std::invalid_argument("relative_error: dimension mismatch");
    const double denom = truth.norm();
    if (denom == 0.0) throw std::invalid_argument("relative_error: zero truth tensor");
    return (estimate.values - truth.values).norm() / denom;
}

BtdConfig structure_config(const std::vector<int>& dims, int c, int d) {
    BtdConfig cfg;
    cfg.data_dims = dims;
    cfg.num_blocks = c;
    cfg.block_ranks.assign(c, std::vector<int>(dims.size(), d));
    return cfg;
}

std::string structure_label(int c, int d) {
    return "(" + std::to_string(c) + "," + std::to_string(d) + ")";
}

std::string config_label(const BtdConfig& cfg) {
    bool uniform = true;
    const int d0 = cfg.block_ranks.empty() ? 0 : cfg.block_ranks[0][0];
    for (const auto& row : cfg.block_ranks)
        for (int d : row)
            if (d != d0) uniform = false;
    if (uniform && !cfg.block_ranks.empty()) return structure_label(cfg.num_blocks, d0);
    std::string out = "[";
    for (size_t t = 0; t < cfg.block_ranks.size(); ++t) {
        if (t) out += ";";
        for (size_t n = 0; n < cfg.block_ranks[t].size(); ++n) {
            if (n) out += "x";
            out += std::to_string(cfg.block_ranks[t][n]);
        }
    }
    return out + "]";
}

SweepResult run_snr_sweep(const BtdConfig& truth_cfg, const std::vector<BtdConfig>& fit_cfgs,
                          const std::vector<double>& snr_grid, int restarts,
                          std::uint64_t base_seed, int threads) {
    validate_config(truth_cfg);
    if (fit_cfgs.empty() || snr_grid.empty() || restarts < 1)
        throw ConfigError("sweep needs fit configs, an snr grid, and restarts >= 1");

    const int S = static_cast<int>(snr_grid.size());
    const int F = static_cast<int>(fit_cfgs.size());
    SweepResult result;
    result.rows.resize(static_cast<size_t>(S) * F * restarts);

    parallel_for(S * F * restarts, threads, [&](int task) {
        const int r = task % restarts;
        const int f = (task / restarts) % F;
        const int s = task / (restarts * F);
        // truth is shared across fit configs at the same (snr, restart)
        const std::uint64_t truth_seed =
            mix_seed(base_seed, kTruthDomain + static_cast<std::uint64_t>(s) * restarts + r);
        const std::uint64_t fit_seed =
            mix_seed(base_seed, kFitDomain + static_cast<std::uint64_t>(task));
        GroundTruth truth = generate_btd(truth_cfg, snr_grid[s], truth_seed);

        SweepRow row = fit_cell(truth, fit_cfgs[f], fit_seed);
        row.truth_index = s;
        row.truth_label = config_label(truth_cfg);
        row.snr_db = snr_grid[s];
        row.fit_index = f;
        row.fit_label = config_label(fit_cfgs[f]);
        row.restart = r;
        result.rows[task] = std::move(row);
    });

    flag_best_per_cell(result.rows, restarts);
    return result;
}

StructureGridResult run_structure_grid(const std::vector<std::pair<int, int>>& structures,
                                       const std::vector<int>& dims, double snr_db,
                                       int restarts, std::uint64_t base_seed, int threads,
                                       int max_iter, double elbo_rel_tol) {
    if (structures.empty() || restarts < 1)
        throw ConfigError("grid needs structures and restarts >= 1");

    const int C = static_cast<int>(structures.size());
    StructureGridResult result;
    result.labels.reserve(C);
    std::vector<BtdConfig> cfgs;
    cfgs.reserve(C);
    for (const auto& [c, d] : structures) {
        cfgs.push_back(structure_config(dims, c, d));
        cfgs.back().max_iter = max_iter;
        cfgs.back().elbo_rel_tol = elbo_rel_tol;
        validate_config(cfgs.back());
        result.labels.push_back(structure_label(c, d));
    }

    // one dataset per true structure, shared by every candidate fit
    std::vector<GroundTruth> truths;
    truths.reserve(C);
    for (int r0 = 0; r0 < C; ++r0)
        truths.push_back(generate_btd(
            cfgs[r0], snr_db, mix_seed(base_seed, kGridTruthDomain + r0)));

    result.cells.rows.resize(static_cast<size_t>(C) * C * restarts);
    parallel_for(C * C * restarts, threads, [&](int task) {
        const int rep = task % restarts;
        const int c0 = (task / restarts) % C;
        const int r0 = task / (restarts * C);
        const std::uint64_t fit_seed =
            mix_seed(base_seed, kGridFitDomain + static_cast<std::uint64_t>(task));

        SweepRow row = fit_cell(truths[r0], cfgs[c0], fit_seed);
        row.truth_index = r0;
        row.truth_label = result.labels[r0];
        row.snr_db = snr_db;
        row.fit_index = c0;
        row.fit_label = result.labels[c0];
        row.restart = rep;
        result.cells.rows[task] = std::move(row);
    });

    flag_best_per_cell(result.cells.rows, restarts);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    Matrix best_elbo = Matrix::Constant(C, C, nan);
    result.rel_error = Matrix::Constant(C, C, nan);
    for (const SweepRow& row : result.cells.rows)
        if (row.best) {
            best_elbo(row.truth_index, row.fit_index) = row.elbo;
            result.rel_error(row.truth_index, row.fit_index) = row.relative_error;
        }
    result.scaled_elbo = Matrix::Constant(C, C, nan);
    for (int r0 = 0; r0 < C; ++r0) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (int c0 = 0; c0 < C; ++c0)
            if (std::isfinite(best_elbo(r0, c0))) row_max = std::max(row_max, best_elbo(r0, c0));
        if (!std::isfinite(row_max)) continue;
        for (int c0 = 0; c0 < C; ++c0)
            if (std::isfinite(best_elbo(r0, c0)))
                result.scaled_elbo(r0, c0) = best_elbo(r0, c0) / row_max;
    }
    return result;
}

}  // namespace pbtd
