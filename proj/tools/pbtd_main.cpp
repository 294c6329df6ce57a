#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pbtd/engine.hpp"
#include "pbtd/io.hpp"
#include "pbtd/parallel.hpp"
#include "pbtd/rng.hpp"
#include "pbtd/synth.hpp"

namespace {

using namespace pbtd;

std::vector<int> parse_int_list(const std::string& spec, const std::string& what) {
    std::vector<int> out;
    std::string token;
    std::istringstream ss(spec);
    while (std::getline(ss, token, ',')) {
        try {
            out.push_back(std::stoi(token));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse " + what + ": " + spec);
        }
    }
    if (out.empty()) throw ConfigError("empty " + what);
    return out;
}

double parse_snr(const std::string& spec) {
    char* end = nullptr;
    const double v = std::strtod(spec.c_str(), &end);
    if (end == spec.c_str() || (end && *end != '\0'))
        throw ConfigError("cannot parse snr value: " + spec);
    return v;
}

// Accepted rank forms: "D" (every mode, every block), "D1,D2,..." (per mode,
// every block), "CxD" (C cubic blocks of rank D), and per-block groups
// separated by ';' using either of the first two forms.
std::vector<std::vector<int>> parse_ranks(const std::string& spec, int& blocks, int order) {
    const bool has_x = spec.find('x') != std::string::npos;
    const bool has_sep = spec.find(',') != std::string::npos ||
                         spec.find(';') != std::string::npos;
    if (has_x && !has_sep) {
        const auto pos = spec.find('x');
        int c = 0, d = 0;
        try {
            c = std::stoi(spec.substr(0, pos));
            d = std::stoi(spec.substr(pos + 1));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse rank shorthand: " + spec);
        }
        if (blocks > 0 && blocks != c)
            throw ConfigError("--blocks disagrees with rank shorthand " + spec);
        blocks = c;
        return std::vector<std::vector<int>>(c, std::vector<int>(order, d));
    }

    std::vector<std::vector<int>> groups;
    std::string group;
    std::istringstream ss(spec);
    while (std::getline(ss, group, ';')) {
        std::vector<int> row = parse_int_list(group, "ranks");
        if (static_cast<int>(row.size()) == 1) row.assign(order, row[0]);
        if (static_cast<int>(row.size()) != order)
            throw ConfigError("rank group '" + group + "' needs one entry per mode");
        groups.push_back(std::move(row));
    }
    if (groups.empty()) throw ConfigError("empty rank spec");
    if (groups.size() > 1) {
        if (blocks > 0 && blocks != static_cast<int>(groups.size()))
            throw ConfigError("--blocks disagrees with per-block rank groups");
        blocks = static_cast<int>(groups.size());
        return groups;
    }
    if (blocks <= 0) blocks = 1;
    return std::vector<std::vector<int>>(blocks, groups[0]);
}

std::vector<std::pair<int, int>> parse_structures(const std::string& spec) {
    std::vector<std::pair<int, int>> out;
    std::string token;
    std::istringstream ss(spec);
    while (std::getline(ss, token, ',')) {
        const auto pos = token.find('x');
        if (pos == std::string::npos)
            throw ConfigError("structure '" + token + "' must look like CxD");
        try {
            out.emplace_back(std::stoi(token.substr(0, pos)),
                             std::stoi(token.substr(pos + 1)));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse structure: " + token);
        }
    }
    if (out.empty()) throw ConfigError("empty structure list");
    return out;
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

std::string csv_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_fixed(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string sweep_csv(const SweepResult& sweep) {
    std::string out =
        "truth_label,snr_db,fit_label,restart,truth_seed,fit_seed,status,best,"
        "relative_error,elbo,iterations,noise_precision_mean,wall_time_seconds\n";
    for (const SweepRow& r : sweep.rows) {
        out += r.truth_label + ',' + csv_value(r.snr_db) + ',' + r.fit_label + ',' +
               std::to_string(r.restart) + ',' + std::to_string(r.truth_seed) + ',' +
               std::to_string(r.fit_seed) + ',' + (r.ok ? "ok" : "failed") + ',' +
               (r.best ? "1" : "0") + ',' + csv_value(r.relative_error) + ',' +
               csv_value(r.elbo) + ',' + std::to_string(r.iterations) + ',' +
               csv_value(r.noise_precision_mean) + ',' + csv_value(r.wall_time_seconds) +
               '\n';
    }
    return out;
}

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& labels) {
    std::string out = "truth";
    for (const auto& l : labels) out += ',' + l;
    out += '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out += labels[i];
        for (Eigen::Index j = 0; j < m.cols(); ++j) out += ',' + csv_fixed(m(i, j));
        out += '\n';
    }
    return out;
}

void require_any_ok(const SweepResult& sweep) {
    for (const SweepRow& r : sweep.rows)
        if (r.ok) return;
    throw NumericalError("every cell of the experiment failed");
}

struct FitFlags {
    std::string input, ranks, prior = "sparsity", out = "manifest.json";
    int blocks = 0, restarts = 10, max_iter = 500, threads = 0;
    double tol = 1e-8;
    std::uint64_t seed = 0;
};

void run_fit(const FitFlags& f) {
    const DenseTensor x = read_tensor(f.input);
    const std::string digest = file_digest(f.input);

    BtdConfig cfg;
    cfg.data_dims = x.dims;
    int blocks = f.blocks;
    cfg.block_ranks = parse_ranks(f.ranks, blocks, x.order());
    cfg.num_blocks = blocks;
    cfg.prior_type = prior_from_string(f.prior);
    cfg.max_iter = f.max_iter;
    cfg.elbo_rel_tol = f.tol;
    validate_config(cfg);

    if (f.restarts < 1) throw ConfigError("--restarts must be at least 1");
    struct Slot {
        std::optional<std::pair<ModelState, FitReport>> outcome;
        std::uint64_t seed = 0;
        std::string error;
    };
    std::vector<Slot> slots(f.restarts);
    parallel_for(f.restarts, resolve_threads(f.threads), [&](int r) {
        BtdConfig run_cfg = cfg;
        run_cfg.seed = mix_seed(f.seed, static_cast<std::uint64_t>(r));
        slots[r].seed = run_cfg.seed;
        try {
            slots[r].outcome = fit(x, run_cfg);
        } catch (const std::exception& e) {
            slots[r].error = e.what();
        }
    });

    int best = -1;
    for (int r = 0; r < f.restarts; ++r)
        if (slots[r].outcome &&
            (best < 0 || slots[r].outcome->second.final_elbo > slots[best].outcome->second.final_elbo))
            best = r;
    if (best < 0)
        throw NumericalError("all restarts failed; last error: " + slots.back().error);

    BtdConfig best_cfg = cfg;
    best_cfg.seed = slots[best].seed;
    const auto& [state, report] = *slots[best].outcome;
    write_text_file(f.out, manifest_json(best_cfg, f.seed, f.restarts, f.input, digest,
                                         state, report));
    std::printf("fit: elbo %.6f after %d iterations (%s), best of %d restarts -> %s\n",
                report.final_elbo, report.iterations,
                report.converged ? "converged" : "max-iter", f.restarts, f.out.c_str());
}

struct SynthFlags {
    std::string dims = "15,15,15", ranks, snr = "30", prefix;
    int blocks = 0;
    std::uint64_t seed = 0;
    bool binary = false;
};

void run_synth(const SynthFlags& f) {
    BtdConfig cfg;
    cfg.data_dims = parse_int_list(f.dims, "dims");
    int blocks = f.blocks;
    cfg.block_ranks = parse_ranks(f.ranks, blocks, static_cast<int>(cfg.data_dims.size()));
    cfg.num_blocks = blocks;
    const double snr_db = parse_snr(f.snr);

    const GroundTruth truth = generate_btd(cfg, snr_db, f.seed);
    const std::string signal_path = f.prefix + "_signal.tns";
    const std::string noisy_path = f.prefix + "_noisy.tns";
    write_tensor(signal_path, truth.signal, f.binary);
    write_tensor(noisy_path, truth.noisy, f.binary);

    nlohmann::json doc{{"tool_version", kToolVersion},
                       {"dims", cfg.data_dims},
                       {"num_blocks", cfg.num_blocks},
                       {"block_ranks", cfg.block_ranks},
                       {"snr_db", snr_db},
                       {"seed", f.seed},
                       {"true_tau", truth.true_tau},
                       {"files",
                        {{"signal", signal_path},
                         {"noisy", noisy_path},
                         {"signal_digest", file_digest(signal_path)},
                         {"noisy_digest", file_digest(noisy_path)}}}};
    write_text_file(f.prefix + "_truth.json", doc.dump(2));
    std::printf("synth: wrote %s, %s, %s_truth.json\n", signal_path.c_str(),
                noisy_path.c_str(), f.prefix.c_str());
}

struct SweepFlags {
    std::string dims = "15,15,15", ranks, fit_structures;
    int blocks = 0, restarts = 10, threads = 0;
    double snr_min = -20.0, snr_max = 30.0, snr_step = 2.5;
    std::uint64_t seed = 0;
    std::string out = "sweep.csv";
};

void run_sweep(const SweepFlags& f) {
    BtdConfig truth_cfg;
    truth_cfg.data_dims = parse_int_list(f.dims, "dims");
    int blocks = f.blocks;
    truth_cfg.block_ranks =
        parse_ranks(f.ranks, blocks, static_cast<int>(truth_cfg.data_dims.size()));
    truth_cfg.num_blocks = blocks;

    std::vector<BtdConfig> fit_cfgs;
    if (f.fit_structures.empty()) {
        fit_cfgs.push_back(truth_cfg);
    } else {
        for (const auto& [c, d] : parse_structures(f.fit_structures))
            fit_cfgs.push_back(structure_config(truth_cfg.data_dims, c, d));
    }

    if (!(f.snr_step > 0)) throw ConfigError("--snr-step must be positive");
    std::vector<double> grid;
    for (double s = f.snr_min; s <= f.snr_max + 1e-9; s += f.snr_step) grid.push_back(s);
    if (grid.empty()) throw ConfigError("empty snr grid");

    const SweepResult sweep = run_snr_sweep(truth_cfg, fit_cfgs, grid, f.restarts, f.seed,
                                            resolve_threads(f.threads));
    write_text_file(f.out, sweep_csv(sweep));
    require_any_ok(sweep);
    std::printf("sweep: %zu rows -> %s\n", sweep.rows.size(), f.out.c_str());
}

struct GridFlags {
    std::string dims = "15,15,15", structures, prefix = "grid";
    int restarts = 10, threads = 0;
    double snr_db = 10.0;
    std::uint64_t seed = 0;
};

void run_grid(const GridFlags& f) {
    const StructureGridResult grid = run_structure_grid(
        parse_structures(f.structures), parse_int_list(f.dims, "dims"), f.snr_db,
        f.restarts, f.seed, resolve_threads(f.threads));
    write_text_file(f.prefix + "_cells.csv", sweep_csv(grid.cells));
    write_text_file(f.prefix + "_scaled_elbo.csv", matrix_csv(grid.scaled_elbo, grid.labels));
    write_text_file(f.prefix + "_rel_error.csv", matrix_csv(grid.rel_error, grid.labels));
    require_any_ok(grid.cells);
    std::printf("grid: %zu cells -> %s_{cells,scaled_elbo,rel_error}.csv\n",
                grid.cells.rows.size(), f.prefix.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"probabilistic block term decomposition of dense tensors"};
    app.require_subcommand(1);

    FitFlags ff;
    auto* fit_cmd = app.add_subcommand("fit", "fit a model to a tensor file");
    fit_cmd->add_option("--input", ff.input, "tensor file to fit")->required();
    fit_cmd->add_option("--blocks", ff.blocks, "number of blocks");
    fit_cmd->add_option("--ranks", ff.ranks, "block ranks (D, D1,D2,.., CxD, or ;-groups)")
        ->required();
    fit_cmd->add_option("--prior", ff.prior, "core precision prior: scale|sparsity|ard");
    fit_cmd->add_option("--restarts", ff.restarts, "independent restarts, best ELBO kept");
    fit_cmd->add_option("--seed", ff.seed, "base seed for restarts");
    fit_cmd->add_option("--max-iter", ff.max_iter, "sweep limit");
    fit_cmd->add_option("--tol", ff.tol, "relative ELBO convergence tolerance");
    fit_cmd->add_option("--out", ff.out, "manifest output path");
    fit_cmd->add_option("--threads", ff.threads, "worker threads (default: all cores)")
        ->envname("PBTD_THREADS");
    fit_cmd->callback([&] { run_fit(ff); });

    SynthFlags sf;
    auto* synth_cmd = app.add_subcommand("synth", "generate ground-truth data");
    synth_cmd->add_option("--dims", sf.dims, "tensor dimensions, comma separated");
    synth_cmd->add_option("--blocks", sf.blocks, "number of blocks");
    synth_cmd->add_option("--ranks", sf.ranks, "block ranks")->required();
    synth_cmd->add_option("--snr-db", sf.snr, "signal-to-noise ratio in dB, inf = noise-free");
    synth_cmd->add_option("--seed", sf.seed, "generator seed");
    synth_cmd->add_option("--out-prefix", sf.prefix, "output path prefix")->required();
    synth_cmd->add_flag("--binary", sf.binary, "write binary tensor files");
    synth_cmd->callback([&] { run_synth(sf); });

    SweepFlags wf;
    auto* sweep_cmd = app.add_subcommand("sweep", "SNR sweep experiment");
    sweep_cmd->add_option("--dims", wf.dims, "tensor dimensions");
    sweep_cmd->add_option("--blocks", wf.blocks, "true number of blocks");
    sweep_cmd->add_option("--ranks", wf.ranks, "true block ranks")->required();
    sweep_cmd->add_option("--fit-structures", wf.fit_structures,
                          "candidate CxD structures to fit (default: the truth)");
    sweep_cmd->add_option("--snr-min", wf.snr_min, "lowest SNR in dB");
    sweep_cmd->add_option("--snr-max", wf.snr_max, "highest SNR in dB");
    sweep_cmd->add_option("--snr-step", wf.snr_step, "SNR step in dB");
    sweep_cmd->add_option("--restarts", wf.restarts, "fits per cell");
    sweep_cmd->add_option("--seed", wf.seed, "base seed");
    sweep_cmd->add_option("--out", wf.out, "CSV output path");
    sweep_cmd->add_option("--threads", wf.threads, "worker threads")->envname("PBTD_THREADS");
    sweep_cmd->callback([&] { run_sweep(wf); });

    GridFlags gf;
    auto* grid_cmd = app.add_subcommand("grid", "structure identification grid");
    grid_cmd->add_option("--dims", gf.dims, "tensor dimensions");
    grid_cmd->add_option("--structures", gf.structures, "CxD list, rows and columns")
        ->required();
    grid_cmd->add_option("--snr-db", gf.snr_db, "SNR of the generated data");
    grid_cmd->add_option("--restarts", gf.restarts, "fits per cell, best ELBO kept");
    grid_cmd->add_option("--seed", gf.seed, "base seed");
    grid_cmd->add_option("--out-prefix", gf.prefix, "output path prefix");
    grid_cmd->add_option("--threads", gf.threads, "worker threads")->envname("PBTD_THREADS");
    grid_cmd->callback([&] { run_grid(gf); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const pbtd::NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const pbtd::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
