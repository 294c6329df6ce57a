#include "pbtd/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pbtd/vmf.hpp"

namespace pbtd {
namespace {

using nlohmann::json;

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

json config_to_json(const BtdConfig& cfg) {
    return json{{"data_dims", cfg.data_dims},
                {"num_blocks", cfg.num_blocks},
                {"block_ranks", cfg.block_ranks},
                {"prior", to_string(cfg.prior_type)},
                {"alpha_tau", cfg.alpha_tau},
                {"beta_tau", cfg.beta_tau},
                {"alpha_psi", cfg.alpha_psi},
                {"beta_psi", cfg.beta_psi},
                {"max_iter", cfg.max_iter},
                {"elbo_rel_tol", cfg.elbo_rel_tol},
                {"seed", cfg.seed}};
}

BtdConfig config_from_json(const json& j) {
    BtdConfig cfg;
    cfg.data_dims = j.at("data_dims").get<std::vector<int>>();
    cfg.num_blocks = j.at("num_blocks").get<int>();
    cfg.block_ranks = j.at("block_ranks").get<std::vector<std::vector<int>>>();
    cfg.prior_type = prior_from_string(j.at("prior").get<std::string>());
    cfg.alpha_tau = j.at("alpha_tau").get<double>();
    cfg.beta_tau = j.at("beta_tau").get<double>();
    cfg.alpha_psi = j.at("alpha_psi").get<double>();
    cfg.beta_psi = j.at("beta_psi").get<double>();
    cfg.max_iter = j.at("max_iter").get<int>();
    cfg.elbo_rel_tol = j.at("elbo_rel_tol").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

void strip_timing(json& j) {
    if (j.is_object()) {
        j.erase("wall_time_seconds");
        for (auto& [key, value] : j.items()) strip_timing(value);
    } else if (j.is_array()) {
        for (auto& value : j) strip_timing(value);
    }
}

}  // namespace

DenseTensor read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open tensor file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw ConfigError("empty tensor file: " + path);
    std::istringstream hs(header);
    std::string magic, version, format;
    int order = 0;
    hs >> magic >> version >> order;
    if (magic != "PBTD-TNS" || version != "v1" || order < 1)
        throw ConfigError("bad tensor header in " + path);
    std::vector<int> dims(order);
    for (int& d : dims) {
        if (!(hs >> d) || d < 1) throw ConfigError("bad tensor dimensions in " + path);
    }
    if (!(hs >> format) || (format != "text" && format != "binary"))
        throw ConfigError("bad tensor format token in " + path);

    DenseTensor x(dims);
    const Eigen::Index count = x.size();
    if (format == "text") {
        for (Eigen::Index i = 0; i < count; ++i)
            if (!(in >> x.values[i]))
                throw ConfigError("tensor file ends early: " + path);
        double extra;
        if (in >> extra) throw ConfigError("tensor file has extra values: " + path);
    } else {
        in.read(reinterpret_cast<char*>(x.values.data()),
                static_cast<std::streamsize>(count) * 8);
        if (in.gcount() != static_cast<std::streamsize>(count) * 8)
            throw ConfigError("tensor file ends early: " + path);
        char extra;
        if (in.read(&extra, 1) && in.gcount() == 1)
            throw ConfigError("tensor file has extra bytes: " + path);
    }
    return x;
}

void write_tensor(const std::string& path, const DenseTensor& x, bool binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write tensor file: " + path);
    out << "PBTD-TNS v1 " << x.order();
    for (int d : x.dims) out << ' ' << d;
    out << (binary ? " binary" : " text") << '\n';
    if (binary) {
        out.write(reinterpret_cast<const char*>(x.values.data()),
                  static_cast<std::streamsize>(x.size()) * 8);
    } else {
        for (Eigen::Index i = 0; i < x.size(); ++i)
            out << format_value(x.values[i]) << '\n';
    }
    if (!out) throw ConfigError("failed writing tensor file: " + path);
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file for digest: " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!in) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

std::string manifest_json(const BtdConfig& cfg, std::uint64_t base_seed, int restarts,
                          const std::string& input_path, const std::string& input_digest,
                          const ModelState& state, const FitReport& report) {
    json blocks = json::array();
    for (size_t t = 0; t < state.cores.size(); ++t) {
        json factor_modes = json::array();
        for (const auto& f : state.factors[t]) {
            try {
                factor_modes.push_back(matrix_to_json(vmf_mode(f.posterior)));
            } catch (const std::exception&) {
                factor_modes.push_back(nullptr);
            }
        }
        json precisions = json::array();
        for (const auto& d : state.core_precisions[t]) {
            GammaStats st = gamma_stats(d);
            precisions.push_back(json{{"shape", d.shape}, {"rate", d.rate}, {"mean", st.mean}});
        }
        blocks.push_back(json{{"factor_modes", std::move(factor_modes)},
                              {"core_mean", vector_to_json(state.cores[t].mean)},
                              {"core_variance", vector_to_json(state.cores[t].variance)},
                              {"core_precisions", std::move(precisions)}});
    }

    json doc{{"tool_version", kToolVersion},
             {"input", json{{"path", input_path}, {"digest", input_digest}}},
             {"base_seed", base_seed},
             {"restarts", restarts},
             {"config", config_to_json(cfg)},
             {"report",
              json{{"final_elbo", report.final_elbo},
                   {"iterations", report.iterations},
                   {"converged", report.converged},
                   {"noise_precision_mean", report.noise_precision_mean},
                   {"pruned_core_fraction", report.pruned_core_fraction},
                   {"wall_time_seconds", report.wall_time_seconds}}},
             {"elbo_trace", state.elbo_trace},
             {"posterior",
              json{{"noise_precision",
                    json{{"shape", state.noise.shape},
                         {"rate", state.noise.rate},
                         {"mean", gamma_stats(state.noise).mean}}},
                   {"blocks", std::move(blocks)}}}};
    return doc.dump(2);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << content;
    if (!out) throw ConfigError("failed writing file: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ReplaySpec read_manifest(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse manifest " + path + ": " + e.what());
    }
    try {
        ReplaySpec spec;
        spec.config = config_from_json(doc.at("config"));
        spec.final_elbo = doc.at("report").at("final_elbo").get<double>();
        spec.input_path = doc.at("input").at("path").get<std::string>();
        return spec;
    } catch (const json::exception& e) {
        throw ConfigError("manifest " + path + " is missing fields: " + e.what());
    }
}

std::string manifest_without_timing(const std::string& json_text) {
    json doc = json::parse(json_text);
    strip_timing(doc);
    return doc.dump(2);
}

}  // namespace pbtd
