#pragma once

#include <cstdint>
#include <string>

#include "pbtd/engine.hpp"
#include "pbtd/tensor.hpp"

namespace pbtd {

inline constexpr const char* kToolVersion = "1.0.0";

/// Tensor file format: one header line
///   PBTD-TNS v1 <order> <dim_1> ... <dim_N> <text|binary>
/// followed by the values in vec order, either whitespace-separated decimals
/// (17 significant digits, exact round trip) or little-endian 64-bit floats.
[[nodiscard]] DenseTensor read_tensor(const std::string& path);
void write_tensor(const std::string& path, const DenseTensor& x, bool binary = false);

/// FNV-1a 64-bit digest of the file bytes, as 16 hex characters.
[[nodiscard]] std::string file_digest(const std::string& path);

/// Full record of one fit: tool version, input digest, config (the winning
/// restart's seed), report, ELBO trace, and posterior summaries.
[[nodiscard]] std::string manifest_json(const BtdConfig& cfg, std::uint64_t base_seed,
                                        int restarts, const std::string& input_path,
                                        const std::string& input_digest,
                                        const ModelState& state, const FitReport& report);

void write_text_file(const std::string& path, const std::string& content);
[[nodiscard]] std::string read_text_file(const std::string& path);

/// What a replay needs from a manifest: the exact config (including the
/// winning seed), the recorded final ELBO, and the input path.
struct ReplaySpec {
    BtdConfig config;
    double final_elbo = 0.0;
    std::string input_path;
};
[[nodiscard]] ReplaySpec read_manifest(const std::string& path);

/// The manifest with every wall-time field removed, for comparing runs that
/// must agree in everything but timing.
[[nodiscard]] std::string manifest_without_timing(const std::string& json_text);

}  // namespace pbtd
