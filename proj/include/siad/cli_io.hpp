#pragma once

#include "siad/emt_sim.hpp"
#include "siad/oracle.hpp"
#include "siad/scanner.hpp"
#include "siad/stability.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace siad {

using json = nlohmann::json;

inline constexpr const char* kToolName = "siad";
inline constexpr const char* kToolVersion = "0.1.0";

// =============================================================================
// Netlists and device files
// =============================================================================

/// Line-oriented netlist; DEV file paths resolve against base_dir. Errors carry line/column.
[[nodiscard]] Circuit parse_netlist(const std::string& text, const std::filesystem::path& base_dir = {});
[[nodiscard]] Circuit load_netlist(const std::filesystem::path& path);

/// Inverse of parse_netlist up to number formatting.
[[nodiscard]] std::string print_netlist(const Circuit& c);

/// `f0 <Hz>`, `theta0 <rad>`, `entry <dd|dq|qd|qq> num <c...> den <c...>` (descending powers).
[[nodiscard]] SyntheticDevice parse_device(const std::string& text);
[[nodiscard]] std::string print_device(const SyntheticDevice& d);

// =============================================================================
// Configs
// =============================================================================

[[nodiscard]] ScanConfig scan_config_from_json(const json& j);
[[nodiscard]] json to_json(const ScanConfig& c);
[[nodiscard]] OracleSpec oracle_spec_from_json(const json& j, const std::filesystem::path& base_dir,
                                               std::vector<double>* freqs);
[[nodiscard]] json read_json_file(const std::filesystem::path& p);

// =============================================================================
// Manifest and CSV
// =============================================================================

struct RunManifest {
    std::string command;
    std::string netlist;
    std::string netlist_sha256;
    std::string config;
    std::string config_sha256;
    /// Further input files (path, sha256), e.g. the responses given to analyze.
    std::vector<std::pair<std::string, std::string>> inputs;
    std::string out;
    int jobs = 1;
    std::uint32_t seed = 1;
    std::string version = kToolVersion;

    [[nodiscard]] json to_json() const;
    /// SHA-256 of the compact JSON form.
    [[nodiscard]] std::string hash() const;
};

[[nodiscard]] std::string sha256_hex(const std::string& bytes);
[[nodiscard]] std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& text);

/// `frame,kind,f_hz,row,col,re,im`, preceded by `# manifest_hash=` and `# manifest=` lines.
[[nodiscard]] std::string response_to_csv(const FrequencyResponse& r, const RunManifest* m = nullptr);
/// Lines starting with '#' are skipped.
[[nodiscard]] FrequencyResponse response_from_csv(const std::string& text);

// =============================================================================
// Reports
// =============================================================================

[[nodiscard]] json scan_report(const FrequencyResponse& r, const ScanConfig& cfg, const RunManifest& m);
[[nodiscard]] json stability_report(const SystemPair& p, const GncResult& g, const ModalResult& mo,
                                    const PhaseMarginResult& pm, const PassivityResult& py1,
                                    const std::optional<PassivityResult>& pz2_inv, const RunManifest& m);
[[nodiscard]] std::string nyquist_csv(const GncResult& g);
[[nodiscard]] std::string bode_csv(const SystemPair& p);
[[nodiscard]] std::string modal_csv(const ModalResult& m);
[[nodiscard]] std::string compare_csv(const CompareResult& c);

/// Exit code for an exception: 2 config, 3 divergence, 4 numerical / other.
[[nodiscard]] int exit_code_for(const std::exception& e);
[[nodiscard]] json error_json(const std::exception& e);

// =============================================================================
// Subcommands
// =============================================================================

struct CliOptions {
    std::string netlist, config, out = ".", y_csv, z_csv, compare_csv;
    double pm_threshold = 10.0;
    int jobs = 1;
    std::optional<std::uint32_t> seed;
};

[[nodiscard]] int cmd_scan(const CliOptions& o, std::ostream& log);
[[nodiscard]] int cmd_analyze(const CliOptions& o, std::ostream& log);
[[nodiscard]] int cmd_oracle(const CliOptions& o, std::ostream& log);
[[nodiscard]] int cmd_signal(const CliOptions& o, std::ostream& log);

/// Full CLI entry: parses argv, dispatches, maps failures to exit codes.
[[nodiscard]] int run_cli(int argc, char** argv);

}  // namespace siad
