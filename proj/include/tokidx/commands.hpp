#pragma once

#include <string>
#include <vector>

#include "tokidx/config.hpp"
#include "tokidx/scaling.hpp"
#include "tokidx/train.hpp"

// Library entry points behind the CLI subcommands. Each writes its artifacts
// under an output directory plus a manifest listing them; all outputs except
// the manifest's wall-time fields are byte-reproducible for a fixed config
// and seed.

namespace tokidx::cmd {

inline constexpr const char* kVersion = "tokidx-0.1.0";

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Parses the closed-world JSON config document (schema_version 1). Unknown
// fields are rejected with their full path.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

struct TrainArtifacts {
  std::string metrics_csv;
  std::string summary_json;
  std::string checkpoint;
  std::string manifest;
  TrainResult result;
};

TrainArtifacts cmd_train(const RunConfig& cfg, const std::string& out_dir);

enum class AblateFlag { kNoNorm, kNoScaleFactor };
AblateFlag ablate_flag_from_string(const std::string& s);

struct AblateArtifacts {
  std::string metrics_base_csv;
  std::string metrics_ablated_csv;
  std::string report_json;
  std::string manifest;
  TrainResult base;
  TrainResult ablated;
};

// Runs the configured plugin model against the same model with the ablation
// flag set, on identical data order.
AblateArtifacts cmd_ablate(const RunConfig& cfg, AblateFlag flag, const std::string& out_dir);

struct FitOptions {
  std::string csv_path;                 // empty: use the bundled frontier data
  double reference_delta_beta = 0.038;  // intercept offset accepted as direct input
  double reference_slope = -0.2016;     // slope accepted as direct input
  double kaplan_alpha = 0.34;           // assumed loss-surface exponents for gamma_fit
  double kaplan_beta = 0.28;
  double eta = 50.0;                    // expansion ratio the frontier data was measured at
};

struct FitArtifacts {
  std::string fits_json;
  std::string manifest;
  scaling::LogFit fit_base;
  scaling::LogFit fit_variant;
  scaling::SavingResult saving_fitted;            // fitted slope, fitted intercept delta
  scaling::SavingResult saving_reference_delta;   // fitted slope, reference delta
  scaling::SavingResult saving_reference_inputs;  // reference slope and delta
  scaling::GammaFit gamma;
};

FitArtifacts cmd_fit(const FitOptions& opts, const std::string& out_dir);

// Parses "C,L_base,L_variant" rows; a leading header line is allowed. Errors
// carry 1-based line numbers.
std::vector<scaling::FrontierRow> parse_frontier_csv(const std::string& path);

struct BenchOptions {
  std::size_t vocab = 512;
  std::size_t trace_len = 4096;
  double zipf_exponent = 1.1;
  std::size_t dim = 64;
  std::size_t n_tables = 4;   // modulator pool size for the mixture plugin
  std::size_t top_k = 2;
  std::size_t n_layers = 4;
  std::size_t n_shards = 2;
  std::uint64_t seed = 1;
  std::string trace_file;     // newline-delimited ids; overrides generation
};

struct BenchArtifacts {
  std::string traffic_json;
  std::string manifest;
};

BenchArtifacts cmd_bench(const BenchOptions& opts, const std::string& out_dir);

// Resolves an output directory against the TOKIDX_OUT_ROOT environment
// variable (absolute paths pass through).
std::string resolve_out_dir(const std::string& out_dir);

}  // namespace tokidx::cmd
