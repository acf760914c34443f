// tokidx command-line interface: toy training runs, ablation pairs,
// frontier fits, and memory-traffic benchmarks.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tokidx/commands.hpp"

namespace {

int fail(const std::string& message) {
  nlohmann::ordered_json err;
  err["error"] = {{"message", message}};
  std::fprintf(stderr, "%s\n", err.dump().c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"token-indexed parameter experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::string ablate_flag;
  tokidx::cmd::FitOptions fit_opts;
  tokidx::cmd::BenchOptions bench_opts;

  // Config-file overrides mirroring the JSON fields.
  std::vector<std::string> overrides;

  auto* train = app.add_subcommand("train", "train a toy model from a JSON config");
  train->add_option("config", config_path, "path to config.json")->required();
  train->add_option("--out", out_dir, "output directory (default: run)");
  train->add_option("--set", overrides,
                    "override a config field, e.g. --set train.steps=100 --set seed=7");

  auto* ablate = app.add_subcommand("ablate", "paired run with an ablation flag");
  ablate->add_option("config", config_path, "path to config.json")->required();
  ablate->add_option("--flag", ablate_flag, "no_norm or no_scale_factor")->required();
  ablate->add_option("--out", out_dir, "output directory");
  ablate->add_option("--set", overrides, "override a config field");

  auto* fit = app.add_subcommand("fit", "log-log frontier fits and compute-saving report");
  fit->add_option("--input", fit_opts.csv_path,
                  "frontier CSV (C,L_base,L_variant); omit to use the bundled data");
  fit->add_option("--delta-beta", fit_opts.reference_delta_beta,
                  "reference intercept offset accepted as direct input");
  fit->add_option("--slope", fit_opts.reference_slope, "reference slope for direct input");
  fit->add_option("--alpha", fit_opts.kaplan_alpha, "assumed capacity exponent");
  fit->add_option("--beta", fit_opts.kaplan_beta, "assumed data exponent");
  fit->add_option("--eta", fit_opts.eta, "expansion ratio of the measured variant");
  fit->add_option("--out", out_dir, "output directory");

  auto* bench = app.add_subcommand("bench", "traffic accounting for table lookups");
  bench->add_option("--vocab", bench_opts.vocab, "vocabulary size");
  bench->add_option("--trace-len", bench_opts.trace_len, "generated trace length");
  bench->add_option("--zipf", bench_opts.zipf_exponent, "Zipf exponent");
  bench->add_option("--dim", bench_opts.dim, "row width d");
  bench->add_option("--n-tables", bench_opts.n_tables, "modulator pool size");
  bench->add_option("--top-k", bench_opts.top_k, "selections per token");
  bench->add_option("--layers", bench_opts.n_layers, "layer count");
  bench->add_option("--shards", bench_opts.n_shards, "table shards");
  bench->add_option("--seed", bench_opts.seed, "trace seed");
  bench->add_option("--trace-file", bench_opts.trace_file, "newline-delimited token ids");
  bench->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed() || ablate->parsed()) {
      std::ifstream in(config_path);
      if (!in) return fail("cannot open config file: " + config_path);
      std::ostringstream text;
      text << in.rdbuf();
      nlohmann::ordered_json doc = nlohmann::ordered_json::parse(text.str());
      for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) return fail("--set expects key=value, got " + kv);
        std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        nlohmann::ordered_json parsed_value;
        try {
          parsed_value = nlohmann::ordered_json::parse(value);
        } catch (const nlohmann::json::exception&) {
          parsed_value = value;  // bare strings
        }
        nlohmann::ordered_json* node = &doc;
        std::size_t start = 0;
        for (std::size_t dot = key.find('.'); dot != std::string::npos;
             start = dot + 1, dot = key.find('.', start)) {
          node = &(*node)[key.substr(start, dot - start)];
        }
        (*node)[key.substr(start)] = parsed_value;
      }
      const auto cfg = tokidx::cmd::parse_run_config(doc.dump());
      if (train->parsed()) {
        tokidx::cmd::cmd_train(cfg, out_dir);
      } else {
        tokidx::cmd::cmd_ablate(cfg, tokidx::cmd::ablate_flag_from_string(ablate_flag),
                                out_dir);
      }
    } else if (fit->parsed()) {
      tokidx::cmd::cmd_fit(fit_opts, out_dir);
    } else if (bench->parsed()) {
      tokidx::cmd::cmd_bench(bench_opts, out_dir);
    }
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  return 0;
}
