#include "tokidx/commands.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tokidx/checkpoint.hpp"
#include "tokidx/sys_sim.hpp"

namespace tokidx::cmd {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok |= key == a;
    if (!ok) throw std::invalid_argument("unknown config field: " + prefix + key);
  }
}

template <typename T>
void read_field(const json& obj, const std::string& prefix, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config field has wrong type: " + prefix + key);
  }
}

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_manifest(const std::string& path, const std::string& command,
                    const std::string& out_dir, std::uint64_t seed,
                    const std::vector<std::string>& files, const std::string& started,
                    const std::string& finished) {
  json m;
  m["command"] = command;
  m["output_dir"] = out_dir;
  m["seed"] = seed;
  m["version"] = kVersion;
  m["files"] = files;
  m["started_at_utc"] = started;    // wall-time fields are excluded from
  m["finished_at_utc"] = finished;  // byte-reproducibility comparisons
  write_text(path, m.dump(2) + "\n");
}

void write_metrics_csv(const std::string& path, const TrainResult& result,
                       std::size_t n_layers) {
  std::ostringstream out;
  out << "step,train_loss,aux_loss";
  for (std::size_t l = 0; l < n_layers; ++l) out << ",layer_std_" << l;
  out << "\n";
  for (const StepRecord& rec : result.records) {
    out << rec.step << "," << format_double(rec.loss) << "," << format_double(rec.aux);
    for (double s : rec.layer_std) out << "," << format_double(s);
    out << "\n";
  }
  write_text(path, out.str());
}

}  // namespace

std::string resolve_out_dir(const std::string& out_dir) {
  fs::path p(out_dir);
  if (!p.is_absolute()) {
    if (const char* root = std::getenv("TOKIDX_OUT_ROOT")) p = fs::path(root) / p;
  }
  fs::create_directories(p);
  return p.string();
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(doc, "", {"schema_version", "model", "plugin", "train", "data", "seed"});
  if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer() ||
      doc["schema_version"].get<int>() != 1)
    throw std::invalid_argument("schema_version: must be the integer 1");

  RunConfig cfg;
  if (doc.contains("seed")) read_field(doc, "", "seed", cfg.model.seed);

  if (doc.contains("model")) {
    const json& m = doc["model"];
    reject_unknown(m, "model.",
                   {"vocab_size", "hidden_dim", "n_layers", "n_heads", "ffn_dim", "ffn_kind",
                    "moe_n_experts", "moe_top_k", "moe_n_shared", "seq_len"});
    read_field(m, "model.", "vocab_size", cfg.model.vocab_size);
    read_field(m, "model.", "hidden_dim", cfg.model.hidden_dim);
    read_field(m, "model.", "n_layers", cfg.model.n_layers);
    read_field(m, "model.", "n_heads", cfg.model.n_heads);
    read_field(m, "model.", "ffn_dim", cfg.model.ffn_dim);
    read_field(m, "model.", "moe_n_experts", cfg.model.moe_n_experts);
    read_field(m, "model.", "moe_top_k", cfg.model.moe_top_k);
    read_field(m, "model.", "moe_n_shared", cfg.model.moe_n_shared);
    read_field(m, "model.", "seq_len", cfg.model.seq_len);
    if (m.contains("ffn_kind"))
      cfg.model.ffn_kind = ffn_kind_from_string(m["ffn_kind"].get<std::string>());
  }
  if (doc.contains("plugin")) {
    const json& p = doc["plugin"];
    reject_unknown(p, "plugin.",
                   {"kind", "n_tables", "top_k", "aux_lambda", "norm_eps", "no_norm",
                    "no_scale_factor"});
    if (p.contains("kind"))
      cfg.model.plugin = plugin_kind_from_string(p["kind"].get<std::string>());
    read_field(p, "plugin.", "n_tables", cfg.model.plugin_n_tables);
    read_field(p, "plugin.", "top_k", cfg.model.plugin_top_k);
    read_field(p, "plugin.", "aux_lambda", cfg.model.plugin_aux_lambda);
    read_field(p, "plugin.", "norm_eps", cfg.model.norm_eps);
    read_field(p, "plugin.", "no_norm", cfg.model.ablate_no_norm);
    read_field(p, "plugin.", "no_scale_factor", cfg.model.ablate_no_scale_factor);
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    reject_unknown(t, "train.",
                   {"steps", "lr", "weight_decay", "grad_clip", "beta1", "beta2"});
    read_field(t, "train.", "steps", cfg.train.steps);
    read_field(t, "train.", "lr", cfg.model.lr);
    read_field(t, "train.", "weight_decay", cfg.model.weight_decay);
    read_field(t, "train.", "grad_clip", cfg.model.grad_clip);
    read_field(t, "train.", "beta1", cfg.model.adam_beta1);
    read_field(t, "train.", "beta2", cfg.model.adam_beta2);
  }
  if (doc.contains("data")) {
    const json& d = doc["data"];
    reject_unknown(d, "data.", {"zipf_exponent", "markov_boost"});
    read_field(d, "data.", "zipf_exponent", cfg.train.zipf_exponent);
    read_field(d, "data.", "markov_boost", cfg.train.markov_boost);
  }
  cfg.model.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

TrainArtifacts cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  const std::string started = now_utc();
  const std::string dir = resolve_out_dir(out_dir);
  Model model = Model::init(cfg.model);
  Trainer trainer(model, cfg.train);
  TrainArtifacts art;
  art.result = trainer.run();

  art.metrics_csv = (fs::path(dir) / "metrics.csv").string();
  write_metrics_csv(art.metrics_csv, art.result, cfg.model.n_layers);

  art.checkpoint = (fs::path(dir) / "model.ckpt").string();
  ckpt::save_checkpoint(model, art.checkpoint);

  json summary;
  summary["schema_version"] = 1;
  summary["plugin"] = to_string(cfg.model.plugin);
  summary["ffn_kind"] = to_string(cfg.model.ffn_kind);
  summary["seed"] = cfg.model.seed;
  summary["steps"] = cfg.train.steps;
  summary["final_loss"] = art.result.final_loss;
  summary["last_step_loss"] = art.result.records.back().loss;
  summary["last_step_aux"] = art.result.records.back().aux;
  art.summary_json = (fs::path(dir) / "summary.json").string();
  write_text(art.summary_json, summary.dump(2) + "\n");

  art.manifest = (fs::path(dir) / "manifest.json").string();
  write_manifest(art.manifest, "train", dir, cfg.model.seed,
                 {"metrics.csv", "summary.json", "model.ckpt"}, started, now_utc());
  return art;
}

AblateFlag ablate_flag_from_string(const std::string& s) {
  if (s == "no_norm") return AblateFlag::kNoNorm;
  if (s == "no_scale_factor") return AblateFlag::kNoScaleFactor;
  throw std::invalid_argument("ablate flag must be no_norm or no_scale_factor, got " + s);
}

AblateArtifacts cmd_ablate(const RunConfig& cfg, AblateFlag flag, const std::string& out_dir) {
  const std::string started = now_utc();
  if (cfg.model.plugin == PluginKind::kNone)
    throw std::invalid_argument("ablate: config must enable a plugin");
  if (flag == AblateFlag::kNoScaleFactor && cfg.model.plugin != PluginKind::kJtokM)
    throw std::invalid_argument("ablate: no_scale_factor applies to the jtok_m plugin only");
  const std::string dir = resolve_out_dir(out_dir);

  RunConfig base_cfg = cfg;
  base_cfg.model.ablate_no_norm = false;
  base_cfg.model.ablate_no_scale_factor = false;
  RunConfig ablated_cfg = base_cfg;
  if (flag == AblateFlag::kNoNorm)
    ablated_cfg.model.ablate_no_norm = true;
  else
    ablated_cfg.model.ablate_no_scale_factor = true;

  AblateArtifacts art;
  {
    Model model = Model::init(base_cfg.model);
    Trainer trainer(model, base_cfg.train);
    art.base = trainer.run();
  }
  {
    Model model = Model::init(ablated_cfg.model);
    Trainer trainer(model, ablated_cfg.train);
    art.ablated = trainer.run();
  }

  art.metrics_base_csv = (fs::path(dir) / "metrics_base.csv").string();
  art.metrics_ablated_csv = (fs::path(dir) / "metrics_ablated.csv").string();
  write_metrics_csv(art.metrics_base_csv, art.base, cfg.model.n_layers);
  write_metrics_csv(art.metrics_ablated_csv, art.ablated, cfg.model.n_layers);

  auto mean_std = [](const StepRecord& rec) {
    double acc = 0.0;
    for (double s : rec.layer_std) acc += s;
    return acc / static_cast<double>(rec.layer_std.size());
  };

  json report;
  report["schema_version"] = 1;
  report["flag"] = flag == AblateFlag::kNoNorm ? "no_norm" : "no_scale_factor";
  report["plugin"] = to_string(cfg.model.plugin);
  report["seed"] = cfg.model.seed;
  report["steps"] = cfg.train.steps;
  report["first_step_loss_base"] = art.base.records.front().loss;
  report["first_step_loss_ablated"] = art.ablated.records.front().loss;
  report["final_loss_base"] = art.base.final_loss;
  report["final_loss_ablated"] = art.ablated.final_loss;
  if (flag == AblateFlag::kNoScaleFactor) {
    const std::size_t warmup = cfg.train.steps / 4;
    std::size_t higher = 0, total = 0;
    json base_std = json::array(), ablated_std = json::array();
    for (std::size_t i = 0; i < art.base.records.size(); ++i) {
      const double b = mean_std(art.base.records[i]);
      const double a = mean_std(art.ablated.records[i]);
      base_std.push_back(b);
      ablated_std.push_back(a);
      if (art.base.records[i].step > warmup) {
        ++total;
        if (a >= b) ++higher;
      }
    }
    report["warmup_steps"] = warmup;
    report["post_warmup_steps"] = total;
    report["post_warmup_steps_with_higher_std"] = higher;
    report["mean_layer_std_base"] = base_std;
    report["mean_layer_std_ablated"] = ablated_std;
  }
  art.report_json = (fs::path(dir) / "report.json").string();
  write_text(art.report_json, report.dump(2) + "\n");

  art.manifest = (fs::path(dir) / "manifest.json").string();
  write_manifest(art.manifest, "ablate", dir, cfg.model.seed,
                 {"metrics_base.csv", "metrics_ablated.csv", "report.json"}, started,
                 now_utc());
  return art;
}

std::vector<scaling::FrontierRow> parse_frontier_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open frontier CSV: " + path);
  std::vector<scaling::FrontierRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string c_str, base_str, variant_str, extra;
    if (!std::getline(ss, c_str, ',') || !std::getline(ss, base_str, ',') ||
        !std::getline(ss, variant_str, ','))
      throw std::invalid_argument("frontier CSV line " + std::to_string(line_no) +
                                  ": expected 3 comma-separated columns");
    if (std::getline(ss, extra, ','))
      throw std::invalid_argument("frontier CSV line " + std::to_string(line_no) +
                                  ": expected exactly 3 columns");
    scaling::FrontierRow row;
    try {
      std::size_t used = 0;
      row.compute = std::stod(c_str, &used);
      row.loss_base = std::stod(base_str);
      row.loss_variant = std::stod(variant_str);
    } catch (const std::exception&) {
      if (line_no == 1) continue;  // header line
      throw std::invalid_argument("frontier CSV line " + std::to_string(line_no) +
                                  ": not numeric");
    }
    rows.push_back(row);
  }
  if (rows.empty())
    throw std::invalid_argument("frontier CSV " + path + ": no data rows");
  return rows;
}

FitArtifacts cmd_fit(const FitOptions& opts, const std::string& out_dir) {
  const std::string started = now_utc();
  const std::string dir = resolve_out_dir(out_dir);

  std::vector<scaling::FrontierRow> rows;
  if (opts.csv_path.empty()) {
    const auto bundled = scaling::bundled_frontier();
    rows.assign(bundled.begin(), bundled.end());
  } else {
    rows = parse_frontier_csv(opts.csv_path);
  }

  std::vector<scaling::FrontierPoint> base_pts, variant_pts;
  for (const auto& row : rows) {
    base_pts.push_back({row.compute, row.loss_base});
    variant_pts.push_back({row.compute, row.loss_variant});
  }

  FitArtifacts art;
  art.fit_base = scaling::loglog_frontier_fit(base_pts);
  art.fit_variant = scaling::loglog_frontier_fit(variant_pts);
  const double delta_fitted = art.fit_base.intercept - art.fit_variant.intercept;
  art.saving_fitted = scaling::compute_saving(art.fit_base.slope, delta_fitted);
  art.saving_reference_delta =
      scaling::compute_saving(art.fit_base.slope, opts.reference_delta_beta);
  art.saving_reference_inputs =
      scaling::compute_saving(opts.reference_slope, opts.reference_delta_beta);
  art.gamma = scaling::gamma_fit(rows, opts.kaplan_alpha, opts.kaplan_beta, opts.eta);

  // Cross-check: with the fitted gamma, the closed-form frontier shift must
  // match the numeric minimization at every budget.
  scaling::ScalingParams params{1e9, 1e10, opts.kaplan_alpha, opts.kaplan_beta};
  scaling::DiscountConfig disc{opts.eta, 0.25, std::max(art.gamma.gamma_hat, 0.0)};
  const double predicted = scaling::frontier_shift_predict(params, disc);
  double max_gap = 0.0;
  json ratios = json::array();
  for (const auto& row : rows) {
    const auto verify = scaling::frontier_verify(params, disc, row.compute);
    ratios.push_back(verify.ratio);
    max_gap = std::max(max_gap, std::fabs(verify.ratio / predicted - 1.0));
  }

  json out;
  out["schema_version"] = 1;
  out["input"] = opts.csv_path.empty() ? "builtin" : opts.csv_path;
  out["n_budgets"] = rows.size();
  out["fit_base"] = {{"slope", art.fit_base.slope},
                     {"intercept", art.fit_base.intercept},
                     {"r_squared", art.fit_base.r_squared}};
  out["fit_variant"] = {{"slope", art.fit_variant.slope},
                        {"intercept", art.fit_variant.intercept},
                        {"r_squared", art.fit_variant.r_squared}};
  out["delta_beta"] = {{"from_intercepts", delta_fitted},
                       {"reference", opts.reference_delta_beta}};
  out["compute_saving"] = {
      {"fitted_slope_intercept_delta",
       {{"ratio", art.saving_fitted.ratio}, {"saving", art.saving_fitted.saving}}},
      {"fitted_slope_reference_delta",
       {{"ratio", art.saving_reference_delta.ratio},
        {"saving", art.saving_reference_delta.saving}}},
      {"reference_slope_reference_delta",
       {{"ratio", art.saving_reference_inputs.ratio},
        {"saving", art.saving_reference_inputs.saving}}}};
  out["gamma_fit"] = {{"gamma_hat", art.gamma.gamma_hat},
                      {"per_budget", art.gamma.per_budget},
                      {"eta", opts.eta},
                      {"alpha", opts.kaplan_alpha},
                      {"beta", opts.kaplan_beta},
                      {"non_positive", art.gamma.non_positive}};
  out["frontier_check"] = {{"predicted_shift", predicted},
                           {"numeric_ratios", ratios},
                           {"max_rel_gap", max_gap}};
  art.fits_json = (fs::path(dir) / "fits.json").string();
  write_text(art.fits_json, out.dump(2) + "\n");

  art.manifest = (fs::path(dir) / "manifest.json").string();
  write_manifest(art.manifest, "fit", dir, 0, {"fits.json"}, started, now_utc());
  return art;
}

BenchArtifacts cmd_bench(const BenchOptions& opts, const std::string& out_dir) {
  const std::string started = now_utc();
  const std::string dir = resolve_out_dir(out_dir);

  sim::AccessTrace trace;
  if (!opts.trace_file.empty()) {
    std::ifstream in(opts.trace_file);
    if (!in) throw std::runtime_error("cannot open trace file: " + opts.trace_file);
    trace.vocab_size = opts.vocab;
    trace.zipf_exponent = opts.zipf_exponent;
    trace.seed = opts.seed;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        trace.ids.push_back(std::stoi(line));
      } catch (const std::exception&) {
        throw std::invalid_argument("trace file line " + std::to_string(line_no) +
                                    ": not an integer");
      }
    }
  } else {
    trace = sim::zipf_generate(opts.vocab, opts.zipf_exponent, opts.trace_len, opts.seed);
  }
  for (int id : trace.ids)
    if (id < 0 || static_cast<std::size_t>(id) >= opts.vocab)
      throw std::invalid_argument("trace contains a token id outside the vocabulary");

  Rng rng = Rng::stream(opts.seed, "bench");
  Tensor table = Tensor::random_normal({opts.vocab, opts.dim}, rng, 0.0, 1.0);
  const auto [gathered, dedup_report] = sim::dedup_gather(table, trace);

  // Mixture traffic: random pool, random routing logits per token.
  std::vector<Tensor> pool;
  for (std::size_t i = 0; i < opts.n_tables; ++i)
    pool.push_back(Tensor::random_normal({opts.vocab, opts.dim}, rng, 0.0, 1.0));
  Rng route_rng = Rng::stream(opts.seed, "routing");
  std::vector<jtok_m::RoutingDecision> decisions;
  std::vector<std::vector<std::size_t>> selections;
  decisions.reserve(trace.ids.size());
  for (std::size_t t = 0; t < trace.ids.size(); ++t) {
    Tensor logits({opts.n_tables});
    for (std::size_t j = 0; j < opts.n_tables; ++j) logits[j] = route_rng.normal();
    decisions.push_back(jtok_m::route_logits(logits, opts.top_k));
    selections.push_back(decisions.back().selected);
  }
  const auto layout = sim::ShardLayout::by_expert_blocks(opts.n_shards, opts.n_tables);
  const auto [mixed, premix_report] = sim::premix_shard(layout, pool, decisions, trace);

  const auto offload_single =
      sim::offload_volume(PluginKind::kJtok, opts.n_layers, opts.dim, trace, {});
  const auto offload_mixture =
      sim::offload_volume(PluginKind::kJtokM, opts.n_layers, opts.dim, trace, selections);
  const auto prefetch_single = sim::prefetch_check(PluginKind::kJtok, opts.n_layers);
  const auto prefetch_mixture = sim::prefetch_check(PluginKind::kJtokM, opts.n_layers);

  std::size_t unique = 0;
  {
    std::vector<std::uint8_t> seen(opts.vocab, 0);
    for (int id : trace.ids) {
      if (!seen[static_cast<std::size_t>(id)]) ++unique;
      seen[static_cast<std::size_t>(id)] = 1;
    }
  }

  json out;
  out["schema_version"] = 1;
  out["trace"] = {{"vocab", opts.vocab},
                  {"length", trace.ids.size()},
                  {"zipf_exponent", opts.zipf_exponent},
                  {"seed", opts.seed},
                  {"unique_ids", unique}};
  out["dedup"] = {{"elements_read", dedup_report.elements_read},
                  {"naive_elements_read", dedup_report.naive_elements_read},
                  {"read_ratio", static_cast<double>(dedup_report.elements_read) /
                                     static_cast<double>(dedup_report.naive_elements_read)}};
  out["premix"] = {{"n_shards", opts.n_shards},
                   {"elements_communicated", premix_report.elements_communicated},
                   {"naive_elements_communicated", premix_report.naive_elements_communicated},
                   {"premix_tokens", premix_report.premix_tokens},
                   {"fallback_tokens", premix_report.fallback_tokens}};
  out["offload"] = {
      {"single_table_h2d", offload_single.elements_transferred_h2d},
      {"mixture_h2d", offload_mixture.elements_transferred_h2d},
      {"layers", opts.n_layers}};
  out["prefetch"] = {
      {"single_table_input_only", prefetch_single.lookups_depend_only_on_ids},
      {"single_table_precedes_writeback", prefetch_single.lookups_precede_writeback},
      {"mixture_precedes_writeback", prefetch_mixture.lookups_precede_writeback}};

  BenchArtifacts art;
  art.traffic_json = (fs::path(dir) / "traffic.json").string();
  write_text(art.traffic_json, out.dump(2) + "\n");
  art.manifest = (fs::path(dir) / "manifest.json").string();
  write_manifest(art.manifest, "bench", dir, opts.seed, {"traffic.json"}, started, now_utc());
  return art;
}

}  // namespace tokidx::cmd
