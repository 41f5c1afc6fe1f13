#include "uqevo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uqevo/dsl.hpp"
#include "uqevo/estimators.hpp"
#include "uqevo/evolution.hpp"
#include "uqevo/feature_store.hpp"
#include "uqevo/metrics.hpp"
#include "uqevo/stats.hpp"
#include "uqevo/text.hpp"

namespace uqevo::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "' for digest");
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[32];
  std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(buf.str())));
  return hex;
}

namespace {

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

void write_manifest(const std::string& command, const std::string& beside_path,
                    const ordered_json& config,
                    const std::vector<std::string>& input_paths) {
  ordered_json m;
  m["command"] = command;
  m["tool_version"] = kToolVersion;
  m["config"] = config;
  ordered_json inputs = ordered_json::object();
  for (const auto& p : input_paths) inputs[p] = file_digest(p);
  m["inputs"] = std::move(inputs);

  fs::path base(beside_path);
  fs::path out = fs::is_directory(base) ? base / "manifest.json"
                                        : fs::path(beside_path + ".manifest.json");
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest '" + out.string() + "'");
  f << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Estimator resolution and scoring
// ---------------------------------------------------------------------------

struct NamedScorer {
  std::string name;
  std::optional<EstimatorSpec> spec;    // built-ins / spec files
  std::optional<dsl::Program> program;  // dsl:... / @file.dsl
};

const char* kEstimatorHelp =
    "seq_log_prob | perplexity | mean_token_entropy | pos_corr | "
    "exp_weighted:<gamma> | dsl:<source> | @<file.dsl> | @<file.json>";

NamedScorer resolve_estimator(const std::string& token) {
  NamedScorer s;
  s.name = token;
  if (token == "seq_log_prob" || token == "perplexity" ||
      token == "mean_token_entropy" || token == "pos_corr") {
    EstimatorSpec spec;
    spec.kind = estimator_kind_from_string(token);
    s.spec = spec;
    return s;
  }
  if (token.rfind("exp_weighted:", 0) == 0) {
    EstimatorSpec spec;
    spec.kind = EstimatorKind::exp_weighted;
    try {
      spec.gamma = std::stod(token.substr(13));
    } catch (const std::exception&) {
      throw UsageError("bad gamma in '" + token + "'");
    }
    validate_spec(spec);
    s.spec = spec;
    return s;
  }
  if (token.rfind("dsl:", 0) == 0) {
    s.program = dsl::parse(token.substr(4));
    return s;
  }
  if (!token.empty() && token[0] == '@') {
    std::string path = token.substr(1);
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open estimator file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
      EstimatorSpec spec = spec_from_json(buf.str());
      validate_spec(spec);
      s.spec = spec;
    } else {
      s.program = dsl::parse(buf.str());
    }
    s.name = fs::path(path).stem().string();
    return s;
  }
  throw UsageError("unknown estimator '" + token + "'; available: " +
                   std::string(kEstimatorHelp));
}

ScoreVector score_dataset(const NamedScorer& scorer, const Dataset& d) {
  ScoreVector v;
  v.ids.reserve(d.samples.size());
  v.scores.reserve(d.samples.size());
  for (const auto& sample : d.samples) {
    v.ids.push_back(sample.id);
    double score = scorer.program ? dsl::evaluate(*scorer.program, sample)
                                  : estimate(*scorer.spec, sample);
    v.scores.push_back(score);
  }
  return v;
}

double compute_metric(FitnessMetric metric, const ScoreVector& scores,
                      const Dataset& d) {
  return metric == FitnessMetric::roc_auc ? roc_auc(scores, d) : prr(scores, d);
}

std::map<std::string, double> parse_planted(const std::vector<std::string>& entries) {
  std::map<std::string, double> planted;
  for (const auto& e : entries) {
    auto eq = e.find('=');
    if (eq == std::string::npos)
      throw UsageError("--planted expects name=weight, got '" + e + "'");
    try {
      planted[e.substr(0, eq)] = std::stod(e.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("bad weight in '" + e + "'");
    }
  }
  return planted;
}

ParentRange parse_parent_range(const std::string& text) {
  ParentRange r;
  auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      r.min = r.max = std::stoi(text);
    } else {
      r.min = std::stoi(text.substr(0, dots));
      r.max = std::stoi(text.substr(dots + 2));
    }
  } catch (const std::exception&) {
    throw UsageError("--parents expects K or MIN..MAX, got '" + text + "'");
  }
  return r;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

// ---------------------------------------------------------------------------
// Subcommand options
// ---------------------------------------------------------------------------

struct SynthArgs {
  int n = 1000;
  int min_len = 5;
  int max_len = 25;
  std::vector<std::string> planted;
  double noise = 0.1;
  std::string task = "binary";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  SyntheticConfig cfg;
  cfg.n_samples = a.n;
  cfg.min_len = a.min_len;
  cfg.max_len = a.max_len;
  cfg.planted_weights = parse_planted(a.planted);
  cfg.noise = a.noise;
  cfg.task = task_from_string(a.task);
  cfg.seed = a.seed;

  Dataset d = generate_synthetic(cfg);
  write_dataset(d, a.out);

  ordered_json config;
  config["n"] = a.n;
  config["min_len"] = a.min_len;
  config["max_len"] = a.max_len;
  config["planted"] = a.planted;
  config["noise"] = a.noise;
  config["task"] = a.task;
  config["seed"] = a.seed;
  config["out"] = a.out;
  write_manifest("synth", a.out, config, {a.out});
  std::cout << "wrote " << d.samples.size() << " samples to " << a.out << "\n";
  return kExitOk;
}

struct EvolveArgs {
  std::string data;
  std::string task = "binary";
  std::string metric = "roc_auc";
  int rounds = 500;
  int per_round = 2;
  std::string parents = "1..4";
  double top_percent = 100.0;
  double t_sampling = 0.1;
  double llm_temperature = 1.0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string client = "mock";
  std::string endpoint;
  std::string model;
  std::string api_key_env = "UQEVO_API_KEY";
  int max_tokens = 2048;
  int retries = 3;
  int timeout_ms = 60000;
  int backoff_ms = 500;
  std::vector<std::string> constraints;
  std::string seed_source = "-sum(lp)";
  bool no_dedup = false;
  bool resume = false;
  std::string out;
};

int cmd_evolve(const EvolveArgs& a) {
  if (a.client == "mock" && !a.seed_set)
    throw UsageError("--seed is required with the mock client");

  Dataset train = load_dataset(a.data, task_from_string(a.task));

  EvolutionConfig config;
  config.rounds = a.rounds;
  config.candidates_per_round = a.per_round;
  config.parents_per_prompt = parse_parent_range(a.parents);
  config.top_percent = a.top_percent;
  config.t_cand_sampling = a.t_sampling;
  config.llm_temperature = a.llm_temperature;
  config.fitness_metric = fitness_metric_from_string(a.metric);
  config.seed = a.seed;
  config.dedup = !a.no_dedup;
  config.seed_source = a.seed_source;
  config.constraints = a.constraints;

  std::unique_ptr<MutationClient> client;
  if (a.client == "mock") {
    dsl::GenOptions opts;
    opts.channels.assign(train.required_channels.begin(), train.required_channels.end());
    client = std::make_unique<MockMutationClient>(opts);
  } else if (a.client == "http") {
    HttpClientConfig http;
    http.endpoint_url = a.endpoint;
    http.model = a.model;
    http.temperature = a.llm_temperature;
    http.max_tokens = a.max_tokens;
    http.max_retries = a.retries;
    http.timeout_ms = a.timeout_ms;
    http.backoff_base_ms = a.backoff_ms;
    http.api_key_env = a.api_key_env;
    client = std::make_unique<HttpMutationClient>(http);
  } else {
    throw UsageError("--client must be mock or http");
  }

  EvolutionRun run = run_evolution(config, train, *client, a.out, a.resume);

  ordered_json manifest_config;
  manifest_config["data"] = a.data;
  manifest_config["metric"] = a.metric;
  manifest_config["rounds"] = a.rounds;
  manifest_config["per_round"] = a.per_round;
  manifest_config["parents"] = a.parents;
  manifest_config["seed"] = a.seed;
  manifest_config["client"] = a.client;
  write_manifest("evolve", a.out, manifest_config, {a.data});

  const BestPoint& best = run.best_trajectory.back();
  std::cout << "evolved " << run.candidates.size() << " candidates over "
            << a.rounds << " rounds; best fitness " << format_fixed(best.best_fitness, 4)
            << " (candidate " << best.best_candidate_id << ")\n";
  return kExitOk;
}

struct EvalArgs {
  std::vector<std::string> data;
  std::string task = "binary";
  std::string metric = "roc_auc";
  std::vector<std::string> estimators;
  std::string out;
  std::string format = "csv";
};

int cmd_eval(const EvalArgs& a) {
  FitnessMetric metric = fitness_metric_from_string(a.metric);
  std::vector<Dataset> datasets;
  for (const auto& path : a.data)
    datasets.push_back(load_dataset(path, task_from_string(a.task)));
  std::vector<NamedScorer> scorers;
  for (const auto& token : a.estimators) scorers.push_back(resolve_estimator(token));

  // Wide table: one row per estimator, one column per dataset, plus the
  // unweighted mean across datasets.
  std::vector<std::vector<double>> table(scorers.size());
  for (std::size_t i = 0; i < scorers.size(); ++i) {
    for (const auto& d : datasets) {
      ScoreVector scores = score_dataset(scorers[i], d);
      table[i].push_back(compute_metric(metric, scores, d));
    }
  }

  std::ostringstream csv;
  csv << "estimator";
  for (const auto& d : datasets) csv << ',' << d.name;
  csv << ",mean\n";
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < scorers.size(); ++i) {
    double sum = 0.0;
    for (double v : table[i]) sum += v;
    double mean = sum / static_cast<double>(table[i].size());
    csv << scorers[i].name;
    for (double v : table[i]) csv << ',' << format_full(v);
    csv << ',' << format_full(mean) << '\n';
    ordered_json row;
    row["estimator"] = scorers[i].name;
    for (std::size_t j = 0; j < datasets.size(); ++j) row[datasets[j].name] = table[i][j];
    row["mean"] = mean;
    rows.push_back(std::move(row));
  }

  std::string body;
  if (a.format == "json") {
    ordered_json j;
    j["metric"] = a.metric;
    j["rows"] = std::move(rows);
    body = j.dump(2) + "\n";
  } else {
    body = csv.str();
  }

  if (a.out.empty()) {
    std::cout << body;
  } else {
    write_text(a.out, body);
    ordered_json config;
    config["data"] = a.data;
    config["estimators"] = a.estimators;
    config["metric"] = a.metric;
    config["format"] = a.format;
    write_manifest("eval", a.out, config, a.data);
  }
  return kExitOk;
}

struct CompareArgs {
  std::vector<std::string> data;
  std::string task = "binary";
  std::string metric = "roc_auc";
  std::string a;
  std::string b;
  double alpha = 0.05;
  int resamples = 10000;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
};

int cmd_compare(const CompareArgs& args) {
  FitnessMetric metric = fitness_metric_from_string(args.metric);
  NamedScorer sa = resolve_estimator(args.a);
  NamedScorer sb = resolve_estimator(args.b);
  MetricFn fn = metric == FitnessMetric::roc_auc ? metric_roc_auc() : metric_prr();

  std::vector<BootstrapResult> results;
  std::vector<std::string> labels;
  for (const auto& path : args.data) {
    Dataset d = load_dataset(path, task_from_string(args.task));
    ScoreVector va = score_dataset(sa, d);
    ScoreVector vb = score_dataset(sb, d);
    results.push_back(
        paired_bootstrap(fn, va, vb, d, args.resamples, args.alpha, args.seed));
    labels.push_back(d.name);
  }
  WinTieLoss summary = win_tie_loss(results, labels, args.alpha);

  std::string body = args.format == "json" ? summary.to_json() + "\n" : summary.to_csv();
  if (args.out.empty()) {
    std::cout << body;
  } else {
    write_text(args.out, body);
    ordered_json config;
    config["data"] = args.data;
    config["a"] = args.a;
    config["b"] = args.b;
    config["metric"] = args.metric;
    config["alpha"] = args.alpha;
    config["resamples"] = args.resamples;
    config["seed"] = args.seed;
    write_manifest("compare", args.out, config, args.data);
  }
  std::cout << "wins " << summary.wins << ", ties " << summary.ties << ", losses "
            << summary.losses << "\n";
  return kExitOk;
}

struct SimilarityArgs {
  std::string data;
  std::string task = "binary";
  std::string metric = "roc_auc";
  std::vector<std::string> estimators;
  std::string run_dir;
  std::string reference = "seq_log_prob";
  std::string out;
  std::string format = "csv";
};

int cmd_similarity(const SimilarityArgs& a) {
  Dataset d = load_dataset(a.data, task_from_string(a.task));
  FitnessMetric metric = fitness_metric_from_string(a.metric);
  std::string body;

  if (!a.run_dir.empty()) {
    // One row per non-failed candidate: rank similarity to the reference
    // method and performance on this dataset, best first.
    LoadedRun loaded = load_run(a.run_dir);
    NamedScorer ref = resolve_estimator(a.reference);
    ScoreVector ref_scores = score_dataset(ref, d);

    struct Row {
      std::uint64_t id;
      int round;
      double similarity;  // NaN when undefined (zero rank variance)
      double performance;
    };
    std::vector<Row> rows;
    for (const auto& c : loaded.run.candidates) {
      if (c.failed()) continue;
      NamedScorer scorer{c.source, std::nullopt, c.program};
      ScoreVector scores = score_dataset(scorer, d);
      double sim;
      try {
        sim = spearman(scores, ref_scores);
      } catch (const MetricError&) {
        sim = std::numeric_limits<double>::quiet_NaN();
      }
      double perf = compute_metric(metric, scores, d);
      rows.push_back({c.id, c.round, sim, perf});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
      if (x.performance != y.performance) return x.performance > y.performance;
      return x.id < y.id;
    });

    if (a.format == "json") {
      ordered_json j = ordered_json::array();
      for (const auto& r : rows) {
        ordered_json row;
        row["candidate_id"] = r.id;
        row["round"] = r.round;
        if (std::isnan(r.similarity))
          row["similarity"] = nullptr;
        else
          row["similarity"] = r.similarity;
        row["performance"] = r.performance;
        j.push_back(std::move(row));
      }
      body = j.dump(2) + "\n";
    } else {
      std::ostringstream csv;
      csv << "candidate_id,round,similarity,performance\n";
      for (const auto& r : rows) {
        csv << r.id << ',' << r.round << ','
            << (std::isnan(r.similarity) ? std::string() : format_full(r.similarity))
            << ',' << format_full(r.performance) << '\n';
      }
      body = csv.str();
    }
  } else {
    if (a.estimators.size() < 2)
      throw UsageError("similarity needs --run or at least two --estimator");
    std::vector<NamedScorer> scorers;
    std::vector<ScoreVector> scores;
    for (const auto& token : a.estimators) {
      scorers.push_back(resolve_estimator(token));
      scores.push_back(score_dataset(scorers.back(), d));
    }
    std::ostringstream csv;
    ordered_json matrix = ordered_json::object();
    csv << "method";
    for (const auto& s : scorers) csv << ',' << s.name;
    csv << '\n';
    for (std::size_t i = 0; i < scorers.size(); ++i) {
      csv << scorers[i].name;
      ordered_json row = ordered_json::object();
      for (std::size_t j = 0; j < scorers.size(); ++j) {
        double sim = i == j ? 1.0 : spearman(scores[i], scores[j]);
        csv << ',' << format_full(sim);
        row[scorers[j].name] = sim;
      }
      csv << '\n';
      matrix[scorers[i].name] = std::move(row);
    }
    body = a.format == "json" ? matrix.dump(2) + "\n" : csv.str();
  }

  if (a.out.empty()) {
    std::cout << body;
  } else {
    write_text(a.out, body);
    ordered_json config;
    config["data"] = a.data;
    config["estimators"] = a.estimators;
    config["run"] = a.run_dir;
    config["reference"] = a.reference;
    config["metric"] = a.metric;
    write_manifest("similarity", a.out, config, {a.data});
  }
  return kExitOk;
}

struct ComplexityArgs {
  std::string run_dir;
  std::string out;
  std::string format = "csv";
};

int cmd_complexity(const ComplexityArgs& a) {
  LoadedRun loaded = load_run(a.run_dir);

  std::vector<const Candidate*> rows;
  for (const auto& c : loaded.run.candidates)
    if (!c.failed()) rows.push_back(&c);

  std::vector<double> line_counts, fitnesses;
  for (const auto* c : rows) {
    line_counts.push_back(static_cast<double>(c->complexity.line_count));
    fitnesses.push_back(*c->fitness);
  }
  std::optional<double> summary;
  if (rows.size() >= 2) {
    try {
      summary = spearman(line_counts, fitnesses);
    } catch (const MetricError&) {
      summary = std::nullopt;  // zero rank variance
    }
  }

  std::string body;
  if (a.format == "json") {
    ordered_json j;
    ordered_json jrows = ordered_json::array();
    for (const auto* c : rows) {
      ordered_json row;
      row["id"] = c->id;
      row["round"] = c->round;
      row["line_count"] = c->complexity.line_count;
      row["ast_nodes"] = c->complexity.ast_nodes;
      row["unary_ops"] = c->complexity.unary_ops;
      row["binary_ops"] = c->complexity.binary_ops;
      row["halstead_volume"] = c->complexity.halstead_volume;
      row["fitness"] = *c->fitness;
      jrows.push_back(std::move(row));
    }
    j["rows"] = std::move(jrows);
    if (summary)
      j["spearman_line_count_fitness"] = *summary;
    else
      j["spearman_line_count_fitness"] = nullptr;
    body = j.dump(2) + "\n";
  } else {
    std::ostringstream csv;
    csv << "id,round,line_count,ast_nodes,unary_ops,binary_ops,halstead_volume,fitness\n";
    for (const auto* c : rows) {
      csv << c->id << ',' << c->round << ',' << c->complexity.line_count << ','
          << c->complexity.ast_nodes << ',' << c->complexity.unary_ops << ','
          << c->complexity.binary_ops << ',' << format_full(c->complexity.halstead_volume)
          << ',' << format_full(*c->fitness) << '\n';
    }
    body = csv.str();
  }

  if (a.out.empty()) {
    std::cout << body;
  } else {
    write_text(a.out, body);
    ordered_json config;
    config["run"] = a.run_dir;
    write_manifest("complexity", a.out, config, {});
  }
  std::cout << "spearman(line_count, fitness) = "
            << (summary ? format_full(*summary) : std::string("null")) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"uqevo: evolutionary search for uncertainty scoring functions"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; flags override its values");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--n", synth.n, "Number of samples");
  synth_cmd->add_option("--min-len", synth.min_len, "Minimum token count");
  synth_cmd->add_option("--max-len", synth.max_len, "Maximum token count");
  synth_cmd->add_option("--planted", synth.planted,
                        "Planted feature weight name=w (repeatable)");
  synth_cmd->add_option("--noise", synth.noise, "Label noise stddev");
  synth_cmd->add_option("--task", synth.task, "binary | continuous");
  synth_cmd->add_option("--seed", synth.seed, "RNG seed")->required();
  synth_cmd->add_option("-o,--out", synth.out, "Output JSONL path")->required();

  EvolveArgs evolve;
  auto* evolve_cmd = app.add_subcommand("evolve", "Run evolutionary search");
  evolve_cmd->add_option("--data", evolve.data, "Training dataset JSONL")->required();
  evolve_cmd->add_option("--task", evolve.task, "binary | continuous");
  evolve_cmd->add_option("--metric", evolve.metric, "roc_auc | prr");
  evolve_cmd->add_option("--rounds", evolve.rounds, "Evolution rounds");
  evolve_cmd->add_option("--per-round", evolve.per_round, "Proposals per round");
  evolve_cmd->add_option("--parents", evolve.parents, "Parents per prompt: K or MIN..MAX");
  evolve_cmd->add_option("--top-percent", evolve.top_percent, "Preselection percentage");
  evolve_cmd->add_option("--t-sampling", evolve.t_sampling, "Softmax temperature");
  evolve_cmd->add_option("--llm-temperature", evolve.llm_temperature, "LLM temperature");
  auto* seed_opt = evolve_cmd->add_option("--seed", evolve.seed, "Master RNG seed");
  evolve_cmd->add_option("--client", evolve.client, "mock | http");
  evolve_cmd->add_option("--endpoint", evolve.endpoint, "Chat-completion endpoint URL");
  evolve_cmd->add_option("--model", evolve.model, "Model name");
  evolve_cmd->add_option("--api-key-env", evolve.api_key_env,
                         "Env var holding the API key");
  evolve_cmd->add_option("--max-tokens", evolve.max_tokens, "Max response tokens");
  evolve_cmd->add_option("--retries", evolve.retries, "HTTP retry budget");
  evolve_cmd->add_option("--timeout-ms", evolve.timeout_ms, "Per-request timeout");
  evolve_cmd->add_option("--backoff-ms", evolve.backoff_ms, "Base backoff delay");
  evolve_cmd->add_option("--constraint", evolve.constraints,
                         "Extra prompt constraint line (repeatable)");
  evolve_cmd->add_option("--seed-source", evolve.seed_source, "Round-0 baseline program");
  evolve_cmd->add_flag("--no-dedup", evolve.no_dedup, "Keep duplicate candidates");
  evolve_cmd->add_flag("--resume", evolve.resume, "Resume from an existing run dir");
  evolve_cmd->add_option("-o,--out", evolve.out, "Run directory")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate estimators on datasets");
  eval_cmd->add_option("--data", eval.data, "Dataset JSONL (repeatable)")->required();
  eval_cmd->add_option("--task", eval.task, "binary | continuous");
  eval_cmd->add_option("--metric", eval.metric, "roc_auc | prr");
  eval_cmd->add_option("--estimator", eval.estimators, kEstimatorHelp)->required();
  eval_cmd->add_option("-o,--out", eval.out, "Report path (default stdout)");
  eval_cmd->add_option("--format", eval.format, "csv | json");

  CompareArgs compare;
  auto* compare_cmd =
      app.add_subcommand("compare", "Paired bootstrap comparison of two methods");
  compare_cmd->add_option("--data", compare.data, "Dataset JSONL (repeatable)")->required();
  compare_cmd->add_option("--task", compare.task, "binary | continuous");
  compare_cmd->add_option("--metric", compare.metric, "roc_auc | prr");
  compare_cmd->add_option("--a", compare.a, "Method A")->required();
  compare_cmd->add_option("--b", compare.b, "Method B")->required();
  compare_cmd->add_option("--alpha", compare.alpha, "Significance level");
  compare_cmd->add_option("--resamples", compare.resamples, "Bootstrap resamples");
  compare_cmd->add_option("--seed", compare.seed, "Bootstrap seed");
  compare_cmd->add_option("-o,--out", compare.out, "Report path (default stdout)");
  compare_cmd->add_option("--format", compare.format, "csv | json");

  SimilarityArgs similarity;
  auto* sim_cmd = app.add_subcommand("similarity", "Spearman similarity of methods");
  sim_cmd->add_option("--data", similarity.data, "Score pool dataset JSONL")->required();
  sim_cmd->add_option("--task", similarity.task, "binary | continuous");
  sim_cmd->add_option("--metric", similarity.metric, "Performance metric");
  sim_cmd->add_option("--estimator", similarity.estimators, kEstimatorHelp);
  sim_cmd->add_option("--run", similarity.run_dir, "Run directory (per-candidate mode)");
  sim_cmd->add_option("--reference", similarity.reference, "Reference method");
  sim_cmd->add_option("-o,--out", similarity.out, "Report path (default stdout)");
  sim_cmd->add_option("--format", similarity.format, "csv | json");

  ComplexityArgs complexity_args;
  auto* cx_cmd = app.add_subcommand("complexity", "Complexity/performance table of a run");
  cx_cmd->add_option("--run", complexity_args.run_dir, "Run directory")->required();
  cx_cmd->add_option("-o,--out", complexity_args.out, "Report path (default stdout)");
  cx_cmd->add_option("--format", complexity_args.format, "csv | json");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    evolve.seed_set = seed_opt->count() > 0;
    if (synth_cmd->parsed()) return cmd_synth(synth);
    if (evolve_cmd->parsed()) return cmd_evolve(evolve);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (compare_cmd->parsed()) return cmd_compare(compare);
    if (sim_cmd->parsed()) return cmd_similarity(similarity);
    if (cx_cmd->parsed()) return cmd_complexity(complexity_args);
    std::cerr << "usage error: no subcommand\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace uqevo::cli
