#include "uqevo/evolution.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "uqevo/metrics.hpp"
#include "uqevo/rng.hpp"
#include "uqevo/text.hpp"

namespace uqevo {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string to_string(FitnessMetric m) {
  return m == FitnessMetric::roc_auc ? "roc_auc" : "prr";
}

FitnessMetric fitness_metric_from_string(const std::string& s) {
  if (s == "roc_auc") return FitnessMetric::roc_auc;
  if (s == "prr") return FitnessMetric::prr;
  throw EvolutionError("unknown fitness metric '" + s + "'");
}

namespace {

// RNG substream purposes, combined with the master seed and round index.
constexpr std::uint64_t kPurposeParentCount = 1;
constexpr std::uint64_t kPurposeParentDraw = 2;
constexpr std::uint64_t kPurposeProposal = 3;

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const char* kDefaultTaskDescription =
    "Design an uncertainty scoring function for language-model generations. "
    "Each sample provides per-token signals from one generation; produce a "
    "single scalar score where HIGHER means the generation is MORE likely to "
    "be incorrect. Scores are only ever compared by rank across a dataset, "
    "so scale and offset do not matter.";

const char* kDslReference =
    "Write one expression in the scoring language. Per-sample bindings:\n"
    "  lp          array of token log-probabilities (nats, <= 0)\n"
    "  ent         array of token next-token entropies (nats, >= 0)\n"
    "  pos         array of token positions 0..n-1\n"
    "  n           scalar sequence length\n"
    "  ch(\"name\")  named channel array, when the dataset provides it\n"
    "Functions: sum, mean, min, max, std, first, last, abs, exp, log, sqrt,\n"
    "tanh, clip(x,lo,hi), corr(a,b), dot(a,b), weights_exp(gamma),\n"
    "if(cond,a,b). Operators: + - * / ^ and comparisons < <= > >= = which\n"
    "produce 0/1. `let name = expr in expr` binds intermediates. The\n"
    "expression must reduce to a scalar.";

void validate_config(const EvolutionConfig& c) {
  if (c.rounds < 0) throw EvolutionError("rounds must be >= 0");
  if (c.candidates_per_round < 1)
    throw EvolutionError("candidates_per_round must be >= 1");
  if (c.parents_per_prompt.min < 1 || c.parents_per_prompt.max > 4 ||
      c.parents_per_prompt.min > c.parents_per_prompt.max)
    throw EvolutionError("parents_per_prompt must satisfy 1 <= min <= max <= 4");
  if (!(c.top_percent > 0.0 && c.top_percent <= 100.0))
    throw EvolutionError("top_percent must be in (0,100]");
  if (!(c.t_cand_sampling > 0.0))
    throw EvolutionError("t_cand_sampling must be > 0");
  if (c.llm_temperature < 0.0)
    throw EvolutionError("llm_temperature must be >= 0");
}

}  // namespace

std::vector<std::size_t> sample_parents(std::span<const Candidate> pool, int k,
                                        double top_percent, double t,
                                        std::mt19937_64& rng) {
  if (k < 1) throw EvolutionError("sample_parents: k must be >= 1");
  if (!(t > 0.0)) throw EvolutionError("sample_parents: t must be > 0");

  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!pool[i].failed()) valid.push_back(i);
  if (valid.empty()) throw EvolutionError("sample_parents: no valid candidates");

  std::sort(valid.begin(), valid.end(), [&](std::size_t a, std::size_t b) {
    if (*pool[a].fitness != *pool[b].fitness)
      return *pool[a].fitness > *pool[b].fitness;
    return pool[a].id < pool[b].id;
  });
  auto survivors = static_cast<std::size_t>(std::ceil(
      top_percent / 100.0 * static_cast<double>(valid.size())));
  survivors = std::clamp<std::size_t>(survivors, 1, valid.size());
  valid.resize(survivors);

  double f_max = *pool[valid.front()].fitness;
  std::vector<double> weight(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i)
    weight[i] = std::exp((*pool[valid[i]].fitness - f_max) / t);

  std::vector<std::size_t> picked;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t draws = std::min<std::size_t>(static_cast<std::size_t>(k), valid.size());
  for (std::size_t d = 0; d < draws; ++d) {
    double total = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i) total += weight[i];
    double u = unit(rng) * total;
    double cum = 0.0;
    std::size_t chosen = valid.size() - 1;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      cum += weight[i];
      if (u < cum) {
        chosen = i;
        break;
      }
    }
    picked.push_back(valid[chosen]);
    valid.erase(valid.begin() + static_cast<std::ptrdiff_t>(chosen));
    weight.erase(weight.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return picked;
}

PromptBundle build_prompt(const std::string& task_description,
                          std::span<const Candidate> parents,
                          std::span<const std::string> constraints) {
  if (parents.empty()) throw EvolutionError("build_prompt: no parents");
  std::ostringstream out;
  out << "# Task\n"
      << (task_description.empty() ? kDefaultTaskDescription : task_description.c_str())
      << "\n\n# Language reference\n"
      << kDslReference << "\n";
  if (!constraints.empty()) {
    out << "\n# Constraints\n";
    for (const auto& c : constraints) out << "- " << c << "\n";
  }
  out << "\n# Current candidates\n";
  PromptBundle bundle;
  int index = 1;
  for (const auto& p : parents) {
    out << "Candidate " << index++ << " (fitness " << format_fixed(*p.fitness, 4)
        << "):\n```\n" << p.source << "\n```\n";
    bundle.parent_sources.push_back(p.source);
  }
  out << "\n# Output format\n"
         "Propose an improved candidate. Reply with each candidate expression "
         "in its own fenced code block; no prose inside the fences.\n";
  bundle.text = out.str();
  return bundle;
}

std::vector<std::string> extract_programs(const std::string& llm_text) {
  auto trimmed = [](const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return std::string();
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
  };

  std::vector<std::string> blocks;
  std::istringstream in(llm_text);
  std::string line;
  bool in_fence = false;
  bool saw_fence = false;
  std::string current;
  while (std::getline(in, line)) {
    std::string stripped = trimmed(line);
    if (stripped.rfind("```", 0) == 0) {
      saw_fence = true;
      if (in_fence) {
        std::string body = trimmed(current);
        if (!body.empty()) blocks.push_back(std::move(body));
        current.clear();
        in_fence = false;
      } else {
        in_fence = true;
      }
      continue;
    }
    if (in_fence) {
      current += line;
      current += '\n';
    }
  }
  if (in_fence) {  // unterminated fence: keep what was captured
    std::string body = trimmed(current);
    if (!body.empty()) blocks.push_back(std::move(body));
  }
  if (!saw_fence) {
    std::string whole = trimmed(llm_text);
    if (!whole.empty()) blocks.push_back(std::move(whole));
  }
  return blocks;
}

std::vector<std::string> propose(MutationClient& client, const PromptBundle& prompt,
                                 int k) {
  if (k < 1) throw EvolutionError("propose: k must be >= 1");
  std::vector<std::string> responses;
  responses.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) responses.push_back(client.propose_one(prompt, i));
  return responses;
}

std::string MockMutationClient::propose_one(const PromptBundle& prompt,
                                            int proposal_index) {
  if (prompt.parent_sources.empty())
    throw ClientError("mock client: prompt bundle carries no parents", 1);
  std::mt19937_64 rng =
      make_rng(prompt.seed, 0x6d6f636bULL, static_cast<std::uint64_t>(proposal_index));
  const std::string& parent =
      prompt.parent_sources[rng() % prompt.parent_sources.size()];

  std::string source;
  try {
    dsl::Program program = dsl::parse(parent);
    int steps = 1 + static_cast<int>(rng() % 2);
    for (int s = 0; s < steps; ++s) program = dsl::mutate_random(program, rng, gen_opts_);
    source = program.source;
  } catch (const dsl::ParseError&) {
    // Unparseable parent (should not happen; parents are pool members):
    // fall back to a fresh random program.
    dsl::Program program = dsl::random_program(rng, 2, gen_opts_);
    source = program.source;
  }
  return "Here is a mutated candidate:\n```\n" + source + "\n```\n";
}

Candidate evaluate_candidate(const std::string& source, const Dataset& train,
                             FitnessMetric metric) {
  Candidate c;
  c.source = source;
  dsl::Program program;
  try {
    program = dsl::parse(source);
  } catch (const dsl::ParseError& e) {
    c.failure_reason = e.what();
    return c;
  }
  c.source = dsl::canonical_print(program);
  // line_count reflects the program as proposed; AST metrics come from the
  // parsed tree either way.
  c.complexity = dsl::complexity(program);

  std::vector<double> scores(train.samples.size());
  try {
    for (std::size_t i = 0; i < train.samples.size(); ++i)
      scores[i] = dsl::evaluate(program, train.samples[i]);
  } catch (const dsl::EvalError& e) {
    c.failure_reason = e.what();
    return c;
  }

  std::vector<double> quality(train.samples.size());
  for (std::size_t i = 0; i < train.samples.size(); ++i)
    quality[i] = train.samples[i].quality;
  try {
    double fitness = metric == FitnessMetric::roc_auc ? roc_auc(scores, quality)
                                                      : prr(scores, quality);
    if (!std::isfinite(fitness)) {
      c.failure_reason = "non-finite fitness";
      return c;
    }
    c.fitness = fitness;
  } catch (const MetricError& e) {
    c.failure_reason = e.what();
    return c;
  }
  c.program = dsl::Program{c.source, std::move(program.ast)};
  return c;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

ordered_json config_to_json(const EvolutionConfig& c) {
  ordered_json j;
  j["rounds"] = c.rounds;
  j["candidates_per_round"] = c.candidates_per_round;
  j["parents_min"] = c.parents_per_prompt.min;
  j["parents_max"] = c.parents_per_prompt.max;
  j["top_percent"] = c.top_percent;
  j["t_cand_sampling"] = c.t_cand_sampling;
  j["llm_temperature"] = c.llm_temperature;
  j["fitness_metric"] = to_string(c.fitness_metric);
  j["seed"] = c.seed;
  j["dedup"] = c.dedup;
  j["seed_source"] = c.seed_source;
  j["task_description"] = c.task_description;
  j["constraints"] = c.constraints;
  return j;
}

EvolutionConfig config_from_json(const ordered_json& j) {
  EvolutionConfig c;
  c.rounds = j.at("rounds").get<int>();
  c.candidates_per_round = j.at("candidates_per_round").get<int>();
  c.parents_per_prompt.min = j.at("parents_min").get<int>();
  c.parents_per_prompt.max = j.at("parents_max").get<int>();
  c.top_percent = j.at("top_percent").get<double>();
  c.t_cand_sampling = j.at("t_cand_sampling").get<double>();
  c.llm_temperature = j.at("llm_temperature").get<double>();
  c.fitness_metric = fitness_metric_from_string(j.at("fitness_metric").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.dedup = j.at("dedup").get<bool>();
  c.seed_source = j.at("seed_source").get<std::string>();
  c.task_description = j.at("task_description").get<std::string>();
  c.constraints = j.at("constraints").get<std::vector<std::string>>();
  return c;
}

ordered_json candidate_to_json(const Candidate& c) {
  ordered_json j;
  j["id"] = c.id;
  j["round"] = c.round;
  j["source"] = c.source;
  if (c.fitness)
    j["fitness"] = *c.fitness;
  else
    j["fitness"] = nullptr;
  if (!c.failure_reason.empty()) j["failure_reason"] = c.failure_reason;
  j["parent_ids"] = c.parent_ids;
  j["proposer"] = c.proposer;
  ordered_json cx;
  cx["line_count"] = c.complexity.line_count;
  cx["ast_nodes"] = c.complexity.ast_nodes;
  cx["unary_ops"] = c.complexity.unary_ops;
  cx["binary_ops"] = c.complexity.binary_ops;
  cx["halstead_volume"] = c.complexity.halstead_volume;
  j["complexity"] = std::move(cx);
  return j;
}

Candidate candidate_from_json(const ordered_json& j) {
  Candidate c;
  c.id = j.at("id").get<std::uint64_t>();
  c.round = j.at("round").get<int>();
  c.source = j.at("source").get<std::string>();
  if (!j.at("fitness").is_null()) c.fitness = j.at("fitness").get<double>();
  if (j.contains("failure_reason"))
    c.failure_reason = j.at("failure_reason").get<std::string>();
  c.parent_ids = j.at("parent_ids").get<std::vector<std::uint64_t>>();
  c.proposer = j.at("proposer").get<std::string>();
  const auto& cx = j.at("complexity");
  c.complexity.line_count = cx.at("line_count").get<int>();
  c.complexity.ast_nodes = cx.at("ast_nodes").get<int>();
  c.complexity.unary_ops = cx.at("unary_ops").get<int>();
  c.complexity.binary_ops = cx.at("binary_ops").get<int>();
  c.complexity.halstead_volume = cx.at("halstead_volume").get<double>();
  if (c.fitness) {
    dsl::Program p = dsl::parse(c.source);
    c.program = dsl::Program{c.source, std::move(p.ast)};
  }
  return c;
}

void write_run_meta(const EvolutionRun& run, const std::string& run_dir) {
  ordered_json j;
  j["tool"] = "uqevo";
  j["dataset_name"] = run.dataset_name;
  j["started"] = run.started;
  j["finished"] = run.finished;
  j["config"] = config_to_json(run.config);
  std::ofstream out(fs::path(run_dir) / "config.json", std::ios::trunc);
  if (!out) throw EvolutionError("cannot write config.json in '" + run_dir + "'");
  out << j.dump(2) << '\n';
}

std::string best_csv_row(const BestPoint& p) {
  std::ostringstream row;
  row << p.round << ',' << format_full(p.best_fitness) << ',' << p.best_candidate_id;
  return row.str();
}

}  // namespace

void persist_run(const EvolutionRun& run, const std::string& run_dir) {
  fs::create_directories(run_dir);
  write_run_meta(run, run_dir);
  {
    std::ofstream out(fs::path(run_dir) / "candidates.jsonl", std::ios::trunc);
    if (!out) throw EvolutionError("cannot write candidates.jsonl");
    for (const auto& c : run.candidates) out << candidate_to_json(c).dump() << '\n';
  }
  {
    std::ofstream out(fs::path(run_dir) / "best.csv", std::ios::trunc);
    if (!out) throw EvolutionError("cannot write best.csv");
    out << "round,best_fitness,best_candidate_id\n";
    for (const auto& p : run.best_trajectory) out << best_csv_row(p) << '\n';
  }
}

LoadedRun load_run(const std::string& run_dir) {
  fs::path dir(run_dir);
  if (!fs::exists(dir / "config.json"))
    throw EvolutionError("load_run: missing config.json in '" + run_dir + "'");

  LoadedRun loaded;
  {
    std::ifstream in(dir / "config.json");
    ordered_json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw EvolutionError(std::string("load_run: corrupt config.json: ") + e.what());
    }
    loaded.run.config = config_from_json(j.at("config"));
    loaded.run.dataset_name = j.at("dataset_name").get<std::string>();
    loaded.run.started = j.at("started").get<std::string>();
    loaded.run.finished = j.at("finished").get<std::string>();
  }

  if (fs::exists(dir / "candidates.jsonl")) {
    std::ifstream in(dir / "candidates.jsonl");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        loaded.run.candidates.push_back(candidate_from_json(ordered_json::parse(line)));
      } catch (const std::exception&) {
        if (in.peek() == EOF) {
          loaded.warnings.push_back("candidates.jsonl: dropped truncated line " +
                                    std::to_string(line_no));
        } else {
          throw EvolutionError("load_run: corrupt candidates.jsonl line " +
                               std::to_string(line_no));
        }
      }
    }
  }

  if (fs::exists(dir / "best.csv")) {
    std::ifstream in(dir / "best.csv");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line_no == 1 || line.find_first_not_of(" \t\r") == std::string::npos)
        continue;  // header
      BestPoint p;
      char comma1 = 0, comma2 = 0;
      std::istringstream row(line);
      if (row >> p.round >> comma1 >> p.best_fitness >> comma2 >> p.best_candidate_id &&
          comma1 == ',' && comma2 == ',') {
        loaded.run.best_trajectory.push_back(p);
      } else if (in.peek() == EOF) {
        loaded.warnings.push_back("best.csv: dropped truncated line " +
                                  std::to_string(line_no));
      } else {
        throw EvolutionError("load_run: corrupt best.csv line " + std::to_string(line_no));
      }
    }
  }
  return loaded;
}

bool runs_equal(const EvolutionRun& a, const EvolutionRun& b) {
  return a.config == b.config && a.dataset_name == b.dataset_name &&
         a.candidates == b.candidates && a.best_trajectory == b.best_trajectory;
}

// ---------------------------------------------------------------------------
// Main loop
// ---------------------------------------------------------------------------

EvolutionRun run_evolution(const EvolutionConfig& config, const Dataset& train,
                           MutationClient& client, const std::string& run_dir,
                           bool resume) {
  validate_config(config);

  std::error_code ec;
  fs::create_directories(run_dir, ec);
  {  // abort before round 0 if the run directory is unusable
    std::ofstream probe(fs::path(run_dir) / ".writable", std::ios::trunc);
    if (!probe) throw EvolutionError("run_dir '" + run_dir + "' is not writable");
  }
  fs::remove(fs::path(run_dir) / ".writable", ec);

  EvolutionRun run;
  run.config = config;
  run.dataset_name = train.name;
  run.started = utc_now();

  int resume_round = 0;  // first round to (re)play
  if (resume) {
    LoadedRun loaded = load_run(run_dir);
    if (!(loaded.run.config == config))
      throw EvolutionError("resume: config does not match the stored run");
    if (loaded.run.dataset_name != train.name)
      throw EvolutionError("resume: dataset does not match the stored run");
    run.started = loaded.run.started;
    // A round is complete once its best.csv row exists; anything beyond the
    // last complete round is replayed deterministically.
    int last_complete = -1;
    for (const auto& p : loaded.run.best_trajectory)
      last_complete = std::max(last_complete, p.round);
    resume_round = last_complete + 1;
    for (const auto& c : loaded.run.candidates)
      if (c.round <= last_complete) run.candidates.push_back(c);
    for (const auto& p : loaded.run.best_trajectory)
      if (p.round <= last_complete) run.best_trajectory.push_back(p);
  }

  write_run_meta(run, run_dir);
  if (!resume) {
    std::ofstream(fs::path(run_dir) / "candidates.jsonl", std::ios::trunc);
    std::ofstream best(fs::path(run_dir) / "best.csv", std::ios::trunc);
    best << "round,best_fitness,best_candidate_id\n";
  } else {
    // Rewrite both logs pruned to the kept prefix.
    std::ofstream cand(fs::path(run_dir) / "candidates.jsonl", std::ios::trunc);
    for (const auto& c : run.candidates) cand << candidate_to_json(c).dump() << '\n';
    std::ofstream best(fs::path(run_dir) / "best.csv", std::ios::trunc);
    best << "round,best_fitness,best_candidate_id\n";
    for (const auto& p : run.best_trajectory) best << best_csv_row(p) << '\n';
  }

  // Dedup index over canonical sources of every previously parsed candidate.
  std::set<std::string> seen_sources;
  for (const auto& c : run.candidates) {
    try {
      seen_sources.insert(dsl::canonicalize(c.source));
    } catch (const dsl::ParseError&) {
      // raw source of an unparseable proposal; nothing to index
    }
  }

  std::uint64_t next_id = 1;
  for (const auto& c : run.candidates) next_id = std::max(next_id, c.id + 1);

  double best_fitness = 0.0;
  std::uint64_t best_id = 0;
  bool have_best = false;
  for (const auto& p : run.best_trajectory) {
    best_fitness = p.best_fitness;
    best_id = p.best_candidate_id;
    have_best = true;
  }

  auto append_round = [&](std::span<const Candidate> fresh, int round) {
    std::ofstream cand(fs::path(run_dir) / "candidates.jsonl", std::ios::app);
    for (const auto& c : fresh) cand << candidate_to_json(c).dump() << '\n';
    cand.flush();
    for (const auto& c : fresh) {
      if (!c.failed() && (!have_best || *c.fitness > best_fitness)) {
        best_fitness = *c.fitness;
        best_id = c.id;
        have_best = true;
      }
    }
    BestPoint point{round, best_fitness, best_id};
    run.best_trajectory.push_back(point);
    std::ofstream best(fs::path(run_dir) / "best.csv", std::ios::app);
    best << best_csv_row(point) << '\n';
    best.flush();
  };

  if (resume_round == 0) {
    Candidate seed = evaluate_candidate(config.seed_source, train, config.fitness_metric);
    seed.id = next_id++;
    seed.round = 0;
    seed.proposer = "seed";
    if (seed.failed())
      throw EvolutionError("seed baseline '" + config.seed_source +
                           "' failed: " + seed.failure_reason);
    seen_sources.insert(seed.source);
    run.candidates.push_back(seed);
    append_round(std::span(run.candidates).last(1), 0);
    resume_round = 1;
  }

  for (int round = resume_round; round <= config.rounds; ++round) {
    std::vector<Candidate> fresh;

    std::mt19937_64 count_rng = make_rng(config.seed, static_cast<std::uint64_t>(round),
                                         kPurposeParentCount);
    int span = config.parents_per_prompt.max - config.parents_per_prompt.min + 1;
    int k = config.parents_per_prompt.min +
            static_cast<int>(count_rng() % static_cast<std::uint64_t>(span));

    std::mt19937_64 draw_rng = make_rng(config.seed, static_cast<std::uint64_t>(round),
                                        kPurposeParentDraw);
    std::vector<std::size_t> parent_idx =
        sample_parents(run.candidates, k, config.top_percent, config.t_cand_sampling,
                       draw_rng);
    std::vector<Candidate> parents;
    std::vector<std::uint64_t> parent_ids;
    for (std::size_t idx : parent_idx) {
      parents.push_back(run.candidates[idx]);
      parent_ids.push_back(run.candidates[idx].id);
    }

    PromptBundle bundle =
        build_prompt(config.task_description, parents, config.constraints);
    bundle.seed = derive_seed(config.seed, static_cast<std::uint64_t>(round),
                              kPurposeProposal);

    std::vector<std::string> sources;
    try {
      std::vector<std::string> responses =
          propose(client, bundle, config.candidates_per_round);
      for (const auto& text : responses)
        for (auto& s : extract_programs(text)) sources.push_back(std::move(s));
    } catch (const ClientError& e) {
      std::cerr << "round " << round << ": client failed (" << e.what()
                << "); recording empty round\n";
      sources.clear();
    }

    for (const auto& source : sources) {
      Candidate c;
      std::string canonical;
      bool parses = true;
      try {
        canonical = dsl::canonicalize(source);
      } catch (const dsl::ParseError&) {
        parses = false;
      }
      if (parses && config.dedup && seen_sources.count(canonical) > 0) {
        c.source = canonical;
        c.failure_reason = "duplicate candidate";
        try {
          c.complexity = dsl::complexity(dsl::Program{source, dsl::parse(source).ast});
        } catch (const dsl::ParseError&) {
        }
      } else {
        c = evaluate_candidate(source, train, config.fitness_metric);
        if (!c.failed()) seen_sources.insert(c.source);
      }
      c.id = next_id++;
      c.round = round;
      c.parent_ids = parent_ids;
      c.proposer = client.name();
      fresh.push_back(std::move(c));
    }

    const std::size_t n_fresh = fresh.size();
    for (auto& c : fresh) run.candidates.push_back(std::move(c));
    append_round(std::span(run.candidates).last(n_fresh), round);
  }

  run.finished = utc_now();
  write_run_meta(run, run_dir);
  return run;
}

}  // namespace uqevo
