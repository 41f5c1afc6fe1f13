#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uqevo/dsl.hpp"
#include "uqevo/feature_store.hpp"

namespace uqevo {

enum class FitnessMetric { roc_auc, prr };

std::string to_string(FitnessMetric m);
FitnessMetric fitness_metric_from_string(const std::string& s);

class EvolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ClientError : public std::runtime_error {
 public:
  ClientError(const std::string& message, int attempts_made)
      : std::runtime_error(message), attempts(attempts_made) {}
  int attempts;
};

struct Candidate {
  std::uint64_t id = 0;
  std::string source;  // canonical for parsed candidates, raw otherwise
  std::optional<dsl::Program> program;  // absent when parsing failed
  std::optional<double> fitness;        // absent for failed candidates
  std::string failure_reason;           // non-empty iff failed
  std::vector<std::uint64_t> parent_ids;
  int round = 0;  // 0 is reserved for the seed baseline
  dsl::ComplexityReport complexity;
  std::string proposer;

  bool failed() const { return !fitness.has_value(); }
  bool operator==(const Candidate&) const = default;
};

// Number of parents shown per prompt, drawn uniformly in [min, max] each
// round; min == max pins it.
struct ParentRange {
  int min = 1;
  int max = 4;

  bool operator==(const ParentRange&) const = default;
};

struct EvolutionConfig {
  int rounds = 500;
  int candidates_per_round = 2;
  ParentRange parents_per_prompt;
  double top_percent = 100.0;     // preselection: top p% by fitness
  double t_cand_sampling = 0.1;   // softmax temperature over fitness
  double llm_temperature = 1.0;   // sampling temperature of the proposer LLM
  FitnessMetric fitness_metric = FitnessMetric::roc_auc;
  std::uint64_t seed = 0;
  bool dedup = true;  // reject exact canonical duplicates
  std::string seed_source = "-sum(lp)";
  std::string task_description;          // empty -> built-in default
  std::vector<std::string> constraints;  // free-form prompt constraint lines

  bool operator==(const EvolutionConfig&) const = default;
};

struct BestPoint {
  int round = 0;
  double best_fitness = 0.0;
  std::uint64_t best_candidate_id = 0;

  bool operator==(const BestPoint&) const = default;
};

struct EvolutionRun {
  EvolutionConfig config;
  std::vector<Candidate> candidates;      // append-only, ordered by (round, id)
  std::vector<BestPoint> best_trajectory; // one point per round, non-decreasing
  std::string dataset_name;
  std::string started;   // ISO-8601 UTC
  std::string finished;
};

// Restrict to the ceil(top_percent/100 * |valid|) highest-fitness non-failed
// candidates, then draw k without replacement with probability proportional
// to exp(fitness / t), renormalizing after each draw. Returns indices into
// `pool`; returns all survivors when fewer than k remain.
std::vector<std::size_t> sample_parents(std::span<const Candidate> pool, int k,
                                        double top_percent, double t,
                                        std::mt19937_64& rng);

struct PromptBundle {
  std::string text;
  std::vector<std::string> parent_sources;  // sidecar for offline mutators
  std::uint64_t seed = 0;                   // substream for offline mutators
};

PromptBundle build_prompt(const std::string& task_description,
                          std::span<const Candidate> parents,
                          std::span<const std::string> constraints);

// Contents of fenced code blocks, in order; without fences the whole trimmed
// message is the single candidate. Empty results are dropped.
std::vector<std::string> extract_programs(const std::string& llm_text);

class MutationClient {
 public:
  virtual ~MutationClient() = default;
  virtual std::string name() const = 0;
  // One response text per proposal. May throw ClientError.
  virtual std::string propose_one(const PromptBundle& prompt, int proposal_index) = 0;
};

// k response texts from the client, one request per proposal.
std::vector<std::string> propose(MutationClient& client, const PromptBundle& prompt,
                                 int k);

// Offline proposer: ignores the prompt text and mutates the parent sources
// carried in the bundle sidecar. Deterministic per bundle seed.
class MockMutationClient : public MutationClient {
 public:
  explicit MockMutationClient(dsl::GenOptions gen_opts = {})
      : gen_opts_(std::move(gen_opts)) {}
  std::string name() const override { return "mock"; }
  std::string propose_one(const PromptBundle& prompt, int proposal_index) override;

 private:
  dsl::GenOptions gen_opts_;
};

struct HttpClientConfig {
  std::string endpoint_url;  // e.g. https://api.example.com/v1/chat/completions
  std::string model;
  double temperature = 1.0;
  int max_tokens = 2048;
  int max_retries = 3;      // retries after the first attempt
  int timeout_ms = 60000;
  int backoff_base_ms = 500;
  std::string api_key_env;  // name of the env var holding the key; may be empty
};

// Chat-completion client: {"model", "messages": [{"role", "content"}],
// "temperature", "max_tokens"} -> first choice's message content. Retries
// transport errors and 408/429/5xx with exponential backoff.
class HttpMutationClient : public MutationClient {
 public:
  explicit HttpMutationClient(HttpClientConfig config);
  std::string name() const override;
  std::string propose_one(const PromptBundle& prompt, int proposal_index) override;

 private:
  HttpClientConfig config_;
  std::string api_key_;
};

// Parse -> type-check -> evaluate on every training sample -> metric.
// Failures (syntax, unknown channel, degenerate metric) become failed
// candidates with a reason, never exceptions.
Candidate evaluate_candidate(const std::string& source, const Dataset& train,
                             FitnessMetric metric);

// The main loop. Round 0 evaluates the seed baseline; each later round
// samples parents, prompts the client, extracts, optionally dedups, and
// evaluates. The candidate log under run_dir is flushed per round so an
// interrupted run can resume. With resume = true an existing log is loaded
// and the highest (possibly partial) round is replayed.
EvolutionRun run_evolution(const EvolutionConfig& config, const Dataset& train,
                           MutationClient& client, const std::string& run_dir,
                           bool resume = false);

// run_dir contains config.json, candidates.jsonl (one candidate per line,
// append-only) and best.csv.
void persist_run(const EvolutionRun& run, const std::string& run_dir);

struct LoadedRun {
  EvolutionRun run;
  std::vector<std::string> warnings;  // e.g. dropped truncated final line
};

LoadedRun load_run(const std::string& run_dir);

// Equality over everything except timestamps.
bool runs_equal(const EvolutionRun& a, const EvolutionRun& b);

}  // namespace uqevo
