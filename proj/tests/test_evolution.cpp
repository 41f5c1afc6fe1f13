#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "uqevo/evolution.hpp"
#include "uqevo/metrics.hpp"
#include "uqevo/rng.hpp"

using namespace uqevo;
namespace fs = std::filesystem;

namespace {

Candidate pool_entry(std::uint64_t id, double fitness) {
  Candidate c;
  c.id = id;
  c.source = "-sum(lp) + " + std::to_string(id);
  c.fitness = fitness;
  c.round = static_cast<int>(id);
  return c;
}

Dataset small_planted(int n, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_samples = n;
  cfg.min_len = 4;
  cfg.max_len = 12;
  cfg.planted_weights = {{"mean_logprob", 3.0}};
  cfg.noise = 0.3;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("sample_parents symmetry and analytic softmax") {
  std::vector<Candidate> pool = {pool_entry(1, 0.5), pool_entry(2, 0.5)};

  SUBCASE("equal fitness splits 50/50") {
    std::mt19937_64 rng(51);
    int first_count = 0;
    const int trials = 100000;
    for (int t = 0; t < trials; ++t) {
      auto picked = sample_parents(pool, 1, 100.0, 1.0, rng);
      first_count += picked[0] == 0 ? 1 : 0;
    }
    double freq = static_cast<double>(first_count) / trials;
    double sigma = std::sqrt(0.25 / trials);
    CHECK(std::abs(freq - 0.5) < 3.0 * sigma);
  }

  SUBCASE("fitness {0, ln 2} at t=1 gives (1/3, 2/3)") {
    std::vector<Candidate> skew = {pool_entry(1, 0.0), pool_entry(2, std::log(2.0))};
    std::mt19937_64 rng(52);
    int second = 0;
    const int trials = 100000;
    for (int t = 0; t < trials; ++t) {
      auto picked = sample_parents(skew, 1, 100.0, 1.0, rng);
      second += picked[0] == 1 ? 1 : 0;
    }
    double freq = static_cast<double>(second) / trials;
    double sigma = std::sqrt(2.0 / 9.0 / trials);
    CHECK(std::abs(freq - 2.0 / 3.0) < 3.0 * sigma);
  }

  SUBCASE("t -> 0 selects the argmax") {
    std::vector<Candidate> skew = {pool_entry(1, 0.51), pool_entry(2, 0.52),
                                   pool_entry(3, 0.9)};
    std::mt19937_64 rng(53);
    for (int t = 0; t < 1000; ++t) {
      auto picked = sample_parents(skew, 1, 100.0, 1e-9, rng);
      CHECK(picked[0] == 2);
    }
  }
}

TEST_CASE("sample_parents respects preselection, validity, and pool size") {
  std::vector<Candidate> pool = {pool_entry(1, 0.9), pool_entry(2, 0.8),
                                 pool_entry(3, 0.2), pool_entry(4, 0.1)};
  Candidate failed;
  failed.id = 5;
  failed.source = "mean(lp";
  failed.failure_reason = "syntax error";
  failed.fitness.reset();
  pool.push_back(failed);

  std::mt19937_64 rng(54);
  for (int t = 0; t < 500; ++t) {
    auto picked = sample_parents(pool, 2, 50.0, 1.0, rng);
    for (auto idx : picked) CHECK(idx <= 1);  // only the top half survives
  }
  for (int t = 0; t < 500; ++t) {
    auto picked = sample_parents(pool, 2, 100.0, 1.0, rng);
    CHECK(picked.size() == 2);
    CHECK(picked[0] != picked[1]);  // without replacement
    for (auto idx : picked) CHECK(idx != 4);  // never the failed one
  }
  auto all = sample_parents(pool, 10, 100.0, 1.0, rng);
  CHECK(all.size() == 4);  // fewer survivors than requested: return all

  std::vector<Candidate> only_failed = {failed};
  CHECK_THROWS_AS(sample_parents(only_failed, 1, 100.0, 1.0, rng), EvolutionError);
}

TEST_CASE("empirical softmax frequencies pass chi-square goodness of fit") {
  std::vector<Candidate> pool;
  std::vector<double> fitness = {0.52, 0.61, 0.64, 0.71, 0.83};
  for (std::size_t i = 0; i < fitness.size(); ++i)
    pool.push_back(pool_entry(i + 1, fitness[i]));

  // 99th percentile of chi-square with 4 degrees of freedom.
  const double critical = 13.2767;
  const int trials = 100000;
  for (double t : {0.25, 1.0, 4.0}) {
    std::vector<int> counts(5, 0);
    std::mt19937_64 rng(55);
    for (int i = 0; i < trials; ++i) {
      auto picked = sample_parents(pool, 1, 100.0, t, rng);
      counts[picked[0]]++;
    }
    double norm = 0.0;
    std::vector<double> expected(5);
    for (std::size_t i = 0; i < 5; ++i) {
      expected[i] = std::exp(fitness[i] / t);
      norm += expected[i];
    }
    double chi2 = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      double e = trials * expected[i] / norm;
      chi2 += (counts[i] - e) * (counts[i] - e) / e;
    }
    CAPTURE(t);
    CHECK(chi2 < critical);
  }
}

TEST_CASE("build_prompt is deterministic and embeds parents verbatim") {
  std::vector<Candidate> parents = {pool_entry(1, 0.8123401)};
  parents[0].source = "-sum(lp)";

  PromptBundle a = build_prompt("", parents, {});
  CHECK(a.text.find("-sum(lp)") != std::string::npos);
  CHECK(a.text.find("0.8123") != std::string::npos);
  CHECK(a.parent_sources == std::vector<std::string>{"-sum(lp)"});
  // exactly one fenced block per parent (fences come in pairs)
  std::size_t fences = 0, at = 0;
  while ((at = a.text.find("```", at)) != std::string::npos) {
    ++fences;
    at += 3;
  }
  CHECK(fences == 2);

  std::vector<std::string> constraints = {"Use up to 3 features."};
  PromptBundle b = build_prompt("", parents, constraints);
  CHECK(b.text.find("Use up to 3 features.") != std::string::npos);

  PromptBundle c = build_prompt("", parents, constraints);
  CHECK(b.text == c.text);
}

TEST_CASE("extract_programs") {
  std::string two = "Intro\n```\n-sum(lp)\n```\nmiddle\n```python\nmean(ent)\n```\n";
  auto blocks = extract_programs(two);
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0] == "-sum(lp)");
  CHECK(blocks[1] == "mean(ent)");

  CHECK(extract_programs("-sum(lp)") == std::vector<std::string>{"-sum(lp)"});
  CHECK(extract_programs("```\n   \n```").empty());
  CHECK(extract_programs("   \n").empty());
}

TEST_CASE("evaluate_candidate outcomes") {
  Dataset d = small_planted(80, 61);

  Candidate ok = evaluate_candidate("-sum(lp)", d, FitnessMetric::roc_auc);
  CHECK_FALSE(ok.failed());
  std::vector<double> scores, quality;
  for (const auto& s : d.samples) {
    double sum = 0;
    for (double lp : s.logprobs) sum += lp;
    scores.push_back(-sum);
    quality.push_back(s.quality);
  }
  CHECK(*ok.fitness == roc_auc(scores, quality));
  CHECK(ok.complexity.ast_nodes == 3);

  Candidate syntax = evaluate_candidate("mean(lp", d, FitnessMetric::roc_auc);
  CHECK(syntax.failed());
  CHECK(syntax.failure_reason.find("syntax error") != std::string::npos);

  Candidate channel = evaluate_candidate("sum(ch(\"missing\"))", d, FitnessMetric::roc_auc);
  CHECK(channel.failed());
  CHECK(channel.failure_reason.find("unknown channel") != std::string::npos);

  Candidate constant = evaluate_candidate("1 + n - n", d, FitnessMetric::roc_auc);
  CHECK_FALSE(constant.failed());
  CHECK(*constant.fitness == 0.5);
}

TEST_CASE("prr fitness drives candidates and the loop on continuous data") {
  SyntheticConfig cfg;
  cfg.n_samples = 80;
  cfg.min_len = 4;
  cfg.max_len = 12;
  cfg.planted_weights = {{"mean_logprob", 3.0}};
  cfg.noise = 0.3;
  cfg.task = Task::continuous;
  cfg.seed = 71;
  Dataset d = generate_synthetic(cfg);

  Candidate c = evaluate_candidate("-sum(lp)", d, FitnessMetric::prr);
  REQUIRE_FALSE(c.failed());
  std::vector<double> scores, quality;
  for (const auto& s : d.samples) {
    double sum = 0;
    for (double lp : s.logprobs) sum += lp;
    scores.push_back(-sum);
    quality.push_back(s.quality);
  }
  CHECK(*c.fitness == prr(scores, quality));

  EvolutionConfig config;
  config.rounds = 6;
  config.fitness_metric = FitnessMetric::prr;
  config.seed = 3;
  MockMutationClient client;
  auto dir = testsup::fresh_dir("prr_run");
  EvolutionRun run = run_evolution(config, d, client, dir.string());
  CHECK(run.best_trajectory.size() == 7);
  for (std::size_t i = 1; i < run.best_trajectory.size(); ++i)
    CHECK(run.best_trajectory[i].best_fitness >= run.best_trajectory[i - 1].best_fitness);
}

TEST_CASE("mock client is deterministic and yields valid fenced programs") {
  PromptBundle bundle;
  bundle.text = "ignored";
  bundle.parent_sources = {"-sum(lp)"};
  bundle.seed = 7;
  MockMutationClient client;
  std::string r1 = client.propose_one(bundle, 0);
  std::string r2 = client.propose_one(bundle, 0);
  CHECK(r1 == r2);
  auto programs = extract_programs(r1);
  REQUIRE(!programs.empty());
  CHECK_NOTHROW(dsl::parse(programs[0]));
  CHECK(client.propose_one(bundle, 1) != r1);
}

TEST_CASE("zero-round run contains exactly the seed") {
  Dataset d = small_planted(60, 62);
  EvolutionConfig cfg;
  cfg.rounds = 0;
  cfg.seed = 1;
  MockMutationClient client;
  auto dir = testsup::fresh_dir("run0");
  EvolutionRun run = run_evolution(cfg, d, client, dir.string());
  CHECK(run.candidates.size() == 1);
  CHECK(run.candidates[0].round == 0);
  CHECK(run.candidates[0].proposer == "seed");
  CHECK(run.candidates[0].source == "-sum(lp)");
  CHECK(run.best_trajectory.size() == 1);
  CHECK(run.best_trajectory[0].best_candidate_id == run.candidates[0].id);
}

TEST_CASE("runs are reproducible, logged, monotone, and deduplicated") {
  Dataset d = small_planted(80, 63);
  EvolutionConfig cfg;
  cfg.rounds = 15;
  cfg.candidates_per_round = 2;
  cfg.seed = 99;
  cfg.t_cand_sampling = 0.05;

  MockMutationClient c1, c2;
  auto dir1 = testsup::fresh_dir("runA");
  auto dir2 = testsup::fresh_dir("runB");
  EvolutionRun a = run_evolution(cfg, d, c1, dir1.string());
  EvolutionRun b = run_evolution(cfg, d, c2, dir2.string());
  CHECK(runs_equal(a, b));

  // Best-so-far is non-decreasing and one point per round exists.
  CHECK(a.best_trajectory.size() == 16);
  for (std::size_t i = 1; i < a.best_trajectory.size(); ++i)
    CHECK(a.best_trajectory[i].best_fitness >= a.best_trajectory[i - 1].best_fitness);

  // Parents reference earlier candidates.
  std::set<std::uint64_t> seen;
  for (const auto& c : a.candidates) {
    for (auto pid : c.parent_ids) CHECK(seen.count(pid) == 1);
    seen.insert(c.id);
  }

  // Dedup: canonical sources unique among non-failed candidates.
  std::set<std::string> sources;
  for (const auto& c : a.candidates) {
    if (c.failed()) continue;
    CHECK(sources.insert(c.source).second);
  }

  // The candidate log has one line per candidate.
  std::ifstream log(dir1 / "candidates.jsonl");
  std::size_t lines = 0;
  std::string line;
  while (std::getline(log, line))
    if (!line.empty()) ++lines;
  CHECK(lines == a.candidates.size());
}

TEST_CASE("persist/load roundtrip and error paths") {
  Dataset d = small_planted(60, 64);
  EvolutionConfig cfg;
  cfg.rounds = 6;
  cfg.seed = 5;
  MockMutationClient client;
  auto dir = testsup::fresh_dir("persist");
  EvolutionRun run = run_evolution(cfg, d, client, dir.string());

  auto copy_dir = testsup::fresh_dir("persist_copy");
  persist_run(run, copy_dir.string());
  LoadedRun loaded = load_run(copy_dir.string());
  CHECK(loaded.warnings.empty());
  CHECK(runs_equal(loaded.run, run));
  CHECK(loaded.run.started == run.started);

  SUBCASE("truncated final candidate line is dropped with a warning") {
    std::ofstream app(copy_dir / "candidates.jsonl", std::ios::app);
    app << R"({"id": 999, "round")";  // cut mid-key
    app.close();
    LoadedRun salvaged = load_run(copy_dir.string());
    REQUIRE(salvaged.warnings.size() == 1);
    CHECK(salvaged.warnings[0].find("truncated") != std::string::npos);
    CHECK(salvaged.run.candidates.size() == run.candidates.size());
  }

  SUBCASE("missing config.json") {
    auto empty = testsup::fresh_dir("empty_run");
    CHECK_THROWS_WITH_AS(load_run(empty.string()), doctest::Contains("config.json"),
                         EvolutionError);
  }
}

TEST_CASE("resume reproduces the uninterrupted run bit-exactly") {
  Dataset d = small_planted(70, 65);
  EvolutionConfig cfg;
  cfg.rounds = 12;
  cfg.seed = 77;
  MockMutationClient client;

  auto full_dir = testsup::fresh_dir("full");
  EvolutionRun full = run_evolution(cfg, d, client, full_dir.string());

  // Simulate a crash: keep config plus logs truncated after round 5, with a
  // partial round-6 flush (candidates written, best.csv row missing).
  auto crash_dir = testsup::fresh_dir("crash");
  fs::copy(full_dir / "config.json", crash_dir / "config.json");
  {
    LoadedRun loaded = load_run(full_dir.string());
    std::size_t keep = 0;
    for (const auto& c : loaded.run.candidates)
      if (c.round <= 6) ++keep;
    // Candidates are logged in round order, so the kept set is a line prefix.
    std::ifstream in(full_dir / "candidates.jsonl");
    std::ofstream cand(crash_dir / "candidates.jsonl");
    std::string prefix_line;
    for (std::size_t i = 0; i < keep && std::getline(in, prefix_line); ++i)
      cand << prefix_line << '\n';
    std::ofstream best(crash_dir / "best.csv");
    best << "round,best_fitness,best_candidate_id\n";
    std::ifstream full_best(full_dir / "best.csv");
    std::string line;
    std::getline(full_best, line);  // header
    while (std::getline(full_best, line)) {
      int round = std::stoi(line.substr(0, line.find(',')));
      if (round <= 5) best << line << '\n';
    }
  }

  MockMutationClient resume_client;
  EvolutionRun resumed = run_evolution(cfg, d, resume_client, crash_dir.string(), true);
  CHECK(runs_equal(resumed, full));

  SUBCASE("resume rejects a mismatched config") {
    EvolutionConfig other = cfg;
    other.t_cand_sampling = 0.5;
    MockMutationClient c;
    CHECK_THROWS_WITH_AS(run_evolution(other, d, c, crash_dir.string(), true),
                         doctest::Contains("config"), EvolutionError);
  }
}

TEST_CASE("substream derivation is stable across calls") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
}
