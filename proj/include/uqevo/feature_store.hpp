#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace uqevo {

enum class Task { binary, continuous };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One per-token feature record as it appears in the JSONL schema. In-memory
// datasets store tokens column-wise (see SequenceSample); this struct is the
// row view used at the ingestion boundary.
struct TokenFeatures {
  double logprob = 0.0;                    // nats, <= 0, finite
  double entropy = 0.0;                    // nats, >= 0, finite
  std::map<std::string, double> channels;  // optional extra signals, finite
};

// One model generation: per-token signals plus a ground-truth quality value.
// Token columns all have the same length n >= 1.
struct SequenceSample {
  std::string id;
  std::vector<double> logprobs;
  std::vector<double> entropies;
  std::map<std::string, std::vector<double>> channels;
  double quality = 0.0;  // binary tasks: exactly 0 or 1; continuous: [0, 1]
  std::map<std::string, std::string> meta;

  std::size_t size() const { return logprobs.size(); }
  TokenFeatures token(std::size_t i) const;
  void push_token(const TokenFeatures& t);

  bool operator==(const SequenceSample&) const = default;
};

struct Dataset {
  std::string name;
  Task task = Task::binary;
  std::vector<SequenceSample> samples;
  // Channels available at every token of every sample; candidate programs may
  // reference exactly these.
  std::set<std::string> required_channels;

  std::size_t size() const { return samples.size(); }
  double mean_quality() const;

  bool operator==(const Dataset&) const = default;
};

// Throws DatasetError on any schema violation; messages carry the 1-based
// line number for per-line problems.
Dataset load_dataset(const std::string& path, Task expected_task);
Dataset parse_jsonl(std::istream& in, std::string name, Task expected_task);

void write_dataset(const Dataset& d, const std::string& path);
void write_jsonl(const Dataset& d, std::ostream& out);

// Validates the full set of Dataset invariants; throws DatasetError.
void validate_dataset(const Dataset& d);

struct SyntheticConfig {
  int n_samples = 0;
  int min_len = 1;
  int max_len = 1;
  // Keys must name feature-catalog entries (see estimators.hpp).
  std::map<std::string, double> planted_weights;
  double noise = 0.0;  // stddev of the label-noise term
  Task task = Task::binary;
  std::uint64_t seed = 0;
};

// Samples token streams with a length-dependent logprob distribution and
// plants quality = Bernoulli(sigmoid(w . f(sample) + eps)) (binary) or
// sigmoid(w . f(sample) + eps) clamped to [0, 1] (continuous), so the
// planted scorer -w . f(sample) is a known near-optimal uncertainty oracle.
Dataset generate_synthetic(const SyntheticConfig& cfg);

// Deterministic stratified split (per-class shuffle for binary tasks).
// Sample order within each split follows the input dataset order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d,
                                          double train_fraction,
                                          std::uint64_t seed);

}  // namespace uqevo
