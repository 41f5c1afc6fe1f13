#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uqevo/feature_store.hpp"

namespace uqevo {

class EstimatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// All estimators return UNCERTAINTY: higher means the generation is more
// likely incorrect.

// -sum(logprob). Always >= 0.
double seq_log_prob_uncertainty(const SequenceSample& s);

// exp(-mean(logprob)). Always >= 1.
double perplexity_uncertainty(const SequenceSample& s);

// mean(entropy).
double mean_token_entropy(const SequenceSample& s);

// Normalized geometric position weights w_i ~ gamma^(n-1-i); sum to 1 and
// are non-decreasing in position for gamma <= 1. gamma in (0, 1].
std::vector<double> exp_weights(std::size_t n, double gamma);

// -sum_i w_i * logprob_i with the weights above. gamma = 1 reduces to
// -mean(logprob).
double exp_weighted_logprob(const SequenceSample& s, double gamma);

// -pearson(logprobs, positions 0..n-1). Declining logprobs score near +1.
// Degenerate inputs (n < 2 or zero logprob variance) return 0.
double position_logprob_correlation(const SequenceSample& s);

struct FeatureVector {
  std::vector<std::pair<std::string, double>> values;

  std::size_t size() const { return values.size(); }
  double at(const std::string& name) const;  // throws EstimatorError
  std::vector<double> numbers() const;
  std::vector<std::string> names() const;
};

// Version of the sequence-level feature catalog. Linear weights are only
// meaningful against the catalog version they were fit on, so persisted
// estimators record it.
inline constexpr int kFeatureCatalogVersion = 1;

// Stable order and names of the catalog; extract_features emits exactly
// these, in this order, for every sample.
const std::vector<std::string>& feature_catalog_names();
bool is_catalog_feature(const std::string& name);

FeatureVector extract_features(const SequenceSample& s);

double linear_estimate(const SequenceSample& s, std::span<const double> weights,
                       double bias, std::span<const std::string> feature_names);

enum class EstimatorKind {
  seq_log_prob,
  perplexity,
  mean_token_entropy,
  exp_weighted,
  pos_corr,
  linear,
  product_composite,
  dsl_program,
};

std::string to_string(EstimatorKind k);
EstimatorKind estimator_kind_from_string(const std::string& s);

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::seq_log_prob;

  // exp_weighted
  double gamma = 0.8;

  // linear
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<std::string> feature_names;

  // product_composite: exactly two factors
  std::vector<EstimatorSpec> factors;

  // dsl_program: canonical source
  std::string dsl_source;

  int catalog_version = kFeatureCatalogVersion;

  bool operator==(const EstimatorSpec&) const = default;
};

// Validates kind-specific invariants (gamma range, weight/name arity, factor
// count); throws EstimatorError.
void validate_spec(const EstimatorSpec& spec);

double estimate(const EstimatorSpec& spec, const SequenceSample& s);

// JSON form {"kind": str, "params": {...}, "catalog_version": int};
// bit-exact roundtrip.
std::string spec_to_json(const EstimatorSpec& spec);
EstimatorSpec spec_from_json(const std::string& text);

}  // namespace uqevo
