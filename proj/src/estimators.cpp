#include "uqevo/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "uqevo/dsl.hpp"

namespace uqevo {

using ordered_json = nlohmann::ordered_json;

namespace {

double sum_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

double mean_of(std::span<const double> xs) {
  return sum_of(xs) / static_cast<double>(xs.size());
}

// Population standard deviation; 0 for a single element.
double std_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

}  // namespace

double seq_log_prob_uncertainty(const SequenceSample& s) {
  return -sum_of(s.logprobs);
}

double perplexity_uncertainty(const SequenceSample& s) {
  double m = sum_of(s.logprobs) / static_cast<double>(s.size());
  return std::exp(-m);
}

double mean_token_entropy(const SequenceSample& s) {
  return mean_of(s.entropies);
}

std::vector<double> exp_weights(std::size_t n, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw EstimatorError("exp_weighted gamma must be in (0,1]");
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::pow(gamma, static_cast<double>(n - 1 - i));
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

double exp_weighted_logprob(const SequenceSample& s, double gamma) {
  std::vector<double> w = exp_weights(s.size(), gamma);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += w[i] * s.logprobs[i];
  return -acc;
}

double position_logprob_correlation(const SequenceSample& s) {
  const std::size_t n = s.size();
  if (n < 2) return 0.0;
  double mean_lp = mean_of(s.logprobs);
  double mean_pos = static_cast<double>(n - 1) / 2.0;
  double cov = 0.0, var_lp = 0.0, var_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dl = s.logprobs[i] - mean_lp;
    double dp = static_cast<double>(i) - mean_pos;
    cov += dl * dp;
    var_lp += dl * dl;
    var_pos += dp * dp;
  }
  if (var_lp == 0.0 || var_pos == 0.0) return 0.0;
  return -(cov / std::sqrt(var_lp * var_pos));
}

double FeatureVector::at(const std::string& name) const {
  for (const auto& [n, v] : values)
    if (n == name) return v;
  throw EstimatorError("unknown feature '" + name + "'");
}

std::vector<double> FeatureVector::numbers() const {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& [_, v] : values) out.push_back(v);
  return out;
}

std::vector<std::string> FeatureVector::names() const {
  std::vector<std::string> out;
  out.reserve(values.size());
  for (const auto& [n, _] : values) out.push_back(n);
  return out;
}

const std::vector<std::string>& feature_catalog_names() {
  // Frozen for catalog version 1; append-only across future versions.
  static const std::vector<std::string> names = {
      "mean_logprob",
      "min_logprob",
      "max_logprob",
      "std_logprob",
      "first_logprob",
      "last_logprob",
      "sum_logprob",
      "mean_entropy",
      "max_entropy",
      "length",
      "exp_weighted_logprob_g50",
      "exp_weighted_logprob_g80",
      "pos_corr",
      "frac_lp_below_neg2",
      "perplexity",
  };
  return names;
}

bool is_catalog_feature(const std::string& name) {
  const auto& names = feature_catalog_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

FeatureVector extract_features(const SequenceSample& s) {
  const auto lp = std::span<const double>(s.logprobs);
  double below = 0.0;
  for (double x : lp)
    if (x < -2.0) below += 1.0;

  FeatureVector f;
  f.values = {
      {"mean_logprob", mean_of(lp)},
      {"min_logprob", *std::min_element(lp.begin(), lp.end())},
      {"max_logprob", *std::max_element(lp.begin(), lp.end())},
      {"std_logprob", std_of(lp)},
      {"first_logprob", lp.front()},
      {"last_logprob", lp.back()},
      {"sum_logprob", sum_of(lp)},
      {"mean_entropy", mean_of(s.entropies)},
      {"max_entropy", *std::max_element(s.entropies.begin(), s.entropies.end())},
      {"length", static_cast<double>(s.size())},
      {"exp_weighted_logprob_g50", exp_weighted_logprob(s, 0.5)},
      {"exp_weighted_logprob_g80", exp_weighted_logprob(s, 0.8)},
      {"pos_corr", position_logprob_correlation(s)},
      {"frac_lp_below_neg2", below / static_cast<double>(s.size())},
      {"perplexity", perplexity_uncertainty(s)},
  };
  return f;
}

double linear_estimate(const SequenceSample& s, std::span<const double> weights,
                       double bias, std::span<const std::string> feature_names) {
  if (weights.size() != feature_names.size())
    throw EstimatorError("weights and feature_names differ in length");
  FeatureVector f = extract_features(s);
  double acc = bias;
  for (std::size_t i = 0; i < weights.size(); ++i)
    acc += weights[i] * f.at(feature_names[i]);
  return acc;
}

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::seq_log_prob: return "seq_log_prob";
    case EstimatorKind::perplexity: return "perplexity";
    case EstimatorKind::mean_token_entropy: return "mean_token_entropy";
    case EstimatorKind::exp_weighted: return "exp_weighted";
    case EstimatorKind::pos_corr: return "pos_corr";
    case EstimatorKind::linear: return "linear";
    case EstimatorKind::product_composite: return "product_composite";
    case EstimatorKind::dsl_program: return "dsl_program";
  }
  throw EstimatorError("bad estimator kind");
}

EstimatorKind estimator_kind_from_string(const std::string& s) {
  for (EstimatorKind k :
       {EstimatorKind::seq_log_prob, EstimatorKind::perplexity,
        EstimatorKind::mean_token_entropy, EstimatorKind::exp_weighted,
        EstimatorKind::pos_corr, EstimatorKind::linear,
        EstimatorKind::product_composite, EstimatorKind::dsl_program}) {
    if (to_string(k) == s) return k;
  }
  throw EstimatorError("unknown estimator kind '" + s + "'");
}

void validate_spec(const EstimatorSpec& spec) {
  switch (spec.kind) {
    case EstimatorKind::exp_weighted:
      if (!(spec.gamma > 0.0 && spec.gamma <= 1.0))
        throw EstimatorError("exp_weighted gamma must be in (0,1]");
      break;
    case EstimatorKind::linear: {
      if (spec.weights.size() != spec.feature_names.size())
        throw EstimatorError("linear weights/feature_names length mismatch");
      for (const auto& name : spec.feature_names)
        if (!is_catalog_feature(name))
          throw EstimatorError("unknown feature '" + name + "'");
      break;
    }
    case EstimatorKind::product_composite:
      if (spec.factors.size() != 2)
        throw EstimatorError("product_composite needs exactly two factors");
      validate_spec(spec.factors[0]);
      validate_spec(spec.factors[1]);
      break;
    case EstimatorKind::dsl_program:
      dsl::parse(spec.dsl_source);  // throws on bad source
      break;
    default:
      break;
  }
}

double estimate(const EstimatorSpec& spec, const SequenceSample& s) {
  switch (spec.kind) {
    case EstimatorKind::seq_log_prob: return seq_log_prob_uncertainty(s);
    case EstimatorKind::perplexity: return perplexity_uncertainty(s);
    case EstimatorKind::mean_token_entropy: return mean_token_entropy(s);
    case EstimatorKind::exp_weighted: return exp_weighted_logprob(s, spec.gamma);
    case EstimatorKind::pos_corr: return position_logprob_correlation(s);
    case EstimatorKind::linear:
      return linear_estimate(s, spec.weights, spec.bias, spec.feature_names);
    case EstimatorKind::product_composite:
      if (spec.factors.size() != 2)
        throw EstimatorError("product_composite needs exactly two factors");
      return estimate(spec.factors[0], s) * estimate(spec.factors[1], s);
    case EstimatorKind::dsl_program:
      return dsl::evaluate(dsl::parse(spec.dsl_source), s);
  }
  throw EstimatorError("bad estimator kind");
}

namespace {

ordered_json spec_params_json(const EstimatorSpec& spec);

ordered_json spec_json(const EstimatorSpec& spec) {
  ordered_json j;
  j["kind"] = to_string(spec.kind);
  j["params"] = spec_params_json(spec);
  j["catalog_version"] = spec.catalog_version;
  return j;
}

ordered_json spec_params_json(const EstimatorSpec& spec) {
  ordered_json p = ordered_json::object();
  switch (spec.kind) {
    case EstimatorKind::exp_weighted:
      p["gamma"] = spec.gamma;
      break;
    case EstimatorKind::linear:
      p["weights"] = spec.weights;
      p["bias"] = spec.bias;
      p["feature_names"] = spec.feature_names;
      break;
    case EstimatorKind::product_composite:
      p["a"] = spec_json(spec.factors.at(0));
      p["b"] = spec_json(spec.factors.at(1));
      break;
    case EstimatorKind::dsl_program:
      p["source"] = spec.dsl_source;
      break;
    default:
      break;
  }
  return p;
}

EstimatorSpec spec_from(const ordered_json& j) {
  EstimatorSpec spec;
  spec.kind = estimator_kind_from_string(j.at("kind").get<std::string>());
  spec.catalog_version = j.at("catalog_version").get<int>();
  const auto& p = j.at("params");
  switch (spec.kind) {
    case EstimatorKind::exp_weighted:
      spec.gamma = p.at("gamma").get<double>();
      break;
    case EstimatorKind::linear:
      spec.weights = p.at("weights").get<std::vector<double>>();
      spec.bias = p.at("bias").get<double>();
      spec.feature_names = p.at("feature_names").get<std::vector<std::string>>();
      break;
    case EstimatorKind::product_composite:
      spec.factors.push_back(spec_from(p.at("a")));
      spec.factors.push_back(spec_from(p.at("b")));
      break;
    case EstimatorKind::dsl_program:
      spec.dsl_source = p.at("source").get<std::string>();
      break;
    default:
      break;
  }
  return spec;
}

}  // namespace

std::string spec_to_json(const EstimatorSpec& spec) {
  return spec_json(spec).dump();
}

EstimatorSpec spec_from_json(const std::string& text) {
  try {
    return spec_from(ordered_json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw EstimatorError(std::string("bad estimator spec JSON: ") + e.what());
  }
}

}  // namespace uqevo
