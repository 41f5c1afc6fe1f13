#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uqevo/estimators.hpp"
#include "uqevo/feature_store.hpp"
#include "uqevo/metrics.hpp"

namespace uqevo {

enum class Verdict { win, tie, loss };

std::string to_string(Verdict v);

struct BootstrapResult {
  double delta = 0.0;  // metric(A) - metric(B) on the full dataset
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  Verdict verdict = Verdict::tie;
  int n_resamples = 0;
  std::uint64_t seed = 0;

  bool operator==(const BootstrapResult&) const = default;
};

// Metric over (uncertainty scores, quality); must throw
// MetricDegeneracyError on degenerate inputs so resamples can be redrawn.
using MetricFn = std::function<double(std::span<const double>, std::span<const double>)>;

MetricFn metric_roc_auc();
MetricFn metric_prr(double max_rejection = 0.5);

// Paired bootstrap over sample indices: resamples with replacement,
// recomputes metric(A) - metric(B) per resample (degenerate resamples are
// redrawn, with a cap), two-sided p-value with +1 smoothing, percentile CI.
// Deterministic per seed; swapping A and B flips win/loss and negates delta
// exactly.
BootstrapResult paired_bootstrap(const MetricFn& metric, const ScoreVector& scores_a,
                                 const ScoreVector& scores_b, const Dataset& dataset,
                                 int n_resamples = 10000, double alpha = 0.05,
                                 std::uint64_t seed = 0);

// reject_i iff p_i < alpha / m.
std::vector<bool> bonferroni(std::span<const double> p_values, double alpha);

struct ComparisonRow {
  std::string dataset;
  double delta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  Verdict verdict = Verdict::tie;  // Bonferroni-corrected across the family
};

struct WinTieLoss {
  int wins = 0;
  int ties = 0;
  int losses = 0;
  std::vector<ComparisonRow> rows;

  std::string to_csv() const;   // dataset, delta, ci_low, ci_high, p, verdict
  std::string to_json() const;
};

// Re-derives verdicts with the Bonferroni-corrected threshold alpha/m across
// the family, then aggregates counts.
WinTieLoss win_tie_loss(std::span<const BootstrapResult> results,
                        std::span<const std::string> labels, double alpha = 0.05);

struct LogisticFit {
  std::vector<double> weights;
  double bias = 0.0;
  bool converged = false;
  int iterations = 0;
  double grad_max_norm = 0.0;
};

// L2-regularized negative log-likelihood (bias unpenalized) and its gradient
// with respect to [weights, bias]; exposed for finite-difference checks.
double logistic_loss(std::span<const std::vector<double>> x, std::span<const int> y,
                     std::span<const double> weights, double bias, double l2);
std::vector<double> logistic_gradient(std::span<const std::vector<double>> x,
                                      std::span<const int> y,
                                      std::span<const double> weights, double bias,
                                      double l2);

// Deterministic damped-Newton minimization from zero init; converged when
// the gradient max-norm drops below tol. Feature vectors must share one
// name ordering.
LogisticFit fit_logistic_regression(std::span<const FeatureVector> features,
                                    std::span<const int> labels, double l2 = 1e-4,
                                    double tol = 1e-8, int max_iter = 100);

// Pearson correlation between two coefficient vectors after orienting both
// to the uncertainty convention (vectors fitted as confidence weights are
// negated first).
double coefficient_correlation(std::span<const double> w_evo,
                               std::span<const double> w_logreg,
                               bool evo_is_uncertainty = true,
                               bool logreg_is_uncertainty = true);

}  // namespace uqevo
