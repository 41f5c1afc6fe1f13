#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uqevo/feature_store.hpp"

namespace uqevo {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an input (or bootstrap resample) is degenerate for the metric:
// single-class labels for ROC-AUC, all-equal quality for PRR.
class MetricDegeneracyError : public MetricError {
 public:
  using MetricError::MetricError;
};

// Method scores aligned 1:1, in order, with a dataset's samples.
struct ScoreVector {
  std::vector<std::string> ids;
  std::vector<double> scores;

  std::size_t size() const { return scores.size(); }
  bool operator==(const ScoreVector&) const = default;
};

// Throws MetricError if ids do not match the dataset ids in order.
void check_alignment(const ScoreVector& v, const Dataset& d);

// Mid-ranks (1-based, ties averaged).
std::vector<double> midranks(std::span<const double> values);

// ROC-AUC of uncertainty scores as a detector of INCORRECT samples: the
// positive class is quality == 0, so a good uncertainty measure scores near
// 1. Equals the Mann-Whitney statistic P(u_pos > u_neg) + 0.5 P(tie),
// computed by rank aggregation. Throws MetricDegeneracyError on single-class
// input.
double roc_auc(std::span<const double> uncertainty, std::span<const double> quality);
double roc_auc(const ScoreVector& scores, const Dataset& dataset);

struct RejectionCurve {
  // (rejection fraction k/N, mean quality of retained samples), k = 0..N-1.
  std::vector<std::pair<double, double>> points;
};

// Mean quality of the N-k least-uncertain samples for every rejection count
// k. Samples tied on uncertainty contribute their tie-group mean quality, so
// a constant score yields a curve identically equal to the dataset mean.
// Index k of the result is the point at rejection count k.
std::vector<double> rejection_curve_means(std::span<const double> uncertainty,
                                          std::span<const double> quality);
RejectionCurve rejection_curve(const ScoreVector& uncertainty, const Dataset& dataset);

// Prediction-Rejection Ratio over rejection fractions [0, max_rejection]:
// ratio of the trapezoidal area between the method and random-baseline
// rejection curves to the area between the ideal and random-baseline curves.
// The ideal curve rejects by true quality; the random baseline is the
// horizontal line at the dataset mean quality. 0 = chance, 1 = optimal.
// Throws MetricDegeneracyError when quality is all-equal.
double prr(std::span<const double> uncertainty, std::span<const double> quality,
           double max_rejection = 0.5);
double prr(const ScoreVector& uncertainty, const Dataset& dataset,
           double max_rejection = 0.5);

// Standard product-moment correlation; throws MetricError on zero variance
// or length < 2.
double pearson(std::span<const double> x, std::span<const double> y);

// Pearson correlation of mid-ranks. Throws MetricError on zero rank variance.
double spearman(std::span<const double> a, std::span<const double> b);
double spearman(const ScoreVector& a, const ScoreVector& b);

}  // namespace uqevo
