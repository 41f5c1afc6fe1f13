#include "uqevo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uqevo {

void check_alignment(const ScoreVector& v, const Dataset& d) {
  if (v.ids.size() != v.scores.size())
    throw MetricError("score vector ids/scores length mismatch");
  if (v.ids.size() != d.samples.size())
    throw MetricError("score vector not aligned to dataset (size mismatch)");
  for (std::size_t i = 0; i < v.ids.size(); ++i) {
    if (v.ids[i] != d.samples[i].id)
      throw MetricError("score vector not aligned to dataset at index " +
                        std::to_string(i));
    if (!std::isfinite(v.scores[i]))
      throw MetricError("non-finite score for sample '" + v.ids[i] + "'");
  }
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share the mid-rank; 1-based ranks.
    double rank = static_cast<double>(i + j) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double roc_auc(std::span<const double> uncertainty, std::span<const double> quality) {
  if (uncertainty.size() != quality.size())
    throw MetricError("uncertainty/quality length mismatch");
  const std::size_t n = uncertainty.size();
  std::size_t n_pos = 0;  // positive class: incorrect, quality == 0
  for (double q : quality)
    if (q == 0.0) ++n_pos;
  std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricDegeneracyError("roc_auc needs both classes");

  std::vector<double> ranks = midranks(uncertainty);
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (quality[i] == 0.0) rank_sum_pos += ranks[i];
  double np = static_cast<double>(n_pos);
  double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double roc_auc(const ScoreVector& scores, const Dataset& dataset) {
  check_alignment(scores, dataset);
  if (dataset.task != Task::binary)
    throw MetricError("roc_auc requires a binary dataset");
  std::vector<double> quality;
  quality.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) quality.push_back(s.quality);
  return roc_auc(scores.scores, quality);
}

std::vector<double> rejection_curve_means(std::span<const double> uncertainty,
                                          std::span<const double> quality) {
  const std::size_t n = uncertainty.size();
  if (n == 0) throw MetricError("empty dataset");
  if (quality.size() != n) throw MetricError("uncertainty/quality length mismatch");

  // Tie groups in ascending uncertainty; ties keep dataset order so that a
  // method curve and the ideal curve built from the same ordering are
  // bit-identical.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (uncertainty[a] != uncertainty[b]) return uncertainty[a] < uncertainty[b];
    return a < b;
  });
  struct Group {
    double quality_sum;
    std::size_t count;
  };
  std::vector<Group> groups;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    double sum = quality[order[i]];
    while (j + 1 < n && uncertainty[order[j + 1]] == uncertainty[order[i]]) {
      ++j;
      sum += quality[order[j]];
    }
    groups.push_back({sum, j - i + 1});
    i = j + 1;
  }

  std::vector<double> means(n);
  // Rejection count 0: plain dataset-order mean.
  double total = 0.0;
  for (double q : quality) total += q;
  means[0] = total / static_cast<double>(n);

  for (std::size_t k = 1; k < n; ++k) {
    std::size_t retained = n - k;
    double sum = 0.0;
    std::size_t left = retained;
    bool single_partial = false;
    for (const auto& g : groups) {
      if (left == 0) break;
      if (g.count <= left) {
        sum += g.quality_sum;
        left -= g.count;
      } else {
        // Boundary cuts this tie group: each retained slot contributes the
        // group mean. When the partial group is the whole retained set the
        // mean is returned directly so constant scores stay exact.
        if (left == retained) single_partial = true;
        sum += static_cast<double>(left) * (g.quality_sum / static_cast<double>(g.count));
        if (single_partial) sum = g.quality_sum / static_cast<double>(g.count);
        left = 0;
      }
    }
    means[k] = single_partial ? sum : sum / static_cast<double>(retained);
  }
  return means;
}

RejectionCurve rejection_curve(const ScoreVector& uncertainty, const Dataset& dataset) {
  check_alignment(uncertainty, dataset);
  std::vector<double> quality;
  quality.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) quality.push_back(s.quality);
  std::vector<double> means = rejection_curve_means(uncertainty.scores, quality);
  RejectionCurve curve;
  const double n = static_cast<double>(means.size());
  for (std::size_t k = 0; k < means.size(); ++k)
    curve.points.emplace_back(static_cast<double>(k) / n, means[k]);
  return curve;
}

double prr(std::span<const double> uncertainty, std::span<const double> quality,
           double max_rejection) {
  const std::size_t n = uncertainty.size();
  if (n == 0) throw MetricError("empty dataset");
  if (!(max_rejection > 0.0 && max_rejection <= 1.0))
    throw MetricError("max_rejection must be in (0,1]");
  bool all_equal = std::all_of(quality.begin(), quality.end(),
                               [&](double q) { return q == quality[0]; });
  if (all_equal) throw MetricDegeneracyError("degenerate ideal curve: all-equal quality");

  auto k_max = static_cast<std::size_t>(std::floor(max_rejection * static_cast<double>(n)));
  k_max = std::min(k_max, n - 1);
  if (k_max < 1) throw MetricError("max_rejection rejects no samples at this size");

  std::vector<double> method = rejection_curve_means(uncertainty, quality);
  std::vector<double> ideal_scores(n);
  for (std::size_t i = 0; i < n; ++i) ideal_scores[i] = -quality[i];
  std::vector<double> ideal = rejection_curve_means(ideal_scores, quality);

  const double baseline = method[0];  // bit-identical to ideal[0]
  // Uniform 1/n spacing cancels in the ratio, so only the trapezoid sums of
  // the excess-over-baseline remain.
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < k_max; ++k) {
    num += (method[k] - baseline) + (method[k + 1] - baseline);
    den += (ideal[k] - baseline) + (ideal[k + 1] - baseline);
  }
  if (den == 0.0) throw MetricDegeneracyError("degenerate ideal curve: zero area");
  return num / den;
}

double prr(const ScoreVector& uncertainty, const Dataset& dataset, double max_rejection) {
  check_alignment(uncertainty, dataset);
  std::vector<double> quality;
  quality.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) quality.push_back(s.quality);
  return prr(uncertainty.scores, quality, max_rejection);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw MetricError("pearson length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw MetricError("pearson needs length >= 2");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  if (vx == 0.0 || vy == 0.0) throw MetricError("pearson: zero variance");
  return cov / std::sqrt(vx * vy);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw MetricError("spearman length mismatch");
  if (a.size() < 2) throw MetricError("spearman needs length >= 2");
  std::vector<double> ra = midranks(a);
  std::vector<double> rb = midranks(b);
  try {
    return pearson(ra, rb);
  } catch (const MetricError&) {
    throw MetricError("spearman: zero rank variance");
  }
}

double spearman(const ScoreVector& a, const ScoreVector& b) {
  if (a.ids != b.ids) throw MetricError("spearman: score vectors not aligned");
  return spearman(std::span<const double>(a.scores), std::span<const double>(b.scores));
}

}  // namespace uqevo
