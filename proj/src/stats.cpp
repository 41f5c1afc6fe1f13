#include "uqevo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "uqevo/rng.hpp"
#include "uqevo/text.hpp"

namespace uqevo {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::win: return "win";
    case Verdict::tie: return "tie";
    case Verdict::loss: return "loss";
  }
  return "?";
}

MetricFn metric_roc_auc() {
  return [](std::span<const double> u, std::span<const double> q) {
    return roc_auc(u, q);
  };
}

MetricFn metric_prr(double max_rejection) {
  return [max_rejection](std::span<const double> u, std::span<const double> q) {
    return prr(u, q, max_rejection);
  };
}

namespace {

double percentile(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  double h = p * static_cast<double>(n - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted.back();
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

Verdict classify(double p_value, double delta, double alpha) {
  if (p_value < alpha && delta > 0.0) return Verdict::win;
  if (p_value < alpha && delta < 0.0) return Verdict::loss;
  return Verdict::tie;
}

}  // namespace

BootstrapResult paired_bootstrap(const MetricFn& metric, const ScoreVector& scores_a,
                                 const ScoreVector& scores_b, const Dataset& dataset,
                                 int n_resamples, double alpha, std::uint64_t seed) {
  check_alignment(scores_a, dataset);
  check_alignment(scores_b, dataset);
  if (n_resamples < 1000) throw MetricError("n_resamples must be >= 1000");
  if (!(alpha > 0.0 && alpha < 1.0)) throw MetricError("alpha must be in (0,1)");

  const std::size_t n = dataset.samples.size();
  std::vector<double> quality(n);
  for (std::size_t i = 0; i < n; ++i) quality[i] = dataset.samples[i].quality;

  BootstrapResult result;
  result.n_resamples = n_resamples;
  result.seed = seed;
  result.delta = metric(scores_a.scores, quality) - metric(scores_b.scores, quality);

  constexpr int kMaxRedraws = 100;
  std::vector<double> deltas(static_cast<std::size_t>(n_resamples));
  std::vector<double> ua(n), ub(n), q(n);
  for (int r = 0; r < n_resamples; ++r) {
    std::mt19937_64 rng = make_rng(seed, 0xb007ULL, static_cast<std::uint64_t>(r));
    std::uniform_int_distribution<std::size_t> index(0, n - 1);
    int redraws = 0;
    while (true) {
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = index(rng);
        ua[i] = scores_a.scores[j];
        ub[i] = scores_b.scores[j];
        q[i] = quality[j];
      }
      try {
        deltas[static_cast<std::size_t>(r)] = metric(ua, q) - metric(ub, q);
        break;
      } catch (const MetricDegeneracyError&) {
        if (++redraws > kMaxRedraws)
          throw MetricError("bootstrap: resample degenerate after " +
                            std::to_string(kMaxRedraws) + " redraws");
      }
    }
  }

  int le = 0, ge = 0;
  for (double d : deltas) {
    if (d <= 0.0) ++le;
    if (d >= 0.0) ++ge;
  }
  double b = static_cast<double>(n_resamples);
  double p_low = (static_cast<double>(le) + 1.0) / (b + 1.0);
  double p_high = (static_cast<double>(ge) + 1.0) / (b + 1.0);
  result.p_value = std::min(1.0, 2.0 * std::min(p_low, p_high));

  std::sort(deltas.begin(), deltas.end());
  result.ci_low = percentile(deltas, alpha / 2.0);
  result.ci_high = percentile(deltas, 1.0 - alpha / 2.0);
  result.verdict = classify(result.p_value, result.delta, alpha);
  return result;
}

std::vector<bool> bonferroni(std::span<const double> p_values, double alpha) {
  if (p_values.empty()) throw MetricError("bonferroni: empty p-value list");
  double threshold = alpha / static_cast<double>(p_values.size());
  std::vector<bool> reject;
  reject.reserve(p_values.size());
  for (double p : p_values) reject.push_back(p < threshold);
  return reject;
}

WinTieLoss win_tie_loss(std::span<const BootstrapResult> results,
                        std::span<const std::string> labels, double alpha) {
  if (results.size() != labels.size())
    throw MetricError("win_tie_loss: results/labels length mismatch");
  if (results.empty()) throw MetricError("win_tie_loss: empty family");

  double corrected = alpha / static_cast<double>(results.size());
  WinTieLoss summary;
  for (std::size_t i = 0; i < results.size(); ++i) {
    ComparisonRow row;
    row.dataset = labels[i];
    row.delta = results[i].delta;
    row.ci_low = results[i].ci_low;
    row.ci_high = results[i].ci_high;
    row.p_value = results[i].p_value;
    row.verdict = classify(results[i].p_value, results[i].delta, corrected);
    switch (row.verdict) {
      case Verdict::win: ++summary.wins; break;
      case Verdict::tie: ++summary.ties; break;
      case Verdict::loss: ++summary.losses; break;
    }
    summary.rows.push_back(std::move(row));
  }
  return summary;
}

std::string WinTieLoss::to_csv() const {
  std::ostringstream out;
  out << "dataset,delta,ci_low,ci_high,p,verdict\n";
  for (const auto& r : rows) {
    out << r.dataset << ',' << format_full(r.delta) << ',' << format_full(r.ci_low)
        << ',' << format_full(r.ci_high) << ',' << format_full(r.p_value) << ','
        << to_string(r.verdict) << '\n';
  }
  return out.str();
}

std::string WinTieLoss::to_json() const {
  ordered_json j;
  j["wins"] = wins;
  j["ties"] = ties;
  j["losses"] = losses;
  ordered_json rows_json = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json row;
    row["dataset"] = r.dataset;
    row["delta"] = r.delta;
    row["ci_low"] = r.ci_low;
    row["ci_high"] = r.ci_high;
    row["p"] = r.p_value;
    row["verdict"] = to_string(r.verdict);
    rows_json.push_back(std::move(row));
  }
  j["rows"] = std::move(rows_json);
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

namespace {

double stable_softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Cholesky solve of (symmetric positive definite) a * x = b; a is row-major
// d x d and is destroyed.
std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b,
                                   std::size_t d) {
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) sum -= a[i * d + k] * a[j * d + k];
      if (i == j) {
        if (sum <= 0.0) throw MetricError("hessian not positive definite");
        a[i * d + i] = std::sqrt(sum);
      } else {
        a[i * d + j] = sum / a[j * d + j];
      }
    }
  }
  // Forward then backward substitution.
  for (std::size_t i = 0; i < d; ++i) {
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= a[i * d + k] * b[k];
    b[i] = sum / a[i * d + i];
  }
  for (std::size_t i = d; i-- > 0;) {
    double sum = b[i];
    for (std::size_t k = i + 1; k < d; ++k) sum -= a[k * d + i] * b[k];
    b[i] = sum / a[i * d + i];
  }
  return b;
}

}  // namespace

double logistic_loss(std::span<const std::vector<double>> x, std::span<const int> y,
                     std::span<const double> weights, double bias, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = bias;
    for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[i][j];
    loss += stable_softplus(z) - static_cast<double>(y[i]) * z;
  }
  double reg = 0.0;
  for (double w : weights) reg += w * w;
  return loss + 0.5 * l2 * reg;
}

std::vector<double> logistic_gradient(std::span<const std::vector<double>> x,
                                      std::span<const int> y,
                                      std::span<const double> weights, double bias,
                                      double l2) {
  const std::size_t d = weights.size();
  std::vector<double> grad(d + 1, 0.0);  // [dw..., db]
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = bias;
    for (std::size_t j = 0; j < d; ++j) z += weights[j] * x[i][j];
    double r = sigmoid(z) - static_cast<double>(y[i]);
    for (std::size_t j = 0; j < d; ++j) grad[j] += r * x[i][j];
    grad[d] += r;
  }
  for (std::size_t j = 0; j < d; ++j) grad[j] += l2 * weights[j];
  return grad;
}

LogisticFit fit_logistic_regression(std::span<const FeatureVector> features,
                                    std::span<const int> labels, double l2,
                                    double tol, int max_iter) {
  if (features.empty()) throw MetricError("logistic regression: no samples");
  if (features.size() != labels.size())
    throw MetricError("logistic regression: features/labels length mismatch");
  if (l2 < 0.0) throw MetricError("logistic regression: l2 must be >= 0");

  const std::vector<std::string> names = features[0].names();
  const std::size_t d = names.size();
  std::vector<std::vector<double>> x;
  x.reserve(features.size());
  for (const auto& f : features) {
    if (f.names() != names)
      throw MetricError("logistic regression: inconsistent feature ordering");
    std::vector<double> row = f.numbers();
    for (double v : row)
      if (!std::isfinite(v)) throw MetricError("logistic regression: non-finite feature");
    x.push_back(std::move(row));
  }
  bool saw0 = false, saw1 = false;
  for (int y : labels) {
    if (y == 0) saw0 = true;
    else if (y == 1) saw1 = true;
    else throw MetricError("logistic regression: labels must be 0/1");
  }
  if (!saw0 || !saw1) throw MetricError("logistic regression: single-class labels");

  std::vector<double> theta(d + 1, 0.0);  // [w..., b]
  LogisticFit fit;
  double loss = logistic_loss(x, labels, std::span(theta).first(d), theta[d], l2);

  for (int iter = 0; iter < max_iter; ++iter) {
    std::vector<double> grad =
        logistic_gradient(x, labels, std::span(theta).first(d), theta[d], l2);
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    fit.grad_max_norm = gmax;
    fit.iterations = iter;
    if (gmax < tol) {
      fit.converged = true;
      break;
    }

    // Hessian over [w, b].
    const std::size_t dd = d + 1;
    std::vector<double> h(dd * dd, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = theta[d];
      for (std::size_t j = 0; j < d; ++j) z += theta[j] * x[i][j];
      double s = sigmoid(z);
      double w = s * (1.0 - s);
      for (std::size_t a = 0; a < dd; ++a) {
        double xa = a < d ? x[i][a] : 1.0;
        for (std::size_t b = 0; b <= a; ++b) {
          double xb = b < d ? x[i][b] : 1.0;
          h[a * dd + b] += w * xa * xb;
        }
      }
    }
    for (std::size_t a = 0; a < dd; ++a)
      for (std::size_t b = a + 1; b < dd; ++b) h[a * dd + b] = h[b * dd + a];
    for (std::size_t j = 0; j < d; ++j) h[j * dd + j] += l2;
    for (std::size_t j = 0; j < dd; ++j) h[j * dd + j] += 1e-10;  // jitter

    std::vector<double> neg_grad(dd);
    for (std::size_t j = 0; j < dd; ++j) neg_grad[j] = -grad[j];
    std::vector<double> direction = cholesky_solve(std::move(h), std::move(neg_grad), dd);

    // Backtracking line search keeps the loss strictly non-increasing.
    double step = 1.0;
    double descent = 0.0;
    for (std::size_t j = 0; j < dd; ++j) descent += grad[j] * direction[j];
    std::vector<double> trial(dd);
    bool moved = false;
    while (step > 1e-16) {
      for (std::size_t j = 0; j < dd; ++j) trial[j] = theta[j] + step * direction[j];
      double trial_loss =
          logistic_loss(x, labels, std::span(trial).first(d), trial[d], l2);
      if (trial_loss <= loss + 1e-4 * step * descent) {
        theta = trial;
        loss = trial_loss;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // stalled; gradient check above reports convergence state
  }

  if (!fit.converged) {
    std::vector<double> grad =
        logistic_gradient(x, labels, std::span(theta).first(d), theta[d], l2);
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    fit.grad_max_norm = gmax;
    fit.converged = gmax < tol;
    fit.iterations = max_iter;
  }

  fit.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  fit.bias = theta[d];
  return fit;
}

double coefficient_correlation(std::span<const double> w_evo,
                               std::span<const double> w_logreg,
                               bool evo_is_uncertainty, bool logreg_is_uncertainty) {
  if (w_evo.size() != w_logreg.size())
    throw MetricError("coefficient_correlation: length mismatch");
  std::vector<double> a(w_evo.begin(), w_evo.end());
  std::vector<double> b(w_logreg.begin(), w_logreg.end());
  if (!evo_is_uncertainty)
    for (double& v : a) v = -v;
  if (!logreg_is_uncertainty)
    for (double& v : b) v = -v;
  return pearson(a, b);
}

}  // namespace uqevo
