#include "stabilex/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "stabilex/error.hpp"
#include "stabilex/rng.hpp"

namespace stabilex::stability {
namespace {

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Running mean; returns the input bitwise when all rows are equal.
void accumulate_mean(std::vector<double>& mean, std::span<const double> row, double count) {
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (row[i] - mean[i]) / count;
}

// Type-7 sample quantile of sorted values.
double quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Bias-corrected percentile interval: the tail levels are shifted by the
// share of resample values below the full-sample estimate.
std::pair<double, double> percentile_interval(std::vector<double> values, double level,
                                              double estimate) {
  if (values.empty()) return {std::nan(""), std::nan("")};
  std::sort(values.begin(), values.end());
  const auto below = std::lower_bound(values.begin(), values.end(), estimate) - values.begin();
  const auto upto = std::upper_bound(values.begin(), values.end(), estimate) - values.begin();
  const double b = static_cast<double>(values.size());
  // Ties count half; the share is kept away from 0 and 1.
  const double share = std::clamp((static_cast<double>(below + upto) / 2.0) / b, 0.5 / b, 1.0 - 0.5 / b);
  const boost::math::normal normal;
  const double z0 = boost::math::quantile(normal, share);
  const double z = boost::math::quantile(normal, (1.0 + level) / 2.0);
  return {quantile(values, boost::math::cdf(normal, 2.0 * z0 - z)),
          quantile(values, boost::math::cdf(normal, 2.0 * z0 + z))};
}

struct Retained {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> excluded;
};

Retained retain_non_constant(const ExplanationMatrix& matrix) {
  matrix.validate();
  Retained r;
  for (std::size_t i = 0; i < matrix.rows.size(); ++i) {
    if (is_constant(matrix.rows[i])) {
      r.excluded.push_back(matrix.model_ids[i]);
    } else {
      r.rows.push_back(matrix.rows[i]);
    }
  }
  if (r.rows.size() < 2) {
    throw Error(ErrorKind::kInsufficientData,
                "text " + std::to_string(matrix.text_id) + " has " + std::to_string(r.rows.size()) +
                    " non-constant explanation rows, need at least 2");
  }
  return r;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Statistic of a row resample; nullopt when the resample is degenerate.
// A model drawn c times is left out together with all its copies, so a row
// never correlates with itself through the leave-one-out mean. Each copy
// counts once in the average.
std::optional<double> resample_statistic(std::span<const std::vector<double>> rows, Stream& stream,
                                         std::vector<double>& scratch) {
  const std::size_t m = rows.size();
  const std::size_t n = rows.front().size();
  std::vector<int> count(m, 0);
  for (std::size_t i = 0; i < m; ++i) ++count[static_cast<std::size_t>(stream.below(m))];
  if (std::count_if(count.begin(), count.end(), [](int c) { return c > 0; }) < 2) return std::nullopt;
  std::vector<double> total(n, 0.0);
  for (std::size_t d = 0; d < m; ++d) {
    for (std::size_t j = 0; j < n; ++j) total[j] += count[d] * rows[d][j];
  }
  scratch.resize(n);
  double sum = 0.0;
  try {
    for (std::size_t d = 0; d < m; ++d) {
      if (count[d] == 0) continue;
      const double others = static_cast<double>(m) - count[d];
      for (std::size_t j = 0; j < n; ++j) scratch[j] = (total[j] - count[d] * rows[d][j]) / others;
      sum += count[d] * pearson(rows[d], scratch);
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kDegenerateVector) return std::nullopt;
    throw;
  }
  return sum / static_cast<double>(m);
}

// Redraws a degenerate resample from the same stream up to kMaxRedraws times.
std::optional<double> robust_resample(std::span<const std::vector<double>> rows, Stream& stream,
                                      std::vector<double>& scratch) {
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    if (auto v = resample_statistic(rows, stream, scratch)) return v;
  }
  return std::nullopt;
}

}  // namespace

void ExplanationMatrix::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::kInvalidInput, "matrix for text " + std::to_string(text_id) + ": " + why);
  };
  if (tokens.empty()) fail("no tokens");
  if (rows.empty()) fail("no rows");
  if (model_ids.size() != rows.size()) fail("model_ids and rows differ in count");
  std::set<std::string_view> ids(model_ids.begin(), model_ids.end());
  if (ids.size() != model_ids.size()) fail("duplicate model ids");
  for (const auto& row : rows) {
    if (row.size() != tokens.size()) fail("row length differs from token count");
    for (double v : row) {
      if (!std::isfinite(v)) fail("non-finite relevance");
    }
  }
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::kInvalidInput, "pearson: length mismatch");
  if (x.size() < 2) throw Error(ErrorKind::kInvalidInput, "pearson: need at least 2 values");
  if (is_constant(x) || is_constant(y)) {
    throw Error(ErrorKind::kDegenerateVector, "pearson: constant input vector");
  }
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorKind::kDegenerateVector, "pearson: zero variance");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> loo_correlations(std::span<const std::vector<double>> rows) {
  const std::size_t m = rows.size();
  if (m < 2) throw Error(ErrorKind::kInsufficientData, "leave-one-out needs at least 2 rows");
  const std::size_t n = rows.front().size();

  // prefix[j] = mean of rows [0, j), suffix[j] = mean of rows (j, m).
  std::vector<std::vector<double>> prefix(m, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> suffix(m, std::vector<double>(n, 0.0));
  std::vector<double> acc(n, 0.0);
  for (std::size_t j = 1; j < m; ++j) {
    accumulate_mean(acc, rows[j - 1], static_cast<double>(j));
    prefix[j] = acc;
  }
  std::fill(acc.begin(), acc.end(), 0.0);
  for (std::size_t j = m - 1; j-- > 0;) {
    accumulate_mean(acc, rows[j + 1], static_cast<double>(m - 1 - j));
    suffix[j] = acc;
  }

  std::vector<double> out(m);
  std::vector<double> loo(n);
  for (std::size_t j = 0; j < m; ++j) {
    if (j == 0) {
      loo = suffix[0];
    } else if (j == m - 1) {
      loo = prefix[m - 1];
    } else {
      // Weighted merge of the two partial means.
      const double w_suffix = static_cast<double>(m - 1 - j) / static_cast<double>(m - 1);
      for (std::size_t i = 0; i < n; ++i) loo[i] = prefix[j][i] + w_suffix * (suffix[j][i] - prefix[j][i]);
    }
    out[j] = pearson(rows[j], loo);
  }
  return out;
}

StabilityEstimate mcwme_point(const ExplanationMatrix& matrix) {
  const Retained r = retain_non_constant(matrix);
  StabilityEstimate est;
  est.loo_correlations = loo_correlations(r.rows);
  est.mcwme = mean_of(est.loo_correlations);
  est.excluded_rows = r.excluded;
  est.ci_low = est.ci_high = est.mcwme;
  return est;
}

namespace {

struct Interval {
  double low = 0.0;
  double high = 0.0;
  int flagged = 0;
};

Interval bootstrap_interval(const std::vector<std::vector<double>>& rows, double estimate,
                            const BootstrapOptions& options) {
  if (options.resamples <= 0 || !(options.level > 0.0 && options.level < 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "bootstrap needs resamples > 0 and level in (0,1)");
  }
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(options.resamples));
  std::vector<double> scratch;
  Interval out;
  for (int k = 0; k < options.resamples; ++k) {
    Stream stream(options.seed, "bootstrap", static_cast<std::uint64_t>(k));
    if (auto v = robust_resample(rows, stream, scratch)) {
      stats.push_back(*v);
    } else {
      ++out.flagged;
    }
  }
  if (stats.empty()) {
    out.low = out.high = estimate;
    return out;
  }
  const auto [lo, hi] = percentile_interval(std::move(stats), options.level, estimate);
  // The reported estimate always lies inside its own interval.
  out.low = std::min(lo, estimate);
  out.high = std::max(hi, estimate);
  return out;
}

}  // namespace

StabilityEstimate mcwme(const ExplanationMatrix& matrix, const BootstrapOptions& options) {
  StabilityEstimate est = mcwme_point(matrix);
  const Retained r = retain_non_constant(matrix);
  const Interval ci = bootstrap_interval(r.rows, est.mcwme, options);
  est.ci_low = ci.low;
  est.ci_high = ci.high;
  est.ci_level = options.level;
  est.bootstrap_resamples = options.resamples;
  est.flagged_resamples = ci.flagged;
  return est;
}

std::pair<double, double> bootstrap_ci(const ExplanationMatrix& matrix,
                                       const BootstrapOptions& options) {
  const auto est = mcwme(matrix, options);
  return {est.ci_low, est.ci_high};
}

ComparisonResult compare(const ExplanationMatrix& a, const ExplanationMatrix& b,
                         const BootstrapOptions& options) {
  ComparisonResult out;
  out.text_id_a = a.text_id;
  out.text_id_b = b.text_id;
  out.label = a.label;
  out.pair_id = a.text_id == b.text_id
                    ? std::to_string(a.text_id)
                    : std::to_string(a.text_id) + "/" + std::to_string(b.text_id);

  BootstrapOptions opt_a = options;
  BootstrapOptions opt_b = options;
  opt_a.seed = derive_key(options.seed, "side-a", 0);
  opt_b.seed = derive_key(options.seed, "side-b", 0);
  out.estimate_a = mcwme(a, opt_a);
  out.estimate_b = mcwme(b, opt_b);
  out.diff = out.estimate_a.mcwme - out.estimate_b.mcwme;

  const Retained ra = retain_non_constant(a);
  const Retained rb = retain_non_constant(b);
  std::vector<double> diffs;
  diffs.reserve(static_cast<std::size_t>(options.resamples));
  std::vector<double> scratch;
  for (int k = 0; k < options.resamples; ++k) {
    Stream sa(options.seed, "diff-a", static_cast<std::uint64_t>(k));
    Stream sb(options.seed, "diff-b", static_cast<std::uint64_t>(k));
    const auto va = robust_resample(ra.rows, sa, scratch);
    const auto vb = robust_resample(rb.rows, sb, scratch);
    if (va && vb) diffs.push_back(*va - *vb);
  }
  if (diffs.empty()) {
    out.diff_ci_low = out.diff_ci_high = out.diff;
  } else {
    const auto [lo, hi] = percentile_interval(std::move(diffs), options.level, out.diff);
    out.diff_ci_low = std::min(lo, out.diff);
    out.diff_ci_high = std::max(hi, out.diff);
  }
  out.significant = !(out.diff_ci_low <= 0.0 && 0.0 <= out.diff_ci_high);
  return out;
}

std::vector<ComparisonResult> compare_suite(std::span<const MatrixPair> pairs, PairingMode mode,
                                            std::uint64_t pairing_seed,
                                            const BootstrapOptions& options) {
  std::vector<const ExplanationMatrix*> side_b;
  side_b.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.a == nullptr || p.b == nullptr) throw Error(ErrorKind::kInvalidInput, "null matrix in pair");
    if (mode == PairingMode::kPaired && p.a->text_id != p.b->text_id) {
      throw Error(ErrorKind::kInvalidPairing, "paired mode: text ids " + std::to_string(p.a->text_id) +
                                                  " and " + std::to_string(p.b->text_id) + " differ");
    }
    if (mode == PairingMode::kTwin && (p.a->text_id ^ 1) != p.b->text_id) {
      throw Error(ErrorKind::kInvalidPairing, "twin mode: text ids " + std::to_string(p.a->text_id) +
                                                  " and " + std::to_string(p.b->text_id) + " are not twins");
    }
    side_b.push_back(p.b);
  }
  if (mode == PairingMode::kRandom) {
    Stream stream(pairing_seed, "pairing");
    stream.shuffle(std::span<const ExplanationMatrix*>(side_b));
  }

  std::vector<ComparisonResult> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& a = *pairs[i].a;
    const auto& b = *side_b[i];
    // Seeded by the pair identity so the result does not depend on list order.
    BootstrapOptions opt = options;
    opt.seed = derive_key(derive_key(options.seed, "pair-a", static_cast<std::uint64_t>(a.text_id)),
                          "pair-b", static_cast<std::uint64_t>(b.text_id));
    out.push_back(compare(a, b, opt));
  }
  std::stable_sort(out.begin(), out.end(), [](const ComparisonResult& x, const ComparisonResult& y) {
    if (x.label != y.label) return x.label < y.label;
    if (x.text_id_a != y.text_id_a) return x.text_id_a < y.text_id_a;
    return x.text_id_b < y.text_id_b;
  });
  return out;
}

}  // namespace stabilex::stability
