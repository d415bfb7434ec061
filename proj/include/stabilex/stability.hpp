#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stabilex::stability {

// m explanations (one per equivalent model) of one n-token text.
struct ExplanationMatrix {
  std::int64_t text_id = 0;
  std::vector<std::string> tokens;     // n
  int label = 0;
  std::vector<std::string> model_ids;  // m
  std::vector<std::vector<double>> rows;

  std::size_t models() const { return rows.size(); }
  std::size_t width() const { return tokens.size(); }

  // Throws Error(kInvalidInput) on shape or value problems. Allows m == 1 so
  // that files can be read before filtering; statistics require m >= 2.
  void validate() const;

  friend bool operator==(const ExplanationMatrix&, const ExplanationMatrix&) = default;
};

struct StabilityEstimate {
  double mcwme = 0.0;
  std::vector<double> loo_correlations;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ci_level = 0.95;
  int bootstrap_resamples = 0;
  std::vector<std::string> excluded_rows;
  // Resamples that stayed degenerate after all redraws.
  int flagged_resamples = 0;
};

struct ComparisonResult {
  std::string pair_id;
  std::int64_t text_id_a = 0;
  std::int64_t text_id_b = 0;
  int label = 0;  // class of side a, used for ordering
  StabilityEstimate estimate_a;
  StabilityEstimate estimate_b;
  double diff = 0.0;
  double diff_ci_low = 0.0;
  double diff_ci_high = 0.0;
  bool significant = false;
};

struct BootstrapOptions {
  int resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

inline constexpr int kMaxRedraws = 10;

// Product-moment correlation. Throws kInvalidInput on length mismatch or
// n < 2, kDegenerateVector when either input is constant.
double pearson(std::span<const double> x, std::span<const double> y);

// Leave-one-out correlations of the given rows (no degeneracy filtering).
std::vector<double> loo_correlations(std::span<const std::vector<double>> rows);

// Point estimate only: constant rows dropped, then mean of the leave-one-out
// correlations. Throws kInsufficientData with fewer than two usable rows.
StabilityEstimate mcwme_point(const ExplanationMatrix& matrix);

// Point estimate plus bias-corrected percentile bootstrap interval over model rows.
StabilityEstimate mcwme(const ExplanationMatrix& matrix, const BootstrapOptions& options = {});

// Bias-corrected percentile interval of the statistic over row resamples: the
// tail levels move by the share of resample values below the estimate, which
// offsets the downward bias of resampled statistics. Resample k draws
// from a stream keyed by (seed, k) only. Within a resample, all copies of a
// model are left out together when forming the leave-one-out mean.
std::pair<double, double> bootstrap_ci(const ExplanationMatrix& matrix,
                                       const BootstrapOptions& options = {});

ComparisonResult compare(const ExplanationMatrix& a, const ExplanationMatrix& b,
                         const BootstrapOptions& options = {});

// kPaired: same text_id on both sides. kTwin: side b holds the twin of side
// a (ids 2k and 2k+1). kRandom: side b is permuted by pairing_seed.
enum class PairingMode { kPaired, kTwin, kRandom };

struct MatrixPair {
  const ExplanationMatrix* a = nullptr;
  const ExplanationMatrix* b = nullptr;
};

// One result per pair, sorted by class of side a and then by its text_id.
// kRandom permutes the b side with a stream keyed by pairing_seed.
std::vector<ComparisonResult> compare_suite(std::span<const MatrixPair> pairs, PairingMode mode,
                                            std::uint64_t pairing_seed,
                                            const BootstrapOptions& options = {});

}  // namespace stabilex::stability
