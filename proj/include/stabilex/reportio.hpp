#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stabilex/stability.hpp"

// Explanation-matrix files, stability and comparison CSVs, and SVG plots.
// Every writer is byte-deterministic for equal input.
namespace stabilex::reportio {

// .expl text format:
//   #stabilex-expl v1
//   #text_id <int>
//   #label <0|1>
//   #tokens <tok>\t<tok>...
//   <model_id>\t<r_0>\t...\t<r_{n-1}>     one line per model
// Values are written as shortest round-trip decimals. Readers reject bad
// files with Error(kIngestRejected) naming the line.
void write_matrix(const stability::ExplanationMatrix& matrix, std::ostream& out);
void write_matrix(const stability::ExplanationMatrix& matrix, const std::filesystem::path& path);
stability::ExplanationMatrix read_matrix(std::istream& in, const std::string& source = "<stream>");
stability::ExplanationMatrix read_matrix(const std::filesystem::path& path);

// All *.expl files of a directory, sorted by text_id.
std::vector<stability::ExplanationMatrix> read_matrix_dir(const std::filesystem::path& dir);

struct StabilityRow {
  std::int64_t text_id = 0;
  int label = 0;
  std::string tag;
  int models = 0;
  double mcwme = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;

  friend bool operator==(const StabilityRow&, const StabilityRow&) = default;
};

StabilityRow make_row(const stability::ExplanationMatrix& matrix,
                      const stability::StabilityEstimate& estimate, const std::string& tag);

// Header: text_id,class,tag,m,mcwme,ci_low,ci_high
void write_stability_csv(std::span<const StabilityRow> rows, std::ostream& out);
void write_stability_csv(std::span<const StabilityRow> rows, const std::filesystem::path& path);
std::vector<StabilityRow> read_stability_csv(std::istream& in);
std::vector<StabilityRow> read_stability_csv(const std::filesystem::path& path);

struct ComparisonRow {
  std::string pair_id;
  double diff = 0.0;
  double diff_ci_low = 0.0;
  double diff_ci_high = 0.0;
  bool significant = false;

  friend bool operator==(const ComparisonRow&, const ComparisonRow&) = default;
};

ComparisonRow make_row(const stability::ComparisonResult& result);

// Header: pair_id,diff,diff_ci_low,diff_ci_high,significant
void write_comparison_csv(std::span<const stability::ComparisonResult> results, std::ostream& out);
void write_comparison_csv(std::span<const stability::ComparisonResult> results,
                          const std::filesystem::path& path);
std::vector<ComparisonRow> read_comparison_csv(std::istream& in);
std::vector<ComparisonRow> read_comparison_csv(const std::filesystem::path& path);

// Side-by-side point estimates with CI bars for the two series, a dashed
// separator between the classes (omitted when one class is empty) and a
// cross above every pair whose difference is not significant. Results are
// expected in compare_suite order.
std::string comparison_svg(std::span<const stability::ComparisonResult> results,
                           const std::string& tag_a, const std::string& tag_b);
// Writes the SVG and a companion CSV (same stem, .csv) with the plotted
// values: pair_id,class,mcwme_a,ci_low_a,ci_high_a,mcwme_b,ci_low_b,ci_high_b,significant
void emit_comparison_plot(std::span<const stability::ComparisonResult> results,
                          const std::string& tag_a, const std::string& tag_b,
                          const std::filesystem::path& svg_path);

// Per-token box plot (Tukey whiskers at 1.5 IQR) of one matrix.
std::string boxplot_svg(const stability::ExplanationMatrix& matrix);
void emit_boxplot(const stability::ExplanationMatrix& matrix, const std::filesystem::path& svg_path);

// Type-7 sample quantile of sorted values.
double quantile_sorted(std::span<const double> sorted, double q);

}  // namespace stabilex::reportio
