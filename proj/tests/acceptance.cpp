// Acceptance run: the desk pipeline through the stabilex executable, then
// one PASS/FAIL line per criterion. Exits 0 when every check could be
// evaluated; --strict also fails on any FAIL line.

#include <CLI11.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "stabilex/corpus.hpp"
#include "stabilex/ensemble.hpp"
#include "stabilex/error.hpp"
#include "stabilex/relprop.hpp"
#include "stabilex/reportio.hpp"
#include "stabilex/stability.hpp"
#include "stabilex/tinyformer.hpp"

namespace fs = std::filesystem;
using namespace stabilex;
using stability::ExplanationMatrix;

namespace {

// Tolerances.
constexpr double kOrderedMedianMin = 0.95;
constexpr double kContextSignificantMin = 0.70;
constexpr double kClassSignificantMin = 0.60;
constexpr double kNoiseBand = 0.1;
constexpr double kNameArgmaxMin = 0.90;
constexpr int kMinCompatibleTexts = 40;
constexpr double kRuntimeBudgetSeconds = 300.0;
constexpr double kOracleTolerance = 1e-12;
constexpr double kGradientTolerance = 1e-4;
constexpr double kConservationTolerance = 1e-3;
constexpr double kCoverageLow = 0.92;
constexpr double kCoverageHigh = 0.98;

// Lines go to stdout and to report.txt in the work directory.
struct Report {
  int passed = 0;
  int failed = 0;
  std::ofstream file;

  void print(const std::string& text) {
    std::cout << text << std::endl;
    file << text << '\n';
  }
  void line(bool ok, const std::string& name, const std::string& detail) {
    (ok ? passed : failed)++;
    print((ok ? "PASS " : "FAIL ") + name + ": " + detail);
  }
};

std::string g_cli;
fs::path g_work;

void sh(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >>" + (g_work / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw std::runtime_error("command failed (see cli.log): stabilex " + args);
  }
}

std::string path(const fs::path& p) { return p.string(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  return reportio::quantile_sorted(v, 0.5);
}

std::vector<double> mcwme_of(const std::vector<reportio::StabilityRow>& rows, int label = -1) {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (label < 0 || r.label == label) out.push_back(r.mcwme);
  }
  return out;
}

double share_significant(const std::vector<reportio::ComparisonRow>& rows) {
  if (rows.empty()) return 0.0;
  const auto n = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.significant; });
  return static_cast<double>(n) / static_cast<double>(rows.size());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Relative paths of regular files under root, sorted.
std::vector<fs::path> tree(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Empty string when identical, else the first difference.
std::string tree_diff(const fs::path& a, const fs::path& b) {
  const auto ta = tree(a), tb = tree(b);
  if (ta != tb) return "file lists differ under " + a.string();
  for (const auto& f : ta) {
    if (slurp(a / f) != slurp(b / f)) return (a / f).string() + " differs";
  }
  return {};
}

// ---- pipeline ----

struct Runs {
  double ordered_seconds = 0.0;
};

Runs run_pipeline(const fs::path& out, bool with_corpora) {
  const auto corpora = g_work / "corpora";
  if (with_corpora) {
    fs::create_directories(corpora);
    sh("gen --variant ordered --out " + path(corpora / "ordered.corpus"));
    sh("gen --variant shuffled --from " + path(corpora / "ordered.corpus") + " --out " +
       path(corpora / "shuffled.corpus"));
    sh("gen --variant marker-absent --from " + path(corpora / "ordered.corpus") + " --out " +
       path(corpora / "marker.corpus"));
  }
  Runs r;
  fs::create_directories(out);
  for (const char* v : {"ordered", "shuffled", "marker"}) {
    const auto start = std::chrono::steady_clock::now();
    if (with_corpora) {
      sh(std::string("run --corpus ") + path(corpora / (std::string(v) + ".corpus")) + " --out " +
         path(out / v));
    } else {
      sh(std::string("run --from-manifest ") + path(g_work / "first" / v / "run.manifest") + " --out " +
         path(out / v));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (std::string(v) == "ordered") r.ordered_seconds = secs;
    sh(std::string("stability --expl ") + path(out / v) + " --tag " + v + " --out " +
       path(out / "stability" / v));
  }
  sh("compare --a " + path(out / "ordered") + " --b " + path(out / "shuffled") +
     " --tag-a ordered --tag-b shuffled --pairing paired --out " + path(out / "context"));
  sh("compare --a " + path(out / "marker") + " --b " + path(out / "marker") +
     " --tag-a John --tag-b markerless --pairing twin --out " + path(out / "class"));
  return r;
}

// ---- in-process property checks ----

ExplanationMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
  ExplanationMatrix x;
  x.tokens.assign(rows.front().size(), "t");
  for (std::size_t i = 0; i < rows.size(); ++i) x.model_ids.push_back("m" + std::to_string(i));
  x.rows = rows;
  return x;
}

double point(const std::vector<std::vector<double>>& rows) { return stability::mcwme_point(to_matrix(rows)).mcwme; }

std::string metric_suite() {
  std::mt19937_64 rng(11);
  std::string fails;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) fails += std::string(fails.empty() ? "" : ", ") + what;
  };
  expect(point({{1, 3, 2, 5}, {1, 3, 2, 5}, {1, 3, 2, 5}}) == 1.0, "identical rows");
  {
    const auto rows = oracle::random_matrix(rng, 2, 10);
    expect(std::abs(point(rows) - static_cast<double>(oracle::pearson(rows[0], rows[1]))) < kOracleTolerance,
           "m=2 reduction");
  }
  {
    bool ok = true;
    for (int t = 0; t < 10; ++t) ok = ok && std::abs(point(oracle::random_matrix(rng, 100, 10))) < kNoiseBand;
    expect(ok, "noise band");
  }
  {
    auto rows = oracle::random_matrix(rng, 6, 9);
    for (auto& r : rows) r[0] += 3.0;
    const double base = point(rows);
    auto affine = rows;
    for (auto& r : affine) {
      for (auto& v : r) v = 2.5 * v - 7.0;
    }
    auto row_perm = rows;
    std::reverse(row_perm.begin(), row_perm.end());
    auto col_perm = rows;
    for (auto& r : col_perm) std::rotate(r.begin(), r.begin() + 4, r.end());
    expect(std::abs(point(affine) - base) < kOracleTolerance, "affine invariance");
    expect(std::abs(point(row_perm) - base) < kOracleTolerance, "row permutation");
    expect(std::abs(point(col_perm) - base) < kOracleTolerance, "column permutation");
  }
  {
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const auto rows = oracle::random_matrix(rng, 10, 8);
      worst = std::max(worst, std::abs(point(rows) - oracle::mcwme(rows)));
    }
    expect(worst < kOracleTolerance, "oracle agreement");
  }
  return fails;
}

tinyformer::ModelConfig small_config() {
  tinyformer::ModelConfig c;
  c.vocab_size = 20;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_len = 6;
  c.dropout_rate = 0.2;
  return c;
}

// Worst relative error of central differences over every coordinate, kinks
// of the ReLU pattern skipped.
double gradient_check() {
  auto model = tinyformer::init(small_config(), {1, 2});
  Stream bias(1, "test-bias");
  for (auto* b : {&model.w.b1, &model.w.b2, &model.w.bc}) {
    for (Eigen::Index i = 0; i < b->size(); ++i) b->data()[i] = bias.normal(0.0, 0.1);
  }
  const std::vector<int> tokens{4, 11, 0, 17};
  const int label = 1;
  const double h = 1e-4;
  auto run = [&] {
    Stream drop(99, "gradcheck-dropout");
    return tinyformer::forward(model, tokens, true, &drop);
  };
  const auto base = run();
  const auto grad = tinyformer::backward(model, base, label);
  const auto pattern = (base.Hpre.array() > 0.0).eval();
  auto params = model.w.tensors();
  const auto grads = grad.tensors();
  double worst = 0.0;
  for (std::size_t t = 0; t < tinyformer::Weights::kCount; ++t) {
    for (Eigen::Index i = 0; i < params[t]->size(); ++i) {
      double& w = params[t]->data()[i];
      const double saved = w;
      w = saved + h;
      const auto plus = run();
      w = saved - h;
      const auto minus = run();
      w = saved;
      if (((plus.Hpre.array() > 0.0) != pattern).any() || ((minus.Hpre.array() > 0.0) != pattern).any()) continue;
      const double numeric = (tinyformer::loss(plus, label) - tinyformer::loss(minus, label)) / (2 * h);
      const double analytic = grads[t]->data()[i];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
    }
  }
  return worst;
}

double conservation_check() {
  tinyformer::ModelConfig c;
  c.vocab_size = 30;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_len = 12;
  Stream s(1, "conservation");
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t seed = static_cast<std::uint64_t>(i % 10) + 1;
    const auto model = tinyformer::init(c, {seed, seed * 31 + 1});
    std::vector<int> tokens(1 + s.below(12));
    for (auto& t : tokens) t = static_cast<int>(s.below(30));
    const auto e = relprop::explain(model, tokens);
    double sum = 0.0;
    for (double r : e.relevances) sum += r;
    const double logit = tinyformer::forward(model, tokens).logits(e.target_class);
    worst = std::max(worst, std::abs(sum - logit) / std::abs(logit));
  }
  return worst;
}

double coverage_check(double& reference) {
  std::mt19937_64 rng(2024);
  const std::vector<double> signal{1.2, -0.4, 0.3, 2.0, -1.1, 0.0, 0.8, -0.6, 1.5, -2.0};
  std::normal_distribution<double> normal;
  auto draw = [&](std::size_t m) {
    std::vector<std::vector<double>> rows(m, signal);
    for (auto& r : rows) {
      for (auto& v : r) v += normal(rng);
    }
    return to_matrix(rows);
  };
  reference = stability::mcwme_point(draw(5000)).mcwme;
  int covered = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const auto e = stability::mcwme(draw(20), {1000, 0.95, static_cast<std::uint64_t>(t)});
    covered += e.ci_low <= reference && reference <= e.ci_high;
  }
  return static_cast<double>(covered) / trials;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stabilex acceptance run"};
  std::string work = "stabilex-acceptance";
  bool strict = false;
  g_cli = STABILEX_CLI;
  app.add_option("--work", work, "Scratch directory, cleared first")->capture_default_str();
  app.add_option("--cli", g_cli, "stabilex executable")->capture_default_str();
  app.add_flag("--strict", strict, "Exit 1 when any criterion fails");
  CLI11_PARSE(app, argc, argv);

  g_work = fs::absolute(work);
  Report report;
  try {
    fs::remove_all(g_work);
    fs::create_directories(g_work);
    report.file.open(g_work / "report.txt");
    std::cout << "work directory " << g_work.string() << std::endl;

    const auto first = g_work / "first";
    const auto timing = run_pipeline(first, true);

    // Accuracy.
    {
      const auto run = ensemble::read_manifest(first / "ordered" / "run.manifest");
      int perfect = 0;
      for (const auto& m : run.models) perfect += m.ok() && m.correct == m.total;
      const bool ok = perfect == 20 && static_cast<int>(run.models.size()) == 20 &&
                      timing.ordered_seconds < kRuntimeBudgetSeconds;
      report.line(ok, "ordered-corpus accuracy",
                  std::to_string(perfect) + "/" + std::to_string(run.models.size()) +
                      " models at test accuracy 1.0, ensemble run " + fmt(timing.ordered_seconds, 1) + " s");
    }

    const auto ordered = reportio::read_stability_csv(first / "stability" / "ordered" / "stability.csv");
    const auto shuffled = reportio::read_stability_csv(first / "stability" / "shuffled" / "stability.csv");
    const auto marker = reportio::read_stability_csv(first / "stability" / "marker" / "stability.csv");
    const double ordered_median = median(mcwme_of(ordered));

    report.line(static_cast<int>(ordered.size()) >= kMinCompatibleTexts && ordered_median >= kOrderedMedianMin,
                "ordered-corpus stability",
                "median MCWME " + fmt(ordered_median) + " over " + std::to_string(ordered.size()) +
                    " compatible texts (class 0 " + fmt(median(mcwme_of(ordered, 0))) + ", class 1 " +
                    fmt(median(mcwme_of(ordered, 1))) + ")");

    {
      const auto cmp = reportio::read_comparison_csv(first / "context" / "comparison.csv");
      const double shuffled_median = median(mcwme_of(shuffled));
      const double sig = share_significant(cmp);
      report.line(shuffled_median < ordered_median && sig >= kContextSignificantMin, "context dependency",
                  "shuffled median " + fmt(shuffled_median) + " vs ordered " + fmt(ordered_median) + ", " +
                      std::to_string(static_cast<int>(std::lround(sig * cmp.size()))) + "/" +
                      std::to_string(cmp.size()) + " pairs significant (" + fmt(100 * sig, 1) + "%)");
    }

    {
      const auto cmp = reportio::read_comparison_csv(first / "class" / "comparison.csv");
      const auto john = mcwme_of(marker, 0), markerless = mcwme_of(marker, 1);
      const double sig = share_significant(cmp);
      const double lowest = markerless.empty() ? std::nan("") : *std::min_element(markerless.begin(), markerless.end());
      const bool ok = !markerless.empty() && median(markerless) < median(john) && sig >= kClassSignificantMin &&
                      lowest > kNoiseBand;
      report.line(ok, "class dependency",
                  "markerless median " + fmt(median(markerless)) + " vs John " + fmt(median(john)) + ", " +
                      std::to_string(static_cast<int>(std::lround(sig * cmp.size()))) + "/" +
                      std::to_string(cmp.size()) + " twin pairs significant, markerless minimum " + fmt(lowest));
    }

    {
      const auto matrices = reportio::read_matrix_dir(first / "ordered" / "expl");
      int hits = 0;
      for (const auto& m : matrices) {
        std::vector<double> mean(m.width(), 0.0);
        for (const auto& row : m.rows) {
          for (std::size_t i = 0; i < row.size(); ++i) mean[i] += row[i] / static_cast<double>(m.models());
        }
        const auto& top = m.tokens[static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin())];
        hits += top == corpus::kClass0Name || top == corpus::kClass1Name;
      }
      const double share = matrices.empty() ? 0.0 : static_cast<double>(hits) / matrices.size();
      report.line(share >= kNameArgmaxMin, "discriminant-word attribution",
                  std::to_string(hits) + "/" + std::to_string(matrices.size()) +
                      " ordered texts have the name as the mean-explanation argmax");
    }

    {
      const auto fails = metric_suite();
      report.line(fails.empty(), "metric property suite",
                  fails.empty() ? "identity, m=2, noise, invariances, oracle agreement" : "failed: " + fails);
    }

    {
      const double grad = gradient_check();
      const double cons = conservation_check();
      double reference = 0.0;
      const double cov = coverage_check(reference);
      const bool ok = grad < kGradientTolerance && cons < kConservationTolerance && cov >= kCoverageLow &&
                      cov <= kCoverageHigh;
      std::ostringstream d;
      d << "gradient relative error " << grad << ", conservation residual " << cons << ", coverage "
        << fmt(cov, 3) << " of reference " << fmt(reference);
      report.line(ok, "numerical correctness", d.str());
    }

    {
      const auto second = g_work / "second";
      run_pipeline(second, false);
      std::string diff;
      for (const char* d : {"ordered", "shuffled", "marker", "stability", "context", "class"}) {
        if (diff.empty()) diff = tree_diff(first / d, second / d);
      }
      report.line(diff.empty(), "determinism",
                  diff.empty() ? "rerun from manifests reproduces run directories, CSVs and SVGs byte for byte"
                               : diff);
    }
  } catch (const std::exception& e) {
    report.print(std::string("ERROR ") + e.what());
    return 2;
  }
  report.print("acceptance: " + std::to_string(report.passed) + " passed, " + std::to_string(report.failed) +
               " failed");
  return strict && report.failed ? 1 : 0;
}
