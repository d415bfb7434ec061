// stabilex command line: corpus generation, ensemble runs, stability and
// comparison reports, box plots.
//
// Exit codes: 0 success, 2 usage, 3 data or validation error, 4 numerical
// failure.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stabilex/corpus.hpp"
#include "stabilex/ensemble.hpp"
#include "stabilex/error.hpp"
#include "stabilex/reportio.hpp"
#include "stabilex/rng.hpp"
#include "stabilex/stability.hpp"
#include "stabilex/textio.hpp"

namespace fs = std::filesystem;
using namespace stabilex;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig: return kExitUsage;
    case ErrorKind::kTrainingDiverged:
    case ErrorKind::kNumericalFailure: return kExitNumeric;
    default: return kExitData;
  }
}

// Builds the echoed command line from resolved values.
class ManifestLine {
 public:
  explicit ManifestLine(std::string sub) : text_("stabilex " + std::move(sub)) {}
  template <typename T>
  ManifestLine& add(const std::string& flag, const T& value) {
    std::ostringstream s;
    if constexpr (std::is_floating_point_v<T>) {
      s << textio::format_double(value);
    } else {
      s << value;
    }
    text_ += " --" + flag + " " + quote(s.str());
    return *this;
  }
  void print() const { std::cout << "manifest: " << text_ << std::endl; }

 private:
  static std::string quote(const std::string& v) {
    if (!v.empty() && v.find_first_of(" \t'\"\\$") == std::string::npos) return v;
    std::string out = "'";
    for (char c : v) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
  }
  std::string text_;
};

void prepare_out_dir(const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw Error(ErrorKind::kIo, dir.string() + " exists and is not a directory");
  }
  fs::create_directories(dir);
}

// Files and directories of .expl matrices, sorted by text_id.
std::vector<stability::ExplanationMatrix> load_matrices(const std::vector<std::string>& paths) {
  std::vector<stability::ExplanationMatrix> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      auto dir = reportio::read_matrix_dir(fs::is_directory(fs::path(p) / "expl") ? fs::path(p) / "expl"
                                                                                : fs::path(p));
      out.insert(out.end(), std::make_move_iterator(dir.begin()), std::make_move_iterator(dir.end()));
    } else {
      out.push_back(reportio::read_matrix(fs::path(p)));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.text_id < b.text_id; });
  return out;
}

std::uint64_t text_seed(std::uint64_t seed, std::int64_t text_id) {
  return derive_key(seed, "text", static_cast<std::uint64_t>(text_id));
}

// ---- gen ----

struct GenArgs {
  std::string variant;
  std::string preset = "desk";
  std::optional<int> count;
  int len = 10;
  std::optional<std::int64_t> seed;
  double test_fraction = 0.1;
  std::string from;
  std::string out;
};

void cmd_gen(const GenArgs& a) {
  const auto variant = corpus::parse_variant(a.variant);
  if (!variant) throw Error(ErrorKind::kInvalidConfig, "unknown variant '" + a.variant + "'");
  const auto preset = ensemble::preset_by_name(a.preset);
  ManifestLine line("gen");
  line.add("variant", a.variant);
  corpus::SyntheticCorpus c;
  if (*variant == corpus::Variant::kOrdered) {
    if (!a.from.empty()) throw Error(ErrorKind::kInvalidConfig, "--from applies to derived variants only");
    const int count = a.count.value_or(preset.corpus_count);
    const std::int64_t seed = a.seed.value_or(7);
    line.add("count", count).add("len", a.len).add("seed", seed).add("test-fraction", a.test_fraction);
    line.add("out", a.out).print();
    c = corpus::gen_ordered(count, a.len, seed, a.test_fraction);
  } else {
    if (a.from.empty()) throw Error(ErrorKind::kInvalidConfig, "--from is required for variant " + a.variant);
    if (a.count) throw Error(ErrorKind::kInvalidConfig, "--count applies to the ordered variant only");
    const std::int64_t seed = a.seed.value_or(*variant == corpus::Variant::kShuffled ? 11 : 13);
    line.add("from", a.from).add("seed", seed).add("out", a.out).print();
    const auto base = corpus::read_corpus(fs::path(a.from));
    switch (*variant) {
      case corpus::Variant::kShuffled: c = corpus::shuffle_variant(base, seed); break;
      case corpus::Variant::kMarkerAbsent:
        c = corpus::marker_absence_variant(base, seed, corpus::MarkerMode::kReplace);
        break;
      default: c = corpus::marker_absence_variant(base, seed, corpus::MarkerMode::kRemove); break;
    }
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  corpus::write_corpus(c, out);
  int per_class[2] = {0, 0};
  for (const auto* split : {&c.train, &c.test}) {
    for (const auto& t : *split) ++per_class[t.label];
  }
  std::cout << "wrote " << out.string() << ": " << c.train.size() << " train, " << c.test.size()
            << " test, classes " << per_class[0] << "/" << per_class[1] << "\n";
}

// ---- run ----

struct RunArgs {
  std::string corpus;
  std::string out;
  std::string preset = "desk";
  std::string from_manifest;
  std::optional<std::uint64_t> base_seed;
  std::optional<int> n_models, subset_size, limit_per_class, epochs, batch_size;
  std::optional<int> d_model, n_heads, d_ff, max_len;
  std::optional<double> alpha, learning_rate, dropout;
  int jobs = 1;
};

void cmd_run(const RunArgs& a) {
  ensemble::RunConfig config;
  std::string corpus_path = a.corpus;
  std::optional<std::uint64_t> expected_digest;
  if (!a.from_manifest.empty()) {
    const auto prior = ensemble::read_manifest(a.from_manifest);
    config = prior.config;
    if (corpus_path.empty()) corpus_path = prior.corpus_ref;
    expected_digest = prior.corpus_digest;
  } else {
    config = ensemble::preset_by_name(a.preset).run;
    config.base_seed = a.base_seed.value_or(7);
    if (a.n_models) config.n_models = *a.n_models;
    if (a.subset_size) config.subset_size = *a.subset_size;
    if (a.limit_per_class) config.limit_per_class = *a.limit_per_class;
    if (a.alpha) config.alpha = *a.alpha;
    if (a.learning_rate) config.train.learning_rate = *a.learning_rate;
    if (a.epochs) config.train.epochs = *a.epochs;
    if (a.batch_size) config.train.batch_size = *a.batch_size;
    if (a.dropout) config.model.dropout_rate = *a.dropout;
    if (a.d_model) config.model.d_model = *a.d_model;
    if (a.n_heads) config.model.n_heads = *a.n_heads;
    if (a.d_ff) config.model.d_ff = *a.d_ff;
    if (a.max_len) config.model.max_len = *a.max_len;
  }
  if (corpus_path.empty()) throw Error(ErrorKind::kInvalidConfig, "--corpus is required");

  ManifestLine line("run");
  line.add("corpus", corpus_path).add("out", a.out).add("base-seed", config.base_seed);
  line.add("n-models", config.n_models).add("subset-size", config.subset_size);
  line.add("alpha", config.alpha).add("limit-per-class", config.limit_per_class);
  line.add("learning-rate", config.train.learning_rate).add("epochs", config.train.epochs);
  line.add("batch-size", config.train.batch_size).add("dropout", config.model.dropout_rate);
  line.add("d-model", config.model.d_model).add("n-heads", config.model.n_heads);
  line.add("d-ff", config.model.d_ff).add("max-len", config.model.max_len);
  line.print();

  if (!fs::exists(corpus_path)) throw Error(ErrorKind::kIo, "corpus " + corpus_path + " does not exist");
  const auto c = corpus::read_corpus(fs::path(corpus_path));
  if (expected_digest && ensemble::corpus_digest(c) != *expected_digest) {
    throw Error(ErrorKind::kIngestRejected, "corpus " + corpus_path + " differs from the one in the manifest");
  }
  const fs::path out(a.out);
  if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out))) {
    throw Error(ErrorKind::kIo, "run directory " + out.string() + " must be new or empty");
  }
  // vocab_size is a property of the corpus; a manifest value is rechecked.
  const int recorded_vocab = config.model.vocab_size;
  config.model.vocab_size = 0;
  if (!a.from_manifest.empty() && recorded_vocab != c.vocab.size()) {
    throw Error(ErrorKind::kIngestRejected, "manifest vocab_size does not match the corpus");
  }
  fs::create_directories(out);
  const auto run = ensemble::execute_run(c, corpus_path, config, out, a.jobs);

  int ok = 0;
  for (const auto& r : run.models) {
    if (r.ok()) {
      ++ok;
    } else {
      std::cerr << "warning: model " << r.model_id << " diverged: " << r.failure << "\n";
    }
  }
  int per_class[2] = {0, 0};
  for (auto id : run.compatible_text_ids) ++per_class[c.find(id)->label];
  if (run.compatible_text_ids.empty()) std::cerr << "warning: no compatible texts\n";
  std::cout << run.run_id << ": " << ok << "/" << run.models.size() << " models trained, "
            << run.selected_model_ids.size() << " equivalent, compatible texts " << per_class[0] << "/"
            << per_class[1] << "\n";
}

// ---- stability ----

struct StabilityArgs {
  std::vector<std::string> expl;
  std::string tag = "run";
  int resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 7;
  std::string out;
};

void cmd_stability(const StabilityArgs& a) {
  ManifestLine line("stability");
  for (const auto& e : a.expl) line.add("expl", e);
  line.add("tag", a.tag).add("resamples", a.resamples).add("level", a.level).add("seed", a.seed);
  line.add("out", a.out).print();
  const auto matrices = load_matrices(a.expl);
  if (matrices.empty()) throw Error(ErrorKind::kInvalidInput, "no explanation matrices found");
  std::vector<reportio::StabilityRow> rows;
  for (const auto& m : matrices) {
    const auto e = stability::mcwme(m, {a.resamples, a.level, text_seed(a.seed, m.text_id)});
    if (!e.excluded_rows.empty()) {
      std::cerr << "warning: text " << m.text_id << ": " << e.excluded_rows.size() << " constant rows excluded\n";
    }
    rows.push_back(reportio::make_row(m, e, a.tag));
  }
  prepare_out_dir(a.out);
  reportio::write_stability_csv(rows, fs::path(a.out) / "stability.csv");
  std::cout << "wrote " << rows.size() << " rows to " << (fs::path(a.out) / "stability.csv").string() << "\n";
}

// ---- compare ----

struct CompareArgs {
  std::vector<std::string> a, b;
  std::string tag_a = "a", tag_b = "b";
  std::string pairing = "paired";
  int resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 7;
  std::string out;
};

void cmd_compare(const CompareArgs& a) {
  static const std::map<std::string, stability::PairingMode> kModes = {
      {"paired", stability::PairingMode::kPaired},
      {"twin", stability::PairingMode::kTwin},
      {"random", stability::PairingMode::kRandom}};
  const auto mode_it = kModes.find(a.pairing);
  if (mode_it == kModes.end()) throw Error(ErrorKind::kInvalidConfig, "unknown pairing '" + a.pairing + "'");
  ManifestLine line("compare");
  for (const auto& p : a.a) line.add("a", p);
  for (const auto& p : a.b) line.add("b", p);
  line.add("tag-a", a.tag_a).add("tag-b", a.tag_b).add("pairing", a.pairing);
  line.add("resamples", a.resamples).add("level", a.level).add("seed", a.seed).add("out", a.out).print();

  const auto side_a = load_matrices(a.a);
  const auto side_b = load_matrices(a.b);
  std::map<std::int64_t, const stability::ExplanationMatrix*> by_id;
  for (const auto& m : side_b) by_id[m.text_id] = &m;
  std::vector<stability::MatrixPair> pairs;
  int unmatched = 0;
  switch (mode_it->second) {
    case stability::PairingMode::kPaired:
    case stability::PairingMode::kTwin: {
      const bool twin = mode_it->second == stability::PairingMode::kTwin;
      for (const auto& m : side_a) {
        // Twin mode pairs each even id with its odd twin.
        if (twin && m.text_id % 2 != 0) continue;
        const auto it = by_id.find(twin ? corpus::twin_of(m.text_id) : m.text_id);
        if (it == by_id.end()) {
          ++unmatched;
          continue;
        }
        pairs.push_back({&m, it->second});
      }
      break;
    }
    case stability::PairingMode::kRandom: {
      const std::size_t n = std::min(side_a.size(), side_b.size());
      unmatched = static_cast<int>(std::max(side_a.size(), side_b.size()) - n);
      for (std::size_t i = 0; i < n; ++i) pairs.push_back({&side_a[i], &side_b[i]});
      break;
    }
  }
  if (unmatched) std::cerr << "warning: " << unmatched << " matrices without a partner were skipped\n";
  if (pairs.empty()) throw Error(ErrorKind::kInvalidPairing, "no pairs to compare");

  const auto results = stability::compare_suite(pairs, mode_it->second, a.seed, {a.resamples, a.level, a.seed});
  std::vector<reportio::StabilityRow> rows;
  for (const auto& r : results) {
    const auto* ma = std::find_if(side_a.data(), side_a.data() + side_a.size(),
                                  [&](const auto& m) { return m.text_id == r.text_id_a; });
    rows.push_back(reportio::make_row(*ma, r.estimate_a, a.tag_a));
  }
  for (const auto& r : results) rows.push_back(reportio::make_row(*by_id.at(r.text_id_b), r.estimate_b, a.tag_b));

  prepare_out_dir(a.out);
  const fs::path out(a.out);
  reportio::write_comparison_csv(results, out / "comparison.csv");
  reportio::write_stability_csv(rows, out / "stability.csv");
  reportio::emit_comparison_plot(results, a.tag_a, a.tag_b, out / "comparison_plot.svg");
  const auto significant = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.significant; });
  std::cout << results.size() << " pairs, " << significant << " significant; wrote " << out.string() << "\n";
}

// ---- boxplot ----

struct BoxplotArgs {
  std::vector<std::string> expl;
  std::vector<std::int64_t> text_ids;
  std::string out;
};

void cmd_boxplot(const BoxplotArgs& a) {
  ManifestLine line("boxplot");
  for (const auto& e : a.expl) line.add("expl", e);
  for (auto id : a.text_ids) line.add("text-id", id);
  line.add("out", a.out).print();
  const auto matrices = load_matrices(a.expl);
  std::vector<const stability::ExplanationMatrix*> chosen;
  for (const auto& m : matrices) {
    if (a.text_ids.empty() || std::find(a.text_ids.begin(), a.text_ids.end(), m.text_id) != a.text_ids.end()) {
      chosen.push_back(&m);
    }
  }
  if (chosen.empty()) throw Error(ErrorKind::kInvalidInput, "no matching explanation matrices");
  prepare_out_dir(a.out);
  for (const auto* m : chosen) {
    reportio::emit_boxplot(*m, fs::path(a.out) / ("boxplot_" + std::to_string(m->text_id) + ".svg"));
  }
  std::cout << "wrote " << chosen.size() << " box plots to " << a.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stabilex: explanation stability of seed-varied classifier ensembles"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a corpus or derive a variant from an ordered corpus");
  g->add_option("--variant", gen.variant, "ordered | shuffled | marker-absent | marker-removed")->required();
  g->add_option("--preset", gen.preset, "Scale preset for the default count: desk | paper")->capture_default_str();
  g->add_option("--count", gen.count, "Number of sentences, even (default from preset)");
  g->add_option("--len", gen.len, "Words per sentence")->capture_default_str();
  g->add_option("--seed", gen.seed, "Generation seed (default 7 ordered, 11 shuffled, 13 marker variants)");
  g->add_option("--test-fraction", gen.test_fraction, "Share of twin pairs in the test split")->capture_default_str();
  g->add_option("--from", gen.from, "Ordered corpus to derive a variant from");
  g->add_option("--out", gen.out, "Output corpus file")->required();

  RunArgs run;
  auto* r = app.add_subcommand("run", "Train an ensemble and write checkpoints, matrices and run.manifest");
  r->add_option("--corpus", run.corpus, "Corpus file");
  r->add_option("--out", run.out, "Run directory (must be new or empty)")->required();
  auto* from = r->add_option("--from-manifest", run.from_manifest, "Repeat the run recorded in a run.manifest");
  std::vector<CLI::Option*> config_opts = {
      r->add_option("--preset", run.preset, "desk | paper")->capture_default_str(),
      r->add_option("--base-seed", run.base_seed, "Seed of the shared body and of the model seeds (default 7)"),
      r->add_option("--n-models", run.n_models, "Models to train"),
      r->add_option("--subset-size", run.subset_size, "Equivalent models to keep, 0 for all"),
      r->add_option("--alpha", run.alpha, "Level of the equivalence test, in (0,1]"),
      r->add_option("--limit-per-class", run.limit_per_class, "Compatible texts per class"),
      r->add_option("--learning-rate", run.learning_rate, "Adam step size"),
      r->add_option("--epochs", run.epochs, "Training epochs"),
      r->add_option("--batch-size", run.batch_size, "Minibatch size"),
      r->add_option("--dropout", run.dropout, "Dropout rate"),
      r->add_option("--d-model", run.d_model, "Embedding width"),
      r->add_option("--n-heads", run.n_heads, "Attention heads"),
      r->add_option("--d-ff", run.d_ff, "Feed-forward width"),
      r->add_option("--max-len", run.max_len, "Maximum tokens per text"),
  };
  for (auto* o : config_opts) from->excludes(o);
  r->add_option("--jobs", run.jobs, "Worker threads; results do not depend on it")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  StabilityArgs stab;
  auto* s = app.add_subcommand("stability", "MCWME with bootstrap intervals for explanation matrices");
  s->add_option("--expl", stab.expl, ".expl files, directories of them, or run directories")->required();
  s->add_option("--tag", stab.tag, "Tag written to the tag column")->capture_default_str();
  s->add_option("--resamples", stab.resamples, "Bootstrap resamples")->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--level", stab.level, "Interval level")->capture_default_str()->check(CLI::Range(0.5, 0.9999));
  s->add_option("--seed", stab.seed, "Bootstrap seed")->capture_default_str();
  s->add_option("--out", stab.out, "Output directory")->required();

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Compare the stability of two sets of explanation matrices");
  c->add_option("--a", cmp.a, "First set: .expl files, directories or run directories")->required();
  c->add_option("--b", cmp.b, "Second set")->required();
  c->add_option("--tag-a", cmp.tag_a, "Label of the first set")->capture_default_str();
  c->add_option("--tag-b", cmp.tag_b, "Label of the second set")->capture_default_str();
  c->add_option("--pairing", cmp.pairing, "paired (same text id) | twin (id 2k with 2k+1) | random")
      ->capture_default_str();
  c->add_option("--resamples", cmp.resamples, "Bootstrap resamples")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--level", cmp.level, "Interval level")->capture_default_str()->check(CLI::Range(0.5, 0.9999));
  c->add_option("--seed", cmp.seed, "Pairing and bootstrap seed")->capture_default_str();
  c->add_option("--out", cmp.out, "Output directory")->required();

  BoxplotArgs box;
  auto* b = app.add_subcommand("boxplot", "Per-token relevance box plots");
  b->add_option("--expl", box.expl, ".expl files, directories or run directories")->required();
  b->add_option("--text-id", box.text_ids, "Only these texts");
  b->add_option("--out", box.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (g->parsed()) cmd_gen(gen);
    if (r->parsed()) cmd_run(run);
    if (s->parsed()) cmd_stability(stab);
    if (c->parsed()) cmd_compare(cmp);
    if (b->parsed()) cmd_boxplot(box);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io-error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
