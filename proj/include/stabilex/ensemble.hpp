#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stabilex/corpus.hpp"
#include "stabilex/stability.hpp"
#include "stabilex/tinyformer.hpp"

// Seed-varied ensemble training, equivalent-model and compatible-text
// selection, and explanation matrices for a run directory.
namespace stabilex::ensemble {

struct ModelRecord {
  std::string model_id;
  std::uint64_t model_seed = 0;
  int correct = 0;  // on the test split
  int total = 0;
  std::string failure;  // empty when training succeeded
  std::optional<tinyformer::Classifier> model;

  bool ok() const { return failure.empty(); }
  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct RunConfig {
  tinyformer::ModelConfig model;
  tinyformer::TrainConfig train;
  std::uint64_t base_seed = 0;
  int n_models = 20;
  double alpha = 0.05;
  // Size m of the equivalent subset; 0 keeps every equivalent model,
  // otherwise the first subset_size in model order.
  int subset_size = 0;
  int limit_per_class = 40;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Corpus size plus run configuration for one scale.
struct Preset {
  std::string name;
  int corpus_count = 2000;
  int sentence_len = 10;
  RunConfig run;
};

// desk: 20 models on 2000 sentences. paper: 200 models, m = 100, 10000
// sentences, learning rate 2e-5 and one epoch.
Preset desk_preset();
Preset paper_preset();
// Throws kInvalidConfig for unknown names.
Preset preset_by_name(std::string_view name);

struct EnsembleRun {
  std::string run_id;
  std::string corpus_ref;        // path the corpus was read from, if any
  std::uint64_t corpus_digest = 0;
  corpus::Variant variant = corpus::Variant::kOrdered;
  RunConfig config;
  std::vector<ModelRecord> models;
  std::vector<std::string> selected_model_ids;
  std::vector<std::int64_t> compatible_text_ids;
};

// Distinct per-model seeds derived from base_seed.
std::vector<std::uint64_t> derive_model_seeds(std::uint64_t base_seed, int n_models);

std::string model_id_for(int index);

// FNV-1a over the serialized corpus; identifies the data a run used.
std::uint64_t corpus_digest(const corpus::SyntheticCorpus& corpus);

// Trains every member on up to `jobs` threads. Results do not depend on
// jobs. A member whose training diverges is recorded with its failure and
// left out of later steps.
EnsembleRun run_ensemble(const corpus::SyntheticCorpus& corpus, const RunConfig& config,
                         int jobs = 1);

// Two-sided exact binomial p-value of k successes in n trials at rate p,
// summing outcomes no more likely than k.
double binomial_two_sided(int k, int n, double p);

// Keeps models whose correct count passes the exact binomial test against
// the pooled accuracy of the current subset. While some model fails, the
// models with the smallest p-value are dropped and the pooled accuracy is
// recomputed. alpha lies in (0, 1]; with alpha = 1 only models tied with
// the final pooled accuracy survive. Throws kInsufficientModels when fewer
// than two remain.
std::vector<std::string> select_equivalent(const EnsembleRun& run, double alpha);

// Test texts on which all selected models agree, in corpus order, at most
// limit_per_class per agreed label.
std::vector<std::int64_t> select_compatible(const EnsembleRun& run,
                                            const corpus::SyntheticCorpus& corpus,
                                            int limit_per_class, int jobs = 1);

std::vector<stability::ExplanationMatrix> build_matrices(const EnsembleRun& run,
                                                         const corpus::SyntheticCorpus& corpus,
                                                         const std::vector<std::int64_t>& text_ids,
                                                         int jobs = 1);

// Full pipeline into `root`: models/<id>.ckpt, expl/<text_id>.expl and
// run.manifest. Runs select_equivalent and select_compatible with the
// config values.
EnsembleRun execute_run(const corpus::SyntheticCorpus& corpus, const std::string& corpus_ref,
                        const RunConfig& config, const std::filesystem::path& root, int jobs = 1);

void write_manifest(const EnsembleRun& run, const std::filesystem::path& path);
// Models are listed without weights.
EnsembleRun read_manifest(const std::filesystem::path& path);

// Loads models/<id>.ckpt for every selected model.
void load_selected_models(EnsembleRun& run, const std::filesystem::path& root);

}  // namespace stabilex::ensemble
