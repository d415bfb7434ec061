#include "stabilex/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "stabilex/error.hpp"
#include "stabilex/relprop.hpp"
#include "stabilex/reportio.hpp"
#include "stabilex/rng.hpp"
#include "stabilex/textio.hpp"

namespace stabilex::ensemble {
namespace {

namespace fs = std::filesystem;

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index writes its
// own slot, so output never depends on scheduling. The first exception is
// rethrown after all workers stop.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::clamp(jobs, 1, std::max(1, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<const ModelRecord*> selected_records(const EnsembleRun& run) {
  std::vector<const ModelRecord*> out;
  for (const auto& id : run.selected_model_ids) {
    const auto it = std::find_if(run.models.begin(), run.models.end(),
                                 [&](const ModelRecord& r) { return r.model_id == id; });
    if (it == run.models.end() || !it->model) {
      throw Error(ErrorKind::kInvalidInput, "selected model " + id + " is not loaded");
    }
    out.push_back(&*it);
  }
  if (out.size() < 2) {
    throw Error(ErrorKind::kInsufficientModels, "need at least 2 selected models, have " +
                                                     std::to_string(out.size()));
  }
  return out;
}

double log_binomial_pmf(int k, int n, double p) {
  if (p <= 0.0) return k == 0 ? 0.0 : -INFINITY;
  if (p >= 1.0) return k == n ? 0.0 : -INFINITY;
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
         k * std::log(p) + (n - k) * std::log1p(-p);
}

}  // namespace

Preset desk_preset() {
  Preset p;
  p.name = "desk";
  p.run.train.learning_rate = 3e-3;
  return p;
}

Preset paper_preset() {
  Preset p;
  p.name = "paper";
  p.corpus_count = 10000;
  p.run.n_models = 200;
  p.run.subset_size = 100;
  p.run.train.learning_rate = 2e-5;
  p.run.train.epochs = 1;
  return p;
}

Preset preset_by_name(std::string_view name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw Error(ErrorKind::kInvalidConfig, "unknown preset '" + std::string(name) + "'");
}

std::vector<std::uint64_t> derive_model_seeds(std::uint64_t base_seed, int n_models) {
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; static_cast<int>(seeds.size()) < n_models; ++i) {
    const auto s = derive_key(base_seed, "model-seed", i);
    // Collisions are astronomically unlikely; skip them anyway.
    if (seen.insert(s).second) seeds.push_back(s);
  }
  return seeds;
}

std::string model_id_for(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "m%03d", index);
  return buf;
}

std::uint64_t corpus_digest(const corpus::SyntheticCorpus& corpus) {
  std::ostringstream out;
  corpus::write_corpus(corpus, out);
  return hash_tag(out.str());
}

EnsembleRun run_ensemble(const corpus::SyntheticCorpus& corpus, const RunConfig& config,
                         int jobs) {
  if (config.n_models < 2) {
    throw Error(ErrorKind::kInvalidConfig, "n_models must be at least 2");
  }
  if (!(config.alpha > 0.0 && config.alpha <= 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "alpha must lie in (0,1]");
  }
  if (config.subset_size < 0 || config.subset_size == 1) {
    throw Error(ErrorKind::kInvalidConfig, "subset_size must be 0 or at least 2");
  }
  if (config.limit_per_class < 1) {
    throw Error(ErrorKind::kInvalidConfig, "limit_per_class must be positive");
  }
  if (corpus.test.empty()) throw Error(ErrorKind::kInvalidInput, "corpus has no test split");
  config.train.validate();

  EnsembleRun run;
  run.corpus_digest = corpus_digest(corpus);
  run.variant = corpus.variant;
  run.config = config;
  if (run.config.model.vocab_size == 0) run.config.model.vocab_size = corpus.vocab.size();
  run.config.model.validate();
  run.run_id = "run-" + hex64(derive_key(run.corpus_digest, "run", config.base_seed));

  const auto seeds = derive_model_seeds(config.base_seed, config.n_models);
  run.models.resize(seeds.size());
  parallel_for(config.n_models, jobs, [&](int i) {
    auto& rec = run.models[static_cast<std::size_t>(i)];
    rec.model_id = model_id_for(i);
    rec.model_seed = seeds[static_cast<std::size_t>(i)];
    rec.total = static_cast<int>(corpus.test.size());
    try {
      auto result = tinyformer::train(corpus, run.config.model, config.train,
                                      {config.base_seed, rec.model_seed});
      rec.correct = static_cast<int>(std::lround(*result.metrics.test_accuracy * rec.total));
      rec.model = std::move(result.model);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kTrainingDiverged) throw;
      rec.failure = e.what();
    }
  });
  return run;
}

double binomial_two_sided(int k, int n, double p) {
  if (n <= 0 || k < 0 || k > n) throw Error(ErrorKind::kInvalidInput, "binomial: need 0 <= k <= n, n > 0");
  const double observed = log_binomial_pmf(k, n, p);
  // Relative slack so outcomes tied with k in exact arithmetic count.
  const double cutoff = observed + 1e-7;
  double total = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double lp = log_binomial_pmf(i, n, p);
    if (lp <= cutoff) total += std::exp(lp);
  }
  return std::min(1.0, total);
}

std::vector<std::string> select_equivalent(const EnsembleRun& run, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorKind::kInvalidConfig, "alpha must lie in (0,1]");
  std::vector<const ModelRecord*> alive;
  for (const auto& r : run.models) {
    if (r.ok()) alive.push_back(&r);
  }
  while (alive.size() >= 2) {
    long long correct = 0;
    long long total = 0;
    for (const auto* r : alive) {
      correct += r->correct;
      total += r->total;
    }
    const double pooled = static_cast<double>(correct) / static_cast<double>(total);
    std::vector<double> p(alive.size());
    for (std::size_t i = 0; i < alive.size(); ++i) {
      p[i] = binomial_two_sided(alive[i]->correct, alive[i]->total, pooled);
    }
    const double worst = *std::min_element(p.begin(), p.end());
    // The slack lets p-values that are 1 up to rounding pass alpha = 1.
    if (worst >= alpha - 1e-12) break;
    // Equal counts give bitwise-equal p-values, so ties drop together and
    // the result does not depend on model order.
    std::vector<const ModelRecord*> keep;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (p[i] != worst) keep.push_back(alive[i]);
    }
    alive = std::move(keep);
  }
  if (alive.size() < 2) {
    throw Error(ErrorKind::kInsufficientModels,
                "fewer than 2 models are statistically equivalent at alpha " +
                    textio::format_double(alpha));
  }
  std::vector<std::string> ids;
  for (const auto& r : run.models) {
    if (std::find(alive.begin(), alive.end(), &r) != alive.end()) ids.push_back(r.model_id);
  }
  return ids;
}

std::vector<std::int64_t> select_compatible(const EnsembleRun& run,
                                            const corpus::SyntheticCorpus& corpus,
                                            int limit_per_class, int jobs) {
  if (limit_per_class < 1) throw Error(ErrorKind::kInvalidConfig, "limit_per_class must be positive");
  const auto models = selected_records(run);
  // -1 marks disagreement.
  std::vector<int> agreed(corpus.test.size(), -1);
  parallel_for(static_cast<int>(corpus.test.size()), jobs, [&](int i) {
    const auto ids = corpus.vocab.encode(corpus.test[static_cast<std::size_t>(i)].words);
    const int first = tinyformer::predict(*models.front()->model, ids);
    for (std::size_t k = 1; k < models.size(); ++k) {
      if (tinyformer::predict(*models[k]->model, ids) != first) return;
    }
    agreed[static_cast<std::size_t>(i)] = first;
  });
  std::vector<std::int64_t> out;
  int taken[2] = {0, 0};
  for (std::size_t i = 0; i < corpus.test.size(); ++i) {
    const int c = agreed[i];
    if (c < 0 || taken[c] >= limit_per_class) continue;
    ++taken[c];
    out.push_back(corpus.test[i].text_id);
  }
  return out;
}

std::vector<stability::ExplanationMatrix> build_matrices(const EnsembleRun& run,
                                                         const corpus::SyntheticCorpus& corpus,
                                                         const std::vector<std::int64_t>& text_ids,
                                                         int jobs) {
  const auto records = selected_records(run);
  std::vector<relprop::NamedModel> models;
  for (const auto* r : records) models.push_back({r->model_id, &*r->model});
  std::vector<stability::ExplanationMatrix> out(text_ids.size());
  parallel_for(static_cast<int>(text_ids.size()), jobs, [&](int i) {
    const auto id = text_ids[static_cast<std::size_t>(i)];
    const auto* text = corpus.find(id);
    if (!text) throw Error(ErrorKind::kInvalidInput, "text " + std::to_string(id) + " not in corpus");
    out[static_cast<std::size_t>(i)] =
        relprop::explain_matrix(models, corpus.vocab.encode(text->words), text->words, id);
  });
  return out;
}

EnsembleRun execute_run(const corpus::SyntheticCorpus& corpus, const std::string& corpus_ref,
                        const RunConfig& config, const fs::path& root, int jobs) {
  auto run = run_ensemble(corpus, config, jobs);
  run.corpus_ref = corpus_ref;
  fs::create_directories(root / "models");
  fs::create_directories(root / "expl");
  for (const auto& r : run.models) {
    if (r.model) tinyformer::save_checkpoint(*r.model, root / "models" / (r.model_id + ".ckpt"));
  }
  run.selected_model_ids = select_equivalent(run, config.alpha);
  if (config.subset_size > 0) {
    if (static_cast<int>(run.selected_model_ids.size()) < config.subset_size) {
      throw Error(ErrorKind::kInsufficientModels,
                  std::to_string(run.selected_model_ids.size()) + " equivalent models, subset_size is " +
                      std::to_string(config.subset_size));
    }
    run.selected_model_ids.resize(static_cast<std::size_t>(config.subset_size));
  }
  run.compatible_text_ids = select_compatible(run, corpus, config.limit_per_class, jobs);
  const auto matrices = build_matrices(run, corpus, run.compatible_text_ids, jobs);
  for (const auto& m : matrices) {
    reportio::write_matrix(m, root / "expl" / (std::to_string(m.text_id) + ".expl"));
  }
  write_manifest(run, root / "run.manifest");
  return run;
}

void write_manifest(const EnsembleRun& run, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  const auto& c = run.config;
  const auto& mc = c.model;
  const auto& tc = c.train;
  using textio::format_double;
  out << "#stabilex-run v1\n";
  out << "run_id " << run.run_id << '\n';
  out << "corpus " << run.corpus_ref << '\n';
  out << "corpus_digest " << hex64(run.corpus_digest) << '\n';
  out << "variant " << corpus::to_string(run.variant) << '\n';
  out << "base_seed " << c.base_seed << '\n';
  out << "n_models " << c.n_models << '\n';
  out << "alpha " << format_double(c.alpha) << '\n';
  out << "subset_size " << c.subset_size << '\n';
  out << "limit_per_class " << c.limit_per_class << '\n';
  out << "vocab_size " << mc.vocab_size << '\n';
  out << "d_model " << mc.d_model << '\n';
  out << "n_heads " << mc.n_heads << '\n';
  out << "d_ff " << mc.d_ff << '\n';
  out << "max_len " << mc.max_len << '\n';
  out << "dropout_rate " << format_double(mc.dropout_rate) << '\n';
  out << "learning_rate " << format_double(tc.learning_rate) << '\n';
  out << "batch_size " << tc.batch_size << '\n';
  out << "epochs " << tc.epochs << '\n';
  out << "beta1 " << format_double(tc.beta1) << '\n';
  out << "beta2 " << format_double(tc.beta2) << '\n';
  out << "adam_eps " << format_double(tc.adam_eps) << '\n';
  out << "freeze_positional " << (tc.freeze_positional ? 1 : 0) << '\n';
  for (const auto& r : run.models) {
    out << "model " << r.model_id << ' ' << r.model_seed << ' ' << r.correct << ' ' << r.total << ' '
        << (r.ok() ? "ok" : "diverged") << '\n';
  }
  out << "selected";
  for (const auto& id : run.selected_model_ids) out << ' ' << id;
  out << "\ncompatible";
  for (auto id : run.compatible_text_ids) out << ' ' << id;
  out << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

EnsembleRun read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  EnsembleRun run;
  std::string line;
  int line_no = 0;
  auto reject = [&](const std::string& why) {
    throw Error(ErrorKind::kIngestRejected,
                path.string() + " line " + std::to_string(line_no) + ": " + why);
  };
  if (++line_no; !std::getline(in, line) || line != "#stabilex-run v1") {
    reject("missing '#stabilex-run v1' header");
  }
  auto& c = run.config;
  auto as_int = [&](std::string_view v) {
    const auto x = textio::parse_int(v);
    if (!x) reject("bad integer '" + std::string(v) + "'");
    return static_cast<int>(*x);
  };
  auto as_u64 = [&](std::string_view v) {
    const auto x = textio::parse_uint(v);
    if (!x) reject("bad unsigned integer '" + std::string(v) + "'");
    return *x;
  };
  auto as_double = [&](std::string_view v) {
    const auto x = textio::parse_double(v);
    if (!x) reject("bad number '" + std::string(v) + "'");
    return *x;
  };
  const std::map<std::string, std::function<void(std::string_view)>, std::less<>> scalars = {
      {"run_id", [&](std::string_view v) { run.run_id = v; }},
      {"corpus", [&](std::string_view v) { run.corpus_ref = v; }},
      {"corpus_digest",
       [&](std::string_view v) {
         std::uint64_t d = 0;
         if (v.size() != 16 || std::sscanf(std::string(v).c_str(), "%16llx",
                                           reinterpret_cast<unsigned long long*>(&d)) != 1) {
           reject("bad corpus_digest");
         }
         run.corpus_digest = d;
       }},
      {"variant",
       [&](std::string_view v) {
         const auto var = corpus::parse_variant(v);
         if (!var) reject("unknown variant");
         run.variant = *var;
       }},
      {"base_seed", [&](std::string_view v) { c.base_seed = as_u64(v); }},
      {"n_models", [&](std::string_view v) { c.n_models = as_int(v); }},
      {"alpha", [&](std::string_view v) { c.alpha = as_double(v); }},
      {"subset_size", [&](std::string_view v) { c.subset_size = as_int(v); }},
      {"limit_per_class", [&](std::string_view v) { c.limit_per_class = as_int(v); }},
      {"vocab_size", [&](std::string_view v) { c.model.vocab_size = as_int(v); }},
      {"d_model", [&](std::string_view v) { c.model.d_model = as_int(v); }},
      {"n_heads", [&](std::string_view v) { c.model.n_heads = as_int(v); }},
      {"d_ff", [&](std::string_view v) { c.model.d_ff = as_int(v); }},
      {"max_len", [&](std::string_view v) { c.model.max_len = as_int(v); }},
      {"dropout_rate", [&](std::string_view v) { c.model.dropout_rate = as_double(v); }},
      {"learning_rate", [&](std::string_view v) { c.train.learning_rate = as_double(v); }},
      {"batch_size", [&](std::string_view v) { c.train.batch_size = as_int(v); }},
      {"epochs", [&](std::string_view v) { c.train.epochs = as_int(v); }},
      {"beta1", [&](std::string_view v) { c.train.beta1 = as_double(v); }},
      {"beta2", [&](std::string_view v) { c.train.beta2 = as_double(v); }},
      {"adam_eps", [&](std::string_view v) { c.train.adam_eps = as_double(v); }},
      {"freeze_positional", [&](std::string_view v) { c.train.freeze_positional = as_int(v) != 0; }},
  };
  std::set<std::string, std::less<>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string_view value =
        sp == std::string::npos ? std::string_view{} : std::string_view(line).substr(sp + 1);
    if (key == "model") {
      const auto f = textio::split(value, ' ');
      if (f.size() != 5) reject("model line needs 5 fields");
      ModelRecord r;
      r.model_id = f[0];
      r.model_seed = as_u64(f[1]);
      r.correct = as_int(f[2]);
      r.total = as_int(f[3]);
      if (f[4] == "diverged") {
        r.failure = "diverged";
      } else if (f[4] != "ok") {
        reject("model status must be ok or diverged");
      }
      run.models.push_back(std::move(r));
      continue;
    }
    if (key == "selected" || key == "compatible") {
      for (auto tok : textio::split(value, ' ')) {
        if (tok.empty()) continue;
        if (key == "selected") {
          run.selected_model_ids.emplace_back(tok);
        } else {
          const auto id = textio::parse_int(tok);
          if (!id) reject("bad text id");
          run.compatible_text_ids.push_back(*id);
        }
      }
      continue;
    }
    const auto it = scalars.find(key);
    if (it == scalars.end()) reject("unknown key '" + key + "'");
    if (!seen.insert(key).second) reject("duplicate key '" + key + "'");
    it->second(value);
  }
  for (const auto& [key, fn] : scalars) {
    if (!seen.contains(key)) reject("missing key '" + key + "'");
  }
  return run;
}

void load_selected_models(EnsembleRun& run, const fs::path& root) {
  for (auto& r : run.models) {
    if (std::find(run.selected_model_ids.begin(), run.selected_model_ids.end(), r.model_id) ==
        run.selected_model_ids.end()) {
      continue;
    }
    r.model = tinyformer::load_checkpoint(root / "models" / (r.model_id + ".ckpt"));
  }
}

}  // namespace stabilex::ensemble
