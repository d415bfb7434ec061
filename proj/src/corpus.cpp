#include "stabilex/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "stabilex/error.hpp"
#include "stabilex/lexicon.hpp"
#include "stabilex/rng.hpp"
#include "stabilex/textio.hpp"

namespace stabilex::corpus {
namespace {

std::string join(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

// Part-of-speech slots for the words after the subject name; cycled when
// the sentence is longer than the template.
constexpr WordCategory kTemplate[] = {WordCategory::kVerb,      WordCategory::kFunction,
                                      WordCategory::kAdjective, WordCategory::kNoun,
                                      WordCategory::kFunction,  WordCategory::kFunction,
                                      WordCategory::kAdjective, WordCategory::kNoun,
                                      WordCategory::kAdverb};

// Words are distinct within a sentence; some words sit in two categories,
// so uniqueness is checked on the string.
std::vector<std::string> draw_fillers(Stream& stream, int k) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(k));
  std::set<std::string> used;
  for (int i = 0; i < k; ++i) {
    const auto& pool = lexicon_category(kTemplate[static_cast<std::size_t>(i) % std::size(kTemplate)]);
    for (;;) {
      const auto& word = pool[static_cast<std::size_t>(stream.below(pool.size()))];
      if (used.insert(word).second) {
        out.push_back(word);
        break;
      }
    }
  }
  return out;
}

void require_ordered(const SyntheticCorpus& base, std::string_view op) {
  if (base.variant != Variant::kOrdered) {
    throw Error(ErrorKind::kInvalidInput,
                std::string(op) + " requires an ordered base corpus, got " +
                    std::string(to_string(base.variant)));
  }
}

template <typename Fn>
SyntheticCorpus map_texts(const SyntheticCorpus& base, Variant variant, Fn&& fn) {
  SyntheticCorpus out;
  out.variant = variant;
  out.gen_seed = base.gen_seed;
  out.train.reserve(base.train.size());
  out.test.reserve(base.test.size());
  for (const auto& t : base.train) out.train.push_back(fn(t));
  for (const auto& t : base.test) out.test.push_back(fn(t));
  out.vocab = build_vocab(out);
  return out;
}

}  // namespace

int Vocab::id(std::string_view word) const {
  const auto it = id_of.find(word);
  return it == id_of.end() ? unk_id : it->second;
}

std::vector<int> Vocab::encode(std::span<const std::string> ws) const {
  std::vector<int> ids;
  ids.reserve(ws.size());
  for (const auto& w : ws) ids.push_back(id(w));
  return ids;
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kOrdered: return "ordered";
    case Variant::kShuffled: return "shuffled";
    case Variant::kMarkerAbsent: return "marker_absent";
    case Variant::kMarkerRemoved: return "marker_removed";
  }
  return "ordered";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (auto v : {Variant::kOrdered, Variant::kShuffled, Variant::kMarkerAbsent,
                 Variant::kMarkerRemoved}) {
    const auto canonical = to_string(v);
    if (name == canonical) return v;
    // CLI spelling uses hyphens.
    std::string hyphen(canonical);
    std::replace(hyphen.begin(), hyphen.end(), '_', '-');
    if (name == hyphen) return v;
  }
  return std::nullopt;
}

const LabeledText* SyntheticCorpus::find(std::int64_t text_id) const {
  for (const auto* split : {&train, &test}) {
    for (const auto& t : *split) {
      if (t.text_id == text_id) return &t;
    }
  }
  return nullptr;
}

SyntheticCorpus gen_ordered(int count, int sentence_len, std::int64_t gen_seed,
                            double test_fraction) {
  if (count <= 0 || count % 2 != 0) {
    throw Error(ErrorKind::kInvalidConfig, "count must be positive and even, got " +
                                               std::to_string(count));
  }
  if (sentence_len < 2) {
    throw Error(ErrorKind::kInvalidConfig, "sentence_len must be at least 2");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "test_fraction must lie in (0,1)");
  }
  const int fillers = sentence_len - 1;
  std::map<WordCategory, std::size_t> slots;
  for (int i = 0; i < fillers; ++i) ++slots[kTemplate[static_cast<std::size_t>(i) % std::size(kTemplate)]];
  for (const auto& [category, need] : slots) {
    if (need > lexicon_category(category).size()) {
      throw Error(ErrorKind::kGenerationExhausted, "sentence_len exceeds what the lexicon can fill");
    }
  }

  const auto seed = static_cast<std::uint64_t>(gen_seed);
  const int pairs = count / 2;
  std::vector<std::vector<std::string>> base(static_cast<std::size_t>(pairs));
  std::set<std::string> seen;
  for (int k = 0; k < pairs; ++k) {
    Stream stream(seed, "sentence", static_cast<std::uint64_t>(k));
    bool placed = false;
    for (int attempt = 0; attempt <= kMaxRetries && !placed; ++attempt) {
      // The name is always the sentence subject.
      auto words = draw_fillers(stream, fillers);
      words.insert(words.begin(), std::string(kClass0Name));
      if (seen.insert(join(words)).second) {
        base[static_cast<std::size_t>(k)] = std::move(words);
        placed = true;
      }
    }
    if (!placed) {
      throw Error(ErrorKind::kGenerationExhausted,
                  "no unique sentence after " + std::to_string(kMaxRetries) +
                      " retries for pair " + std::to_string(k));
    }
  }

  std::vector<int> order(static_cast<std::size_t>(pairs));
  std::iota(order.begin(), order.end(), 0);
  Stream split_stream(seed, "split");
  split_stream.shuffle(std::span<int>(order));
  const int n_test = std::clamp(static_cast<int>(std::lround(pairs * test_fraction)), 0, pairs);
  std::vector<bool> in_test(static_cast<std::size_t>(pairs), false);
  for (int i = 0; i < n_test; ++i) in_test[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  SyntheticCorpus out;
  out.variant = Variant::kOrdered;
  out.gen_seed = gen_seed;
  for (int k = 0; k < pairs; ++k) {
    auto& split = in_test[static_cast<std::size_t>(k)] ? out.test : out.train;
    const auto& words = base[static_cast<std::size_t>(k)];
    split.push_back({2 * static_cast<std::int64_t>(k), words, 0});
    auto twin = words;
    std::replace(twin.begin(), twin.end(), std::string(kClass0Name), std::string(kClass1Name));
    split.push_back({2 * static_cast<std::int64_t>(k) + 1, std::move(twin), 1});
  }
  out.vocab = build_vocab(out);
  return out;
}

SyntheticCorpus shuffle_variant(const SyntheticCorpus& base, std::int64_t shuffle_seed) {
  require_ordered(base, "shuffle_variant");
  const auto seed = static_cast<std::uint64_t>(shuffle_seed);
  return map_texts(base, Variant::kShuffled, [&](const LabeledText& t) {
    LabeledText out = t;
    Stream stream(seed, "shuffle", static_cast<std::uint64_t>(t.text_id));
    stream.shuffle(std::span<std::string>(out.words));
    return out;
  });
}

SyntheticCorpus marker_absence_variant(const SyntheticCorpus& base, std::int64_t repl_seed,
                                       MarkerMode mode) {
  require_ordered(base, "marker_absence_variant");
  const auto seed = static_cast<std::uint64_t>(repl_seed);
  const auto& lexicon = filler_lexicon();
  const Variant variant =
      mode == MarkerMode::kReplace ? Variant::kMarkerAbsent : Variant::kMarkerRemoved;
  return map_texts(base, variant, [&](const LabeledText& t) {
    if (t.label != 1) return t;
    LabeledText out = t;
    const auto it = std::find(out.words.begin(), out.words.end(), kClass1Name);
    if (it == out.words.end()) return out;
    if (mode == MarkerMode::kRemove) {
      out.words.erase(it);
      return out;
    }
    Stream stream(seed, "replace", static_cast<std::uint64_t>(t.text_id));
    for (;;) {
      const auto& candidate = lexicon[static_cast<std::size_t>(stream.below(lexicon.size()))];
      if (std::find(t.words.begin(), t.words.end(), candidate) == t.words.end()) {
        *it = candidate;
        break;
      }
    }
    return out;
  });
}

Vocab build_vocab(std::span<const SyntheticCorpus* const> corpora) {
  std::set<std::string, std::less<>> words;
  for (const auto* c : corpora) {
    for (const auto* split : {&c->train, &c->test}) {
      for (const auto& t : *split) words.insert(t.words.begin(), t.words.end());
    }
  }
  Vocab v;
  v.words = {"<pad>", "<unk>"};
  v.words.insert(v.words.end(), words.begin(), words.end());
  for (std::size_t i = 0; i < v.words.size(); ++i) v.id_of.emplace(v.words[i], static_cast<int>(i));
  return v;
}

Vocab build_vocab(const SyntheticCorpus& corpus) {
  const SyntheticCorpus* one[] = {&corpus};
  return build_vocab(std::span<const SyntheticCorpus* const>(one));
}

void write_corpus(const SyntheticCorpus& corpus, std::ostream& out) {
  out << "#stabilex-corpus v1\n";
  out << "#variant " << to_string(corpus.variant) << '\n';
  out << "#gen_seed " << corpus.gen_seed << '\n';
  for (const auto* split : {&corpus.train, &corpus.test}) {
    const char* name = split == &corpus.train ? "train" : "test";
    for (const auto& t : *split) {
      out << t.text_id << '\t' << name << '\t' << t.label << '\t' << join(t.words) << '\n';
    }
  }
}

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write_corpus(corpus, out);
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

SyntheticCorpus read_corpus(std::istream& in) {
  SyntheticCorpus out;
  std::string line;
  int line_no = 0;
  auto reject = [&](const std::string& why) {
    throw Error(ErrorKind::kIngestRejected, "corpus line " + std::to_string(line_no) + ": " + why);
  };
  auto header = [&](std::string_view key) -> std::string {
    ++line_no;
    if (!std::getline(in, line)) reject("missing header");
    const std::string prefix = "#" + std::string(key);
    if (line.rfind(prefix, 0) != 0) reject("expected " + prefix);
    return line.size() > prefix.size() + 1 ? line.substr(prefix.size() + 1) : std::string{};
  };
  if (++line_no; !std::getline(in, line) || line != "#stabilex-corpus v1") {
    reject("missing '#stabilex-corpus v1' header");
  }
  const auto variant = parse_variant(header("variant"));
  if (!variant) reject("unknown variant");
  out.variant = *variant;
  const auto seed = textio::parse_int(header("gen_seed"));
  if (!seed) reject("bad gen_seed");
  out.gen_seed = *seed;

  std::set<std::int64_t> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = textio::split(line, '\t');
    if (fields.size() != 4) reject("expected 4 tab-separated fields");
    const auto id = textio::parse_int(fields[0]);
    const auto label = textio::parse_int(fields[2]);
    if (!id) reject("bad text_id");
    if (!label || (*label != 0 && *label != 1)) reject("label must be 0 or 1");
    if (!ids.insert(*id).second) reject("duplicate text_id");
    LabeledText t;
    t.text_id = *id;
    t.label = static_cast<int>(*label);
    for (auto w : textio::split(fields[3], ' ')) {
      if (!w.empty()) t.words.emplace_back(w);
    }
    if (t.words.empty()) reject("empty text");
    if (fields[1] == "train") {
      out.train.push_back(std::move(t));
    } else if (fields[1] == "test") {
      out.test.push_back(std::move(t));
    } else {
      reject("split must be train or test");
    }
  }
  out.vocab = build_vocab(out);
  return out;
}

SyntheticCorpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return read_corpus(in);
}

}  // namespace stabilex::corpus
