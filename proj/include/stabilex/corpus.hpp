#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stabilex::corpus {

inline constexpr std::string_view kClass0Name = "John";
inline constexpr std::string_view kClass1Name = "James";
inline constexpr int kMaxRetries = 1000;

struct Vocab {
  std::vector<std::string> words;  // index == id
  std::map<std::string, int, std::less<>> id_of;
  int pad_id = 0;
  int unk_id = 1;

  int size() const { return static_cast<int>(words.size()); }
  // Unknown words map to unk_id.
  int id(std::string_view word) const;
  std::vector<int> encode(std::span<const std::string> words) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.words == b.words; }
};

struct LabeledText {
  std::int64_t text_id = 0;
  std::vector<std::string> words;
  int label = 0;

  friend bool operator==(const LabeledText&, const LabeledText&) = default;
};

enum class Variant { kOrdered, kShuffled, kMarkerAbsent, kMarkerRemoved };

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

struct SyntheticCorpus {
  Variant variant = Variant::kOrdered;
  std::vector<LabeledText> train;
  std::vector<LabeledText> test;
  std::int64_t gen_seed = 0;
  Vocab vocab;

  // Looks in both splits.
  const LabeledText* find(std::int64_t text_id) const;

  friend bool operator==(const SyntheticCorpus&, const SyntheticCorpus&) = default;
};

enum class MarkerMode { kReplace, kRemove };

// Sentences start with the name as subject, followed by sentence_len - 1
// distinct filler words drawn by a fixed part-of-speech template.
// Texts come in twins: id 2k holds kClass0Name (label 0) and id 2k+1 is the
// same sentence with kClass1Name (label 1). Twins always share a split.
SyntheticCorpus gen_ordered(int count, int sentence_len, std::int64_t gen_seed,
                            double test_fraction = 0.1);

SyntheticCorpus shuffle_variant(const SyntheticCorpus& base, std::int64_t shuffle_seed);

SyntheticCorpus marker_absence_variant(const SyntheticCorpus& base, std::int64_t repl_seed,
                                       MarkerMode mode = MarkerMode::kReplace);

// Reserved ids first (<pad>=0, <unk>=1), then words in lexicographic order.
Vocab build_vocab(std::span<const SyntheticCorpus* const> corpora);
Vocab build_vocab(const SyntheticCorpus& corpus);

// Twin of a text id (2k <-> 2k+1).
constexpr std::int64_t twin_of(std::int64_t text_id) { return text_id ^ 1; }

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& path);
void write_corpus(const SyntheticCorpus& corpus, std::ostream& out);
SyntheticCorpus read_corpus(const std::filesystem::path& path);
SyntheticCorpus read_corpus(std::istream& in);

}  // namespace stabilex::corpus
