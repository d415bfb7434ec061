#pragma once

#include <set>
#include <string>
#include <vector>

namespace stabilex::corpus {

enum class WordCategory { kNoun, kVerb, kAdjective, kAdverb, kFunction };

// Bundled list of common English words, duplicates removed. Never contains
// the class names.
const std::vector<std::string>& filler_lexicon();

const std::vector<std::string>& lexicon_category(WordCategory category);

}  // namespace stabilex::corpus
