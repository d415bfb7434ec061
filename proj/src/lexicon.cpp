#include "stabilex/lexicon.hpp"

#include <array>

namespace stabilex::corpus {
namespace {

constexpr std::array kNouns = {
    "apple",    "river",    "garden",   "window",   "table",    "chair",    "kitchen",
    "market",   "village",  "city",     "forest",   "mountain", "valley",   "bridge",
    "road",     "street",   "house",    "school",   "office",   "library",  "museum",
    "station",  "harbor",   "island",   "beach",    "ocean",    "lake",     "field",
    "farm",     "barn",     "horse",    "dog",      "cat",      "bird",     "fish",
    "tree",     "flower",   "grass",    "stone",    "rock",     "sand",     "cloud",
    "rain",     "snow",     "wind",     "storm",    "sun",      "moon",     "star",
    "sky",      "morning",  "evening",  "night",    "winter",   "summer",   "autumn",
    "spring",   "letter",   "book",     "paper",    "pencil",   "camera",   "phone",
    "radio",    "piano",    "guitar",   "song",     "story",    "poem",     "picture",
    "painting", "lamp",     "door",     "wall",     "floor",    "roof",     "basket",
    "bottle",   "glass",    "cup",      "plate",    "spoon",    "knife",    "bread",
    "cheese",   "butter",   "soup",     "coffee",   "tea",      "milk",     "sugar",
    "salt",     "pepper",   "orange",   "lemon",    "cherry",   "grape",    "carrot",
    "potato",   "onion",    "tomato",   "jacket",   "shirt",    "hat",      "shoe",
    "boot",     "coat",     "scarf",    "glove",    "ticket",   "train",    "bus",
    "car",      "bicycle",  "boat",     "plane",    "engine",   "wheel",    "machine",
    "computer", "screen",   "clock",    "watch",    "mirror",   "blanket",  "pillow",
    "candle",   "box",      "bag",      "key",      "coin",     "wallet",   "map",
    "journal",  "notebook", "desk",     "shelf",    "cabinet",  "drawer",   "carpet",
    "curtain",  "fence",    "gate",     "path",     "trail",    "hill",     "cliff",
    "cave",     "desert",   "meadow",   "pond",     "stream",   "well",     "tower",
    "castle",   "church",   "temple",   "palace",   "theater",  "stadium",  "hospital",
    "bakery",   "factory",  "warehouse", "shop",    "hotel",    "restaurant", "cafe",
    "park",     "square",   "corner",   "neighbor", "teacher",  "doctor",   "farmer",
    "baker",    "painter",  "singer",   "driver",   "sailor",   "soldier",  "student",
    "friend",   "brother",  "sister",   "cousin",   "uncle",    "aunt",     "child",
    "family",   "crowd",    "team",     "guest",    "stranger", "captain",  "pilot",
    "nurse",    "lawyer",   "writer",   "artist",   "player",   "coach",    "judge",
    "king",     "queen",    "prince",   "lion",     "tiger",    "bear",     "wolf",
    "fox",      "rabbit",   "mouse",    "deer",     "goat",     "sheep",    "cow",
    "duck",     "goose",    "owl",      "eagle",    "whale",    "dolphin",  "turtle",
    "frog",     "snake",    "spider",   "butterfly", "bee",     "ant",
};

constexpr std::array kVerbs = {
    "opened",    "closed",    "painted",   "cleaned",   "carried",   "found",
    "lost",      "bought",    "sold",      "visited",   "watched",   "heard",
    "saw",       "liked",     "loved",     "hated",     "fixed",     "broke",
    "built",     "moved",     "pushed",    "pulled",    "lifted",    "dropped",
    "threw",     "caught",    "kicked",    "held",      "touched",   "cooked",
    "baked",     "ate",       "drank",     "tasted",    "smelled",   "washed",
    "dried",     "folded",    "packed",    "wrapped",   "filled",    "emptied",
    "counted",   "measured",  "weighed",   "checked",   "read",      "wrote",
    "signed",    "printed",   "drew",      "sketched",  "described", "explained",
    "discussed", "answered",  "asked",     "called",    "followed",  "chased",
    "guided",    "led",       "joined",    "left",      "passed",    "crossed",
    "climbed",   "reached",   "entered",   "explored",  "searched",  "studied",
    "learned",   "taught",    "remembered", "forgot",   "noticed",   "ignored",
    "admired",   "praised",   "thanked",   "greeted",   "met",       "helped",
    "saved",     "protected", "guarded",   "borrowed",  "returned",  "shared",
    "offered",   "delivered", "sent",      "received",  "collected", "gathered",
    "planted",   "picked",    "cut",       "trimmed",   "repaired",  "replaced",
    "covered",   "hid",       "showed",    "displayed", "recorded",  "photographed",
    "played",    "sang",      "hummed",    "whistled",  "imagined",  "designed",
    "planned",   "organized", "arranged",  "sorted",    "polished",  "scrubbed",
    "swept",     "painted",   "decorated", "lit",       "warmed",    "cooled",
    "tied",      "untied",    "locked",    "unlocked",  "rented",    "ordered",
    "served",    "tested",    "tried",     "ran",       "walked",    "waited",
    "noted",     "posted",    "mailed",    "hugged",    "kissed",    "visited",
};

constexpr std::array kAdjectives = {
    "red",       "blue",      "green",     "yellow",    "white",     "black",
    "brown",     "gray",      "purple",    "pink",      "golden",    "silver",
    "big",       "small",     "tall",      "short",     "long",      "wide",
    "narrow",    "heavy",     "light",     "old",       "new",       "young",
    "ancient",   "modern",    "fresh",     "stale",     "warm",      "cold",
    "hot",       "cool",      "wet",       "dry",       "soft",      "hard",
    "smooth",    "rough",     "sharp",     "dull",      "bright",    "dark",
    "quiet",     "loud",      "calm",      "noisy",     "clean",     "dirty",
    "empty",     "full",      "cheap",     "expensive", "rich",      "poor",
    "happy",     "sad",       "angry",     "tired",     "hungry",    "thirsty",
    "busy",      "lazy",      "brave",     "shy",       "kind",      "gentle",
    "polite",    "rude",      "clever",    "simple",    "strange",   "famous",
    "lovely",    "pretty",    "ugly",      "beautiful", "elegant",   "plain",
    "fancy",     "tiny",      "huge",      "giant",     "little",    "round",
    "square",    "flat",      "steep",     "deep",      "shallow",   "thick",
    "thin",      "strong",    "weak",      "quick",     "slow",      "early",
    "late",      "distant",   "nearby",    "local",     "foreign",   "rural",
    "urban",     "sunny",     "rainy",     "windy",     "cloudy",    "snowy",
    "foggy",     "stormy",    "wooden",    "metal",     "plastic",   "glass",
    "paper",     "woolen",    "cotton",    "leather",   "rusty",     "shiny",
    "dusty",     "muddy",     "sandy",     "rocky",     "grassy",    "leafy",
    "sweet",     "sour",      "bitter",    "salty",     "spicy",     "tasty",
    "delicious", "famous",    "popular",   "rare",      "common",    "curious",
    "careful",   "honest",    "proud",     "lucky",     "friendly",  "lonely",
};

constexpr std::array kAdverbs = {
    "quickly",    "slowly",     "quietly",    "loudly",     "carefully",
    "gently",     "happily",    "sadly",      "eagerly",    "calmly",
    "bravely",    "proudly",    "politely",   "warmly",     "softly",
    "suddenly",   "finally",    "often",      "rarely",     "usually",
    "always",     "never",      "sometimes",  "yesterday",  "today",
    "tomorrow",   "tonight",    "again",      "already",    "soon",
    "later",      "early",      "recently",   "nearly",     "almost",
    "really",     "truly",      "simply",     "clearly",    "certainly",
    "probably",   "perhaps",    "together",   "alone",      "outside",
    "inside",     "upstairs",   "downstairs", "abroad",     "nearby",
    "everywhere", "somewhere",  "twice",      "once",       "daily",
    "weekly",     "patiently",  "cheerfully", "silently",   "kindly",
};

constexpr std::array kFunction = {
    "the",     "a",       "this",    "that",    "these",   "those",   "every",
    "some",    "many",    "few",     "several", "his",     "her",     "their",
    "our",     "my",      "your",    "its",     "near",    "behind",  "beside",
    "under",   "above",   "across",  "through", "around",  "beyond",  "within",
    "without", "along",   "toward",  "after",   "before",  "during",  "since",
    "until",   "and",     "but",     "or",      "so",      "because", "while",
    "with",    "from",    "into",    "onto",    "over",    "between", "among",
};

template <std::size_t N>
void append_unique(std::vector<std::string>& out, std::set<std::string>& seen,
                   const std::array<const char*, N>& words) {
  for (const char* w : words) {
    if (seen.insert(w).second) out.emplace_back(w);
  }
}

template <std::size_t N>
std::vector<std::string> to_vector(const std::array<const char*, N>& words) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  append_unique(out, seen, words);
  return out;
}

}  // namespace

const std::vector<std::string>& filler_lexicon() {
  static const std::vector<std::string> lexicon = [] {
    std::vector<std::string> out;
    std::set<std::string> seen;
    append_unique(out, seen, kNouns);
    append_unique(out, seen, kVerbs);
    append_unique(out, seen, kAdjectives);
    append_unique(out, seen, kAdverbs);
    append_unique(out, seen, kFunction);
    return out;
  }();
  return lexicon;
}

const std::vector<std::string>& lexicon_category(WordCategory category) {
  static const std::vector<std::string> nouns = to_vector(kNouns);
  static const std::vector<std::string> verbs = to_vector(kVerbs);
  static const std::vector<std::string> adjectives = to_vector(kAdjectives);
  static const std::vector<std::string> adverbs = to_vector(kAdverbs);
  static const std::vector<std::string> function = to_vector(kFunction);
  switch (category) {
    case WordCategory::kNoun: return nouns;
    case WordCategory::kVerb: return verbs;
    case WordCategory::kAdjective: return adjectives;
    case WordCategory::kAdverb: return adverbs;
    case WordCategory::kFunction: return function;
  }
  return nouns;
}

}  // namespace stabilex::corpus
