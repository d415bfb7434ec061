#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "stabilex/corpus.hpp"
#include "stabilex/error.hpp"
#include "stabilex/lexicon.hpp"

using namespace stabilex;
using namespace stabilex::corpus;

namespace {

std::string serialize(const SyntheticCorpus& c) {
  std::ostringstream out;
  write_corpus(c, out);
  return out.str();
}

int count_word(const LabeledText& t, std::string_view w) {
  return static_cast<int>(std::count(t.words.begin(), t.words.end(), w));
}

std::vector<const LabeledText*> all_texts(const SyntheticCorpus& c) {
  std::vector<const LabeledText*> out;
  for (const auto* split : {&c.train, &c.test}) {
    for (const auto& t : *split) out.push_back(&t);
  }
  return out;
}

}  // namespace

TEST_CASE("lexicon is large, unique and free of the class names") {
  const auto& lex = filler_lexicon();
  CHECK(lex.size() >= 500);
  CHECK(std::set<std::string>(lex.begin(), lex.end()).size() == lex.size());
  CHECK(std::find(lex.begin(), lex.end(), kClass0Name) == lex.end());
  CHECK(std::find(lex.begin(), lex.end(), kClass1Name) == lex.end());
}

TEST_CASE("ordered corpus invariants") {
  const auto c = gen_ordered(2000, 10, 7);
  CHECK(c.train.size() == 1800);
  CHECK(c.test.size() == 200);
  for (const auto* split : {&c.train, &c.test}) {
    int per_class[2] = {0, 0};
    std::set<std::vector<std::string>> seen;
    for (const auto& t : *split) {
      ++per_class[t.label];
      CHECK(t.words.size() == 10);
      CHECK(seen.insert(t.words).second);
      CHECK(count_word(t, t.label == 0 ? kClass0Name : kClass1Name) == 1);
      CHECK(count_word(t, t.label == 0 ? kClass1Name : kClass0Name) == 0);
      CHECK(std::set<std::string>(t.words.begin(), t.words.end()).size() == t.words.size());
    }
    CHECK(std::abs(per_class[0] - per_class[1]) <= 1);
  }
}

TEST_CASE("twins share a split and differ in exactly the name") {
  const auto c = gen_ordered(400, 10, 3);
  for (const auto* split : {&c.train, &c.test}) {
    std::set<std::int64_t> ids;
    for (const auto& t : *split) ids.insert(t.text_id);
    for (const auto& t : *split) {
      CHECK(ids.count(twin_of(t.text_id)) == 1);
      CHECK(t.label == t.text_id % 2);
      if (t.label != 0) continue;
      const auto* twin = c.find(twin_of(t.text_id));
      REQUIRE(twin != nullptr);
      int differing = 0;
      for (std::size_t i = 0; i < t.words.size(); ++i) differing += t.words[i] != twin->words[i];
      CHECK(differing == 1);
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  CHECK(serialize(gen_ordered(2, 10, 5, 0.5)) == serialize(gen_ordered(2, 10, 5, 0.5)));
  CHECK(serialize(gen_ordered(200, 10, 5)) != serialize(gen_ordered(200, 10, 6)));
}

TEST_CASE("generator argument errors") {
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIo;
  };
  CHECK(kind_of([] { gen_ordered(3, 10, 1); }) == ErrorKind::kInvalidConfig);
  CHECK(kind_of([] { gen_ordered(10, 1, 1); }) == ErrorKind::kInvalidConfig);
  CHECK(kind_of([] { gen_ordered(10, 10, 1, 1.5); }) == ErrorKind::kInvalidConfig);
  CHECK(kind_of([] { gen_ordered(10, 100000, 1); }) == ErrorKind::kGenerationExhausted);
}

TEST_CASE("shuffled variant keeps multisets, ids and labels") {
  const auto base = gen_ordered(400, 10, 9);
  const auto shuf = shuffle_variant(base, 11);
  CHECK(shuf.variant == Variant::kShuffled);
  CHECK(shuf.vocab == base.vocab);
  int moved = 0;
  const auto a = all_texts(base), b = all_texts(shuf);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->text_id == b[i]->text_id);
    CHECK(a[i]->label == b[i]->label);
    auto x = a[i]->words, y = b[i]->words;
    moved += x != y;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    CHECK(x == y);
  }
  CHECK(moved > static_cast<int>(a.size()) * 9 / 10);
  CHECK(serialize(shuffle_variant(base, 11)) == serialize(shuf));
  CHECK_THROWS_AS(shuffle_variant(shuf, 1), Error);
}

TEST_CASE("shuffling a one-word text leaves it unchanged") {
  SyntheticCorpus c;
  c.train.push_back({0, {"John"}, 0});
  c.train.push_back({1, {"James"}, 1});
  c.vocab = build_vocab(c);
  const auto s = shuffle_variant(c, 3);
  CHECK(s.train[0].words == c.train[0].words);
}

TEST_CASE("marker-absence variant") {
  const auto base = gen_ordered(1000, 10, 4);
  const auto mab = marker_absence_variant(base, 13);
  CHECK(mab.variant == Variant::kMarkerAbsent);
  const auto a = all_texts(base), b = all_texts(mab);
  const auto& lex = filler_lexicon();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(count_word(*b[i], kClass1Name) == 0);
    if (a[i]->label == 0) {
      CHECK(*a[i] == *b[i]);
      continue;
    }
    CHECK(b[i]->words.size() == a[i]->words.size());
    const auto pos = std::find(a[i]->words.begin(), a[i]->words.end(), kClass1Name) - a[i]->words.begin();
    const auto& repl = b[i]->words[static_cast<std::size_t>(pos)];
    CHECK(repl != kClass0Name);
    CHECK(std::find(lex.begin(), lex.end(), repl) != lex.end());
    CHECK(count_word(*a[i], repl) == 0);
  }
  CHECK(serialize(marker_absence_variant(base, 13)) == serialize(mab));

  const auto removed = marker_absence_variant(base, 13, MarkerMode::kRemove);
  CHECK(removed.variant == Variant::kMarkerRemoved);
  for (const auto& t : removed.test) CHECK(t.words.size() == (t.label == 0 ? 10u : 9u));
}

TEST_CASE("vocab layout") {
  SyntheticCorpus c;
  c.train.push_back({0, {"b", "a", "John"}, 0});
  c.train.push_back({1, {"b", "a", "James"}, 1});
  const auto v = build_vocab(c);
  CHECK(v.size() == 4 + 2);
  CHECK(v.words[0] == "<pad>");
  CHECK(v.words[1] == "<unk>");
  CHECK(v.id("James") == 2);
  CHECK(v.id("never") == v.unk_id);
  CHECK(v.pad_id != v.unk_id);
}

TEST_CASE("corpus file round-trip and rejection") {
  const auto c = gen_ordered(100, 10, 2);
  std::istringstream in(serialize(c));
  CHECK(read_corpus(in) == c);

  std::istringstream bad("#stabilex-corpus v1\n#variant ordered\n#gen_seed 1\n0\ttrain\t7\tJohn x\n");
  try {
    read_corpus(bad);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIngestRejected);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}
