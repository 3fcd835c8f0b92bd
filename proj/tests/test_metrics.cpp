#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "airrag/metrics.hpp"

using namespace airrag;

TEST_CASE("exact match compares normalized strings against any gold") {
  CHECK(eval::exact_match("Delaware River", {"delaware river"}) == 1);
  CHECK(eval::exact_match("the Delaware", {"delaware river"}) == 0);
  CHECK(eval::exact_match("", {""}) == 1);
  CHECK(eval::exact_match("The Delaware River.", {"nope", "Delaware River"}) == 1);
}

TEST_CASE("token f1 fixture values") {
  CHECK(eval::f1("the delaware river", {"delaware river"}) == 0.8);
  CHECK(eval::f1("same words", {"same words"}) == 1.0);
  CHECK(eval::f1("alpha beta", {"gamma delta"}) == 0.0);
  CHECK(eval::f1("", {"x"}) == 0.0);
  CHECK(eval::f1("x", {""}) == 0.0);
}

TEST_CASE("accuracy covered is substring containment after normalization") {
  CHECK(eval::accuracy_covered("mouth is the delaware river in eddystone", {"Delaware River"}) == 1);
  CHECK(eval::accuracy_covered("mohawk river", {"Delaware River"}) == 0);
  CHECK(eval::accuracy_covered("delaware river", {"delaware river"}) == 1);
}

TEST_CASE("metric invariants over random strings") {
  std::mt19937_64 rng(99);
  std::vector<std::string> vocab = {"red", "blue", "fox", "river", "the", "a", "stone", "b2"};
  auto random_text = [&](int max_words) {
    std::string s;
    int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_words));
    for (int i = 0; i < n; ++i) {
      if (!s.empty()) s += " ";
      s += vocab[rng() % vocab.size()];
    }
    return s;
  };
  for (int i = 0; i < 300; ++i) {
    std::string pred = random_text(6);
    std::vector<std::string> gold = {random_text(4)};
    double f = eval::f1(pred, gold);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    // EM implies coverage after normalization.
    CHECK(eval::exact_match(pred, gold) <= eval::accuracy_covered(pred, gold));
  }
}

TEST_CASE("f1 of a string against itself is 1") {
  for (const char* s : {"one", "two words", "the a an", "punct, here!"})
    CHECK(eval::f1(s, {s}) == 1.0);
}
