#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "airrag/text.hpp"

namespace airrag::eval {

struct QASample {
  std::string id;
  std::string question;
  std::vector<std::string> gold_answers;
};

/// QA answer normalization: lowercase, drop articles, strip punctuation,
/// collapse whitespace.
inline std::string normalize_answer(const std::string& s) { return text::normalize_answer(s); }

using text::count_tokens;

/// 1 iff the normalized prediction equals any normalized gold answer.
inline int exact_match(const std::string& pred, const std::vector<std::string>& gold) {
  std::string p = normalize_answer(pred);
  for (const auto& g : gold)
    if (p == normalize_answer(g)) return 1;
  return 0;
}

/// Token-level F1 against the best-matching gold answer. Tokens come from
/// word normalization (articles kept), and the score is computed over
/// multisets as 2*overlap / (|pred| + |gold|).
inline double f1(const std::string& pred, const std::vector<std::string>& gold) {
  auto pred_tokens = text::split_words(text::normalize_words(pred));
  std::map<std::string, int> pred_counts;
  for (const auto& w : pred_tokens) pred_counts[w] += 1;

  double best = 0.0;
  for (const auto& g : gold) {
    auto gold_tokens = text::split_words(text::normalize_words(g));
    if (pred_tokens.empty() && gold_tokens.empty()) {
      best = std::max(best, 1.0);
      continue;
    }
    if (pred_tokens.empty() || gold_tokens.empty()) continue;
    std::map<std::string, int> gold_counts;
    for (const auto& w : gold_tokens) gold_counts[w] += 1;
    int overlap = 0;
    for (const auto& [w, c] : pred_counts) {
      auto it = gold_counts.find(w);
      if (it != gold_counts.end()) overlap += std::min(c, it->second);
    }
    if (overlap == 0) continue;
    double score = 2.0 * overlap /
                   static_cast<double>(pred_tokens.size() + gold_tokens.size());
    best = std::max(best, score);
  }
  return best;
}

/// 1 iff any normalized gold answer is a substring of the normalized
/// prediction (equality included).
inline int accuracy_covered(const std::string& pred, const std::vector<std::string>& gold) {
  std::string p = normalize_answer(pred);
  for (const auto& g : gold) {
    std::string n = normalize_answer(g);
    if (n.empty() ? p.empty() : p.find(n) != std::string::npos) return 1;
  }
  return 0;
}

}  // namespace airrag::eval
