#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hers/rng.hpp"

namespace hers::prompts {

using Tokens = std::vector<std::string>;

inline constexpr std::size_t kEmbeddingDim = 64;
using Embedding = std::array<double, kEmbeddingDim>;

/// Lowercases ASCII letters, drops every byte that is not an ASCII letter,
/// digit or whitespace, and splits on whitespace. "Rear-left" becomes
/// "rearleft"; "driver's" becomes "drivers".
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (unsigned char c : text) {
    if (c < 0x80 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c < 0x80 && std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string join(const Tokens& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

/// Token-level longest common subsequence length, O(|a||b|) time, O(|b|) space.
inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// ROUGE-L F1 over tokens: 2PR/(P+R) with P = LCS/|a|, R = LCS/|b|.
/// Zero when either side is empty. Symmetric by construction.
inline double rouge_l(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0.0;
  const std::size_t lcs = lcs_length(a, b);
  if (lcs == 0) return 0.0;
  // 2PR/(P+R) simplifies to 2·LCS/(|a|+|b|), which is exactly symmetric.
  return 2.0 * static_cast<double>(lcs) / static_cast<double>(a.size() + b.size());
}

/// Hashed character-trigram bag of the normalized text, L2-normalized.
/// The text is the tokens joined by single spaces and padded with one space
/// on each side; every trigram adds 1 to bucket fnv1a64(trigram) % 64.
/// Empty token lists give the zero vector.
inline Embedding embed_prompt(const Tokens& tokens) {
  Embedding e{};
  if (tokens.empty()) return e;
  const std::string padded = " " + join(tokens) + " ";
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    e[fnv1a64(std::string_view(padded).substr(i, 3)) % kEmbeddingDim] += 1.0;
  }
  double n = 0.0;
  for (double v : e) n += v * v;
  n = std::sqrt(n);
  for (double& v : e) v /= n;
  return e;
}

inline double cosine(const Embedding& a, const Embedding& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return d / std::sqrt(na * nb);
}

}  // namespace hers::prompts
