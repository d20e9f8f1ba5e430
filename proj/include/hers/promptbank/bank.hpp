#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hers/error.hpp"
#include "hers/promptbank/text.hpp"
#include "hers/rng.hpp"

namespace hers::prompts {

inline const std::vector<std::string>& damage_categories() {
  static const std::vector<std::string> c = {"dent", "scrape", "torn_bumper", "cracked_paint",
                                             "broken_light"};
  return c;
}

inline const std::vector<std::string>& default_domains() {
  static const std::vector<std::string> d = {"typical_parts", "scene_narratives", "implausible"};
  return d;
}

struct PromptRecord {
  std::string id;
  std::string text;
  std::string category;
  std::string domain;
  Tokens tokens;
  Embedding embedding{};
  bool retained = false;
  std::string reject_reason;  // empty when retained

  static PromptRecord make(std::string id, std::string text, std::string category,
                           std::string domain) {
    PromptRecord r;
    r.id = std::move(id);
    r.text = std::move(text);
    r.category = std::move(category);
    r.domain = std::move(domain);
    r.tokens = tokenize(r.text);
    r.embedding = embed_prompt(r.tokens);
    return r;
  }
};

/// Template grammar over domain-specific sentence patterns.
///
/// Templates contain `{slot}` placeholders. A slot is resolved against the
/// vocabulary "<slot>.<category>" first and "<slot>" second, so damage
/// wording follows the sampled category while scene wording is shared.
struct PromptGrammar {
  std::map<std::string, std::vector<std::string>> templates;  // domain -> patterns
  std::map<std::string, std::vector<std::string>> vocab;      // slot -> choices
  std::vector<std::string> categories = damage_categories();

  const std::vector<std::string>& slot_choices(const std::string& slot,
                                               const std::string& category) const {
    if (auto it = vocab.find(slot + "." + category); it != vocab.end()) {
      if (it->second.empty()) throw Error("prompt grammar: empty vocabulary for slot '" + it->first + "'");
      return it->second;
    }
    auto it = vocab.find(slot);
    if (it == vocab.end()) {
      throw Error("prompt grammar: no vocabulary for slot '" + slot + "' (category " + category + ")");
    }
    if (it->second.empty()) throw Error("prompt grammar: empty vocabulary for slot '" + slot + "'");
    return it->second;
  }

  const std::vector<std::string>& domain_templates(const std::string& domain) const {
    auto it = templates.find(domain);
    if (it == templates.end() || it->second.empty()) {
      throw Error("prompt grammar: no templates for domain '" + domain + "'");
    }
    return it->second;
  }

  // Expands one pattern. `pick(slot, choices)` returns the chosen phrase.
  template <typename Pick>
  std::string expand(const std::string& pattern, const std::string& category, Pick&& pick) const {
    std::string out;
    std::size_t i = 0;
    while (i < pattern.size()) {
      if (pattern[i] == '{') {
        const std::size_t close = pattern.find('}', i);
        if (close == std::string::npos) throw Error("prompt grammar: unclosed slot in '" + pattern + "'");
        const std::string slot = pattern.substr(i + 1, close - i - 1);
        out += pick(slot, slot_choices(slot, category));
        i = close + 1;
      } else {
        out.push_back(pattern[i++]);
      }
    }
    if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out;
  }

  /// Expansion with caller-chosen phrases; every pick must belong to its slot's vocabulary.
  std::string render(const std::string& pattern, const std::string& category,
                     const std::map<std::string, std::string>& picks) const {
    return expand(pattern, category, [&](const std::string& slot, const std::vector<std::string>& choices) {
      auto it = picks.find(slot);
      if (it == picks.end()) throw Error("prompt grammar: no pick for slot '" + slot + "'");
      if (std::find(choices.begin(), choices.end(), it->second) == choices.end()) {
        throw Error("prompt grammar: '" + it->second + "' is not in the vocabulary of slot '" + slot + "'");
      }
      return it->second;
    });
  }

  void validate() const {
    for (const auto& [domain, pats] : templates) {
      if (pats.empty()) throw Error("prompt grammar: no templates for domain '" + domain + "'");
      for (const auto& p : pats)
        for (const auto& c : categories) {
          const std::string s = expand(p, c, [](const std::string&, const std::vector<std::string>& ch) {
            return ch.front();
          });
          if (s.empty()) throw Error("prompt grammar: template expands to empty text: '" + p + "'");
        }
    }
  }
};

/// Draws `n_per_domain` prompts for each domain, in `domains` order. Per
/// prompt: category, then template, then each slot left to right, all
/// uniform. Ids are "<domain>-<nnnn>".
inline std::vector<PromptRecord> generate_prompts(const PromptGrammar& grammar,
                                                  const std::vector<std::string>& domains,
                                                  std::size_t n_per_domain, SeededRng& rng) {
  if (n_per_domain < 1) throw Error("generate_prompts: n_per_domain must be at least 1");
  if (grammar.categories.empty()) throw Error("prompt grammar: empty category list");
  std::vector<PromptRecord> out;
  out.reserve(domains.size() * n_per_domain);
  for (const auto& domain : domains) {
    const auto& pats = grammar.domain_templates(domain);
    for (std::size_t i = 0; i < n_per_domain; ++i) {
      const std::string& category = grammar.categories[rng.below(grammar.categories.size())];
      const std::string& pattern = pats[rng.below(pats.size())];
      std::string text = grammar.expand(pattern, category,
                                        [&](const std::string&, const std::vector<std::string>& ch) {
                                          return ch[rng.below(ch.size())];
                                        });
      char id[32];
      std::snprintf(id, sizeof id, "-%04zu", i);
      out.push_back(PromptRecord::make(domain + id, std::move(text), category, domain));
    }
  }
  return out;
}

inline std::vector<PromptRecord> generate_prompts(const PromptGrammar& grammar,
                                                  std::size_t n_per_domain, SeededRng& rng) {
  return generate_prompts(grammar, default_domains(), n_per_domain, rng);
}

/// Greedy single pass in input order. A record is kept iff, against every
/// record kept so far, ROUGE-L < tau and embedding cosine < delta. The first
/// violation found (ROUGE-L checked before cosine) is written to
/// reject_reason as "rouge_l=<v> vs <id>" or "cosine=<v> vs <id>".
inline std::vector<PromptRecord> filter_bank(std::vector<PromptRecord> records, double tau,
                                             double delta) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error("filter_bank: tau must be in (0, 1]");
  if (!(delta > 0.0 && delta <= 1.0)) throw Error("filter_bank: delta must be in (0, 1]");
  std::vector<std::size_t> kept;
  char buf[64];
  for (std::size_t i = 0; i < records.size(); ++i) {
    PromptRecord& r = records[i];
    r.retained = false;
    r.reject_reason.clear();
    if (r.tokens.empty()) {
      r.reject_reason = "empty";
      continue;
    }
    for (std::size_t j : kept) {
      const PromptRecord& k = records[j];
      const double rl = rouge_l(r.tokens, k.tokens);
      if (rl >= tau) {
        std::snprintf(buf, sizeof buf, "rouge_l=%.4f vs ", rl);
        r.reject_reason = buf + k.id;
        break;
      }
      const double cs = cosine(r.embedding, k.embedding);
      if (cs >= delta) {
        std::snprintf(buf, sizeof buf, "cosine=%.4f vs ", cs);
        r.reject_reason = buf + k.id;
        break;
      }
    }
    if (r.reject_reason.empty()) {
      r.retained = true;
      kept.push_back(i);
    }
  }
  return records;
}

inline std::size_t retained_count(const std::vector<PromptRecord>& records) {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.retained; }));
}

}  // namespace hers::prompts
