#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hers/diffusion/diffusion.hpp"
#include "hers/linalg/gaussian.hpp"
#include "hers/pipeline/config.hpp"
#include "hers/pipeline/io.hpp"
#include "hers/promptbank/bank.hpp"

namespace hers::pipeline {

/// Sampler for one domain's mixture. Each draw picks a component by
/// cumulative weight with one uniform, then draws mean + L ξ.
class DomainMixture {
 public:
  explicit DomainMixture(const DomainSpec& spec) : name_(spec.name) {
    if (spec.components.empty()) throw Error("domain '" + spec.name + "' has no mixture components");
    for (const auto& c : spec.components) {
      weights_.push_back(c.weight);
      stats_.emplace_back(c.mean, c.cov);
      factors_.push_back(linalg::psd_factor(stats_.back()));
    }
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return stats_.front().dim(); }

  Vector sample(SeededRng& rng) const {
    const double u = rng.uniform();
    std::size_t c = 0;
    double acc = weights_[0];
    while (u >= acc && c + 1 < weights_.size()) acc += weights_[++c];
    const std::size_t k = dim();
    Vector xi(k);
    for (double& v : xi) v = rng.normal();
    Vector x = stats_[c].mean();
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) x[a] += factors_[c](a, b) * xi[b];
    return x;
  }

  Matrix sample(std::size_t n, SeededRng& rng) const {
    Matrix m(n, dim());
    for (std::size_t i = 0; i < n; ++i) {
      const Vector x = sample(rng);
      std::copy(x.begin(), x.end(), m.row(i).begin());
    }
    return m;
  }

  /// Mixture mean Σ w μ and covariance Σ w (Σ_c + μ_c μ_cᵀ) - μ μᵀ.
  GaussianStats moments() const {
    const std::size_t k = dim();
    Vector mean(k, 0.0);
    for (std::size_t c = 0; c < stats_.size(); ++c)
      for (std::size_t a = 0; a < k; ++a) mean[a] += weights_[c] * stats_[c].mean()[a];
    Matrix cov(k, k);
    for (std::size_t c = 0; c < stats_.size(); ++c) {
      const auto& m = stats_[c].mean();
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) cov(a, b) += weights_[c] * (stats_[c].cov()(a, b) + m[a] * m[b]);
    }
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) cov(a, b) -= mean[a] * mean[b];
    return GaussianStats(mean, cov);
  }

 private:
  std::string name_;
  std::vector<double> weights_;
  std::vector<GaussianStats> stats_;
  std::vector<Matrix> factors_;
};

inline std::vector<DomainMixture> make_mixtures(const PipelineConfig& config) {
  std::vector<DomainMixture> out;
  for (const auto& d : config.domains) out.emplace_back(d);
  return out;
}

struct SynthPair {
  std::string prompt_id;
  std::string domain;
  Vector sample;
};

/// One draw per retained prompt, from that prompt's domain mixture, in bank order.
inline std::vector<SynthPair> synth_dataset(const std::vector<prompts::PromptRecord>& bank,
                                            const PipelineConfig& config, SeededRng& rng) {
  const auto mixtures = make_mixtures(config);
  std::vector<SynthPair> out;
  for (const auto& r : bank) {
    if (!r.retained) continue;
    const std::size_t d = config.domain_index(r.domain);
    out.push_back({r.id, r.domain, mixtures[d].sample(rng)});
  }
  if (out.empty()) throw Error("synth_dataset: prompt bank has no retained prompts");
  return out;
}

inline std::vector<diffusion::LabeledSample> labeled(const std::vector<SynthPair>& pairs,
                                                     const PipelineConfig& config) {
  std::vector<diffusion::LabeledSample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.sample, config.domain_index(p.domain)});
  return out;
}

// ---- JSON-lines ------------------------------------------------------------

inline std::string prompts_to_jsonl(const std::vector<prompts::PromptRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j = {{"id", r.id},
              {"text", r.text},
              {"category", r.category},
              {"domain", r.domain},
              {"retained", r.retained},
              {"reject_reason", r.retained ? json(nullptr) : json(r.reject_reason)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

template <typename F>
void for_each_jsonl(const std::string& text, const std::string& what, F&& f) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(what + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline std::vector<prompts::PromptRecord> prompts_from_jsonl(const std::string& text) {
  std::vector<prompts::PromptRecord> out;
  for_each_jsonl(text, "prompt bank", [&](const json& j) {
    auto r = prompts::PromptRecord::make(j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                                         j.at("category").get<std::string>(),
                                         j.at("domain").get<std::string>());
    r.retained = j.value("retained", false);
    if (j.contains("reject_reason") && j.at("reject_reason").is_string())
      r.reject_reason = j.at("reject_reason").get<std::string>();
    out.push_back(std::move(r));
  });
  return out;
}

inline std::string dataset_to_jsonl(const std::vector<SynthPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json j = {{"prompt_id", p.prompt_id}, {"domain", p.domain}, {"sample", p.sample}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<SynthPair> dataset_from_jsonl(const std::string& text) {
  std::vector<SynthPair> out;
  for_each_jsonl(text, "dataset", [&](const json& j) {
    out.push_back({j.at("prompt_id").get<std::string>(), j.at("domain").get<std::string>(),
                   j.at("sample").get<Vector>()});
  });
  return out;
}

}  // namespace hers::pipeline
