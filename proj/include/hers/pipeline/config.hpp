#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hers/linalg/gaussian.hpp"
#include "hers/promptbank/bank.hpp"
#include "hers/rng.hpp"

namespace hers::pipeline {

using json = nlohmann::ordered_json;
using linalg::GaussianStats;
using linalg::Matrix;
using linalg::Vector;

struct MixtureComponent {
  double weight = 1.0;
  Vector mean;
  Matrix cov;
};

/// Ground-truth data distribution for one domain: a Gaussian mixture.
struct DomainSpec {
  std::string name;
  std::vector<MixtureComponent> components;  // empty until resolved
};

struct PipelineConfig {
  std::uint64_t seed = 20240917;
  std::size_t data_dim = 8;
  std::vector<DomainSpec> domains;

  // Default mixtures, used for domains that list no components.
  std::size_t components_per_domain = 2;
  double mean_radius = 4.0;
  double component_variance = 0.25;

  std::size_t prompts_per_domain = 400;
  double tau = 0.7;
  double delta = 0.9;

  std::size_t hidden_width = 64;
  std::size_t hidden_layers = 2;

  std::size_t lora_rank = 4;
  double lora_lambda = 1e-4;
  std::vector<std::string> lora_layers;  // empty: all hidden layers

  double lr = 3e-4;           // adapter training
  double pretrain_lr = 3e-4;  // full-weight base training
  std::size_t batch_size = 32;
  std::size_t pretrain_steps = 1500;
  std::size_t expert_steps = 2000;

  std::size_t schedule_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  std::size_t feature_dim = 4;
  std::size_t eval_samples = 600;  // real samples per domain for evaluation
  std::size_t gen_samples = 300;   // generated samples per domain and model

  std::string output_dir = "hers_out";

  std::vector<std::string> domain_names() const {
    std::vector<std::string> n;
    for (const auto& d : domains) n.push_back(d.name);
    return n;
  }

  std::size_t domain_index(const std::string& name) const {
    for (std::size_t i = 0; i < domains.size(); ++i)
      if (domains[i].name == name) return i;
    throw Error("unknown domain label '" + name + "'");
  }

  /// Fills missing mixtures from the seed: component means uniform in a ball
  /// of radius `mean_radius`, covariance component_variance·I, equal weights.
  void resolve() {
    if (domains.empty()) {
      for (const auto& n : prompts::default_domains()) domains.push_back({n, {}});
    }
    SeededRng rng(derive_seed(seed, fnv1a64("mixtures")));
    for (auto& d : domains) {
      SeededRng drng = rng.fork(fnv1a64(d.name));
      if (!d.components.empty()) continue;
      for (std::size_t c = 0; c < components_per_domain; ++c) {
        Vector dir(data_dim);
        for (double& v : dir) v = drng.normal();
        const double n = linalg::norm(dir);
        const double r = mean_radius * std::pow(drng.uniform(), 1.0 / static_cast<double>(data_dim));
        for (double& v : dir) v *= r / n;
        Matrix cov = component_variance * Matrix::identity(data_dim);
        d.components.push_back({1.0 / static_cast<double>(components_per_domain), dir, cov});
      }
    }
    validate();
  }

  void validate() const {
    auto unit = [](double v, const char* what) {
      if (!(v > 0.0 && v <= 1.0)) throw Error(std::string("config: ") + what + " must be in (0, 1]");
    };
    unit(tau, "tau");
    unit(delta, "delta");
    auto positive = [](std::size_t v, const char* what) {
      if (v == 0) throw Error(std::string("config: ") + what + " must be positive");
    };
    positive(data_dim, "data_dim");
    positive(prompts_per_domain, "prompts.n_per_domain");
    positive(hidden_width, "model.hidden_width");
    positive(lora_rank, "lora.rank");
    positive(batch_size, "train.batch_size");
    positive(schedule_steps, "schedule.steps");
    positive(feature_dim, "metrics.feature_dim");
    if (feature_dim > data_dim) throw Error("config: metrics.feature_dim exceeds data_dim");
    if (!(lr > 0.0)) throw Error("config: train.lr must be positive");
    if (!(pretrain_lr > 0.0)) throw Error("config: train.pretrain_lr must be positive");
    if (lora_lambda < 0.0) throw Error("config: lora.lambda must be nonnegative");
    if (domains.empty()) throw Error("config: no domains");
    for (std::size_t i = 0; i < domains.size(); ++i) {
      const auto& d = domains[i];
      for (std::size_t j = 0; j < i; ++j)
        if (domains[j].name == d.name) throw Error("config: duplicate domain '" + d.name + "'");
      if (d.components.empty()) continue;
      double w = 0.0;
      for (const auto& c : d.components) {
        if (c.weight < 0.0) throw Error("config: negative mixture weight in domain '" + d.name + "'");
        if (c.mean.size() != data_dim || c.cov.rows() != data_dim || c.cov.cols() != data_dim) {
          throw Error("config: mixture component of domain '" + d.name + "' does not match data_dim");
        }
        w += c.weight;
      }
      if (std::abs(w - 1.0) > 1e-9) {
        throw Error("config: mixture weights of domain '" + d.name + "' sum to " + std::to_string(w));
      }
    }
  }
};

inline json matrix_rows_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

inline Matrix matrix_rows_from_json(const json& j) {
  const std::size_t r = j.size();
  const std::size_t c = r == 0 ? 0 : j.at(0).size();
  std::vector<double> data;
  for (const auto& row : j) {
    if (row.size() != c) throw Error("ragged matrix in JSON");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Matrix(r, c, std::move(data));
}

inline json to_json(const PipelineConfig& c, bool include_output = true) {
  json domains = json::array();
  for (const auto& d : c.domains) {
    json comps = json::array();
    for (const auto& comp : d.components) {
      comps.push_back({{"weight", comp.weight}, {"mean", comp.mean}, {"cov", matrix_rows_to_json(comp.cov)}});
    }
    domains.push_back({{"name", d.name}, {"components", comps}});
  }
  json j = {
      {"seed", c.seed},
      {"data_dim", c.data_dim},
      {"domains", domains},
      {"mixture",
       {{"components_per_domain", c.components_per_domain},
        {"mean_radius", c.mean_radius},
        {"component_variance", c.component_variance}}},
      {"prompts", {{"n_per_domain", c.prompts_per_domain}, {"tau", c.tau}, {"delta", c.delta}}},
      {"model", {{"hidden_width", c.hidden_width}, {"hidden_layers", c.hidden_layers}}},
      {"lora", {{"rank", c.lora_rank}, {"lambda", c.lora_lambda}, {"layers", c.lora_layers}}},
      {"train",
       {{"lr", c.lr},
        {"pretrain_lr", c.pretrain_lr},
        {"batch_size", c.batch_size},
        {"pretrain_steps", c.pretrain_steps},
        {"expert_steps", c.expert_steps}}},
      {"schedule", {{"steps", c.schedule_steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}}},
      {"metrics",
       {{"feature_dim", c.feature_dim}, {"eval_samples", c.eval_samples}, {"gen_samples", c.gen_samples}}},
  };
  if (include_output) j["output"] = {{"dir", c.output_dir}};
  return j;
}

/// Reads a config object. Every field is optional and falls back to the
/// default above; unknown keys are rejected.
inline PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  auto check_keys = [](const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) throw Error("config: '" + where + "' must be an object");
    for (const auto& [k, v] : obj.items()) {
      bool ok = false;
      for (const char* key : keys) ok |= k == key;
      if (!ok) throw Error("config: unknown key '" + k + "' in " + where);
    }
  };
  try {
    check_keys(j, {"seed", "data_dim", "domains", "mixture", "prompts", "model", "lora", "train", "schedule",
                   "metrics", "output"},
               "config");
    c.seed = j.value("seed", c.seed);
    c.data_dim = j.value("data_dim", c.data_dim);
    if (j.contains("domains")) {
      for (const auto& d : j.at("domains")) {
        DomainSpec spec;
        if (d.is_string()) {
          spec.name = d.get<std::string>();
        } else {
          check_keys(d, {"name", "components"}, "domains[]");
          spec.name = d.at("name").get<std::string>();
          for (const auto& comp : d.value("components", json::array())) {
            check_keys(comp, {"weight", "mean", "cov"}, "components[]");
            spec.components.push_back({comp.at("weight").get<double>(), comp.at("mean").get<Vector>(),
                                       matrix_rows_from_json(comp.at("cov"))});
          }
        }
        c.domains.push_back(std::move(spec));
      }
    }
    if (j.contains("mixture")) {
      const auto& m = j.at("mixture");
      check_keys(m, {"components_per_domain", "mean_radius", "component_variance"}, "mixture");
      c.components_per_domain = m.value("components_per_domain", c.components_per_domain);
      c.mean_radius = m.value("mean_radius", c.mean_radius);
      c.component_variance = m.value("component_variance", c.component_variance);
    }
    if (j.contains("prompts")) {
      const auto& p = j.at("prompts");
      check_keys(p, {"n_per_domain", "tau", "delta"}, "prompts");
      c.prompts_per_domain = p.value("n_per_domain", c.prompts_per_domain);
      c.tau = p.value("tau", c.tau);
      c.delta = p.value("delta", c.delta);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, {"hidden_width", "hidden_layers"}, "model");
      c.hidden_width = m.value("hidden_width", c.hidden_width);
      c.hidden_layers = m.value("hidden_layers", c.hidden_layers);
    }
    if (j.contains("lora")) {
      const auto& l = j.at("lora");
      check_keys(l, {"rank", "lambda", "layers"}, "lora");
      c.lora_rank = l.value("rank", c.lora_rank);
      c.lora_lambda = l.value("lambda", c.lora_lambda);
      c.lora_layers = l.value("layers", c.lora_layers);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_keys(t, {"lr", "pretrain_lr", "batch_size", "pretrain_steps", "expert_steps"}, "train");
      c.lr = t.value("lr", c.lr);
      c.pretrain_lr = t.value("pretrain_lr", c.pretrain_lr);
      c.batch_size = t.value("batch_size", c.batch_size);
      c.pretrain_steps = t.value("pretrain_steps", c.pretrain_steps);
      c.expert_steps = t.value("expert_steps", c.expert_steps);
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      check_keys(s, {"steps", "beta_start", "beta_end"}, "schedule");
      c.schedule_steps = s.value("steps", c.schedule_steps);
      c.beta_start = s.value("beta_start", c.beta_start);
      c.beta_end = s.value("beta_end", c.beta_end);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      check_keys(m, {"feature_dim", "eval_samples", "gen_samples"}, "metrics");
      c.feature_dim = m.value("feature_dim", c.feature_dim);
      c.eval_samples = m.value("eval_samples", c.eval_samples);
      c.gen_samples = m.value("gen_samples", c.gen_samples);
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      check_keys(o, {"dir"}, "output");
      c.output_dir = o.value("dir", c.output_dir);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

// FNV-1a over the canonical JSON of the resolved config, output paths excluded.
inline std::string config_hash(const PipelineConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(c, false).dump())));
  return buf;
}

}  // namespace hers::pipeline
