#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hers/diffusion/diffusion.hpp"
#include "hers/net/adam.hpp"
#include "hers/net/lora.hpp"
#include "hers/net/mlp.hpp"

namespace hers::experts {

using diffusion::LabeledSample;
using diffusion::NoiseSchedule;
using linalg::Matrix;
using net::LoRAAdapter;
using net::MlpDenoiser;

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double lr = 3e-4;
  double lambda = 1e-4;  // adapter Frobenius penalty; ignored without adapters
  std::uint64_t seed = 0;
  std::size_t monitor_size = 256;  // items in the fixed batch used for initial/final loss
};

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainLog {
  std::vector<LossPoint> curve;  // minibatch loss before each update
  double initial_loss = 0.0;     // fixed monitor batch, before training
  double final_loss = 0.0;       // fixed monitor batch, after training
};

/// Minibatch Adam on the denoising loss, updating every trainable parameter
/// of `model` in place. Batches are drawn with replacement.
inline TrainLog fit(MlpDenoiser& model, std::span<const LabeledSample> data,
                    const NoiseSchedule& sched, const TrainConfig& cfg) {
  if (data.empty()) throw Error("training data is empty");
  if (cfg.batch_size == 0) throw Error("batch size must be positive");
  SeededRng rng(cfg.seed);
  SeededRng monitor_rng = rng.fork(0x6d6f6e69746f72ULL);

  std::vector<LabeledSample> monitor;
  const std::size_t m = std::min(cfg.monitor_size, data.size());
  for (std::size_t i = 0; i < m; ++i) monitor.push_back(data[i * data.size() / m]);
  const auto monitor_items = diffusion::draw_noise(monitor, sched, monitor_rng);

  TrainLog log;
  log.initial_loss = diffusion::denoise_loss_fixed(model, monitor_items, sched, cfg.lambda, {false}).loss;
  auto params = model.trainable();
  net::AdamState adam = net::AdamState::for_params(params, {cfg.lr});
  std::vector<LabeledSample> batch(cfg.batch_size);
  log.curve.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& b : batch) b = data[rng.below(data.size())];
    const net::LossEval ev = diffusion::denoise_loss(model, batch, sched, rng, cfg.lambda);
    log.curve.push_back({step, ev.loss});
    net::adam_step(adam, params, ev.grads);
  }
  log.final_loss = diffusion::denoise_loss_fixed(model, monitor_items, sched, cfg.lambda, {false}).loss;
  return log;
}

/// Base model plus the adapters installed on a copy of it.
inline MlpDenoiser with_adapters(const MlpDenoiser& base, std::span<const LoRAAdapter> adapters) {
  MlpDenoiser m = base;
  m.clear_adapters();
  for (const auto& a : adapters) m.install_adapter(a);
  m.set_frozen_base(true);
  return m;
}

/// Fresh zero-delta adapters for `layers`. The A factors depend only on
/// (seed, layer name), so every domain starts from the same A.
inline std::vector<LoRAAdapter> init_adapters(const MlpDenoiser& base,
                                              const std::vector<std::string>& layers,
                                              const std::string& domain, std::size_t rank,
                                              std::uint64_t seed) {
  std::vector<LoRAAdapter> out;
  for (const auto& name : layers) {
    const auto& l = base.layer(name);
    SeededRng rng(derive_seed(seed, fnv1a64(name)));
    out.push_back(LoRAAdapter::init(name, domain, l.d_out(), l.d_in(), rank, rng));
  }
  return out;
}

struct ExpertConfig {
  TrainConfig train;
  std::size_t rank = 4;
  std::vector<std::string> layers;  // empty: every hidden layer
  std::uint64_t init_seed = 0;
};

struct TrainedExpert {
  std::string domain;
  std::vector<LoRAAdapter> adapters;
  TrainLog log;
};

/// Trains one domain expert against a frozen base. Every sample must carry
/// `domain_index`.
inline TrainedExpert train_expert(const MlpDenoiser& base, std::size_t domain_index,
                                  const std::string& domain, std::span<const LabeledSample> data,
                                  const NoiseSchedule& sched, const ExpertConfig& cfg) {
  if (data.empty()) throw Error("train_expert '" + domain + "': dataset is empty");
  for (const auto& s : data) {
    if (s.domain != domain_index) {
      throw Error("train_expert '" + domain + "': dataset mixes domains (found index " +
                  std::to_string(s.domain) + ", expected " + std::to_string(domain_index) + ")");
    }
  }
  if (base.has_adapters()) throw Error("train_expert '" + domain + "': base already carries adapters");
  const auto layers = cfg.layers.empty() ? base.hidden_layer_names() : cfg.layers;
  MlpDenoiser model = with_adapters(base, init_adapters(base, layers, domain, cfg.rank, cfg.init_seed));
  TrainedExpert out{domain, {}, fit(model, data, sched, cfg.train)};
  out.adapters = model.adapters();
  for (auto& a : out.adapters) a.domain = domain;
  return out;
}

/// Frozen base with one adapter list per domain.
struct ExpertSet {
  MlpDenoiser base;
  std::map<std::string, std::vector<LoRAAdapter>> adapters;

  void validate() const {
    if (adapters.empty()) throw Error("expert set is empty");
    const auto& [ref_domain, ref] = *adapters.begin();
    for (const auto& [domain, list] : adapters) {
      if (list.size() != ref.size()) {
        throw ShapeError("expert '" + domain + "' adapts " + std::to_string(list.size()) +
                         " layers, expert '" + ref_domain + "' adapts " + std::to_string(ref.size()));
      }
      for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& a = list[i];
        const auto& r = ref[i];
        if (a.layer_name != r.layer_name) {
          throw ShapeError("expert '" + domain + "' adapts layer '" + a.layer_name +
                           "' where expert '" + ref_domain + "' adapts '" + r.layer_name + "'");
        }
        if (a.a.rows() != r.a.rows() || a.a.cols() != r.a.cols() || a.b.rows() != r.b.rows() ||
            a.b.cols() != r.b.cols()) {
          throw ShapeError("layer '" + a.layer_name + "': expert '" + domain + "' factors " +
                           a.b.shape() + " x " + a.a.shape() + " differ from expert '" +
                           ref_domain + "' " + r.b.shape() + " x " + r.a.shape());
        }
        base.layer(a.layer_name);  // throws for unknown layers
      }
    }
  }

  MlpDenoiser expert_model(const std::string& domain) const {
    auto it = adapters.find(domain);
    if (it == adapters.end()) throw Error("no expert for domain '" + domain + "'");
    return with_adapters(base, it->second);
  }
};

/// Factor-wise merge: A* = mean_t A_t and B* = mean_t B_t per layer, giving
/// W* = W0 + B* A*.
inline std::vector<LoRAAdapter> merge_experts(const ExpertSet& experts,
                                              const std::string& merged_label = "merged") {
  experts.validate();
  const double inv = 1.0 / static_cast<double>(experts.adapters.size());
  std::vector<LoRAAdapter> merged = experts.adapters.begin()->second;
  for (auto& m : merged) {
    m.domain = merged_label;
    std::fill(m.a.data().begin(), m.a.data().end(), 0.0);
    std::fill(m.b.data().begin(), m.b.data().end(), 0.0);
  }
  for (const auto& [domain, list] : experts.adapters) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto ma = merged[i].a.data();
      auto mb = merged[i].b.data();
      const auto a = list[i].a.data();
      const auto b = list[i].b.data();
      for (std::size_t k = 0; k < ma.size(); ++k) ma[k] += a[k];
      for (std::size_t k = 0; k < mb.size(); ++k) mb[k] += b[k];
    }
  }
  if (experts.adapters.size() > 1) {
    for (auto& m : merged) {
      for (double& v : m.a.data()) v *= inv;
      for (double& v : m.b.data()) v *= inv;
    }
  }
  return merged;
}

/// Dense mean of materialized deltas, (1/|T|) Σ_t B_t A_t, per layer.
inline std::map<std::string, Matrix> merge_deltas_oracle(const ExpertSet& experts) {
  experts.validate();
  std::map<std::string, Matrix> out;
  for (const auto& [domain, list] : experts.adapters) {
    for (const auto& a : list) {
      Matrix d = a.delta();
      auto [it, inserted] = out.try_emplace(a.layer_name, d);
      if (!inserted) it->second = it->second + d;
    }
  }
  if (experts.adapters.size() > 1) {
    const double inv = 1.0 / static_cast<double>(experts.adapters.size());
    for (auto& [name, m] : out) m = inv * m;
  }
  return out;
}

/// ||B* A* - (1/|T|) Σ_t B_t A_t||_F per layer.
inline std::map<std::string, double> merge_discrepancy(const ExpertSet& experts) {
  const auto merged = merge_experts(experts);
  const auto oracle = merge_deltas_oracle(experts);
  std::map<std::string, double> out;
  for (const auto& m : merged) out[m.layer_name] = linalg::frobenius(m.delta() - oracle.at(m.layer_name));
  return out;
}

}  // namespace hers::experts
