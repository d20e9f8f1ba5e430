#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hers/diffusion/diffusion.hpp"
#include "hers/experts/experts.hpp"
#include "hers/metrics/metrics.hpp"
#include "hers/pipeline/checkpoint.hpp"
#include "hers/pipeline/config.hpp"
#include "hers/pipeline/data.hpp"
#include "hers/pipeline/io.hpp"
#include "hers/pipeline/report.hpp"
#include "hers/promptbank/bank.hpp"
#include "hers/promptbank/default_grammar.hpp"

namespace hers::pipeline {

/// Error raised by a pipeline stage; what() is "[stage] message".
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("[" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Artifact locations inside an output directory.
struct Paths {
  fs::path dir;

  fs::path resolved_config() const { return dir / "config.resolved.json"; }
  fs::path prompts() const { return dir / "prompts.jsonl"; }
  fs::path dataset() const { return dir / "dataset.jsonl"; }
  fs::path base() const { return dir / "base.ckpt.json"; }
  fs::path expert(const std::string& domain) const { return dir / ("expert_" + domain + ".ckpt.json"); }
  fs::path merged() const { return dir / "merged.ckpt.json"; }
  fs::path losses(const std::string& name) const { return dir / ("loss_" + name + ".csv"); }
  fs::path report_json() const { return dir / "report.json"; }
  fs::path report_csv() const { return dir / "report.csv"; }
  fs::path plot_data() const { return dir / "plot_data.csv"; }
};

namespace detail {

// Seed salts, one per consumer of randomness.
inline std::uint64_t stage_seed(const PipelineConfig& c, const std::string& what) {
  return derive_seed(c.seed, fnv1a64(what));
}

inline diffusion::NoiseSchedule schedule_of(const PipelineConfig& c) {
  return diffusion::make_schedule(c.schedule_steps, c.beta_start, c.beta_end);
}

inline std::string loss_csv(const std::string& domain, const experts::TrainLog& log) {
  std::string out = "step,domain,loss\n";
  for (const auto& p : log.curve) out += std::to_string(p.step) + "," + domain + "," + format_double(p.loss) + "\n";
  return out;
}

template <typename F>
auto run_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline std::vector<diffusion::LabeledSample> load_labeled(const PipelineConfig& c, const Paths& p) {
  return labeled(dataset_from_jsonl(read_text(p.dataset())), c);
}

inline Checkpoint load_ckpt(const fs::path& path, const std::string& hash) {
  std::vector<std::string> warnings;
  Checkpoint ck = load_checkpoint(path, hash, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  return ck;
}

}  // namespace detail

inline void write_resolved_config(const PipelineConfig& c, const Paths& p) {
  write_text_atomic(p.resolved_config(), to_json(c).dump(2) + "\n");
}

/// Stage 1: grammar prompts for every domain, filtered into a bank.
inline std::vector<prompts::PromptRecord> stage_prompts(const PipelineConfig& c, const Paths& p) {
  return detail::run_stage("prompts", [&] {
    write_resolved_config(c, p);
    const auto grammar = prompts::default_grammar();
    SeededRng rng(detail::stage_seed(c, "prompts"));
    auto bank = prompts::filter_bank(prompts::generate_prompts(grammar, c.domain_names(), c.prompts_per_domain, rng),
                                     c.tau, c.delta);
    write_text_atomic(p.prompts(), prompts_to_jsonl(bank));
    return bank;
  });
}

/// Stage 2: one ground-truth sample per retained prompt.
inline std::vector<SynthPair> stage_synth(const PipelineConfig& c, const Paths& p) {
  return detail::run_stage("synth", [&] {
    const auto bank = prompts_from_jsonl(read_text(p.prompts()));
    SeededRng rng(detail::stage_seed(c, "synth"));
    auto data = synth_dataset(bank, c, rng);
    write_text_atomic(p.dataset(), dataset_to_jsonl(data));
    return data;
  });
}

/// Trains W0 and biases of a fresh denoiser on the pooled, labeled dataset.
inline Checkpoint stage_pretrain(const PipelineConfig& c, const Paths& p) {
  return detail::run_stage("pretrain", [&] {
    const auto data = detail::load_labeled(c, p);
    const auto sched = detail::schedule_of(c);
    SeededRng init(detail::stage_seed(c, "init"));
    net::MlpDenoiser model = net::MlpDenoiser::create(
        {c.data_dim, c.domains.size(), c.hidden_width, c.hidden_layers}, init);
    experts::TrainConfig tc{c.pretrain_steps, c.batch_size, c.pretrain_lr, 0.0, detail::stage_seed(c, "pretrain")};
    const auto log = experts::fit(model, data, sched, tc);
    write_text_atomic(p.losses("pretrain"), detail::loss_csv("pooled", log));
    Checkpoint ck{config_hash(c), model, sched, {}};
    save_checkpoint(p.base(), ck);
    return ck;
  });
}

inline experts::ExpertConfig expert_config(const PipelineConfig& c, const std::string& domain) {
  experts::ExpertConfig ec;
  ec.train = {c.expert_steps, c.batch_size, c.lr, c.lora_lambda, detail::stage_seed(c, "expert:" + domain)};
  ec.rank = c.lora_rank;
  ec.layers = c.lora_layers;
  ec.init_seed = detail::stage_seed(c, "lora-init");
  return ec;
}

/// Stage 3: trains the expert for `domain`, or for every domain when empty.
inline void stage_train(const PipelineConfig& c, const Paths& p, const std::optional<std::string>& domain = {}) {
  detail::run_stage("train", [&] {
    const Checkpoint base = detail::load_ckpt(p.base(), config_hash(c));
    const auto data = detail::load_labeled(c, p);
    std::vector<std::string> todo = domain ? std::vector<std::string>{*domain} : c.domain_names();
    for (const auto& name : todo) {
      const std::size_t idx = c.domain_index(name);
      std::vector<diffusion::LabeledSample> subset;
      for (const auto& s : data)
        if (s.domain == idx) subset.push_back(s);
      auto expert = experts::train_expert(base.base, idx, name, subset, base.schedule, expert_config(c, name));
      write_text_atomic(p.losses(name), detail::loss_csv(name, expert.log));
      Checkpoint ck{config_hash(c), base.base, base.schedule, {{name, expert.adapters}}};
      save_checkpoint(p.expert(name), ck);
    }
    return 0;
  });
}

inline experts::ExpertSet load_experts(const PipelineConfig& c, const Paths& p) {
  const Checkpoint base = detail::load_ckpt(p.base(), config_hash(c));
  experts::ExpertSet set{base.base, {}};
  for (const auto& name : c.domain_names()) {
    const Checkpoint ck = detail::load_ckpt(p.expert(name), config_hash(c));
    if (ck.base.layers().size() != base.base.layers().size()) {
      throw Error("expert '" + name + "' was trained against a different base");
    }
    for (std::size_t i = 0; i < ck.base.layers().size(); ++i) {
      if (ck.base.layers()[i].w0 != base.base.layers()[i].w0 || ck.base.layers()[i].bias != base.base.layers()[i].bias)
        throw Error("expert '" + name + "' was trained against a different base");
    }
    set.adapters[name] = ck.adapters.at(name);
  }
  return set;
}

/// Stage 4: factor-wise merge of all experts.
inline Checkpoint stage_merge(const PipelineConfig& c, const Paths& p) {
  return detail::run_stage("merge", [&] {
    const auto set = load_experts(c, p);
    const auto base = detail::load_ckpt(p.base(), config_hash(c));
    Checkpoint ck{config_hash(c), set.base, base.schedule, {{"merged", experts::merge_experts(set)}}};
    save_checkpoint(p.merged(), ck);
    return ck;
  });
}

/// Evaluation: denoising losses, generation, trust metrics, ε calibration,
/// risk-bound checks and probe faithfulness. Writes report.json,
/// report.csv and plot_data.csv.
inline MetricsReport stage_eval(const PipelineConfig& c, const Paths& p) {
  return detail::run_stage("eval", [&] {
    const std::string hash = config_hash(c);
    const auto set = load_experts(c, p);
    const Checkpoint base_ck = detail::load_ckpt(p.base(), hash);
    const Checkpoint merged_ck = detail::load_ckpt(p.merged(), hash);
    const auto& sched = base_ck.schedule;
    const auto domains = c.domain_names();
    const std::size_t nd = domains.size();
    const auto mixtures = make_mixtures(c);
    const metrics::FeatureProjector projector(c.feature_dim, c.data_dim, detail::stage_seed(c, "projector"));

    const net::MlpDenoiser& base = set.base;
    const net::MlpDenoiser merged = experts::with_adapters(base, merged_ck.adapters.at("merged"));
    std::vector<net::MlpDenoiser> expert_models;
    for (const auto& d : domains) expert_models.push_back(set.expert_model(d));

    // Real evaluation samples and fixed noise per domain.
    std::vector<Matrix> real(nd);
    std::vector<std::vector<diffusion::NoisedItem>> real_items(nd);
    for (std::size_t t = 0; t < nd; ++t) {
      SeededRng rr(derive_seed(detail::stage_seed(c, "eval-real"), t));
      real[t] = mixtures[t].sample(std::max<std::size_t>(c.eval_samples, 2), rr);
      std::vector<diffusion::LabeledSample> ls;
      for (std::size_t i = 0; i < real[t].rows(); ++i)
        ls.push_back({Vector(real[t].row(i).begin(), real[t].row(i).end()), t});
      SeededRng nr(derive_seed(detail::stage_seed(c, "eval-noise"), t));
      real_items[t] = diffusion::draw_noise(ls, sched, nr);
    }

    MetricsReport report;
    report.config_hash = hash;
    report.domains = domains;
    auto eval_loss = [&](const net::MlpDenoiser& m, std::size_t t) {
      return diffusion::denoise_loss_fixed(m, real_items[t], sched, 0.0, {false}).loss;
    };
    auto add_losses = [&](const std::string& name, const net::MlpDenoiser& m) {
      report.models.push_back(name);
      for (std::size_t t = 0; t < nd; ++t) report.denoise_losses[name][domains[t]] = eval_loss(m, t);
    };
    add_losses("base", base);
    for (std::size_t t = 0; t < nd; ++t) add_losses("expert:" + domains[t], expert_models[t]);
    add_losses("merged", merged);

    // Generated sets: base and merged on every domain, each expert on its own.
    struct GenSet {
      std::string model;
      std::vector<Matrix> per_domain;
    };
    auto gen_with = [&](const std::string& label, auto&& model_for) {
      GenSet g{label, {}};
      for (std::size_t t = 0; t < nd; ++t) {
        SeededRng gr(derive_seed(detail::stage_seed(c, "gen:" + label), t));
        g.per_domain.push_back(diffusion::generate(model_for(t), diffusion::Condition(t, nd),
                                                   std::max<std::size_t>(c.gen_samples, 2), sched, gr));
      }
      return g;
    };
    std::vector<GenSet> gens;
    gens.push_back(gen_with("base", [&](std::size_t) -> const net::MlpDenoiser& { return base; }));
    gens.push_back(gen_with("expert", [&](std::size_t t) -> const net::MlpDenoiser& { return expert_models[t]; }));
    gens.push_back(gen_with("merged", [&](std::size_t) -> const net::MlpDenoiser& { return merged; }));

    // Excess loss: base-model loss on generated vs real samples under shared noise draws.
    auto base_loss_on = [&](const Matrix& samples, std::size_t t) {
      std::vector<diffusion::NoisedItem> items;
      const auto& ref = real_items[t];
      for (std::size_t i = 0; i < samples.rows(); ++i) {
        const auto& r = ref[i % ref.size()];
        items.push_back({Vector(samples.row(i).begin(), samples.row(i).end()), t, r.t, r.noise});
      }
      return diffusion::denoise_loss_fixed(base, items, sched, 0.0, {false}).loss;
    };
    auto real_subset = [&](std::size_t t, std::size_t n) {
      Matrix m(std::min(n, real[t].rows()), real[t].cols());
      for (std::size_t i = 0; i < m.rows(); ++i) std::copy(real[t].row(i).begin(), real[t].row(i).end(), m.row(i).begin());
      return m;
    };
    auto stack = [](const std::vector<Matrix>& ms) {
      std::size_t n = 0;
      for (const auto& m : ms) n += m.rows();
      Matrix out(n, ms.front().cols());
      std::size_t r = 0;
      for (const auto& m : ms)
        for (std::size_t i = 0; i < m.rows(); ++i, ++r) std::copy(m.row(i).begin(), m.row(i).end(), out.row(r).begin());
      return out;
    };

    std::vector<metrics::GaussianStats> real_stats;
    for (std::size_t t = 0; t < nd; ++t) real_stats.push_back(linalg::gaussian_fit(projector.project(real[t])));
    const auto pooled_real_stats = linalg::gaussian_fit(projector.project(stack(real)));

    for (const auto& g : gens) {
      std::optional<metrics::ProbeResult> probe;
      if (nd >= 2) probe = metrics::probe_faithfulness(projector, real, g.per_domain);
      double gen_sum = 0.0, real_sum = 0.0, own_sum = 0.0;
      for (std::size_t t = 0; t < nd; ++t) {
        MetricsRow row;
        row.model = g.model;
        row.domain = domains[t];
        const auto gs = linalg::gaussian_fit(projector.project(g.per_domain[t]));
        row.d_fid = metrics::fid(real_stats[t], gs);
        row.d_kl = metrics::kl_gaussian(real_stats[t], gs);
        row.gen_loss = base_loss_on(g.per_domain[t], t);
        row.real_loss = base_loss_on(real_subset(t, g.per_domain[t].rows()), t);
        const std::string loss_model = g.model == "expert" ? "expert:" + domains[t] : g.model;
        row.denoise_loss = report.denoise_losses[loss_model][domains[t]];
        if (probe) row.probe_accuracy = probe->per_domain[t];
        gen_sum += row.gen_loss;
        real_sum += row.real_loss;
        own_sum += row.denoise_loss;
        report.rows.push_back(row);
      }
      MetricsRow pooled;
      pooled.model = g.model;
      pooled.domain = "pooled";
      const auto gs = linalg::gaussian_fit(projector.project(stack(g.per_domain)));
      pooled.d_fid = metrics::fid(pooled_real_stats, gs);
      pooled.d_kl = metrics::kl_gaussian(pooled_real_stats, gs);
      pooled.gen_loss = gen_sum / static_cast<double>(nd);
      pooled.real_loss = real_sum / static_cast<double>(nd);
      pooled.denoise_loss = own_sum / static_cast<double>(nd);
      if (probe) pooled.probe_accuracy = probe->accuracy;
      report.rows.push_back(pooled);
    }

    // ε is calibrated on base and expert per-domain rows; merged rows are held out.
    for (const auto& row : report.rows) {
      if (row.model != "merged" && row.domain != "pooled")
        report.calibration.push_back({row.d_fid, row.d_kl, row.gen_loss - row.real_loss});
    }
    if (report.calibration.size() >= 2) report.epsilon = metrics::fit_epsilon(report.calibration);
    std::size_t held = 0, held_ok = 0;
    for (auto& row : report.rows) {
      const auto rc = metrics::risk_bound_check(row.d_fid, row.d_kl, report.epsilon, row.gen_loss, row.real_loss);
      row.epsilon = rc.epsilon;
      row.slack = rc.slack;
      row.bound_satisfied = rc.satisfied;
      if (row.model == "merged" && row.domain != "pooled") {
        ++held;
        held_ok += rc.satisfied;
      }
    }
    report.heldout_bound_fraction = held ? static_cast<double>(held_ok) / static_cast<double>(held) : 0.0;
    report.merge_discrepancy = experts::merge_discrepancy(set);

    double base_mean = 0.0, merged_mean = 0.0;
    for (std::size_t t = 0; t < nd; ++t) {
      const double lb = report.denoise_losses["base"][domains[t]];
      report.directional.expert_improvement[domains[t]] =
          1.0 - report.denoise_losses["expert:" + domains[t]][domains[t]] / lb;
      base_mean += lb;
      merged_mean += report.denoise_losses["merged"][domains[t]];
    }
    report.directional.merged_improvement = 1.0 - merged_mean / base_mean;
    report.directional.chance = 1.0 / static_cast<double>(nd);
    for (const auto& row : report.rows)
      if (row.model == "merged" && row.domain == "pooled") report.directional.merged_probe_accuracy = row.probe_accuracy;

    write_text_atomic(p.report_json(), report_to_json(report).dump(2) + "\n");
    write_text_atomic(p.report_csv(), report_to_csv(report));

    std::string plot = "step,domain,loss\n";
    for (const auto& name : std::vector<std::string>{"pretrain"}) {
      const std::string text = read_text(p.losses(name));
      plot += text.substr(text.find('\n') + 1);
    }
    for (const auto& d : domains) {
      const std::string text = read_text(p.losses(d));
      plot += text.substr(text.find('\n') + 1);
    }
    write_text_atomic(p.plot_data(), plot);
    return report;
  });
}

/// All stages in order.
inline MetricsReport run_all(PipelineConfig c, const fs::path& out_dir) {
  c.resolve();
  const Paths p{out_dir};
  stage_prompts(c, p);
  stage_synth(c, p);
  stage_pretrain(c, p);
  stage_train(c, p);
  stage_merge(c, p);
  return stage_eval(c, p);
}

}  // namespace hers::pipeline
