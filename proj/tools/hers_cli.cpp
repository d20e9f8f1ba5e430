// Command-line driver for the pipeline stages.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "hers/hers.hpp"

namespace {

namespace hp = hers::pipeline;

struct Options {
  std::string config_path;
  std::string out_dir = "hers_out";
  std::optional<std::uint64_t> seed;
  std::string domain;
};

hp::PipelineConfig load(const Options& o) {
  hp::PipelineConfig c = o.config_path.empty() ? hp::PipelineConfig{} : hp::load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  c.output_dir = o.out_dir;
  c.resolve();
  return c;
}

void print_summary(const hp::MetricsReport& r) {
  for (const auto& [domain, v] : r.directional.expert_improvement)
    std::cout << "expert " << domain << " improvement " << v << "\n";
  std::cout << "merged improvement " << r.directional.merged_improvement << "\n";
  if (r.directional.merged_probe_accuracy)
    std::cout << "merged probe accuracy " << *r.directional.merged_probe_accuracy << " (chance "
              << r.directional.chance << ")\n";
  std::cout << "epsilon a=" << r.epsilon.a << " b=" << r.epsilon.b << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hers: prompt bank, domain experts, merging and trust metrics on a toy diffusion model"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--seed", o.seed, "Override the config seed");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Config JSON (defaults when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
    return sub;
  };
  auto* prompts = add_common(app.add_subcommand("prompts", "Generate and filter the prompt bank"));
  auto* synth = add_common(app.add_subcommand("synth", "Draw one sample per retained prompt"));
  auto* pretrain = add_common(app.add_subcommand("pretrain", "Train the base denoiser on pooled data"));
  auto* train = add_common(app.add_subcommand("train", "Train LoRA experts"));
  train->add_option("--domain", o.domain, "Train only this domain");
  auto* merge = add_common(app.add_subcommand("merge", "Merge experts factor-wise"));
  auto* eval = add_common(app.add_subcommand("eval", "Compute losses, trust metrics and reports"));
  auto* run_all = add_common(app.add_subcommand("run-all", "Run every stage in order"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  hp::PipelineConfig config;
  try {
    config = load(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  const hp::Paths paths{o.out_dir};

  try {
    if (*prompts) {
      const auto bank = hp::stage_prompts(config, paths);
      std::cout << hers::prompts::retained_count(bank) << " of " << bank.size() << " prompts retained\n";
    } else if (*synth) {
      std::cout << hp::stage_synth(config, paths).size() << " samples\n";
    } else if (*pretrain) {
      hp::stage_pretrain(config, paths);
    } else if (*train) {
      if (!o.domain.empty()) {
        try {
          config.domain_index(o.domain);
        } catch (const std::exception& e) {
          std::cerr << "error: " << e.what() << "\n";
          return 1;
        }
      }
      hp::stage_train(config, paths, o.domain.empty() ? std::nullopt : std::optional<std::string>(o.domain));
    } else if (*merge) {
      hp::stage_merge(config, paths);
    } else if (*eval) {
      print_summary(hp::stage_eval(config, paths));
    } else if (*run_all) {
      print_summary(hp::run_all(config, o.out_dir));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
