#pragma once

#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hers/metrics/metrics.hpp"

namespace hers::pipeline {

using json = nlohmann::ordered_json;

/// Trust metrics for one (model, domain) pair. Domain "pooled" aggregates
/// every domain.
struct MetricsRow {
  std::string model;
  std::string domain;
  double d_fid = 0.0;
  double d_kl = 0.0;
  double epsilon = 0.0;
  double slack = 0.0;
  bool bound_satisfied = false;
  std::optional<double> probe_accuracy;  // absent with fewer than two domains
  double denoise_loss = 0.0;             // model's own loss on real samples
  double gen_loss = 0.0;                 // base-model loss on generated samples
  double real_loss = 0.0;                // base-model loss on real samples
};

struct DirectionalSummary {
  std::map<std::string, double> expert_improvement;  // 1 - L(expert_t, t) / L(base, t)
  double merged_improvement = 0.0;                   // 1 - mean_t L(merged) / mean_t L(base)
  std::optional<double> merged_probe_accuracy;
  double chance = 0.0;
};

struct MetricsReport {
  std::string config_hash;
  std::vector<std::string> domains;
  std::vector<std::string> models;                                    // row order of denoise_losses
  std::map<std::string, std::map<std::string, double>> denoise_losses;  // model -> domain -> loss
  std::vector<MetricsRow> rows;
  std::vector<metrics::CalibrationPoint> calibration;
  metrics::EpsilonModel epsilon;
  double heldout_bound_fraction = 0.0;
  std::map<std::string, double> merge_discrepancy;  // layer -> Frobenius gap
  DirectionalSummary directional;
};

inline constexpr const char* kReportCsvHeader =
    "model,domain,d_fid,d_kl,epsilon,slack,bound_satisfied,probe_accuracy,denoise_loss,gen_loss,real_loss";

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json report_to_json(const MetricsReport& r) {
  json losses = json::object();
  for (const auto& m : r.models) {
    json per = json::object();
    for (const auto& d : r.domains) per[d] = r.denoise_losses.at(m).at(d);
    losses[m] = std::move(per);
  }
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"model", row.model},
                    {"domain", row.domain},
                    {"d_fid", row.d_fid},
                    {"d_kl", row.d_kl},
                    {"epsilon", row.epsilon},
                    {"slack", row.slack},
                    {"bound_satisfied", row.bound_satisfied},
                    {"probe_accuracy", optional_json(row.probe_accuracy)},
                    {"denoise_loss", row.denoise_loss},
                    {"gen_loss", row.gen_loss},
                    {"real_loss", row.real_loss}});
  }
  json calib = json::array();
  for (const auto& p : r.calibration) calib.push_back({{"fid", p.fid}, {"kl", p.kl}, {"excess", p.excess}});
  json improvement = json::object();
  for (const auto& d : r.domains)
    if (auto it = r.directional.expert_improvement.find(d); it != r.directional.expert_improvement.end())
      improvement[d] = it->second;
  json discrepancy = json::object();
  for (const auto& [layer, v] : r.merge_discrepancy) discrepancy[layer] = v;

  return {{"schema", "hers-metrics-report/1"},
          {"config_hash", r.config_hash},
          {"domains", r.domains},
          {"denoise_losses", std::move(losses)},
          {"metrics", std::move(rows)},
          {"epsilon",
           {{"a", r.epsilon.a},
            {"b", r.epsilon.b},
            {"residual", r.epsilon.residual},
            {"sweeps", r.epsilon.sweeps},
            {"calibration", std::move(calib)}}},
          {"heldout_bound_fraction", r.heldout_bound_fraction},
          {"merge_discrepancy", std::move(discrepancy)},
          {"directional",
           {{"expert_improvement", std::move(improvement)},
            {"merged_improvement", r.directional.merged_improvement},
            {"merged_probe_accuracy", optional_json(r.directional.merged_probe_accuracy)},
            {"chance", r.directional.chance}}}};
}

inline std::string report_to_csv(const MetricsReport& r) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& row : r.rows) {
    out += row.model + "," + row.domain + "," + format_double(row.d_fid) + "," + format_double(row.d_kl) + "," +
           format_double(row.epsilon) + "," + format_double(row.slack) + "," +
           (row.bound_satisfied ? "true" : "false") + "," +
           (row.probe_accuracy ? format_double(*row.probe_accuracy) : "") + "," +
           format_double(row.denoise_loss) + "," + format_double(row.gen_loss) + "," +
           format_double(row.real_loss) + "\n";
  }
  return out;
}

}  // namespace hers::pipeline
