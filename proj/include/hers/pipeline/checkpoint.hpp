#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "hers/diffusion/diffusion.hpp"
#include "hers/net/mlp.hpp"
#include "hers/pipeline/io.hpp"

namespace hers::pipeline {

using json = nlohmann::ordered_json;

inline constexpr const char* kCheckpointMagic = "HERS-CKPT";
inline constexpr int kCheckpointVersion = 1;

/// Base weights, optional per-domain adapters, and the noise schedule.
struct Checkpoint {
  std::string config_hash;
  net::MlpDenoiser base;  // adapters, if any, live in `adapters`
  diffusion::NoiseSchedule schedule;
  std::map<std::string, std::vector<net::LoRAAdapter>> adapters;
};

namespace detail {

inline json matrix_json(const std::string& name, const linalg::Matrix& m) {
  return {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

inline linalg::Matrix matrix_from(const json& j, const std::string& where) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) {
    throw Error("checkpoint: " + where + " has " + std::to_string(data.size()) + " values for shape " +
                std::to_string(rows) + "x" + std::to_string(cols));
  }
  return linalg::Matrix(rows, cols, std::move(data));
}

}  // namespace detail

/// JSON form. Doubles are written in shortest round-trip form, so loading
/// reproduces every value bit-exactly and save -> load -> save is a fixed point.
inline std::string checkpoint_to_string(const Checkpoint& ck) {
  const auto& s = ck.base.shape();
  json layers = json::array();
  for (const auto& l : ck.base.layers()) {
    json lj = detail::matrix_json(l.name, l.w0);
    lj["bias"] = l.bias;
    layers.push_back(std::move(lj));
  }
  json adapters = json::object();
  for (const auto& [domain, list] : ck.adapters) {
    json arr = json::array();
    for (const auto& a : list) {
      arr.push_back({{"layer", a.layer_name},
                     {"rank", a.rank()},
                     {"a", detail::matrix_json("lora_a", a.a)},
                     {"b", detail::matrix_json("lora_b", a.b)}});
    }
    adapters[domain] = std::move(arr);
  }
  json j = {{"magic", kCheckpointMagic},
            {"version", kCheckpointVersion},
            {"config_hash", ck.config_hash},
            {"shape",
             {{"data_dim", s.data_dim},
              {"cond_dim", s.cond_dim},
              {"hidden_width", s.hidden_width},
              {"hidden_layers", s.hidden_layers}}},
            {"schedule",
             {{"steps", ck.schedule.steps()},
              {"beta_start", ck.schedule.beta_start()},
              {"beta_end", ck.schedule.beta_end()}}},
            {"layers", std::move(layers)},
            {"adapters", std::move(adapters)}};
  return j.dump(1) + "\n";
}

inline Checkpoint checkpoint_from_string(const std::string& text, const std::string& where = "checkpoint") {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(where + ": not valid JSON (" + e.what() + ")");
  }
  try {
    if (!j.is_object() || j.value("magic", std::string{}) != kCheckpointMagic) {
      throw Error(where + ": bad magic header (expected \"" + kCheckpointMagic + "\")");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw Error(where + ": unsupported version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint ck;
    ck.config_hash = j.at("config_hash").get<std::string>();
    const auto& sj = j.at("shape");
    net::MlpShape shape{sj.at("data_dim").get<std::size_t>(), sj.at("cond_dim").get<std::size_t>(),
                        sj.at("hidden_width").get<std::size_t>(), sj.at("hidden_layers").get<std::size_t>()};
    const auto& sch = j.at("schedule");
    ck.schedule = diffusion::make_schedule(sch.at("steps").get<std::size_t>(), sch.at("beta_start").get<double>(),
                                           sch.at("beta_end").get<double>());
    std::vector<net::LinearLayer> layers;
    for (const auto& lj : j.at("layers")) {
      const std::string name = lj.at("name").get<std::string>();
      layers.push_back({name, detail::matrix_from(lj, "layer '" + name + "'"),
                        lj.at("bias").get<linalg::Vector>(), std::nullopt});
    }
    try {
      ck.base = net::MlpDenoiser(shape, std::move(layers));
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
    for (const auto& [domain, arr] : j.at("adapters").items()) {
      std::vector<net::LoRAAdapter> list;
      for (const auto& aj : arr) {
        const std::string layer = aj.at("layer").get<std::string>();
        net::LoRAAdapter a{layer, domain, detail::matrix_from(aj.at("a"), "adapter '" + layer + "'.a"),
                           detail::matrix_from(aj.at("b"), "adapter '" + layer + "'.b")};
        if (a.rank() != aj.at("rank").get<std::size_t>()) {
          throw Error(where + ": adapter '" + layer + "' rank field disagrees with factor shapes");
        }
        a.validate();
        const auto& base_layer = ck.base.layer(layer);
        if (a.d_in() != base_layer.d_in() || a.d_out() != base_layer.d_out()) {
          throw Error(where + ": adapter '" + layer + "' of domain '" + domain + "' does not fit layer " +
                      base_layer.w0.shape());
        }
        list.push_back(std::move(a));
      }
      ck.adapters.emplace(domain, std::move(list));
    }
    return ck;
  } catch (const json::exception& e) {
    throw Error(where + ": malformed checkpoint (" + e.what() + ")");
  }
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  write_text_atomic(path, checkpoint_to_string(ck));
}

/// Loads a checkpoint. A config hash different from `expected_hash` (when
/// given) is appended to `warnings` rather than treated as an error.
inline Checkpoint load_checkpoint(const fs::path& path, const std::string& expected_hash = {},
                                  std::vector<std::string>* warnings = nullptr) {
  Checkpoint ck = checkpoint_from_string(read_text(path), path.string());
  if (!expected_hash.empty() && ck.config_hash != expected_hash && warnings) {
    warnings->push_back(path.string() + ": config hash " + ck.config_hash + " differs from current config " +
                        expected_hash);
  }
  return ck;
}

}  // namespace hers::pipeline
