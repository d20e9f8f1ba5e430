#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hers/net/lora.hpp"

namespace hers::net {

inline constexpr double kLeakySlope = 0.01;
inline constexpr std::size_t kTimeEmbeddingDim = 8;

inline double leaky_relu(double z) noexcept { return z > 0.0 ? z : kLeakySlope * z; }
inline double leaky_relu_grad(double z) noexcept { return z > 0.0 ? 1.0 : kLeakySlope; }

// Signs of hidden pre-activations, in evaluation order. Used by the gradient
// checker to detect finite-difference steps that cross a leaky-ReLU kink.
using ActivationPattern = std::vector<bool>;

struct MlpShape {
  std::size_t data_dim = 8;
  std::size_t cond_dim = 3;
  std::size_t hidden_width = 64;
  std::size_t hidden_layers = 2;  // width x width layers between the projections

  std::size_t input_dim() const noexcept { return data_dim + cond_dim + kTimeEmbeddingDim; }
};

/// Activations cached by a forward pass for the matching backward pass.
struct ForwardTape {
  std::vector<Vector> inputs;       // input of layer l
  std::vector<Vector> pre;          // pre-activation of layer l
  std::vector<Vector> adapter_mid;  // A x for adapted layers, empty otherwise
  Vector output;

  bool empty() const noexcept { return inputs.empty(); }
};

/// Gradients aligned with MlpDenoiser::trainable() order.
struct Gradients {
  std::vector<Vector> values;

  void scale(double s) {
    for (auto& g : values)
      for (double& v : g) v *= s;
  }
  void add(const Gradients& other, double s = 1.0) {
    if (other.values.size() != values.size()) throw ShapeError("gradient list size mismatch");
    for (std::size_t p = 0; p < values.size(); ++p) {
      if (other.values[p].size() != values[p].size()) throw ShapeError("gradient shape mismatch");
      for (std::size_t i = 0; i < values[p].size(); ++i) values[p][i] += s * other.values[p][i];
    }
  }
  double max_abs() const {
    double m = 0.0;
    for (const auto& g : values)
      for (double v : g) m = std::max(m, std::abs(v));
    return m;
  }
};

struct ParamRef {
  std::string name;  // "<layer>.w0", "<layer>.bias", "<layer>.lora_a", "<layer>.lora_b"
  std::span<double> values;
};

struct ConstParamRef {
  std::string name;
  std::span<const double> values;
};

/// Conditional noise-prediction MLP. Hidden layers use leaky ReLU (slope
/// 0.01), the output layer is linear. Input is [x | one-hot condition |
/// time embedding].
///
/// With `frozen_base` set only adapter factors are trainable; otherwise every
/// w0 and bias is trainable as well.
class MlpDenoiser {
 public:
  MlpDenoiser() = default;

  MlpDenoiser(MlpShape shape, std::vector<LinearLayer> layers, bool frozen_base = false)
      : shape_(shape), layers_(std::move(layers)), frozen_base_(frozen_base) {
    validate();
  }

  static MlpDenoiser create(const MlpShape& shape, SeededRng& rng) {
    std::vector<LinearLayer> layers;
    auto make = [&](std::string name, std::size_t d_out, std::size_t d_in, double gain) {
      SeededRng lr = rng.fork(fnv1a64(name));
      Matrix w(d_out, d_in);
      const double s = std::sqrt(gain / static_cast<double>(d_in));
      for (double& v : w.data()) v = s * lr.normal();
      layers.push_back({std::move(name), std::move(w), Vector(d_out, 0.0), std::nullopt});
    };
    make("in", shape.hidden_width, shape.input_dim(), 2.0);
    for (std::size_t i = 0; i < shape.hidden_layers; ++i)
      make("hidden" + std::to_string(i), shape.hidden_width, shape.hidden_width, 2.0);
    make("out", shape.data_dim, shape.hidden_width, 1.0);
    return MlpDenoiser(shape, std::move(layers));
  }

  const MlpShape& shape() const noexcept { return shape_; }
  std::size_t input_dim() const noexcept { return layers_.front().d_in(); }
  std::size_t output_dim() const noexcept { return layers_.back().d_out(); }

  const std::vector<LinearLayer>& layers() const noexcept { return layers_; }
  std::vector<LinearLayer>& layers() noexcept { return layers_; }

  const LinearLayer& layer(const std::string& name) const {
    for (const auto& l : layers_)
      if (l.name == name) return l;
    throw Error("no layer named '" + name + "'");
  }
  LinearLayer& layer(const std::string& name) {
    return const_cast<LinearLayer&>(std::as_const(*this).layer(name));
  }

  // Layers that carry adapters by default: everything between the input and
  // output projections.
  std::vector<std::string> hidden_layer_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 1; i + 1 < layers_.size(); ++i) names.push_back(layers_[i].name);
    return names;
  }

  bool frozen_base() const noexcept { return frozen_base_; }
  void set_frozen_base(bool frozen) noexcept { frozen_base_ = frozen; }

  bool has_adapters() const noexcept {
    for (const auto& l : layers_)
      if (l.adapter) return true;
    return false;
  }

  void clear_adapters() {
    for (auto& l : layers_) l.adapter.reset();
  }

  void install_adapter(LoRAAdapter adapter) {
    LinearLayer& l = layer(adapter.layer_name);
    l.adapter = std::move(adapter);
    l.validate();
  }

  std::vector<LoRAAdapter> adapters() const {
    std::vector<LoRAAdapter> out;
    for (const auto& l : layers_)
      if (l.adapter) out.push_back(*l.adapter);
    return out;
  }

  void validate() const {
    if (layers_.empty()) throw ShapeError("denoiser has no layers");
    if (layers_.front().d_in() != shape_.input_dim()) {
      throw ShapeError("denoiser input width " + std::to_string(layers_.front().d_in()) +
                       " != data + condition + time dims " + std::to_string(shape_.input_dim()));
    }
    if (layers_.back().d_out() != shape_.data_dim) {
      throw ShapeError("denoiser output width " + std::to_string(layers_.back().d_out()) +
                       " != data dim " + std::to_string(shape_.data_dim));
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i].validate();
      if (i > 0 && layers_[i].d_in() != layers_[i - 1].d_out()) {
        throw ShapeError("layer '" + layers_[i].name + "' input " +
                         std::to_string(layers_[i].d_in()) + " does not chain with '" +
                         layers_[i - 1].name + "' output " + std::to_string(layers_[i - 1].d_out()));
      }
    }
  }

  Vector forward(std::span<const double> input, ActivationPattern* pattern = nullptr) const {
    Vector h(input.begin(), input.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Vector z = linear_forward(layers_[l], h);
      if (l + 1 < layers_.size()) {
        for (double& v : z) {
          if (pattern) pattern->push_back(v > 0.0);
          v = leaky_relu(v);
        }
      }
      h = std::move(z);
    }
    return h;
  }

  ForwardTape forward_cached(std::span<const double> input,
                             ActivationPattern* pattern = nullptr) const {
    ForwardTape tape;
    tape.inputs.reserve(layers_.size());
    tape.pre.reserve(layers_.size());
    tape.adapter_mid.resize(layers_.size());
    Vector h(input.begin(), input.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      tape.inputs.push_back(h);
      Vector z = linear_forward(layers_[l], h, &tape.adapter_mid[l]);
      tape.pre.push_back(z);
      if (l + 1 < layers_.size()) {
        for (double& v : z) {
          if (pattern) pattern->push_back(v > 0.0);
          v = leaky_relu(v);
        }
      }
      h = std::move(z);
    }
    tape.output = std::move(h);
    return tape;
  }

  std::vector<ParamRef> trainable() {
    std::vector<ParamRef> out;
    for (auto& l : layers_) {
      if (!frozen_base_) {
        out.push_back({l.name + ".w0", l.w0.data()});
        out.push_back({l.name + ".bias", l.bias});
      }
      if (l.adapter) {
        out.push_back({l.name + ".lora_a", l.adapter->a.data()});
        out.push_back({l.name + ".lora_b", l.adapter->b.data()});
      }
    }
    return out;
  }

  std::vector<ConstParamRef> trainable() const {
    std::vector<ConstParamRef> out;
    for (auto& p : const_cast<MlpDenoiser&>(*this).trainable()) out.push_back({p.name, p.values});
    return out;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& p : trainable()) g.values.emplace_back(p.values.size(), 0.0);
    return g;
  }

  /// Reverse-mode pass for one input. Adds scale * dL/dθ into `acc` where
  /// `upstream` is dL/d(output). Frozen weights receive nothing.
  void backward_accumulate(const ForwardTape& tape, std::span<const double> upstream,
                           Gradients& acc, double scale = 1.0) const {
    if (tape.empty() || tape.inputs.size() != layers_.size()) {
      throw Error("backward: no matching forward pass for this model");
    }
    if (upstream.size() != output_dim()) {
      throw ShapeError("backward: upstream gradient length " + std::to_string(upstream.size()) +
                       ", expected " + std::to_string(output_dim()));
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (tape.inputs[l].size() != layers_[l].d_in() || tape.pre[l].size() != layers_[l].d_out()) {
        throw Error("backward: forward tape does not match layer '" + layers_[l].name + "'");
      }
    }

    // Trainable slots per layer, in trainable() order.
    std::vector<int> slot(layers_.size(), -1);
    {
      int idx = 0;
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        slot[l] = idx;
        if (!frozen_base_) idx += 2;
        if (layers_[l].adapter) idx += 2;
      }
      if (static_cast<std::size_t>(idx) != acc.values.size()) {
        throw ShapeError("backward: gradient accumulator does not match trainable parameters");
      }
    }

    Vector g(upstream.begin(), upstream.end());
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const LinearLayer& layer = layers_[li];
      if (li + 1 < layers_.size()) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= leaky_relu_grad(tape.pre[li][i]);
      }
      const Vector& x = tape.inputs[li];
      int s = slot[li];
      if (!frozen_base_) {
        auto& dw = acc.values[s];
        auto& db = acc.values[s + 1];
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double gi = scale * g[i];
          db[i] += gi;
          if (gi == 0.0) continue;
          double* row = dw.data() + i * layer.d_in();
          for (std::size_t j = 0; j < x.size(); ++j) row[j] += gi * x[j];
        }
        s += 2;
      }
      Vector bt_g;
      if (layer.adapter) {
        const LoRAAdapter& ad = *layer.adapter;
        const Vector& u = tape.adapter_mid[li];
        bt_g = linalg::matvec_transposed(ad.b, g);  // Bᵀ g, length r
        auto& da = acc.values[s];
        auto& dbm = acc.values[s + 1];
        // dA = (Bᵀ g) xᵀ, dB = g uᵀ
        for (std::size_t k = 0; k < ad.rank(); ++k) {
          const double c = scale * bt_g[k];
          if (c == 0.0) continue;
          double* row = da.data() + k * ad.d_in();
          for (std::size_t j = 0; j < x.size(); ++j) row[j] += c * x[j];
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double gi = scale * g[i];
          if (gi == 0.0) continue;
          double* row = dbm.data() + i * ad.rank();
          for (std::size_t k = 0; k < ad.rank(); ++k) row[k] += gi * u[k];
        }
      }
      if (li == 0) break;
      Vector gx = linalg::matvec_transposed(layer.w0, g);
      if (layer.adapter) {
        const Vector at = linalg::matvec_transposed(layer.adapter->a, bt_g);
        for (std::size_t j = 0; j < gx.size(); ++j) gx[j] += at[j];
      }
      g = std::move(gx);
    }
  }

  /// Gradients of <upstream, output> for a single cached forward pass.
  Gradients backward(const ForwardTape& tape, std::span<const double> upstream) const {
    Gradients g = zero_gradients();
    backward_accumulate(tape, upstream, g);
    return g;
  }

 private:
  MlpShape shape_;
  std::vector<LinearLayer> layers_;
  bool frozen_base_ = false;
};

}  // namespace hers::net
