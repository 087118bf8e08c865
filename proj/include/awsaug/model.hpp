#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "awsaug/augment.hpp"
#include "awsaug/data.hpp"
#include "awsaug/error.hpp"
#include "awsaug/policy.hpp"
#include "awsaug/rng.hpp"

namespace awsaug {

// ---------------------------------------------------------------------------
// Architecture descriptor

struct Shape {
  int c = 0, h = 0, w = 0;
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

enum class LayerKind { Conv, Relu, MaxPool, Dense };

struct Layer {
  LayerKind kind = LayerKind::Relu;
  int out = 0;     // conv: output channels, dense: output units
  int kernel = 0;  // conv: kernel side, maxpool: window side (stride = window)
  friend bool operator==(const Layer&, const Layer&) = default;
};

// Textual form: "input 3x16x16; conv 8 3; relu; maxpool 2; dense 10".
// Convolutions are valid (no padding) with stride 1.
struct Arch {
  Shape input;
  std::vector<Layer> layers;

  friend bool operator==(const Arch&, const Arch&) = default;

  std::vector<Shape> shapes() const {
    std::vector<Shape> s{input};
    for (const auto& l : layers) {
      Shape in = s.back(), out = in;
      switch (l.kind) {
        case LayerKind::Conv:
          out = {l.out, in.h - l.kernel + 1, in.w - l.kernel + 1};
          break;
        case LayerKind::Relu:
          break;
        case LayerKind::MaxPool:
          out = {in.c, in.h / l.kernel, in.w / l.kernel};
          break;
        case LayerKind::Dense:
          out = {l.out, 1, 1};
          break;
      }
      if (out.c <= 0 || out.h <= 0 || out.w <= 0) throw Error("architecture shrinks to nothing");
      s.push_back(out);
    }
    return s;
  }

  std::size_t layer_params(std::size_t i, const Shape& in) const {
    const auto& l = layers[i];
    if (l.kind == LayerKind::Conv)
      return static_cast<std::size_t>(l.out) * (static_cast<std::size_t>(in.c) * l.kernel * l.kernel + 1);
    if (l.kind == LayerKind::Dense) return static_cast<std::size_t>(l.out) * (in.size() + 1);
    return 0;
  }

  std::size_t param_count() const {
    const auto s = shapes();
    std::size_t n = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) n += layer_params(i, s[i]);
    return n;
  }

  int n_outputs() const { return static_cast<int>(shapes().back().size()); }

  std::string to_string() const {
    std::ostringstream os;
    os << "input " << input.c << 'x' << input.h << 'x' << input.w;
    for (const auto& l : layers) {
      os << "; ";
      switch (l.kind) {
        case LayerKind::Conv: os << "conv " << l.out << ' ' << l.kernel; break;
        case LayerKind::Relu: os << "relu"; break;
        case LayerKind::MaxPool: os << "maxpool " << l.kernel; break;
        case LayerKind::Dense: os << "dense " << l.out; break;
      }
    }
    return os.str();
  }

  static Arch parse(const std::string& text) {
    Arch a;
    std::stringstream ss(text);
    std::string item;
    bool first = true;
    while (std::getline(ss, item, ';')) {
      std::istringstream is(item);
      std::string kw;
      if (!(is >> kw)) throw Error("empty layer in architecture: " + text);
      if (first) {
        char x1 = 0, x2 = 0;
        if (kw != "input" || !(is >> a.input.c >> x1 >> a.input.h >> x2 >> a.input.w) ||
            x1 != 'x' || x2 != 'x')
          throw Error("architecture must start with 'input CxHxW'");
        first = false;
        continue;
      }
      Layer l;
      if (kw == "conv") {
        l.kind = LayerKind::Conv;
        if (!(is >> l.out >> l.kernel) || l.out <= 0 || l.kernel <= 0) throw Error("bad conv layer");
      } else if (kw == "relu") {
        l.kind = LayerKind::Relu;
      } else if (kw == "maxpool") {
        l.kind = LayerKind::MaxPool;
        if (!(is >> l.kernel) || l.kernel <= 0) throw Error("bad maxpool layer");
      } else if (kw == "dense") {
        l.kind = LayerKind::Dense;
        if (!(is >> l.out) || l.out <= 0) throw Error("bad dense layer");
      } else {
        throw Error("unknown layer '" + kw + "'");
      }
      std::string extra;
      if (is >> extra) throw Error("trailing tokens in layer '" + item + "'");
      a.layers.push_back(l);
    }
    if (first) throw Error("empty architecture");
    a.shapes();
    return a;
  }

  static Arch toy(int channels, int side, int n_classes) {
    return parse("input " + std::to_string(channels) + "x" + std::to_string(side) + "x" +
                 std::to_string(side) + "; conv 8 3; relu; maxpool 2; conv 16 3; relu; maxpool 2; dense " +
                 std::to_string(n_classes));
  }
};

struct ModelState {
  Arch arch;
  std::vector<double> params;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

// He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
inline ModelState init_model(const Arch& arch, std::uint64_t seed) {
  ModelState m{arch, std::vector<double>(arch.param_count(), 0.0), seed};
  Rng rng(stream_seed(seed, 0x1417));
  const auto shapes = arch.shapes();
  std::size_t off = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    const auto n = arch.layer_params(i, shapes[i]);
    if (n == 0) continue;
    const std::size_t fan_in = l.kind == LayerKind::Conv
                                   ? static_cast<std::size_t>(shapes[i].c) * l.kernel * l.kernel
                                   : shapes[i].size();
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    const std::size_t n_weights = static_cast<std::size_t>(l.out) * fan_in;
    for (std::size_t k = 0; k < n_weights; ++k) m.params[off + k] = rng.uniform(-limit, limit);
    off += n;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward

// Standardized CHW tensor for the network input.
inline void image_to_tensor(const Image& img, const Shape& shape, std::span<double> out) {
  if (img.channels != shape.c || img.height != shape.h || img.width != shape.w)
    throw Error("input shape mismatch: image " + std::to_string(img.channels) + "x" +
                std::to_string(img.height) + "x" + std::to_string(img.width));
  const std::size_t plane = static_cast<std::size_t>(shape.h) * shape.w;
  for (int c = 0; c < shape.c; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      out[static_cast<std::size_t>(c) * plane + i] =
          (img.pixels[i * static_cast<std::size_t>(shape.c) + static_cast<std::size_t>(c)] / 255.0 - 0.5) * 4.0;
}

// Per-sample scratch space; reusable across calls with the same architecture.
class Network {
 public:
  explicit Network(const Arch& arch) : arch_(arch), shapes_(arch.shapes()) {
    acts_.resize(shapes_.size());
    deltas_.resize(shapes_.size());
    argmax_.resize(arch.layers.size());
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      acts_[i].resize(shapes_[i].size());
      deltas_[i].resize(shapes_[i].size());
    }
    std::size_t off = 0;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
      offsets_.push_back(off);
      off += arch.layer_params(i, shapes_[i]);
      if (arch.layers[i].kind == LayerKind::MaxPool) argmax_[i].resize(shapes_[i + 1].size());
    }
    n_params_ = off;
  }

  const Arch& arch() const { return arch_; }
  std::size_t param_count() const { return n_params_; }
  std::span<double> input() { return acts_.front(); }

  std::span<const double> forward(std::span<const double> params) {
    if (params.size() != n_params_) throw Error("parameter count does not match architecture");
    for (std::size_t i = 0; i < arch_.layers.size(); ++i) forward_layer(i, params);
    return acts_.back();
  }

  // Softmax cross-entropy of the last forward pass; writes dLoss/dLogits * scale
  // and backpropagates it, accumulating into grad.
  double backward(std::span<const double> params, int label, double scale, std::span<double> grad) {
    const auto& logits = acts_.back();
    auto& d = deltas_.back();
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t k = 0; k < logits.size(); ++k)
      d[k] = scale * (std::exp(logits[k] - log_z) - (static_cast<int>(k) == label ? 1.0 : 0.0));
    for (std::size_t i = arch_.layers.size(); i-- > 0;) backward_layer(i, params, grad);
    return log_z - logits[static_cast<std::size_t>(label)];
  }

  static double cross_entropy(std::span<const double> logits, int label) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    return mx + std::log(z) - logits[static_cast<std::size_t>(label)];
  }

 private:
  void forward_layer(std::size_t i, std::span<const double> params) {
    const auto& l = arch_.layers[i];
    const Shape in = shapes_[i], out = shapes_[i + 1];
    const auto& x = acts_[i];
    auto& y = acts_[i + 1];
    const double* p = params.data() + offsets_[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        const int k = l.kernel;
        const double* bias = p + static_cast<std::size_t>(out.c) * in.c * k * k;
        for (int oc = 0; oc < out.c; ++oc) {
          double* yo = y.data() + static_cast<std::size_t>(oc) * out.h * out.w;
          std::fill(yo, yo + static_cast<std::size_t>(out.h) * out.w, bias[oc]);
          for (int ic = 0; ic < in.c; ++ic) {
            const double* xi = x.data() + static_cast<std::size_t>(ic) * in.h * in.w;
            const double* w = p + (static_cast<std::size_t>(oc) * in.c + ic) * k * k;
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const double wv = w[ky * k + kx];
                for (int oy = 0; oy < out.h; ++oy) {
                  const double* xr = xi + static_cast<std::size_t>(oy + ky) * in.w + kx;
                  double* yr = yo + static_cast<std::size_t>(oy) * out.w;
                  for (int ox = 0; ox < out.w; ++ox) yr[ox] += wv * xr[ox];
                }
              }
          }
        }
        break;
      }
      case LayerKind::Relu:
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = x[j] > 0.0 ? x[j] : 0.0;
        break;
      case LayerKind::MaxPool: {
        const int k = l.kernel;
        auto& am = argmax_[i];
        for (int c = 0; c < out.c; ++c)
          for (int oy = 0; oy < out.h; ++oy)
            for (int ox = 0; ox < out.w; ++ox) {
              std::size_t best = (static_cast<std::size_t>(c) * in.h + oy * k) * in.w + ox * k;
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                  const std::size_t j = (static_cast<std::size_t>(c) * in.h + oy * k + dy) * in.w + ox * k + dx;
                  if (x[j] > x[best]) best = j;
                }
              const std::size_t o = (static_cast<std::size_t>(c) * out.h + oy) * out.w + ox;
              y[o] = x[best];
              am[o] = best;
            }
        break;
      }
      case LayerKind::Dense: {
        const std::size_t n_in = in.size();
        const double* bias = p + static_cast<std::size_t>(out.c) * n_in;
        for (int o = 0; o < out.c; ++o) {
          const double* w = p + static_cast<std::size_t>(o) * n_in;
          double s = bias[o];
          for (std::size_t j = 0; j < n_in; ++j) s += w[j] * x[j];
          y[static_cast<std::size_t>(o)] = s;
        }
        break;
      }
    }
  }

  void backward_layer(std::size_t i, std::span<const double> params, std::span<double> grad) {
    const auto& l = arch_.layers[i];
    const Shape in = shapes_[i], out = shapes_[i + 1];
    const auto& x = acts_[i];
    const auto& dy = deltas_[i + 1];
    auto& dx = deltas_[i];
    const bool need_dx = i > 0;
    const double* p = params.data() + offsets_[i];
    double* g = grad.data() + offsets_[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        const int k = l.kernel;
        double* gbias = g + static_cast<std::size_t>(out.c) * in.c * k * k;
        if (need_dx) std::fill(dx.begin(), dx.end(), 0.0);
        for (int oc = 0; oc < out.c; ++oc) {
          const double* d = dy.data() + static_cast<std::size_t>(oc) * out.h * out.w;
          double bsum = 0.0;
          for (std::size_t j = 0; j < static_cast<std::size_t>(out.h) * out.w; ++j) bsum += d[j];
          gbias[oc] += bsum;
          for (int ic = 0; ic < in.c; ++ic) {
            const double* xi = x.data() + static_cast<std::size_t>(ic) * in.h * in.w;
            double* dxi = dx.data() + static_cast<std::size_t>(ic) * in.h * in.w;
            const std::size_t wo = (static_cast<std::size_t>(oc) * in.c + ic) * k * k;
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const double wv = p[wo + ky * k + kx];
                double gs = 0.0;
                for (int oy = 0; oy < out.h; ++oy) {
                  const double* xr = xi + static_cast<std::size_t>(oy + ky) * in.w + kx;
                  const double* dr = d + static_cast<std::size_t>(oy) * out.w;
                  for (int ox = 0; ox < out.w; ++ox) gs += dr[ox] * xr[ox];
                  if (need_dx) {
                    double* dxr = dxi + static_cast<std::size_t>(oy + ky) * in.w + kx;
                    for (int ox = 0; ox < out.w; ++ox) dxr[ox] += wv * dr[ox];
                  }
                }
                g[wo + ky * k + kx] += gs;
              }
          }
        }
        break;
      }
      case LayerKind::Relu:
        if (need_dx)
          for (std::size_t j = 0; j < x.size(); ++j) dx[j] = x[j] > 0.0 ? dy[j] : 0.0;
        break;
      case LayerKind::MaxPool:
        if (need_dx) {
          std::fill(dx.begin(), dx.end(), 0.0);
          const auto& am = argmax_[i];
          for (std::size_t o = 0; o < dy.size(); ++o) dx[am[o]] += dy[o];
        }
        break;
      case LayerKind::Dense: {
        const std::size_t n_in = in.size();
        double* gbias = g + static_cast<std::size_t>(out.c) * n_in;
        if (need_dx) std::fill(dx.begin(), dx.end(), 0.0);
        for (int o = 0; o < out.c; ++o) {
          const double d = dy[static_cast<std::size_t>(o)];
          if (d == 0.0) continue;
          double* gw = g + static_cast<std::size_t>(o) * n_in;
          const double* w = p + static_cast<std::size_t>(o) * n_in;
          for (std::size_t j = 0; j < n_in; ++j) gw[j] += d * x[j];
          gbias[o] += d;
          if (need_dx)
            for (std::size_t j = 0; j < n_in; ++j) dx[j] += d * w[j];
        }
        break;
      }
    }
  }

  Arch arch_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<double>> acts_;
  std::vector<std::vector<double>> deltas_;
  std::vector<std::vector<std::size_t>> argmax_;
  std::vector<std::size_t> offsets_;
  std::size_t n_params_ = 0;
};

inline std::vector<std::vector<double>> forward(const ModelState& m, std::span<const Image> batch) {
  Network net(m.arch);
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& img : batch) {
    image_to_tensor(img, m.arch.input, net.input());
    const auto logits = net.forward(m.params);
    for (double v : logits)
      if (!std::isfinite(v)) throw Error("non-finite logits");
    out.emplace_back(logits.begin(), logits.end());
  }
  return out;
}

// Mean cross-entropy over raw input tensors; writes the mean gradient.
inline double loss_and_grad(const ModelState& m, std::span<const std::vector<double>> inputs,
                            std::span<const int> labels, std::vector<double>& grad) {
  Network net(m.arch);
  grad.assign(m.params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    std::copy(inputs[n].begin(), inputs[n].end(), net.input().begin());
    net.forward(m.params);
    loss += net.backward(m.params, labels[n], scale, grad);
  }
  return loss * scale;
}

inline double loss_only(const ModelState& m, std::span<const std::vector<double>> inputs,
                        std::span<const int> labels) {
  Network net(m.arch);
  double loss = 0.0;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    std::copy(inputs[n].begin(), inputs[n].end(), net.input().begin());
    loss += Network::cross_entropy(net.forward(m.params), labels[n]);
  }
  return loss / static_cast<double>(inputs.size());
}

inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Fraction of argmax-correct predictions; batch_size only chunks the work.
inline double evaluate(const ModelState& m, const Dataset& data, std::size_t batch_size = 256) {
  if (data.empty()) throw Error("evaluate: empty dataset");
  if (batch_size == 0) batch_size = 1;
  Network net(m.arch);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    for (std::size_t n = start; n < end; ++n) {
      image_to_tensor(data.images[n], m.arch.input, net.input());
      if (argmax(net.forward(m.params)) == data.labels[n]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training

enum class Schedule { Cosine, Constant };

struct TrainConfig {
  int epochs = 20;  // horizon of the cosine schedule
  int batch_size = 32;
  double lr_max = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  Schedule schedule = Schedule::Cosine;
  int eb_factor = 1;
};

struct TrainState {
  ModelState model;
  std::vector<double> velocity;
  std::uint64_t iteration = 0;

  explicit TrainState(ModelState m) : model(std::move(m)), velocity(model.params.size(), 0.0) {}
};

inline std::size_t iterations_per_epoch(std::size_t n, int batch_size) {
  const auto b = static_cast<std::size_t>(batch_size);
  return (n + b - 1) / b;
}

// lr(t) = lr_max * (1 + cos(pi * t / T)) / 2 for the cosine schedule.
inline double cosine_lr(double lr_max, double t, double horizon) {
  if (horizon <= 0.0) return lr_max;
  return lr_max * (1.0 + std::cos(std::numbers::pi * std::min(t, horizon) / horizon)) / 2.0;
}

inline double learning_rate(const TrainConfig& cfg, std::uint64_t iteration, std::size_t iters_per_epoch) {
  if (cfg.schedule == Schedule::Constant) return cfg.lr_max;
  return cosine_lr(cfg.lr_max, static_cast<double>(iteration),
                   static_cast<double>(cfg.epochs) * static_cast<double>(iters_per_epoch));
}

// Where each training image's searched operation comes from.
struct AugmentSource {
  const OpSampler* sampler = nullptr;  // nullptr: no searched operation
  OpCounts* counts = nullptr;          // optional record of sampled ids
  Rng* op_rng = nullptr;               // draws and applies operations; nullptr: the training stream
};

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch_size <= 0 || cfg.lr_max < 0.0 || cfg.momentum < 0.0 ||
      cfg.weight_decay < 0.0 || cfg.eb_factor < 1)
    throw UserError("invalid training configuration");
}

// One pass of mini-batch SGD with Nesterov momentum and L2 weight decay.
// Each image goes through flip/crop, one sampled operation (if any) and
// cutout. With eb_factor r every selected image appears r times with
// independent augmentations; the number of steps per epoch does not change.
inline EpochStats train_epoch(TrainState& st, const Dataset& data, const AugmentSource& aug,
                              const TrainConfig& cfg, const PreprocessConfig& pre, Rng& rng,
                              const GeometryConfig& geo = {}) {
  if (data.empty()) throw Error("train_epoch: empty dataset");
  validate(cfg);
  auto& m = st.model;
  Network net(m.arch);
  const std::size_t n_params = m.params.size();
  if (st.velocity.size() != n_params) st.velocity.assign(n_params, 0.0);
  std::vector<double> grad(n_params);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  Rng& op_rng = aug.op_rng != nullptr ? *aug.op_rng : rng;

  const std::size_t ipe = iterations_per_epoch(data.size(), cfg.batch_size);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  EpochStats stats;
  double loss_sum = 0.0;
  for (std::size_t it = 0; it < ipe; ++it) {
    const std::size_t start = it * bs, end = std::min(data.size(), start + bs);
    const std::size_t batch_n = (end - start) * static_cast<std::size_t>(cfg.eb_factor);
    const double scale = 1.0 / static_cast<double>(batch_n);
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;
    for (std::size_t j = start; j < end; ++j) {
      const std::size_t idx = order[j];
      for (int r = 0; r < cfg.eb_factor; ++r) {
        AugmentOp op;
        const AugmentOp* op_ptr = nullptr;
        if (aug.sampler != nullptr) {
          const auto id = aug.sampler->sample(op_rng);
          if (aug.counts != nullptr) aug.counts->add(id);
          op = op_from_id(static_cast<int>(id));
          op_ptr = &op;
        }
        const Image img = augment_for_training(data.images[idx], pre, op_ptr, rng, geo, &op_rng);
        image_to_tensor(img, m.arch.input, net.input());
        net.forward(m.params);
        batch_loss += net.backward(m.params, data.labels[idx], scale, grad);
      }
    }
    const double lr = learning_rate(cfg, st.iteration, ipe);
    for (std::size_t k = 0; k < n_params; ++k) {
      const double g = grad[k] + cfg.weight_decay * m.params[k];
      st.velocity[k] = cfg.momentum * st.velocity[k] + g;
      m.params[k] -= lr * (g + cfg.momentum * st.velocity[k]);
    }
    ++st.iteration;
    loss_sum += batch_loss * scale;
    ++stats.steps;
  }
  for (double p : m.params)
    if (!std::isfinite(p)) throw Error("training diverged: non-finite parameters");
  stats.mean_loss = loss_sum / static_cast<double>(stats.steps);
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpoints: "AWSCKPT1", version byte, u32 LE length + architecture text,
// u64 LE parameter count, raw little-endian doubles.

inline constexpr char kCheckpointMagic[8] = {'A', 'W', 'S', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t& pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw Error("corrupt checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
  pos += static_cast<std::size_t>(bytes);
  return v;
}

// Write to a sibling temp file, then rename over the target.
inline void write_atomically(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline std::vector<std::uint8_t> checkpoint_bytes(const ModelState& m) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  out.push_back(kCheckpointVersion);
  const std::string arch = m.arch.to_string();
  detail::put_le(out, arch.size(), 4);
  out.insert(out.end(), arch.begin(), arch.end());
  detail::put_le(out, m.params.size(), 8);
  for (double p : m.params) detail::put_le(out, std::bit_cast<std::uint64_t>(p), 8);
  return out;
}

inline ModelState parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kCheckpointMagic + 1 ||
      !std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin()))
    throw Error("corrupt checkpoint");
  if (bytes[sizeof kCheckpointMagic] != kCheckpointVersion) throw Error("unsupported checkpoint version");
  std::size_t pos = sizeof kCheckpointMagic + 1;
  const auto len = detail::get_le(bytes, pos, 4);
  if (pos + len > bytes.size()) throw Error("corrupt checkpoint");
  const std::string text(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
  pos += len;
  ModelState m;
  try {
    m.arch = Arch::parse(text);
  } catch (const Error&) {
    throw Error("corrupt checkpoint");
  }
  const auto count = detail::get_le(bytes, pos, 8);
  if (count != m.arch.param_count() || bytes.size() - pos != count * 8) throw Error("corrupt checkpoint");
  m.params.resize(count);
  for (auto& p : m.params) p = std::bit_cast<double>(detail::get_le(bytes, pos, 8));
  return m;
}

inline void save_checkpoint(const ModelState& m, const std::string& path) {
  detail::write_atomically(path, checkpoint_bytes(m));
}

inline ModelState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UserError("checkpoint not found: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

inline ModelState load_checkpoint(const std::string& path, const Arch& expected) {
  auto m = load_checkpoint(path);
  if (!(m.arch == expected)) throw Error("checkpoint architecture mismatch");
  return m;
}

}  // namespace awsaug
