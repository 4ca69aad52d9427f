#pragma once

#include <memory>
#include <variant>
#include <vector>

#include "ssimadv/image.hpp"
#include "ssimadv/rng.hpp"

namespace ssimadv {

struct ConvSpec {
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
};
struct DenseSpec {
  int units = 1;
};
struct ReluSpec {};
using LayerSpec = std::variant<ConvSpec, DenseSpec, ReluSpec>;

/// 2 conv + 1 dense stack sized for quick CPU runs.
inline std::vector<LayerSpec> desk_arch(int classes) {
  return {ConvSpec{16, 3, 2, 1}, ReluSpec{}, ConvSpec{32, 3, 2, 1}, ReluSpec{},
          DenseSpec{64},         ReluSpec{}, DenseSpec{classes}};
}

/// 3 conv (64/128/256 filters) + dense-128 stack.
inline std::vector<LayerSpec> large_arch(int classes) {
  return {ConvSpec{64, 3, 2, 1},  ReluSpec{}, ConvSpec{128, 3, 2, 1}, ReluSpec{},
          ConvSpec{256, 3, 2, 1}, ReluSpec{}, DenseSpec{128},         ReluSpec{},
          DenseSpec{classes}};
}

template <typename Scalar>
struct Conv2d {
  int in_channels, out_channels, kernel, stride, pad;
  Shape in_shape, out_shape;
  MatX<Scalar> weight;  // out_channels x (in_channels * kernel * kernel)
  VecX<Scalar> bias;
};

template <typename Scalar>
struct Dense {
  int in_size, out_size;
  MatX<Scalar> weight;  // out_size x in_size
  VecX<Scalar> bias;
};

struct Relu {};

template <typename Scalar>
using Layer = std::variant<Conv2d<Scalar>, Dense<Scalar>, Relu>;

/// Per-call forward state: activations entering each layer plus the scores,
/// and the unrolled patch matrices of conv layers. Models are immutable
/// after construction; each thread owns its Workspace.
template <typename Scalar>
struct Workspace {
  std::vector<VecX<Scalar>> acts;
  std::vector<MatX<Scalar>> cols;
};

/// Parameter gradients aligned with the model's layer list.
template <typename Scalar>
struct Gradients {
  struct Entry {
    MatX<Scalar> weight;
    VecX<Scalar> bias;
  };
  std::vector<Entry> layers;

  void set_zero() {
    for (auto& e : layers) {
      e.weight.setZero();
      e.bias.setZero();
    }
  }
};

namespace detail {

template <typename Scalar>
void im2col(const VecX<Scalar>& input, const Conv2d<Scalar>& conv, MatX<Scalar>& col) {
  const int H = conv.in_shape.height, W = conv.in_shape.width, C = conv.in_channels;
  const int OH = conv.out_shape.height, OW = conv.out_shape.width, K = conv.kernel;
  col.resize(C * K * K, OH * OW);
  for (int oy = 0; oy < OH; ++oy) {
    for (int ox = 0; ox < OW; ++ox) {
      const int opix = oy * OW + ox;
      for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < K; ++ky) {
          const int y = oy * conv.stride - conv.pad + ky;
          for (int kx = 0; kx < K; ++kx) {
            const int x = ox * conv.stride - conv.pad + kx;
            const bool inside = y >= 0 && y < H && x >= 0 && x < W;
            col(c * K * K + ky * K + kx, opix) =
                inside ? input[c * H * W + y * W + x] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const MatX<Scalar>& col_grad, const Conv2d<Scalar>& conv,
                VecX<Scalar>& input_grad) {
  const int H = conv.in_shape.height, W = conv.in_shape.width, C = conv.in_channels;
  const int OH = conv.out_shape.height, OW = conv.out_shape.width, K = conv.kernel;
  for (int oy = 0; oy < OH; ++oy) {
    for (int ox = 0; ox < OW; ++ox) {
      const int opix = oy * OW + ox;
      for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < K; ++ky) {
          const int y = oy * conv.stride - conv.pad + ky;
          if (y < 0 || y >= H) continue;
          for (int kx = 0; kx < K; ++kx) {
            const int x = ox * conv.stride - conv.pad + kx;
            if (x < 0 || x >= W) continue;
            input_grad[c * H * W + y * W + x] += col_grad(c * K * K + ky * K + kx, opix);
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Differentiable score-based classifier: a stack of conv/dense/ReLU layers
/// ending in a linear head with one score per class. The predicted label is
/// the argmax of the scores, lowest index on ties.
template <typename Scalar>
class ScoreModel {
 public:
  ScoreModel() = default;

  ScoreModel(Shape input, int classes, const std::vector<LayerSpec>& specs, Rng& rng)
      : input_shape_(input), num_classes_(classes) {
    Shape cur = input;
    for (const auto& spec : specs) {
      if (const auto* cs = std::get_if<ConvSpec>(&spec)) {
        Conv2d<Scalar> conv;
        conv.in_channels = cur.channels;
        conv.out_channels = cs->out_channels;
        conv.kernel = cs->kernel;
        conv.stride = cs->stride;
        conv.pad = cs->pad;
        conv.in_shape = cur;
        const int oh = (cur.height + 2 * cs->pad - cs->kernel) / cs->stride + 1;
        const int ow = (cur.width + 2 * cs->pad - cs->kernel) / cs->stride + 1;
        if (oh <= 0 || ow <= 0)
          throw std::invalid_argument("ScoreModel: conv output collapses to zero");
        conv.out_shape = {oh, ow, cs->out_channels};
        const int fan_in = conv.in_channels * conv.kernel * conv.kernel;
        conv.weight.resize(conv.out_channels, fan_in);
        init_he(conv.weight, fan_in, rng);
        conv.bias = VecX<Scalar>::Zero(conv.out_channels);
        cur = conv.out_shape;
        layers_.emplace_back(std::move(conv));
      } else if (const auto* ds = std::get_if<DenseSpec>(&spec)) {
        Dense<Scalar> dense;
        dense.in_size = cur.size();
        dense.out_size = ds->units;
        dense.weight.resize(dense.out_size, dense.in_size);
        init_he(dense.weight, dense.in_size, rng);
        dense.bias = VecX<Scalar>::Zero(dense.out_size);
        cur = {1, 1, ds->units};
        layers_.emplace_back(std::move(dense));
      } else {
        layers_.emplace_back(Relu{});
      }
    }
    if (cur.size() != classes)
      throw std::invalid_argument("ScoreModel: final layer produces " +
                                  std::to_string(cur.size()) + " scores for " +
                                  std::to_string(classes) + " classes");
  }

  /// Assembles a model from pre-built layers (checkpoint loading).
  ScoreModel(Shape input, int classes, std::vector<Layer<Scalar>> layers)
      : input_shape_(input), num_classes_(classes), layers_(std::move(layers)) {}

  Shape input_shape() const { return input_shape_; }
  int num_classes() const { return num_classes_; }
  const std::vector<Layer<Scalar>>& layers() const { return layers_; }
  std::vector<Layer<Scalar>>& mutable_layers() { return layers_; }

  const VecX<Scalar>& forward(const ArrX<Scalar>& x, Workspace<Scalar>& ws) const {
    check_input(x);
    ws.acts.resize(layers_.size() + 1);
    ws.cols.resize(layers_.size());
    ws.acts[0] = x.matrix();
    for (size_t i = 0; i < layers_.size(); ++i) {
      const auto& in = ws.acts[i];
      auto& out = ws.acts[i + 1];
      std::visit(
          [&](const auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, Conv2d<Scalar>>) {
              detail::im2col(in, layer, ws.cols[i]);
              const int opix = layer.out_shape.pixels_per_channel();
              MatX<Scalar> out_mat = layer.weight * ws.cols[i];
              out_mat.colwise() += layer.bias;
              out.resize(layer.out_shape.size());
              for (int oc = 0; oc < layer.out_channels; ++oc)
                out.segment(oc * opix, opix) = out_mat.row(oc).transpose();
            } else if constexpr (std::is_same_v<T, Dense<Scalar>>) {
              out.noalias() = layer.weight * in;
              out += layer.bias;
            } else {
              out = in.cwiseMax(Scalar(0));
            }
          },
          layers_[i]);
    }
    return ws.acts.back();
  }

  VecX<Scalar> forward(const ArrX<Scalar>& x) const {
    Workspace<Scalar> ws;
    return forward(x, ws);
  }

  VecX<Scalar> forward(const Image<Scalar>& x) const { return forward(x.data); }

  int predict(const ArrX<Scalar>& x) const { return argmax(forward(x)); }

  /// Pulls a score-space gradient back to the input. Requires a workspace
  /// filled by forward() on the same x. ReLU subgradient at 0 is 0.
  ArrX<Scalar> backward_input(const Workspace<Scalar>& ws,
                              const VecX<Scalar>& score_grad) const {
    VecX<Scalar> grad = score_grad;
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i)
      grad = backward_layer(i, ws, grad, nullptr);
    return grad.array();
  }

  ArrX<Scalar> input_gradient(const ArrX<Scalar>& x, const VecX<Scalar>& score_grad) const {
    Workspace<Scalar> ws;
    forward(x, ws);
    return backward_input(ws, score_grad);
  }

  /// Accumulates (sums) parameter gradients for one example into `grads`.
  void accumulate_param_grads(const Workspace<Scalar>& ws, const VecX<Scalar>& score_grad,
                              Gradients<Scalar>& grads) const {
    VecX<Scalar> grad = score_grad;
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i)
      grad = backward_layer(i, ws, grad, &grads);
  }

  Gradients<Scalar> make_gradients() const {
    Gradients<Scalar> g;
    g.layers.resize(layers_.size());
    for (size_t i = 0; i < layers_.size(); ++i) {
      std::visit(
          [&](const auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (!std::is_same_v<T, Relu>) {
              g.layers[i].weight = MatX<Scalar>::Zero(layer.weight.rows(), layer.weight.cols());
              g.layers[i].bias = VecX<Scalar>::Zero(layer.bias.size());
            }
          },
          layers_[i]);
    }
    return g;
  }

  template <typename D>
  static int argmax(const Eigen::MatrixBase<D>& scores) {
    int best = 0;
    for (int i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[best]) best = i;
    return best;
  }

 private:
  void check_input(const ArrX<Scalar>& x) const {
    if (x.size() != input_shape_.size())
      throw std::invalid_argument("ScoreModel: input size " + std::to_string(x.size()) +
                                  " does not match " + input_shape_.str());
  }

  static void init_he(MatX<Scalar>& w, int fan_in, Rng& rng) {
    const double scale = std::sqrt(2.0 / fan_in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        w(i, j) = static_cast<Scalar>(rng.normal() * scale);
  }

  VecX<Scalar> backward_layer(int i, const Workspace<Scalar>& ws, const VecX<Scalar>& grad_out,
                              Gradients<Scalar>* grads) const {
    const VecX<Scalar>& in = ws.acts[i];
    return std::visit(
        [&](const auto& layer) -> VecX<Scalar> {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, Conv2d<Scalar>>) {
            const int opix = layer.out_shape.pixels_per_channel();
            MatX<Scalar> grad_mat(layer.out_channels, opix);
            for (int oc = 0; oc < layer.out_channels; ++oc)
              grad_mat.row(oc) = grad_out.segment(oc * opix, opix).transpose();
            if (grads) {
              auto& e = grads->layers[i];
              e.weight.noalias() += grad_mat * ws.cols[i].transpose();
              e.bias.noalias() += grad_mat.rowwise().sum();
            }
            MatX<Scalar> col_grad = layer.weight.transpose() * grad_mat;
            VecX<Scalar> grad_in = VecX<Scalar>::Zero(layer.in_shape.size());
            detail::col2im_add(col_grad, layer, grad_in);
            return grad_in;
          } else if constexpr (std::is_same_v<T, Dense<Scalar>>) {
            if (grads) {
              auto& e = grads->layers[i];
              e.weight.noalias() += grad_out * in.transpose();
              e.bias.noalias() += grad_out;
            }
            return layer.weight.transpose() * grad_out;
          } else {
            return (in.array() > Scalar(0)).select(grad_out.array(), Scalar(0)).matrix();
          }
        },
        layers_[i]);
  }

  Shape input_shape_{};
  int num_classes_ = 0;
  std::vector<Layer<Scalar>> layers_;
};

/// Input gradient of an arbitrary objective given its score-space gradient.
template <typename Scalar, typename ObjectiveGrad>
ArrX<Scalar> input_gradient(const ScoreModel<Scalar>& m, const ArrX<Scalar>& x,
                            ObjectiveGrad&& grad_of_scores) {
  Workspace<Scalar> ws;
  const VecX<Scalar>& scores = m.forward(x, ws);
  return m.backward_input(ws, grad_of_scores(scores));
}

/// Shift-invariant softmax cross-entropy of the true class.
template <typename Scalar>
Scalar cross_entropy(const VecX<Scalar>& scores, int label) {
  const Scalar m = scores.maxCoeff();
  const Scalar lse = m + std::log((scores.array() - m).exp().sum());
  return lse - scores[label];
}

template <typename Scalar>
VecX<Scalar> cross_entropy_score_grad(const VecX<Scalar>& scores, int label) {
  const Scalar m = scores.maxCoeff();
  VecX<Scalar> p = (scores.array() - m).exp().matrix();
  p /= p.sum();
  p[label] -= Scalar(1);
  return p;
}

}  // namespace ssimadv
