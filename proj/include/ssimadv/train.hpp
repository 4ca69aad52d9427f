#pragma once

#include <cstdio>
#include <vector>

#include "ssimadv/attacks.hpp"
#include "ssimadv/dataset.hpp"
#include "ssimadv/model.hpp"
#include "ssimadv/rng.hpp"

namespace ssimadv {

template <typename Scalar>
struct TrainConfig {
  int epochs = 6;
  int batch_size = 50;
  Scalar learning_rate = Scalar(0.01);
  Scalar momentum = Scalar(0.9);
  bool adversarial_mix = true;
  int pgd_steps = 10;
  Scalar pgd_epsilon = Scalar(0.3);
  Scalar pgd_step_size = Scalar(-1);  // nonpositive: epsilon / 4
  bool verbose = false;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0))
      throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (!(momentum >= 0 && momentum < 1))
      throw std::invalid_argument("TrainConfig: momentum must lie in [0,1)");
    if (!(pgd_epsilon >= 0 && pgd_epsilon <= 1))
      throw std::invalid_argument("TrainConfig: pgd_epsilon must lie in [0,1]");
    if (pgd_steps < 1) throw std::invalid_argument("TrainConfig: pgd_steps must be >= 1");
  }
};

template <typename Scalar>
struct TrainStats {
  std::vector<Scalar> epoch_loss;  // mean cross-entropy over the examples as trained
  Scalar train_accuracy = 0;       // clean accuracy on the training set afterwards
};

template <typename Scalar>
Scalar accuracy(const ScoreModel<Scalar>& m, const Dataset<Scalar>& data) {
  if (data.size() == 0) return Scalar(0);
  Workspace<Scalar> ws;
  int hits = 0;
  for (int i = 0; i < data.size(); ++i)
    if (ScoreModel<Scalar>::argmax(m.forward(data.images[i].data, ws)) == data.labels[i])
      ++hits;
  return Scalar(hits) / Scalar(data.size());
}

namespace detail {

template <typename Scalar>
void sgd_update(ScoreModel<Scalar>& model, const Gradients<Scalar>& grads,
                Gradients<Scalar>& velocity, Scalar lr, Scalar momentum, Scalar scale) {
  auto& layers = model.mutable_layers();
  for (size_t i = 0; i < layers.size(); ++i) {
    if (grads.layers[i].weight.size() == 0) continue;
    auto& v = velocity.layers[i];
    v.weight = momentum * v.weight - lr * scale * grads.layers[i].weight;
    v.bias = momentum * v.bias - lr * scale * grads.layers[i].bias;
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (!std::is_same_v<T, Relu>) {
            l.weight += v.weight;
            l.bias += v.bias;
          }
        },
        layers[i]);
  }
}

}  // namespace detail

/// Minibatch SGD with momentum on softmax cross-entropy. With the
/// adversarial mix on, every batch is doubled with PGD perturbations of its
/// images generated against the current parameters; the gradient averages
/// over all items actually trained on. Deterministic given the seed.
template <typename Scalar>
TrainStats<Scalar> train(ScoreModel<Scalar>& model, const Dataset<Scalar>& data,
                         const TrainConfig<Scalar>& cfg, uint64_t seed) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  data.validate(model.num_classes());

  Rng rng(derive_seed(seed, 1));
  Gradients<Scalar> grads = model.make_gradients();
  Gradients<Scalar> velocity = model.make_gradients();
  Workspace<Scalar> ws;

  PgdConfig<Scalar> pgd;
  pgd.epsilon = cfg.pgd_epsilon;
  pgd.steps = cfg.pgd_steps;
  pgd.step_size = cfg.pgd_step_size;
  pgd.loss = LossKind::xent;

  std::vector<int> order(data.size());
  for (int i = 0; i < data.size(); ++i) order[i] = i;

  TrainStats<Scalar> stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0;
    int epoch_items = 0;
    for (int start = 0; start < data.size(); start += cfg.batch_size) {
      const int end = std::min<int>(start + cfg.batch_size, data.size());
      std::vector<std::pair<const ArrX<Scalar>*, int>> items;
      std::vector<ArrX<Scalar>> adv;
      items.reserve(2 * (end - start));
      for (int b = start; b < end; ++b)
        items.emplace_back(&data.images[order[b]].data, data.labels[order[b]]);
      if (cfg.adversarial_mix) {
        adv.reserve(end - start);
        for (int b = start; b < end; ++b) {
          const int i = order[b];
          adv.push_back(
              pgd_attack(model, data.images[i], data.labels[i], pgd, false).image.data);
        }
        for (int b = start; b < end; ++b)
          items.emplace_back(&adv[b - start], data.labels[order[b]]);
      }

      grads.set_zero();
      for (const auto& [x, label] : items) {
        const VecX<Scalar>& scores = model.forward(*x, ws);
        epoch_loss += static_cast<double>(cross_entropy(scores, label));
        model.accumulate_param_grads(ws, cross_entropy_score_grad(scores, label), grads);
      }
      epoch_items += static_cast<int>(items.size());
      detail::sgd_update(model, grads, velocity, cfg.learning_rate, cfg.momentum,
                         Scalar(1) / Scalar(items.size()));
    }
    stats.epoch_loss.push_back(static_cast<Scalar>(epoch_loss / epoch_items));
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %d/%d: mean loss %.4f\n", epoch + 1, cfg.epochs,
                   epoch_loss / epoch_items);
  }
  stats.train_accuracy = accuracy(model, data);
  return stats;
}

}  // namespace ssimadv
