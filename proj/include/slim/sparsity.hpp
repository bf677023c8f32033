#pragma once

// Desk-scale sparsity training: a small conv/batch-norm stack trained with a
// sum-of-squares regression head plus an L1 penalty on the batch-norm scale
// factors, optimized by SGD with momentum via the subgradient of |gamma|.
// All training math runs in 64-bit; checkpoints export to the 32-bit file
// format through the regular weight codec.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slim/cfg.hpp"
#include "slim/tensor.hpp"
#include "slim/weights.hpp"

namespace slim {

struct SparsityConfig {
    double alpha = 0.0;         // L1 penalty factor
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005; // applied to conv kernels only
    int steps = 100;
    std::uint64_t seed = 0;
    double task_weight = 1.0;   // 0 isolates the penalty term
};

enum class ToyActivation { Linear, Leaky };

struct ToyConvLayer {
    int in_c = 1;
    int out_c = 1;
    int size = 1;
    int stride = 1;
    int pad = 0;
    bool batch_norm = false;
    ToyActivation activation = ToyActivation::Linear;

    std::vector<double> kernel; // out_c * in_c * size * size
    std::vector<double> bias;   // out_c, only without batch norm
    std::vector<double> gamma;  // out_c, batch norm
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
};

struct ToyNet {
    int in_c = 1;
    int in_h = 1;
    int in_w = 1;
    double bn_eps = 1e-6;
    std::vector<ToyConvLayer> layers;

    void add_conv(int out_c, int size, bool batch_norm, ToyActivation activation);
    // He-style kernel init, gamma in [0.25, 1.0], beta = 0.
    void randomize(std::uint64_t seed);
    std::vector<double*> parameters(); // fixed enumeration order
    std::span<const double> gammas_of(int layer) const { return layers[layer].gamma; }
};

struct BnTrainCache {
    std::vector<double> mean;
    std::vector<double> var; // biased (divided by m)
    std::vector<Tensor64> xhat;
};

// Per-channel statistics over batch x spatial, y = gamma * xhat + beta.
std::vector<Tensor64> bn_forward_train(const std::vector<Tensor64>& batch,
                                       std::span<const double> gamma,
                                       std::span<const double> beta, double eps,
                                       BnTrainCache* cache);

// Returns alpha * sum |gamma|; writes alpha * sign(gamma) into subgrad
// (sign(0) = 0, so exactly-zero factors stay put).
double sparsity_penalty(std::span<const double> gammas, double alpha,
                        std::span<double> subgrad);

struct ToyGradients {
    std::vector<std::vector<double>> kernel, bias, gamma, beta;
};

struct ForwardCache; // internal

std::vector<Tensor64> toy_forward(const ToyNet& net, const std::vector<Tensor64>& batch);
// Task loss only (no penalty); fills grads from backpropagation.
double toy_backward(const ToyNet& net, const std::vector<Tensor64>& inputs,
                    const std::vector<Tensor64>& targets, double task_weight,
                    ToyGradients& grads);

struct LossBreakdown {
    double task = 0;
    double penalty = 0;
    double total = 0;
};

struct SgdState {
    ToyGradients velocity;
};

LossBreakdown train_step(ToyNet& net, const std::vector<Tensor64>& inputs,
                         const std::vector<Tensor64>& targets, const SparsityConfig& cfg,
                         SgdState& state);

// Max over all parameters of |analytic - central difference| / max(1, |numeric|),
// evaluated on the full objective (task + penalty) in 64-bit.
double gradient_check(const ToyNet& net, const std::vector<Tensor64>& inputs,
                      const std::vector<Tensor64>& targets, double alpha,
                      double task_weight = 1.0);

struct GammaHistogram {
    std::vector<double> edges;       // bins + 1 ascending edges over |gamma|
    std::vector<std::int64_t> counts;
    std::int64_t total = 0;
    double probe = 0;
    double fraction_below_probe = 0;
};

// upper_edge of 0 spans [0, max(|gamma|)].
GammaHistogram gamma_histogram(const WeightStore& store, const NetworkDef& def, int bins,
                               double probe, double upper_edge = 0.0);
std::string render_histogram_csv(const GammaHistogram& h);

// The toy net expressed through the regular definition and weight formats.
std::pair<NetworkDef, WeightStore> export_toy(const ToyNet& net);

// Canned teacher/student regression task for the trainer CLI and tests:
// the student carries more channels than the targets require.
struct ToyScenario {
    ToyNet net;
    std::vector<Tensor64> inputs;
    std::vector<Tensor64> targets;
};
ToyScenario make_toy_scenario(std::uint64_t seed);

} // namespace slim
