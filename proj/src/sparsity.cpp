#include "slim/sparsity.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "slim/errors.hpp"

namespace slim {

namespace {

int out_dim(int in, int size, int stride, int pad) { return (in + 2 * pad - size) / stride + 1; }

Tensor64 conv2d(const Tensor64& in, const ToyConvLayer& l) {
    const int oh = out_dim(in.h, l.size, l.stride, l.pad);
    const int ow = out_dim(in.w, l.size, l.stride, l.pad);
    if (oh < 1 || ow < 1) throw ValidationError("toy conv output collapsed to zero size");
    Tensor64 out(l.out_c, oh, ow);
    for (int oc = 0; oc < l.out_c; ++oc) {
        const double* kbase = l.kernel.data() + static_cast<size_t>(oc) * l.in_c * l.size * l.size;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double sum = 0;
                for (int ic = 0; ic < l.in_c; ++ic) {
                    const double* kk = kbase + static_cast<size_t>(ic) * l.size * l.size;
                    for (int ky = 0; ky < l.size; ++ky) {
                        int y = oy * l.stride - l.pad + ky;
                        if (y < 0 || y >= in.h) continue;
                        for (int kx = 0; kx < l.size; ++kx) {
                            int x = ox * l.stride - l.pad + kx;
                            if (x < 0 || x >= in.w) continue;
                            sum += kk[ky * l.size + kx] * in.at(ic, y, x);
                        }
                    }
                }
                out.at(oc, oy, ox) = sum;
            }
        }
    }
    return out;
}

double activate(ToyActivation a, double x) {
    return a == ToyActivation::Leaky && x < 0 ? 0.1 * x : x;
}

double activate_grad(ToyActivation a, double x) {
    return a == ToyActivation::Leaky && x < 0 ? 0.1 : 1.0;
}

void resize_like(ToyGradients& g, const ToyNet& net) {
    g.kernel.resize(net.layers.size());
    g.bias.resize(net.layers.size());
    g.gamma.resize(net.layers.size());
    g.beta.resize(net.layers.size());
    for (size_t i = 0; i < net.layers.size(); ++i) {
        g.kernel[i].assign(net.layers[i].kernel.size(), 0.0);
        g.bias[i].assign(net.layers[i].bias.size(), 0.0);
        g.gamma[i].assign(net.layers[i].gamma.size(), 0.0);
        g.beta[i].assign(net.layers[i].beta.size(), 0.0);
    }
}

} // namespace

struct ForwardCache {
    // act[0] is the input batch; act[i+1] the output of layer i.
    std::vector<std::vector<Tensor64>> act;
    std::vector<std::vector<Tensor64>> conv_out; // pre-normalization
    std::vector<std::vector<Tensor64>> preact;   // post-norm / post-bias
    std::vector<BnTrainCache> bn;
};

void ToyNet::add_conv(int out_c, int size, bool batch_norm, ToyActivation activation) {
    ToyConvLayer l;
    l.in_c = layers.empty() ? in_c : layers.back().out_c;
    l.out_c = out_c;
    l.size = size;
    l.stride = 1;
    l.pad = size / 2;
    l.batch_norm = batch_norm;
    l.activation = activation;
    l.kernel.assign(static_cast<size_t>(out_c) * l.in_c * size * size, 0.0);
    if (batch_norm) {
        l.gamma.assign(out_c, 1.0);
        l.beta.assign(out_c, 0.0);
        l.running_mean.assign(out_c, 0.0);
        l.running_var.assign(out_c, 1.0);
    } else {
        l.bias.assign(out_c, 0.0);
    }
    layers.push_back(std::move(l));
}

void ToyNet::randomize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (ToyConvLayer& l : layers) {
        double scale = std::sqrt(2.0 / (l.in_c * l.size * l.size));
        std::normal_distribution<double> kd(0.0, scale);
        for (double& k : l.kernel) k = kd(rng);
        std::uniform_real_distribution<double> gd(0.25, 1.0);
        for (double& g : l.gamma) g = gd(rng);
        std::uniform_real_distribution<double> bd(-0.1, 0.1);
        for (double& b : l.bias) b = bd(rng);
    }
}

std::vector<double*> ToyNet::parameters() {
    std::vector<double*> out;
    for (ToyConvLayer& l : layers) {
        for (double& v : l.kernel) out.push_back(&v);
        for (double& v : l.bias) out.push_back(&v);
        for (double& v : l.gamma) out.push_back(&v);
        for (double& v : l.beta) out.push_back(&v);
    }
    return out;
}

std::vector<Tensor64> bn_forward_train(const std::vector<Tensor64>& batch,
                                       std::span<const double> gamma,
                                       std::span<const double> beta, double eps,
                                       BnTrainCache* cache) {
    if (batch.empty()) throw ArgumentError("batch normalization needs a non-empty batch");
    const int c = batch.front().c, h = batch.front().h, w = batch.front().w;
    const double m = static_cast<double>(batch.size()) * h * w;

    std::vector<double> mean(c, 0.0), var(c, 0.0);
    for (const Tensor64& t : batch)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) mean[ci] += t.at(ci, y, x);
    for (int ci = 0; ci < c; ++ci) mean[ci] /= m;
    for (const Tensor64& t : batch)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double d = t.at(ci, y, x) - mean[ci];
                    var[ci] += d * d;
                }
    for (int ci = 0; ci < c; ++ci) var[ci] /= m;

    std::vector<Tensor64> out(batch.size(), Tensor64(c, h, w));
    std::vector<Tensor64> xhat(batch.size(), Tensor64(c, h, w));
    for (size_t b = 0; b < batch.size(); ++b)
        for (int ci = 0; ci < c; ++ci) {
            double istd = 1.0 / std::sqrt(var[ci] + eps);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double xh = (batch[b].at(ci, y, x) - mean[ci]) * istd;
                    xhat[b].at(ci, y, x) = xh;
                    out[b].at(ci, y, x) = gamma[ci] * xh + beta[ci];
                }
        }
    if (cache) {
        cache->mean = std::move(mean);
        cache->var = std::move(var);
        cache->xhat = std::move(xhat);
    }
    return out;
}

double sparsity_penalty(std::span<const double> gammas, double alpha,
                        std::span<double> subgrad) {
    if (alpha < 0) throw ArgumentError("penalty factor must be >= 0");
    double penalty = 0;
    for (size_t i = 0; i < gammas.size(); ++i) {
        penalty += alpha * std::fabs(gammas[i]);
        if (!subgrad.empty())
            subgrad[i] = gammas[i] > 0 ? alpha : (gammas[i] < 0 ? -alpha : 0.0);
    }
    return penalty;
}

namespace {

std::vector<Tensor64> forward_impl(const ToyNet& net, const std::vector<Tensor64>& batch,
                                   ForwardCache* cache, ToyNet* update_running) {
    std::vector<Tensor64> act = batch;
    if (cache) cache->act.push_back(act);
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const ToyConvLayer& l = net.layers[li];
        std::vector<Tensor64> z;
        z.reserve(act.size());
        for (const Tensor64& t : act) z.push_back(conv2d(t, l));

        std::vector<Tensor64> y;
        BnTrainCache bn;
        if (l.batch_norm) {
            y = bn_forward_train(z, l.gamma, l.beta, net.bn_eps, &bn);
            if (update_running) {
                ToyConvLayer& ml = update_running->layers[li];
                for (int ci = 0; ci < l.out_c; ++ci) {
                    ml.running_mean[ci] = 0.99 * ml.running_mean[ci] + 0.01 * bn.mean[ci];
                    ml.running_var[ci] = 0.99 * ml.running_var[ci] + 0.01 * bn.var[ci];
                }
            }
        } else {
            y = z;
            for (Tensor64& t : y)
                for (int ci = 0; ci < l.out_c; ++ci)
                    for (int yy = 0; yy < t.h; ++yy)
                        for (int xx = 0; xx < t.w; ++xx) t.at(ci, yy, xx) += l.bias[ci];
        }

        std::vector<Tensor64> a = y;
        for (Tensor64& t : a)
            for (double& v : t.data) v = activate(l.activation, v);

        if (cache) {
            cache->conv_out.push_back(std::move(z));
            cache->preact.push_back(std::move(y));
            cache->bn.push_back(std::move(bn));
            cache->act.push_back(a);
        }
        act = std::move(a);
    }
    return act;
}

} // namespace

std::vector<Tensor64> toy_forward(const ToyNet& net, const std::vector<Tensor64>& batch) {
    return forward_impl(net, batch, nullptr, nullptr);
}

namespace {

double backward_impl(const ToyNet& net, const std::vector<Tensor64>& inputs,
                     const std::vector<Tensor64>& targets, double task_weight,
                     ToyGradients& grads, ToyNet* update_running) {
    if (inputs.size() != targets.size())
        throw ArgumentError("inputs and targets must pair up");
    ForwardCache cache;
    std::vector<Tensor64> out = forward_impl(net, inputs, &cache, update_running);

    double task = 0;
    std::vector<Tensor64> grad(out.size());
    for (size_t b = 0; b < out.size(); ++b) {
        grad[b] = Tensor64(out[b].c, out[b].h, out[b].w);
        if (out[b].size() != targets[b].size())
            throw ArgumentError("target shape does not match network output");
        for (size_t i = 0; i < out[b].data.size(); ++i) {
            double d = out[b].data[i] - targets[b].data[i];
            task += 0.5 * d * d;
            grad[b].data[i] = task_weight * d;
        }
    }
    task *= task_weight;

    resize_like(grads, net);
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const ToyConvLayer& l = net.layers[li];
        const std::vector<Tensor64>& a_in = cache.act[li];
        const std::vector<Tensor64>& preact = cache.preact[li];

        // activation
        for (size_t b = 0; b < grad.size(); ++b)
            for (size_t i = 0; i < grad[b].data.size(); ++i)
                grad[b].data[i] *= activate_grad(l.activation, preact[b].data[i]);

        // normalization / bias
        if (l.batch_norm) {
            const BnTrainCache& bn = cache.bn[li];
            const int c = l.out_c, h = grad.front().h, w = grad.front().w;
            const double m = static_cast<double>(grad.size()) * h * w;
            for (int ci = 0; ci < c; ++ci) {
                const double istd = 1.0 / std::sqrt(bn.var[ci] + net.bn_eps);
                double dgamma = 0, dbeta = 0, dxhat_sum = 0, dxhat_xhat_sum = 0, xhat_sum = 0;
                for (size_t b = 0; b < grad.size(); ++b)
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x) {
                            double dy = grad[b].at(ci, y, x);
                            double xh = bn.xhat[b].at(ci, y, x);
                            dgamma += dy * xh;
                            dbeta += dy;
                            dxhat_sum += dy * l.gamma[ci];
                            dxhat_xhat_sum += dy * l.gamma[ci] * xh;
                            xhat_sum += xh;
                        }
                grads.gamma[li][ci] += dgamma;
                grads.beta[li][ci] += dbeta;

                const double dvar = -0.5 * dxhat_xhat_sum * istd * istd;
                const double dmean = -istd * dxhat_sum - dvar * 2.0 / m * xhat_sum / istd;
                for (size_t b = 0; b < grad.size(); ++b)
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x) {
                            double dy = grad[b].at(ci, y, x);
                            double xh = bn.xhat[b].at(ci, y, x);
                            grad[b].at(ci, y, x) = dy * l.gamma[ci] * istd +
                                                   dvar * 2.0 * xh / (istd * m) + dmean / m;
                        }
            }
        } else {
            for (size_t b = 0; b < grad.size(); ++b)
                for (int ci = 0; ci < l.out_c; ++ci)
                    for (int y = 0; y < grad[b].h; ++y)
                        for (int x = 0; x < grad[b].w; ++x)
                            grads.bias[li][ci] += grad[b].at(ci, y, x);
        }

        // convolution: kernel gradient plus gradient for the layer below
        std::vector<Tensor64> dprev(grad.size());
        for (size_t b = 0; b < grad.size(); ++b) {
            const Tensor64& in = a_in[b];
            const Tensor64& dz = grad[b];
            dprev[b] = Tensor64(in.c, in.h, in.w);
            for (int oc = 0; oc < l.out_c; ++oc) {
                double* kgrad =
                    grads.kernel[li].data() + static_cast<size_t>(oc) * l.in_c * l.size * l.size;
                const double* kval =
                    l.kernel.data() + static_cast<size_t>(oc) * l.in_c * l.size * l.size;
                for (int oy = 0; oy < dz.h; ++oy)
                    for (int ox = 0; ox < dz.w; ++ox) {
                        const double g = dz.at(oc, oy, ox);
                        if (g == 0.0) continue;
                        for (int ic = 0; ic < l.in_c; ++ic)
                            for (int ky = 0; ky < l.size; ++ky) {
                                int y = oy * l.stride - l.pad + ky;
                                if (y < 0 || y >= in.h) continue;
                                for (int kx = 0; kx < l.size; ++kx) {
                                    int x = ox * l.stride - l.pad + kx;
                                    if (x < 0 || x >= in.w) continue;
                                    size_t kidx = (static_cast<size_t>(ic) * l.size + ky) * l.size + kx;
                                    kgrad[kidx] += g * in.at(ic, y, x);
                                    dprev[b].at(ic, y, x) += g * kval[kidx];
                                }
                            }
                    }
            }
        }
        grad = std::move(dprev);
    }
    return task;
}

} // namespace

double toy_backward(const ToyNet& net, const std::vector<Tensor64>& inputs,
                    const std::vector<Tensor64>& targets, double task_weight,
                    ToyGradients& grads) {
    return backward_impl(net, inputs, targets, task_weight, grads, nullptr);
}

LossBreakdown train_step(ToyNet& net, const std::vector<Tensor64>& inputs,
                         const std::vector<Tensor64>& targets, const SparsityConfig& cfg,
                         SgdState& state) {
    ToyGradients grads;
    LossBreakdown loss;
    // running statistics refresh alongside the gradient pass, for later
    // inference-mode export
    loss.task = backward_impl(net, inputs, targets, cfg.task_weight, grads, &net);

    for (size_t li = 0; li < net.layers.size(); ++li) {
        ToyConvLayer& l = net.layers[li];
        if (!l.batch_norm) continue;
        std::vector<double> sub(l.gamma.size(), 0.0);
        loss.penalty += sparsity_penalty(l.gamma, cfg.alpha, sub);
        for (size_t ci = 0; ci < sub.size(); ++ci) grads.gamma[li][ci] += sub[ci];
    }
    loss.total = loss.task + loss.penalty;
    if (!std::isfinite(loss.total))
        throw DivergenceError("training loss is not finite");

    // decay applies to kernels only so it cannot mask the L1 effect on gamma
    for (size_t li = 0; li < net.layers.size(); ++li)
        for (size_t i = 0; i < grads.kernel[li].size(); ++i)
            grads.kernel[li][i] += cfg.weight_decay * net.layers[li].kernel[i];

    if (state.velocity.kernel.empty()) resize_like(state.velocity, net);
    auto update = [&](std::vector<double>& p, std::vector<double>& g, std::vector<double>& v) {
        for (size_t i = 0; i < p.size(); ++i) {
            v[i] = cfg.momentum * v[i] - cfg.learning_rate * g[i];
            p[i] += v[i];
        }
    };
    for (size_t li = 0; li < net.layers.size(); ++li) {
        update(net.layers[li].kernel, grads.kernel[li], state.velocity.kernel[li]);
        update(net.layers[li].bias, grads.bias[li], state.velocity.bias[li]);
        update(net.layers[li].gamma, grads.gamma[li], state.velocity.gamma[li]);
        update(net.layers[li].beta, grads.beta[li], state.velocity.beta[li]);
    }
    return loss;
}

namespace {

double total_loss(const ToyNet& net, const std::vector<Tensor64>& inputs,
                  const std::vector<Tensor64>& targets, double alpha, double task_weight) {
    std::vector<Tensor64> out = toy_forward(net, inputs);
    double task = 0;
    for (size_t b = 0; b < out.size(); ++b)
        for (size_t i = 0; i < out[b].data.size(); ++i) {
            double d = out[b].data[i] - targets[b].data[i];
            task += 0.5 * d * d;
        }
    task *= task_weight;
    double penalty = 0;
    for (const ToyConvLayer& l : net.layers)
        penalty += sparsity_penalty(l.gamma, alpha, {});
    return task + penalty;
}

} // namespace

double gradient_check(const ToyNet& net, const std::vector<Tensor64>& inputs,
                      const std::vector<Tensor64>& targets, double alpha, double task_weight) {
    ToyGradients grads;
    toy_backward(net, inputs, targets, task_weight, grads);
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const ToyConvLayer& l = net.layers[li];
        if (!l.batch_norm) continue;
        std::vector<double> sub(l.gamma.size(), 0.0);
        sparsity_penalty(l.gamma, alpha, sub);
        for (size_t ci = 0; ci < sub.size(); ++ci) grads.gamma[li][ci] += sub[ci];
    }

    std::vector<double> analytic;
    for (size_t li = 0; li < net.layers.size(); ++li) {
        for (double g : grads.kernel[li]) analytic.push_back(g);
        for (double g : grads.bias[li]) analytic.push_back(g);
        for (double g : grads.gamma[li]) analytic.push_back(g);
        for (double g : grads.beta[li]) analytic.push_back(g);
    }

    ToyNet probe = net;
    std::vector<double*> params = probe.parameters();
    if (params.size() != analytic.size())
        throw InternalError("parameter enumeration does not match gradient layout");

    double worst = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        const double p0 = *params[i];
        const double h = 1e-5 * std::max(1.0, std::fabs(p0));
        *params[i] = p0 + h;
        double up = total_loss(probe, inputs, targets, alpha, task_weight);
        *params[i] = p0 - h;
        double down = total_loss(probe, inputs, targets, alpha, task_weight);
        *params[i] = p0;
        double numeric = (up - down) / (2 * h);
        double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

GammaHistogram gamma_histogram(const WeightStore& store, const NetworkDef& def, int bins,
                               double probe, double upper_edge) {
    if (bins < 1) throw ArgumentError("histogram needs at least one bin");
    std::vector<double> values;
    for (size_t i = 0; i < def.layers.size(); ++i) {
        if (def.layers[i].kind != LayerKind::Convolutional ||
            !def.layers[i].conv.batch_normalize)
            continue;
        for (float g : store.layers[i].scales) values.push_back(std::fabs(g));
    }
    if (values.empty()) throw ArgumentError("network has no batch-normalized layers");

    double hi = upper_edge;
    if (hi <= 0)
        for (double v : values) hi = std::max(hi, v);
    if (hi <= 0) hi = 1.0;

    GammaHistogram h;
    h.probe = probe;
    h.total = static_cast<std::int64_t>(values.size());
    h.counts.assign(bins, 0);
    h.edges.resize(bins + 1);
    for (int i = 0; i <= bins; ++i) h.edges[i] = hi * i / bins;

    std::int64_t below = 0;
    for (double v : values) {
        int bin = static_cast<int>(v / hi * bins);
        if (bin >= bins) bin = bins - 1;
        if (bin < 0) bin = 0;
        ++h.counts[bin];
        if (v < probe) ++below;
    }
    h.fraction_below_probe = static_cast<double>(below) / static_cast<double>(h.total);
    return h;
}

std::string render_histogram_csv(const GammaHistogram& h) {
    std::ostringstream out;
    out << "bin_low,bin_high,count\n";
    for (size_t i = 0; i < h.counts.size(); ++i)
        out << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << "\n";
    return out.str();
}

std::pair<NetworkDef, WeightStore> export_toy(const ToyNet& net) {
    NetworkDef def;
    def.width = net.in_w;
    def.height = net.in_h;
    def.channels = net.in_c;

    WeightStore store;
    for (const ToyConvLayer& l : net.layers) {
        const char* act = l.activation == ToyActivation::Leaky ? "leaky" : "linear";
        def.layers.push_back(make_conv(l.out_c, l.size, l.stride, l.batch_norm, act));
        def.layers.back().conv.pad = l.pad > 0;

        ConvWeights w;
        w.kernel.assign(l.kernel.begin(), l.kernel.end());
        if (l.batch_norm) {
            w.biases.assign(l.beta.begin(), l.beta.end());
            w.scales.assign(l.gamma.begin(), l.gamma.end());
            w.rolling_mean.assign(l.running_mean.begin(), l.running_mean.end());
            w.rolling_variance.assign(l.running_var.begin(), l.running_var.end());
        } else {
            w.biases.assign(l.bias.begin(), l.bias.end());
        }
        store.layers.push_back(std::move(w));
    }
    return {std::move(def), std::move(store)};
}

ToyScenario make_toy_scenario(std::uint64_t seed) {
    ToyScenario s;
    s.net.in_c = 3;
    s.net.in_h = 8;
    s.net.in_w = 8;
    s.net.add_conv(8, 3, true, ToyActivation::Leaky);
    s.net.add_conv(6, 3, true, ToyActivation::Leaky);
    s.net.add_conv(1, 1, false, ToyActivation::Linear);
    s.net.randomize(seed);

    // Teacher intentionally narrower than the student, so several student
    // channels are redundant for the task.
    ToyNet teacher;
    teacher.in_c = 3;
    teacher.in_h = 8;
    teacher.in_w = 8;
    teacher.add_conv(2, 3, false, ToyActivation::Leaky);
    teacher.add_conv(1, 1, false, ToyActivation::Linear);
    teacher.randomize(seed + 1);

    std::mt19937_64 rng(seed + 2);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int b = 0; b < 6; ++b) {
        Tensor64 t(3, 8, 8);
        for (double& v : t.data) v = dist(rng);
        s.inputs.push_back(std::move(t));
    }
    s.targets = toy_forward(teacher, s.inputs);
    return s;
}

} // namespace slim
