#include "slim/forward.hpp"

#include <cmath>
#include <limits>

#include "slim/errors.hpp"

namespace slim {

namespace {

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

} // namespace

float apply_activation(const std::string& name, float x) {
    if (name == "linear") return x;
    if (name == "leaky") return x > 0.0f ? x : kLeakySlope * x;
    throw ArgumentError("unsupported activation: " + name);
}

Tensor conv_forward(const Tensor& input, const ConvolutionalSpec& spec, const ConvWeights& w) {
    const int k = spec.size;
    if (w.kernel.size() != static_cast<size_t>(spec.filters) * input.c * k * k)
        throw ValidationError("conv kernel does not match input channel count");

    const int pad = spec.padding();
    const int out_h = (input.h + 2 * pad - k) / spec.stride + 1;
    const int out_w = (input.w + 2 * pad - k) / spec.stride + 1;
    if (out_h < 1 || out_w < 1) throw ValidationError("conv output collapsed to zero size");

    Tensor out(spec.filters, out_h, out_w);
    for (int oc = 0; oc < spec.filters; ++oc) {
        const float* kbase = w.kernel.data() + static_cast<size_t>(oc) * input.c * k * k;
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                float sum = 0.0f;
                const int y0 = oy * spec.stride - pad;
                const int x0 = ox * spec.stride - pad;
                for (int ic = 0; ic < input.c; ++ic) {
                    const float* kk = kbase + static_cast<size_t>(ic) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const int y = y0 + ky;
                        if (y < 0 || y >= input.h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int x = x0 + kx;
                            if (x < 0 || x >= input.w) continue;
                            sum += kk[ky * k + kx] * input.at(ic, y, x);
                        }
                    }
                }
                out.at(oc, oy, ox) = sum;
            }
        }
    }

    for (int oc = 0; oc < spec.filters; ++oc) {
        float scale = 1.0f, shift = 0.0f;
        if (spec.batch_normalize) {
            scale = w.scales[oc] / std::sqrt(w.rolling_variance[oc] + kBnEpsilon);
            shift = w.biases[oc] - scale * w.rolling_mean[oc];
        } else {
            shift = w.biases[oc];
        }
        float* plane = out.data.data() + static_cast<size_t>(oc) * out_h * out_w;
        for (int i = 0; i < out_h * out_w; ++i)
            plane[i] = apply_activation(spec.activation, plane[i] * scale + shift);
    }
    return out;
}

Tensor maxpool_forward(const Tensor& input, const MaxPoolSpec& spec) {
    const int pad = spec.total_padding();
    const int out_h = (input.h + pad - spec.size) / spec.stride + 1;
    const int out_w = (input.w + pad - spec.size) / spec.stride + 1;
    if (out_h < 1 || out_w < 1) throw ValidationError("maxpool output collapsed to zero size");

    // Padded cells never win: the window starts at -pad/2 and out-of-range
    // positions are skipped, falling back to -inf.
    const int offset = -pad / 2;
    Tensor out(input.c, out_h, out_w);
    for (int ci = 0; ci < input.c; ++ci) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                for (int ky = 0; ky < spec.size; ++ky) {
                    const int y = oy * spec.stride + offset + ky;
                    if (y < 0 || y >= input.h) continue;
                    for (int kx = 0; kx < spec.size; ++kx) {
                        const int x = ox * spec.stride + offset + kx;
                        if (x < 0 || x >= input.w) continue;
                        best = std::max(best, input.at(ci, y, x));
                    }
                }
                out.at(ci, oy, ox) = best;
            }
        }
    }
    return out;
}

Tensor upsample_forward(const Tensor& input, int stride) {
    Tensor out(input.c, input.h * stride, input.w * stride);
    for (int ci = 0; ci < input.c; ++ci)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                out.at(ci, y, x) = input.at(ci, y / stride, x / stride);
    return out;
}

Tensor route_concat(const std::vector<const Tensor*>& sources) {
    if (sources.empty()) throw ArgumentError("route needs at least one source");
    int c = 0;
    for (const Tensor* t : sources) {
        if (t->h != sources.front()->h || t->w != sources.front()->w)
            throw ValidationError("route sources disagree on spatial size");
        c += t->c;
    }
    Tensor out(c, sources.front()->h, sources.front()->w);
    size_t at = 0;
    for (const Tensor* t : sources) {
        std::copy(t->data.begin(), t->data.end(), out.data.begin() + at);
        at += t->size();
    }
    return out;
}

Tensor shortcut_add(const Tensor& a, const Tensor& b, const std::string& activation) {
    if (a.c != b.c || a.h != b.h || a.w != b.w)
        throw ValidationError("shortcut operands have different shapes");
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = apply_activation(activation, out.data[i] + b.data[i]);
    return out;
}

std::vector<Detection> yolo_decode(const Tensor& feature, const YoloSpec& spec, int net_w,
                                   int net_h, float objectness_threshold) {
    const int classes = spec.classes;
    const int per_anchor = 5 + classes;
    const int anchors = static_cast<int>(spec.anchor_mask.size());
    if (feature.c != anchors * per_anchor)
        throw ValidationError("yolo feature has " + std::to_string(feature.c) +
                              " channels, expected " + std::to_string(anchors * per_anchor));

    std::vector<Detection> out;
    for (int a = 0; a < anchors; ++a) {
        const auto [anchor_w, anchor_h] = spec.anchors.at(spec.anchor_mask[a]);
        const int base = a * per_anchor;
        for (int gy = 0; gy < feature.h; ++gy) {
            for (int gx = 0; gx < feature.w; ++gx) {
                float objectness = sigmoid(feature.at(base + 4, gy, gx));
                if (objectness < objectness_threshold) continue;
                Detection d;
                d.objectness = objectness;
                d.x = (sigmoid(feature.at(base + 0, gy, gx)) + gx) / feature.w * net_w;
                d.y = (sigmoid(feature.at(base + 1, gy, gx)) + gy) / feature.h * net_h;
                d.w = anchor_w * std::exp(feature.at(base + 2, gy, gx));
                d.h = anchor_h * std::exp(feature.at(base + 3, gy, gx));
                d.class_scores.resize(classes);
                for (int ci = 0; ci < classes; ++ci)
                    d.class_scores[ci] = sigmoid(feature.at(base + 5 + ci, gy, gx));
                d.class_id = 0;
                for (int ci = 1; ci < classes; ++ci)
                    if (d.class_scores[ci] > d.class_scores[d.class_id]) d.class_id = ci;
                d.score = d.objectness * d.class_scores[d.class_id];
                out.push_back(std::move(d));
            }
        }
    }
    return out;
}

ForwardResult run_network(const NetworkDef& def, const WeightStore& store, const Tensor& input,
                          float objectness_threshold) {
    if (store.layers.size() != def.layers.size())
        throw ValidationError("weight store does not align with the definition");
    if (input.c != def.channels)
        throw ValidationError("input has " + std::to_string(input.c) + " channels, net expects " +
                              std::to_string(def.channels));

    ForwardResult result;
    result.layer_out.reserve(def.layers.size());
    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        const Tensor& prev = i == 0 ? input : result.layer_out[i - 1];
        switch (layer.kind) {
        case LayerKind::Convolutional:
            result.layer_out.push_back(conv_forward(prev, layer.conv, store.layers[i]));
            break;
        case LayerKind::MaxPool:
            result.layer_out.push_back(maxpool_forward(prev, layer.maxpool));
            break;
        case LayerKind::Upsample:
            result.layer_out.push_back(upsample_forward(prev, layer.upsample.stride));
            break;
        case LayerKind::Route: {
            std::vector<const Tensor*> sources;
            for (int src : def.route_sources(static_cast<int>(i)))
                sources.push_back(&result.layer_out[src]);
            result.layer_out.push_back(route_concat(sources));
            break;
        }
        case LayerKind::Shortcut: {
            int from = def.shortcut_source(static_cast<int>(i));
            result.layer_out.push_back(
                shortcut_add(prev, result.layer_out[from], layer.shortcut.activation));
            break;
        }
        case LayerKind::Yolo: {
            result.layer_out.push_back(prev);
            result.head_layers.push_back(static_cast<int>(i) - 1);
            auto dets = yolo_decode(prev, layer.yolo, input.w, input.h, objectness_threshold);
            result.detections.insert(result.detections.end(), dets.begin(), dets.end());
            break;
        }
        }
    }
    if (result.head_layers.empty() && !def.layers.empty())
        result.head_layers.push_back(static_cast<int>(def.layers.size()) - 1);
    return result;
}

} // namespace slim
