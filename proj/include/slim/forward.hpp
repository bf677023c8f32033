#pragma once

// Deterministic CPU forward pass over (NetworkDef, WeightStore). Every
// output element accumulates in a fixed order, so repeated runs on the same
// input are bit-identical.

#include <vector>

#include "slim/cfg.hpp"
#include "slim/tensor.hpp"
#include "slim/weights.hpp"

namespace slim {

inline constexpr float kBnEpsilon = 1e-6f;
inline constexpr float kLeakySlope = 0.1f;

float apply_activation(const std::string& name, float x);

Tensor conv_forward(const Tensor& input, const ConvolutionalSpec& spec, const ConvWeights& w);
Tensor maxpool_forward(const Tensor& input, const MaxPoolSpec& spec);
Tensor upsample_forward(const Tensor& input, int stride);
Tensor route_concat(const std::vector<const Tensor*>& sources);
Tensor shortcut_add(const Tensor& a, const Tensor& b, const std::string& activation);

struct Detection {
    float x = 0; // box center, input-image pixels
    float y = 0;
    float w = 0;
    float h = 0;
    float objectness = 0;
    std::vector<float> class_scores;
    int class_id = 0;
    float score = 0; // objectness * best class score
};

// Feature channels are laid out per anchor as (tx, ty, tw, th, to, c1..cC)
// planes. Detections below the objectness threshold are dropped.
std::vector<Detection> yolo_decode(const Tensor& feature, const YoloSpec& spec, int net_w,
                                   int net_h, float objectness_threshold);

struct ForwardResult {
    std::vector<Tensor> layer_out;
    std::vector<Detection> detections;
    // Outputs feeding the yolo layers (the full final output when none exist);
    // these keep their channel count under pruning, so two variants of the
    // same network can be compared element-wise.
    std::vector<int> head_layers;
};

ForwardResult run_network(const NetworkDef& def, const WeightStore& store, const Tensor& input,
                          float objectness_threshold = 0.1f);

} // namespace slim
