#pragma once

// Shape inference and cost accounting over a NetworkDef. Convolutions are
// the only layers that contribute to the parameter and FLOP totals; a
// multiply-accumulate counts as two operations.

#include <cstdint>
#include <string>
#include <vector>

#include "slim/cfg.hpp"

namespace slim {

struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;
    bool operator==(const Shape&) const = default;
};

struct ShapeInfo {
    Shape input;
    std::vector<Shape> out;              // one per layer
    std::vector<int> conv_in_channels;   // input channel count per layer (-1 for non-conv)
};

// input_h/input_w of 0 fall back to the net header.
ShapeInfo infer_shapes(const NetworkDef& def, int input_h = 0, int input_w = 0);

struct LayerCost {
    std::int64_t params = 0;
    std::int64_t flops = 0;
};

struct CostReport {
    std::vector<LayerCost> per_layer;
    std::int64_t total_params = 0;
    std::int64_t total_flops = 0;

    double bflops() const { return static_cast<double>(total_flops) / 1e9; }
    // float32 storage plus the 20-byte weight-file header
    std::int64_t model_volume_bytes() const { return 4 * total_params + 20; }
};

// Parameter counts are independent of spatial input size.
CostReport count_params(const NetworkDef& def);
CostReport count_flops(const NetworkDef& def, int input_h = 0, int input_w = 0);

std::string render_cost_table(const NetworkDef& def, const ShapeInfo& shapes,
                              const CostReport& report);
std::string render_cost_csv(const NetworkDef& def, const ShapeInfo& shapes,
                            const CostReport& report);

} // namespace slim
