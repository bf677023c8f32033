#pragma once

// Shared helpers for the test suites: fixture loading, synthetic weight
// stores, and small deterministic networks.

#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "slim/cfg.hpp"
#include "slim/graph.hpp"
#include "slim/tensor.hpp"
#include "slim/weights.hpp"

namespace testutil {

inline std::string fixture_path(const std::string& name) {
    return std::string(SLIM_FIXTURE_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline slim::NetworkDef load_fixture(const std::string& name) {
    return slim::load_cfg(fixture_path(name));
}

// Store with deterministic random weights aligned to def. Variances are
// kept away from zero so inference stays well-conditioned.
inline slim::WeightStore random_store(const slim::NetworkDef& def, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> unit(-0.5f, 0.5f);
    std::uniform_real_distribution<float> var(0.5f, 1.5f);

    slim::ShapeInfo shapes = slim::infer_shapes(def);
    slim::WeightStore store;
    store.layers.resize(def.layers.size());
    for (size_t i = 0; i < def.layers.size(); ++i) {
        const slim::LayerSpec& layer = def.layers[i];
        if (layer.kind != slim::LayerKind::Convolutional) continue;
        slim::ConvWeights& w = store.layers[i];
        size_t n = static_cast<size_t>(layer.conv.filters);
        size_t k = static_cast<size_t>(layer.conv.size) * layer.conv.size *
                   shapes.conv_in_channels[i] * layer.conv.filters;
        w.biases.resize(n);
        for (float& v : w.biases) v = unit(rng);
        if (layer.conv.batch_normalize) {
            w.scales.resize(n);
            w.rolling_mean.resize(n);
            w.rolling_variance.resize(n);
            for (float& v : w.scales) v = unit(rng) + 1.0f;
            for (float& v : w.rolling_mean) v = unit(rng);
            for (float& v : w.rolling_variance) v = var(rng);
        }
        w.kernel.resize(k);
        for (float& v : w.kernel) v = unit(rng);
    }
    return store;
}

inline slim::Tensor random_tensor(int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    slim::Tensor t(c, h, w);
    for (float& v : t.data) v = dist(rng);
    return t;
}

} // namespace testutil
