#pragma once

// Darknet binary weight files, aligned to a NetworkDef. The stream is
// little-endian: three int32 version fields, a sample counter (uint64 when
// major*10+minor >= 2, else uint32), then float32 tensors per convolutional
// layer in definition order: biases (beta under batch norm), then scales,
// rolling mean and rolling variance when batch-normalized, then kernels.

#include <cstdint>
#include <string>
#include <vector>

#include "slim/cfg.hpp"

namespace slim {

struct ConvWeights {
    std::vector<float> biases;           // beta when batch_normalize, plain bias otherwise
    std::vector<float> scales;           // gamma (batch norm only)
    std::vector<float> rolling_mean;     // batch norm only
    std::vector<float> rolling_variance; // batch norm only
    std::vector<float> kernel;           // filters x in_c x size x size, row-major

    bool operator==(const ConvWeights&) const = default;
};

struct WeightStore {
    std::int32_t major = 0;
    std::int32_t minor = 2;
    std::int32_t revision = 0;
    std::uint64_t seen = 0;
    // One entry per layer; empty tensors for non-convolutional layers.
    std::vector<ConvWeights> layers;

    bool operator==(const WeightStore&) const = default;
};

WeightStore read_weights(const std::vector<std::uint8_t>& bytes, const NetworkDef& def);
// Output always carries the canonical (0, 2, 0) header with a 64-bit counter.
std::vector<std::uint8_t> write_weights(const WeightStore& store, const NetworkDef& def);

WeightStore load_weights(const std::string& path, const NetworkDef& def);
void save_weights(const WeightStore& store, const NetworkDef& def, const std::string& path);

// Throws ValidationError when tensor lengths disagree with shapes inferred
// from the definition, or when a rolling variance is negative.
void check_alignment(const WeightStore& store, const NetworkDef& def);

// Total float payload of an aligned store (excludes the header).
std::int64_t float_count(const NetworkDef& def);

} // namespace slim
