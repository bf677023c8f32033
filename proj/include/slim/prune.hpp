#pragma once

// Channel pruning driven by batch-norm scaling factors. Channels whose |gamma|
// falls strictly below min(global threshold, per-layer safety threshold) are
// dropped; masks are then propagated so route concatenations, shortcut groups
// and pass-through layers stay consistent before weights are sliced.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "slim/cfg.hpp"
#include "slim/weights.hpp"

namespace slim {

struct PruneConfig {
    double global_ratio = 0.5;     // n-th percentile of all |gamma|, in [0, 1)
    double local_percentile = 0.9; // per-layer cap; 0.9 keeps at least 10% of a layer
    int iterations = 1;
};

enum class MaskOrigin { OwnThreshold, RouteConcat, ShortcutMerged, Passthrough, AllRetain };

struct LayerMask {
    std::vector<std::uint8_t> retain; // one flag per output channel, 1 = keep
    MaskOrigin origin = MaskOrigin::AllRetain;

    int kept() const;
    int size() const { return static_cast<int>(retain.size()); }
};

struct ChannelMaskSet {
    std::vector<LayerMask> layers;
};

// |gamma| per layer; empty vectors for layers that are not prunable
// (prunable = convolutional with batch_normalize).
std::vector<std::vector<float>> collect_scaling_factors(const NetworkDef& def,
                                                        const WeightStore& store);

// Nearest-rank percentile: ascending sort, 0-based index floor(ratio * N).
// Values strictly below the result are pruned; ties at it are retained.
float compute_global_threshold(std::vector<float> pooled, double ratio);

// One threshold per layer; +inf for non-prunable layers so min() ignores them.
std::vector<float> compute_local_thresholds(const std::vector<std::vector<float>>& factors,
                                            double local_percentile);

ChannelMaskSet build_masks(const NetworkDef& def,
                           const std::vector<std::vector<float>>& factors, float global_threshold,
                           const std::vector<float>& local_thresholds);

// Fixed-point propagation: routes concatenate source masks, pass-through
// layers copy their input, and every layer connected through a chain of
// shortcuts receives the OR of the whole group.
ChannelMaskSet propagate_masks(const NetworkDef& def, ChannelMaskSet masks);

struct LayerPruneStats {
    int layer = -1;
    int before = 0;
    int after = 0;
    int ties_retained = 0;
};

struct PruneReport {
    float global_threshold = 0.0f;
    std::vector<float> local_thresholds;
    std::vector<LayerPruneStats> per_layer; // prunable layers only
    std::int64_t params_before = 0, params_after = 0;
    std::int64_t flops_before = 0, flops_after = 0;
    std::int64_t volume_before = 0, volume_after = 0;
    int channels_before = 0, channels_after = 0;

    double param_reduction() const;
    double flop_reduction() const;
};

std::string render_prune_report(const PruneReport& report);
std::string render_prune_report_csv(const PruneReport& report);

struct PruneResult {
    NetworkDef def;
    WeightStore store;
    PruneReport report;
};

PruneResult apply_pruning(const NetworkDef& def, const WeightStore& store,
                          const ChannelMaskSet& masks);

// Single-shot convenience: thresholds, masks, propagation, slicing.
PruneResult prune_once(const NetworkDef& def, const WeightStore& store, const PruneConfig& cfg);

// Called between rounds; typically a fine-tuning pass or a no-op.
using FinetuneHook = std::function<void(NetworkDef&, WeightStore&, int round)>;

std::vector<PruneReport> iterative_prune(NetworkDef& def, WeightStore& store,
                                         const PruneConfig& cfg, const FinetuneHook& hook);

} // namespace slim
