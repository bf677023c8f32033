#include "slim/prune.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "slim/errors.hpp"
#include "slim/graph.hpp"

namespace slim {

namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();

float nearest_rank(std::vector<float>& sorted_ascending, double p) {
    size_t n = sorted_ascending.size();
    size_t idx = static_cast<size_t>(std::floor(p * static_cast<double>(n)));
    if (idx >= n) idx = n - 1;
    return sorted_ascending[idx];
}

bool is_prunable(const LayerSpec& layer) {
    return layer.kind == LayerKind::Convolutional && layer.conv.batch_normalize;
}

std::vector<std::uint8_t> all_retain(int n) {
    return std::vector<std::uint8_t>(static_cast<size_t>(n), 1);
}

// Union-find over layers whose output masks must be identical.
struct TieSet {
    std::vector<int> parent;
    explicit TieSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

template <typename T>
std::vector<T> slice(const std::vector<T>& v, const std::vector<std::uint8_t>& mask) {
    std::vector<T> out;
    out.reserve(v.size());
    for (size_t i = 0; i < v.size(); ++i)
        if (mask[i]) out.push_back(v[i]);
    return out;
}

} // namespace

int LayerMask::kept() const {
    int n = 0;
    for (std::uint8_t r : retain) n += r;
    return n;
}

std::vector<std::vector<float>> collect_scaling_factors(const NetworkDef& def,
                                                        const WeightStore& store) {
    check_alignment(store, def);
    std::vector<std::vector<float>> factors(def.layers.size());
    for (size_t i = 0; i < def.layers.size(); ++i) {
        if (!is_prunable(def.layers[i])) continue;
        factors[i].reserve(store.layers[i].scales.size());
        for (float g : store.layers[i].scales) factors[i].push_back(std::fabs(g));
    }
    return factors;
}

float compute_global_threshold(std::vector<float> pooled, double ratio) {
    if (pooled.empty()) throw ArgumentError("no scaling factors to threshold");
    if (ratio < 0.0 || ratio >= 1.0)
        throw ArgumentError("global pruning ratio must be in [0, 1)");
    std::sort(pooled.begin(), pooled.end());
    return nearest_rank(pooled, ratio);
}

std::vector<float> compute_local_thresholds(const std::vector<std::vector<float>>& factors,
                                            double local_percentile) {
    if (local_percentile <= 0.0 || local_percentile > 1.0)
        throw ArgumentError("local percentile must be in (0, 1]");
    std::vector<float> out(factors.size(), kInf);
    for (size_t i = 0; i < factors.size(); ++i) {
        if (factors[i].empty()) continue;
        std::vector<float> sorted = factors[i];
        std::sort(sorted.begin(), sorted.end());
        out[i] = nearest_rank(sorted, local_percentile);
    }
    return out;
}

ChannelMaskSet build_masks(const NetworkDef& def, const std::vector<std::vector<float>>& factors,
                           float global_threshold, const std::vector<float>& local_thresholds) {
    ShapeInfo shapes = infer_shapes(def);
    ChannelMaskSet masks;
    masks.layers.resize(def.layers.size());
    for (size_t i = 0; i < def.layers.size(); ++i) {
        LayerMask& m = masks.layers[i];
        if (is_prunable(def.layers[i])) {
            float threshold = std::min(global_threshold, local_thresholds[i]);
            m.origin = MaskOrigin::OwnThreshold;
            m.retain.resize(factors[i].size());
            for (size_t ch = 0; ch < factors[i].size(); ++ch)
                m.retain[ch] = factors[i][ch] < threshold ? 0 : 1;
            if (m.kept() == 0)
                throw InternalError("layer " + std::to_string(i) +
                                    ": mask retains zero channels");
        } else {
            m.origin = MaskOrigin::AllRetain;
            m.retain = all_retain(shapes.out[i].c);
        }
    }
    return masks;
}

ChannelMaskSet propagate_masks(const NetworkDef& def, ChannelMaskSet masks) {
    const int n = static_cast<int>(def.layers.size());
    if (static_cast<int>(masks.layers.size()) != n)
        throw ArgumentError("mask set does not cover every layer");

    // A pass-through layer mirrors whatever ultimately provides its mask, so
    // shortcut groups must tie the providers, not the mirrors.
    auto provider_root = [&](int j) {
        while (j > 0) {
            const LayerSpec& l = def.layers[j];
            if (l.kind == LayerKind::MaxPool || l.kind == LayerKind::Upsample ||
                l.kind == LayerKind::Yolo)
                j = j - 1;
            else if (l.kind == LayerKind::Route && l.route.layers.size() == 1)
                j = def.route_sources(j).front();
            else
                break;
        }
        return j;
    };

    // Shortcut groups are stable across sweeps; compute them once.
    TieSet ties(n);
    for (int i = 0; i < n; ++i) {
        if (def.layers[i].kind != LayerKind::Shortcut) continue;
        ties.unite(i, provider_root(i - 1));
        ties.unite(i, provider_root(def.shortcut_source(i)));
    }

    for (int sweep = 0; sweep <= n + 1; ++sweep) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            const LayerSpec& layer = def.layers[i];
            LayerMask& m = masks.layers[i];
            if (layer.kind == LayerKind::Route) {
                std::vector<std::uint8_t> concat;
                for (int src : def.route_sources(i)) {
                    const auto& s = masks.layers[src].retain;
                    concat.insert(concat.end(), s.begin(), s.end());
                }
                if (concat != m.retain) {
                    m.retain = std::move(concat);
                    m.origin = MaskOrigin::RouteConcat;
                    changed = true;
                }
            } else if (layer.kind == LayerKind::MaxPool || layer.kind == LayerKind::Upsample ||
                       layer.kind == LayerKind::Yolo) {
                if (i == 0) continue;
                if (masks.layers[i - 1].retain != m.retain) {
                    m.retain = masks.layers[i - 1].retain;
                    m.origin = MaskOrigin::Passthrough;
                    changed = true;
                }
            }
        }

        for (int root = 0; root < n; ++root) {
            if (ties.find(root) != root) continue;
            std::vector<int> members;
            for (int i = 0; i < n; ++i)
                if (ties.find(i) == root) members.push_back(i);
            if (members.size() < 2) continue;

            size_t width = masks.layers[members.front()].retain.size();
            std::vector<std::uint8_t> merged(width, 0);
            for (int i : members) {
                const auto& r = masks.layers[i].retain;
                if (r.size() != width)
                    throw ValidationError("shortcut group mixes channel counts (layer " +
                                          std::to_string(i) + ")");
                for (size_t ch = 0; ch < width; ++ch) merged[ch] |= r[ch];
            }
            for (int i : members) {
                if (masks.layers[i].retain != merged) {
                    masks.layers[i].retain = merged;
                    masks.layers[i].origin = MaskOrigin::ShortcutMerged;
                    changed = true;
                }
            }
        }

        if (!changed) return masks;
    }
    throw InternalError("mask propagation did not reach a fixed point");
}

PruneResult apply_pruning(const NetworkDef& def, const WeightStore& store,
                          const ChannelMaskSet& masks) {
    check_alignment(store, def);
    if (masks.layers.size() != def.layers.size())
        throw ArgumentError("mask set does not cover every layer");

    ShapeInfo shapes = infer_shapes(def);
    for (size_t i = 0; i < def.layers.size(); ++i) {
        if (masks.layers[i].size() != shapes.out[i].c)
            throw InternalError("layer " + std::to_string(i) + ": mask length " +
                                std::to_string(masks.layers[i].size()) +
                                " != channel count " + std::to_string(shapes.out[i].c));
        if (masks.layers[i].kept() == 0)
            throw InternalError("layer " + std::to_string(i) + ": mask retains zero channels");
    }

    // The mask slicing a layer's input channels is its provider's output mask.
    auto input_mask = [&](size_t i) -> std::vector<std::uint8_t> {
        if (i == 0) return all_retain(def.channels); // image channels are never pruned
        return masks.layers[i - 1].retain;
    };

    PruneResult result;
    result.def = def;
    result.store = store;
    result.store.layers.assign(def.layers.size(), ConvWeights{});

    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        if (layer.kind != LayerKind::Convolutional) continue;

        const std::vector<std::uint8_t>& out_mask = masks.layers[i].retain;
        const std::vector<std::uint8_t> in_mask = input_mask(i);
        const ConvWeights& w = store.layers[i];
        ConvWeights& pw = result.store.layers[i];

        pw.biases = slice(w.biases, out_mask);
        if (layer.conv.batch_normalize) {
            pw.scales = slice(w.scales, out_mask);
            pw.rolling_mean = slice(w.rolling_mean, out_mask);
            pw.rolling_variance = slice(w.rolling_variance, out_mask);
        }

        const int in_c = shapes.conv_in_channels[i];
        const int kk = layer.conv.size * layer.conv.size;
        if (static_cast<int>(in_mask.size()) != in_c)
            throw InternalError("layer " + std::to_string(i) + ": input mask length " +
                                std::to_string(in_mask.size()) + " != input channels " +
                                std::to_string(in_c));
        pw.kernel.reserve(w.kernel.size());
        for (int oc = 0; oc < layer.conv.filters; ++oc) {
            if (!out_mask[oc]) continue;
            const float* base = w.kernel.data() + static_cast<size_t>(oc) * in_c * kk;
            for (int ic = 0; ic < in_c; ++ic) {
                if (!in_mask[ic]) continue;
                pw.kernel.insert(pw.kernel.end(), base + static_cast<size_t>(ic) * kk,
                                 base + static_cast<size_t>(ic + 1) * kk);
            }
        }
        result.def.layers[i].conv.filters = masks.layers[i].kept();
    }

    if (auto diags = validate(result.def); !diags.empty())
        throw InternalError("pruned definition fails validation: " + diags.front().message);
    check_alignment(result.store, result.def);

    PruneReport& report = result.report;
    CostReport before = count_flops(def);
    CostReport after = count_flops(result.def);
    report.params_before = before.total_params;
    report.params_after = after.total_params;
    report.flops_before = before.total_flops;
    report.flops_after = after.total_flops;
    report.volume_before = before.model_volume_bytes();
    report.volume_after = after.model_volume_bytes();
    for (size_t i = 0; i < def.layers.size(); ++i) {
        if (!is_prunable(def.layers[i])) continue;
        LayerPruneStats stats;
        stats.layer = static_cast<int>(i);
        stats.before = def.layers[i].conv.filters;
        stats.after = masks.layers[i].kept();
        report.per_layer.push_back(stats);
        report.channels_before += stats.before;
        report.channels_after += stats.after;
    }
    return result;
}

PruneResult prune_once(const NetworkDef& def, const WeightStore& store, const PruneConfig& cfg) {
    auto factors = collect_scaling_factors(def, store);
    std::vector<float> pooled;
    for (const auto& f : factors) pooled.insert(pooled.end(), f.begin(), f.end());
    float global = compute_global_threshold(pooled, cfg.global_ratio);
    auto local = compute_local_thresholds(factors, cfg.local_percentile);

    ChannelMaskSet masks = propagate_masks(def, build_masks(def, factors, global, local));

    // Ties at the effective threshold are retained by the strict-below rule;
    // surface them in the report.
    PruneResult result = apply_pruning(def, store, masks);
    result.report.global_threshold = global;
    result.report.local_thresholds = local;
    for (LayerPruneStats& stats : result.report.per_layer) {
        float eff = std::min(global, local[stats.layer]);
        for (float g : factors[stats.layer])
            if (g == eff) ++stats.ties_retained;
    }
    return result;
}

std::vector<PruneReport> iterative_prune(NetworkDef& def, WeightStore& store,
                                         const PruneConfig& cfg, const FinetuneHook& hook) {
    if (cfg.iterations < 1) throw ArgumentError("iterations must be >= 1");
    std::vector<PruneReport> reports;
    for (int round = 0; round < cfg.iterations; ++round) {
        PruneResult result;
        try {
            result = prune_once(def, store, cfg);
        } catch (const InternalError&) {
            break; // a round that would break mask invariants ends the loop
        }
        def = std::move(result.def);
        store = std::move(result.store);
        reports.push_back(std::move(result.report));
        if (hook) hook(def, store, round);
    }
    return reports;
}

double PruneReport::param_reduction() const {
    if (params_before == 0) return 0.0;
    return 1.0 - static_cast<double>(params_after) / static_cast<double>(params_before);
}

double PruneReport::flop_reduction() const {
    if (flops_before == 0) return 0.0;
    return 1.0 - static_cast<double>(flops_after) / static_cast<double>(flops_before);
}

std::string render_prune_report(const PruneReport& r) {
    std::ostringstream out;
    out << "global threshold: " << r.global_threshold << "\n";
    out << std::left << std::setw(8) << "layer" << std::setw(12) << "channels" << std::setw(12)
        << "kept" << std::setw(14) << "local_pi" << std::setw(10) << "ties" << "\n";
    for (const LayerPruneStats& s : r.per_layer) {
        std::ostringstream pi;
        if (s.layer < static_cast<int>(r.local_thresholds.size()))
            pi << r.local_thresholds[s.layer];
        out << std::left << std::setw(8) << s.layer << std::setw(12) << s.before << std::setw(12)
            << s.after << std::setw(14) << pi.str() << std::setw(10) << s.ties_retained << "\n";
    }
    out << std::fixed << std::setprecision(1);
    out << "channels: " << r.channels_before << " -> " << r.channels_after << "\n";
    out << "params:   " << r.params_before << " -> " << r.params_after << " (-"
        << 100.0 * r.param_reduction() << "%)\n";
    out << "flops:    " << r.flops_before << " -> " << r.flops_after << " (-"
        << 100.0 * r.flop_reduction() << "%)\n";
    out << "volume:   " << r.volume_before << " -> " << r.volume_after << " bytes\n";
    return out.str();
}

std::string render_prune_report_csv(const PruneReport& r) {
    std::ostringstream out;
    out << "layer,channels_before,channels_after,local_threshold,ties_retained\n";
    for (const LayerPruneStats& s : r.per_layer) {
        out << s.layer << ',' << s.before << ',' << s.after << ',';
        if (s.layer < static_cast<int>(r.local_thresholds.size()))
            out << r.local_thresholds[s.layer];
        out << ',' << s.ties_retained << "\n";
    }
    out << "totals," << r.params_before << ',' << r.params_after << ',' << r.flops_before << ','
        << r.flops_after << "\n";
    return out.str();
}

} // namespace slim
