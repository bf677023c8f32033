#include "slim/spp.hpp"

#include <algorithm>

#include "slim/errors.hpp"
#include "slim/graph.hpp"

namespace slim {

namespace {

bool is_conv(const LayerSpec& l) { return l.kind == LayerKind::Convolutional; }

bool is_spp_pool(const LayerSpec& l) {
    return l.kind == LayerKind::MaxPool && l.maxpool.stride == 1 &&
           (l.maxpool.size == 5 || l.maxpool.size == 9 || l.maxpool.size == 13);
}

// The four-way concat closing an SPP block.
bool is_spp_route(const NetworkDef& def, int index) {
    const LayerSpec& l = def.layers[index];
    if (l.kind != LayerKind::Route || l.route.layers.size() < 4) return false;
    int pools = 0;
    for (int src : def.route_sources(index))
        if (is_spp_pool(def.layers[src])) ++pools;
    return pools >= 3;
}

// Rewrites every reference so that layers at positions >= at shift by count.
// References keep the form they were written in.
void shift_references(NetworkDef& def, int at, int count) {
    for (int i = 0; i < static_cast<int>(def.layers.size()); ++i) {
        LayerSpec& layer = def.layers[i];
        int old_index = i >= at + count ? i - count : i;
        if (i >= at && i < at + count) continue; // freshly inserted
        auto remap = [&](int written) {
            int target = written < 0 ? old_index + written : written;
            int new_target = target >= at ? target + count : target;
            return written < 0 ? new_target - i : new_target;
        };
        if (layer.kind == LayerKind::Route)
            for (int& w : layer.route.layers) w = remap(w);
        else if (layer.kind == LayerKind::Shortcut)
            layer.shortcut.from = remap(layer.shortcut.from);
    }
}

void insert_layers(NetworkDef& def, int at, const std::vector<LayerSpec>& block) {
    def.layers.insert(def.layers.begin() + at, block.begin(), block.end());
    shift_references(def, at, static_cast<int>(block.size()));
}

struct Head {
    int yolo = -1;
    int detect_conv = -1;
    std::vector<int> stack; // consecutive convs ending at the detection conv
    bool has_spp = false;
    bool fused = false; // fed by a route (upsample fusion) rather than the trunk
};

Head inspect_head(const NetworkDef& def, int yolo_index) {
    Head head;
    head.yolo = yolo_index;
    head.detect_conv = yolo_index - 1;
    if (head.detect_conv < 0 || !is_conv(def.layers[head.detect_conv]))
        throw ValidationError("yolo layer " + std::to_string(yolo_index) +
                              " is not fed by a convolutional layer");
    int i = head.detect_conv;
    while (i >= 0 && is_conv(def.layers[i])) --i;
    for (int j = i + 1; j <= head.detect_conv; ++j) head.stack.push_back(j);
    if (i >= 0) {
        if (is_spp_route(def, i))
            head.has_spp = true;
        else if (def.layers[i].kind == LayerKind::Route)
            head.fused = true;
    }
    return head;
}

} // namespace

int count_spp_blocks(const NetworkDef& def) {
    int blocks = 0;
    for (int i = 0; i < static_cast<int>(def.layers.size()); ++i)
        if (is_spp_route(def, i)) ++blocks;
    return blocks;
}

NetworkDef insert_spp(const NetworkDef& def, const SppOptions& options) {
    std::vector<int> yolos;
    for (int i = 0; i < static_cast<int>(def.layers.size()); ++i)
        if (def.layers[i].kind == LayerKind::Yolo) yolos.push_back(i);
    if (yolos.empty()) throw ArgumentError("network has no yolo layers");

    NetworkDef out = def;
    // Back to front so earlier insertion points stay valid.
    for (auto it = yolos.rbegin(); it != yolos.rend(); ++it) {
        Head head = inspect_head(out, *it);
        if (head.has_spp) continue;
        if (head.stack.size() < 6)
            throw ValidationError("head at layer " + std::to_string(head.yolo) + " has only " +
                                  std::to_string(head.stack.size()) +
                                  " convolutional layers; need at least 6");

        const int anchor = head.stack[2];
        const int width = out.layers[anchor].conv.filters;

        std::vector<LayerSpec> block;
        if (options.literal_identity_pool) {
            block.push_back(make_maxpool(1, 1));
            block.push_back(make_route({-2}));
            block.push_back(make_maxpool(5, 1));
            block.push_back(make_route({-4}));
            block.push_back(make_maxpool(9, 1));
            block.push_back(make_route({-6}));
            block.push_back(make_maxpool(13, 1));
            block.push_back(make_route({-1, -3, -5, -7}));
        } else {
            block.push_back(make_maxpool(5, 1));
            block.push_back(make_route({-2}));
            block.push_back(make_maxpool(9, 1));
            block.push_back(make_route({-4}));
            block.push_back(make_maxpool(13, 1));
            block.push_back(make_route({-1, -3, -5, -6}));
        }
        block.push_back(make_conv(width, 1, 1, true, "leaky"));
        if (head.fused) {
            block.push_back(make_conv(2 * width, 3, 1, true, "leaky"));
            block.push_back(make_conv(width, 1, 1, true, "leaky"));
        }
        insert_layers(out, anchor + 1, block);
    }

    if (auto diags = validate(out); !diags.empty())
        throw InternalError("spp transform produced an invalid definition: " +
                            diags.front().message);
    return out;
}

} // namespace slim
