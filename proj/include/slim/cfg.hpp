#pragma once

// Darknet-style network configuration documents as a typed layer list.
// Parsing keys the toolkit does not interpret are preserved verbatim and
// re-emitted, so documents survive a parse/emit round trip untouched.

#include <string>
#include <utility>
#include <vector>

namespace slim {

enum class LayerKind { Convolutional, MaxPool, Upsample, Route, Shortcut, Yolo };

const char* layer_kind_name(LayerKind kind);

struct KeyValue {
    std::string key;
    std::string value;
    bool operator==(const KeyValue&) const = default;
};

struct ConvolutionalSpec {
    int filters = 1;
    int size = 1;
    int stride = 1;
    bool pad = false;
    bool batch_normalize = false;
    std::string activation = "linear";

    // Darknet convention: pad=1 means size/2 on each border.
    int padding() const { return pad ? size / 2 : 0; }
    bool operator==(const ConvolutionalSpec&) const = default;
};

struct MaxPoolSpec {
    int size = 2;
    int stride = 2;
    int padding = -1; // total padding; -1 selects the darknet default size-1

    int total_padding() const { return padding < 0 ? size - 1 : padding; }
    bool operator==(const MaxPoolSpec&) const = default;
};

struct UpsampleSpec {
    int stride = 2;
    bool operator==(const UpsampleSpec&) const = default;
};

struct RouteSpec {
    std::vector<int> layers; // as written; negative entries are relative
    bool operator==(const RouteSpec&) const = default;
};

struct ShortcutSpec {
    int from = 0; // as written
    std::string activation = "linear";
    bool operator==(const ShortcutSpec&) const = default;
};

struct YoloSpec {
    std::vector<int> anchor_mask;
    std::vector<std::pair<float, float>> anchors; // (w, h) in pixels
    int classes = 1;
    bool operator==(const YoloSpec&) const = default;
};

struct LayerSpec {
    LayerKind kind = LayerKind::Convolutional;
    ConvolutionalSpec conv;
    MaxPoolSpec maxpool;
    UpsampleSpec upsample;
    RouteSpec route;
    ShortcutSpec shortcut;
    YoloSpec yolo;
    std::vector<KeyValue> extras; // keys we do not interpret, kept in order

    bool operator==(const LayerSpec& other) const;
};

LayerSpec make_conv(int filters, int size, int stride, bool batch_normalize,
                    const std::string& activation);
LayerSpec make_maxpool(int size, int stride);
LayerSpec make_upsample(int stride);
LayerSpec make_route(std::vector<int> layers);
LayerSpec make_shortcut(int from, const std::string& activation = "linear");

struct NetworkDef {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<KeyValue> net_extras;
    std::vector<LayerSpec> layers;

    // Negative references are relative to the referencing layer.
    int resolve_reference(int layer_index, int written) const {
        return written < 0 ? layer_index + written : written;
    }
    std::vector<int> route_sources(int layer_index) const;
    int shortcut_source(int layer_index) const;

    bool operator==(const NetworkDef&) const = default;
};

struct Diagnostic {
    int layer = -1; // -1 refers to the [net] header
    std::string message;
};

NetworkDef parse_cfg(const std::string& text);
NetworkDef load_cfg(const std::string& path);
std::string emit_cfg(const NetworkDef& def);
void save_cfg(const NetworkDef& def, const std::string& path);

// Empty result means every structural invariant holds.
std::vector<Diagnostic> validate(const NetworkDef& def);

} // namespace slim
