#include "slim/cfg.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "slim/errors.hpp"
#include "slim/graph.hpp"

namespace slim {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& v, int line) {
    int out = 0;
    std::string t = trim(v);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || p != t.data() + t.size())
        throw ParseError("line " + std::to_string(line) + ": expected integer, got '" + v + "'");
    return out;
}

float parse_float(const std::string& v, int line) {
    std::string t = trim(v);
    try {
        size_t pos = 0;
        float out = std::stof(t, &pos);
        if (pos != t.size()) throw std::invalid_argument(t);
        return out;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line) + ": expected number, got '" + v + "'");
    }
}

std::vector<int> parse_int_list(const std::string& v, int line) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_int(item, line));
    }
    if (out.empty())
        throw ParseError("line " + std::to_string(line) + ": empty integer list");
    return out;
}

std::vector<float> parse_float_list(const std::string& v, int line) {
    std::vector<float> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_float(item, line));
    }
    return out;
}

std::string format_float(float v) {
    std::ostringstream os;
    if (v == static_cast<long long>(v))
        os << static_cast<long long>(v);
    else
        os << v;
    return os.str();
}

struct RawSection {
    std::string name;
    int line = 0;
    std::vector<KeyValue> entries;
    std::vector<int> entry_lines;
};

std::vector<RawSection> split_sections(const std::string& text) {
    std::vector<RawSection> sections;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (size_t hash = raw.find('#'); hash != std::string::npos)
            raw.erase(hash);
        std::string s = trim(raw);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ParseError("line " + std::to_string(line) + ": unterminated section header");
            sections.push_back({s.substr(1, s.size() - 2), line, {}, {}});
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ParseError("line " + std::to_string(line) + ": expected key=value, got '" + s + "'");
        if (sections.empty())
            throw ParseError("line " + std::to_string(line) + ": key=value before any section");
        sections.back().entries.push_back({trim(s.substr(0, eq)), trim(s.substr(eq + 1))});
        sections.back().entry_lines.push_back(line);
    }
    return sections;
}

const std::unordered_map<std::string, LayerKind>& section_kinds() {
    static const std::unordered_map<std::string, LayerKind> kinds = {
        {"convolutional", LayerKind::Convolutional},
        {"maxpool", LayerKind::MaxPool},
        {"upsample", LayerKind::Upsample},
        {"route", LayerKind::Route},
        {"shortcut", LayerKind::Shortcut},
        {"yolo", LayerKind::Yolo},
    };
    return kinds;
}

LayerSpec parse_layer(const RawSection& sec, LayerKind kind) {
    LayerSpec layer;
    layer.kind = kind;
    for (size_t i = 0; i < sec.entries.size(); ++i) {
        const auto& [key, value] = sec.entries[i];
        int line = sec.entry_lines[i];
        bool known = true;
        switch (kind) {
        case LayerKind::Convolutional:
            if (key == "filters") layer.conv.filters = parse_int(value, line);
            else if (key == "size") layer.conv.size = parse_int(value, line);
            else if (key == "stride") layer.conv.stride = parse_int(value, line);
            else if (key == "pad") layer.conv.pad = parse_int(value, line) != 0;
            else if (key == "batch_normalize") layer.conv.batch_normalize = parse_int(value, line) != 0;
            else if (key == "activation") layer.conv.activation = value;
            else known = false;
            break;
        case LayerKind::MaxPool:
            if (key == "size") layer.maxpool.size = parse_int(value, line);
            else if (key == "stride") layer.maxpool.stride = parse_int(value, line);
            else if (key == "padding") layer.maxpool.padding = parse_int(value, line);
            else known = false;
            break;
        case LayerKind::Upsample:
            if (key == "stride") layer.upsample.stride = parse_int(value, line);
            else known = false;
            break;
        case LayerKind::Route:
            if (key == "layers") layer.route.layers = parse_int_list(value, line);
            else known = false;
            break;
        case LayerKind::Shortcut:
            if (key == "from") layer.shortcut.from = parse_int(value, line);
            else if (key == "activation") layer.shortcut.activation = value;
            else known = false;
            break;
        case LayerKind::Yolo:
            if (key == "mask") layer.yolo.anchor_mask = parse_int_list(value, line);
            else if (key == "classes") layer.yolo.classes = parse_int(value, line);
            else if (key == "anchors") {
                auto flat = parse_float_list(value, line);
                if (flat.size() % 2 != 0)
                    throw ParseError("line " + std::to_string(line) + ": anchors must be (w,h) pairs");
                layer.yolo.anchors.clear();
                for (size_t j = 0; j + 1 < flat.size(); j += 2)
                    layer.yolo.anchors.emplace_back(flat[j], flat[j + 1]);
            } else known = false;
            break;
        }
        if (!known) layer.extras.push_back({key, value});
    }
    return layer;
}

void emit_layer(std::ostringstream& out, const LayerSpec& layer) {
    out << '[' << layer_kind_name(layer.kind) << "]\n";
    switch (layer.kind) {
    case LayerKind::Convolutional:
        if (layer.conv.batch_normalize) out << "batch_normalize=1\n";
        out << "filters=" << layer.conv.filters << "\n";
        out << "size=" << layer.conv.size << "\n";
        out << "stride=" << layer.conv.stride << "\n";
        out << "pad=" << (layer.conv.pad ? 1 : 0) << "\n";
        out << "activation=" << layer.conv.activation << "\n";
        break;
    case LayerKind::MaxPool:
        out << "size=" << layer.maxpool.size << "\n";
        out << "stride=" << layer.maxpool.stride << "\n";
        if (layer.maxpool.padding >= 0) out << "padding=" << layer.maxpool.padding << "\n";
        break;
    case LayerKind::Upsample:
        out << "stride=" << layer.upsample.stride << "\n";
        break;
    case LayerKind::Route: {
        out << "layers=";
        for (size_t i = 0; i < layer.route.layers.size(); ++i)
            out << (i ? "," : "") << layer.route.layers[i];
        out << "\n";
        break;
    }
    case LayerKind::Shortcut:
        out << "from=" << layer.shortcut.from << "\n";
        out << "activation=" << layer.shortcut.activation << "\n";
        break;
    case LayerKind::Yolo: {
        out << "mask=";
        for (size_t i = 0; i < layer.yolo.anchor_mask.size(); ++i)
            out << (i ? "," : "") << layer.yolo.anchor_mask[i];
        out << "\nanchors=";
        for (size_t i = 0; i < layer.yolo.anchors.size(); ++i) {
            out << (i ? ", " : "") << format_float(layer.yolo.anchors[i].first) << ','
                << format_float(layer.yolo.anchors[i].second);
        }
        out << "\nclasses=" << layer.yolo.classes << "\n";
        break;
    }
    }
    for (const auto& kv : layer.extras) out << kv.key << '=' << kv.value << "\n";
}

} // namespace

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
    case LayerKind::Convolutional: return "convolutional";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Route: return "route";
    case LayerKind::Shortcut: return "shortcut";
    case LayerKind::Yolo: return "yolo";
    }
    return "?";
}

bool LayerSpec::operator==(const LayerSpec& other) const {
    if (kind != other.kind || extras != other.extras) return false;
    switch (kind) {
    case LayerKind::Convolutional: return conv == other.conv;
    case LayerKind::MaxPool: return maxpool == other.maxpool;
    case LayerKind::Upsample: return upsample == other.upsample;
    case LayerKind::Route: return route == other.route;
    case LayerKind::Shortcut: return shortcut == other.shortcut;
    case LayerKind::Yolo: return yolo == other.yolo;
    }
    return false;
}

LayerSpec make_conv(int filters, int size, int stride, bool batch_normalize,
                    const std::string& activation) {
    LayerSpec l;
    l.kind = LayerKind::Convolutional;
    l.conv.filters = filters;
    l.conv.size = size;
    l.conv.stride = stride;
    l.conv.pad = true;
    l.conv.batch_normalize = batch_normalize;
    l.conv.activation = activation;
    return l;
}

LayerSpec make_maxpool(int size, int stride) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.maxpool.size = size;
    l.maxpool.stride = stride;
    return l;
}

LayerSpec make_upsample(int stride) {
    LayerSpec l;
    l.kind = LayerKind::Upsample;
    l.upsample.stride = stride;
    return l;
}

LayerSpec make_route(std::vector<int> layers) {
    LayerSpec l;
    l.kind = LayerKind::Route;
    l.route.layers = std::move(layers);
    return l;
}

LayerSpec make_shortcut(int from, const std::string& activation) {
    LayerSpec l;
    l.kind = LayerKind::Shortcut;
    l.shortcut.from = from;
    l.shortcut.activation = activation;
    return l;
}

std::vector<int> NetworkDef::route_sources(int layer_index) const {
    std::vector<int> out;
    for (int written : layers[layer_index].route.layers)
        out.push_back(resolve_reference(layer_index, written));
    return out;
}

int NetworkDef::shortcut_source(int layer_index) const {
    return resolve_reference(layer_index, layers[layer_index].shortcut.from);
}

NetworkDef parse_cfg(const std::string& text) {
    auto sections = split_sections(text);
    if (sections.empty()) throw ParseError("empty document");
    if (sections.front().name != "net" && sections.front().name != "network")
        throw ParseError("line " + std::to_string(sections.front().line) +
                         ": first section must be [net], got [" + sections.front().name + "]");

    NetworkDef def;
    const RawSection& net = sections.front();
    for (size_t i = 0; i < net.entries.size(); ++i) {
        const auto& [key, value] = net.entries[i];
            int line = net.entry_lines[i];
        if (key == "width") def.width = parse_int(value, line);
        else if (key == "height") def.height = parse_int(value, line);
        else if (key == "channels") def.channels = parse_int(value, line);
        else def.net_extras.push_back({key, value});
    }

    for (size_t s = 1; s < sections.size(); ++s) {
        const RawSection& sec = sections[s];
        auto it = section_kinds().find(sec.name);
        if (it == section_kinds().end())
            throw ParseError("line " + std::to_string(sec.line) + ": unknown section [" +
                             sec.name + "]");
        def.layers.push_back(parse_layer(sec, it->second));
    }

    // References must land on an earlier layer.
    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        if (layer.kind == LayerKind::Route) {
            for (int written : layer.route.layers) {
                int target = def.resolve_reference(static_cast<int>(i), written);
                if (target < 0 || target >= static_cast<int>(i))
                    throw ParseError("layer " + std::to_string(i) + ": route reference " +
                                     std::to_string(written) + " does not resolve to an earlier layer");
            }
        } else if (layer.kind == LayerKind::Shortcut) {
            int target = def.resolve_reference(static_cast<int>(i), layer.shortcut.from);
            if (target < 0 || target >= static_cast<int>(i))
                throw ParseError("layer " + std::to_string(i) + ": shortcut reference " +
                                 std::to_string(layer.shortcut.from) +
                                 " does not resolve to an earlier layer");
        }
    }
    return def;
}

NetworkDef load_cfg(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_cfg(buf.str());
}

std::string emit_cfg(const NetworkDef& def) {
    std::ostringstream out;
    out << "[net]\n";
    out << "width=" << def.width << "\n";
    out << "height=" << def.height << "\n";
    out << "channels=" << def.channels << "\n";
    for (const auto& kv : def.net_extras) out << kv.key << '=' << kv.value << "\n";
    for (const LayerSpec& layer : def.layers) {
        out << "\n";
        emit_layer(out, layer);
    }
    return out.str();
}

void save_cfg(const NetworkDef& def, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("cannot write config file: " + path);
    out << emit_cfg(def);
}

std::vector<Diagnostic> validate(const NetworkDef& def) {
    std::vector<Diagnostic> diags;
    if (def.width <= 0) diags.push_back({-1, "net width must be a positive integer"});
    if (def.height <= 0) diags.push_back({-1, "net height must be a positive integer"});
    if (def.channels <= 0) diags.push_back({-1, "net channels must be a positive integer"});

    int n = static_cast<int>(def.layers.size());
    for (int i = 0; i < n; ++i) {
        const LayerSpec& layer = def.layers[i];
        switch (layer.kind) {
        case LayerKind::Convolutional:
            if (layer.conv.filters < 1) diags.push_back({i, "filters must be >= 1"});
            if (layer.conv.size < 1) diags.push_back({i, "size must be >= 1"});
            if (layer.conv.stride < 1) diags.push_back({i, "stride must be >= 1"});
            break;
        case LayerKind::MaxPool:
            if (layer.maxpool.size < 1) diags.push_back({i, "maxpool size must be >= 1"});
            if (layer.maxpool.stride < 1) diags.push_back({i, "maxpool stride must be >= 1"});
            break;
        case LayerKind::Upsample:
            if (layer.upsample.stride < 1) diags.push_back({i, "upsample stride must be >= 1"});
            break;
        case LayerKind::Route:
            if (layer.route.layers.empty()) diags.push_back({i, "route has no source layers"});
            for (int written : layer.route.layers) {
                int target = def.resolve_reference(i, written);
                if (target < 0 || target >= i)
                    diags.push_back({i, "route reference " + std::to_string(written) +
                                            " does not resolve to an earlier layer"});
            }
            break;
        case LayerKind::Shortcut: {
            int target = def.resolve_reference(i, layer.shortcut.from);
            if (target < 0 || target >= i)
                diags.push_back({i, "shortcut reference " + std::to_string(layer.shortcut.from) +
                                        " does not resolve to an earlier layer"});
            if (i == 0) diags.push_back({i, "shortcut cannot be the first layer"});
            break;
        }
        case LayerKind::Yolo: {
            if (layer.yolo.classes < 1) diags.push_back({i, "classes must be >= 1"});
            for (int m : layer.yolo.anchor_mask)
                if (m < 0 || m >= static_cast<int>(layer.yolo.anchors.size()))
                    diags.push_back({i, "mask index " + std::to_string(m) +
                                            " exceeds the anchor list"});
            break;
        }
        }
    }

    // Shape-level checks (shortcut operand agreement, degenerate dims) only
    // make sense once the reference structure is sound.
    if (diags.empty() && def.width > 0 && def.height > 0 && def.channels > 0) {
        try {
            infer_shapes(def);
        } catch (const ValidationError& e) {
            diags.push_back({-1, e.what()});
        }
    }
    return diags;
}

} // namespace slim
