#include "slim/graph.hpp"

#include <iomanip>
#include <sstream>

#include "slim/errors.hpp"

namespace slim {

namespace {

int conv_out_dim(int in, int size, int stride, int padding) {
    return (in + 2 * padding - size) / stride + 1;
}

int pool_out_dim(int in, int size, int stride, int total_padding) {
    return (in + total_padding - size) / stride + 1;
}

// Channel propagation is independent of spatial extents, which keeps
// parameter counting valid for any input resolution.
std::vector<int> infer_channels(const NetworkDef& def) {
    std::vector<int> c(def.layers.size(), 0);
    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        int in_c = i == 0 ? def.channels : c[i - 1];
        switch (layer.kind) {
        case LayerKind::Convolutional:
            c[i] = layer.conv.filters;
            break;
        case LayerKind::Route: {
            int sum = 0;
            for (int src : def.route_sources(static_cast<int>(i))) sum += c[src];
            c[i] = sum;
            break;
        }
        case LayerKind::Shortcut:
            c[i] = in_c;
            break;
        default:
            c[i] = in_c;
            break;
        }
    }
    return c;
}

std::vector<int> conv_input_channels(const NetworkDef& def) {
    auto c = infer_channels(def);
    std::vector<int> in(def.layers.size(), -1);
    for (size_t i = 0; i < def.layers.size(); ++i) {
        if (def.layers[i].kind != LayerKind::Convolutional) continue;
        in[i] = i == 0 ? def.channels : c[i - 1];
    }
    return in;
}

} // namespace

ShapeInfo infer_shapes(const NetworkDef& def, int input_h, int input_w) {
    ShapeInfo info;
    info.input = {def.channels, input_h > 0 ? input_h : def.height,
                  input_w > 0 ? input_w : def.width};
    if (info.input.c <= 0 || info.input.h <= 0 || info.input.w <= 0)
        throw ValidationError("input shape must be positive");

    info.out.resize(def.layers.size());
    info.conv_in_channels.assign(def.layers.size(), -1);

    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        Shape in = i == 0 ? info.input : info.out[i - 1];
        Shape& out = info.out[i];
        switch (layer.kind) {
        case LayerKind::Convolutional: {
            info.conv_in_channels[i] = in.c;
            out.c = layer.conv.filters;
            out.h = conv_out_dim(in.h, layer.conv.size, layer.conv.stride, layer.conv.padding());
            out.w = conv_out_dim(in.w, layer.conv.size, layer.conv.stride, layer.conv.padding());
            break;
        }
        case LayerKind::MaxPool:
            out.c = in.c;
            out.h = pool_out_dim(in.h, layer.maxpool.size, layer.maxpool.stride,
                                 layer.maxpool.total_padding());
            out.w = pool_out_dim(in.w, layer.maxpool.size, layer.maxpool.stride,
                                 layer.maxpool.total_padding());
            break;
        case LayerKind::Upsample:
            out = {in.c, in.h * layer.upsample.stride, in.w * layer.upsample.stride};
            break;
        case LayerKind::Route: {
            auto sources = def.route_sources(static_cast<int>(i));
            out = info.out[sources.front()];
            for (size_t s = 1; s < sources.size(); ++s) {
                const Shape& src = info.out[sources[s]];
                if (src.h != out.h || src.w != out.w)
                    throw ValidationError("layer " + std::to_string(i) +
                                          ": route sources disagree on spatial size");
                out.c += src.c;
            }
            break;
        }
        case LayerKind::Shortcut: {
            int from = def.shortcut_source(static_cast<int>(i));
            if (!(info.out[from] == in))
                throw ValidationError("layer " + std::to_string(i) + ": shortcut operands (layers " +
                                      std::to_string(i - 1) + " and " + std::to_string(from) +
                                      ") have different shapes");
            out = in;
            break;
        }
        case LayerKind::Yolo:
            out = in;
            break;
        }
        if (out.c < 1 || out.h < 1 || out.w < 1)
            throw ValidationError("layer " + std::to_string(i) + ": non-positive output shape");
    }
    return info;
}

CostReport count_params(const NetworkDef& def) {
    CostReport report;
    report.per_layer.resize(def.layers.size());
    auto conv_in = conv_input_channels(def);
    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        if (layer.kind != LayerKind::Convolutional) continue;
        std::int64_t kernel = static_cast<std::int64_t>(layer.conv.size) * layer.conv.size *
                              conv_in[i] * layer.conv.filters;
        std::int64_t per_filter = layer.conv.batch_normalize ? 4 : 1;
        report.per_layer[i].params = kernel + per_filter * layer.conv.filters;
        report.total_params += report.per_layer[i].params;
    }
    return report;
}

CostReport count_flops(const NetworkDef& def, int input_h, int input_w) {
    CostReport report = count_params(def);
    ShapeInfo shapes = infer_shapes(def, input_h, input_w);
    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        if (layer.kind != LayerKind::Convolutional) continue;
        const Shape& out = shapes.out[i];
        std::int64_t macs = static_cast<std::int64_t>(layer.conv.size) * layer.conv.size *
                            shapes.conv_in_channels[i] * layer.conv.filters * out.h * out.w;
        report.per_layer[i].flops = 2 * macs;
        report.total_flops += report.per_layer[i].flops;
    }
    return report;
}

std::string render_cost_table(const NetworkDef& def, const ShapeInfo& shapes,
                              const CostReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(5) << "idx" << std::setw(15) << "type" << std::setw(18)
        << "output (hxwxc)" << std::right << std::setw(14) << "params" << std::setw(16)
        << "flops" << "\n";
    for (size_t i = 0; i < def.layers.size(); ++i) {
        std::ostringstream shape;
        shape << shapes.out[i].h << 'x' << shapes.out[i].w << 'x' << shapes.out[i].c;
        out << std::left << std::setw(5) << i << std::setw(15)
            << layer_kind_name(def.layers[i].kind) << std::setw(18) << shape.str() << std::right
            << std::setw(14) << report.per_layer[i].params << std::setw(16)
            << report.per_layer[i].flops << "\n";
    }
    out << "total params: " << report.total_params << "\n";
    out << "total flops:  " << report.total_flops << " (" << std::fixed << std::setprecision(2)
        << report.bflops() << " BFLOPS)\n";
    out << "model volume: " << report.model_volume_bytes() << " bytes\n";
    return out.str();
}

std::string render_cost_csv(const NetworkDef& def, const ShapeInfo& shapes,
                            const CostReport& report) {
    std::ostringstream out;
    out << "index,type,out_h,out_w,out_c,params,flops\n";
    for (size_t i = 0; i < def.layers.size(); ++i) {
        out << i << ',' << layer_kind_name(def.layers[i].kind) << ',' << shapes.out[i].h << ','
            << shapes.out[i].w << ',' << shapes.out[i].c << ',' << report.per_layer[i].params
            << ',' << report.per_layer[i].flops << "\n";
    }
    out << "total,,,,," << report.total_params << ',' << report.total_flops << "\n";
    return out.str();
}

} // namespace slim
