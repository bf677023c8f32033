#include "slim/tensor.hpp"

#include <fstream>

#include "slim/errors.hpp"

namespace slim {

Tensor load_blob(const std::string& path) {
    std::ifstream meta(path + ".shape");
    if (!meta) throw ParseError("cannot open blob sidecar: " + path + ".shape");
    int c = 0, h = 0, w = 0;
    if (!(meta >> c >> h >> w) || c <= 0 || h <= 0 || w <= 0)
        throw ParseError("blob sidecar must contain positive 'c h w': " + path + ".shape");

    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open blob: " + path);
    Tensor t(c, h, w);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(4 * t.size()));
    if (static_cast<size_t>(in.gcount()) != 4 * t.size())
        throw ParseError("blob shorter than its declared shape: " + path);
    char extra;
    if (in.read(&extra, 1))
        throw ParseError("blob longer than its declared shape: " + path);
    return t;
}

void save_blob(const Tensor& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("cannot write blob: " + path);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(4 * t.size()));
    std::ofstream meta(path + ".shape");
    if (!meta) throw ArgumentError("cannot write blob sidecar: " + path + ".shape");
    meta << t.c << ' ' << t.h << ' ' << t.w << "\n";
}

} // namespace slim
