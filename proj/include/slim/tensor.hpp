#pragma once

// Dense feature maps, channel-major then row-major.

#include <cstddef>
#include <string>
#include <vector>

namespace slim {

template <typename T>
struct BasicTensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> data;

    BasicTensor() = default;
    BasicTensor(int c_, int h_, int w_, T fill = T{})
        : c(c_), h(h_), w(w_), data(static_cast<size_t>(c_) * h_ * w_, fill) {}

    size_t size() const { return data.size(); }
    T& at(int ci, int y, int x) { return data[(static_cast<size_t>(ci) * h + y) * w + x]; }
    const T& at(int ci, int y, int x) const {
        return data[(static_cast<size_t>(ci) * h + y) * w + x];
    }
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Raw little-endian float32 blob with a "<c> <h> <w>" text sidecar at
// path + ".shape".
Tensor load_blob(const std::string& path);
void save_blob(const Tensor& t, const std::string& path);

} // namespace slim
