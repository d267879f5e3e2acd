#pragma once
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cavlab {

// Dense H x W x D tensor, channels last; flat index (h*W + w)*D + d.
// The same flattening order is shared by activation captures, gradients,
// cav directions and the spatial-grid reshape, which must all agree.
template <typename T>
struct Tensor3 {
    int h = 0, w = 0, d = 0;
    std::vector<T> data;

    Tensor3() = default;
    Tensor3(int h_, int w_, int d_) : h(h_), w(w_), d(d_), data(size_t(h_) * w_ * d_, T(0)) {}

    size_t size() const { return data.size(); }

    T& at(int y, int x, int c) { return data[(size_t(y) * w + x) * d + c]; }
    const T& at(int y, int x, int c) const { return data[(size_t(y) * w + x) * d + c]; }

    bool same_shape(const Tensor3& o) const { return h == o.h && w == o.w && d == o.d; }

    template <typename U>
    Tensor3<U> cast() const {
        Tensor3<U> out(h, w, d);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
        return out;
    }
};

using TensorF = Tensor3<float>;
using TensorD = Tensor3<double>;

// FNV-1a 64, used for content addressing and fingerprints.
inline uint64_t fnv1a(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(uint64_t v);

} // namespace cavlab
