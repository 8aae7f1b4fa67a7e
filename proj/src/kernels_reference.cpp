// Serial direct-loop kernels. Kept as the ground truth the parallel path is
// tested and benchmarked against.

#include <algorithm>
#include <cstddef>

#include "dfq/kernels.hpp"

namespace dfq::kernels::reference {

namespace {

using std::ptrdiff_t;
using std::size_t;

template <typename T>
inline bool input_at(const ConvGeometry& g, size_t y, size_t x, size_t dy, size_t dx,
                     size_t& in_y, size_t& in_x) {
    const ptrdiff_t iy = static_cast<ptrdiff_t>(y + dy) - static_cast<ptrdiff_t>(g.pad_top);
    const ptrdiff_t ix = static_cast<ptrdiff_t>(x + dx) - static_cast<ptrdiff_t>(g.pad_left);
    if (iy < 0 || ix < 0 || iy >= static_cast<ptrdiff_t>(g.in_h) ||
        ix >= static_cast<ptrdiff_t>(g.in_w)) {
        return false;
    }
    in_y = static_cast<size_t>(iy);
    in_x = static_cast<size_t>(ix);
    return true;
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out) {
    const size_t k = g.kernel, ci_n = g.in_c, co_n = g.out_c;
    for (size_t y = 0; y < g.out_h; ++y) {
        for (size_t x = 0; x < g.out_w; ++x) {
            for (size_t o = 0; o < co_n; ++o) {
                T sum = bias[o];
                for (size_t dy = 0; dy < k; ++dy) {
                    for (size_t dx = 0; dx < k; ++dx) {
                        size_t iy = 0, ix = 0;
                        if (!input_at<T>(g, y, x, dy, dx, iy, ix)) continue;
                        for (size_t i = 0; i < ci_n; ++i) {
                            sum += in[(iy * g.in_w + ix) * ci_n + i] *
                                   w[((dy * k + dx) * ci_n + i) * co_n + o];
                        }
                    }
                }
                out[(y * g.out_w + x) * co_n + o] = sum;
            }
        }
    }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* grad_out, const T* in, const T* w, T* grad_in,
                     T* grad_w, T* grad_b) {
    const size_t k = g.kernel, ci_n = g.in_c, co_n = g.out_c;
    if (grad_in != nullptr) std::fill(grad_in, grad_in + g.in_size(), T{0});
    for (size_t y = 0; y < g.out_h; ++y) {
        for (size_t x = 0; x < g.out_w; ++x) {
            for (size_t o = 0; o < co_n; ++o) {
                const T go = grad_out[(y * g.out_w + x) * co_n + o];
                grad_b[o] += go;
                for (size_t dy = 0; dy < k; ++dy) {
                    for (size_t dx = 0; dx < k; ++dx) {
                        size_t iy = 0, ix = 0;
                        if (!input_at<T>(g, y, x, dy, dx, iy, ix)) continue;
                        for (size_t i = 0; i < ci_n; ++i) {
                            const size_t in_idx = (iy * g.in_w + ix) * ci_n + i;
                            const size_t w_idx = ((dy * k + dx) * ci_n + i) * co_n + o;
                            grad_w[w_idx] += in[in_idx] * go;
                            if (grad_in != nullptr) grad_in[in_idx] += w[w_idx] * go;
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void maxpool_forward(const PoolGeometry& g, const T* in, T* out, std::uint32_t* indices) {
    const size_t c = g.channels;
    for (size_t oy = 0; oy < g.out_h; ++oy) {
        for (size_t ox = 0; ox < g.out_w; ++ox) {
            for (size_t ch = 0; ch < c; ++ch) {
                size_t best_idx = 0;
                bool first = true;
                for (size_t dy = 0; dy < g.window; ++dy) {
                    for (size_t dx = 0; dx < g.window; ++dx) {
                        const size_t idx =
                            ((oy * g.stride + dy) * g.in_w + ox * g.stride + dx) * c + ch;
                        if (first || in[idx] > in[best_idx]) best_idx = idx;
                        first = false;
                    }
                }
                out[(oy * g.out_w + ox) * c + ch] = in[best_idx];
                indices[(oy * g.out_w + ox) * c + ch] = static_cast<std::uint32_t>(best_idx);
            }
        }
    }
}

template <typename T>
void maxpool_backward(const PoolGeometry& g, const T* grad_out, const std::uint32_t* indices,
                      T* grad_in) {
    std::fill(grad_in, grad_in + g.in_size(), T{0});
    for (size_t i = 0; i < g.out_size(); ++i) grad_in[indices[i]] += grad_out[i];
}

#define DFQ_INSTANTIATE(T)                                                                      \
    template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);     \
    template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, \
                                     T*);                                                       \
    template void maxpool_forward<T>(const PoolGeometry&, const T*, T*, std::uint32_t*);        \
    template void maxpool_backward<T>(const PoolGeometry&, const T*, const std::uint32_t*, T*);

DFQ_INSTANTIATE(float)
DFQ_INSTANTIATE(double)

#undef DFQ_INSTANTIATE

}  // namespace dfq::kernels::reference
