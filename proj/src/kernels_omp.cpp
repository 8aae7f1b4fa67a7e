#include "dfq/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dfq/errors.hpp"

namespace dfq::kernels {

ConvGeometry ConvGeometry::make(std::size_t in_h, std::size_t in_w, std::size_t in_c,
                                std::size_t kernel, std::size_t out_c, Padding padding) {
    if (in_h == 0 || in_w == 0 || in_c == 0 || kernel == 0 || out_c == 0) {
        throw ShapeError("convolution extents must be positive");
    }
    ConvGeometry g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.in_c = in_c;
    g.kernel = kernel;
    g.out_c = out_c;
    g.padding = padding;
    if (padding == Padding::Same) {
        // extra pixel (even k) goes to the bottom/right
        g.out_h = in_h;
        g.out_w = in_w;
        g.pad_top = (kernel - 1) / 2;
        g.pad_left = (kernel - 1) / 2;
    } else {
        if (kernel > in_h || kernel > in_w) {
            throw ShapeError("valid convolution with kernel " + std::to_string(kernel) +
                             " does not fit input " + std::to_string(in_h) + "x" +
                             std::to_string(in_w));
        }
        g.out_h = in_h - kernel + 1;
        g.out_w = in_w - kernel + 1;
    }
    return g;
}

PoolGeometry PoolGeometry::make(std::size_t in_h, std::size_t in_w, std::size_t channels,
                                std::size_t window, std::size_t stride) {
    if (window == 0 || stride == 0 || channels == 0) throw ShapeError("pool extents must be positive");
    if (in_h < window || in_w < window) {
        throw ShapeError("pool window " + std::to_string(window) + " larger than input " +
                         std::to_string(in_h) + "x" + std::to_string(in_w));
    }
    PoolGeometry g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.channels = channels;
    g.window = window;
    g.stride = stride;
    g.out_h = (in_h - window) / stride + 1;
    g.out_w = (in_w - window) / stride + 1;
    return g;
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace {

using std::ptrdiff_t;
using std::size_t;

constexpr size_t kParallelWork = size_t{1} << 15;

// 32-byte SIMD vectors via GCC vector extensions; lowered to AVX/AVX-512 or
// split into SSE halves depending on the target.
template <typename T>
struct Simd;
template <>
struct Simd<float> {
    typedef float type __attribute__((vector_size(32)));
    static constexpr size_t width = 8;
};
template <>
struct Simd<double> {
    typedef double type __attribute__((vector_size(32)));
    static constexpr size_t width = 4;
};

template <typename T>
using vec_t = typename Simd<T>::type;

template <typename T>
inline vec_t<T> load(const T* p) {
    vec_t<T> v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

template <typename T>
inline void store(T* p, const vec_t<T>& v) {
    std::memcpy(p, &v, sizeof(v));
}

// register tile of gemm_nn: MR rows x NV vectors
constexpr size_t kMR = 4, kNV = 4;

template <typename T>
inline void tile_nn(size_t l, const T* a, size_t lda, const T* b, size_t ldb, T* c, size_t ldc,
                    bool accumulate) {
    using V = vec_t<T>;
    constexpr size_t W = Simd<T>::width;
    V acc[kMR][kNV];
    for (size_t r = 0; r < kMR; ++r)
        for (size_t v = 0; v < kNV; ++v) acc[r][v] = accumulate ? load(c + r * ldc + v * W) : V{};
    for (size_t k = 0; k < l; ++k) {
        const T* brow = b + k * ldb;
        V bv[kNV];
        for (size_t v = 0; v < kNV; ++v) bv[v] = load(brow + v * W);
        for (size_t r = 0; r < kMR; ++r) {
            const T av = a[r * lda + k];
            for (size_t v = 0; v < kNV; ++v) acc[r][v] += av * bv[v];
        }
    }
    for (size_t r = 0; r < kMR; ++r)
        for (size_t v = 0; v < kNV; ++v) store(c + r * ldc + v * W, acc[r][v]);
}

template <typename T>
inline void tile_nn_edge(size_t mr, size_t nr, size_t l, const T* a, size_t lda, const T* b,
                         size_t ldb, T* c, size_t ldc, bool accumulate) {
    constexpr size_t NR = kNV * Simd<T>::width;
    T acc[kMR][NR] = {};
    if (accumulate) {
        for (size_t r = 0; r < mr; ++r)
            for (size_t j = 0; j < nr; ++j) acc[r][j] = c[r * ldc + j];
    }
    for (size_t k = 0; k < l; ++k) {
        const T* brow = b + k * ldb;
        for (size_t r = 0; r < mr; ++r) {
            const T av = a[r * lda + k];
            for (size_t j = 0; j < nr; ++j) acc[r][j] += av * brow[j];
        }
    }
    for (size_t r = 0; r < mr; ++r)
        for (size_t j = 0; j < nr; ++j) c[r * ldc + j] = acc[r][j];
}

// Dot-product tile of gemm_nt: MR x NR outputs, each reduced over l with
// vector lanes, then lanes summed in a fixed order.
template <typename T, size_t MR, size_t NR>
inline void tile_nt(size_t mr, size_t nr, size_t l, const T* a, size_t lda, const T* b, size_t ldb,
                    T* c, size_t ldc, bool accumulate) {
    using V = vec_t<T>;
    constexpr size_t W = Simd<T>::width;
    V acc[MR][NR] = {};
    const size_t full = l - l % W;
    if (mr == MR && nr == NR) {
        for (size_t k = 0; k < full; k += W) {
            V bv[NR];
            for (size_t s = 0; s < NR; ++s) bv[s] = load(b + s * ldb + k);
            for (size_t r = 0; r < MR; ++r) {
                const V av = load(a + r * lda + k);
                for (size_t s = 0; s < NR; ++s) acc[r][s] += av * bv[s];
            }
        }
    } else {
        for (size_t k = 0; k < full; k += W) {
            for (size_t r = 0; r < mr; ++r) {
                const V av = load(a + r * lda + k);
                for (size_t s = 0; s < nr; ++s) acc[r][s] += av * load(b + s * ldb + k);
            }
        }
    }
    for (size_t r = 0; r < mr; ++r) {
        for (size_t s = 0; s < nr; ++s) {
            T sum = T{0};
            for (size_t v = 0; v < W; ++v) sum += acc[r][s][v];
            for (size_t k = full; k < l; ++k) sum += a[r * lda + k] * b[s * ldb + k];
            T& dst = c[r * ldc + s];
            dst = accumulate ? dst + sum : sum;
        }
    }
}

// Per-thread scratch reused across calls; large fresh allocations would
// page-fault on every layer invocation.
template <typename T>
T* scratch(std::size_t slot, std::size_t n) {
    thread_local std::vector<T> buffers[3];
    auto& buf = buffers[slot];
    if (buf.size() < n) buf.resize(n);
    return buf.data();
}

// Offsets [lo, hi) within a run of `run` output columns starting at x0 whose
// source column x0 + t + off_x falls inside [0, in_w).
inline std::pair<size_t, size_t> inside(size_t x0, size_t run, ptrdiff_t off_x, size_t in_w) {
    const ptrdiff_t first = static_cast<ptrdiff_t>(x0) + off_x;
    const ptrdiff_t lo = std::clamp<ptrdiff_t>(-first, 0, static_cast<ptrdiff_t>(run));
    const ptrdiff_t hi = std::clamp<ptrdiff_t>(static_cast<ptrdiff_t>(in_w) - first, lo, static_cast<ptrdiff_t>(run));
    return {static_cast<size_t>(lo), static_cast<size_t>(hi)};
}

// Patch columns for output pixels [p0, p0 + cols) only: col is kk x cols.
template <typename T>
void im2col_chunk(const ConvGeometry& g, const T* in, size_t p0, size_t cols, T* col) {
    const size_t k = g.kernel, cin = g.in_c, wo = g.out_w, kk = g.patch_size();
    for (size_t row = 0; row < kk; ++row) {
        const size_t dy = row / (k * cin), dx = row / cin % k, ci = row % cin;
        const ptrdiff_t off_y = static_cast<ptrdiff_t>(dy) - static_cast<ptrdiff_t>(g.pad_top);
        const ptrdiff_t off_x = static_cast<ptrdiff_t>(dx) - static_cast<ptrdiff_t>(g.pad_left);
        T* d = col + row * cols;
        size_t j = 0;
        while (j < cols) {
            const size_t pix = p0 + j, y = pix / wo, x0 = pix % wo;
            const size_t run = std::min(cols - j, wo - x0);
            const ptrdiff_t iy = static_cast<ptrdiff_t>(y) + off_y;
            T* dst = d + j;
            if (iy < 0 || iy >= static_cast<ptrdiff_t>(g.in_h)) {
                std::fill(dst, dst + run, T{0});
            } else {
                // in-bounds columns t satisfy 0 <= x0 + t + off_x < in_w
                const auto [lo, hi] = inside(x0, run, off_x, g.in_w);
                const T* src = in + static_cast<size_t>(iy) * g.in_w * cin + ci;
                const T* s0 = src + static_cast<ptrdiff_t>(cin) * (static_cast<ptrdiff_t>(x0) + off_x);
                std::fill(dst, dst + lo, T{0});
                if (cin == 1) {
                    std::copy(s0 + lo, s0 + hi, dst + lo);
                } else {
                    for (size_t t = lo; t < hi; ++t) dst[t] = s0[t * cin];
                }
                std::fill(dst + hi, dst + run, T{0});
            }
            j += run;
        }
    }
}

// Scatter-adds patch-column gradients for pixels [p0, p0 + cols) onto grad_in.
template <typename T>
void col2im_chunk(const ConvGeometry& g, const T* col, size_t p0, size_t cols, T* grad_in) {
    const size_t k = g.kernel, cin = g.in_c, wo = g.out_w, kk = g.patch_size();
    for (size_t row = 0; row < kk; ++row) {
        const size_t dy = row / (k * cin), dx = row / cin % k, ci = row % cin;
        const ptrdiff_t off_y = static_cast<ptrdiff_t>(dy) - static_cast<ptrdiff_t>(g.pad_top);
        const ptrdiff_t off_x = static_cast<ptrdiff_t>(dx) - static_cast<ptrdiff_t>(g.pad_left);
        const T* src = col + row * cols;
        size_t j = 0;
        while (j < cols) {
            const size_t pix = p0 + j, y = pix / wo, x0 = pix % wo;
            const size_t run = std::min(cols - j, wo - x0);
            const ptrdiff_t iy = static_cast<ptrdiff_t>(y) + off_y;
            if (iy >= 0 && iy < static_cast<ptrdiff_t>(g.in_h)) {
                const auto [lo, hi] = inside(x0, run, off_x, g.in_w);
                T* dst = grad_in + static_cast<size_t>(iy) * g.in_w * cin + ci +
                         static_cast<ptrdiff_t>(cin) * (static_cast<ptrdiff_t>(x0) + off_x);
                const T* from = src + j;
                for (size_t t = lo; t < hi; ++t) dst[t * cin] += from[t];
            }
            j += run;
        }
    }
}

// Pixels per chunk: the chunk's patch columns stay around 128 KiB. Fixed by
// the geometry alone, so the summation order never depends on thread count.
inline size_t chunk_pixels(const ConvGeometry& g, size_t elem) {
    const size_t target = (size_t{128} << 10) / elem / g.patch_size();
    return std::max<size_t>(32, target / 32 * 32);
}

// dst[cols x rows] = src[rows x cols]^T
template <typename T>
void transpose(size_t rows, size_t cols, const T* src, T* dst) {
    constexpr size_t B = 32;
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
    for (ptrdiff_t r0 = 0; r0 < static_cast<ptrdiff_t>(rows); r0 += B) {
        const size_t r_end = std::min(rows, static_cast<size_t>(r0) + B);
        for (size_t c0 = 0; c0 < cols; c0 += B) {
            const size_t c_end = std::min(cols, c0 + B);
            for (size_t r = static_cast<size_t>(r0); r < r_end; ++r)
                for (size_t c = c0; c < c_end; ++c) dst[c * rows + r] = src[r * cols + c];
        }
    }
}

}  // namespace

template <typename T>
inline void gemm_nn_column(size_t m, size_t n, size_t l, const T* a, const T* b, T* c, bool accumulate,
                           size_t j0) {
    constexpr size_t MR = kMR, NR = kNV * Simd<T>::width;
    const size_t nr = std::min(NR, n - j0);
    for (size_t i0 = 0; i0 < m; i0 += MR) {
        const size_t mr = std::min(MR, m - i0);
        if (mr == MR && nr == NR) {
            tile_nn<T>(l, a + i0 * l, l, b + j0, n, c + i0 * n + j0, n, accumulate);
        } else {
            tile_nn_edge<T>(mr, nr, l, a + i0 * l, l, b + j0, n, c + i0 * n + j0, n, accumulate);
        }
    }
}

// gemm_nn without a parallel region, for callers already inside one.
template <typename T>
void gemm_serial_nn(size_t m, size_t n, size_t l, const T* a, const T* b, T* c) {
    constexpr size_t NR = kNV * Simd<T>::width;
    for (size_t j0 = 0; j0 < n; j0 += NR) gemm_nn_column(m, n, l, a, b, c, false, j0);
}

template <typename T>
void gemm_nn(size_t m, size_t n, size_t l, const T* a, const T* b, T* c, bool accumulate) {
    constexpr size_t NR = kNV * Simd<T>::width;
    const auto ntiles = static_cast<ptrdiff_t>((n + NR - 1) / NR);
#pragma omp parallel for schedule(static) if (m * n * l > kParallelWork)
    for (ptrdiff_t jt = 0; jt < ntiles; ++jt) gemm_nn_column(m, n, l, a, b, c, accumulate, static_cast<size_t>(jt) * NR);
}

template <typename T>
void gemm_nt(size_t m, size_t n, size_t l, const T* a, const T* b, T* c, bool accumulate) {
    constexpr size_t MR = 4, NR = 2;
    const size_t mt = (m + MR - 1) / MR, nt = (n + NR - 1) / NR;
    const auto tiles = static_cast<ptrdiff_t>(mt * nt);
#pragma omp parallel for schedule(static) if (m * n * l > kParallelWork)
    for (ptrdiff_t t = 0; t < tiles; ++t) {
        const size_t i0 = static_cast<size_t>(t) / nt * MR;
        const size_t j0 = static_cast<size_t>(t) % nt * NR;
        tile_nt<T, MR, NR>(std::min(MR, m - i0), std::min(NR, n - j0), l, a + i0 * l, l,
                              b + j0 * l, l, c + i0 * n + j0, n, accumulate);
    }
}

template <typename T>
void gemm_tn_acc(size_t m, size_t n, size_t l, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static) if (m * n * l > kParallelWork)
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(m); ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        for (size_t k = 0; k < l; ++k) {
            const T av = a[k * m + static_cast<size_t>(i)];
            if (av == T{0}) continue;
            const T* brow = b + k * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out) {
    const size_t p = g.out_h * g.out_w, kk = g.patch_size(), co = g.out_c;
    T* wt = scratch<T>(1, co * kk);
    transpose(kk, co, w, wt);
    const size_t chunk = chunk_pixels(g, sizeof(T));
    const auto chunks = static_cast<ptrdiff_t>((p + chunk - 1) / chunk);
#pragma omp parallel for schedule(dynamic) if (p * kk * co > kParallelWork && chunks > 1)
    for (ptrdiff_t ci = 0; ci < chunks; ++ci) {
        const size_t p0 = static_cast<size_t>(ci) * chunk, cols = std::min(chunk, p - p0);
        T* col = scratch<T>(0, kk * chunk);
        T* out_t = scratch<T>(2, co * chunk);
        im2col_chunk(g, in, p0, cols, col);
        gemm_serial_nn(co, cols, kk, wt, col, out_t);
        for (size_t i = 0; i < cols; ++i) {
            T* o = out + (p0 + i) * co;
            for (size_t c = 0; c < co; ++c) o[c] = out_t[c * cols + i] + bias[c];
        }
    }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* grad_out, const T* in, const T* w, T* grad_in,
                     T* grad_w, T* grad_b) {
    const size_t p = g.out_h * g.out_w, kk = g.patch_size(), co = g.out_c;
    for (size_t c = 0; c < co; ++c) {
        T sum = T{0};
        for (size_t i = 0; i < p; ++i) sum += grad_out[i * co + c];
        grad_b[c] += sum;
    }
    if (grad_in != nullptr) std::fill(grad_in, grad_in + g.in_size(), T{0});
    const size_t chunk = chunk_pixels(g, sizeof(T));
    T* col = scratch<T>(0, kk * chunk);
    T* gout_t = scratch<T>(2, co * chunk);
    // chunks run in order; the GEMMs inside are parallel over disjoint outputs
    for (size_t p0 = 0; p0 < p; p0 += chunk) {
        const size_t cols = std::min(chunk, p - p0);
        for (size_t c = 0; c < co; ++c)
            for (size_t i = 0; i < cols; ++i) gout_t[c * cols + i] = grad_out[(p0 + i) * co + c];
        im2col_chunk(g, in, p0, cols, col);
        // wide outputs vectorize along channels; narrow ones along pixels
        if (co >= 32) {
            gemm_nn(kk, co, cols, col, grad_out + p0 * co, grad_w, true);
        } else {
            gemm_nt(kk, co, cols, col, gout_t, grad_w, true);
        }
        if (grad_in != nullptr) {
            gemm_nn(kk, cols, co, w, gout_t, col, false);
            col2im_chunk(g, col, p0, cols, grad_in);
        }
    }
}

template <typename T>
void maxpool_forward(const PoolGeometry& g, const T* in, T* out, std::uint32_t* indices) {
    const size_t c = g.channels;
#pragma omp parallel for schedule(static) if (g.out_size() * 4 > kParallelWork)
    for (ptrdiff_t oy = 0; oy < static_cast<ptrdiff_t>(g.out_h); ++oy) {
        for (size_t ox = 0; ox < g.out_w; ++ox) {
            const size_t base = (static_cast<size_t>(oy) * g.out_w + ox) * c;
            const size_t y0 = static_cast<size_t>(oy) * g.stride, x0 = ox * g.stride;
            for (size_t ch = 0; ch < c; ++ch) {
                size_t best_idx = (y0 * g.in_w + x0) * c + ch;
                T best = in[best_idx];
                for (size_t dy = 0; dy < g.window; ++dy) {
                    for (size_t dx = 0; dx < g.window; ++dx) {
                        const size_t idx = ((y0 + dy) * g.in_w + x0 + dx) * c + ch;
                        if (in[idx] > best) {
                            best = in[idx];
                            best_idx = idx;
                        }
                    }
                }
                out[base + ch] = best;
                indices[base + ch] = static_cast<std::uint32_t>(best_idx);
            }
        }
    }
}

template <typename T>
void maxpool_backward(const PoolGeometry& g, const T* grad_out, const std::uint32_t* indices,
                      T* grad_in) {
    std::fill(grad_in, grad_in + g.in_size(), T{0});
    const size_t row = g.out_w * g.channels;
    // windows never overlap when stride >= window, so rows write disjoint cells
#pragma omp parallel for schedule(static) if (g.out_size() > kParallelWork && g.stride >= g.window)
    for (ptrdiff_t oy = 0; oy < static_cast<ptrdiff_t>(g.out_h); ++oy) {
        for (size_t i = static_cast<size_t>(oy) * row; i < (static_cast<size_t>(oy) + 1) * row; ++i) {
            grad_in[indices[i]] += grad_out[i];
        }
    }
}

#define DFQ_INSTANTIATE(T)                                                                       \
    template void gemm_nn<T>(size_t, size_t, size_t, const T*, const T*, T*, bool);              \
    template void gemm_nt<T>(size_t, size_t, size_t, const T*, const T*, T*, bool);              \
    template void gemm_tn_acc<T>(size_t, size_t, size_t, const T*, const T*, T*);                \
    template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);      \
    template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*,  \
                                     T*);                                                        \
    template void maxpool_forward<T>(const PoolGeometry&, const T*, T*, std::uint32_t*);         \
    template void maxpool_backward<T>(const PoolGeometry&, const T*, const std::uint32_t*, T*);

DFQ_INSTANTIATE(float)
DFQ_INSTANTIATE(double)

#undef DFQ_INSTANTIATE

}  // namespace dfq::kernels
