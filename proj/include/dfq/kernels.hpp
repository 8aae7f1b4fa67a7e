#ifndef DFQ_KERNELS_HPP
#define DFQ_KERNELS_HPP

#include <cstddef>
#include <cstdint>

// Raw-pointer compute kernels behind the layer API. Two implementations share
// one set of signatures:
//
//   dfq::kernels             im2col + blocked GEMM, OpenMP-parallel
//   dfq::kernels::reference  direct nested loops, serial
//
// Both are instantiated for float and double. Parallel kernels split work only
// over disjoint output elements and keep a fixed summation order per element,
// so results do not depend on the thread count.
//
// Layouts are row-major: images H x W x C, conv weights k x k x Cin x Cout,
// dense weights Nin x Nout.

namespace dfq::kernels {

enum class Padding : std::uint8_t { Same = 0, Valid = 1 };

struct ConvGeometry {
    std::size_t in_h = 0, in_w = 0, in_c = 0;
    std::size_t kernel = 0, out_c = 0;
    Padding padding = Padding::Same;
    std::size_t out_h = 0, out_w = 0;
    std::size_t pad_top = 0, pad_left = 0;

    /// Throws ShapeError when a Valid kernel does not fit the input.
    static ConvGeometry make(std::size_t in_h, std::size_t in_w, std::size_t in_c,
                             std::size_t kernel, std::size_t out_c, Padding padding);

    std::size_t in_size() const { return in_h * in_w * in_c; }
    std::size_t out_size() const { return out_h * out_w * out_c; }
    std::size_t weight_size() const { return kernel * kernel * in_c * out_c; }
    std::size_t patch_size() const { return kernel * kernel * in_c; }
};

struct PoolGeometry {
    std::size_t in_h = 0, in_w = 0, channels = 0;
    std::size_t window = 2, stride = 2;
    std::size_t out_h = 0, out_w = 0;

    /// Floor semantics: a trailing odd row/column is dropped.
    static PoolGeometry make(std::size_t in_h, std::size_t in_w, std::size_t channels,
                             std::size_t window = 2, std::size_t stride = 2);

    std::size_t in_size() const { return in_h * in_w * channels; }
    std::size_t out_size() const { return out_h * out_w * channels; }
};

// out = conv(in, w) + bias
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out);

// Accumulates (+=) into grad_w and grad_b. grad_in is overwritten when non-null.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* grad_out, const T* in, const T* w,
                     T* grad_in, T* grad_w, T* grad_b);

template <typename T>
void maxpool_forward(const PoolGeometry& g, const T* in, T* out, std::uint32_t* indices);

// grad_in is overwritten.
template <typename T>
void maxpool_backward(const PoolGeometry& g, const T* grad_out, const std::uint32_t* indices,
                      T* grad_in);

// C[m x n] (+)= A[m x l] * B[l x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t l, const T* a, const T* b, T* c,
             bool accumulate);

// C[m x n] (+)= A[m x l] * B[n x l]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t l, const T* a, const T* b, T* c,
             bool accumulate);

// C[m x n] += A[l x m]^T * B[l x n]
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t l, const T* a, const T* b, T* c);

int max_threads();

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* bias, T* out);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* grad_out, const T* in, const T* w,
                     T* grad_in, T* grad_w, T* grad_b);

template <typename T>
void maxpool_forward(const PoolGeometry& g, const T* in, T* out, std::uint32_t* indices);

template <typename T>
void maxpool_backward(const PoolGeometry& g, const T* grad_out, const std::uint32_t* indices,
                      T* grad_in);

}  // namespace reference

}  // namespace dfq::kernels

#endif  // DFQ_KERNELS_HPP
