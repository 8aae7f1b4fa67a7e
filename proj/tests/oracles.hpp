// Independent ground truth for the test suites: naive loops in double, written
// from the definitions without sharing code with the library.
#ifndef DFQ_TESTS_ORACLES_HPP
#define DFQ_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "dfq/metrics.hpp"
#include "dfq/random.hpp"

namespace oracle {

struct Image {
    std::size_t h = 0, w = 0, c = 0;
    std::vector<double> v;  // h * w * c, row-major
    double at(std::size_t y, std::size_t x, std::size_t k) const { return v[(y * w + x) * c + k]; }
};

// Same: output H x W, zero padding (k-1)/2 before, the rest after.
// Valid: output (H-k+1) x (W-k+1).
inline Image conv2d(const Image& in, const std::vector<double>& w, const std::vector<double>& bias, std::size_t k,
                    std::size_t cout, bool same) {
    Image out;
    out.c = cout;
    out.h = same ? in.h : in.h - k + 1;
    out.w = same ? in.w : in.w - k + 1;
    out.v.assign(out.h * out.w * cout, 0.0);
    const long off = same ? static_cast<long>((k - 1) / 2) : 0;
    for (std::size_t y = 0; y < out.h; ++y)
        for (std::size_t x = 0; x < out.w; ++x)
            for (std::size_t o = 0; o < cout; ++o) {
                double s = bias[o];
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const long iy = static_cast<long>(y + dy) - off, ix = static_cast<long>(x + dx) - off;
                        if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.h) || ix >= static_cast<long>(in.w)) continue;
                        for (std::size_t i = 0; i < in.c; ++i) {
                            s += in.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), i) *
                                 w[((dy * k + dx) * in.c + i) * cout + o];
                        }
                    }
                out.v[(y * out.w + x) * cout + o] = s;
            }
    return out;
}

// 2x2 stride 2, trailing odd row/column dropped; the first maximum in
// row-major window order wins ties.
inline Image maxpool(const Image& in, std::vector<std::size_t>* argmax = nullptr) {
    Image out;
    out.h = in.h / 2;
    out.w = in.w / 2;
    out.c = in.c;
    out.v.assign(out.h * out.w * out.c, 0.0);
    if (argmax) argmax->assign(out.v.size(), 0);
    for (std::size_t y = 0; y < out.h; ++y)
        for (std::size_t x = 0; x < out.w; ++x)
            for (std::size_t k = 0; k < in.c; ++k) {
                double best = -INFINITY;
                std::size_t where = 0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = ((2 * y + dy) * in.w + 2 * x + dx) * in.c + k;
                        if (in.v[idx] > best) {
                            best = in.v[idx];
                            where = idx;
                        }
                    }
                const std::size_t o = (y * out.w + x) * out.c + k;
                out.v[o] = best;
                if (argmax) (*argmax)[o] = where;
            }
    return out;
}

inline std::vector<double> dense(const std::vector<double>& x, const std::vector<double>& w,
                                 const std::vector<double>& b, std::size_t nout) {
    std::vector<double> y(b.begin(), b.end());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < nout; ++j) y[j] += x[i] * w[i * nout + j];
    return y;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    std::vector<double> p(z.size());
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
    for (double& v : p) v /= s;
    return p;
}

inline double cross_entropy(const std::vector<double>& p, const std::vector<double>& t) {
    double l = 0;
    for (std::size_t i = 0; i < p.size(); ++i) l -= t[i] * std::log(p[i] + 1e-7);
    return l;
}

// Central difference of f with respect to x[i], restoring x[i] afterwards.
inline double central_diff(std::vector<double>& x, std::size_t i, const std::function<double()>& f, double h = 1e-5) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    return (up - down) / (2.0 * h);
}

inline double rel_error(double analytic, double numeric, double floor = 1e-8) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline std::vector<double> uniform(dfq::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Distinct values with gaps >= spacing, shuffled; keeps max-pool away from ties
// so finite differences never cross a switch point.
inline std::vector<double> separated(dfq::Rng& rng, std::size_t n, double spacing = 1e-2) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (static_cast<double>(i) - static_cast<double>(n) / 2.0) * spacing;
    for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    return v;
}

// Metrics straight from (truth, pred) pairs, with no confusion matrix in between.
struct Recount {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Recount recount(const std::vector<std::size_t>& truths, const std::vector<std::size_t>& preds, std::size_t c) {
    Recount r;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const bool t = truths[i] == c, p = preds[i] == c;
        if (t && p) ++r.tp;
        else if (!t && p) ++r.fp;
        else if (t && !p) ++r.fn;
        else ++r.tn;
    }
    return r;
}

inline double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

}  // namespace oracle

#endif  // DFQ_TESTS_ORACLES_HPP
