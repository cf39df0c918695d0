#include "conv_kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <vector>

namespace uar::ad::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::vector<double>& scratch(std::size_t n) {
    thread_local std::vector<double> buffer;
    if (buffer.size() < n) buffer.resize(n);
    return buffer;
}

// Output columns [lo, hi) whose input column ox*s + kx - p lies inside [0, w).
std::pair<std::size_t, std::size_t> valid_range(std::size_t wo, std::size_t s, std::size_t kx, std::ptrdiff_t p,
                                                std::ptrdiff_t w) {
    const auto off = static_cast<std::ptrdiff_t>(kx) - p;
    const auto ss = static_cast<std::ptrdiff_t>(s);
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + ss - 1) / ss;
    std::ptrdiff_t hi = w - off <= 0 ? 0 : (w - off + ss - 1) / ss;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(wo));
    lo = std::min(lo, hi);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// cols[(c*k + ky)*k + kx][oy*Wo + ox] = x[c][oy*s + ky - p][ox*s + kx - p]
// Rows [oy0, oy1) of the output only; cols then has (oy1 - oy0) * Wo columns.
void im2col(const ConvShape& cs, const double* x, double* cols, std::size_t oy0, std::size_t oy1) {
    const std::size_t k = cs.kernel, s = cs.stride;
    const auto p = static_cast<std::ptrdiff_t>(cs.padding);
    const std::size_t ho = oy1 - oy0, wo = cs.out_width();
    const auto h = static_cast<std::ptrdiff_t>(cs.height), w = static_cast<std::ptrdiff_t>(cs.width);
    for (std::size_t c = 0; c < cs.in_channels; ++c) {
        const double* xc = x + c * cs.height * cs.width;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* row = cols + ((c * k + ky) * k + kx) * ho * wo;
                const auto [lo, hi] = valid_range(wo, s, kx, p, w);
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - p;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    double* dst = row + oy * wo;
                    const auto iy = static_cast<std::ptrdiff_t>((oy0 + oy) * s + ky) - p;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + wo, 0.0);
                        continue;
                    }
                    const double* src = xc + iy * w + off;
                    std::fill(dst, dst + lo, 0.0);
                    if (s == 1) {
                        std::copy(src + lo, src + hi, dst + lo);
                    } else {
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * s];
                    }
                    std::fill(dst + hi, dst + wo, 0.0);
                }
            }
        }
    }
}

// Accumulates rows [oy0, oy1) of the column buffer into x.
void col2im(const ConvShape& cs, const double* cols, double* x, std::size_t oy0, std::size_t oy1) {
    const std::size_t k = cs.kernel, s = cs.stride;
    const auto p = static_cast<std::ptrdiff_t>(cs.padding);
    const std::size_t ho = oy1 - oy0, wo = cs.out_width();
    const auto h = static_cast<std::ptrdiff_t>(cs.height), w = static_cast<std::ptrdiff_t>(cs.width);
    for (std::size_t c = 0; c < cs.in_channels; ++c) {
        double* xc = x + c * cs.height * cs.width;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* row = cols + ((c * k + ky) * k + kx) * ho * wo;
                const auto [lo, hi] = valid_range(wo, s, kx, p, w);
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - p;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>((oy0 + oy) * s + ky) - p;
                    if (iy < 0 || iy >= h) continue;
                    const double* src = row + oy * wo;
                    double* dst = xc + iy * w + off;
                    if (s == 1) {
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
                    } else {
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * s] += src[ox];
                    }
                }
            }
        }
    }
}

// Direct stride-1 kernels, used when there are too few output channels for
// the column buffer to pay off.
constexpr std::size_t kDirectMaxOut = 2;

bool use_direct(const ConvShape& cs) { return cs.stride == 1 && cs.out_channels <= kDirectMaxOut; }

template <class RowFn>
void for_each_tap_row(const ConvShape& cs, RowFn fn) {
    const std::size_t k = cs.kernel;
    const auto p = static_cast<std::ptrdiff_t>(cs.padding);
    const std::size_t ho = cs.out_height(), wo = cs.out_width();
    const auto h = static_cast<std::ptrdiff_t>(cs.height), w = static_cast<std::ptrdiff_t>(cs.width);
    for (std::size_t o = 0; o < cs.out_channels; ++o) {
        for (std::size_t c = 0; c < cs.in_channels; ++c) {
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const auto [lo, hi] = valid_range(wo, 1, kx, p, w);
                    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - p;
                    const std::size_t widx = ((o * cs.in_channels + c) * k + ky) * k + kx;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - p;
                        if (iy < 0 || iy >= h) continue;
                        // (weight index, output offset, input offset of column 0, valid columns)
                        fn(widx, o * ho * wo + oy * wo, static_cast<std::ptrdiff_t>(c * cs.height * cs.width) + iy * w + off,
                           lo, hi);
                    }
                }
            }
        }
    }
}

void direct_forward(const ConvShape& cs, const double* input, const double* weights, double* out) {
    std::fill(out, out + cs.out_channels * cs.out_height() * cs.out_width(), 0.0);
    for_each_tap_row(cs, [&](std::size_t widx, std::size_t oofs, std::ptrdiff_t iofs, std::size_t lo, std::size_t hi) {
        const double wv = weights[widx];
        double* dst = out + oofs;
        const double* src = input + iofs;
        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += wv * src[ox];
    });
}

void direct_input_grad(const ConvShape& cs, const double* grad_out, const double* weights, double* grad_in) {
    std::fill(grad_in, grad_in + cs.in_channels * cs.height * cs.width, 0.0);
    for_each_tap_row(cs, [&](std::size_t widx, std::size_t oofs, std::ptrdiff_t iofs, std::size_t lo, std::size_t hi) {
        const double wv = weights[widx];
        const double* src = grad_out + oofs;
        double* dst = grad_in + iofs;
        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += wv * src[ox];
    });
}

void direct_weight_grad(const ConvShape& cs, const double* input, const double* grad_out, double* grad_w) {
    std::fill(grad_w, grad_w + cs.out_channels * cs.in_channels * cs.kernel * cs.kernel, 0.0);
    for_each_tap_row(cs, [&](std::size_t widx, std::size_t oofs, std::ptrdiff_t iofs, std::size_t lo, std::size_t hi) {
        const double* g = grad_out + oofs;
        const double* src = input + iofs;
        double acc = 0.0;
        for (std::size_t ox = lo; ox < hi; ++ox) acc += g[ox] * src[ox];
        grad_w[widx] += acc;
    });
}

// Output rows per tile, sized so one column tile stays near 512 KiB.
std::size_t tile_rows(const ConvShape& cs) {
    constexpr std::size_t kBudget = 64 * 1024;  // doubles
    const std::size_t per_row = cs.in_channels * cs.kernel * cs.kernel * cs.out_width();
    return std::clamp<std::size_t>(kBudget / std::max<std::size_t>(per_row, 1), 1, cs.out_height());
}

void gemm_forward(const ConvShape& cs, const double* input, const double* weights, double* out) {
    const auto kk = static_cast<Eigen::Index>(cs.in_channels * cs.kernel * cs.kernel);
    const std::size_t ho = cs.out_height(), wo = cs.out_width(), hw = ho * wo;
    const auto co = static_cast<Eigen::Index>(cs.out_channels);
    const std::size_t rows = tile_rows(cs);
    auto& cols = scratch(static_cast<std::size_t>(kk) * rows * wo);
    const ConstMap w(weights, co, kk);
    for (std::size_t oy0 = 0; oy0 < ho; oy0 += rows) {
        const std::size_t oy1 = std::min(ho, oy0 + rows);
        const auto n = static_cast<Eigen::Index>((oy1 - oy0) * wo);
        im2col(cs, input, cols.data(), oy0, oy1);
        Eigen::Map<RowMat, 0, Eigen::OuterStride<>> result(out + oy0 * wo, co, n,
                                                          Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
        result.noalias() = w * ConstMap(cols.data(), kk, n);
    }
}

}  // namespace

void conv_forward(const ConvShape& cs, const double* input, const double* weights, const double* bias,
                  double* out) {
    if (use_direct(cs)) {
        direct_forward(cs, input, weights, out);
    } else {
        gemm_forward(cs, input, weights, out);
    }
    if (bias) {
        const std::size_t hw = cs.out_height() * cs.out_width();
        for (std::size_t c = 0; c < cs.out_channels; ++c) {
            double* row = out + c * hw;
            for (std::size_t i = 0; i < hw; ++i) row[i] += bias[c];
        }
    }
}

void conv_input_grad(const ConvShape& cs, const double* grad_out, const double* weights, double* grad_in) {
    const auto kk = static_cast<Eigen::Index>(cs.in_channels * cs.kernel * cs.kernel);
    const std::size_t ho = cs.out_height(), wo = cs.out_width(), hw = ho * wo;
    const auto co = static_cast<Eigen::Index>(cs.out_channels);
    if (use_direct(cs)) return direct_input_grad(cs, grad_out, weights, grad_in);
    const std::size_t rows = tile_rows(cs);
    auto& cols = scratch(static_cast<std::size_t>(kk) * rows * wo);
    std::fill(grad_in, grad_in + cs.in_channels * cs.height * cs.width, 0.0);
    const ConstMap w(weights, co, kk);
    for (std::size_t oy0 = 0; oy0 < ho; oy0 += rows) {
        const std::size_t oy1 = std::min(ho, oy0 + rows);
        const auto n = static_cast<Eigen::Index>((oy1 - oy0) * wo);
        Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> g(grad_out + oy0 * wo, co, n,
                                                           Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
        MutMap dcols(cols.data(), kk, n);
        dcols.noalias() = w.transpose() * g;
        col2im(cs, cols.data(), grad_in, oy0, oy1);
    }
}

void conv_weight_grad(const ConvShape& cs, const double* input, const double* grad_out, double* grad_w) {
    const auto kk = static_cast<Eigen::Index>(cs.in_channels * cs.kernel * cs.kernel);
    const std::size_t ho = cs.out_height(), wo = cs.out_width(), hw = ho * wo;
    const auto co = static_cast<Eigen::Index>(cs.out_channels);
    if (use_direct(cs)) return direct_weight_grad(cs, input, grad_out, grad_w);
    const std::size_t rows = tile_rows(cs);
    auto& cols = scratch(static_cast<std::size_t>(kk) * rows * wo);
    MutMap dw(grad_w, co, kk);
    dw.setZero();
    for (std::size_t oy0 = 0; oy0 < ho; oy0 += rows) {
        const std::size_t oy1 = std::min(ho, oy0 + rows);
        const auto n = static_cast<Eigen::Index>((oy1 - oy0) * wo);
        im2col(cs, input, cols.data(), oy0, oy1);
        Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> g(grad_out + oy0 * wo, co, n,
                                                           Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
        dw.noalias() += g * ConstMap(cols.data(), kk, n).transpose();
    }
}

}  // namespace uar::ad::kernels
