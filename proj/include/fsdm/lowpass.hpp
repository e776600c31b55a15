#pragma once

#include <algorithm>
#include <stdexcept>

#include "fsdm/tensor.hpp"

namespace fsdm {

namespace detail {

// Block boundaries along one axis of the given extent. A factor >= extent
// collapses the axis to a single block (global mean, no padding influence);
// otherwise the extent is padded up to a multiple of n by edge replication,
// i.e. out-of-range coordinates clamp to extent-1.
struct axis_blocks {
    int extent;
    int block;   // block length along this axis
    int count;   // number of blocks

    axis_blocks(int ext, int n)
        : extent(ext), block(n >= ext ? ext : n), count((ext + (n >= ext ? ext : n) - 1) / (n >= ext ? ext : n)) {}

    int index_of(int coord) const { return coord / block; }
};

}  // namespace detail

/// Low-pass projection: block-average pooling with factor n followed by
/// constant upsampling back to the input shape. Linear and idempotent.
/// Rank 1 tensors pool over length-n runs, rank 2 over n x n blocks, rank 3
/// per channel over the trailing two dims.
inline Tensor low_pass(const Tensor& x, int n) {
    if (n < 1) throw std::invalid_argument("low_pass: factor N must be >= 1");
    if (n == 1) return x;

    const int rank = x.rank();
    if (rank < 1 || rank > 3) throw std::invalid_argument("low_pass: rank must be 1, 2, or 3");

    if (rank == 1) {
        const int len = x.shape[0];
        detail::axis_blocks ax(len, n);
        std::vector<double> means(ax.count, 0.0);
        for (int b = 0; b < ax.count; ++b) {
            double acc = 0.0;
            for (int j = 0; j < ax.block; ++j) {
                int src = std::min(b * ax.block + j, len - 1);
                acc += x[src];
            }
            means[b] = acc / ax.block;
        }
        Tensor out = Tensor::zeros(x.shape);
        for (int i = 0; i < len; ++i) out[i] = means[ax.index_of(i)];
        return out;
    }

    const int channels = rank == 3 ? x.shape[0] : 1;
    const int h = rank == 3 ? x.shape[1] : x.shape[0];
    const int w = rank == 3 ? x.shape[2] : x.shape[1];
    detail::axis_blocks ah(h, n), aw(w, n);

    Tensor out = Tensor::zeros(x.shape);
    std::vector<double> means(static_cast<std::size_t>(ah.count) * aw.count);
    for (int c = 0; c < channels; ++c) {
        const double* src = x.data.data() + static_cast<std::size_t>(c) * h * w;
        for (int bh = 0; bh < ah.count; ++bh) {
            for (int bw = 0; bw < aw.count; ++bw) {
                double acc = 0.0;
                for (int i = 0; i < ah.block; ++i) {
                    int sh = std::min(bh * ah.block + i, h - 1);
                    for (int j = 0; j < aw.block; ++j) {
                        int sw = std::min(bw * aw.block + j, w - 1);
                        acc += src[static_cast<std::size_t>(sh) * w + sw];
                    }
                }
                means[static_cast<std::size_t>(bh) * aw.count + bw] = acc / (ah.block * aw.block);
            }
        }
        double* dst = out.data.data() + static_cast<std::size_t>(c) * h * w;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                dst[static_cast<std::size_t>(i) * w + j] =
                    means[static_cast<std::size_t>(ah.index_of(i)) * aw.count + aw.index_of(j)];
    }
    return out;
}

}  // namespace fsdm
