#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace fapm {

/// Half-sample symmetric reflection (edge sample repeated: c b a | a b c),
/// folded as many times as needed for offsets beyond the extent.
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

/// Bilinear resampling of a single-channel row-major grid using pixel-centre
/// alignment (align_corners = false).
template <typename Out, typename In>
std::vector<Out> resize_bilinear(std::span<const In> src, std::size_t src_h, std::size_t src_w, std::size_t dst_h,
                                 std::size_t dst_w) {
    std::vector<Out> dst(dst_h * dst_w);
    if (src_h == dst_h && src_w == dst_w) {
        std::transform(src.begin(), src.end(), dst.begin(), [](In v) { return static_cast<Out>(v); });
        return dst;
    }
    const double scale_y = static_cast<double>(src_h) / static_cast<double>(dst_h);
    const double scale_x = static_cast<double>(src_w) / static_cast<double>(dst_w);
    for (std::size_t y = 0; y < dst_h; ++y) {
        const double sy = std::max(0.0, (static_cast<double>(y) + 0.5) * scale_y - 0.5);
        const auto y0 = std::min(static_cast<std::size_t>(sy), src_h - 1);
        const auto y1 = std::min(y0 + 1, src_h - 1);
        const double wy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < dst_w; ++x) {
            const double sx = std::max(0.0, (static_cast<double>(x) + 0.5) * scale_x - 0.5);
            const auto x0 = std::min(static_cast<std::size_t>(sx), src_w - 1);
            const auto x1 = std::min(x0 + 1, src_w - 1);
            const double wx = sx - static_cast<double>(x0);
            const double top = (1.0 - wx) * src[y0 * src_w + x0] + wx * src[y0 * src_w + x1];
            const double bottom = (1.0 - wx) * src[y1 * src_w + x0] + wx * src[y1 * src_w + x1];
            dst[y * dst_w + x] = static_cast<Out>((1.0 - wy) * top + wy * bottom);
        }
    }
    return dst;
}

}  // namespace fapm
