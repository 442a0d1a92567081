#pragma once

// Overlapped tile decomposition and seam-free stitching. Tiles are laid out
// on a fixed stride with the last row/column shifted to abut the image edge.
// In each overlap band between two neighbours, both tiles discard a margin
// (12 px for the nominal 32 px overlap) and the remaining band is averaged.
// At image borders the outermost tile keeps every pixel.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "recongen/tensor.hpp"

namespace recongen {

constexpr int kDefaultTileSize = 256;
constexpr int kDefaultTileOverlap = 32;
constexpr int kDiscardMargin = 12;

// One tile position along a single axis plus its kept / averaged intervals:
//   [keep_lo, avg_lo_end)      averaged with the left neighbour
//   [avg_lo_end, avg_hi_start) exclusive to this tile
//   [avg_hi_start, keep_hi)    averaged with the right neighbour
struct AxisCut {
    int origin = 0;
    int extent = 0;
    int keep_lo = 0;
    int keep_hi = 0;
    int avg_lo_end = 0;
    int avg_hi_start = 0;

    // Stitch weight contributed by this tile at an absolute axis position.
    double weight(int pos) const {
        if (pos < keep_lo || pos >= keep_hi) return 0.0;
        if (pos < avg_lo_end || pos >= avg_hi_start) return 0.5;
        return 1.0;
    }
};

struct TileLayout {
    int image_h = 0;
    int image_w = 0;
    int tile = 0;
    int overlap = 0;
    std::vector<AxisCut> ys;  // rows
    std::vector<AxisCut> xs;  // columns

    int rows() const { return static_cast<int>(ys.size()); }
    int cols() const { return static_cast<int>(xs.size()); }
    int count() const { return rows() * cols(); }
    const AxisCut& y(int idx) const { return ys[static_cast<size_t>(idx / cols())]; }
    const AxisCut& x(int idx) const { return xs[static_cast<size_t>(idx % cols())]; }
};

namespace detail {

inline std::vector<int> axis_origins(int length, int tile, int overlap) {
    int stride = tile - overlap;
    std::vector<int> origins{0};
    while (origins.back() + tile < length) {
        origins.push_back(std::min(origins.back() + stride, length - tile));
    }
    // A near-duplicate penultimate origin would put three tiles over one
    // point; drop it and let the clamped margins absorb the short overlap.
    size_t n = origins.size();
    if (n >= 3 && origins[n - 1] - origins[n - 2] < overlap) {
        origins.erase(origins.begin() + static_cast<std::ptrdiff_t>(n - 2));
    }
    return origins;
}

inline std::vector<AxisCut> plan_axis(int length, int tile, int overlap) {
    std::vector<AxisCut> cuts;
    if (length <= tile) {
        cuts.push_back({0, length, 0, length, 0, length});
        return cuts;
    }
    std::vector<int> origins = axis_origins(length, tile, overlap);
    size_t n = origins.size();
    cuts.resize(n);
    for (size_t i = 0; i < n; ++i) {
        cuts[i].origin = origins[i];
        cuts[i].extent = tile;
    }
    cuts.front().keep_lo = 0;
    cuts.back().keep_hi = length;
    for (size_t i = 0; i + 1 < n; ++i) {
        int ov = origins[i] + tile - origins[i + 1];
        int d = std::min(kDiscardMargin, ov / 2);
        int a = ov - 2 * d;
        cuts[i].keep_hi = origins[i + 1] + d + a;
        cuts[i + 1].keep_lo = origins[i + 1] + d;
    }
    for (size_t i = 0; i < n; ++i) {
        cuts[i].avg_lo_end = (i == 0) ? cuts[i].keep_lo : cuts[i - 1].keep_hi;
        cuts[i].avg_hi_start = (i + 1 == n) ? cuts[i].keep_hi : cuts[i + 1].keep_lo;
    }
    return cuts;
}

}  // namespace detail

inline TileLayout plan_tiles(int height, int width, int tile = kDefaultTileSize,
                             int overlap = kDefaultTileOverlap) {
    if (height < 1 || width < 1) throw std::invalid_argument("plan_tiles: empty image");
    if (tile < 1) throw std::invalid_argument("plan_tiles: tile size must be positive");
    if (overlap < 0 || overlap >= tile) throw std::invalid_argument("plan_tiles: need 0 <= overlap < tile");
    TileLayout layout;
    layout.image_h = height;
    layout.image_w = width;
    layout.tile = tile;
    layout.overlap = overlap;
    if (height < tile || width < tile) {
        // Undersized in either dimension: process the image whole.
        layout.ys.push_back({0, height, 0, height, 0, height});
        layout.xs.push_back({0, width, 0, width, 0, width});
        return layout;
    }
    layout.ys = detail::plan_axis(height, tile, overlap);
    layout.xs = detail::plan_axis(width, tile, overlap);
    return layout;
}

inline Tensor cut_tile(const Tensor& image, const TileLayout& layout, int idx) {
    const AxisCut& cy = layout.y(idx);
    const AxisCut& cx = layout.x(idx);
    Tensor out(cy.extent, cx.extent, image.channels());
    for (int y = 0; y < cy.extent; ++y)
        for (int x = 0; x < cx.extent; ++x)
            for (int c = 0; c < image.channels(); ++c)
                out.at(y, x, c) = image.at(cy.origin + y, cx.origin + x, c);
    return out;
}

inline double stitch_weight(const TileLayout& layout, int idx, int y, int x) {
    return layout.y(idx).weight(y) * layout.x(idx).weight(x);
}

// Reassemble per-tile results. Averaged bands combine their 2 (or 4, at band
// crossings) contributors with balanced pairwise sums, so stitching tiles cut
// from one image reproduces it bit-exactly.
inline Tensor stitch(const std::vector<Tensor>& tiles, const TileLayout& layout) {
    if (static_cast<int>(tiles.size()) != layout.count()) {
        throw std::invalid_argument("stitch: tile count does not match layout");
    }
    int channels = tiles.empty() ? 0 : tiles.front().channels();
    for (int i = 0; i < layout.count(); ++i) {
        if (tiles[static_cast<size_t>(i)].height() != layout.y(i).extent ||
            tiles[static_cast<size_t>(i)].width() != layout.x(i).extent ||
            tiles[static_cast<size_t>(i)].channels() != channels) {
            throw std::invalid_argument("stitch: tile " + std::to_string(i) + " has wrong shape");
        }
    }
    size_t plane = static_cast<size_t>(layout.image_h) * layout.image_w * channels;
    std::vector<double> slots(plane * 4, 0.0);
    std::vector<uint8_t> counts(plane, 0);
    Tensor out(layout.image_h, layout.image_w, channels);

    for (int i = 0; i < layout.count(); ++i) {
        const AxisCut& cy = layout.y(i);
        const AxisCut& cx = layout.x(i);
        const Tensor& t = tiles[static_cast<size_t>(i)];
        for (int y = cy.keep_lo; y < cy.keep_hi; ++y) {
            for (int x = cx.keep_lo; x < cx.keep_hi; ++x) {
                for (int c = 0; c < channels; ++c) {
                    size_t p = (static_cast<size_t>(y) * layout.image_w + x) * channels + c;
                    uint8_t n = counts[p]++;
                    if (n >= 4) throw std::logic_error("stitch: more than 4 contributors");
                    slots[p * 4 + n] = t.at(y - cy.origin, x - cx.origin, c);
                }
            }
        }
    }

    for (size_t p = 0; p < plane; ++p) {
        const double* s = &slots[p * 4];
        switch (counts[p]) {
            case 1: out[p] = s[0]; break;
            case 2: out[p] = (s[0] + s[1]) / 2.0; break;
            case 4: out[p] = ((s[0] + s[1]) + (s[2] + s[3])) / 4.0; break;
            default:
                throw std::logic_error("stitch: pixel covered " + std::to_string(counts[p]) +
                                       " times; kept regions must tile the image");
        }
    }
    return out;
}

}  // namespace recongen
