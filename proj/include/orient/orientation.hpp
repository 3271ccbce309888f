#pragma once

#include <array>
#include <cstring>
#include <string>
#include <utility>

#include "orient/errors.hpp"
#include "orient/volume.hpp"

namespace orient {

// The 8 in-plane orientation classes of a slice. Label 0 is the canonical
// ("initial") state; 1-3 keep the image shape, 4-7 exchange the x/y axes.
// Coordinate convention: x = display column = first volume axis, all index
// arithmetic 0-based.
using OrientationLabel = int;

constexpr int kNumOrientations = 8;

inline void check_label(OrientationLabel label) {
    if (label < 0 || label >= kNumOrientations)
        throw DataError("orientation label out of range [0,8): " + std::to_string(label));
}

inline const char* orientation_name(OrientationLabel label) {
    static const char* names[kNumOrientations] = {
        "initial state",
        "horizontal flip",
        "vertical flip",
        "rotate 180 deg",
        "flip along main diagonal",
        "rotate 90 deg clockwise",
        "rotate 270 deg clockwise",
        "flip along secondary diagonal",
    };
    check_label(label);
    return names[label];
}

inline bool swaps_axes(OrientationLabel label) {
    check_label(label);
    return label >= 4;
}

// Description of one orientation class as a coordinate bijection: output
// pixel (x, y) is copied from source pixel source_coord(x, y) of an
// (sx, sy)-sized source image.
struct GridTransform {
    OrientationLabel label = 0;

    explicit GridTransform(OrientationLabel l) : label(l) { check_label(l); }

    bool swaps_axes() const { return orient::swaps_axes(label); }

    std::pair<int, int> source_coord(int x, int y, int sx, int sy) const {
        switch (label) {
            case 0: return {x, y};
            case 1: return {sx - 1 - x, y};
            case 2: return {x, sy - 1 - y};
            case 3: return {sx - 1 - x, sy - 1 - y};
            case 4: return {y, x};
            case 5: return {y, sy - 1 - x};
            case 6: return {sx - 1 - y, x};
            case 7: return {sx - 1 - y, sy - 1 - x};
        }
        return {x, y}; // unreachable
    }
};

inline Image2D apply_orientation_2d(const Image2D& image, OrientationLabel label) {
    if (image.sx < 1 || image.sy < 1) throw ShapeError("apply_orientation_2d: empty image");
    const GridTransform t(label);
    const int osx = t.swaps_axes() ? image.sy : image.sx;
    const int osy = t.swaps_axes() ? image.sx : image.sy;
    Image2D out(osx, osy);
    for (int y = 0; y < osy; ++y) {
        for (int x = 0; x < osx; ++x) {
            const auto [px, py] = t.source_coord(x, y, image.sx, image.sy);
            out.at(x, y) = image.at(px, py);
        }
    }
    return out;
}

// Applies the transform slice-wise (z untouched); labels 4-7 swap the
// output's x/y extents. Metadata (spacing x/y, source header) follows.
inline Volume apply_orientation(const Volume& volume, OrientationLabel label) {
    if (volume.sx < 1 || volume.sy < 1 || volume.sz < 1)
        throw ShapeError("apply_orientation: volume must be 3D with all extents >= 1");
    const GridTransform t(label);
    const int osx = t.swaps_axes() ? volume.sy : volume.sx;
    const int osy = t.swaps_axes() ? volume.sx : volume.sy;
    Volume out(osx, osy, volume.sz);
    out.spacing = volume.spacing;
    if (t.swaps_axes()) std::swap(out.spacing[0], out.spacing[1]);
    out.source_header = volume.source_header;
    for (int z = 0; z < volume.sz; ++z) {
        for (int y = 0; y < osy; ++y) {
            for (int x = 0; x < osx; ++x) {
                const auto [px, py] = t.source_coord(x, y, volume.sx, volume.sy);
                out.at(x, y, z) = volume.at(px, py, z);
            }
        }
    }
    return out;
}

// Composition table: apply(apply(v, first), second) == apply(v, compose(first, second)).
// Derived from the coordinate maps above; the group laws are checked
// exhaustively in the test suite.
inline OrientationLabel compose(OrientationLabel first, OrientationLabel second) {
    check_label(first);
    check_label(second);
    static constexpr int table[8][8] = {
        {0, 1, 2, 3, 4, 5, 6, 7},
        {1, 0, 3, 2, 6, 7, 4, 5},
        {2, 3, 0, 1, 5, 4, 7, 6},
        {3, 2, 1, 0, 7, 6, 5, 4},
        {4, 5, 6, 7, 0, 1, 2, 3},
        {5, 4, 7, 6, 2, 3, 0, 1},
        {6, 7, 4, 5, 1, 0, 3, 2},
        {7, 6, 5, 4, 3, 2, 1, 0},
    };
    return table[first][second];
}

// The two rotations are each other's inverse; every other class is an
// involution.
inline OrientationLabel inverse(OrientationLabel label) {
    check_label(label);
    static constexpr int inv[8] = {0, 1, 2, 3, 4, 6, 5, 7};
    return inv[label];
}

struct Shape3 {
    int sx = 0, sy = 0, sz = 0;
    bool operator==(const Shape3&) const = default;
};

inline Shape3 output_shape(Shape3 shape, OrientationLabel label) {
    if (swaps_axes(label)) return {shape.sy, shape.sx, shape.sz};
    return shape;
}

} // namespace orient
