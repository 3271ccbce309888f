#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "orient/errors.hpp"

namespace orient {

// Parsed NIfTI-1 header. `raw` holds all 348 bytes normalized to little
// endian so qform/sform and other fields we never interpret can be copied
// through verbatim on write.
struct NiftiHeader {
    std::array<std::uint8_t, 348> raw{};
    std::array<int, 8> dim{};
    int datatype = 0;
    int bitpix = 0;
    std::array<float, 8> pixdim{};
    float vox_offset = 0.0f;
    float scl_slope = 0.0f;
    float scl_inter = 0.0f;
};

// 2D scalar image. x indexes display columns, y indexes display rows;
// storage is row-contiguous: data[y * sx + x].
struct Image2D {
    int sx = 0;
    int sy = 0;
    std::vector<float> data;

    Image2D() = default;
    Image2D(int width, int height)
        : sx(width), sy(height),
          data(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0f) {}

    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * sx + x]; }
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * sx + x]; }
    std::size_t size() const { return data.size(); }
};

// 3D voxel grid, float32, shape (sx, sy, sz) with x varying fastest in
// memory (the NIfTI layout); a z-slice is a contiguous sx*sy block.
struct Volume {
    int sx = 0;
    int sy = 0;
    int sz = 0;
    std::vector<float> data;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::optional<NiftiHeader> source_header;

    Volume() = default;
    Volume(int nx, int ny, int nz)
        : sx(nx), sy(ny), sz(nz),
          data(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
                   static_cast<std::size_t>(nz),
               0.0f) {}

    float& at(int x, int y, int z) {
        return data[(static_cast<std::size_t>(z) * sy + y) * sx + x];
    }
    float at(int x, int y, int z) const {
        return data[(static_cast<std::size_t>(z) * sy + y) * sx + x];
    }
    std::size_t size() const { return data.size(); }
};

} // namespace orient
