#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "orient/errors.hpp"
#include "orient/volume.hpp"

// Minimal NIfTI-1 single-file (.nii) reader/writer. Uncompressed only,
// dim[0] in {2,3}, datatypes uint8/int16/int32/float32/float64. Voxels are
// decoded to float32 with scl_slope/scl_inter applied; the raw header is
// kept (little-endian normalized) so unhandled fields such as qform/sform
// survive a read-modify-write cycle untouched.

namespace orient {
namespace nifti_detail {

// Byte offsets of the NIfTI-1 header fields we touch.
constexpr int kDimOffset = 40;       // short dim[8]
constexpr int kDatatypeOffset = 70;  // short
constexpr int kBitpixOffset = 72;    // short
constexpr int kPixdimOffset = 76;    // float pixdim[8]
constexpr int kVoxOffsetOffset = 108; // float
constexpr int kSclSlopeOffset = 112; // float
constexpr int kSclInterOffset = 116; // float
constexpr int kDescripOffset = 148;  // char[80]
constexpr int kMagicOffset = 344;    // char[4]
constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;

inline void swap_bytes(std::uint8_t* p, int width) {
    std::reverse(p, p + width);
}

// Swaps every multi-byte field of a NIfTI-1 header in place.
inline void swap_header_fields(std::uint8_t* h) {
    auto swap_at = [&](int offset, int width, int count) {
        for (int i = 0; i < count; ++i) swap_bytes(h + offset + i * width, width);
    };
    swap_at(0, 4, 1);    // sizeof_hdr
    swap_at(32, 4, 1);   // extents
    swap_at(36, 2, 1);   // session_error
    swap_at(40, 2, 8);   // dim
    swap_at(56, 4, 3);   // intent_p1..p3
    swap_at(68, 2, 1);   // intent_code
    swap_at(70, 2, 1);   // datatype
    swap_at(72, 2, 1);   // bitpix
    swap_at(74, 2, 1);   // slice_start
    swap_at(76, 4, 8);   // pixdim
    swap_at(108, 4, 1);  // vox_offset
    swap_at(112, 4, 1);  // scl_slope
    swap_at(116, 4, 1);  // scl_inter
    swap_at(120, 2, 1);  // slice_end
    swap_at(124, 4, 4);  // cal_max, cal_min, slice_duration, toffset
    swap_at(140, 4, 2);  // glmax, glmin
    swap_at(252, 2, 2);  // qform_code, sform_code
    swap_at(256, 4, 6);  // quatern_b..d, qoffset_x..z
    swap_at(280, 4, 12); // srow_x, srow_y, srow_z
}

template <typename T>
T load_le(const std::uint8_t* p) {
    T x;
    std::memcpy(&x, p, sizeof(T));
    return x; // little-endian host assumed (checked at read time below)
}

template <typename T>
void store_le(std::uint8_t* p, T x) {
    std::memcpy(p, &x, sizeof(T));
}

inline int bitpix_for(int datatype) {
    switch (datatype) {
        case 2: return 8;   // uint8
        case 4: return 16;  // int16
        case 8: return 32;  // int32
        case 16: return 32; // float32
        case 64: return 64; // float64
    }
    return 0;
}

} // namespace nifti_detail

inline Volume read_nifti(const std::string& path) {
    namespace nd = nifti_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open NIfTI file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < nd::kHeaderSize)
        throw DataError("malformed NIfTI header: file shorter than 348 bytes: " + path);

    bool swapped = false;
    std::int32_t sizeof_hdr = nd::load_le<std::int32_t>(bytes.data());
    if (sizeof_hdr != 348) {
        std::uint8_t tmp[4];
        std::memcpy(tmp, bytes.data(), 4);
        nd::swap_bytes(tmp, 4);
        if (nd::load_le<std::int32_t>(tmp) != 348)
            throw DataError("malformed NIfTI header: sizeof_hdr is not 348 in either byte order: " + path);
        swapped = true;
        nd::swap_header_fields(bytes.data());
    }

    NiftiHeader hdr;
    std::memcpy(hdr.raw.data(), bytes.data(), nd::kHeaderSize);

    const std::uint8_t* h = hdr.raw.data();
    if (std::memcmp(h + nd::kMagicOffset, "n+1\0", 4) != 0)
        throw DataError("malformed NIfTI header: magic is not \"n+1\\0\" (single-file .nii expected): " + path);

    for (int i = 0; i < 8; ++i)
        hdr.dim[i] = nd::load_le<std::int16_t>(h + nd::kDimOffset + 2 * i);
    hdr.datatype = nd::load_le<std::int16_t>(h + nd::kDatatypeOffset);
    hdr.bitpix = nd::load_le<std::int16_t>(h + nd::kBitpixOffset);
    for (int i = 0; i < 8; ++i)
        hdr.pixdim[i] = nd::load_le<float>(h + nd::kPixdimOffset + 4 * i);
    hdr.vox_offset = nd::load_le<float>(h + nd::kVoxOffsetOffset);
    hdr.scl_slope = nd::load_le<float>(h + nd::kSclSlopeOffset);
    hdr.scl_inter = nd::load_le<float>(h + nd::kSclInterOffset);

    const int rank = hdr.dim[0];
    if (rank != 2 && rank != 3)
        throw DataError("unsupported NIfTI rank dim[0]=" + std::to_string(rank) +
                        " (only 2D and 3D volumes are handled): " + path);
    for (int i = 1; i <= rank; ++i)
        if (hdr.dim[i] < 1)
            throw DataError("malformed NIfTI header: dim[" + std::to_string(i) + "] < 1: " + path);

    const int elem_bits = nifti_detail::bitpix_for(hdr.datatype);
    if (elem_bits == 0)
        throw DataError("unsupported NIfTI datatype code " + std::to_string(hdr.datatype) + ": " + path);
    if (hdr.bitpix != elem_bits)
        throw DataError("malformed NIfTI header: bitpix " + std::to_string(hdr.bitpix) +
                        " inconsistent with datatype " + std::to_string(hdr.datatype) + ": " + path);

    const int sx = hdr.dim[1];
    const int sy = hdr.dim[2];
    const int sz = rank == 3 ? hdr.dim[3] : 1;

    const auto offset = static_cast<std::int64_t>(hdr.vox_offset);
    if (offset < static_cast<std::int64_t>(nd::kHeaderSize))
        throw DataError("malformed NIfTI header: vox_offset < 348: " + path);

    const std::size_t nvox = static_cast<std::size_t>(sx) * sy * sz;
    const std::size_t elem_size = static_cast<std::size_t>(elem_bits) / 8;
    if (bytes.size() < static_cast<std::size_t>(offset) + nvox * elem_size)
        throw DataError("truncated NIfTI file: voxel payload shorter than dim product requires: " + path);

    Volume vol(sx, sy, sz);
    vol.source_header = hdr;
    for (int i = 0; i < 3; ++i) {
        const float d = hdr.pixdim[i + 1];
        vol.spacing[i] = d > 0.0f ? d : 1.0f;
    }

    const std::uint8_t* src = bytes.data() + offset;
    const bool scaled = hdr.scl_slope != 0.0f;
    for (std::size_t i = 0; i < nvox; ++i) {
        std::uint8_t elem[8];
        std::memcpy(elem, src + i * elem_size, elem_size);
        if (swapped) nd::swap_bytes(elem, static_cast<int>(elem_size));
        float value = 0.0f;
        switch (hdr.datatype) {
            case 2: value = static_cast<float>(elem[0]); break;
            case 4: value = static_cast<float>(nd::load_le<std::int16_t>(elem)); break;
            case 8: value = static_cast<float>(nd::load_le<std::int32_t>(elem)); break;
            case 16: value = nd::load_le<float>(elem); break;
            case 64: value = static_cast<float>(nd::load_le<double>(elem)); break;
        }
        if (scaled) value = hdr.scl_slope * value + hdr.scl_inter;
        if (!std::isfinite(value))
            throw DataError("non-finite voxel value in NIfTI file: " + path);
        vol.data[i] = value;
    }
    return vol;
}

// Emits little-endian single-file NIfTI-1: 348-byte header, 4 pad bytes,
// float32 payload at offset 352. With a source header present all fields we
// do not own are copied through verbatim.
inline void write_nifti(const Volume& volume, const std::string& path) {
    namespace nd = nifti_detail;
    if (volume.sx < 1 || volume.sy < 1 || volume.sz < 1)
        throw ShapeError("write_nifti: volume extents must all be >= 1");
    if (volume.sx > 32767 || volume.sy > 32767 || volume.sz > 32767)
        throw ShapeError("write_nifti: extent exceeds NIfTI-1 int16 dim field");

    std::uint8_t h[nd::kHeaderSize];
    if (volume.source_header) {
        std::memcpy(h, volume.source_header->raw.data(), nd::kHeaderSize);
    } else {
        std::memset(h, 0, nd::kHeaderSize);
        h[38] = 'r'; // regular
        nd::store_le<float>(h + nd::kPixdimOffset, 1.0f);
    }

    nd::store_le<std::int32_t>(h + 0, 348);
    std::int16_t dim[8] = {3, static_cast<std::int16_t>(volume.sx),
                           static_cast<std::int16_t>(volume.sy),
                           static_cast<std::int16_t>(volume.sz), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i)
        nd::store_le<std::int16_t>(h + nd::kDimOffset + 2 * i, dim[i]);
    nd::store_le<std::int16_t>(h + nd::kDatatypeOffset, 16); // float32
    nd::store_le<std::int16_t>(h + nd::kBitpixOffset, 32);
    for (int i = 0; i < 3; ++i)
        nd::store_le<float>(h + nd::kPixdimOffset + 4 * (i + 1), volume.spacing[i]);
    nd::store_le<float>(h + nd::kVoxOffsetOffset, static_cast<float>(nd::kDataOffset));
    nd::store_le<float>(h + nd::kSclSlopeOffset, 1.0f);
    nd::store_le<float>(h + nd::kSclInterOffset, 0.0f);
    std::memcpy(h + nd::kMagicOffset, "n+1\0", 4);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(h), nd::kHeaderSize);
    const char pad[4] = {0, 0, 0, 0};
    out.write(pad, 4);
    out.write(reinterpret_cast<const char*>(volume.data.data()),
              static_cast<std::streamsize>(volume.data.size() * sizeof(float)));
    if (!out) throw DataError("I/O failure writing NIfTI file: " + path);
}

} // namespace orient
