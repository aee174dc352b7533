// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <memory>

#include "hetseg/manifest.hpp"

namespace hetseg {
namespace {

#pragma pack(push, 1)
struct Nifti1Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1;
    float intent_p2;
    float intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max;
    float cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax;
    std::int32_t glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b;
    float quatern_c;
    float quatern_d;
    float qoffset_x;
    float qoffset_y;
    float qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348);

enum : std::int16_t {
    DT_UINT8 = 2,
    DT_INT16 = 4,
    DT_INT32 = 8,
    DT_FLOAT32 = 16,
    DT_FLOAT64 = 64,
    DT_INT8 = 256,
    DT_UINT16 = 512,
    DT_UINT32 = 768,
};

template <typename T>
T byteswap_value(T v) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

void swap_header(Nifti1Header& h) {
    h.sizeof_hdr = byteswap_value(h.sizeof_hdr);
    for (auto& d : h.dim) d = byteswap_value(d);
    for (auto& p : h.pixdim) p = byteswap_value(p);
    h.datatype = byteswap_value(h.datatype);
    h.bitpix = byteswap_value(h.bitpix);
    h.vox_offset = byteswap_value(h.vox_offset);
    h.scl_slope = byteswap_value(h.scl_slope);
    h.scl_inter = byteswap_value(h.scl_inter);
}

struct GzCloser {
    void operator()(gzFile f) const {
        if (f) gzclose(f);
    }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

void read_exact(gzFile f, void* dst, std::size_t n, const std::filesystem::path& path) {
    auto* out = static_cast<unsigned char*>(dst);
    while (n > 0) {
        const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
        const int got = gzread(f, out, chunk);
        if (got <= 0) throw DataError("truncated NIfTI file " + path.string());
        out += got;
        n -= static_cast<std::size_t>(got);
    }
}

std::size_t bytes_per_voxel(std::int16_t datatype) {
    switch (datatype) {
        case DT_UINT8:
        case DT_INT8: return 1;
        case DT_INT16:
        case DT_UINT16: return 2;
        case DT_INT32:
        case DT_UINT32:
        case DT_FLOAT32: return 4;
        case DT_FLOAT64: return 8;
        default: return 0;
    }
}

template <typename T>
void convert(const unsigned char* src, std::size_t n, bool swap, float* dst) {
    for (std::size_t i = 0; i < n; ++i) {
        T v;
        std::memcpy(&v, src + i * sizeof(T), sizeof(T));
        if (swap) v = byteswap_value(v);
        dst[i] = static_cast<float>(v);
    }
}

Nifti1Header make_header(const Shape3& shape, const Spacing3& spacing, std::int16_t datatype) {
    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(shape.x);
    h.dim[2] = static_cast<std::int16_t>(shape.y);
    h.dim[3] = static_cast<std::int16_t>(shape.z);
    for (int i = 4; i < 8; ++i) h.dim[i] = 1;
    h.datatype = datatype;
    h.bitpix = static_cast<std::int16_t>(8 * bytes_per_voxel(datatype));
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = static_cast<float>(spacing.x);
    h.pixdim[2] = static_cast<float>(spacing.y);
    h.pixdim[3] = static_cast<float>(spacing.z);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.xyzt_units = 2;  // mm
    h.sform_code = 1;
    h.srow_x[0] = h.pixdim[1];
    h.srow_y[1] = h.pixdim[2];
    h.srow_z[2] = h.pixdim[3];
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

void write_raw(const std::filesystem::path& path, const Nifti1Header& h, const void* data, std::size_t nbytes) {
    const bool gz = path.extension() == ".gz";
    const char extension[4] = {0, 0, 0, 0};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    GzHandle f(gzopen(path.c_str(), gz ? "wb6" : "wbT"));
    if (!f) throw DataError("cannot write " + path.string());
    auto put = [&](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        while (n > 0) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
            if (gzwrite(f.get(), bytes, chunk) != static_cast<int>(chunk)) {
                throw DataError("write failed for " + path.string());
            }
            bytes += chunk;
            n -= chunk;
        }
    };
    put(&h, sizeof(h));
    put(extension, sizeof(extension));
    put(data, nbytes);
    if (gzclose(f.release()) != Z_OK) throw DataError("close failed for " + path.string());
}

}  // namespace

NiftiVolume read_nifti(const std::filesystem::path& path) {
    GzHandle f(gzopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open NIfTI file " + path.string());

    Nifti1Header h{};
    read_exact(f.get(), &h, sizeof(h), path);
    bool swap = false;
    if (h.sizeof_hdr != 348) {
        swap_header(h);
        swap = true;
        if (h.sizeof_hdr != 348) throw DataError("not a NIfTI-1 file: " + path.string());
    }
    if (std::memcmp(h.magic, "n+1", 4) != 0 && std::memcmp(h.magic, "ni1", 4) != 0) {
        throw DataError("bad NIfTI magic in " + path.string());
    }
    if (h.dim[0] < 3 || h.dim[0] > 7) throw DataError("unsupported NIfTI rank in " + path.string());
    for (int i = 4; i <= h.dim[0]; ++i) {
        if (h.dim[i] > 1) throw DataError("only 3D volumes are supported: " + path.string());
    }
    const Shape3 shape{h.dim[1], h.dim[2], h.dim[3]};
    if (shape.x <= 0 || shape.y <= 0 || shape.z <= 0) throw DataError("empty NIfTI volume " + path.string());

    const std::size_t bpv = bytes_per_voxel(h.datatype);
    if (bpv == 0) throw DataError("unsupported NIfTI datatype " + std::to_string(h.datatype) + " in " + path.string());

    const auto offset = static_cast<long>(h.vox_offset);
    if (offset < 348) throw DataError("bad vox_offset in " + path.string());
    if (offset > 348) {
        std::vector<unsigned char> skip(static_cast<std::size_t>(offset - 348));
        read_exact(f.get(), skip.data(), skip.size(), path);
    }

    const auto n = static_cast<std::size_t>(shape.voxels());
    std::vector<unsigned char> raw(n * bpv);
    read_exact(f.get(), raw.data(), raw.size(), path);

    std::vector<float> values(n);
    switch (h.datatype) {
        case DT_UINT8: convert<std::uint8_t>(raw.data(), n, swap, values.data()); break;
        case DT_INT8: convert<std::int8_t>(raw.data(), n, swap, values.data()); break;
        case DT_INT16: convert<std::int16_t>(raw.data(), n, swap, values.data()); break;
        case DT_UINT16: convert<std::uint16_t>(raw.data(), n, swap, values.data()); break;
        case DT_INT32: convert<std::int32_t>(raw.data(), n, swap, values.data()); break;
        case DT_UINT32: convert<std::uint32_t>(raw.data(), n, swap, values.data()); break;
        case DT_FLOAT32: convert<float>(raw.data(), n, swap, values.data()); break;
        case DT_FLOAT64: convert<double>(raw.data(), n, swap, values.data()); break;
        default: break;
    }
    if (h.scl_slope != 0.0f && (h.scl_slope != 1.0f || h.scl_inter != 0.0f)) {
        for (auto& v : values) v = v * h.scl_slope + h.scl_inter;
    }

    auto pix = [&](int i) { return h.pixdim[i] > 0.0f ? static_cast<double>(h.pixdim[i]) : 1.0; };
    return NiftiVolume{FloatVolume(shape, std::move(values)), Spacing3{pix(1), pix(2), pix(3)}};
}

void write_nifti(const std::filesystem::path& path, const FloatVolume& volume, const Spacing3& spacing) {
    const auto h = make_header(volume.shape(), spacing, DT_FLOAT32);
    write_raw(path, h, volume.raw().data(), volume.size() * sizeof(float));
}

void write_nifti(const std::filesystem::path& path, const MaskVolume& volume, const Spacing3& spacing) {
    const auto h = make_header(volume.shape(), spacing, DT_UINT8);
    write_raw(path, h, volume.raw().data(), volume.size());
}

}  // namespace hetseg
