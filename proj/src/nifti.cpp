#include "cowsynth/nifti.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace cow {
namespace {

// NIfTI-1 header, 348 bytes. See the nifti1.h reference layout.
struct Nifti1Header {
    int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr int16_t DT_UINT8 = 2;
constexpr int16_t DT_INT16 = 4;
constexpr int16_t DT_INT32 = 8;
constexpr int16_t DT_FLOAT32 = 16;
constexpr int16_t DT_FLOAT64 = 64;
constexpr int16_t DT_INT8 = 256;
constexpr int16_t DT_UINT16 = 512;
constexpr int16_t DT_UINT32 = 768;

bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() &&
           s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

// Byte source that reads .gz and plain files through one interface.
class ByteReader {
public:
    explicit ByteReader(const std::string& path) {
        gz_ = gzopen(path.c_str(), "rb");  // gzopen also reads plain files
        if (!gz_) throw std::runtime_error("cannot open file: " + path);
        path_ = path;
    }
    ~ByteReader() {
        if (gz_) gzclose(gz_);
    }
    void read(void* dst, size_t n) {
        int got = gzread(gz_, dst, static_cast<unsigned>(n));
        if (got < 0 || static_cast<size_t>(got) != n)
            throw std::runtime_error("truncated or unreadable file: " + path_);
    }
    void skip(size_t n) {
        std::vector<char> tmp(std::min<size_t>(n, 65536));
        while (n > 0) {
            size_t chunk = std::min(n, tmp.size());
            read(tmp.data(), chunk);
            n -= chunk;
        }
    }

private:
    gzFile gz_ = nullptr;
    std::string path_;
};

class ByteWriter {
public:
    explicit ByteWriter(const std::string& path) : path_(path) {
        if (has_suffix(path, ".gz")) {
            gz_ = gzopen(path.c_str(), "wb");
            if (!gz_) throw std::runtime_error("cannot write file: " + path);
        } else {
            fp_ = std::fopen(path.c_str(), "wb");
            if (!fp_) throw std::runtime_error("cannot write file: " + path);
        }
    }
    ~ByteWriter() { close_quiet(); }
    void write(const void* src, size_t n) {
        if (gz_) {
            if (gzwrite(gz_, src, static_cast<unsigned>(n)) !=
                static_cast<int>(n))
                throw std::runtime_error("write failure: " + path_);
        } else {
            if (std::fwrite(src, 1, n, fp_) != n)
                throw std::runtime_error("write failure: " + path_);
        }
    }
    void close() {
        if (gz_) {
            if (gzclose(gz_) != Z_OK)
                throw std::runtime_error("write failure on close: " + path_);
            gz_ = nullptr;
        } else if (fp_) {
            if (std::fclose(fp_) != 0)
                throw std::runtime_error("write failure on close: " + path_);
            fp_ = nullptr;
        }
    }

private:
    void close_quiet() {
        if (gz_) gzclose(gz_);
        if (fp_) std::fclose(fp_);
        gz_ = nullptr;
        fp_ = nullptr;
    }
    gzFile gz_ = nullptr;
    FILE* fp_ = nullptr;
    std::string path_;
};

template <typename Src>
void convert_to_float(const std::vector<char>& raw, std::vector<float>& out) {
    const Src* p = reinterpret_cast<const Src*>(raw.data());
    size_t n = raw.size() / sizeof(Src);
    out.resize(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<float>(p[i]);
}

}  // namespace

Volume load_volume(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error("volume file not found: " + path);
    ByteReader in(path);

    Nifti1Header hdr;
    in.read(&hdr, sizeof(hdr));
    if (hdr.sizeof_hdr != 348) {
        // 1543569408 is 348 byte-swapped; flag it explicitly.
        if (hdr.sizeof_hdr == 1543569408)
            throw std::runtime_error("unsupported byte order (big-endian NIfTI): " + path);
        throw std::runtime_error("malformed NIfTI header (sizeof_hdr != 348): " + path);
    }
    bool magic_ok = std::strncmp(hdr.magic, "n+1", 3) == 0 ||
                    std::strncmp(hdr.magic, "ni1", 3) == 0;
    if (!magic_ok)
        throw std::runtime_error("malformed NIfTI header (bad magic): " + path);
    if (std::strncmp(hdr.magic, "ni1", 3) == 0)
        throw std::runtime_error("two-file NIfTI (.hdr/.img) not supported: " + path);

    int ndim = hdr.dim[0];
    if (ndim < 3)
        throw std::runtime_error("non-3D payload (dim[0]=" +
                                 std::to_string(ndim) + "): " + path);
    for (int d = 4; d <= ndim && d < 8; ++d) {
        if (hdr.dim[d] > 1)
            throw std::runtime_error("non-3D payload (dim[" + std::to_string(d) +
                                     "]=" + std::to_string(hdr.dim[d]) + "): " + path);
    }
    int nx = hdr.dim[1], ny = hdr.dim[2], nz = hdr.dim[3];
    if (nx < 1 || ny < 1 || nz < 1)
        throw std::runtime_error("malformed NIfTI header (bad dims): " + path);

    size_t voxels = static_cast<size_t>(nx) * ny * nz;
    int bytes_per;
    switch (hdr.datatype) {
        case DT_UINT8: case DT_INT8: bytes_per = 1; break;
        case DT_INT16: case DT_UINT16: bytes_per = 2; break;
        case DT_INT32: case DT_UINT32: case DT_FLOAT32: bytes_per = 4; break;
        case DT_FLOAT64: bytes_per = 8; break;
        default:
            throw std::runtime_error("unsupported NIfTI datatype " +
                                     std::to_string(hdr.datatype) + ": " + path);
    }

    long offset = static_cast<long>(hdr.vox_offset);
    if (offset < static_cast<long>(sizeof(hdr)))
        throw std::runtime_error("malformed NIfTI header (vox_offset): " + path);
    in.skip(static_cast<size_t>(offset) - sizeof(hdr));

    std::vector<char> raw(voxels * bytes_per);
    in.read(raw.data(), raw.size());

    Volume v;
    v.width = nx;
    v.height = ny;
    v.depth = nz;
    v.spacing = {hdr.pixdim[3], hdr.pixdim[2], hdr.pixdim[1]};
    for (float& s : v.spacing)
        if (!(s > 0.f) || !std::isfinite(s)) s = 1.f;
    v.id = case_id_from_path(path);

    switch (hdr.datatype) {
        case DT_UINT8: convert_to_float<uint8_t>(raw, v.data); break;
        case DT_INT8: convert_to_float<int8_t>(raw, v.data); break;
        case DT_INT16: convert_to_float<int16_t>(raw, v.data); break;
        case DT_UINT16: convert_to_float<uint16_t>(raw, v.data); break;
        case DT_INT32: convert_to_float<int32_t>(raw, v.data); break;
        case DT_UINT32: convert_to_float<uint32_t>(raw, v.data); break;
        case DT_FLOAT32: convert_to_float<float>(raw, v.data); break;
        case DT_FLOAT64: convert_to_float<double>(raw, v.data); break;
        default: break;
    }

    bool apply_scale = hdr.scl_slope != 0.f &&
                       !(hdr.scl_slope == 1.f && hdr.scl_inter == 0.f);
    if (apply_scale)
        for (float& x : v.data) x = x * hdr.scl_slope + hdr.scl_inter;

    for (float x : v.data)
        if (!std::isfinite(x))
            throw std::runtime_error("non-finite intensities in volume: " + path);
    return v;
}

void save_volume(const Volume& v, const std::string& path) {
    if (v.depth < 1 || v.height < 1 || v.width < 1)
        throw std::runtime_error("refusing to save empty volume: " + path);
    if (v.size() != static_cast<size_t>(v.depth) * v.height * v.width)
        throw std::runtime_error("volume data/shape mismatch: " + path);

    Nifti1Header hdr;
    std::memset(&hdr, 0, sizeof(hdr));
    hdr.sizeof_hdr = 348;
    hdr.regular = 'r';
    hdr.dim[0] = 3;
    hdr.dim[1] = static_cast<int16_t>(v.width);
    hdr.dim[2] = static_cast<int16_t>(v.height);
    hdr.dim[3] = static_cast<int16_t>(v.depth);
    for (int d = 4; d < 8; ++d) hdr.dim[d] = 1;
    hdr.datatype = DT_FLOAT32;
    hdr.bitpix = 32;
    hdr.pixdim[0] = 1.f;
    hdr.pixdim[1] = v.spacing[2];
    hdr.pixdim[2] = v.spacing[1];
    hdr.pixdim[3] = v.spacing[0];
    hdr.vox_offset = 352.f;
    hdr.scl_slope = 1.f;
    hdr.xyzt_units = 10;  // NIFTI_UNITS_MM | NIFTI_UNITS_SEC
    hdr.sform_code = 1;
    hdr.srow_x[0] = v.spacing[2];
    hdr.srow_y[1] = v.spacing[1];
    hdr.srow_z[2] = v.spacing[0];
    std::snprintf(hdr.descrip, sizeof(hdr.descrip), "cowsynth");
    std::memcpy(hdr.magic, "n+1", 4);

    ByteWriter out(path);
    out.write(&hdr, sizeof(hdr));
    const char ext[4] = {0, 0, 0, 0};
    out.write(ext, 4);
    out.write(v.data.data(), v.data.size() * sizeof(float));
    out.close();
}

BinaryMask load_mask(const std::string& path) {
    Volume v = load_volume(path);
    BinaryMask m;
    m.depth = v.depth;
    m.height = v.height;
    m.width = v.width;
    m.spacing = v.spacing;
    m.id = v.id;
    m.data.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) m.data[i] = v.data[i] > 0.5f ? 1 : 0;
    return m;
}

void save_mask(const BinaryMask& m, const std::string& path) {
    Volume v;
    v.depth = m.depth;
    v.height = m.height;
    v.width = m.width;
    v.spacing = m.spacing;
    v.id = m.id;
    v.data.resize(m.size());
    for (size_t i = 0; i < m.size(); ++i) v.data[i] = m.data[i] ? 1.f : 0.f;
    save_volume(v, path);
}

std::string case_id_from_path(const std::string& path) {
    std::string name = std::filesystem::path(path).filename().string();
    if (has_suffix(name, ".gz")) name.resize(name.size() - 3);
    if (has_suffix(name, ".nii")) name.resize(name.size() - 4);
    if (has_suffix(name, "_t2")) name.resize(name.size() - 3);
    else if (has_suffix(name, "_seg")) name.resize(name.size() - 4);
    return name;
}

const char* to_string(SplitTag t) {
    switch (t) {
        case SplitTag::Train: return "train";
        case SplitTag::Val: return "val";
        case SplitTag::Test: return "test";
    }
    return "train";
}

SplitTag split_tag_from_string(const std::string& s) {
    if (s == "train") return SplitTag::Train;
    if (s == "val") return SplitTag::Val;
    if (s == "test") return SplitTag::Test;
    throw std::runtime_error("unknown split tag: " + s);
}

}  // namespace cow
