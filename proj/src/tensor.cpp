#include "stm/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace stm {

std::string Tensor3::shape_str() const {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

std::string Tensor2::shape_str() const {
    return std::to_string(h) + "x" + std::to_string(w);
}

std::string KernelBank::shape_str() const {
    return std::to_string(in_c) + "->" + std::to_string(out_c) + " " +
           std::to_string(kh) + "x" + std::to_string(kw);
}

KernelBank KernelBank::identity_1x1(int channels) {
    KernelBank k(channels, channels, 1, 1);
    for (int c = 0; c < channels; c++) k.wat(c, c, 0, 0) = 1.0;
    return k;
}

bool all_finite(const Tensor3& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

bool all_finite(const Tensor2& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

constexpr char kMagic[12] = {'S', 'T', '1', 0, 'T', 'E', 'N', 'S', 'O', 'R', 0, 0};
constexpr uint32_t kVersion = 1;

void put_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ofstream& out, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; i++) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t u = 0;
    for (int i = 0; i < 8; i++) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

void write_st1_raw(const std::string& path, int h, int w, int c, const std::vector<double>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write(kMagic, 12);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(h));
    put_u32(out, static_cast<uint32_t>(w));
    put_u32(out, static_cast<uint32_t>(c));
    for (double v : data) put_f64(out, v);
    if (!out) throw DataError("write failed: " + path);
}

void read_st1_raw(const std::string& path, int& h, int& w, int& c, std::vector<double>& data) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    char magic[12];
    in.read(magic, 12);
    if (!in || std::memcmp(magic, kMagic, 12) != 0)
        throw DataError("not an ST1 tensor file: " + path);
    uint32_t version = get_u32(in);
    if (version != kVersion)
        throw DataError("unsupported ST1 version " + std::to_string(version) + ": " + path);
    h = static_cast<int>(get_u32(in));
    w = static_cast<int>(get_u32(in));
    c = static_cast<int>(get_u32(in));
    if (h <= 0 || w <= 0 || c <= 0 || static_cast<int64_t>(h) * w * c > (1 << 28))
        throw DataError("bad ST1 dims in " + path);
    data.resize(static_cast<size_t>(h) * w * c);
    for (double& v : data) v = get_f64(in);
    if (!in) throw DataError("truncated ST1 file: " + path);
}

}  // namespace

void write_st1(const std::string& path, const Tensor3& t) {
    write_st1_raw(path, t.h, t.w, t.c, t.data);
}

void write_st1(const std::string& path, const Tensor2& t) {
    write_st1_raw(path, t.h, t.w, 1, t.data);
}

Tensor3 read_st1(const std::string& path) {
    Tensor3 t;
    read_st1_raw(path, t.h, t.w, t.c, t.data);
    return t;
}

Tensor2 read_st1_2d(const std::string& path) {
    int h, w, c;
    std::vector<double> data;
    read_st1_raw(path, h, w, c, data);
    if (c != 1) throw DataError("expected single-channel ST1, got C=" + std::to_string(c));
    Tensor2 t;
    t.h = h;
    t.w = w;
    t.data = std::move(data);
    return t;
}

void write_pgm(const std::string& path, const Tensor2& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "P5\n" << t.w << " " << t.h << "\n255\n";
    for (double v : t.data) {
        double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.put(static_cast<char>(static_cast<int>(clamped * 255.0 + 0.5)));
    }
}

}  // namespace stm
