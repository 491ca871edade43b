#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stm {

// Thrown when tensor shapes do not line up; message names both shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown on malformed files, non-finite values, missing inputs.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown on invalid configuration values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense rank-3 map, row-major (y, x, c).
struct Tensor3 {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

    double& at(int y, int x, int ch) {
        return data[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch) const {
        return data[(static_cast<size_t>(y) * w + x) * c + ch];
    }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor3& o) const { return h == o.h && w == o.w && c == o.c; }
    std::string shape_str() const;
};

// Dense rank-2 map, row-major (y, x).
struct Tensor2 {
    int h = 0;
    int w = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(int h_, int w_, double fill = 0.0)
        : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, fill) {}

    double& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor2& o) const { return h == o.h && w == o.w; }
    std::string shape_str() const;
};

// Convolution weights, layout [oc][ic][ky][kx], plus per-output-channel bias.
struct KernelBank {
    int out_c = 0;
    int in_c = 0;
    int kh = 0;
    int kw = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    KernelBank() = default;
    KernelBank(int oc, int ic, int kh_, int kw_)
        : out_c(oc), in_c(ic), kh(kh_), kw(kw_),
          weights(static_cast<size_t>(oc) * ic * kh_ * kw_, 0.0),
          bias(static_cast<size_t>(oc), 0.0) {}

    static KernelBank identity_1x1(int channels);

    double& wat(int oc, int ic, int ky, int kx) {
        return weights[((static_cast<size_t>(oc) * in_c + ic) * kh + ky) * kw + kx];
    }
    double wat(int oc, int ic, int ky, int kx) const {
        return weights[((static_cast<size_t>(oc) * in_c + ic) * kh + ky) * kw + kx];
    }

    bool same_shape(const KernelBank& o) const {
        return out_c == o.out_c && in_c == o.in_c && kh == o.kh && kw == o.kw;
    }
    std::string shape_str() const;
};

// Grid location of a response peak.
struct PeakLocation {
    int y = 0;
    int x = 0;
    double score = 0.0;
};

bool all_finite(const Tensor3& t);
bool all_finite(const Tensor2& t);

// ST1 tensor file: 16-byte magic+version header, three little-endian u32 dims
// (H, W, C), then H*W*C little-endian f64 values row-major.
void write_st1(const std::string& path, const Tensor3& t);
void write_st1(const std::string& path, const Tensor2& t);
Tensor3 read_st1(const std::string& path);
Tensor2 read_st1_2d(const std::string& path);

// 8-bit binary PGM, values clamped to [0,1] and scaled by 255.
void write_pgm(const std::string& path, const Tensor2& t);

}  // namespace stm
