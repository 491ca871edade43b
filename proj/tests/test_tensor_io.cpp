#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "stm/tensor.hpp"

using namespace stm;

namespace {
std::filesystem::path tmp_file(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "stm_io_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}
}  // namespace

TEST_CASE("ST1 round trip preserves bits") {
    Rng rng(1);
    Tensor3 t = oracle::random_tensor3(3, 5, 2, rng);
    auto path = tmp_file("t3.st1");
    write_st1(path.string(), t);
    Tensor3 back = read_st1(path.string());
    REQUIRE(back.same_shape(t));
    CHECK(std::memcmp(back.data.data(), t.data.data(), t.size() * sizeof(double)) == 0);
}

TEST_CASE("ST1 header layout") {
    Tensor2 t(2, 3);
    for (int i = 0; i < 6; i++) t.data[i] = i;
    auto path = tmp_file("t2.st1");
    write_st1(path.string(), t);

    std::ifstream in(path.string(), std::ios::binary);
    char header[28];
    in.read(header, 28);
    CHECK(std::memcmp(header, "ST1", 3) == 0);
    // version 1, dims (2,3,1) little endian after the 16-byte magic block
    CHECK(static_cast<unsigned char>(header[12]) == 1);
    CHECK(static_cast<unsigned char>(header[16]) == 2);
    CHECK(static_cast<unsigned char>(header[20]) == 3);
    CHECK(static_cast<unsigned char>(header[24]) == 1);
    CHECK(std::filesystem::file_size(path) == 16 + 12 + 6 * 8);

    Tensor2 back = read_st1_2d(path.string());
    REQUIRE(back.same_shape(t));
    CHECK(back.data == t.data);
}

TEST_CASE("ST1 rejects garbage") {
    auto path = tmp_file("bad.st1");
    std::ofstream out(path.string(), std::ios::binary);
    out << "not a tensor at all, sorry";
    out.close();
    CHECK_THROWS_AS(read_st1(path.string()), DataError);
    CHECK_THROWS_AS(read_st1("/nonexistent/definitely/missing.st1"), DataError);
}

TEST_CASE("PGM dump has the right header and size") {
    Tensor2 t(2, 4, 0.5);
    auto path = tmp_file("map.pgm");
    write_pgm(path.string(), t);
    std::ifstream in(path.string(), std::ios::binary);
    std::string magic, dims;
    std::getline(in, magic);
    CHECK(magic == "P5");
    int w, h, maxv;
    in >> w >> h >> maxv;
    CHECK(w == 4);
    CHECK(h == 2);
    CHECK(maxv == 255);
}
