// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "float16.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace lwq;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("rng: same seed gives identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; i++) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: first uniform for seed 42 is the pinned constant") {
    // SplitMix64 first output for seed 42; the uniform keeps the top 53 bits.
    Rng r(42);
    uint64_t first = Rng(42).next_u64();
    CHECK(first == 0xBDD732262FEB6E95ULL);
    double u = r.next_uniform();
    CHECK(u == static_cast<double>(first >> 11) * 0x1.0p-53);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
}

TEST_CASE("rng: uniforms stay in [0,1)") {
    Rng r(7);
    for (int i = 0; i < 1000000; i++) {
        double u = r.next_uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("rng: derived streams differ from the parent") {
    Rng r(5);
    Rng d0 = r.derive(0), d1 = r.derive(1);
    CHECK(d0.next_u64() != d1.next_u64());
}

TEST_CASE("float16 round trip is exact for representable values") {
    for (float v : {0.0f, 1.0f, -1.0f, 0.5f, 65504.0f, -65504.0f, 6.103515625e-05f}) {
        CHECK(f16_bits_to_f32(f32_to_f16_bits(v)) == v);
    }
    // f16 payloads survive a f16->f32->f16 loop bit-exactly.
    for (uint32_t bits = 0; bits < 0x10000; bits++) {
        auto h = static_cast<uint16_t>(bits);
        if ((h & 0x7C00u) == 0x7C00u) continue; // skip inf/nan payload variants
        CHECK(f32_to_f16_bits(f16_bits_to_f32(h)) == h);
    }
}

TEST_CASE("container: single tensor round trip is bit-exact") {
    NamedTensorMap m;
    m.entries["w"] = Tensor::from_f32({2, 2}, std::vector<float>{1, 2, 3, 4});
    auto bytes = save_container_bytes(m);
    NamedTensorMap loaded = load_container_bytes(bytes);
    CHECK(loaded == m);
    CHECK(loaded.entries["w"].f32()[3] == 4.0f);
}

TEST_CASE("container: save(load(f)) is byte-identical for canonical files") {
    NamedTensorMap m;
    m.entries["a"] = Tensor::from_f32({3}, std::vector<float>{1, 2, 3});
    m.entries["b"] = Tensor::from_f16({2}, std::vector<float>{0.5f, -2.0f});
    m.metadata["k"] = "v";
    auto bytes = save_container_bytes(m);
    auto bytes2 = save_container_bytes(load_container_bytes(bytes));
    CHECK(bytes == bytes2);
}

TEST_CASE("container: lexicographic tensor order in the payload") {
    NamedTensorMap m;
    m.entries["b"] = Tensor::from_f32({1}, std::vector<float>{2});
    m.entries["a"] = Tensor::from_f32({1}, std::vector<float>{1});
    auto bytes = save_container_bytes(m);
    std::string header(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(bytes.size() - 16));
    CHECK(header.find("\"a\"") < header.find("\"b\""));
}

TEST_CASE("container: empty map is a valid container") {
    NamedTensorMap m;
    auto bytes = save_container_bytes(m);
    CHECK(load_container_bytes(bytes).entries.empty());
}

TEST_CASE("container: header length beyond file size is a FormatError") {
    NamedTensorMap m;
    m.entries["w"] = Tensor::from_f32({1}, std::vector<float>{1});
    auto bytes = save_container_bytes(m);
    bytes[0] = 0xFF;
    bytes[1] = 0xFF; // huge header length
    CHECK_THROWS_AS(load_container_bytes(bytes), Error);
    try {
        load_container_bytes(bytes);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FormatError);
    }
}

TEST_CASE("container: out-of-bounds extents rejected") {
    std::string header = R"({"w":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}})";
    std::vector<uint8_t> bytes;
    for (int i = 0; i < 8; i++) bytes.push_back(i == 0 ? static_cast<uint8_t>(header.size()) : 0);
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.resize(bytes.size() + 8); // only half the payload present
    try {
        load_container_bytes(bytes);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FormatError);
    }
}

TEST_CASE("container: unsupported dtype rejected") {
    std::string header = R"({"w":{"dtype":"BF16","shape":[1],"data_offsets":[0,2]}})";
    std::vector<uint8_t> bytes;
    for (int i = 0; i < 8; i++) bytes.push_back(i == 0 ? static_cast<uint8_t>(header.size()) : 0);
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.resize(bytes.size() + 2);
    try {
        load_container_bytes(bytes);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnsupportedDtype);
    }
}

TEST_CASE("container: overlapping extents rejected") {
    std::string header =
        R"({"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"b":{"dtype":"F32","shape":[1],"data_offsets":[2,6]}})";
    std::vector<uint8_t> bytes;
    for (int i = 0; i < 8; i++) bytes.push_back(i == 0 ? static_cast<uint8_t>(header.size()) : 0);
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.resize(bytes.size() + 6);
    try {
        load_container_bytes(bytes);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FormatError);
    }
}

TEST_CASE("container: f16 payload survives a file round trip bit-exactly") {
    Rng rng(11);
    std::vector<float> vals(257);
    for (float& v : vals) v = static_cast<float>(rng.next_normal());
    NamedTensorMap m;
    m.entries["h"] = Tensor::from_f16({257}, vals);
    std::string path = temp_path("lwq_f16_roundtrip.st");
    save_container(m, path);
    NamedTensorMap loaded = load_container(path);
    CHECK(loaded.entries["h"].data == m.entries["h"].data);
    std::remove(path.c_str());
}

TEST_CASE("container: random maps round trip (property)") {
    Rng rng(99);
    for (int iter = 0; iter < 20; iter++) {
        NamedTensorMap m;
        int n_tensors = 1 + static_cast<int>(rng.next_below(5));
        for (int t = 0; t < n_tensors; t++) {
            int64_t len = 1 + static_cast<int64_t>(rng.next_below(64));
            std::vector<float> vals(static_cast<size_t>(len));
            for (float& v : vals) v = static_cast<float>(rng.next_normal());
            std::string name = "t" + std::to_string(t);
            if (rng.next_below(2) == 0) m.entries[name] = Tensor::from_f32({len}, vals);
            else m.entries[name] = Tensor::from_f16({len}, vals);
        }
        m.metadata["iter"] = std::to_string(iter);
        CHECK(load_container_bytes(save_container_bytes(m)) == m);
    }
}
