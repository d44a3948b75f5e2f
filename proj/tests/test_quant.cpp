// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "quant.hpp"
#include "rng.hpp"

using namespace lwq;

namespace {

// Straightforward scalar reference for group-affine RTN. Kept free of the
// library's helpers so it can disagree with the implementation.
struct OracleResult {
    std::vector<uint32_t> codes;
    std::vector<float> scales, shifts;
    std::vector<float> dequant;
};

OracleResult oracle_group_affine(const std::vector<float>& x, int bits, int64_t group) {
    OracleResult r;
    int64_t n = static_cast<int64_t>(x.size());
    int64_t groups = (n + group - 1) / group;
    float levels = static_cast<float>((1 << bits) - 1);
    r.codes.resize(x.size());
    r.dequant.resize(x.size());
    for (int64_t g = 0; g < groups; g++) {
        int64_t b = g * group, e = std::min(n, b + group);
        float lo = x[size_t(b)], hi = x[size_t(b)];
        for (int64_t i = b; i < e; i++) {
            lo = std::min(lo, x[size_t(i)]);
            hi = std::max(hi, x[size_t(i)]);
        }
        float scale = (hi == lo) ? 1.0f : (hi - lo) / levels;
        float shift = lo;
        r.scales.push_back(scale);
        r.shifts.push_back(shift);
        for (int64_t i = b; i < e; i++) {
            float c = (hi == lo) ? 0.0f : std::round((x[size_t(i)] - shift) / scale);
            if (c < 0) c = 0;
            if (c > levels) c = levels;
            r.codes[size_t(i)] = static_cast<uint32_t>(c);
            r.dequant[size_t(i)] = c * scale + shift;
        }
    }
    return r;
}

std::vector<float> random_values(Rng& rng, int64_t n, float spread = 3.0f) {
    std::vector<float> x(static_cast<size_t>(n));
    for (float& v : x) v = static_cast<float>(rng.next_normal()) * spread;
    return x;
}

} // namespace

TEST_CASE("pack/unpack: documented bit layouts") {
    std::vector<uint32_t> two{0, 1, 2, 3};
    auto packed2 = pack_codes(two, 2);
    REQUIRE(packed2.size() == 1);
    CHECK(packed2[0] == 0xE4); // 11 10 01 00, LSB-first
    std::vector<uint32_t> four{0x1, 0xF};
    auto packed4 = pack_codes(four, 4);
    REQUIRE(packed4.size() == 1);
    CHECK(packed4[0] == 0xF1);
}

TEST_CASE("pack/unpack: round trip for random codes at all widths") {
    Rng rng(31);
    for (int bits : {2, 4, 8}) {
        for (int iter = 0; iter < 30; iter++) {
            int64_t n = 1 + static_cast<int64_t>(rng.next_below(300));
            std::vector<uint32_t> codes(static_cast<size_t>(n));
            for (auto& c : codes) c = static_cast<uint32_t>(rng.next_below(1u << bits));
            auto packed = pack_codes(codes, bits);
            CHECK(packed.size() == static_cast<size_t>((n * bits + 7) / 8));
            CHECK(unpack_codes(packed, bits, n) == codes);
        }
    }
}

TEST_CASE("pack: code overflow rejected") {
    std::vector<uint32_t> codes{4};
    CHECK_THROWS_AS(pack_codes(codes, 2), Error);
}

TEST_CASE("group affine: 4-bit ramp example") {
    Tensor t = Tensor::from_f32({4}, std::vector<float>{0, 1, 2, 3});
    QuantizedTensor q = quantize_group_affine(t, {4, 4});
    CHECK(q.scales[0] == doctest::Approx(0.2).epsilon(1e-7));
    CHECK(q.shifts[0] == 0.0f);
    CHECK(unpack_codes(q.packed, 4, 4) == std::vector<uint32_t>{0, 5, 10, 15});
    Tensor back_t = dequantize(q);
    auto back = back_t.f32();
    for (int i = 0; i < 4; i++) CHECK(back[size_t(i)] == doctest::Approx(i).epsilon(1e-6));
}

TEST_CASE("group affine: 2-bit example with negative shift") {
    Tensor t = Tensor::from_f32({4}, std::vector<float>{-1, 0, 1, 2});
    QuantizedTensor q = quantize_group_affine(t, {2, 4});
    CHECK(q.scales[0] == 1.0f);
    CHECK(q.shifts[0] == -1.0f);
    CHECK(unpack_codes(q.packed, 2, 4) == std::vector<uint32_t>{0, 1, 2, 3});
}

TEST_CASE("group affine: constant group is exact with scale 1") {
    Tensor t = Tensor::from_f32({4}, std::vector<float>{5, 5, 5, 5});
    QuantizedTensor q = quantize_group_affine(t, {4, 4});
    CHECK(q.scales[0] == 1.0f);
    CHECK(q.shifts[0] == 5.0f);
    CHECK(unpack_codes(q.packed, 4, 4) == std::vector<uint32_t>{0, 0, 0, 0});
    Tensor dq5 = dequantize(q);
    for (float v : dq5.f32()) CHECK(v == 5.0f);
}

TEST_CASE("group affine: NaN input rejected") {
    Tensor t = Tensor::from_f32({2}, std::vector<float>{1.0f, std::nanf("")});
    CHECK_THROWS_AS(quantize_group_affine(t, {4, 4}), Error);
}

TEST_CASE("group affine matches the scalar oracle on random tensors") {
    Rng rng(77);
    for (int iter = 0; iter < 60; iter++) {
        int bits = std::vector<int>{2, 4, 8}[rng.next_below(3)];
        int64_t group = std::vector<int64_t>{1, 32, 128}[rng.next_below(3)];
        int64_t n = 1 + static_cast<int64_t>(rng.next_below(4096));
        std::vector<float> x = random_values(rng, n);
        Tensor t = Tensor::from_f32({n}, x);
        QuantizedTensor q = quantize_group_affine(t, {bits, group});
        OracleResult o = oracle_group_affine(x, bits, group);
        CHECK(unpack_codes(q.packed, bits, n) == o.codes);
        CHECK(q.scales == o.scales);
        CHECK(q.shifts == o.shifts);
        Tensor back_t = dequantize(q);
        auto back = back_t.f32();
        for (int64_t i = 0; i < n; i++) REQUIRE(back[size_t(i)] == o.dequant[size_t(i)]);
    }
}

TEST_CASE("group affine: RTN error bound and grid membership") {
    Rng rng(123);
    for (int bits : {2, 4, 8}) {
        std::vector<float> x = random_values(rng, 1000);
        Tensor t = Tensor::from_f32({1000}, x);
        QuantizedTensor q = quantize_group_affine(t, {bits, 64});
        Tensor back_t = dequantize(q);
        auto back = back_t.f32();
        auto codes = unpack_codes(q.packed, bits, 1000);
        for (int64_t i = 0; i < 1000; i++) {
            int64_t g = i / 64;
            float scale = q.scales[size_t(g)];
            // 4 ulp at the group's value-range magnitude.
            float mag = std::abs(q.shifts[size_t(g)]) + static_cast<float>((1 << bits) - 1) * scale;
            CHECK(std::abs(x[size_t(i)] - back[size_t(i)]) <= scale / 2 + 4 * mag * 1.1920929e-7f);
            // Grid membership: x_hat = shift + k * scale exactly as computed.
            float grid = static_cast<float>(codes[size_t(i)]) * scale + q.shifts[size_t(g)];
            CHECK(back[size_t(i)] == grid);
        }
    }
}

TEST_CASE("group affine: group endpoints reconstruct") {
    Rng rng(5);
    std::vector<float> x = random_values(rng, 128);
    Tensor t = Tensor::from_f32({128}, x);
    for (int bits : {2, 4, 8}) {
        QuantizedTensor q = quantize_group_affine(t, {bits, 128});
        auto codes = unpack_codes(q.packed, bits, 128);
        float lo = x[0], hi = x[0];
        size_t ilo = 0, ihi = 0;
        for (size_t i = 0; i < x.size(); i++) {
            if (x[i] < lo) { lo = x[i]; ilo = i; }
            if (x[i] > hi) { hi = x[i]; ihi = i; }
        }
        CHECK(codes[ilo] == 0);
        CHECK(codes[ihi] == static_cast<uint32_t>((1 << bits) - 1));
        Tensor back_t = dequantize(q);
        auto back = back_t.f32();
        CHECK(back[ilo] == lo); // code 0 reconstructs the shift exactly
        CHECK(back[ihi] == doctest::Approx(hi).epsilon(1e-6));
    }
}

TEST_CASE("monotone fidelity: more bits never hurt") {
    Rng rng(9);
    std::vector<float> x = random_values(rng, 512);
    Tensor t = Tensor::from_f32({512}, x);
    double worst[3];
    int idx = 0;
    for (int bits : {8, 4, 2}) {
        Tensor back_t = dequantize(quantize_group_affine(t, {bits, 64}));
        auto back = back_t.f32();
        double w = 0;
        for (size_t i = 0; i < x.size(); i++) w = std::max(w, std::abs(double(x[i]) - back[i]));
        worst[idx++] = w;
    }
    CHECK(worst[0] <= worst[1]);
    CHECK(worst[1] <= worst[2]);
}

TEST_CASE("symmetric int8: per-tensor example") {
    Tensor t = Tensor::from_f32({3}, std::vector<float>{-1.0f, 0.5f, 1.0f});
    QuantizedTensor q = quantize_symmetric_int8(t, {});
    CHECK(q.scales[0] == doctest::Approx(1.0 / 127.0).epsilon(1e-9));
    auto codes = unpack_codes(q.packed, 8, 3);
    CHECK(static_cast<int>(codes[0]) - 128 == -127);
    CHECK(static_cast<int>(codes[1]) - 128 == 64); // 63.5 rounds half away from zero
    CHECK(static_cast<int>(codes[2]) - 128 == 127);
}

TEST_CASE("symmetric int8: all zeros stay zero") {
    Tensor t = Tensor::from_f32({5}, std::vector<float>{0, 0, 0, 0, 0});
    QuantizedTensor q = quantize_symmetric_int8(t, {});
    CHECK(q.scales[0] == 1.0f);
    Tensor dq0 = dequantize(q);
    for (float v : dq0.f32()) CHECK(v == 0.0f);
}

TEST_CASE("symmetric int8: per-channel scales on axis 0") {
    Tensor t = Tensor::from_f32({2, 2}, std::vector<float>{1, 0, 0, 10});
    QuantizedTensor q = quantize_symmetric_int8(t, {true, 0});
    REQUIRE(q.scales.size() == 2);
    CHECK(q.scales[0] == doctest::Approx(1.0 / 127.0));
    CHECK(q.scales[1] == doctest::Approx(10.0 / 127.0));
    Tensor back_t = dequantize(q);
    auto back = back_t.f32();
    CHECK(back[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(back[3] == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("outlier affine: fraction 0 reduces to plain group affine") {
    Rng rng(15);
    std::vector<float> x = random_values(rng, 200);
    Tensor t = Tensor::from_f32({200}, x);
    QuantizedTensor a = quantize_group_affine(t, {4, 32});
    QuantizedTensor b = quantize_outlier_affine(t, {4, 32}, 0.0);
    CHECK(a.packed == b.packed);
    CHECK(a.scales == b.scales);
    CHECK(b.outlier_idx.empty());
}

TEST_CASE("outlier affine: fraction 1 stores everything as f16") {
    Rng rng(16);
    std::vector<float> x = random_values(rng, 50);
    Tensor t = Tensor::from_f32({50}, x);
    QuantizedTensor q = quantize_outlier_affine(t, {2, 16}, 1.0);
    CHECK(q.outlier_idx.size() == 50);
    Tensor back_t = dequantize(q);
    auto back = back_t.f32();
    for (size_t i = 0; i < x.size(); i++) CHECK(back[i] == f16_round(x[i]));
}

TEST_CASE("outlier affine: single spike example") {
    Tensor t = Tensor::from_f32({4}, std::vector<float>{0, 0, 0, 100});
    QuantizedTensor q = quantize_outlier_affine(t, {2, 4}, 0.25);
    REQUIRE(q.outlier_idx == std::vector<uint32_t>{3});
    CHECK(f16_bits_to_f32(q.outlier_val[0]) == 100.0f);
    // Remaining group is constant zero.
    CHECK(q.scales[0] == 1.0f);
    CHECK(q.shifts[0] == 0.0f);
    Tensor back_t = dequantize(q);
    auto back = back_t.f32();
    CHECK(back[0] == 0.0f);
    CHECK(back[3] == 100.0f);
}

TEST_CASE("outlier affine: indices strictly increasing and tie-broken low") {
    Tensor t = Tensor::from_f32({6}, std::vector<float>{2, -2, 2, 0, 0, 0});
    QuantizedTensor q = quantize_outlier_affine(t, {4, 6}, 0.34); // ceil(2.04) = 3
    REQUIRE(q.outlier_idx.size() == 3);
    CHECK(q.outlier_idx == std::vector<uint32_t>{0, 1, 2});
}

TEST_CASE("quantized_bytes: documented arithmetic") {
    Rng rng(21);
    std::vector<float> x = random_values(rng, 4096);
    Tensor t = Tensor::from_f32({4096}, x);
    QuantizedTensor q = quantize_group_affine(t, {4, 128});
    ByteCounts c = quantized_bytes(q);
    CHECK(c.idealized == 2048);
    CHECK(c.exact == 2048 + 32 * 8);

    Tensor small = Tensor::from_f32({100}, random_values(rng, 100));
    ByteCounts sym = quantized_bytes(quantize_symmetric_int8(small, {}));
    CHECK(sym.idealized == 100);

    Tensor ten = Tensor::from_f32({10}, random_values(rng, 10));
    ByteCounts out = quantized_bytes(quantize_outlier_affine(ten, {4, 10}, 1.0));
    CHECK(out.exact == (10 * 4 + 7) / 8 + 8 * 1 + 6 * 10);
}

TEST_CASE("predict_quantized_bytes agrees with materialized quantization") {
    Rng rng(22);
    for (int iter = 0; iter < 20; iter++) {
        int64_t n = 1 + static_cast<int64_t>(rng.next_below(3000));
        int bits = std::vector<int>{2, 4, 8}[rng.next_below(3)];
        int64_t group = std::vector<int64_t>{1, 32, 128}[rng.next_below(3)];
        double frac = rng.next_uniform() * 0.05;
        Tensor t = Tensor::from_f32({n}, random_values(rng, n));
        ByteCounts real = quantized_bytes(quantize_outlier_affine(t, {bits, group}, frac));
        ByteCounts pred = predict_quantized_bytes(n, bits, group, frac);
        CHECK(real.exact == pred.exact);
        CHECK(real.idealized == pred.idealized);
    }
}

TEST_CASE("quantized container round trip preserves the payload") {
    Rng rng(33);
    std::vector<float> x = random_values(rng, 500);
    Tensor t = Tensor::from_f32({500}, x);
    QuantizedTensor q = quantize_outlier_affine(t, {4, 64}, 0.01);
    NamedTensorMap map;
    put_quantized(map, "w", q);
    auto bytes = save_container_bytes(map);
    NamedTensorMap loaded = load_container_bytes(bytes);
    REQUIRE(has_quantized(loaded, "w"));
    QuantizedTensor q2 = get_quantized(loaded, "w");
    CHECK(q2.packed == q.packed);
    CHECK(q2.scales == q.scales);
    CHECK(q2.shifts == q.shifts);
    CHECK(q2.outlier_idx == q.outlier_idx);
    CHECK(q2.outlier_val == q.outlier_val);
    CHECK(dequantize(q2).data == dequantize(q).data);
}
