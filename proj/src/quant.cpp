// SPDX-License-Identifier: Apache-2.0
#include "quant.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace lwq {

const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::GroupAffine: return "group_affine";
        case Scheme::SymmetricPerTensor: return "symmetric_per_tensor";
        case Scheme::SymmetricPerChannel: return "symmetric_per_channel";
        case Scheme::OutlierAffine: return "outlier_affine";
    }
    fail(ErrorCode::Internal, "unknown scheme");
}

Scheme scheme_from_name(const std::string& name) {
    if (name == "group_affine") return Scheme::GroupAffine;
    if (name == "symmetric_per_tensor") return Scheme::SymmetricPerTensor;
    if (name == "symmetric_per_channel") return Scheme::SymmetricPerChannel;
    if (name == "outlier_affine") return Scheme::OutlierAffine;
    fail(ErrorCode::FormatError, "unknown quantization scheme: " + name);
}

int64_t QuantizedTensor::numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

int64_t QuantizedTensor::n_groups() const { return (numel() + group_size - 1) / group_size; }

// Half-away-from-zero, matching the documented tie rule.
static inline float rtn(float x) { return std::round(x); }

static void check_bits(int bits) {
    if (bits != 2 && bits != 4 && bits != 8)
        fail(ErrorCode::InvalidInput, "bits must be one of {2,4,8}, got " + std::to_string(bits));
}

static std::vector<float> finite_f32_values(const Tensor& t) {
    std::vector<float> x = t.to_f32_vector();
    for (float v : x)
        if (std::isnan(v)) fail(ErrorCode::InvalidInput, "NaN in quantization input");
    return x;
}

std::vector<uint8_t> pack_codes(std::span<const uint32_t> codes, int bits) {
    check_bits(bits);
    const uint32_t limit = 1u << bits;
    std::vector<uint8_t> out((codes.size() * bits + 7) / 8, 0);
    for (size_t i = 0; i < codes.size(); i++) {
        if (codes[i] >= limit)
            fail(ErrorCode::InvalidInput, "code " + std::to_string(codes[i]) + " overflows " +
                                              std::to_string(bits) + " bits");
        size_t bit = i * bits;
        out[bit / 8] |= static_cast<uint8_t>(codes[i] << (bit % 8));
    }
    return out;
}

std::vector<uint32_t> unpack_codes(std::span<const uint8_t> bytes, int bits, int64_t n) {
    check_bits(bits);
    if (static_cast<size_t>((n * bits + 7) / 8) > bytes.size())
        fail(ErrorCode::InvalidInput, "packed buffer too short");
    const uint32_t mask = (1u << bits) - 1;
    std::vector<uint32_t> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; i++) {
        int64_t bit = i * bits;
        out[static_cast<size_t>(i)] = (bytes[static_cast<size_t>(bit / 8)] >> (bit % 8)) & mask;
    }
    return out;
}

// Shared affine core; `is_outlier` may be empty.
static QuantizedTensor group_affine_impl(const Tensor& t, const GroupAffineParams& p,
                                         const std::vector<float>& x, const std::vector<uint8_t>& is_outlier) {
    check_bits(p.bits);
    if (p.group_size < 1) fail(ErrorCode::InvalidInput, "group_size must be >= 1");

    const int64_t n = static_cast<int64_t>(x.size());
    const int64_t groups = (n + p.group_size - 1) / p.group_size;
    const float levels = static_cast<float>((1 << p.bits) - 1);

    QuantizedTensor q;
    q.scheme = is_outlier.empty() ? Scheme::GroupAffine : Scheme::OutlierAffine;
    q.bits = p.bits;
    q.group_size = p.group_size;
    q.shape = t.shape;
    q.scales.resize(static_cast<size_t>(groups));
    q.shifts.resize(static_cast<size_t>(groups));

    std::vector<uint32_t> codes(static_cast<size_t>(n), 0);
    for (int64_t g = 0; g < groups; g++) {
        const int64_t begin = g * p.group_size;
        const int64_t end = std::min(n, begin + p.group_size);
        // Left-to-right min/max so results do not depend on scheduling.
        bool any = false;
        float lo = 0.0f, hi = 0.0f;
        for (int64_t i = begin; i < end; i++) {
            if (!is_outlier.empty() && is_outlier[static_cast<size_t>(i)]) continue;
            float v = x[static_cast<size_t>(i)];
            if (!any) {
                lo = hi = v;
                any = true;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        float scale, shift;
        if (!any || hi == lo) {
            scale = 1.0f;
            shift = any ? lo : 0.0f;
        } else {
            scale = (hi - lo) / levels;
            shift = lo;
        }
        q.scales[static_cast<size_t>(g)] = scale;
        q.shifts[static_cast<size_t>(g)] = shift;
        if (any && hi != lo) {
            for (int64_t i = begin; i < end; i++) {
                if (!is_outlier.empty() && is_outlier[static_cast<size_t>(i)]) continue;
                float c = rtn((x[static_cast<size_t>(i)] - shift) / scale);
                c = std::clamp(c, 0.0f, levels);
                codes[static_cast<size_t>(i)] = static_cast<uint32_t>(c);
            }
        }
    }
    q.packed = pack_codes(codes, p.bits);
    return q;
}

QuantizedTensor quantize_group_affine(const Tensor& t, const GroupAffineParams& p) {
    return group_affine_impl(t, p, finite_f32_values(t), {});
}

QuantizedTensor quantize_outlier_affine(const Tensor& t, const GroupAffineParams& p, double outlier_fraction) {
    if (outlier_fraction < 0.0 || outlier_fraction > 1.0)
        fail(ErrorCode::InvalidInput, "outlier_fraction must be in [0,1]");
    std::vector<float> x = finite_f32_values(t);
    const int64_t n = static_cast<int64_t>(x.size());
    const int64_t k = static_cast<int64_t>(std::ceil(outlier_fraction * static_cast<double>(n)));

    std::vector<uint32_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0u);
    auto larger = [&](uint32_t a, uint32_t b) {
        float ma = std::fabs(x[a]), mb = std::fabs(x[b]);
        if (ma != mb) return ma > mb;
        return a < b; // ties kept at the lower flat index
    };
    if (k > 0 && k < n) std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), larger);

    std::vector<uint8_t> is_outlier(static_cast<size_t>(n), 0);
    std::vector<uint32_t> chosen(idx.begin(), idx.begin() + k);
    std::sort(chosen.begin(), chosen.end());
    for (uint32_t i : chosen) is_outlier[i] = 1;

    QuantizedTensor q = group_affine_impl(t, p, x, is_outlier);
    q.scheme = Scheme::OutlierAffine;
    q.outlier_idx = std::move(chosen);
    q.outlier_val.reserve(q.outlier_idx.size());
    for (uint32_t i : q.outlier_idx) q.outlier_val.push_back(f32_to_f16_bits(x[i]));
    return q;
}

QuantizedTensor quantize_symmetric_int8(const Tensor& t, const SymmetricParams& p) {
    std::vector<float> x = finite_f32_values(t);
    const int64_t n = static_cast<int64_t>(x.size());

    QuantizedTensor q;
    q.bits = 8;
    q.shape = t.shape;

    int64_t outer = 1, ch = 1, inner = 1;
    if (p.per_channel) {
        if (p.axis < 0 || static_cast<size_t>(p.axis) >= t.shape.size())
            fail(ErrorCode::InvalidInput, "channel axis out of range");
        for (size_t i = 0; i < t.shape.size(); i++) {
            if (static_cast<int>(i) < p.axis) outer *= t.shape[i];
            else if (static_cast<int>(i) == p.axis) ch = t.shape[i];
            else inner *= t.shape[i];
        }
        q.scheme = Scheme::SymmetricPerChannel;
        q.channel_axis = p.axis;
        q.group_size = n; // unused for symmetric; keep invariant-friendly
    } else {
        q.scheme = Scheme::SymmetricPerTensor;
        q.group_size = n;
    }

    const int64_t n_scales = p.per_channel ? ch : 1;
    q.scales.assign(static_cast<size_t>(n_scales), 0.0f);
    q.shifts.assign(static_cast<size_t>(n_scales), 0.0f);

    auto channel_of = [&](int64_t flat) -> int64_t {
        if (!p.per_channel) return 0;
        return (flat / inner) % ch;
    };
    for (int64_t i = 0; i < n; i++) {
        float a = std::fabs(x[static_cast<size_t>(i)]);
        float& s = q.scales[static_cast<size_t>(channel_of(i))];
        s = std::max(s, a);
    }
    for (float& s : q.scales) s = (s == 0.0f) ? 1.0f : s / 127.0f;

    std::vector<uint32_t> codes(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; i++) {
        float s = q.scales[static_cast<size_t>(channel_of(i))];
        float c = std::clamp(rtn(x[static_cast<size_t>(i)] / s), -127.0f, 127.0f);
        codes[static_cast<size_t>(i)] = static_cast<uint32_t>(static_cast<int32_t>(c) + 128);
    }
    q.packed = pack_codes(codes, 8);
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    const int64_t n = q.numel();
    std::vector<float> out(static_cast<size_t>(n));
    std::vector<uint32_t> codes = unpack_codes(q.packed, q.bits, n);

    if (q.scheme == Scheme::GroupAffine || q.scheme == Scheme::OutlierAffine) {
        for (int64_t i = 0; i < n; i++) {
            int64_t g = i / q.group_size;
            out[static_cast<size_t>(i)] = static_cast<float>(codes[static_cast<size_t>(i)]) *
                                              q.scales[static_cast<size_t>(g)] +
                                          q.shifts[static_cast<size_t>(g)];
        }
    } else {
        int64_t outer = 1, ch = 1, inner = 1;
        if (q.scheme == Scheme::SymmetricPerChannel) {
            for (size_t i = 0; i < q.shape.size(); i++) {
                if (static_cast<int>(i) < q.channel_axis) outer *= q.shape[i];
                else if (static_cast<int>(i) == q.channel_axis) ch = q.shape[i];
                else inner *= q.shape[i];
            }
        }
        for (int64_t i = 0; i < n; i++) {
            int64_t c = (q.scheme == Scheme::SymmetricPerChannel) ? (i / inner) % ch : 0;
            int32_t code = static_cast<int32_t>(codes[static_cast<size_t>(i)]) - 128;
            out[static_cast<size_t>(i)] = static_cast<float>(code) * q.scales[static_cast<size_t>(c)];
        }
    }
    for (size_t i = 0; i < q.outlier_idx.size(); i++)
        out[q.outlier_idx[i]] = f16_bits_to_f32(q.outlier_val[i]);
    return Tensor::from_f32(q.shape, out);
}

ByteCounts quantized_bytes(const QuantizedTensor& q) {
    ByteCounts c;
    c.exact = q.packed.size() + 4 * q.scales.size() + 4 * q.shifts.size() + 6 * q.outlier_idx.size();
    c.idealized = static_cast<uint64_t>((q.numel() * q.bits + 7) / 8);
    return c;
}

ByteCounts predict_quantized_bytes(int64_t numel, int bits, int64_t group_size, double outlier_fraction) {
    ByteCounts c;
    c.idealized = static_cast<uint64_t>((numel * bits + 7) / 8);
    if (bits == 16) {
        c.exact = static_cast<uint64_t>(numel) * 2;
        return c;
    }
    int64_t groups = (numel + group_size - 1) / group_size;
    int64_t outliers = static_cast<int64_t>(std::ceil(outlier_fraction * static_cast<double>(numel)));
    c.exact = static_cast<uint64_t>((numel * bits + 7) / 8) + 8 * static_cast<uint64_t>(groups) +
              6 * static_cast<uint64_t>(outliers);
    return c;
}

// ---------------------------------------------------------------------------
// Quantized-container plumbing
// ---------------------------------------------------------------------------

void put_quantized(NamedTensorMap& map, const std::string& name, const QuantizedTensor& q) {
    map.entries[name + ".qweight"] =
        Tensor::from_u8({static_cast<int64_t>(q.packed.size())}, q.packed);
    map.entries[name + ".scales"] =
        Tensor::from_f32({static_cast<int64_t>(q.scales.size())}, q.scales);
    map.entries[name + ".shifts"] =
        Tensor::from_f32({static_cast<int64_t>(q.shifts.size())}, q.shifts);
    if (!q.outlier_idx.empty()) {
        map.entries[name + ".outlier_idx"] =
            Tensor::from_u32({static_cast<int64_t>(q.outlier_idx.size())}, q.outlier_idx);
        Tensor vals(DType::F16, {static_cast<int64_t>(q.outlier_val.size())});
        std::memcpy(vals.data.data(), q.outlier_val.data(), q.outlier_val.size() * 2);
        map.entries[name + ".outlier_val"] = std::move(vals);
    }
    map.metadata[name + ".bits"] = std::to_string(q.bits);
    map.metadata[name + ".group_size"] = std::to_string(q.group_size);
    map.metadata[name + ".scheme"] = scheme_name(q.scheme);
    map.metadata[name + ".shape"] = nlohmann::json(q.shape).dump();
    if (q.channel_axis >= 0) map.metadata[name + ".channel_axis"] = std::to_string(q.channel_axis);
}

bool has_quantized(const NamedTensorMap& map, const std::string& name) {
    return map.entries.count(name + ".qweight") > 0;
}

QuantizedTensor get_quantized(const NamedTensorMap& map, const std::string& name) {
    QuantizedTensor q;
    auto meta = [&](const std::string& key) {
        auto it = map.metadata.find(name + "." + key);
        if (it == map.metadata.end())
            fail(ErrorCode::FormatError, "missing quantization metadata " + name + "." + key);
        return it->second;
    };
    q.bits = std::stoi(meta("bits"));
    q.group_size = std::stoll(meta("group_size"));
    q.scheme = scheme_from_name(meta("scheme"));
    for (const auto& d : nlohmann::json::parse(meta("shape"))) q.shape.push_back(d.get<int64_t>());
    auto ax = map.metadata.find(name + ".channel_axis");
    if (ax != map.metadata.end()) q.channel_axis = std::stoi(ax->second);

    auto tensor = [&](const std::string& suffix) -> const Tensor& {
        auto it = map.entries.find(name + suffix);
        if (it == map.entries.end()) fail(ErrorCode::FormatError, "missing tensor " + name + suffix);
        return it->second;
    };
    auto pk = tensor(".qweight").u8();
    q.packed.assign(pk.begin(), pk.end());
    auto sc = tensor(".scales").f32();
    q.scales.assign(sc.begin(), sc.end());
    auto sh = tensor(".shifts").f32();
    q.shifts.assign(sh.begin(), sh.end());
    if (map.entries.count(name + ".outlier_idx")) {
        auto oi = tensor(".outlier_idx").u32();
        q.outlier_idx.assign(oi.begin(), oi.end());
        const Tensor& ov = tensor(".outlier_val");
        if (ov.dtype != DType::F16) fail(ErrorCode::FormatError, "outlier values must be F16");
        q.outlier_val.resize(ov.data.size() / 2);
        std::memcpy(q.outlier_val.data(), ov.data.data(), ov.data.size());
    }
    return q;
}

} // namespace lwq
