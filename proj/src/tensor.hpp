// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "float16.hpp"

namespace lwq {

enum class DType { F32, F16, U8, U32 };

inline size_t dtype_size(DType d) {
    switch (d) {
        case DType::F32: return 4;
        case DType::F16: return 2;
        case DType::U8: return 1;
        case DType::U32: return 4;
    }
    fail(ErrorCode::UnsupportedDtype, "unknown dtype");
}

inline const char* dtype_name(DType d) {
    switch (d) {
        case DType::F32: return "F32";
        case DType::F16: return "F16";
        case DType::U8: return "U8";
        case DType::U32: return "U32";
    }
    fail(ErrorCode::UnsupportedDtype, "unknown dtype");
}

DType dtype_from_name(const std::string& name);

// Dense row-major tensor. Immutable by convention once placed in a
// NamedTensorMap; the raw byte buffer is the single source of truth so
// container round trips are bit-exact.
struct Tensor {
    DType dtype = DType::F32;
    std::vector<int64_t> shape;
    std::vector<uint8_t> data;

    Tensor() = default;
    Tensor(DType dt, std::vector<int64_t> sh);

    static Tensor from_f32(std::vector<int64_t> sh, std::span<const float> values);
    static Tensor from_f16(std::vector<int64_t> sh, std::span<const float> values);
    static Tensor from_u8(std::vector<int64_t> sh, std::span<const uint8_t> values);
    static Tensor from_u32(std::vector<int64_t> sh, std::span<const uint32_t> values);

    int64_t numel() const;
    size_t byte_size() const { return data.size(); }

    std::span<const float> f32() const;
    std::span<float> f32_mut();
    std::span<const uint8_t> u8() const;
    std::span<const uint32_t> u32() const;

    // Widen any float payload to f32 (copy).
    std::vector<float> to_f32_vector() const;

    bool all_finite() const;

    bool operator==(const Tensor& other) const {
        return dtype == other.dtype && shape == other.shape && data == other.data;
    }
};

// Ordered name -> tensor map. std::map keeps iteration lexicographic,
// which is the canonical container order.
struct NamedTensorMap {
    std::map<std::string, Tensor> entries;
    std::map<std::string, std::string> metadata;

    bool operator==(const NamedTensorMap&) const = default;
};

// Container file format: little-endian u64 header length, UTF-8 JSON
// header {name: {dtype, shape, data_offsets}}, optional "__metadata__",
// then raw payloads at the stated offsets (relative to end of header).
// Compatible with the safetensors layout.
NamedTensorMap load_container(const std::string& path);
void save_container(const NamedTensorMap& map, const std::string& path);

// In-memory flavors, used by tests and hashing.
NamedTensorMap load_container_bytes(std::span<const uint8_t> bytes);
std::vector<uint8_t> save_container_bytes(const NamedTensorMap& map);

} // namespace lwq
