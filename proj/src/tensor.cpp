// SPDX-License-Identifier: Apache-2.0
#include "tensor.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace lwq {

using nlohmann::json;

DType dtype_from_name(const std::string& name) {
    if (name == "F32") return DType::F32;
    if (name == "F16") return DType::F16;
    if (name == "U8") return DType::U8;
    if (name == "U32") return DType::U32;
    fail(ErrorCode::UnsupportedDtype, "unsupported dtype: " + name);
}

static int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) fail(ErrorCode::InvalidInput, "non-positive dimension in shape");
        n *= d;
    }
    return n;
}

Tensor::Tensor(DType dt, std::vector<int64_t> sh) : dtype(dt), shape(std::move(sh)) {
    data.resize(static_cast<size_t>(shape_numel(shape)) * dtype_size(dtype));
}

Tensor Tensor::from_f32(std::vector<int64_t> sh, std::span<const float> values) {
    Tensor t(DType::F32, std::move(sh));
    if (static_cast<int64_t>(values.size()) != t.numel())
        fail(ErrorCode::InvalidInput, "value count does not match shape");
    std::memcpy(t.data.data(), values.data(), values.size() * 4);
    return t;
}

Tensor Tensor::from_f16(std::vector<int64_t> sh, std::span<const float> values) {
    Tensor t(DType::F16, std::move(sh));
    if (static_cast<int64_t>(values.size()) != t.numel())
        fail(ErrorCode::InvalidInput, "value count does not match shape");
    auto* out = reinterpret_cast<uint16_t*>(t.data.data());
    for (size_t i = 0; i < values.size(); i++) out[i] = f32_to_f16_bits(values[i]);
    return t;
}

Tensor Tensor::from_u8(std::vector<int64_t> sh, std::span<const uint8_t> values) {
    Tensor t(DType::U8, std::move(sh));
    if (static_cast<int64_t>(values.size()) != t.numel())
        fail(ErrorCode::InvalidInput, "value count does not match shape");
    std::memcpy(t.data.data(), values.data(), values.size());
    return t;
}

Tensor Tensor::from_u32(std::vector<int64_t> sh, std::span<const uint32_t> values) {
    Tensor t(DType::U32, std::move(sh));
    if (static_cast<int64_t>(values.size()) != t.numel())
        fail(ErrorCode::InvalidInput, "value count does not match shape");
    std::memcpy(t.data.data(), values.data(), values.size() * 4);
    return t;
}

int64_t Tensor::numel() const { return shape_numel(shape); }

std::span<const float> Tensor::f32() const {
    if (dtype != DType::F32) fail(ErrorCode::UnsupportedDtype, "tensor is not F32");
    return {reinterpret_cast<const float*>(data.data()), data.size() / 4};
}

std::span<float> Tensor::f32_mut() {
    if (dtype != DType::F32) fail(ErrorCode::UnsupportedDtype, "tensor is not F32");
    return {reinterpret_cast<float*>(data.data()), data.size() / 4};
}

std::span<const uint8_t> Tensor::u8() const {
    if (dtype != DType::U8) fail(ErrorCode::UnsupportedDtype, "tensor is not U8");
    return {data.data(), data.size()};
}

std::span<const uint32_t> Tensor::u32() const {
    if (dtype != DType::U32) fail(ErrorCode::UnsupportedDtype, "tensor is not U32");
    return {reinterpret_cast<const uint32_t*>(data.data()), data.size() / 4};
}

std::vector<float> Tensor::to_f32_vector() const {
    std::vector<float> out(static_cast<size_t>(numel()));
    if (dtype == DType::F32) {
        std::memcpy(out.data(), data.data(), data.size());
    } else if (dtype == DType::F16) {
        auto* in = reinterpret_cast<const uint16_t*>(data.data());
        for (size_t i = 0; i < out.size(); i++) out[i] = f16_bits_to_f32(in[i]);
    } else {
        fail(ErrorCode::UnsupportedDtype, "cannot widen non-float tensor to f32");
    }
    return out;
}

bool Tensor::all_finite() const {
    if (dtype == DType::U8 || dtype == DType::U32) return true;
    if (dtype == DType::F32) {
        for (float v : f32())
            if (!std::isfinite(v)) return false;
        return true;
    }
    auto* in = reinterpret_cast<const uint16_t*>(data.data());
    for (size_t i = 0; i < data.size() / 2; i++) {
        // Exponent all-ones means inf/nan in binary16.
        if ((in[i] & 0x7C00u) == 0x7C00u) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Container format
// ---------------------------------------------------------------------------

static uint64_t read_le_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; i--) v = (v << 8) | p[i];
    return v;
}

static void write_le_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; i++) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

NamedTensorMap load_container_bytes(std::span<const uint8_t> bytes) {
    if (bytes.size() < 8) fail(ErrorCode::FormatError, "container shorter than header length field");
    uint64_t header_len = read_le_u64(bytes.data());
    if (header_len > bytes.size() - 8)
        fail(ErrorCode::FormatError, "header length " + std::to_string(header_len) +
                                         " exceeds file size " + std::to_string(bytes.size()));
    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<size_t>(header_len));
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("malformed container header JSON: ") + e.what());
    }
    if (!header.is_object()) fail(ErrorCode::FormatError, "container header is not a JSON object");

    const size_t payload_begin = 8 + static_cast<size_t>(header_len);
    const size_t payload_size = bytes.size() - payload_begin;

    NamedTensorMap map;
    std::vector<std::pair<uint64_t, uint64_t>> extents;
    for (auto it = header.begin(); it != header.end(); ++it) {
        if (it.key() == "__metadata__") {
            if (!it.value().is_object()) fail(ErrorCode::FormatError, "__metadata__ is not an object");
            for (auto m = it.value().begin(); m != it.value().end(); ++m) {
                if (!m.value().is_string()) fail(ErrorCode::FormatError, "__metadata__ values must be strings");
                map.metadata[m.key()] = m.value().get<std::string>();
            }
            continue;
        }
        const json& entry = it.value();
        if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
            !entry.contains("data_offsets"))
            fail(ErrorCode::FormatError, "tensor entry missing dtype/shape/data_offsets: " + it.key());

        Tensor t;
        t.dtype = dtype_from_name(entry["dtype"].get<std::string>());
        for (const auto& d : entry["shape"]) t.shape.push_back(d.get<int64_t>());
        const auto& off = entry["data_offsets"];
        if (!off.is_array() || off.size() != 2) fail(ErrorCode::FormatError, "bad data_offsets for " + it.key());
        uint64_t begin = off[0].get<uint64_t>();
        uint64_t end = off[1].get<uint64_t>();
        if (end < begin || end > payload_size)
            fail(ErrorCode::FormatError, "tensor extent out of bounds for " + it.key() + " at payload offset " +
                                             std::to_string(begin));
        uint64_t expect = static_cast<uint64_t>(shape_numel(t.shape)) * dtype_size(t.dtype);
        if (end - begin != expect)
            fail(ErrorCode::FormatError, "tensor byte span does not match shape for " + it.key());
        t.data.assign(bytes.begin() + payload_begin + begin, bytes.begin() + payload_begin + end);
        if ((t.dtype == DType::F32 || t.dtype == DType::F16) && !t.all_finite())
            fail(ErrorCode::FormatError, "non-finite value in tensor " + it.key());
        extents.emplace_back(begin, end);
        if (!map.entries.emplace(it.key(), std::move(t)).second)
            fail(ErrorCode::FormatError, "duplicate tensor name " + it.key());
    }

    // Extents must not overlap.
    std::sort(extents.begin(), extents.end());
    for (size_t i = 1; i < extents.size(); i++)
        if (extents[i].first < extents[i - 1].second)
            fail(ErrorCode::FormatError, "overlapping tensor extents at payload offset " +
                                             std::to_string(extents[i].first));
    return map;
}

std::vector<uint8_t> save_container_bytes(const NamedTensorMap& map) {
    json header = json::object();
    uint64_t offset = 0;
    for (const auto& [name, t] : map.entries) {
        json entry;
        entry["dtype"] = dtype_name(t.dtype);
        entry["shape"] = t.shape;
        entry["data_offsets"] = {offset, offset + t.data.size()};
        header[name] = entry;
        offset += t.data.size();
    }
    if (!map.metadata.empty()) {
        json md = json::object();
        for (const auto& [k, v] : map.metadata) md[k] = v;
        header["__metadata__"] = md;
    }
    std::string header_str = header.dump();

    std::vector<uint8_t> out;
    out.reserve(8 + header_str.size() + offset);
    write_le_u64(out, header_str.size());
    out.insert(out.end(), header_str.begin(), header_str.end());
    for (const auto& [name, t] : map.entries) out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
}

NamedTensorMap load_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCode::IoError, "read failure on " + path);
    return load_container_bytes(bytes);
}

void save_container(const NamedTensorMap& map, const std::string& path) {
    std::vector<uint8_t> bytes = save_container_bytes(map);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "write failure on " + path);
}

} // namespace lwq
