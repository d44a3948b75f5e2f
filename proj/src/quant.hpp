// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace lwq {

enum class Scheme { GroupAffine, SymmetricPerTensor, SymmetricPerChannel, OutlierAffine };

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct GroupAffineParams {
    int bits = 4;        // one of {2, 4, 8}
    int64_t group_size = 128; // elements per group over the flattened tensor
};

struct SymmetricParams {
    bool per_channel = false;
    int axis = 0; // channel axis when per_channel
};

struct QuantizedTensor {
    Scheme scheme = Scheme::GroupAffine;
    int bits = 4;
    int64_t group_size = 128;
    std::vector<int64_t> shape;      // original shape
    std::vector<uint8_t> packed;     // codes, LSB-first within each byte
    std::vector<float> scales;       // one per group (or per channel / tensor)
    std::vector<float> shifts;       // one per group; zeros for symmetric
    std::vector<uint32_t> outlier_idx; // strictly increasing flat indices
    std::vector<uint16_t> outlier_val; // f16 bit patterns
    int channel_axis = -1;

    int64_t numel() const;
    int64_t n_groups() const;
};

// Round-to-nearest group-wise affine quantization. Per group:
// scale = (max-min)/(2^bits-1), shift = min, code = round((x-shift)/scale)
// with half-away-from-zero ties; a constant group gets scale 1, codes 0.
QuantizedTensor quantize_group_affine(const Tensor& t, const GroupAffineParams& p);

// Symmetric int8: scale = max|x|/127 per tensor or per channel, codes in
// [-127, 127] stored offset-by-128 in the packed bytes.
QuantizedTensor quantize_symmetric_int8(const Tensor& t, const SymmetricParams& p);

// Group-affine with the ceil(fraction*n) largest-|x| elements (ties to the
// lower flat index) kept verbatim as f16 outliers. Outliers are excluded
// from group statistics and carry code 0.
QuantizedTensor quantize_outlier_affine(const Tensor& t, const GroupAffineParams& p, double outlier_fraction);

// Dequantize back to F32; outlier positions are overwritten last.
Tensor dequantize(const QuantizedTensor& q);

// Bit packing, LSB-first within each byte, flat row-major code order.
std::vector<uint8_t> pack_codes(std::span<const uint32_t> codes, int bits);
std::vector<uint32_t> unpack_codes(std::span<const uint8_t> bytes, int bits, int64_t n);

struct ByteCounts {
    uint64_t exact = 0;     // packed + 4B/scale + 4B/shift + 6B/outlier
    uint64_t idealized = 0; // n_elems * bits / 8, the textbook arithmetic
};

ByteCounts quantized_bytes(const QuantizedTensor& q);

// Same accounting without materializing the quantization.
ByteCounts predict_quantized_bytes(int64_t numel, int bits, int64_t group_size, double outlier_fraction);

// Quantized-container naming: tensor T becomes T.qweight/T.scales/T.shifts
// (+T.outlier_idx/T.outlier_val) with metadata keys T.bits etc.
void put_quantized(NamedTensorMap& map, const std::string& name, const QuantizedTensor& q);
bool has_quantized(const NamedTensorMap& map, const std::string& name);
QuantizedTensor get_quantized(const NamedTensorMap& map, const std::string& name);

} // namespace lwq
