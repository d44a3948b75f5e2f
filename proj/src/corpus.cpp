// SPDX-License-Identifier: Apache-2.0
#include "corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "errors.hpp"

namespace lwq {

namespace fs = std::filesystem;

std::vector<int32_t> tokenize_bytes(const std::string& text) {
    std::vector<int32_t> tokens;
    tokens.reserve(text.size());
    for (unsigned char c : text) tokens.push_back(static_cast<int32_t>(c));
    return tokens;
}

static std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<std::string> collect_corpus_paths(const std::string& dir_or_file) {
    std::vector<std::string> paths;
    if (fs::is_directory(dir_or_file)) {
        for (const auto& e : fs::directory_iterator(dir_or_file))
            if (e.is_regular_file() && e.path().extension() == ".txt") paths.push_back(e.path().string());
        std::sort(paths.begin(), paths.end());
    } else if (fs::is_regular_file(dir_or_file)) {
        paths.push_back(dir_or_file);
    } else {
        fail(ErrorCode::IoError, "no such corpus file or directory: " + dir_or_file);
    }
    return paths;
}

TokenBatch build_batches(const CorpusSpec& spec) {
    if (spec.seq_len < 1) fail(ErrorCode::InvalidInput, "seq_len must be >= 1");
    if (spec.stride < 1 || spec.stride > spec.seq_len)
        fail(ErrorCode::InvalidInput, "stride must be in [1, seq_len]");

    std::vector<std::string> paths = spec.paths;
    std::sort(paths.begin(), paths.end());
    if (spec.max_docs && static_cast<int64_t>(paths.size()) > *spec.max_docs)
        paths.resize(static_cast<size_t>(*spec.max_docs));
    if (paths.empty()) fail(ErrorCode::EmptyCorpus, "corpus has no documents");

    TokenBatch batch;
    for (const auto& path : paths) {
        std::vector<int32_t> doc = tokenize_bytes(read_file(path));
        int64_t len = static_cast<int64_t>(doc.size());
        for (int64_t start = 0; start < len; start += spec.stride) {
            int64_t end = std::min(len, start + spec.seq_len);
            batch.sequences.emplace_back(doc.begin() + start, doc.begin() + end);
            if (end == len) break;
        }
    }
    if (batch.sequences.empty()) fail(ErrorCode::EmptyCorpus, "corpus documents are all empty");
    return batch;
}

std::string corpus_fingerprint(const CorpusSpec& spec) {
    uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        for (size_t i = 0; i < n; i++) {
            h ^= b[i];
            h *= 0x100000001B3ULL;
        }
    };
    std::vector<std::string> paths = spec.paths;
    std::sort(paths.begin(), paths.end());
    if (spec.max_docs && static_cast<int64_t>(paths.size()) > *spec.max_docs)
        paths.resize(static_cast<size_t>(*spec.max_docs));
    for (const auto& path : paths) {
        std::string bytes = read_file(path);
        mix(bytes.data(), bytes.size());
    }
    int64_t params[2] = {spec.seq_len, spec.stride};
    mix(params, sizeof(params));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace lwq
