// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lwq {

struct CorpusSpec {
    std::vector<std::string> paths; // processed in sorted order
    std::optional<int64_t> max_docs;
    int64_t seq_len = 256;
    int64_t stride = 256;
};

struct TokenBatch {
    std::vector<std::vector<int32_t>> sequences;

    int64_t total_tokens() const {
        int64_t n = 0;
        for (const auto& s : sequences) n += static_cast<int64_t>(s.size());
        return n;
    }
};

// Byte-level tokenizer: one token per byte of the UTF-8 encoding.
std::vector<int32_t> tokenize_bytes(const std::string& text);

// Windows every document into seq_len-sized chunks at the given stride;
// the final short window is kept. Deterministic in (file bytes, spec).
TokenBatch build_batches(const CorpusSpec& spec);

// All .txt files directly under `dir`, sorted by path. A plain file path
// is accepted as a single-document corpus.
std::vector<std::string> collect_corpus_paths(const std::string& dir_or_file);

// FNV-1a over file bytes and spec parameters; identifies the calibration
// inputs inside importance reports.
std::string corpus_fingerprint(const CorpusSpec& spec);

} // namespace lwq
