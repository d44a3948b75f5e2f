// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "corpus.hpp"
#include "errors.hpp"

using namespace lwq;

namespace {

struct TempDoc {
    std::string path;
    explicit TempDoc(const char* name, const std::string& text) {
        path = (std::filesystem::temp_directory_path() / name).string();
        std::ofstream(path, std::ios::binary) << text;
    }
    ~TempDoc() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("tokenize: one token per byte, ASCII identity") {
    auto toks = tokenize_bytes("Ab z");
    CHECK(toks == std::vector<int32_t>{65, 98, 32, 122});
}

TEST_CASE("tokenize: multibyte UTF-8 splits into its bytes") {
    auto toks = tokenize_bytes("\xC3\xA9"); // e-acute
    CHECK(toks == std::vector<int32_t>{195, 169});
}

TEST_CASE("tokenize: all values stay within byte range") {
    std::string all;
    for (int i = 0; i < 256; i++) all.push_back(static_cast<char>(i));
    auto toks = tokenize_bytes(all);
    REQUIRE(toks.size() == 256);
    for (int i = 0; i < 256; i++) CHECK(toks[size_t(i)] == i);
}

TEST_CASE("batches: windows at the stride keep the final short window") {
    TempDoc doc("lwq_corpus_a.txt", "0123456789"); // 10 bytes
    CorpusSpec spec;
    spec.paths = {doc.path};
    spec.seq_len = 4;
    spec.stride = 4;
    TokenBatch b = build_batches(spec);
    REQUIRE(b.sequences.size() == 3);
    CHECK(b.sequences[0] == std::vector<int32_t>{'0', '1', '2', '3'});
    CHECK(b.sequences[1] == std::vector<int32_t>{'4', '5', '6', '7'});
    CHECK(b.sequences[2] == std::vector<int32_t>{'8', '9'});
    CHECK(b.total_tokens() == 10);
}

TEST_CASE("batches: overlapping stride") {
    TempDoc doc("lwq_corpus_b.txt", "abcdef");
    CorpusSpec spec;
    spec.paths = {doc.path};
    spec.seq_len = 4;
    spec.stride = 2;
    TokenBatch b = build_batches(spec);
    // Windowing stops once a window reaches the document end, so the tail
    // is never emitted twice.
    REQUIRE(b.sequences.size() == 2);
    CHECK(b.sequences[0] == std::vector<int32_t>{'a', 'b', 'c', 'd'});
    CHECK(b.sequences[1] == std::vector<int32_t>{'c', 'd', 'e', 'f'});
}

TEST_CASE("batches: window concatenation reproduces the document") {
    TempDoc doc("lwq_corpus_c.txt", "the quick brown fox jumps over the lazy dog");
    CorpusSpec spec;
    spec.paths = {doc.path};
    spec.seq_len = 7;
    spec.stride = 7;
    TokenBatch b = build_batches(spec);
    std::string rebuilt;
    for (const auto& s : b.sequences)
        for (int32_t t : s) rebuilt.push_back(static_cast<char>(t));
    CHECK(rebuilt == "the quick brown fox jumps over the lazy dog");
}

TEST_CASE("batches: max_docs truncates after sorting") {
    TempDoc d1("lwq_corpus_m1.txt", "aaaa");
    TempDoc d2("lwq_corpus_m2.txt", "bbbb");
    CorpusSpec spec;
    spec.paths = {d2.path, d1.path}; // given out of order
    spec.max_docs = 1;
    spec.seq_len = 4;
    spec.stride = 4;
    TokenBatch b = build_batches(spec);
    REQUIRE(b.sequences.size() == 1);
    CHECK(b.sequences[0][0] == 'a'); // sorted order puts m1 first
}

TEST_CASE("batches: empty corpus is an error") {
    CorpusSpec spec;
    spec.seq_len = 4;
    spec.stride = 4;
    CHECK_THROWS_AS(build_batches(spec), Error);
    TempDoc empty("lwq_corpus_empty.txt", "");
    spec.paths = {empty.path};
    try {
        build_batches(spec);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyCorpus);
    }
}

TEST_CASE("batches: invalid window parameters rejected") {
    TempDoc doc("lwq_corpus_inv.txt", "abc");
    CorpusSpec spec;
    spec.paths = {doc.path};
    spec.seq_len = 0;
    CHECK_THROWS_AS(build_batches(spec), Error);
    spec.seq_len = 4;
    spec.stride = 0;
    CHECK_THROWS_AS(build_batches(spec), Error);
}

TEST_CASE("collect_corpus_paths: directory listing is sorted, single file accepted") {
    auto dir = std::filesystem::temp_directory_path() / "lwq_corpus_dir";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "z.txt") << "z";
    std::ofstream(dir / "a.txt") << "a";
    std::ofstream(dir / "ignored.bin") << "x";
    auto paths = collect_corpus_paths(dir.string());
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].ends_with("a.txt"));
    CHECK(paths[1].ends_with("z.txt"));
    auto single = collect_corpus_paths((dir / "a.txt").string());
    REQUIRE(single.size() == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("fingerprint: sensitive to content and window parameters") {
    TempDoc d1("lwq_corpus_f1.txt", "hello world");
    CorpusSpec a;
    a.paths = {d1.path};
    a.seq_len = 8;
    a.stride = 8;
    std::string fp = corpus_fingerprint(a);
    CHECK(fp.size() == 16);
    CHECK(corpus_fingerprint(a) == fp); // deterministic
    CorpusSpec b = a;
    b.seq_len = 4;
    CHECK(corpus_fingerprint(b) != fp);
    TempDoc d2("lwq_corpus_f2.txt", "hello worle");
    CorpusSpec c = a;
    c.paths = {d2.path};
    CHECK(corpus_fingerprint(c) != fp);
}
