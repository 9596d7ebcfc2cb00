#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "repscope/manifest.hpp"
#include "test_util.hpp"

using namespace repscope;
using nlohmann::json;
using repscope::testing::random_matrix;
using repscope::testing::TempDir;

namespace {

json small_doc() {
    return json{{"format_version", 1},
                {"models", {"exp", {{"model_id", "ctl"}, {"tasks", {"b"}}}}},
                {"layers", 2},
                {"tasks",
                 {{{"task_id", "b"}, {"cluster_id", "c1"}, {"n_examples", 4}, {"text_path", "texts/b.jsonl"}},
                  {{"task_id", "a"}, {"cluster_id", "c0"}, {"n_examples", 3}, {"seen", false}}}}};
}

void write_tensors(const Manifest& m, const std::string& model, const std::string& task, std::size_t rows) {
    for (std::size_t layer = 1; layer <= m.layers; ++layer) {
        const auto path = m.tensor_path(model, task, layer);
        std::filesystem::create_directories(path.parent_path());
        write_tensor(path, random_matrix(rows, 3, layer), DType::Float32);
    }
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::InvalidInput;
}

} // namespace

TEST(Manifest, ParsesBothModelForms) {
    const Manifest m = parse_manifest(small_doc(), "/data");
    ASSERT_EQ(m.models.size(), 2u);
    EXPECT_TRUE(m.covers("exp", "a"));
    EXPECT_TRUE(m.covers("ctl", "b"));
    EXPECT_FALSE(m.covers("ctl", "a"));
    EXPECT_FALSE(m.task("a").seen);
    EXPECT_TRUE(m.task("b").seen);
    EXPECT_EQ(m.tensor_path("exp", "a", 2), std::filesystem::path("/data/exp/a/layer_2.ract"));
    EXPECT_EQ(*m.text_file(m.task("b")), std::filesystem::path("/data/texts/b.jsonl"));
    EXPECT_FALSE(m.text_file(m.task("a")).has_value());
}

TEST(Manifest, JsonRoundTrip) {
    const Manifest m = parse_manifest(small_doc(), "/data");
    const Manifest again = parse_manifest(to_json(m), "/data");
    EXPECT_EQ(to_json(again), to_json(m));
}

TEST(Manifest, PairsSortedByTaskThenLayer) {
    const auto pairs = enumerate_pairs(parse_manifest(small_doc(), "/x"));
    ASSERT_EQ(pairs.size(), 4u);
    EXPECT_EQ(pairs[0].task, "a");
    EXPECT_EQ(pairs[0].layer, 1u);
    EXPECT_EQ(pairs[1].layer, 2u);
    EXPECT_EQ(pairs[3].task, "b");
}

TEST(Manifest, RejectsMalformedDocuments) {
    auto doc = small_doc();
    doc["layers"] = 0;
    EXPECT_EQ(kind_of([&] { parse_manifest(doc, "."); }), ErrorKind::ManifestError);

    doc = small_doc();
    doc["tasks"].push_back(doc["tasks"][0]);
    EXPECT_EQ(kind_of([&] { parse_manifest(doc, "."); }), ErrorKind::ManifestError);

    doc = small_doc();
    doc["models"].push_back("exp");
    EXPECT_EQ(kind_of([&] { parse_manifest(doc, "."); }), ErrorKind::ManifestError);

    doc = small_doc();
    doc["models"][1]["tasks"] = {"zzz"};
    EXPECT_EQ(kind_of([&] { parse_manifest(doc, "."); }), ErrorKind::ManifestError);

    doc = small_doc();
    doc["tasks"][0].erase("n_examples");
    EXPECT_EQ(kind_of([&] { parse_manifest(doc, "."); }), ErrorKind::ManifestError);

    doc = small_doc();
    doc["format_version"] = 2;
    EXPECT_EQ(kind_of([&] { parse_manifest(doc, "."); }), ErrorKind::ManifestError);
}

TEST(Manifest, LoadReportsBadJson) {
    TempDir dir;
    std::ofstream(dir.path() / "manifest.json") << "{ not json";
    EXPECT_EQ(kind_of([&] { load_manifest(dir.path() / "manifest.json"); }), ErrorKind::ManifestError);
}

TEST(Manifest, ValidateChecksCoveredTriples) {
    TempDir dir;
    const Manifest m = parse_manifest(small_doc(), dir.path());
    write_tensors(m, "exp", "a", 3);
    write_tensors(m, "exp", "b", 4);
    EXPECT_EQ(kind_of([&] { validate_manifest(m); }), ErrorKind::ManifestError);
    write_tensors(m, "ctl", "b", 4);
    EXPECT_NO_THROW(validate_manifest(m));

    write_tensor(m.tensor_path("exp", "a", 2), random_matrix(5, 3, 9), DType::Float64);
    EXPECT_EQ(kind_of([&] { validate_manifest(m); }), ErrorKind::ShapeMismatch);
}

TEST(Manifest, LoadPairChecksCoverageAndRows) {
    TempDir dir;
    const Manifest m = parse_manifest(small_doc(), dir.path());
    write_tensors(m, "exp", "b", 4);
    write_tensors(m, "ctl", "b", 4);
    write_tensors(m, "exp", "a", 3);

    TensorCache cache;
    const auto [x, y] = load_pair(m, "exp", "ctl", "b", 1, &cache);
    EXPECT_EQ(x.rows(), 4u);
    EXPECT_EQ(y.rows(), 4u);
    EXPECT_EQ(cache.size(), 2u);
    load_pair(m, "exp", "ctl", "b", 1, &cache);
    EXPECT_EQ(cache.size(), 2u);

    EXPECT_EQ(kind_of([&] { load_pair(m, "exp", "ctl", "a", 1); }), ErrorKind::ManifestError);
    EXPECT_EQ(kind_of([&] { load_pair(m, "exp", "nope", "b", 1); }), ErrorKind::ManifestError);
    EXPECT_EQ(kind_of([&] { load_pair(m, "exp", "ctl", "b", 3); }), ErrorKind::ManifestError);

    write_tensor(m.tensor_path("ctl", "b", 2), random_matrix(5, 3, 1), DType::Float32);
    EXPECT_EQ(kind_of([&] { load_pair(m, "exp", "ctl", "b", 2); }), ErrorKind::ShapeMismatch);
}

TEST(Manifest, ReadTextsSkipsBlankLines) {
    TempDir dir;
    const auto path = dir.path() / "t.jsonl";
    std::ofstream(path) << "{\"text\": \"One.\"}\n\n{\"text\": \"Two \\u00e9.\", \"id\": 3}\n";
    const auto texts = read_texts(path);
    ASSERT_EQ(texts.size(), 2u);
    EXPECT_EQ(texts[1], "Two \xc3\xa9.");

    std::ofstream(path) << "{\"body\": 1}\n";
    EXPECT_EQ(kind_of([&] { read_texts(path); }), ErrorKind::FormatError);
}
