#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qbcat/io.hpp"
#include "qbcat/rng.hpp"

using namespace qbcat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("qbcat_io_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

ClassDictionary tiny_dict() {
    ClassDictionary d;
    d.attr_names = {"a00", "a01", "a02"};
    d.attr_counts = {30, 2, 1};
    d.pred_names = {"p00", "p01", "has attribute"};
    d.pred_counts = {20, 1, 33};
    d.has_attribute_id = 2;
    d.rebuild_index();
    apply_head_tail(d, ThresholdRule::Mean);
    return d;
}

}  // namespace

TEST_CASE("feature store round-trips bit-exactly") {
    TempDir tmp;
    Mat<float> m(1, 2);
    m.at(0, 0) = 0.5f;
    m.at(0, 1) = -1.0f;
    save_feature_store(tmp.file("f.qbcf"), m);
    Mat<float> back = load_feature_store(tmp.file("f.qbcf"));
    REQUIRE(back.rows == 1);
    REQUIRE(back.cols == 2);
    CHECK(back.data == m.data);
}

TEST_CASE("random store round-trip is bit-identical") {
    TempDir tmp;
    Rng rng(77);
    Mat<float> m(100, 16);
    for (auto& v : m.data) v = static_cast<float>(rng.normal());
    save_feature_store(tmp.file("f.qbcf"), m);
    CHECK(load_feature_store(tmp.file("f.qbcf")).data == m.data);
}

TEST_CASE("truncated payload is rejected") {
    TempDir tmp;
    Mat<float> m(2, 3);
    save_feature_store(tmp.file("f.qbcf"), m);
    // keep the header and the first row only
    auto full = fs::file_size(tmp.file("f.qbcf"));
    fs::resize_file(tmp.file("f.qbcf"), full - 3 * sizeof(float));
    CHECK_THROWS_WITH_AS(load_feature_store(tmp.file("f.qbcf")), doctest::Contains("truncated"),
                         std::runtime_error);
}

TEST_CASE("bad magic and zero dim are rejected") {
    TempDir tmp;
    {
        std::ofstream os(tmp.file("bad.qbcf"), std::ios::binary);
        os << "NOPE" << std::string(12, '\0');
    }
    CHECK_THROWS_WITH_AS(load_feature_store(tmp.file("bad.qbcf")), doctest::Contains("magic"),
                         std::runtime_error);
    Mat<float> empty(3, 0);
    CHECK_THROWS(save_feature_store(tmp.file("z.qbcf"), empty));
}

TEST_CASE("dictionary file round-trips and recomputes the partition") {
    TempDir tmp;
    ClassDictionary d = tiny_dict();
    save_dictionary(tmp.file("dict.txt"), d);
    ClassDictionary back = load_dictionary(tmp.file("dict.txt"));
    CHECK(back.attr_names == d.attr_names);
    CHECK(back.attr_counts == d.attr_counts);
    CHECK(back.pred_names == d.pred_names);
    CHECK(back.pred_counts == d.pred_counts);
    CHECK(back.has_attribute_id == 2);
    CHECK(back.attr_is_head == d.attr_is_head);
    CHECK(back.pred_is_head == d.pred_is_head);
    CHECK(back.pred_is_head[2]);  // "has attribute" is always head
}

TEST_CASE("dictionary without the reserved predicate is rejected") {
    TempDir tmp;
    {
        std::ofstream os(tmp.file("dict.txt"));
        os << "[attributes]\na00 5\n[predicates]\np00 3\n";
    }
    CHECK_THROWS_WITH_AS(load_dictionary(tmp.file("dict.txt")),
                         doctest::Contains("has attribute"), std::runtime_error);
}

TEST_CASE("triples round-trip through the text format") {
    TempDir tmp;
    ClassDictionary d = tiny_dict();
    Mat<float> feats(4, 2);
    std::vector<Triple> triples(2);
    triples[0].image_id = 7;
    triples[0].subject_box = 0;
    triples[0].object_box = 1;
    triples[0].predicate = 1;
    triples[0].kind = TripleKind::Relation;
    triples[1].image_id = 7;
    triples[1].subject_box = 2;
    triples[1].attribute = 2;
    triples[1].predicate = 2;
    triples[1].kind = TripleKind::Attribute;

    save_triples(tmp.file("t.ndjson"), triples, d);
    auto back = load_triples(tmp.file("t.ndjson"), feats, d);
    REQUIRE(back.size() == 2);
    CHECK(back[0].kind == TripleKind::Relation);
    CHECK(back[0].predicate == 1);
    CHECK(back[0].object_box == 1);
    CHECK(back[1].kind == TripleKind::Attribute);
    CHECK(back[1].attribute == 2);
    CHECK(back[1].predicate == d.has_attribute_id);
}

TEST_CASE("triple loader rejects bad records") {
    TempDir tmp;
    ClassDictionary d = tiny_dict();
    Mat<float> feats(2, 2);

    auto write = [&](const char* line) {
        std::ofstream os(tmp.file("t.ndjson"));
        os << line << "\n";
    };
    write(R"({"image_id":1,"subject_box":5,"kind":"attribute","attribute":"a00"})");
    CHECK_THROWS_WITH_AS(load_triples(tmp.file("t.ndjson"), feats, d),
                         doctest::Contains("box index"), std::runtime_error);
    write(R"({"image_id":1,"subject_box":0,"kind":"attribute","attribute":"nope"})");
    CHECK_THROWS_WITH_AS(load_triples(tmp.file("t.ndjson"), feats, d),
                         doctest::Contains("unknown attribute"), std::runtime_error);
    write(R"({"image_id":1,"subject_box":0,"kind":"attribute","predicate":"p00","attribute":"a00"})");
    CHECK_THROWS_WITH_AS(load_triples(tmp.file("t.ndjson"), feats, d),
                         doctest::Contains("attribute record"), std::runtime_error);
    write(R"({"image_id":1,"subject_box":0,"kind":"relation","predicate":"zzz","object_box":1})");
    CHECK_THROWS_WITH_AS(load_triples(tmp.file("t.ndjson"), feats, d),
                         doctest::Contains("unknown predicate"), std::runtime_error);
}

TEST_CASE("empty triple file loads as an empty list") {
    TempDir tmp;
    ClassDictionary d = tiny_dict();
    Mat<float> feats(1, 2);
    { std::ofstream os(tmp.file("t.ndjson")); }
    CHECK(load_triples(tmp.file("t.ndjson"), feats, d).empty());
}

TEST_CASE("checkpoint container preserves names and bytes") {
    TempDir tmp;
    Rng rng(5);
    std::vector<NamedTensor> ts(3);
    ts[0].name = "alpha";
    ts[0].value = Mat<float>(2, 3);
    ts[1].name = "beta.gamma";
    ts[1].value = Mat<float>(1, 7);
    ts[2].name = "w";
    ts[2].value = Mat<float>(4, 4);
    for (auto& t : ts)
        for (auto& v : t.value.data) v = static_cast<float>(rng.normal());

    save_checkpoint(tmp.file("m.qbck"), ts);
    auto back = load_checkpoint(tmp.file("m.qbck"));
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].name == ts[i].name);
        CHECK(back[i].value.rows == ts[i].value.rows);
        CHECK(back[i].value.data == ts[i].value.data);
    }
}
