#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>

#include "qbcat/rng.hpp"
#include "qbcat/schema.hpp"

using namespace qbcat;

namespace {

Triple relation(std::int64_t img, std::int32_t s, std::int32_t o, std::int32_t p) {
    Triple t;
    t.image_id = img;
    t.subject_box = s;
    t.object_box = o;
    t.predicate = p;
    t.kind = TripleKind::Relation;
    return t;
}

Triple attribute(std::int64_t img, std::int32_t s, std::int32_t a, std::int32_t has_attr) {
    Triple t;
    t.image_id = img;
    t.subject_box = s;
    t.attribute = a;
    t.predicate = has_attr;
    t.kind = TripleKind::Attribute;
    return t;
}

}  // namespace

TEST_CASE("build_questions per triple kind") {
    std::vector<Triple> one = {relation(0, 0, 1, 0)};
    auto qs = build_questions(one);
    REQUIRE(qs.size() == 3);
    CHECK(qs[0].qtype == QuestionType::SPOS);
    CHECK(qs[1].qtype == QuestionType::SPOP);
    CHECK(qs[2].qtype == QuestionType::SPOO);

    CHECK(build_questions({}).empty());

    std::vector<Triple> mix = {relation(0, 0, 1, 0), relation(0, 1, 0, 1), attribute(1, 2, 3, 9)};
    auto qmix = build_questions(mix);
    REQUIRE(qmix.size() == 9);
    std::map<QuestionType, int> counts;
    for (const auto& q : qmix) counts[q.qtype]++;
    CHECK(counts[QuestionType::SPOS] == 2);
    CHECK(counts[QuestionType::SPAS] == 1);
    CHECK(counts[QuestionType::SPOP] == 2);
    CHECK(counts[QuestionType::SPAP] == 1);
    CHECK(counts[QuestionType::SPOO] == 2);
    CHECK(counts[QuestionType::SPAA] == 1);
}

TEST_CASE("build_questions output size is always 3x") {
    Rng rng(4);
    std::vector<Triple> triples;
    for (int i = 0; i < 57; ++i) {
        if (rng.below(2))
            triples.push_back(relation(i, 0, 1, 0));
        else
            triples.push_back(attribute(i, 0, 0, 5));
    }
    CHECK(build_questions(triples).size() == 3 * triples.size());
}

TEST_CASE("question ids encode triple index and qtype") {
    QuestionId id = make_question_id(42, QuestionType::SPOO);
    CHECK(question_triple_index(id) == 42);
    CHECK(question_qtype(id) == QuestionType::SPOO);
}

TEST_CASE("head_tail_split with mean threshold") {
    auto split = head_tail_split({5, 5, 20, 30}, ThresholdRule::Mean);
    CHECK(split.threshold == doctest::Approx(15.0));
    CHECK_FALSE(split.is_head[0]);
    CHECK_FALSE(split.is_head[1]);
    CHECK(split.is_head[2]);
    CHECK(split.is_head[3]);
}

TEST_CASE("head_tail_split fixed threshold mirrors the rounding convention") {
    // mean would be 10973 here; a fixed 10000 keeps the borderline class in the head
    auto split = head_tail_split({21446, 10500, 973}, ThresholdRule::Fixed, 10000.0);
    CHECK(split.is_head[0]);
    CHECK(split.is_head[1]);  // above 10000 though below the mean
    CHECK_FALSE(split.is_head[2]);
}

TEST_CASE("equal counts put every class in the tail under the mean rule") {
    auto split = head_tail_split({7, 7, 7}, ThresholdRule::Mean);
    for (bool h : split.is_head) CHECK_FALSE(h);
}

TEST_CASE("head_tail_split validates input") {
    CHECK_THROWS(head_tail_split({}, ThresholdRule::Mean));
    CHECK_THROWS(head_tail_split({1, -2}, ThresholdRule::Mean));
}

TEST_CASE("excluded class is always head and outside the mean") {
    // counts: the excluded class dwarfs the rest; mean over the others is 1
    auto split = head_tail_split({1000, 1, 1, 2}, ThresholdRule::Mean, 0.0, 0);
    CHECK(split.threshold == doctest::Approx(4.0 / 3.0));
    CHECK(split.is_head[0]);
    CHECK_FALSE(split.is_head[1]);
    CHECK_FALSE(split.is_head[2]);
    CHECK(split.is_head[3]);
}

TEST_CASE("fixed-rule head membership is monotone in the count") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::int64_t> counts(6);
        for (auto& c : counts) c = static_cast<std::int64_t>(rng.below(100));
        double thr = static_cast<double>(rng.below(100));
        auto before = head_tail_split(counts, ThresholdRule::Fixed, thr);
        std::size_t k = rng.below(counts.size());
        counts[k] += 1 + static_cast<std::int64_t>(rng.below(50));
        auto after = head_tail_split(counts, ThresholdRule::Fixed, thr);
        if (before.is_head[k]) CHECK(after.is_head[k]);
    }
}

TEST_CASE("question class follows predicate for relations, attribute otherwise") {
    Dataset data;
    data.features = Mat<float>(4, 2);
    data.triples = {relation(0, 0, 1, 3), attribute(1, 2, 7, 9)};
    data.dict.attr_names.resize(8);
    data.dict.attr_counts.assign(8, 1);
    data.dict.attr_is_head.assign(8, false);
    data.dict.pred_names.resize(10);
    data.dict.pred_counts.assign(10, 1);
    data.dict.pred_is_head.assign(10, false);
    data.dict.pred_is_head[3] = true;
    data.build_indices();

    auto qs = build_questions(data.triples);
    CHECK(question_class(data, qs[0]) == 3);  // SPOS from the relation
    CHECK(question_class(data, qs[3]) == 7);  // SPAS from the attribute
    CHECK_FALSE(question_class_is_tail(data, qs[0]));
    CHECK(question_class_is_tail(data, qs[3]));
}

TEST_CASE("dataset indices reject a box shared across images") {
    Dataset data;
    data.features = Mat<float>(3, 2);
    data.triples = {relation(0, 0, 1, 0), relation(1, 1, 2, 0)};  // box 1 in two images
    CHECK_THROWS(data.build_indices());
}

TEST_CASE("image box lists cover subjects and objects once") {
    Dataset data;
    data.features = Mat<float>(3, 2);
    data.triples = {relation(5, 0, 1, 0), attribute(5, 2, 0, 1), relation(5, 1, 0, 2)};
    data.build_indices();
    REQUIRE(data.image_boxes.count(5) == 1);
    CHECK(data.image_boxes.at(5).size() == 3);
    CHECK(data.box_image[0] == 5);
    CHECK(data.box_image[2] == 5);
}
