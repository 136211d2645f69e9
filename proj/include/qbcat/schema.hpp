#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "qbcat/tensor.hpp"

namespace qbcat {

// One question type per maskable slot: SPOS (?,p,o), SPAS (?,p,a),
// SPOP (s,?,o), SPAP (s,?,a), SPOO (s,p,?), SPAA (s,p,a?).
enum class QuestionType : std::uint8_t { SPOS = 0, SPAS, SPOP, SPAP, SPOO, SPAA };
inline constexpr int kNumQuestionTypes = 6;

inline const char* qtype_name(QuestionType q) {
    switch (q) {
        case QuestionType::SPOS: return "SPOS";
        case QuestionType::SPAS: return "SPAS";
        case QuestionType::SPOP: return "SPOP";
        case QuestionType::SPAP: return "SPAP";
        case QuestionType::SPOO: return "SPOO";
        case QuestionType::SPAA: return "SPAA";
    }
    return "?";
}

inline bool qtype_is_attribute_kind(QuestionType q) {
    return q == QuestionType::SPAS || q == QuestionType::SPAP || q == QuestionType::SPAA;
}

// Box targets are scored against the boxes of the question's image;
// predicate/attribute targets against the class vocabulary.
inline bool qtype_has_box_target(QuestionType q) {
    return q == QuestionType::SPOS || q == QuestionType::SPAS || q == QuestionType::SPOO;
}

enum class TripleKind : std::uint8_t { Relation, Attribute };

// Box features live in one global feature matrix; a box is its row index.
struct Triple {
    std::int64_t image_id = 0;
    std::int32_t subject_box = -1;  // feature row
    std::int32_t object_box = -1;   // feature row, Relation only
    std::int32_t predicate = -1;    // predicate class id
    std::int32_t attribute = -1;    // attribute class id, Attribute only
    TripleKind kind = TripleKind::Relation;
};

// Question ids are (triple index, qtype) and therefore replayable.
using QuestionId = std::uint64_t;

inline QuestionId make_question_id(std::size_t triple_index, QuestionType q) {
    return static_cast<QuestionId>(triple_index) * kNumQuestionTypes + static_cast<QuestionId>(q);
}
inline std::size_t question_triple_index(QuestionId id) { return id / kNumQuestionTypes; }
inline QuestionType question_qtype(QuestionId id) {
    return static_cast<QuestionType>(id % kNumQuestionTypes);
}

struct Question {
    QuestionId id = 0;
    std::size_t triple_index = 0;
    QuestionType qtype = QuestionType::SPOS;
};

// Attribute and predicate vocabularies with per-class train counts and the
// head/tail partition.
struct ClassDictionary {
    std::vector<std::string> attr_names;
    std::vector<std::int64_t> attr_counts;
    std::vector<bool> attr_is_head;
    std::vector<std::string> pred_names;
    std::vector<std::int64_t> pred_counts;
    std::vector<bool> pred_is_head;
    std::int32_t has_attribute_id = -1;  // reserved predicate

    std::size_t n_attr() const { return attr_names.size(); }
    std::size_t n_pred() const { return pred_names.size(); }

    std::int32_t attr_id(const std::string& name) const {
        auto it = attr_index_.find(name);
        return it == attr_index_.end() ? -1 : it->second;
    }
    std::int32_t pred_id(const std::string& name) const {
        auto it = pred_index_.find(name);
        return it == pred_index_.end() ? -1 : it->second;
    }
    void rebuild_index() {
        attr_index_.clear();
        pred_index_.clear();
        for (std::size_t i = 0; i < attr_names.size(); ++i) attr_index_[attr_names[i]] = static_cast<std::int32_t>(i);
        for (std::size_t i = 0; i < pred_names.size(); ++i) pred_index_[pred_names[i]] = static_cast<std::int32_t>(i);
    }

private:
    std::unordered_map<std::string, std::int32_t> attr_index_;
    std::unordered_map<std::string, std::int32_t> pred_index_;
};

enum class ThresholdRule { Mean, Fixed };

struct HeadTailSplit {
    std::vector<bool> is_head;
    double threshold = 0.0;
};

// Head classes are those whose count strictly exceeds the threshold. The Mean
// rule uses the arithmetic mean of the counts; `exclude` marks indices left
// out of the mean and forced into the head (the "has attribute" predicate).
HeadTailSplit head_tail_split(const std::vector<std::int64_t>& counts, ThresholdRule rule,
                              double fixed_threshold = 0.0, std::int32_t exclude_always_head = -1);

// Applies head_tail_split to both vocabularies of a dictionary in place.
void apply_head_tail(ClassDictionary& dict, ThresholdRule rule, double attr_threshold = 0.0,
                     double pred_threshold = 0.0);

// A dataset: feature store + triples + dictionary + derived per-image indices.
struct Dataset {
    Mat<float> features;  // boxes × feature_dim
    std::vector<Triple> triples;
    ClassDictionary dict;

    // derived
    std::vector<std::int64_t> box_image;               // feature row -> image id (-1 unused)
    std::unordered_map<std::int64_t, std::vector<std::int32_t>> image_boxes;

    void build_indices();
};

// Every Relation triple yields SPOS, SPOP, SPOO; every Attribute triple yields
// SPAS, SPAP, SPAA; output order is triple order then that qtype order.
std::vector<Question> build_questions(const std::vector<Triple>& triples);

// The class a question is attributed to: the originating triple's predicate
// for relation-derived questions, its attribute for attribute-derived ones.
std::int32_t question_class(const Dataset& data, const Question& q);
bool question_class_is_tail(const Dataset& data, const Question& q);

// Labeled replay set and unlabeled pool; a question id lives in exactly one.
struct Pools {
    std::vector<QuestionId> replay;     // append-only
    std::vector<QuestionId> unlabeled;  // shrinks as the oracle labels

    std::size_t total() const { return replay.size() + unlabeled.size(); }
};

}  // namespace qbcat
