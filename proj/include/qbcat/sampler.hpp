#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "qbcat/model.hpp"
#include "qbcat/rng.hpp"
#include "qbcat/schema.hpp"

namespace qbcat {

enum class SamplerKind { Random, LeastConfident, MinMargin, MaxEntropy, QBCatTail, QBCatTailFreq };

inline const char* sampler_name(SamplerKind k) {
    switch (k) {
        case SamplerKind::Random: return "Random";
        case SamplerKind::LeastConfident: return "LeastConfident";
        case SamplerKind::MinMargin: return "MinMargin";
        case SamplerKind::MaxEntropy: return "MaxEntropy";
        case SamplerKind::QBCatTail: return "QBCatTail";
        case SamplerKind::QBCatTailFreq: return "QBCatTailFreq";
    }
    return "?";
}

std::optional<SamplerKind> sampler_from_name(const std::string& name);

inline bool sampler_is_qbcat(SamplerKind k) {
    return k == SamplerKind::QBCatTail || k == SamplerKind::QBCatTailFreq;
}

// Per-question selection weights; larger means more likely to be queried.
// Length-1 score vectors get the minimum weight of the batch (margins are
// undefined there), Random weights everything 1.
std::vector<double> uncertainty_weights(SamplerKind kind, const std::vector<ScoreVector>& scored);

// w_i += (1 - min w); p_i = w_i / sum w. The smallest shifted weight is 1.
std::vector<double> shift_and_normalize(const std::vector<double>& weights);

// Requests for one increment. Classical samplers pick distinct question ids;
// QBCat samplers request class ids with replacement. QBCat plans carry the
// class distribution so exhausted classes can be re-drawn from it.
struct SamplingPlan {
    bool qbcat = false;
    std::array<std::vector<QuestionId>, kNumQuestionTypes> chosen_ids;
    std::array<std::vector<std::int32_t>, kNumQuestionTypes> class_requests;
    std::array<std::vector<std::int32_t>, kNumQuestionTypes> request_support;
    std::array<std::vector<double>, kNumQuestionTypes> request_weights;
};

// Tracks the unlabeled pool with per-(qtype, class) buckets; targets stay
// hidden until a question is provided or labeled. Relation-derived questions
// are bucketed by their predicate, attribute-derived ones by their attribute.
class Oracle {
public:
    Oracle(const Dataset& data, std::vector<QuestionId> unlabeled);

    std::size_t unlabeled_count() const { return n_unlabeled_; }
    bool is_unlabeled(QuestionId id) const;
    std::vector<QuestionId> unlabeled_of_qtype(QuestionType qt) const;  // ascending ids
    std::size_t class_remaining(QuestionType qt, std::int32_t class_id) const;

    // uniformly random unlabeled question of the class/qtype; moves it out of
    // the pool. Throws when the class is exhausted for that qtype.
    QuestionId provide(QuestionType qt, std::int32_t class_id, Rng& rng);

    // classical path: reveal and move a chosen id; double labeling is an error
    void label(QuestionId id);

    const std::vector<std::int64_t>& attr_visits() const { return attr_visits_; }
    const std::vector<std::int64_t>& pred_visits() const { return pred_visits_; }

private:
    void remove_from_bucket(QuestionId id);

    const Dataset* data_;
    std::size_t n_unlabeled_ = 0;
    // per qtype, per class: unlabeled ids; parallel position index for O(1) removal
    std::array<std::vector<std::vector<QuestionId>>, kNumQuestionTypes> buckets_;
    std::vector<std::int32_t> position_;  // by qid; -1 = not in pool
    std::vector<std::int64_t> attr_visits_, pred_visits_;
};

using ScoreFn = std::function<std::vector<ScoreVector>(const std::vector<QuestionId>&)>;

// Scores the whole unlabeled pool per question type, converts weights to
// probabilities and samples P distinct ids without replacement (all of them
// when the pool is smaller than P).
SamplingPlan classic_select(SamplerKind kind, const Oracle& oracle, const ScoreFn& scorer,
                            std::size_t per_qtype, Rng& rng);

// Class-level selection: per question type P class requests drawn with
// replacement from the tail of the matching vocabulary. QBCatTail scores tail
// classes uniformly at random; QBCatTailFreq uses train-count frequencies.
SamplingPlan qbcat_select(SamplerKind kind, const ClassDictionary& dict, std::size_t per_qtype,
                          Rng& rng);

struct ProvideResult {
    QuestionId id;
    std::int32_t requested_class;
    std::int32_t provided_class;
    bool fallback = false;
};

// provide() with the plan's fallback rule: an exhausted class is re-drawn
// from the request distribution until a class with stock remains.
ProvideResult provide_with_fallback(Oracle& oracle, QuestionType qt, std::int32_t class_id,
                                    const std::vector<std::int32_t>& support,
                                    const std::vector<double>& weights, Rng& rng);

}  // namespace qbcat
