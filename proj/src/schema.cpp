#include "qbcat/schema.hpp"

#include <stdexcept>

namespace qbcat {

HeadTailSplit head_tail_split(const std::vector<std::int64_t>& counts, ThresholdRule rule,
                              double fixed_threshold, std::int32_t exclude_always_head) {
    if (counts.empty()) throw std::invalid_argument("head_tail_split: empty class list");
    for (auto c : counts)
        if (c < 0) throw std::invalid_argument("head_tail_split: negative count");

    double threshold = fixed_threshold;
    if (rule == ThresholdRule::Mean) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (static_cast<std::int32_t>(i) == exclude_always_head) continue;
            sum += static_cast<double>(counts[i]);
            ++n;
        }
        if (n == 0) throw std::invalid_argument("head_tail_split: no classes left after exclusion");
        threshold = sum / static_cast<double>(n);
    }

    HeadTailSplit out;
    out.threshold = threshold;
    out.is_head.resize(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out.is_head[i] = static_cast<std::int32_t>(i) == exclude_always_head ||
                         static_cast<double>(counts[i]) > threshold;
    }
    return out;
}

void apply_head_tail(ClassDictionary& dict, ThresholdRule rule, double attr_threshold,
                     double pred_threshold) {
    auto a = head_tail_split(dict.attr_counts, rule, attr_threshold);
    auto p = head_tail_split(dict.pred_counts, rule, pred_threshold, dict.has_attribute_id);
    dict.attr_is_head = a.is_head;
    dict.pred_is_head = p.is_head;
}

std::vector<Question> build_questions(const std::vector<Triple>& triples) {
    std::vector<Question> out;
    out.reserve(triples.size() * 3);
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const bool rel = triples[i].kind == TripleKind::Relation;
        const QuestionType qts[3] = {
            rel ? QuestionType::SPOS : QuestionType::SPAS,
            rel ? QuestionType::SPOP : QuestionType::SPAP,
            rel ? QuestionType::SPOO : QuestionType::SPAA,
        };
        for (QuestionType qt : qts) out.push_back({make_question_id(i, qt), i, qt});
    }
    return out;
}

std::int32_t question_class(const Dataset& data, const Question& q) {
    const Triple& t = data.triples[q.triple_index];
    return qtype_is_attribute_kind(q.qtype) ? t.attribute : t.predicate;
}

bool question_class_is_tail(const Dataset& data, const Question& q) {
    const Triple& t = data.triples[q.triple_index];
    if (qtype_is_attribute_kind(q.qtype)) return !data.dict.attr_is_head[t.attribute];
    return !data.dict.pred_is_head[t.predicate];
}

void Dataset::build_indices() {
    box_image.assign(features.rows, -1);
    image_boxes.clear();
    auto touch = [&](std::int64_t image, std::int32_t box) {
        if (box < 0) return;
        if (box_image[box] != -1 && box_image[box] != image)
            throw std::runtime_error("Dataset: box row " + std::to_string(box) +
                                     " referenced by two different images");
        if (box_image[box] == -1) {
            box_image[box] = image;
            image_boxes[image].push_back(box);
        }
    };
    for (const Triple& t : triples) {
        touch(t.image_id, t.subject_box);
        if (t.kind == TripleKind::Relation) touch(t.image_id, t.object_box);
    }
}

}  // namespace qbcat
