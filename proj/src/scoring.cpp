#include "qbcat/scoring.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace qbcat {

namespace {

constexpr std::size_t kChunk = 1024;

Mat<float> gather_box_embeddings(Model& model, const Dataset& data,
                                 const std::vector<std::int32_t>& rows) {
    Mat<float> out(rows.size(), model.dims.embed);
    for (std::size_t start = 0; start < rows.size(); start += kChunk) {
        std::size_t n = std::min(kChunk, rows.size() - start);
        std::vector<ModelTarget> ts(n);
        for (std::size_t i = 0; i < n; ++i) ts[i] = {TargetKind::Box, rows[start + i]};
        Mat<float> emb = forward_targets(model, data.features, ts, Mode::Eval);
        std::copy(emb.data.begin(), emb.data.end(), out.row(start));
    }
    return out;
}

}  // namespace

Mat<float> embed_questions_eval(Model& model, const Dataset& data,
                                const std::vector<QuestionId>& ids) {
    Mat<float> out(ids.size(), model.dims.embed);
    for (std::size_t start = 0; start < ids.size(); start += kChunk) {
        std::size_t n = std::min(kChunk, ids.size() - start);
        std::vector<ModelQuestion> qs(n);
        for (std::size_t i = 0; i < n; ++i) {
            QuestionId id = ids[start + i];
            qs[i] = make_model_question(data.triples[question_triple_index(id)], question_qtype(id));
        }
        Mat<float> emb = forward_questions(model, data.features, qs, Mode::Eval);
        std::copy(emb.data.begin(), emb.data.end(), out.row(start));
    }
    return out;
}

std::vector<ScoreVector> score_questions(Model& model, const Dataset& data,
                                         const std::vector<QuestionId>& ids,
                                         const BiasParams* bias) {
    std::vector<ScoreVector> out(ids.size());
    if (ids.empty()) return out;
    Mat<float> pred = embed_questions_eval(model, data, ids);

    // box embeddings for every image that appears among box-target questions
    std::unordered_map<std::int32_t, std::size_t> box_slot;
    std::vector<std::int32_t> box_rows;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        QuestionType qt = question_qtype(ids[i]);
        if (!qtype_has_box_target(qt)) continue;
        const Triple& t = data.triples[question_triple_index(ids[i])];
        for (std::int32_t b : data.image_boxes.at(t.image_id))
            if (box_slot.emplace(b, box_rows.size()).second) box_rows.push_back(b);
    }
    Mat<float> box_emb;
    if (!box_rows.empty()) box_emb = gather_box_embeddings(model, data, box_rows);

    const std::size_t d = model.dims.embed;
    auto sqdist = [&](const float* a, const float* b) {
        float s = 0.0f;
        for (std::size_t j = 0; j < d; ++j) {
            float diff = a[j] - b[j];
            s += diff * diff;
        }
        return s;
    };

    for (std::size_t i = 0; i < ids.size(); ++i) {
        QuestionType qt = question_qtype(ids[i]);
        const float* p = pred.row(i);
        ScoreVector& sv = out[i];
        if (qtype_has_box_target(qt)) {
            const Triple& t = data.triples[question_triple_index(ids[i])];
            const auto& boxes = data.image_boxes.at(t.image_id);
            if (boxes.empty()) throw std::runtime_error("score_questions: image without boxes");
            sv.candidates.assign(boxes.begin(), boxes.end());
            sv.scores.resize(boxes.size());
            for (std::size_t c = 0; c < boxes.size(); ++c)
                sv.scores[c] = -sqdist(p, box_emb.row(box_slot.at(boxes[c])));
        } else if (qt == QuestionType::SPOP || qt == QuestionType::SPAP) {
            const std::size_t n = model.dims.n_pred;
            sv.candidates.resize(n);
            sv.scores.resize(n);
            for (std::size_t c = 0; c < n; ++c) {
                sv.candidates[c] = static_cast<std::int32_t>(c);
                float s = -sqdist(p, model.f_pt.row(c));
                if (bias && qt == QuestionType::SPOP)
                    s = bias->pred_alpha[c] * s + bias->pred_beta[c];
                sv.scores[c] = s;
            }
        } else {  // SPAA
            const std::size_t n = model.dims.n_attr;
            sv.candidates.resize(n);
            sv.scores.resize(n);
            for (std::size_t c = 0; c < n; ++c) {
                sv.candidates[c] = static_cast<std::int32_t>(c);
                float s = -sqdist(p, model.f_at.row(c));
                if (bias) s = bias->attr_alpha[c] * s + bias->attr_beta[c];
                sv.scores[c] = s;
            }
        }
    }
    return out;
}

ScoreVector score_question(Model& model, const Dataset& data, QuestionId id,
                           const BiasParams* bias) {
    return score_questions(model, data, {id}, bias)[0];
}

std::vector<MetricRow> evaluate_test_set(Model& model, const Dataset& data,
                                         const std::vector<QuestionId>& test_ids,
                                         const BiasParams* bias) {
    std::vector<MetricRow> rows;
    for (int qt_i = 0; qt_i < kNumQuestionTypes; ++qt_i) {
        QuestionType qt = static_cast<QuestionType>(qt_i);
        if (qt == QuestionType::SPAP) continue;  // trained but not reported

        std::vector<QuestionId> ids;
        for (QuestionId id : test_ids)
            if (question_qtype(id) == qt) ids.push_back(id);
        if (ids.empty()) continue;
        std::vector<ScoreVector> scored = score_questions(model, data, ids, bias);

        for (SplitKind split : {SplitKind::Full, SplitKind::Tail}) {
            std::vector<std::size_t> pick;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                Question q{ids[i], question_triple_index(ids[i]), question_qtype(ids[i])};
                if (split == SplitKind::Full || question_class_is_tail(data, q)) pick.push_back(i);
            }
            if (pick.empty()) continue;

            auto answer_of = [&](std::size_t i) {
                const Triple& t = data.triples[question_triple_index(ids[i])];
                return make_model_target(t, qt).id;
            };

            std::optional<double> auroc, ap;
            if (qtype_has_box_target(qt)) {
                std::vector<ScoredSet> sets;
                sets.reserve(pick.size());
                for (std::size_t i : pick) {
                    const ScoreVector& sv = scored[i];
                    ScoredSet s;
                    s.scores.assign(sv.scores.begin(), sv.scores.end());
                    s.labels.assign(sv.candidates.size(), 0);
                    std::int32_t ans = answer_of(i);
                    for (std::size_t c = 0; c < sv.candidates.size(); ++c)
                        if (sv.candidates[c] == ans) s.labels[c] = 1;
                    sets.push_back(std::move(s));
                }
                if (auto r = auroc_samplewise(sets)) auroc = r->value;
                if (auto r = ap_samplewise(sets)) ap = r->value;
            } else {
                std::vector<double> flat_scores;
                std::vector<int> flat_labels;
                for (std::size_t i : pick) {
                    const ScoreVector& sv = scored[i];
                    std::int32_t ans = answer_of(i);
                    for (std::size_t c = 0; c < sv.candidates.size(); ++c) {
                        flat_scores.push_back(sv.scores[c]);
                        flat_labels.push_back(sv.candidates[c] == ans ? 1 : 0);
                    }
                }
                auroc = auroc_micro(flat_scores, flat_labels);
                ap = ap_micro(flat_scores, flat_labels);
            }
            if (auroc) {
                MetricRow r;
                r.question_type = qtype_name(qt);
                r.split = split;
                r.metric = MetricKind::AUROC;
                r.value = *auroc;
                rows.push_back(r);
            }
            if (ap) {
                MetricRow r;
                r.question_type = qtype_name(qt);
                r.split = split;
                r.metric = MetricKind::MAP;
                r.value = *ap;
                rows.push_back(r);
            }
        }
    }
    return rows;
}

}  // namespace qbcat
