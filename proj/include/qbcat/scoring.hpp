#pragma once

#include <vector>

#include "qbcat/metrics.hpp"
#include "qbcat/model.hpp"
#include "qbcat/schema.hpp"

namespace qbcat {

using Model = ModelParamsT<float>;
using ModelGrads = ModelGradsT<float>;

// Per-class affine score correction, alpha*s + beta, identity-initialized.
struct BiasParams {
    std::vector<float> pred_alpha, pred_beta;
    std::vector<float> attr_alpha, attr_beta;

    BiasParams() = default;
    BiasParams(std::size_t n_pred, std::size_t n_attr)
        : pred_alpha(n_pred, 1.0f),
          pred_beta(n_pred, 0.0f),
          attr_alpha(n_attr, 1.0f),
          attr_beta(n_attr, 0.0f) {}
};

// Eval-mode question embeddings, chunked.
Mat<float> embed_questions_eval(Model& model, const Dataset& data,
                                const std::vector<QuestionId>& ids);

// Score vectors for arbitrary question ids. Box-target questions score all
// boxes of their image, class-target questions the full vocabulary. Bias
// correction, when given, applies to SPOP and SPAA scores only.
std::vector<ScoreVector> score_questions(Model& model, const Dataset& data,
                                         const std::vector<QuestionId>& ids,
                                         const BiasParams* bias = nullptr);

// Single-question convenience wrapper.
ScoreVector score_question(Model& model, const Dataset& data, QuestionId id,
                           const BiasParams* bias = nullptr);

// Full/tail test-set evaluation: AUROC and mAP per question type, sample-wise
// averaging for box targets, micro averaging for class targets, SPAP not
// reported. Fills question_type/split/metric/value; cells whose split is
// empty or degenerate are omitted.
std::vector<MetricRow> evaluate_test_set(Model& model, const Dataset& data,
                                         const std::vector<QuestionId>& test_ids,
                                         const BiasParams* bias = nullptr);

}  // namespace qbcat
