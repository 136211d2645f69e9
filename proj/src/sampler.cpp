#include "qbcat/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qbcat {

std::optional<SamplerKind> sampler_from_name(const std::string& name) {
    for (SamplerKind k : {SamplerKind::Random, SamplerKind::LeastConfident, SamplerKind::MinMargin,
                          SamplerKind::MaxEntropy, SamplerKind::QBCatTail, SamplerKind::QBCatTailFreq})
        if (name == sampler_name(k)) return k;
    return std::nullopt;
}

std::vector<double> uncertainty_weights(SamplerKind kind, const std::vector<ScoreVector>& scored) {
    std::vector<double> w(scored.size(), 1.0);
    if (kind == SamplerKind::Random) return w;
    if (sampler_is_qbcat(kind)) throw std::invalid_argument("uncertainty_weights: class-level sampler");

    double min_seen = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> singletons;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        const auto& s = scored[i].scores;
        if (s.empty()) throw std::invalid_argument("uncertainty_weights: empty score vector");
        if (s.size() == 1) {
            singletons.push_back(i);
            continue;
        }
        double top1 = -std::numeric_limits<double>::infinity();
        double top2 = -std::numeric_limits<double>::infinity();
        for (float v : s) {
            if (v > top1) {
                top2 = top1;
                top1 = v;
            } else if (v > top2) {
                top2 = v;
            }
        }
        switch (kind) {
            case SamplerKind::LeastConfident: w[i] = -top1; break;
            case SamplerKind::MinMargin: w[i] = -(top1 - top2); break;
            case SamplerKind::MaxEntropy: {
                double z = 0.0;
                for (float v : s) z += std::exp(static_cast<double>(v) - top1);
                double ent = 0.0;
                for (float v : s) {
                    double p = std::exp(static_cast<double>(v) - top1) / z;
                    if (p > 0.0) ent -= p * std::log(p);
                }
                w[i] = ent;
                break;
            }
            default: break;
        }
        if (!std::isfinite(w[i])) throw std::runtime_error("uncertainty_weights: non-finite weight");
        min_seen = std::min(min_seen, w[i]);
    }
    if (!std::isfinite(min_seen)) min_seen = 1.0;  // every vector was length 1
    for (std::size_t i : singletons) w[i] = min_seen;
    return w;
}

std::vector<double> shift_and_normalize(const std::vector<double>& weights) {
    if (weights.empty()) throw std::invalid_argument("shift_and_normalize: empty weights");
    double mn = *std::min_element(weights.begin(), weights.end());
    std::vector<double> p(weights.size());
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        p[i] = weights[i] + (1.0 - mn);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

Oracle::Oracle(const Dataset& data, std::vector<QuestionId> unlabeled) : data_(&data) {
    for (int qt = 0; qt < kNumQuestionTypes; ++qt) {
        bool attr_kind = qtype_is_attribute_kind(static_cast<QuestionType>(qt));
        buckets_[qt].resize(attr_kind ? data.dict.n_attr() : data.dict.n_pred());
    }
    position_.assign(data.triples.size() * kNumQuestionTypes, -1);
    attr_visits_.assign(data.dict.n_attr(), 0);
    pred_visits_.assign(data.dict.n_pred(), 0);

    std::sort(unlabeled.begin(), unlabeled.end());
    for (QuestionId id : unlabeled) {
        Question q{id, question_triple_index(id), question_qtype(id)};
        std::int32_t cls = question_class(data, q);
        auto& bucket = buckets_[static_cast<int>(q.qtype)][cls];
        position_[id] = static_cast<std::int32_t>(bucket.size());
        bucket.push_back(id);
        ++n_unlabeled_;
    }
}

bool Oracle::is_unlabeled(QuestionId id) const {
    return id < position_.size() && position_[id] >= 0;
}

std::vector<QuestionId> Oracle::unlabeled_of_qtype(QuestionType qt) const {
    std::vector<QuestionId> out;
    for (const auto& bucket : buckets_[static_cast<int>(qt)])
        out.insert(out.end(), bucket.begin(), bucket.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t Oracle::class_remaining(QuestionType qt, std::int32_t class_id) const {
    const auto& buckets = buckets_[static_cast<int>(qt)];
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= buckets.size())
        throw std::out_of_range("Oracle::class_remaining: bad class id");
    return buckets[class_id].size();
}

void Oracle::remove_from_bucket(QuestionId id) {
    Question q{id, question_triple_index(id), question_qtype(id)};
    std::int32_t cls = question_class(*data_, q);
    auto& bucket = buckets_[static_cast<int>(q.qtype)][cls];
    std::int32_t pos = position_[id];
    QuestionId last = bucket.back();
    bucket[pos] = last;
    position_[last] = pos;
    bucket.pop_back();
    position_[id] = -1;
    --n_unlabeled_;
    if (qtype_is_attribute_kind(q.qtype))
        ++attr_visits_[cls];
    else
        ++pred_visits_[cls];
}

QuestionId Oracle::provide(QuestionType qt, std::int32_t class_id, Rng& rng) {
    const auto& bucket = buckets_[static_cast<int>(qt)][class_id];
    if (bucket.empty())
        throw std::runtime_error(std::string("oracle: class exhausted for ") + qtype_name(qt));
    QuestionId id = bucket[rng.below(bucket.size())];
    remove_from_bucket(id);
    return id;
}

void Oracle::label(QuestionId id) {
    if (id >= position_.size() || position_[id] < 0)
        throw std::runtime_error("oracle: question " + std::to_string(id) +
                                 " is unknown or already labeled");
    remove_from_bucket(id);
}

namespace {

// Sequential weighted draws without replacement, renormalizing implicitly by
// zeroing chosen weights.
std::vector<std::size_t> weighted_without_replacement(std::vector<double> w, std::size_t k,
                                                      Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(k);
    double total = 0.0;
    for (double v : w) total += v;
    for (std::size_t draw = 0; draw < k; ++draw) {
        double r = rng.real01() * total;
        double acc = 0.0;
        std::size_t pick = w.size() - 1;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] <= 0.0) continue;
            acc += w[i];
            if (r < acc) {
                pick = i;
                break;
            }
        }
        // guard against accumulated rounding picking a consumed slot
        while (w[pick] <= 0.0) pick = pick == 0 ? w.size() - 1 : pick - 1;
        out.push_back(pick);
        total -= w[pick];
        w[pick] = 0.0;
    }
    return out;
}

}  // namespace

SamplingPlan classic_select(SamplerKind kind, const Oracle& oracle, const ScoreFn& scorer,
                            std::size_t per_qtype, Rng& rng) {
    if (sampler_is_qbcat(kind)) throw std::invalid_argument("classic_select: class-level sampler");
    SamplingPlan plan;
    plan.qbcat = false;
    for (int qt = 0; qt < kNumQuestionTypes; ++qt) {
        std::vector<QuestionId> pool = oracle.unlabeled_of_qtype(static_cast<QuestionType>(qt));
        if (pool.empty())
            throw std::runtime_error(std::string("classic_select: empty pool for ") +
                                     qtype_name(static_cast<QuestionType>(qt)));
        if (pool.size() <= per_qtype) {
            plan.chosen_ids[qt] = pool;
            continue;
        }
        std::vector<double> weights;
        if (kind == SamplerKind::Random) {
            weights.assign(pool.size(), 1.0);
        } else {
            weights = uncertainty_weights(kind, scorer(pool));
        }
        std::vector<double> probs = shift_and_normalize(weights);
        for (std::size_t idx : weighted_without_replacement(std::move(probs), per_qtype, rng))
            plan.chosen_ids[qt].push_back(pool[idx]);
    }
    return plan;
}

SamplingPlan qbcat_select(SamplerKind kind, const ClassDictionary& dict, std::size_t per_qtype,
                          Rng& rng) {
    if (!sampler_is_qbcat(kind)) throw std::invalid_argument("qbcat_select: instance-level sampler");
    SamplingPlan plan;
    plan.qbcat = true;

    // one score per class, shared across question types
    auto tail_scores = [&](const std::vector<std::int64_t>& counts, const std::vector<bool>& is_head) {
        std::vector<std::int32_t> support;
        std::vector<double> weights;
        std::int64_t total = 0;
        for (std::int64_t c : counts) total += c;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (is_head[c]) continue;
            support.push_back(static_cast<std::int32_t>(c));
            weights.push_back(kind == SamplerKind::QBCatTail
                                  ? rng.real01()
                                  : static_cast<double>(counts[c]) / static_cast<double>(total));
        }
        return std::make_pair(support, weights);
    };
    auto [attr_support, attr_weights] = tail_scores(dict.attr_counts, dict.attr_is_head);
    auto [pred_support, pred_weights] = tail_scores(dict.pred_counts, dict.pred_is_head);
    if (attr_support.empty() || pred_support.empty())
        throw std::runtime_error("qbcat_select: empty tail");

    for (int qt = 0; qt < kNumQuestionTypes; ++qt) {
        bool attr_kind = qtype_is_attribute_kind(static_cast<QuestionType>(qt));
        const auto& support = attr_kind ? attr_support : pred_support;
        const auto& weights = attr_kind ? attr_weights : pred_weights;
        plan.request_support[qt] = support;
        plan.request_weights[qt] = weights;
        for (std::size_t i = 0; i < per_qtype; ++i)
            plan.class_requests[qt].push_back(support[rng.weighted_pick(weights)]);
    }
    return plan;
}

ProvideResult provide_with_fallback(Oracle& oracle, QuestionType qt, std::int32_t class_id,
                                    const std::vector<std::int32_t>& support,
                                    const std::vector<double>& weights, Rng& rng) {
    ProvideResult res;
    res.requested_class = class_id;
    std::int32_t chosen = class_id;
    if (oracle.class_remaining(qt, chosen) == 0) {
        bool any = false;
        for (std::int32_t c : support)
            if (oracle.class_remaining(qt, c) > 0) {
                any = true;
                break;
            }
        if (!any)
            throw std::runtime_error(std::string("oracle: all requestable classes exhausted for ") +
                                     qtype_name(qt));
        do {
            chosen = support[rng.weighted_pick(weights)];
        } while (oracle.class_remaining(qt, chosen) == 0);
        res.fallback = true;
    }
    res.provided_class = chosen;
    res.id = oracle.provide(qt, chosen, rng);
    return res;
}

}  // namespace qbcat
