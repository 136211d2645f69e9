#include "qbcat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace qbcat {

void TrainConfig::validate() const {
    if (batch_rebalanced % 4 != 0)
        throw std::invalid_argument("train config: batch_rebalanced must be divisible by 4");
    if (cv_k < 2) throw std::invalid_argument("train config: cv_k must be >= 2");
    if (!(lr > 0) || !(bias_stage1_lr > 0) || !(bias_stage2_lr > 0))
        throw std::invalid_argument("train config: learning rates must be > 0");
    if (batch_standard < 2) throw std::invalid_argument("train config: batch_standard must be >= 2");
    if (top_ell < 1) throw std::invalid_argument("train config: top_ell must be >= 1");
    if (hidden_dim < 1 || embed_dim < 1)
        throw std::invalid_argument("train config: model dims must be >= 1");
}

EpochStream::EpochStream(std::vector<QuestionId> ids, Rng rng) : ids_(std::move(ids)), rng_(rng) {
    if (ids_.empty()) throw std::invalid_argument("EpochStream: empty id set");
    rng_.shuffle(ids_);
}

std::vector<QuestionId> EpochStream::take(std::size_t k) {
    std::vector<QuestionId> out;
    out.reserve(k);
    while (out.size() < k) {
        if (pos_ == ids_.size()) {
            pos_ = 0;
            ++passes_;
            rng_.shuffle(ids_);
        }
        out.push_back(ids_[pos_++]);
    }
    if (pos_ == ids_.size()) {
        pos_ = 0;
        ++passes_;
        rng_.shuffle(ids_);
    }
    return out;
}

namespace {

std::uint64_t pair_key(const HardNegativeBuffer::Pair& p) {
    return (p.qid << 10) ^ (static_cast<std::uint64_t>(p.kind) << 8) ^
           splitmix64(static_cast<std::uint64_t>(p.candidate));
}

}  // namespace

bool HardNegativeBuffer::add(const Pair& p) {
    if (!keys_.insert(pair_key(p)).second) return false;
    items_.push_back(p);
    return true;
}

void HardNegativeBuffer::clear() {
    items_.clear();
    keys_.clear();
}

SgdOptimizer::SgdOptimizer(Model& model, double lr, double momentum, double weight_decay)
    : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    model.for_each_trainable([&](const std::string&, std::vector<float>& v, bool decay) {
        velocity_.emplace_back(v.size(), 0.0f);
        decay_.push_back(decay);
    });
}

void SgdOptimizer::step(Model& model, ModelGrads& grads) {
    std::vector<std::vector<float>*> ps, gs;
    model.for_each_trainable([&](const std::string&, std::vector<float>& v, bool) { ps.push_back(&v); });
    grads.for_each([&](std::vector<float>& g) { gs.push_back(&g); });
    if (ps.size() != gs.size() || ps.size() != velocity_.size())
        throw std::logic_error("SgdOptimizer: registry mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i)
        sgd_momentum_step(*ps[i], *gs[i], velocity_[i], lr_, momentum_, decay_[i] ? weight_decay_ : 0.0);
}

AdamOptimizer::AdamOptimizer(Model& model, double lr, std::uint64_t cosine_total_steps)
    : lr_(lr), total_steps_(cosine_total_steps) {
    model.for_each_trainable([&](const std::string&, std::vector<float>& v, bool) {
        m_.emplace_back(v.size(), 0.0f);
        v_.emplace_back(v.size(), 0.0f);
    });
}

void AdamOptimizer::step(Model& model, ModelGrads& grads) {
    std::vector<std::vector<float>*> ps, gs;
    model.for_each_trainable([&](const std::string&, std::vector<float>& v, bool) { ps.push_back(&v); });
    grads.for_each([&](std::vector<float>& g) { gs.push_back(&g); });
    if (ps.size() != gs.size() || ps.size() != m_.size())
        throw std::logic_error("AdamOptimizer: registry mismatch");
    double lr = total_steps_ ? cosine_lr(lr_, std::min(step_, total_steps_), total_steps_) : lr_;
    if (lr > 0)
        for (std::size_t i = 0; i < ps.size(); ++i) adam_step(*ps[i], *gs[i], m_[i], v_[i], step_, lr);
    ++step_;
}

TrainBatch make_labeled_batch(const Dataset& data, const std::vector<QuestionId>& ids) {
    TrainBatch b;
    b.questions.reserve(ids.size());
    b.targets.reserve(ids.size());
    for (QuestionId id : ids) {
        const Triple& t = data.triples[question_triple_index(id)];
        QuestionType qt = question_qtype(id);
        b.questions.push_back(make_model_question(t, qt));
        b.targets.push_back(make_model_target(t, qt));
    }
    b.n_pos = ids.size();
    b.new_samples = ids.size();
    return b;
}

float train_step(Model& model, const Dataset& data, const TrainBatch& batch, SgdOptimizer& opt) {
    QuestionForward<float> qf;
    TargetForward<float> tf;
    forward_questions(model, data.features, batch.questions, Mode::Train, &qf);
    forward_targets(model, data.features, batch.targets, Mode::Train, &tf);
    NcaResult<float> loss = nca_loss(qf.pred, tf.targ, batch.n_pos);
    ModelGrads grads(model);
    backward_questions(model, qf, loss.dpred, grads);
    backward_targets(model, tf, loss.dtarg, grads);
    opt.step(model, grads);
    return loss.loss;
}

float eval_loss(Model& model, const Dataset& data, const std::vector<QuestionId>& ids) {
    TrainBatch b = make_labeled_batch(data, ids);
    Mat<float> pred = forward_questions(model, data.features, b.questions, Mode::Eval);
    Mat<float> targ = forward_targets(model, data.features, b.targets, Mode::Eval);
    Mat<float> dist = pairwise_sqdist(pred, targ);
    return nca_from_distances(dist, b.n_pos).loss;
}

std::optional<std::size_t> hard_negative_choice(const ScoreVector& scored, std::int32_t answer,
                                                int top_ell) {
    if (static_cast<int>(scored.candidates.size()) <= top_ell) return std::nullopt;
    std::size_t ans_idx = scored.candidates.size();
    for (std::size_t c = 0; c < scored.candidates.size(); ++c)
        if (scored.candidates[c] == answer) {
            ans_idx = c;
            break;
        }
    if (ans_idx == scored.candidates.size())
        throw std::logic_error("hard_negative_choice: answer not among candidates");

    int rank = 0;
    std::size_t best = scored.candidates.size();
    for (std::size_t c = 0; c < scored.candidates.size(); ++c) {
        if (c == ans_idx) continue;
        if (scored.scores[c] > scored.scores[ans_idx] ||
            (scored.scores[c] == scored.scores[ans_idx] && c < ans_idx))
            ++rank;
        if (best == scored.candidates.size() || scored.scores[c] > scored.scores[best]) best = c;
    }
    if (rank < top_ell) return std::nullopt;  // answer inside top-ell
    return best;
}

std::size_t mine_hard_negatives(Model& model, const Dataset& data,
                                const std::vector<QuestionId>& chunk, int top_ell,
                                HardNegativeBuffer& buffer) {
    std::vector<ScoreVector> scored = score_questions(model, data, chunk);
    std::size_t added = 0;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
        const Triple& t = data.triples[question_triple_index(chunk[i])];
        QuestionType qt = question_qtype(chunk[i]);
        ModelTarget ans = make_model_target(t, qt);
        auto pick = hard_negative_choice(scored[i], ans.id, top_ell);
        if (!pick) continue;
        HardNegativeBuffer::Pair p{chunk[i], ans.kind, scored[i].candidates[*pick]};
        if (buffer.add(p)) ++added;
    }
    return added;
}

TrainBatch next_rebalanced_batch(Model& model, const Dataset& data, const TrainConfig& cfg,
                                 EpochStream& new_stream, EpochStream& replay_stream,
                                 const std::vector<QuestionId>& replay,
                                 HardNegativeBuffer& negatives, Rng& rng, bool mine) {
    const std::size_t half = static_cast<std::size_t>(cfg.batch_rebalanced / 2);
    const std::size_t quarter = static_cast<std::size_t>(cfg.batch_rebalanced / 4);

    if (mine) {
        std::size_t chunk = std::min<std::size_t>(cfg.mining_pool, replay_stream.size());
        mine_hard_negatives(model, data, replay_stream.take(chunk), cfg.top_ell, negatives);
    }

    std::vector<QuestionId> new_ids = new_stream.take(half);
    TrainBatch batch = make_labeled_batch(data, new_ids);
    batch.new_samples = new_ids.size();

    std::size_t n_pairs = std::min(quarter, negatives.size());
    std::size_t fill = half - 2 * n_pairs;

    // old positives drawn uniformly from the replay buffer
    std::vector<QuestionId> fill_ids;
    fill_ids.reserve(fill);
    {
        std::size_t remaining = fill;
        while (remaining > 0) {
            std::size_t k = std::min(remaining, replay.size());
            for (std::size_t idx : rng.sample_without_replacement(replay.size(), k))
                fill_ids.push_back(replay[idx]);
            remaining -= k;
        }
    }
    for (QuestionId id : fill_ids) {
        const Triple& t = data.triples[question_triple_index(id)];
        QuestionType qt = question_qtype(id);
        batch.questions.push_back(make_model_question(t, qt));
        batch.targets.push_back(make_model_target(t, qt));
    }
    batch.fill_rows = fill_ids.size();
    batch.n_pos = batch.questions.size();

    // negative rows: question embedding paired with the mined wrong candidate,
    // denominator-only in the loss
    if (n_pairs > 0) {
        for (std::size_t idx : rng.sample_without_replacement(negatives.size(), n_pairs)) {
            const HardNegativeBuffer::Pair& p = negatives.items()[idx];
            const Triple& t = data.triples[question_triple_index(p.qid)];
            QuestionType qt = question_qtype(p.qid);
            batch.questions.push_back(make_model_question(t, qt));
            batch.targets.push_back({p.kind, p.candidate});
        }
    }
    batch.pair_rows = n_pairs;
    return batch;
}

void train_standard_epochs(Model& model, const Dataset& data, std::vector<QuestionId> ids,
                           int epochs, const TrainConfig& cfg, Rng& rng) {
    if (ids.empty()) throw std::invalid_argument("train_standard_epochs: no data");
    SgdOptimizer opt(model, cfg.lr, cfg.momentum, cfg.weight_decay);
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_standard);
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(ids);
        for (std::size_t start = 0; start < ids.size(); start += bs) {
            std::size_t n = std::min(bs, ids.size() - start);
            if (n < 2) break;  // batch statistics need two rows
            std::vector<QuestionId> chunk(ids.begin() + start, ids.begin() + start + n);
            train_step(model, data, make_labeled_batch(data, chunk), opt);
        }
    }
}

std::vector<int> stratified_folds(const Dataset& data, const std::vector<QuestionId>& ids, int k,
                                  Rng& rng) {
    std::map<std::int64_t, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        QuestionType qt = question_qtype(ids[i]);
        std::int64_t key;
        if (qtype_has_box_target(qt)) {
            key = static_cast<std::int64_t>(qt);
        } else {
            Question q{ids[i], question_triple_index(ids[i]), qt};
            key = 100 + static_cast<std::int64_t>(qt) * 100000 + question_class(data, q);
        }
        strata[key].push_back(i);
    }
    std::vector<int> fold(ids.size(), 0);
    int next = 0;
    for (auto& [key, members] : strata) {
        rng.shuffle(members);
        for (std::size_t m : members) {
            fold[m] = next;
            next = (next + 1) % k;
        }
    }
    // every fold must be populated
    std::vector<int> sizes(k, 0);
    for (int f : fold) sizes[f]++;
    for (int f = 0; f < k; ++f)
        if (sizes[f] == 0) throw std::runtime_error("stratified_folds: empty fold");
    return fold;
}

namespace {

struct ValBatches {
    std::vector<std::vector<QuestionId>> batches;
    std::size_t rows = 0;
};

double weighted_val_loss(Model& model, const Dataset& data, const ValBatches& vb) {
    double total = 0.0;
    for (const auto& b : vb.batches)
        total += static_cast<double>(eval_loss(model, data, b)) * static_cast<double>(b.size());
    return total / static_cast<double>(vb.rows);
}

}  // namespace

CvResult cross_validate(const Model& snapshot, const Dataset& data,
                        const std::vector<QuestionId>& replay,
                        const std::vector<QuestionId>& new_data, const TrainConfig& cfg,
                        bool rebalanced, HardNegativeBuffer& negatives, Rng& rng,
                        ProtocolProbe* probe) {
    if (new_data.empty()) throw std::invalid_argument("cross_validate: empty new data");
    std::vector<int> replay_fold = stratified_folds(data, replay, cfg.cv_k, rng);
    std::vector<int> new_fold = stratified_folds(data, new_data, cfg.cv_k, rng);

    std::vector<QuestionId> train_replay, val_replay, train_new, val_new;
    for (std::size_t i = 0; i < replay.size(); ++i)
        (replay_fold[i] == 0 ? val_replay : train_replay).push_back(replay[i]);
    for (std::size_t i = 0; i < new_data.size(); ++i)
        (new_fold[i] == 0 ? val_new : train_new).push_back(new_data[i]);

    Model model = snapshot;
    SgdOptimizer opt(model, cfg.lr, cfg.momentum, cfg.weight_decay);

    CvResult res;

    if (rebalanced) {
        const std::size_t half = static_cast<std::size_t>(cfg.batch_rebalanced / 2);
        EpochStream new_stream(train_new, Rng::stream(rng.u64(), "cv-new"));
        EpochStream replay_stream(train_replay, Rng::stream(rng.u64(), "cv-replay"));
        Rng batch_rng = Rng::stream(rng.u64(), "cv-batch");

        // validation batches are fixed once: half new, half old, no negatives
        ValBatches vb;
        {
            EpochStream vnew(val_new, Rng::stream(rng.u64(), "cv-val-new"));
            EpochStream vold(val_replay, Rng::stream(rng.u64(), "cv-val-old"));
            std::size_t n_batches = (val_new.size() + half - 1) / half;
            for (std::size_t b = 0; b < n_batches; ++b) {
                std::vector<QuestionId> ids = vnew.take(half);
                for (QuestionId id : vold.take(half)) ids.push_back(id);
                vb.rows += ids.size();
                vb.batches.push_back(std::move(ids));
            }
        }

        EarlyStopper stopper(cfg.cv_patience);
        for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            while (new_stream.passes_completed() < static_cast<std::size_t>(epoch)) {
                TrainBatch batch = next_rebalanced_batch(model, data, cfg, new_stream, replay_stream,
                                                         train_replay, negatives, batch_rng, true);
                if (probe && probe->on_batch) probe->on_batch(batch);
                train_step(model, data, batch, opt);
            }
            double vl = weighted_val_loss(model, data, vb);
            res.val_losses.push_back(vl);
            if (stopper.update(vl)) break;
        }
        res.best_epoch = stopper.best_epoch();
    } else {
        std::vector<QuestionId> train_all = train_replay;
        train_all.insert(train_all.end(), train_new.begin(), train_new.end());
        std::vector<QuestionId> val_all = val_replay;
        val_all.insert(val_all.end(), val_new.begin(), val_new.end());
        Rng shuffle_rng = Rng::stream(rng.u64(), "cv-std");
        ValBatches vb;
        for (std::size_t start = 0; start < val_all.size(); start += 512) {
            std::size_t n = std::min<std::size_t>(512, val_all.size() - start);
            vb.rows += n;
            vb.batches.emplace_back(val_all.begin() + start, val_all.begin() + start + n);
        }
        EarlyStopper stopper(cfg.cv_patience);
        for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            train_standard_epochs(model, data, train_all, 1, cfg, shuffle_rng);
            double vl = weighted_val_loss(model, data, vb);
            res.val_losses.push_back(vl);
            if (stopper.update(vl)) break;
        }
        res.best_epoch = stopper.best_epoch();
    }
    return res;
}

void fit_bias_calibration(const Mat<float>& scores, const std::vector<std::int32_t>& labels,
                          int iters, double lr, std::vector<float>& alpha,
                          std::vector<float>& beta) {
    const std::size_t n = scores.rows, c = scores.cols;
    if (labels.size() != n) throw std::invalid_argument("fit_bias_calibration: label count mismatch");
    alpha.assign(c, 1.0f);
    beta.assign(c, 0.0f);
    if (n == 0) return;

    std::vector<bool> trainable(c, false);
    for (std::int32_t l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= c)
            throw std::out_of_range("fit_bias_calibration: label out of range");
        trainable[l] = true;
    }

    std::vector<double> a(c, 1.0), b(c, 0.0), ga(c), gb(c), z(c);
    for (int it = 0; it < iters; ++it) {
        std::fill(ga.begin(), ga.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const float* s = scores.row(i);
            double zmax = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < c; ++k) {
                z[k] = a[k] * static_cast<double>(s[k]) + b[k];
                zmax = std::max(zmax, z[k]);
            }
            double denom = 0.0;
            for (std::size_t k = 0; k < c; ++k) denom += std::exp(z[k] - zmax);
            for (std::size_t k = 0; k < c; ++k) {
                double p = std::exp(z[k] - zmax) / denom;
                double diff = p - (static_cast<std::size_t>(labels[i]) == k ? 1.0 : 0.0);
                ga[k] += diff * static_cast<double>(s[k]);
                gb[k] += diff;
            }
        }
        for (std::size_t k = 0; k < c; ++k) {
            if (!trainable[k]) continue;
            a[k] -= lr * ga[k] / static_cast<double>(n);
            b[k] -= lr * gb[k] / static_cast<double>(n);
        }
    }
    for (std::size_t k = 0; k < c; ++k) {
        alpha[k] = static_cast<float>(a[k]);
        beta[k] = static_cast<float>(b[k]);
    }
}

namespace {

// Raw SPOP/SPAA scores of the replay questions of one type against the full
// vocabulary, plus true labels.
void calibration_inputs(Model& model, const Dataset& data, const std::vector<QuestionId>& replay,
                        QuestionType qt, Mat<float>& scores, std::vector<std::int32_t>& labels) {
    std::vector<QuestionId> ids;
    for (QuestionId id : replay)
        if (question_qtype(id) == qt) ids.push_back(id);
    const std::size_t c = qt == QuestionType::SPOP ? model.dims.n_pred : model.dims.n_attr;
    scores = Mat<float>(ids.size(), c);
    labels.resize(ids.size());
    if (ids.empty()) return;
    std::vector<ScoreVector> sv = score_questions(model, data, ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy(sv[i].scores.begin(), sv[i].scores.end(), scores.row(i));
        const Triple& t = data.triples[question_triple_index(ids[i])];
        labels[i] = make_model_target(t, qt).id;
    }
}

}  // namespace

BiasCorrectionResult bias_correct(Model& model, const Dataset& data,
                                  const std::vector<QuestionId>& replay, const TrainConfig& cfg,
                                  Rng& rng, ProtocolProbe* probe) {
    if (replay.empty()) throw std::invalid_argument("bias_correct: empty replay buffer");
    const std::uint64_t pre_hash = model.state_hash();
    Model snapshot = model;

    // stage 1: natural-distribution fine-tuning, Adam with cosine annealing
    {
        // chunks shorter than 2 rows are dropped by the epoch loop below
        const std::size_t bs_count = static_cast<std::size_t>(cfg.batch_standard);
        std::size_t batches_per_epoch = replay.size() / bs_count + (replay.size() % bs_count >= 2);
        AdamOptimizer opt(model, cfg.bias_stage1_lr,
                          static_cast<std::uint64_t>(cfg.bias_stage1_epochs) * batches_per_epoch);
        std::vector<QuestionId> ids = replay;
        const std::size_t bs = static_cast<std::size_t>(cfg.batch_standard);
        for (int e = 0; e < cfg.bias_stage1_epochs; ++e) {
            rng.shuffle(ids);
            for (std::size_t start = 0; start < ids.size(); start += bs) {
                std::size_t n = std::min(bs, ids.size() - start);
                if (n < 2) break;
                std::vector<QuestionId> chunk(ids.begin() + start, ids.begin() + start + n);
                TrainBatch batch = make_labeled_batch(data, chunk);
                QuestionForward<float> qf;
                TargetForward<float> tf;
                forward_questions(model, data.features, batch.questions, Mode::Train, &qf);
                forward_targets(model, data.features, batch.targets, Mode::Train, &tf);
                NcaResult<float> loss = nca_loss(qf.pred, tf.targ, batch.n_pos);
                ModelGrads grads(model);
                backward_questions(model, qf, loss.dpred, grads);
                backward_targets(model, tf, loss.dtarg, grads);
                opt.step(model, grads);
            }
        }
    }

    // stage 2: per-class affine calibration for the two class-answer types
    BiasCorrectionResult result;
    result.bias = BiasParams(model.dims.n_pred, model.dims.n_attr);
    {
        Mat<float> scores;
        std::vector<std::int32_t> labels;
        calibration_inputs(model, data, replay, QuestionType::SPOP, scores, labels);
        fit_bias_calibration(scores, labels, cfg.bias_stage2_iters, cfg.bias_stage2_lr,
                             result.bias.pred_alpha, result.bias.pred_beta);
        calibration_inputs(model, data, replay, QuestionType::SPAA, scores, labels);
        fit_bias_calibration(scores, labels, cfg.bias_stage2_iters, cfg.bias_stage2_lr,
                             result.bias.attr_alpha, result.bias.attr_beta);
    }
    result.finetuned = model;

    model = snapshot;
    const std::uint64_t post_hash = model.state_hash();
    if (probe && probe->on_bias_reset) probe->on_bias_reset(pre_hash, post_hash);
    if (post_hash != pre_hash)
        throw std::logic_error("bias_correct: parameter restore is not bit-exact");
    return result;
}

std::vector<QuestionId> pretrain_sample(const Dataset& data, const std::vector<QuestionId>& train_pool,
                                        int per_class, Rng& rng) {
    const auto& dict = data.dict;
    std::vector<std::vector<QuestionId>> attr_bucket(dict.n_attr()), pred_bucket(dict.n_pred());
    for (QuestionId id : train_pool) {
        Question q{id, question_triple_index(id), question_qtype(id)};
        std::int32_t cls = question_class(data, q);
        if (qtype_is_attribute_kind(q.qtype))
            attr_bucket[cls].push_back(id);
        else
            pred_bucket[cls].push_back(id);
    }

    bool any_head = false;
    std::vector<QuestionId> out;
    auto sample_bucket = [&](std::vector<QuestionId>& bucket) {
        std::sort(bucket.begin(), bucket.end());
        std::size_t k = std::min<std::size_t>(per_class, bucket.size());
        for (std::size_t idx : rng.sample_without_replacement(bucket.size(), k))
            out.push_back(bucket[idx]);
    };
    for (std::size_t c = 0; c < dict.n_attr(); ++c) {
        if (!dict.attr_is_head[c]) continue;
        any_head = true;
        sample_bucket(attr_bucket[c]);
    }
    for (std::size_t c = 0; c < dict.n_pred(); ++c) {
        if (!dict.pred_is_head[c]) continue;
        if (static_cast<std::int32_t>(c) == dict.has_attribute_id) continue;
        any_head = true;
        sample_bucket(pred_bucket[c]);
    }
    if (!any_head) throw std::runtime_error("pretrain_sample: no head classes");
    return out;
}

IncrementOutcome run_increment(Model& model, const Dataset& data,
                               std::vector<QuestionId>& replay,
                               const std::vector<QuestionId>& new_data, const TrainConfig& cfg,
                               bool rebalanced, bool bias_correction, IncrementRngs rngs,
                               const EvalFn& eval_fn, HardNegativeBuffer& negatives,
                               ProtocolProbe* probe) {
    if (new_data.empty()) throw std::invalid_argument("run_increment: empty new data");
    IncrementOutcome outcome;

    Model snapshot = model;
    CvResult cv = cross_validate(snapshot, data, replay, new_data, cfg, rebalanced, negatives,
                                 rngs.cv, probe);
    outcome.best_epoch = cv.best_epoch;
    model = snapshot;

    // full training for the validated number of epochs on all data
    if (rebalanced) {
        SgdOptimizer opt(model, cfg.lr, cfg.momentum, cfg.weight_decay);
        EpochStream new_stream(new_data, Rng::stream(rngs.train.u64(), "full-new"));
        EpochStream replay_stream(replay, Rng::stream(rngs.train.u64(), "full-replay"));
        Rng batch_rng = Rng::stream(rngs.train.u64(), "full-batch");
        while (new_stream.passes_completed() < static_cast<std::size_t>(cv.best_epoch)) {
            TrainBatch batch = next_rebalanced_batch(model, data, cfg, new_stream, replay_stream,
                                                     replay, negatives, batch_rng, true);
            if (probe && probe->on_batch) probe->on_batch(batch);
            train_step(model, data, batch, opt);
        }
    } else {
        std::vector<QuestionId> all = replay;
        all.insert(all.end(), new_data.begin(), new_data.end());
        train_standard_epochs(model, data, all, cv.best_epoch, cfg, rngs.train);
    }

    if (bias_correction) {
        BiasCorrectionResult bc = bias_correct(model, data, replay, cfg, rngs.bias, probe);
        outcome.bias_applied = true;
        if (eval_fn) eval_fn(bc.finetuned, &bc.bias);
    } else {
        if (eval_fn) eval_fn(model, nullptr);
    }

    replay.insert(replay.end(), new_data.begin(), new_data.end());
    negatives.clear();
    return outcome;
}

std::vector<NamedTensor> model_state_tensors(Model& model) {
    std::vector<NamedTensor> out;
    model.for_each_state([&](const std::string& name, std::vector<float>& v) {
        NamedTensor t;
        t.name = name;
        t.value = Mat<float>(1, v.size());
        std::copy(v.begin(), v.end(), t.value.data.begin());
        out.push_back(std::move(t));
    });
    return out;
}

void load_model_state(Model& model, const std::vector<NamedTensor>& tensors) {
    std::size_t i = 0;
    model.for_each_state([&](const std::string& name, std::vector<float>& v) {
        if (i >= tensors.size()) throw std::runtime_error("checkpoint: missing tensor " + name);
        const NamedTensor& t = tensors[i++];
        if (t.name != name)
            throw std::runtime_error("checkpoint: expected tensor '" + name + "', found '" + t.name + "'");
        if (t.value.data.size() != v.size())
            throw std::runtime_error("checkpoint: size mismatch for " + name);
        std::copy(t.value.data.begin(), t.value.data.end(), v.begin());
    });
    if (i != tensors.size()) throw std::runtime_error("checkpoint: extra tensors present");
}

}  // namespace qbcat
