#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbcat/layers.hpp"
#include "qbcat/schema.hpp"

namespace qbcat {

struct ModelDims {
    int feature_dim = 0;
    int hidden = 256;
    int embed = 128;
    int n_attr = 0;
    int n_pred = 0;  // includes the "has attribute" predicate
};

enum class TargetKind : std::uint8_t { Box, Predicate, Attribute };

struct ModelTarget {
    TargetKind kind;
    std::int32_t id;  // feature row for Box, class id otherwise
};

// A question resolved to model inputs; -1 marks the masked slot.
struct ModelQuestion {
    QuestionType qtype = QuestionType::SPOS;
    std::int32_t subj_box = -1;
    std::int32_t pred_id = -1;
    std::int32_t obj_box = -1;   // relation third slot
    std::int32_t attr_id = -1;   // attribute third slot
};

inline ModelQuestion make_model_question(const Triple& t, QuestionType qt) {
    ModelQuestion q;
    q.qtype = qt;
    switch (qt) {
        case QuestionType::SPOS:
            q.pred_id = t.predicate;
            q.obj_box = t.object_box;
            break;
        case QuestionType::SPAS:
            q.pred_id = t.predicate;
            q.attr_id = t.attribute;
            break;
        case QuestionType::SPOP:
            q.subj_box = t.subject_box;
            q.obj_box = t.object_box;
            break;
        case QuestionType::SPAP:
            q.subj_box = t.subject_box;
            q.attr_id = t.attribute;
            break;
        case QuestionType::SPOO:
            q.subj_box = t.subject_box;
            q.pred_id = t.predicate;
            break;
        case QuestionType::SPAA:
            q.subj_box = t.subject_box;
            q.pred_id = t.predicate;
            break;
    }
    return q;
}

inline ModelTarget make_model_target(const Triple& t, QuestionType qt) {
    switch (qt) {
        case QuestionType::SPOS:
        case QuestionType::SPAS: return {TargetKind::Box, t.subject_box};
        case QuestionType::SPOP:
        case QuestionType::SPAP: return {TargetKind::Predicate, t.predicate};
        case QuestionType::SPOO: return {TargetKind::Box, t.object_box};
        case QuestionType::SPAA: return {TargetKind::Attribute, t.attribute};
    }
    throw std::logic_error("make_model_target: bad qtype");
}

// All trainable tensors: box/question/target embedders, class tables, Null
// tokens. F_O/F_OT map d_o -> hidden -> d; G maps 3d -> hidden -> d; tables
// are class-count × d with no norm or activation behind them.
template <typename T>
struct ModelParamsT {
    ModelDims dims;
    TwoLayerNet<T> f_o, f_ot, g;
    Mat<T> f_a, f_p, f_at, f_pt;
    std::vector<T> null_a, null_p, null_o;

    ModelParamsT() = default;
    explicit ModelParamsT(const ModelDims& d)
        : dims(d),
          f_o(d.feature_dim, d.hidden, d.embed),
          f_ot(d.feature_dim, d.hidden, d.embed),
          g(3 * d.embed, d.hidden, d.embed),
          f_a(d.n_attr, d.embed),
          f_p(d.n_pred, d.embed),
          f_at(d.n_attr, d.embed),
          f_pt(d.n_pred, d.embed),
          null_a(d.embed, T(0)),
          null_p(d.embed, T(0)),
          null_o(d.embed, T(0)) {}

    void init(Rng& rng) {
        f_o.init(rng);
        f_ot.init(rng);
        g.init(rng);
        for (auto* t : {&f_a, &f_p, &f_at, &f_pt})
            for (auto& v : t->data) v = static_cast<T>(rng.uniform(-0.05, 0.05));
        for (auto* t : {&null_a, &null_p, &null_o})
            for (auto& v : *t) v = static_cast<T>(rng.uniform(-0.05, 0.05));
    }

    // Trainable tensors in a fixed order; decay flags mark dense weights and
    // embedding tables (weight decay skips biases, norm params, Null tokens).
    template <typename F>
    void for_each_trainable(F&& f) {
        auto dense = [&](const char* prefix, Dense<T>& l) {
            f(std::string(prefix) + ".weight", l.weight.data, true);
            f(std::string(prefix) + ".bias", l.bias, false);
            f(std::string(prefix) + ".bn_gamma", l.bn_gamma, false);
            f(std::string(prefix) + ".bn_beta", l.bn_beta, false);
        };
        dense("f_o.l1", f_o.l1);
        dense("f_o.l2", f_o.l2);
        dense("f_ot.l1", f_ot.l1);
        dense("f_ot.l2", f_ot.l2);
        dense("g.l1", g.l1);
        dense("g.l2", g.l2);
        f("f_a", f_a.data, true);
        f("f_p", f_p.data, true);
        f("f_at", f_at.data, true);
        f("f_pt", f_pt.data, true);
        f("null_a", null_a, false);
        f("null_p", null_p, false);
        f("null_o", null_o, false);
    }

    // Trainables plus batch-norm running statistics; the full mutable state.
    template <typename F>
    void for_each_state(F&& f) {
        for_each_trainable([&](const std::string& name, std::vector<T>& v, bool) { f(name, v); });
        auto running = [&](const char* prefix, Dense<T>& l) {
            f(std::string(prefix) + ".bn_running_mean", l.bn_running_mean);
            f(std::string(prefix) + ".bn_running_var", l.bn_running_var);
        };
        running("f_o.l1", f_o.l1);
        running("f_o.l2", f_o.l2);
        running("f_ot.l1", f_ot.l1);
        running("f_ot.l2", f_ot.l2);
        running("g.l1", g.l1);
        running("g.l2", g.l2);
    }

    std::uint64_t state_hash() {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for_each_state([&](const std::string& name, std::vector<T>& v) {
            h = fnv1a64(name.data(), name.size(), h);
            h = hash_bytes(v, h);
        });
        return h;
    }
};

template <typename T>
struct ModelGradsT {
    NetGrads<T> f_o, f_ot, g;
    Mat<T> f_a, f_p, f_at, f_pt;
    std::vector<T> null_a, null_p, null_o;

    explicit ModelGradsT(const ModelParamsT<T>& p)
        : f_o(p.f_o),
          f_ot(p.f_ot),
          g(p.g),
          f_a(p.f_a.rows, p.f_a.cols),
          f_p(p.f_p.rows, p.f_p.cols),
          f_at(p.f_at.rows, p.f_at.cols),
          f_pt(p.f_pt.rows, p.f_pt.cols),
          null_a(p.null_a.size(), T(0)),
          null_p(p.null_p.size(), T(0)),
          null_o(p.null_o.size(), T(0)) {}

    // Same order as ModelParamsT::for_each_trainable.
    template <typename F>
    void for_each(F&& f) {
        auto dense = [&](DenseGrads<T>& gl) {
            f(gl.weight.data);
            f(gl.bias);
            f(gl.bn_gamma);
            f(gl.bn_beta);
        };
        dense(f_o.g1);
        dense(f_o.g2);
        dense(f_ot.g1);
        dense(f_ot.g2);
        dense(g.g1);
        dense(g.g2);
        f(f_a.data);
        f(f_p.data);
        f(f_at.data);
        f(f_pt.data);
        f(null_a);
        f(null_p);
        f(null_o);
    }
};

namespace detail {

enum class SlotSource : std::uint8_t { FoRow, FpRow, FaRow, NullO, NullP, NullA };

struct Slot {
    SlotSource src;
    std::int32_t index;  // row into fo output / class table, unused for nulls
};

}  // namespace detail

// Caches from embedding a batch of questions; needed for backward.
template <typename T>
struct QuestionForward {
    std::vector<detail::Slot> slots;  // 3 per question, [s; p; o/a] order
    Mat<T> fo_in;
    NetCache<T> fo_cache;
    Mat<T> h;  // B×3d concatenated inputs of G
    NetCache<T> g_cache;
    Mat<T> pred;  // B×d
};

template <typename T>
struct TargetForward {
    std::vector<ModelTarget> targets;
    std::vector<std::int32_t> fot_slot;  // per question: row in fot_in or -1
    Mat<T> fot_in;
    NetCache<T> fot_cache;
    Mat<T> targ;  // B×d
};

template <typename T>
Mat<T> forward_questions(ModelParamsT<T>& params, const Mat<T>& features,
                         const std::vector<ModelQuestion>& qs, Mode mode,
                         QuestionForward<T>* fwd = nullptr) {
    const int d = params.dims.embed;
    const std::size_t b = qs.size();
    std::vector<detail::Slot> slots;
    slots.reserve(3 * b);
    std::vector<std::int32_t> fo_rows;  // feature rows routed through F_O

    auto classify = [&](const ModelQuestion& q) {
        // subject slot
        if (q.subj_box >= 0) {
            slots.push_back({detail::SlotSource::FoRow, static_cast<std::int32_t>(fo_rows.size())});
            fo_rows.push_back(q.subj_box);
        } else {
            slots.push_back({detail::SlotSource::NullO, -1});
        }
        // predicate slot
        if (q.pred_id >= 0) {
            if (q.pred_id >= params.dims.n_pred) throw std::out_of_range("predicate id out of range");
            slots.push_back({detail::SlotSource::FpRow, q.pred_id});
        } else {
            slots.push_back({detail::SlotSource::NullP, -1});
        }
        // object/attribute slot
        if (q.qtype == QuestionType::SPOS || q.qtype == QuestionType::SPOP) {
            slots.push_back({detail::SlotSource::FoRow, static_cast<std::int32_t>(fo_rows.size())});
            fo_rows.push_back(q.obj_box);
        } else if (q.qtype == QuestionType::SPOO) {
            slots.push_back({detail::SlotSource::NullO, -1});
        } else if (q.qtype == QuestionType::SPAS || q.qtype == QuestionType::SPAP) {
            if (q.attr_id < 0 || q.attr_id >= params.dims.n_attr)
                throw std::out_of_range("attribute id out of range");
            slots.push_back({detail::SlotSource::FaRow, q.attr_id});
        } else {  // SPAA
            slots.push_back({detail::SlotSource::NullA, -1});
        }
    };
    for (const auto& q : qs) classify(q);

    Mat<T> fo_in(fo_rows.size(), params.dims.feature_dim);
    for (std::size_t i = 0; i < fo_rows.size(); ++i) {
        if (fo_rows[i] < 0 || static_cast<std::size_t>(fo_rows[i]) >= features.rows)
            throw std::out_of_range("box feature row out of range");
        std::copy(features.row(fo_rows[i]), features.row(fo_rows[i]) + features.cols, fo_in.row(i));
    }
    Mat<T> fo_out;
    NetCache<T> fo_cache;
    // a single gathered row has no batch statistics; fall back to running ones
    Mode fo_mode = (mode == Mode::Train && fo_in.rows == 1) ? Mode::Eval : mode;
    if (fo_in.rows > 0)
        fo_out = net_forward(params.f_o, fo_in, fo_mode, fwd ? &fo_cache : nullptr);

    Mat<T> h(b, 3 * d);
    for (std::size_t i = 0; i < b; ++i) {
        for (int s = 0; s < 3; ++s) {
            const detail::Slot& slot = slots[3 * i + s];
            T* dst = h.row(i) + s * d;
            const T* src = nullptr;
            switch (slot.src) {
                case detail::SlotSource::FoRow: src = fo_out.row(slot.index); break;
                case detail::SlotSource::FpRow: src = params.f_p.row(slot.index); break;
                case detail::SlotSource::FaRow: src = params.f_a.row(slot.index); break;
                case detail::SlotSource::NullO: src = params.null_o.data(); break;
                case detail::SlotSource::NullP: src = params.null_p.data(); break;
                case detail::SlotSource::NullA: src = params.null_a.data(); break;
            }
            std::copy(src, src + d, dst);
        }
    }
    NetCache<T> g_cache;
    Mat<T> pred = net_forward(params.g, h, mode, fwd ? &g_cache : nullptr);
    if (fwd) {
        fwd->slots = std::move(slots);
        fwd->fo_in = std::move(fo_in);
        fwd->fo_cache = std::move(fo_cache);
        fwd->h = std::move(h);
        fwd->g_cache = std::move(g_cache);
        fwd->pred = pred;
    }
    return pred;
}

template <typename T>
Mat<T> forward_targets(ModelParamsT<T>& params, const Mat<T>& features,
                       const std::vector<ModelTarget>& ts, Mode mode,
                       TargetForward<T>* fwd = nullptr) {
    const int d = params.dims.embed;
    std::vector<std::int32_t> fot_slot(ts.size(), -1);
    std::vector<std::int32_t> fot_rows;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i].kind == TargetKind::Box) {
            if (ts[i].id < 0 || static_cast<std::size_t>(ts[i].id) >= features.rows)
                throw std::out_of_range("target box row out of range");
            fot_slot[i] = static_cast<std::int32_t>(fot_rows.size());
            fot_rows.push_back(ts[i].id);
        } else if (ts[i].kind == TargetKind::Predicate) {
            if (ts[i].id < 0 || ts[i].id >= params.dims.n_pred)
                throw std::out_of_range("target predicate id out of range");
        } else {
            if (ts[i].id < 0 || ts[i].id >= params.dims.n_attr)
                throw std::out_of_range("target attribute id out of range");
        }
    }
    Mat<T> fot_in(fot_rows.size(), params.dims.feature_dim);
    for (std::size_t i = 0; i < fot_rows.size(); ++i)
        std::copy(features.row(fot_rows[i]), features.row(fot_rows[i]) + features.cols, fot_in.row(i));
    Mat<T> fot_out;
    NetCache<T> fot_cache;
    Mode fot_mode = (mode == Mode::Train && fot_in.rows == 1) ? Mode::Eval : mode;
    if (fot_in.rows > 0)
        fot_out = net_forward(params.f_ot, fot_in, fot_mode, fwd ? &fot_cache : nullptr);

    Mat<T> targ(ts.size(), d);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const T* src = nullptr;
        if (ts[i].kind == TargetKind::Box)
            src = fot_out.row(fot_slot[i]);
        else if (ts[i].kind == TargetKind::Predicate)
            src = params.f_pt.row(ts[i].id);
        else
            src = params.f_at.row(ts[i].id);
        std::copy(src, src + d, targ.row(i));
    }
    if (fwd) {
        fwd->targets = ts;
        fwd->fot_slot = std::move(fot_slot);
        fwd->fot_in = std::move(fot_in);
        fwd->fot_cache = std::move(fot_cache);
        fwd->targ = targ;
    }
    return targ;
}

// Accumulates gradients for a recorded forward; dpred/dtarg are dL w.r.t. the
// question and target embeddings. Embedding rows not touched by the batch
// keep exactly zero gradient.
template <typename T>
void backward_questions(const ModelParamsT<T>& params, const QuestionForward<T>& fwd,
                        const Mat<T>& dpred, ModelGradsT<T>& grads) {
    const int d = params.dims.embed;
    Mat<T> dh = net_backward(params.g, fwd.g_cache, dpred, grads.g);
    Mat<T> dfo(fwd.fo_in.rows, d);
    for (std::size_t i = 0; i < fwd.h.rows; ++i) {
        for (int s = 0; s < 3; ++s) {
            const detail::Slot& slot = fwd.slots[3 * i + s];
            const T* src = dh.row(i) + s * d;
            T* dst = nullptr;
            switch (slot.src) {
                case detail::SlotSource::FoRow: dst = dfo.row(slot.index); break;
                case detail::SlotSource::FpRow: dst = grads.f_p.row(slot.index); break;
                case detail::SlotSource::FaRow: dst = grads.f_a.row(slot.index); break;
                case detail::SlotSource::NullO: dst = grads.null_o.data(); break;
                case detail::SlotSource::NullP: dst = grads.null_p.data(); break;
                case detail::SlotSource::NullA: dst = grads.null_a.data(); break;
            }
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
    }
    if (dfo.rows > 0) net_backward(params.f_o, fwd.fo_cache, dfo, grads.f_o);
}

template <typename T>
void backward_targets(const ModelParamsT<T>& params, const TargetForward<T>& fwd,
                      const Mat<T>& dtarg, ModelGradsT<T>& grads) {
    const int d = params.dims.embed;
    Mat<T> dfot(fwd.fot_in.rows, d);
    for (std::size_t i = 0; i < fwd.targets.size(); ++i) {
        const T* src = dtarg.row(i);
        T* dst = nullptr;
        if (fwd.targets[i].kind == TargetKind::Box)
            dst = dfot.row(fwd.fot_slot[i]);
        else if (fwd.targets[i].kind == TargetKind::Predicate)
            dst = grads.f_pt.row(fwd.targets[i].id);
        else
            dst = grads.f_at.row(fwd.targets[i].id);
        for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
    if (dfot.rows > 0) net_backward(params.f_ot, fwd.fot_cache, dfot, grads.f_ot);
}

// Squared Euclidean distances between row sets: out[i][j] = ||a_i - b_j||^2.
template <typename T>
Mat<T> pairwise_sqdist(const Mat<T>& a, const Mat<T>& b) {
    if (a.cols != b.cols) throw std::invalid_argument("pairwise_sqdist: dim mismatch");
    Mat<T> dots;
    matmul_nt(a, b, dots);
    std::vector<T> an(a.rows), bn(b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        T s = T(0);
        const T* r = a.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) s += r[j] * r[j];
        an[i] = s;
    }
    for (std::size_t i = 0; i < b.rows; ++i) {
        T s = T(0);
        const T* r = b.row(i);
        for (std::size_t j = 0; j < b.cols; ++j) s += r[j] * r[j];
        bn[i] = s;
    }
    for (std::size_t i = 0; i < a.rows; ++i) {
        T* row = dots.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) row[j] = an[i] + bn[j] - T(2) * row[j];
    }
    return dots;
}

template <typename T>
struct NcaFromDistances {
    T loss;
    Mat<T> ddist;
};

// Per positive row q: -log( exp(-D[q][q]) / sum_{u,v} exp(-D[u][v]) ), mean
// over the first n_pos rows. The denominator runs over every pair including
// the diagonal; rows past n_pos contribute denominator mass only (mined
// negatives). Stabilized by the smallest distance.
template <typename T>
NcaFromDistances<T> nca_from_distances(const Mat<T>& dist, std::size_t n_pos) {
    if (dist.rows == 0 || dist.rows != dist.cols)
        throw std::invalid_argument("nca_from_distances: square matrix required");
    if (n_pos == 0 || n_pos > dist.rows)
        throw std::invalid_argument("nca_from_distances: bad positive count");
    const std::size_t m = dist.rows;
    T dmin = dist.data[0];
    for (T v : dist.data) dmin = std::min(dmin, v);
    T wsum = T(0);
    Mat<T> w(m, m);
    for (std::size_t i = 0; i < m * m; ++i) {
        w.data[i] = std::exp(dmin - dist.data[i]);
        wsum += w.data[i];
    }
    T logsum = -dmin + std::log(wsum);
    T loss = T(0);
    for (std::size_t q = 0; q < n_pos; ++q) loss += dist.at(q, q) + logsum;
    loss /= T(n_pos);

    NcaFromDistances<T> out;
    out.loss = loss;
    out.ddist = Mat<T>(m, m);
    const T inv_pos = T(1) / T(n_pos);
    for (std::size_t u = 0; u < m; ++u) {
        T* row = out.ddist.row(u);
        const T* wrow = w.row(u);
        for (std::size_t v = 0; v < m; ++v) row[v] = -wrow[v] / wsum;
        if (u < n_pos) row[u] += inv_pos;
    }
    return out;
}

template <typename T>
struct NcaResult {
    T loss;
    Mat<T> dpred, dtarg;
};

template <typename T>
NcaResult<T> nca_loss(const Mat<T>& pred, const Mat<T>& targ, std::size_t n_pos) {
    if (!pred.same_shape(targ)) throw std::invalid_argument("nca_loss: shape mismatch");
    if (pred.rows == 0) throw std::invalid_argument("nca_loss: empty batch");
    Mat<T> dist = pairwise_sqdist(pred, targ);
    NcaFromDistances<T> nd = nca_from_distances(dist, n_pos);
    if (!std::isfinite(nd.loss)) throw std::runtime_error("nca_loss: non-finite loss");

    const std::size_t m = pred.rows, d = pred.cols;
    std::vector<T> rowsum(m, T(0)), colsum(m, T(0));
    for (std::size_t u = 0; u < m; ++u) {
        const T* row = nd.ddist.row(u);
        for (std::size_t v = 0; v < m; ++v) {
            rowsum[u] += row[v];
            colsum[v] += row[v];
        }
    }
    Mat<T> gt;  // ddist · targ
    matmul_nn(nd.ddist, targ, gt);
    Mat<T> gh(m, d);  // ddistᵀ · pred
    matmul_tn_acc(nd.ddist, pred, gh);

    NcaResult<T> out;
    out.loss = nd.loss;
    out.dpred = Mat<T>(m, d);
    out.dtarg = Mat<T>(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        const T* p = pred.row(i);
        const T* t = targ.row(i);
        const T* gti = gt.row(i);
        const T* ghi = gh.row(i);
        T* dp = out.dpred.row(i);
        T* dt = out.dtarg.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            dp[j] = T(2) * (rowsum[i] * p[j] - gti[j]);
            dt[j] = T(2) * (colsum[i] * t[j] - ghi[j]);
        }
    }
    return out;
}

// Convenience wrappers mirroring single-question inference.
template <typename T>
std::vector<T> embed_question(ModelParamsT<T>& params, const Mat<T>& features,
                              const ModelQuestion& q) {
    Mat<T> out = forward_questions<T>(params, features, {q}, Mode::Eval);
    return std::vector<T>(out.row(0), out.row(0) + out.cols);
}

template <typename T>
std::vector<T> embed_target(ModelParamsT<T>& params, const Mat<T>& features, const ModelTarget& t) {
    Mat<T> out = forward_targets<T>(params, features, {t}, Mode::Eval);
    return std::vector<T>(out.row(0), out.row(0) + out.cols);
}

struct ScoreVector {
    std::vector<std::int32_t> candidates;
    std::vector<float> scores;  // negative squared distance, higher is better
};

}  // namespace qbcat
