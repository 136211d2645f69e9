#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <unordered_set>
#include <vector>

#include "qbcat/io.hpp"
#include "qbcat/optim.hpp"
#include "qbcat/scoring.hpp"

namespace qbcat {

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    int batch_rebalanced = 512;  // M; each batch carries M/2 new + M/2 old samples
    int batch_standard = 256;
    int mining_pool = 800;
    int top_ell = 3;
    int cv_k = 5;
    int cv_patience = 10;
    int max_epochs = 100;
    int pretrain_per_class = 2500;
    int pretrain_epochs = 1;
    int offline_epochs = 25;
    int bias_stage1_epochs = 10;
    double bias_stage1_lr = 0.01;
    int bias_stage2_iters = 500;
    double bias_stage2_lr = 0.01;
    int hidden_dim = 256;
    int embed_dim = 128;

    void validate() const;
};

// Endless stream over a fixed id set: sequential within a shuffled pass, then
// reshuffle. take(k) returns exactly k ids; one pass visits every id once.
class EpochStream {
public:
    EpochStream(std::vector<QuestionId> ids, Rng rng);

    std::vector<QuestionId> take(std::size_t k);
    std::size_t passes_completed() const { return passes_; }
    std::size_t size() const { return ids_.size(); }

private:
    std::vector<QuestionId> ids_;
    std::size_t pos_ = 0;
    std::size_t passes_ = 0;
    Rng rng_;
};

// Mined (question, wrong candidate) pairs, deduplicated, cleared per increment.
class HardNegativeBuffer {
public:
    struct Pair {
        QuestionId qid;
        TargetKind kind;
        std::int32_t candidate;
    };

    bool add(const Pair& p);
    void clear();
    std::size_t size() const { return items_.size(); }
    const std::vector<Pair>& items() const { return items_; }

private:
    std::vector<Pair> items_;
    std::unordered_set<std::uint64_t> keys_;
};

// SGD with momentum over the model registry; decay flags follow the registry.
class SgdOptimizer {
public:
    SgdOptimizer(Model& model, double lr, double momentum, double weight_decay);
    void step(Model& model, ModelGrads& grads);

private:
    std::vector<std::vector<float>> velocity_;
    std::vector<bool> decay_;
    double lr_, momentum_, weight_decay_;
};

// Adam with optional cosine annealing over a fixed horizon.
class AdamOptimizer {
public:
    AdamOptimizer(Model& model, double lr, std::uint64_t cosine_total_steps = 0);
    void step(Model& model, ModelGrads& grads);

private:
    std::vector<std::vector<float>> m_, v_;
    double lr_;
    std::uint64_t total_steps_, step_ = 0;
};

struct TrainBatch {
    std::vector<ModelQuestion> questions;
    std::vector<ModelTarget> targets;
    std::size_t n_pos = 0;  // leading rows with true targets; the rest are mined negatives
    // sample bookkeeping for protocol checks
    std::size_t new_samples = 0, pair_rows = 0, fill_rows = 0;
};

// One forward/backward/SGD update; returns the loss.
float train_step(Model& model, const Dataset& data, const TrainBatch& batch, SgdOptimizer& opt);

// Eval-mode loss of a labeled batch (validation).
float eval_loss(Model& model, const Dataset& data, const std::vector<QuestionId>& ids);

TrainBatch make_labeled_batch(const Dataset& data, const std::vector<QuestionId>& ids);

// Index of the top-scoring wrong candidate when the answer is outside the
// top-ell scores, nullopt otherwise. Ties rank by candidate position.
std::optional<std::size_t> hard_negative_choice(const ScoreVector& scored, std::int32_t answer,
                                                int top_ell);

// Scores a replay chunk and emits a (question, top wrong candidate) pair for
// each question whose answer is outside the top-ell scores.
std::size_t mine_hard_negatives(Model& model, const Dataset& data,
                                const std::vector<QuestionId>& chunk, int top_ell,
                                HardNegativeBuffer& buffer);

// Epoch-count selection: strict improvements move the best mark, `update`
// returns true once `patience` epochs pass without one.
struct EarlyStopper {
    explicit EarlyStopper(int patience) : patience_(patience) {}

    bool update(double loss) {
        ++epoch_;
        if (loss < best_loss_) {
            best_loss_ = loss;
            best_epoch_ = epoch_;
        }
        return epoch_ - best_epoch_ >= patience_;
    }
    int best_epoch() const { return best_epoch_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

struct ProtocolProbe {
    std::function<void(const TrainBatch&)> on_batch;
    std::function<void(std::uint64_t pre_hash, std::uint64_t post_hash)> on_bias_reset;
};

// Builds the next re-balanced batch: mines on the next replay chunk, then
// composes M/2 new samples, up to M/4 negative pairs and uniform replay fill
// for the remaining old-sample budget.
TrainBatch next_rebalanced_batch(Model& model, const Dataset& data, const TrainConfig& cfg,
                                 EpochStream& new_stream, EpochStream& replay_stream,
                                 const std::vector<QuestionId>& replay,
                                 HardNegativeBuffer& negatives, Rng& rng, bool mine);

// Shuffled uniform mini-batches of batch_standard rows for a fixed number of
// epochs (pre-training, offline bounds, standard-mini-batch ablation).
void train_standard_epochs(Model& model, const Dataset& data, std::vector<QuestionId> ids,
                           int epochs, const TrainConfig& cfg, Rng& rng);

// Stratified k-fold assignment: class-target questions stratify by
// (qtype,target class), box-target ones by qtype. Returns fold index per id.
std::vector<int> stratified_folds(const Dataset& data, const std::vector<QuestionId>& ids, int k,
                                  Rng& rng);

struct CvResult {
    int best_epoch = 0;
    std::vector<double> val_losses;  // one per trained epoch
};

// Single-round cross-validation on a model copy: train on (k-1) folds of
// replay and new data with re-balanced batches, track Eval-mode validation
// loss per epoch, stop on patience, return the argmin epoch.
CvResult cross_validate(const Model& snapshot, const Dataset& data,
                        const std::vector<QuestionId>& replay,
                        const std::vector<QuestionId>& new_data, const TrainConfig& cfg,
                        bool rebalanced, HardNegativeBuffer& negatives, Rng& rng,
                        ProtocolProbe* probe = nullptr);

// Per-class (alpha, beta) fit by full-batch gradient descent on softmax
// cross-entropy; classes with no examples keep (1, 0).
void fit_bias_calibration(const Mat<float>& scores, const std::vector<std::int32_t>& labels,
                          int iters, double lr, std::vector<float>& alpha,
                          std::vector<float>& beta);

struct BiasCorrectionResult {
    BiasParams bias;
    Model finetuned;  // post stage-1 model the corrected scores belong to
};

// Stage 1: fine-tune on the replay buffer with standard mini-batches (Adam,
// cosine annealing). Stage 2: per-class affine calibration for SPOP and SPAA
// independently. The live model is restored bit-exactly before returning.
BiasCorrectionResult bias_correct(Model& model, const Dataset& data,
                                  const std::vector<QuestionId>& replay, const TrainConfig& cfg,
                                  Rng& rng, ProtocolProbe* probe = nullptr);

// Samples up to pretrain_per_class questions per head class (attribute heads
// plus predicate heads minus "has attribute") and trains with standard
// batches; returns the sampled ids, which seed the replay buffer.
std::vector<QuestionId> pretrain_sample(const Dataset& data, const std::vector<QuestionId>& train_pool,
                                        int per_class, Rng& rng);

struct IncrementRngs {
    Rng cv, train, bias;
};

struct IncrementOutcome {
    int best_epoch = 0;
    bool bias_applied = false;
};

using EvalFn = std::function<void(Model& eval_model, const BiasParams* bias)>;

// One increment: snapshot -> cross-validate -> restore -> full training on
// replay + new data -> optional bias correction -> evaluate -> append new
// data to the replay buffer and clear the negative buffer.
IncrementOutcome run_increment(Model& model, const Dataset& data,
                               std::vector<QuestionId>& replay,
                               const std::vector<QuestionId>& new_data, const TrainConfig& cfg,
                               bool rebalanced, bool bias_correction, IncrementRngs rngs,
                               const EvalFn& eval_fn, HardNegativeBuffer& negatives,
                               ProtocolProbe* probe = nullptr);

// Checkpoint glue for the model registry (1×n tensors, fixed order).
std::vector<NamedTensor> model_state_tensors(Model& model);
void load_model_state(Model& model, const std::vector<NamedTensor>& tensors);

}  // namespace qbcat
