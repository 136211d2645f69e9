#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "qbcat/sampler.hpp"
#include "qbcat/schema.hpp"
#include "qbcat/synthgen.hpp"
#include "qbcat/trainer.hpp"

namespace qbcat {

struct GenDataConfig {
    SynthConfig synth;
    std::string output_dir;
};

struct ExperimentConfig {
    std::string data_dir;
    std::string output_dir;
    std::vector<SamplerKind> samplers;
    std::vector<std::uint64_t> seeds;
    int increments = 10;
    int per_qtype_budget = 100;
    bool rebalanced_batches = true;
    bool bias_correction = true;
    bool tail_only_pool = false;
    bool write_checkpoints = true;
    TrainConfig train;

    void validate() const;
    std::uint64_t content_hash() const;
};

// Config files are JSON; overrides are "dotted.key=value" strings applied on
// top of the parsed document.
GenDataConfig load_gen_data_config(const std::string& path,
                                   const std::vector<std::string>& overrides);
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides);

// A dataset directory: dataset.json manifest naming the feature store,
// triples, dictionary and split files.
struct LoadedData {
    Dataset data;
    std::unordered_map<std::int64_t, Split> image_split;
    std::vector<Question> questions;  // all, build_questions order
    std::vector<QuestionId> train_q, val_q, test_q;

    void index_questions();
};

void save_dataset_dir(const std::string& dir, const SynthDataset& synth);
LoadedData load_dataset_dir(const std::string& dir);

}  // namespace qbcat
