#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "qbcat/schema.hpp"

namespace qbcat {

struct SynthConfig {
    int n_attr_classes = 60;
    int n_pred_classes = 20;  // relation predicates; "has attribute" is added on top
    double zipf_exponent = 1.3;
    int n_images = 2000;
    std::array<int, 2> objects_per_image = {2, 4};
    std::array<int, 2> relations_per_image = {1, 3};
    std::array<int, 2> attributes_per_object = {1, 2};
    int feature_dim = 32;
    double prototype_noise_sigma = 0.15;
    std::uint64_t seed = 1;
    std::array<double, 3> split_fractions = {0.8, 0.1, 0.1};

    void validate() const;
};

// p_i proportional to 1/i^s, normalized, descending.
std::vector<double> zipf_class_weights(int n, double s);

enum class Split : int { Train = 0, Val = 1, Test = 2 };

struct SynthDataset {
    Dataset data;                      // dictionary counts are train-split counts
    std::vector<Split> image_split;    // indexed by image id
    Mat<float> attr_prototypes;        // n_attr × feature_dim, post-relabel order
    std::vector<std::int32_t> predicate_table;  // n_attr*n_attr -> predicate id

    std::vector<std::size_t> triples_of_split(Split s) const;
};

// Pure function of the config. Object features are noisy means of their
// attribute-class prototypes; the predicate of an object pair is a fixed
// table lookup on the pair's dominant attributes, with rejection reshaping
// the predicate marginal to the Zipf target. Class ids are relabeled so that
// id order equals descending train count.
SynthDataset generate(const SynthConfig& cfg);

// Deterministic image-id split with exact largest-remainder counts.
std::vector<Split> split_images(int n_images, const std::array<double, 3>& fractions,
                                std::uint64_t seed);

}  // namespace qbcat
