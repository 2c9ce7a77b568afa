#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmfusion/attention.hpp"
#include "mmfusion/linalg.hpp"

namespace mmfusion {

// Prototype-plus-noise multimodal classification data. Each class owns one
// fixed random unit prototype direction per modality; a sample's tokens are
// signal * prototype(class) + unit-variance Gaussian noise. The signal
// multipliers (s_a, s_v) set per-modality informativeness; with probability
// flip_prob a sample swaps them, so the informative modality varies per
// sample.
struct SyntheticSpec {
    std::size_t classes = 4;
    std::size_t len_a = 2;
    std::size_t len_v = 2;
    std::size_t dim_in_a = 8;
    std::size_t dim_in_v = 8;
    double s_a = 1.0;
    double s_v = 1.0;
    double flip_prob = 0.0;
    std::size_t train_size = 2000;
    std::size_t test_size = 500;
    std::uint64_t seed = 0;
};

void validate(const SyntheticSpec& spec);

struct Sample {
    Matrix raw_a;
    Matrix raw_v;
    std::size_t label = 0;
    Modality informative_modality = Modality::a;  // larger effective signal; tie -> a
};

struct Dataset {
    SyntheticSpec spec;
    std::vector<Vector> prototypes_a;  // one unit direction per class
    std::vector<Vector> prototypes_v;
    std::vector<Sample> train;
    std::vector<Sample> test;
};

Dataset generate(const SyntheticSpec& spec);

enum class PerturbMode { replace, additive };

// Gaussian perturbation of one modality's raw tokens. sigma is the
// empirical std over that modality's token entries.
//   replace : x' = (1-level)*x + level*sigma*eps  (level 1 is pure
//             matched-variance noise, label-independent)
//   additive: x' = x + level*sigma*eps
// level 0 returns the sample unchanged in both modes. Never mutates its
// input; the provenance field is preserved.
Sample perturb(const Sample& sample, Modality modality, double level, PerturbMode mode,
               Rng& rng);

// Seeded shuffle into batches of batch_size; the final short batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    Rng& rng);

// Plain-text dump (one token row per line) and its inverse, for
// cross-implementation comparison.
void dump_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mmfusion
