#pragma once

#include <cstdint>
#include <vector>

#include "rd/rd_layer.hpp"

namespace rd {

struct DistillConfig {
    int student_atoms = 0;  // n, < teacher N
    double tau = 0.07;
    int epochs = 1;
    double learning_rate = 0.01;
    int batch_size = 4;
    std::uint64_t seed = 0;
};

/// Uniform sample of n distinct atom indices, deterministic from seed.
std::vector<int> select_initial_indices(int atoms, int n, std::uint64_t seed);

/// Dictionary restricted to a uniform random subset of n atoms.
Dictionary select_initial_subset(const Dictionary& d, int n, std::uint64_t seed);

/// Student layer seeded from the teacher: the selected atoms together with
/// the matching retriever and affine rows.
RDParams init_student(const RDParams& teacher, int n, std::uint64_t seed);

/// InfoNCE over every spatial position of the batch; positive pair is the
/// same batch index and position, denominator spans all teacher positions.
/// Mean over positions; log-sum-exp stabilized.
double contrastive_loss(const std::vector<FeatureMap>& student,
                        const std::vector<FeatureMap>& teacher, double tau);

/// Gradient of contrastive_loss w.r.t. the student feature maps.
std::vector<FeatureMap> contrastive_loss_grad(const std::vector<FeatureMap>& student,
                                              const std::vector<FeatureMap>& teacher, double tau);

/// SGD on the contrastive objective; only the student's retriever, affine,
/// and dictionary move. `features` are the frozen backbone outputs.
RDParams distill(const RDParams& teacher, const std::vector<FeatureMap>& features,
                 const DistillConfig& cfg);

}  // namespace rd
