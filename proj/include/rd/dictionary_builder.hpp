#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rd/normalization.hpp"

namespace rd {

/// Encoder output vectors the dictionary is distilled from.
struct EmbeddingSet {
    int count = 0;
    int dim = 0;
    std::vector<double> data;  // count x dim, row-major
    std::string source_tag;

    EmbeddingSet() = default;
    EmbeddingSet(int n, int f);

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * dim + j]; }
};

struct KMeansConfig {
    int clusters = 0;
    int max_iters = 300;
    double tol = 1e-4;  // max centroid L2 shift
    std::uint64_t seed = 0;
};

struct KMeansOutcome {
    Dictionary dictionary;  // centroids, not unit-normalized
    double sse = 0.0;
    int iterations = 0;
    std::vector<double> sse_per_iter;
};

enum class PreprocessMode { None, Standard, Tanh };

PreprocessMode parse_preprocess_mode(const std::string& name);

/// standard: per-dimension (x - mean)/std (zero-variance dims stay centered
/// with unit denominator); tanh: elementwise; none: identity.
EmbeddingSet preprocess(const EmbeddingSet& e, PreprocessMode mode);

/// k-means++ initial centroids, exposed so oracles can run their own Lloyd
/// iterations from the identical start.
std::vector<double> kmeanspp_centroids(const EmbeddingSet& e, const KMeansConfig& cfg);

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded to
/// the point farthest from its assigned centroid. Deterministic given seed.
KMeansOutcome kmeans(const EmbeddingSet& e, const KMeansConfig& cfg);

/// Baseline initializer: atoms i.i.d. standard normal.
Dictionary random_dictionary(int n, int f, std::uint64_t seed);

}  // namespace rd
