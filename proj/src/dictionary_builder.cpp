#include "rd/dictionary_builder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace rd {

EmbeddingSet::EmbeddingSet(int n, int f) : count(n), dim(f) {
    if (n <= 0 || f <= 0)
        throw std::invalid_argument("EmbeddingSet: dimensions must be positive");
    data.assign(static_cast<std::size_t>(n) * f, 0.0);
}

PreprocessMode parse_preprocess_mode(const std::string& name) {
    if (name == "none") return PreprocessMode::None;
    if (name == "standard") return PreprocessMode::Standard;
    if (name == "tanh") return PreprocessMode::Tanh;
    throw std::invalid_argument("unknown preprocess mode: " + name);
}

EmbeddingSet preprocess(const EmbeddingSet& e, PreprocessMode mode) {
    if (e.count == 0) throw std::invalid_argument("preprocess: empty embedding set");
    EmbeddingSet out = e;
    switch (mode) {
        case PreprocessMode::None:
            break;
        case PreprocessMode::Tanh:
            for (double& v : out.data) v = std::tanh(v);
            break;
        case PreprocessMode::Standard:
            for (int j = 0; j < e.dim; ++j) {
                double mean = 0.0;
                for (int i = 0; i < e.count; ++i) mean += e.at(i, j);
                mean /= e.count;
                double var = 0.0;
                for (int i = 0; i < e.count; ++i) {
                    const double d = e.at(i, j) - mean;
                    var += d * d;
                }
                var /= e.count;
                const double sd = std::sqrt(var);
                const double denom = sd > 1e-12 ? sd : 1.0;
                for (int i = 0; i < e.count; ++i) out.at(i, j) = (e.at(i, j) - mean) / denom;
            }
            break;
    }
    return out;
}

namespace {

double sq_dist(const EmbeddingSet& e, int point, const double* centroid) {
    double d2 = 0.0;
    for (int j = 0; j < e.dim; ++j) {
        const double d = e.at(point, j) - centroid[j];
        d2 += d * d;
    }
    return d2;
}

}  // namespace

std::vector<double> kmeanspp_centroids(const EmbeddingSet& e, const KMeansConfig& cfg) {
    const int K = cfg.clusters;
    if (K <= 0 || K > e.count)
        throw std::invalid_argument("kmeans: clusters (" + std::to_string(K) +
                                    ") must be in [1, count=" + std::to_string(e.count) + "]");
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> centroids(static_cast<std::size_t>(K) * e.dim);
    std::vector<double> mindist(e.count, std::numeric_limits<double>::infinity());

    std::uniform_int_distribution<int> first(0, e.count - 1);
    int chosen = first(rng);
    std::copy_n(&e.data[static_cast<std::size_t>(chosen) * e.dim], e.dim, centroids.begin());

    for (int c = 1; c < K; ++c) {
        const double* last = &centroids[static_cast<std::size_t>(c - 1) * e.dim];
        double total = 0.0;
        for (int i = 0; i < e.count; ++i) {
            mindist[i] = std::min(mindist[i], sq_dist(e, i, last));
            total += mindist[i];
        }
        int pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), cum = 0.0;
            pick = e.count - 1;
            for (int i = 0; i < e.count; ++i) {
                cum += mindist[i];
                if (cum >= target) { pick = i; break; }
            }
        } else {
            // All remaining distances are zero (duplicated points).
            pick = first(rng);
        }
        std::copy_n(&e.data[static_cast<std::size_t>(pick) * e.dim], e.dim,
                    centroids.begin() + static_cast<std::size_t>(c) * e.dim);
    }
    return centroids;
}

KMeansOutcome kmeans(const EmbeddingSet& e, const KMeansConfig& cfg) {
    if (cfg.tol <= 0.0) throw std::invalid_argument("kmeans: tol must be > 0");
    const int K = cfg.clusters;
    std::vector<double> centroids = kmeanspp_centroids(e, cfg);

    KMeansOutcome out;
    std::vector<int> assign(e.count, 0);
    std::vector<int> counts(K, 0);
    std::vector<double> sums(static_cast<std::size_t>(K) * e.dim, 0.0);
    std::vector<double> point_dist(e.count, 0.0);

    double prev_sse = std::numeric_limits<double>::infinity();
    int iter = 0;
    for (; iter < cfg.max_iters; ++iter) {
        // Assignment.
        double sse = 0.0;
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < e.count; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int c = 0; c < K; ++c) {
                const double d2 = sq_dist(e, i, &centroids[static_cast<std::size_t>(c) * e.dim]);
                if (d2 < best) { best = d2; arg = c; }
            }
            assign[i] = arg;
            point_dist[i] = best;
            ++counts[arg];
            sse += best;
        }

        // Empty-cluster repair: steal the globally farthest point.
        for (int c = 0; c < K; ++c) {
            if (counts[c] > 0) continue;
            int far = 0;
            double fard = -1.0;
            for (int i = 0; i < e.count; ++i)
                if (counts[assign[i]] > 1 && point_dist[i] > fard) { fard = point_dist[i]; far = i; }
            sse -= point_dist[far];
            --counts[assign[far]];
            assign[far] = c;
            counts[c] = 1;
            point_dist[far] = 0.0;
            std::copy_n(&e.data[static_cast<std::size_t>(far) * e.dim], e.dim,
                        centroids.begin() + static_cast<std::size_t>(c) * e.dim);
        }

        if (sse > prev_sse + 1e-9)
            throw std::logic_error("kmeans: SSE increased across iterations");
        prev_sse = sse;
        out.sse_per_iter.push_back(sse);

        // Update step (fixed point-index reduction order).
        std::fill(sums.begin(), sums.end(), 0.0);
        for (int i = 0; i < e.count; ++i)
            for (int j = 0; j < e.dim; ++j)
                sums[static_cast<std::size_t>(assign[i]) * e.dim + j] += e.at(i, j);
        double max_shift = 0.0;
        for (int c = 0; c < K; ++c) {
            double shift2 = 0.0;
            for (int j = 0; j < e.dim; ++j) {
                const double nv = sums[static_cast<std::size_t>(c) * e.dim + j] / counts[c];
                const double d = nv - centroids[static_cast<std::size_t>(c) * e.dim + j];
                shift2 += d * d;
                centroids[static_cast<std::size_t>(c) * e.dim + j] = nv;
            }
            max_shift = std::max(max_shift, std::sqrt(shift2));
        }
        if (max_shift < cfg.tol) { ++iter; break; }
    }

    // Final SSE against the converged centroids.
    double sse = 0.0;
    for (int i = 0; i < e.count; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < K; ++c)
            best = std::min(best, sq_dist(e, i, &centroids[static_cast<std::size_t>(c) * e.dim]));
        sse += best;
    }

    out.dictionary = Dictionary(K, e.dim);
    out.dictionary.data = std::move(centroids);
    out.sse = sse;
    out.iterations = iter;
    return out;
}

Dictionary random_dictionary(int n, int f, std::uint64_t seed) {
    Dictionary d(n, f);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : d.data) v = gauss(rng);
    return d;
}

}  // namespace rd
