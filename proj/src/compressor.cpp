#include "rd/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace rd {

std::vector<int> select_initial_indices(int atoms, int n, std::uint64_t seed) {
    if (n > atoms)
        throw std::invalid_argument("select_initial_subset: n (" + std::to_string(n) +
                                    ") > atom count (" + std::to_string(atoms) + ")");
    if (n < 1) throw std::invalid_argument("select_initial_subset: n must be >= 1");
    std::vector<int> idx(atoms);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: only the first n slots are needed.
    for (int i = 0; i < n; ++i) {
        std::uniform_int_distribution<int> pick(i, atoms - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    return idx;
}

Dictionary select_initial_subset(const Dictionary& d, int n, std::uint64_t seed) {
    const std::vector<int> idx = select_initial_indices(d.atoms, n, seed);
    Dictionary out(n, d.dim);
    out.trainable = d.trainable;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d.dim; ++j) out.at(i, j) = d.at(idx[i], j);
    return out;
}

RDParams init_student(const RDParams& teacher, int n, std::uint64_t seed) {
    const std::vector<int> idx = select_initial_indices(teacher.dictionary.atoms, n, seed);
    const int f = teacher.retriever.features;
    const int k = teacher.retriever.kernel_size;

    RDParams s;
    s.retriever = RetrieverWeights(n, f, k);
    s.pono = PonoParams(n, teacher.pono.epsilon);
    s.dictionary = Dictionary(n, f);
    s.lambda = teacher.lambda;
    s.freeze_dictionary = false;
    for (int i = 0; i < n; ++i) {
        const int t = idx[i];
        for (int j = 0; j < f; ++j) {
            s.retriever.pw(i, j) = teacher.retriever.pw(t, j);
            s.dictionary.at(i, j) = teacher.dictionary.at(t, j);
        }
        for (int m = 0; m < k; ++m)
            for (int l = 0; l < k; ++l) s.retriever.dw(i, m, l) = teacher.retriever.dw(t, m, l);
        s.pono.gamma[i] = teacher.pono.gamma[t];
        s.pono.beta[i] = teacher.pono.beta[t];
    }
    return s;
}

namespace {

struct FlatBatch {
    int batch = 0, f = 0, height = 0, width = 0;
    long long positions = 0;              // batch * height * width
    std::vector<double> vecs;             // positions x f
    std::vector<double> norms;            // positions

    const double* vec(long long p) const { return &vecs[static_cast<std::size_t>(p) * f]; }
};

FlatBatch flatten(const std::vector<FeatureMap>& maps, const char* who) {
    if (maps.empty()) throw std::invalid_argument("contrastive_loss: empty batch");
    FlatBatch fb;
    fb.batch = static_cast<int>(maps.size());
    fb.f = maps[0].channels;
    fb.height = maps[0].height;
    fb.width = maps[0].width;
    fb.positions = static_cast<long long>(fb.batch) * fb.height * fb.width;
    fb.vecs.resize(static_cast<std::size_t>(fb.positions) * fb.f);
    fb.norms.resize(fb.positions);
    long long p = 0;
    for (int i = 0; i < fb.batch; ++i) {
        if (maps[i].channels != fb.f || maps[i].height != fb.height || maps[i].width != fb.width)
            throw std::invalid_argument("contrastive_loss: inconsistent shapes within batch");
        for (int h = 0; h < fb.height; ++h)
            for (int w = 0; w < fb.width; ++w, ++p) {
                double nrm = 0.0;
                for (int c = 0; c < fb.f; ++c) {
                    const double v = maps[i].at(c, h, w);
                    fb.vecs[static_cast<std::size_t>(p) * fb.f + c] = v;
                    nrm += v * v;
                }
                nrm = std::sqrt(nrm);
                if (nrm < 1e-12)
                    throw std::runtime_error(std::string("contrastive_loss: zero-norm ") + who +
                                             " feature at (i=" + std::to_string(i) +
                                             ", h=" + std::to_string(h) +
                                             ", w=" + std::to_string(w) + ")");
                fb.norms[p] = nrm;
            }
    }
    return fb;
}

}  // namespace

double contrastive_loss(const std::vector<FeatureMap>& student,
                        const std::vector<FeatureMap>& teacher, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("contrastive_loss: tau must be > 0");
    const FlatBatch S = flatten(student, "student");
    const FlatBatch T = flatten(teacher, "teacher");
    if (S.positions != T.positions || S.f != T.f)
        throw std::invalid_argument("contrastive_loss: student/teacher shape mismatch");

    double total = 0.0;
    std::vector<double> logits(T.positions);
    for (long long s = 0; s < S.positions; ++s) {
        const double* u = S.vec(s);
        double maxl = -std::numeric_limits<double>::infinity();
        for (long long q = 0; q < T.positions; ++q) {
            const double* t = T.vec(q);
            double dot = 0.0;
            for (int c = 0; c < S.f; ++c) dot += u[c] * t[c];
            logits[q] = dot / (S.norms[s] * T.norms[q] * tau);
            maxl = std::max(maxl, logits[q]);
        }
        double sum = 0.0;
        for (long long q = 0; q < T.positions; ++q) sum += std::exp(logits[q] - maxl);
        total += -(logits[s] - maxl) + std::log(sum);
    }
    return total / static_cast<double>(S.positions);
}

std::vector<FeatureMap> contrastive_loss_grad(const std::vector<FeatureMap>& student,
                                              const std::vector<FeatureMap>& teacher, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("contrastive_loss: tau must be > 0");
    const FlatBatch S = flatten(student, "student");
    const FlatBatch T = flatten(teacher, "teacher");
    if (S.positions != T.positions || S.f != T.f)
        throw std::invalid_argument("contrastive_loss: student/teacher shape mismatch");

    std::vector<FeatureMap> grads;
    grads.reserve(student.size());
    for (const auto& m : student) grads.emplace_back(m.channels, m.height, m.width);

    const double inv_count = 1.0 / static_cast<double>(S.positions);
    std::vector<double> logits(T.positions), cosines(T.positions);
    std::vector<double> du(S.f);
    long long s = 0;
    for (int bi = 0; bi < S.batch; ++bi)
        for (int h = 0; h < S.height; ++h)
            for (int w = 0; w < S.width; ++w, ++s) {
                const double* u = S.vec(s);
                const double un = S.norms[s];
                double maxl = -std::numeric_limits<double>::infinity();
                for (long long q = 0; q < T.positions; ++q) {
                    const double* t = T.vec(q);
                    double dot = 0.0;
                    for (int c = 0; c < S.f; ++c) dot += u[c] * t[c];
                    cosines[q] = dot / (un * T.norms[q]);
                    logits[q] = cosines[q] / tau;
                    maxl = std::max(maxl, logits[q]);
                }
                double sum = 0.0;
                for (long long q = 0; q < T.positions; ++q) sum += std::exp(logits[q] - maxl);
                std::fill(du.begin(), du.end(), 0.0);
                for (long long q = 0; q < T.positions; ++q) {
                    const double p = std::exp(logits[q] - maxl) / sum;
                    const double coef = (p - (q == s ? 1.0 : 0.0)) / tau;
                    if (coef == 0.0) continue;
                    const double* t = T.vec(q);
                    const double a = coef / (un * T.norms[q]);
                    const double b = coef * cosines[q] / (un * un);
                    for (int c = 0; c < S.f; ++c) du[c] += a * t[c] - b * u[c];
                }
                for (int c = 0; c < S.f; ++c)
                    grads[bi].at(c, h, w) = du[c] * inv_count;
            }
    return grads;
}

RDParams distill(const RDParams& teacher, const std::vector<FeatureMap>& features,
                 const DistillConfig& cfg) {
    if (cfg.student_atoms < 1 || cfg.tau <= 0.0)
        throw std::invalid_argument("distill: invalid config");
    teacher.validate();
    RDParams student = init_student(teacher, cfg.student_atoms, cfg.seed);

    // Teacher is frozen; its outputs never change across epochs.
    std::vector<FeatureMap> teacher_out;
    teacher_out.reserve(features.size());
    for (const auto& x : features) teacher_out.push_back(rd_forward(x, teacher).first);

    const int n_samples = static_cast<int>(features.size());
    const int B = std::max(1, cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int start = 0; start < n_samples; start += B) {
            const int end = std::min(start + B, n_samples);

            std::vector<FeatureMap> s_out;
            std::vector<RDCache> caches;
            std::vector<FeatureMap> t_out;
            for (int i = start; i < end; ++i) {
                auto [z, cache] = rd_forward(features[i], student);
                s_out.push_back(std::move(z));
                caches.push_back(std::move(cache));
                t_out.push_back(teacher_out[i]);
            }
            const double loss = contrastive_loss(s_out, t_out, cfg.tau);
            if (!std::isfinite(loss))
                throw std::runtime_error("distill: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(start / B));
            if (cfg.learning_rate == 0.0) continue;

            const std::vector<FeatureMap> d_out = contrastive_loss_grad(s_out, t_out, cfg.tau);
            RDGradients total;
            bool first = true;
            for (std::size_t i = 0; i < caches.size(); ++i) {
                RDGradients g = rd_backward(d_out[i], caches[i], student);
                if (first) {
                    total = std::move(g);
                    first = false;
                } else {
                    for (std::size_t j = 0; j < total.d_pointwise.size(); ++j)
                        total.d_pointwise[j] += g.d_pointwise[j];
                    for (std::size_t j = 0; j < total.d_depthwise.size(); ++j)
                        total.d_depthwise[j] += g.d_depthwise[j];
                    for (std::size_t j = 0; j < total.d_gamma.size(); ++j) {
                        total.d_gamma[j] += g.d_gamma[j];
                        total.d_beta[j] += g.d_beta[j];
                    }
                    for (std::size_t j = 0; j < total.d_dictionary.size(); ++j)
                        total.d_dictionary[j] += g.d_dictionary[j];
                }
            }
            const double lr = cfg.learning_rate;
            for (std::size_t j = 0; j < student.retriever.pointwise.size(); ++j)
                student.retriever.pointwise[j] -= lr * total.d_pointwise[j];
            for (std::size_t j = 0; j < student.retriever.depthwise.size(); ++j)
                student.retriever.depthwise[j] -= lr * total.d_depthwise[j];
            for (std::size_t j = 0; j < student.pono.gamma.size(); ++j) {
                student.pono.gamma[j] -= lr * total.d_gamma[j];
                student.pono.beta[j] -= lr * total.d_beta[j];
            }
            for (std::size_t j = 0; j < student.dictionary.data.size(); ++j)
                student.dictionary.data[j] -= lr * total.d_dictionary[j];
        }
    }
    return student;
}

}  // namespace rd
