#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "rd/compressor.hpp"
#include "rd/testing.hpp"

using namespace rd;

namespace {

// Naive unstabilized InfoNCE: direct exp/log double loop over flattened
// positions. Independent of the library implementation.
double naive_contrastive(const std::vector<FeatureMap>& student,
                         const std::vector<FeatureMap>& teacher, double tau) {
    const int f = student[0].channels;
    std::vector<std::vector<double>> s_vecs, t_vecs;
    for (std::size_t b = 0; b < student.size(); ++b)
        for (int h = 0; h < student[b].height; ++h)
            for (int w = 0; w < student[b].width; ++w) {
                std::vector<double> sv(f), tv(f);
                for (int c = 0; c < f; ++c) {
                    sv[c] = student[b].at(c, h, w);
                    tv[c] = teacher[b].at(c, h, w);
                }
                s_vecs.push_back(sv);
                t_vecs.push_back(tv);
            }
    auto cosine = [f](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int c = 0; c < f; ++c) {
            dot += a[c] * b[c];
            na += a[c] * a[c];
            nb += b[c] * b[c];
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };
    double total = 0.0;
    for (std::size_t i = 0; i < s_vecs.size(); ++i) {
        double denom = 0.0;
        for (std::size_t j = 0; j < t_vecs.size(); ++j)
            denom += std::exp(cosine(s_vecs[i], t_vecs[j]) / tau);
        total += -std::log(std::exp(cosine(s_vecs[i], t_vecs[i]) / tau) / denom);
    }
    return total / static_cast<double>(s_vecs.size());
}

std::vector<FeatureMap> random_batch(int b, int f, int h, int w, std::mt19937_64& rng) {
    std::vector<FeatureMap> out;
    for (int i = 0; i < b; ++i) out.push_back(rd::testing::random_feature_map(f, h, w, rng));
    return out;
}

}  // namespace

TEST_CASE("contrastive loss: a single position is its own lone candidate -> exactly 0") {
    FeatureMap s(3, 1, 1), t(3, 1, 1);
    s.at(0, 0, 0) = 1.0;
    s.at(1, 0, 0) = -2.0;
    s.at(2, 0, 0) = 0.5;
    t.at(0, 0, 0) = 4.0;  // any non-zero teacher: cos(s, t) cancels in the ratio
    t.at(1, 0, 0) = 1.0;
    t.at(2, 0, 0) = -1.0;
    CHECK(contrastive_loss({s}, {t}, 0.07) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("contrastive loss: two orthogonal identical pairs give log(1 + e^(-1/tau))") {
    // Positions p0 = e0, p1 = e1 for both student and teacher: positive
    // similarity 1, negative similarity 0.
    FeatureMap s(2, 1, 2), t(2, 1, 2);
    s.at(0, 0, 0) = t.at(0, 0, 0) = 1.0;
    s.at(1, 0, 1) = t.at(1, 0, 1) = 1.0;
    const double tau = 0.5;
    const double want = std::log(1.0 + std::exp((0.0 - 1.0) / tau));
    CHECK(contrastive_loss({s}, {t}, tau) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("contrastive loss matches the naive double-loop oracle") {
    std::mt19937_64 rng(3);
    const auto student = random_batch(3, 5, 3, 4, rng);
    const auto teacher = random_batch(3, 5, 3, 4, rng);
    const double got = contrastive_loss(student, teacher, 0.07);
    const double want = naive_contrastive(student, teacher, 0.07);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("contrastive gradient matches central finite differences") {
    std::mt19937_64 rng(5);
    auto student = random_batch(2, 4, 2, 3, rng);
    const auto teacher = random_batch(2, 4, 2, 3, rng);
    const double tau = 0.1;
    const auto grads = contrastive_loss_grad(student, teacher, tau);
    const double step = 1e-6;
    for (std::size_t b = 0; b < student.size(); ++b)
        for (std::size_t i = 0; i < student[b].data.size(); ++i) {
            const double keep = student[b].data[i];
            student[b].data[i] = keep + step;
            const double up = contrastive_loss(student, teacher, tau);
            student[b].data[i] = keep - step;
            const double dn = contrastive_loss(student, teacher, tau);
            student[b].data[i] = keep;
            const double fd = (up - dn) / (2.0 * step);
            const double scale = std::max({std::abs(fd), std::abs(grads[b].data[i]), 1e-6});
            REQUIRE(std::abs(grads[b].data[i] - fd) / scale < 1e-4);
        }
}

TEST_CASE("contrastive loss rejects zero-norm positions naming the location") {
    FeatureMap s(2, 2, 2), t(2, 2, 2);
    for (double& v : t.data) v = 1.0;
    s.at(0, 1, 1) = 0.0;  // whole position (1,1) stays zero in the student
    s.at(0, 0, 0) = 1.0;
    s.at(1, 0, 1) = 1.0;
    s.at(0, 1, 0) = 1.0;
    CHECK_THROWS_WITH_AS(contrastive_loss({s}, {t}, 0.07), doctest::Contains("h=1, w=1"),
                         std::runtime_error);
}

TEST_CASE("select_initial_indices: deterministic, distinct, in range") {
    const auto a = select_initial_indices(32, 16, 9);
    const auto b = select_initial_indices(32, 16, 9);
    const auto c = select_initial_indices(32, 16, 10);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a.size() == 16);
    std::set<int> uniq(a.begin(), a.end());
    CHECK(uniq.size() == 16);
    for (int i : a) {
        CHECK(i >= 0);
        CHECK(i < 32);
    }
    CHECK_THROWS_AS(select_initial_indices(4, 8, 0), std::invalid_argument);
}

TEST_CASE("select_initial_subset rows are copied verbatim from the source") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Dictionary d(10, 6);
    for (double& v : d.data) v = gauss(rng);
    const Dictionary sub = select_initial_subset(d, 4, 21);
    const auto idx = select_initial_indices(10, 4, 21);
    REQUIRE(sub.atoms == 4);
    REQUIRE(sub.dim == 6);
    for (int r = 0; r < 4; ++r)
        for (int j = 0; j < 6; ++j) REQUIRE(sub.at(r, j) == d.at(idx[r], j));
}

TEST_CASE("init_student copies the matched retriever, affine, and dictionary rows") {
    std::mt19937_64 rng(13);
    const RDParams teacher = rd::testing::random_params(8, 5, 3, rng);
    const RDParams student = init_student(teacher, 3, 17);
    const auto idx = select_initial_indices(8, 3, 17);
    REQUIRE(student.retriever.atoms == 3);
    REQUIRE(student.dictionary.atoms == 3);
    CHECK(student.lambda == teacher.lambda);
    for (int r = 0; r < 3; ++r) {
        for (int j = 0; j < 5; ++j) {
            CHECK(student.retriever.pw(r, j) == teacher.retriever.pw(idx[r], j));
            CHECK(student.dictionary.at(r, j) == teacher.dictionary.at(idx[r], j));
        }
        for (int m = 0; m < 3; ++m)
            for (int n = 0; n < 3; ++n)
                CHECK(student.retriever.dw(r, m, n) == teacher.retriever.dw(idx[r], m, n));
        CHECK(student.pono.gamma[r] == teacher.pono.gamma[idx[r]]);
        CHECK(student.pono.beta[r] == teacher.pono.beta[idx[r]]);
    }
}

TEST_CASE("distill with zero learning rate leaves the student bitwise unchanged") {
    std::mt19937_64 rng(19);
    const RDParams teacher = rd::testing::random_params(8, 4, 3, rng);
    std::vector<FeatureMap> feats;
    for (int i = 0; i < 6; ++i) feats.push_back(rd::testing::random_feature_map(4, 4, 4, rng));
    DistillConfig cfg;
    cfg.student_atoms = 4;
    cfg.epochs = 2;
    cfg.learning_rate = 0.0;
    cfg.seed = 23;
    const RDParams init = init_student(teacher, 4, 23);
    const RDParams trained = distill(teacher, feats, cfg);
    CHECK(trained.retriever.pointwise == init.retriever.pointwise);
    CHECK(trained.retriever.depthwise == init.retriever.depthwise);
    CHECK(trained.pono.gamma == init.pono.gamma);
    CHECK(trained.pono.beta == init.pono.beta);
    CHECK(trained.dictionary.data == init.dictionary.data);
}

TEST_CASE("distill improves (or holds) the contrastive alignment and is deterministic") {
    std::mt19937_64 rng(29);
    const RDParams teacher = rd::testing::random_params(12, 6, 3, rng);
    std::vector<FeatureMap> feats;
    for (int i = 0; i < 8; ++i) feats.push_back(rd::testing::random_feature_map(6, 4, 4, rng));
    DistillConfig cfg;
    cfg.student_atoms = 6;
    cfg.epochs = 5;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 4;
    cfg.seed = 31;

    auto batch_loss = [&](const RDParams& student) {
        std::vector<FeatureMap> s_out, t_out;
        for (const FeatureMap& x : feats) {
            s_out.push_back(rd_forward(x, student).first);
            t_out.push_back(rd_forward(x, teacher).first);
        }
        return contrastive_loss(s_out, t_out, cfg.tau);
    };

    const RDParams init = init_student(teacher, 6, cfg.seed);
    const RDParams trained = distill(teacher, feats, cfg);
    CHECK(batch_loss(trained) <= batch_loss(init) + 1e-9);

    const RDParams again = distill(teacher, feats, cfg);
    CHECK(trained.retriever.pointwise == again.retriever.pointwise);
    CHECK(trained.dictionary.data == again.dictionary.data);
}

TEST_CASE("distill rejects a student larger than the teacher") {
    std::mt19937_64 rng(37);
    const RDParams teacher = rd::testing::random_params(4, 3, 1, rng);
    std::vector<FeatureMap> feats = {rd::testing::random_feature_map(3, 2, 2, rng)};
    DistillConfig cfg;
    cfg.student_atoms = 5;
    CHECK_THROWS_AS(distill(teacher, feats, cfg), std::invalid_argument);
}
