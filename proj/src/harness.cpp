#include "rd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rd/io.hpp"

namespace rd {

std::pair<ToyDataset, ToyDataset> generate_toy_task(std::uint64_t seed, int num_classes,
                                                    int samples_per_class, int f, int height,
                                                    int width, double noise_sigma) {
    if (num_classes <= 0 || samples_per_class <= 0 || f <= 0 || height <= 0 || width <= 0)
        throw std::invalid_argument("generate_toy_task: all dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::vector<double>> prototypes(num_classes, std::vector<double>(f));
    for (auto& proto : prototypes)
        for (double& v : proto) v = gauss(rng);

    ToyDataset train, val;
    train.num_classes = val.num_classes = num_classes;
    train.split_tag = "train";
    val.split_tag = "val";
    const int train_per_class = (samples_per_class * 8) / 10;
    for (int cls = 0; cls < num_classes; ++cls)
        for (int s = 0; s < samples_per_class; ++s) {
            FeatureMap x(f, height, width);
            for (int c = 0; c < f; ++c)
                for (int h = 0; h < height; ++h)
                    for (int w = 0; w < width; ++w)
                        x.at(c, h, w) = prototypes[cls][c] + noise_sigma * gauss(rng);
            auto& dst = (s < train_per_class) ? train : val;
            dst.samples.emplace_back(std::move(x), cls);
        }
    return {std::move(train), std::move(val)};
}

FeatureMap encoder_forward(const Model& m, const FeatureMap& x) {
    const int f = m.features;
    FeatureMap out(f, x.height, x.width);
    for (int c = 0; c < f; ++c)
        for (int h = 0; h < x.height; ++h)
            for (int w = 0; w < x.width; ++w) {
                double acc = 0.0;
                for (int i = 0; i < f; ++i)
                    acc += m.encoder[static_cast<std::size_t>(c) * f + i] * x.at(i, h, w);
                out.at(c, h, w) = acc;
            }
    return out;
}

namespace {

std::vector<double> pool_and_head(const Model& m, const FeatureMap& z) {
    const int f = m.features;
    std::vector<double> pooled(f, 0.0);
    const double inv = 1.0 / (static_cast<double>(z.height) * z.width);
    for (int c = 0; c < f; ++c) {
        double acc = 0.0;
        for (int h = 0; h < z.height; ++h)
            for (int w = 0; w < z.width; ++w) acc += z.at(c, h, w);
        pooled[c] = acc * inv;
    }
    std::vector<double> logits(m.num_classes);
    for (int o = 0; o < m.num_classes; ++o) {
        double acc = m.head_b[o];
        for (int c = 0; c < f; ++c) acc += m.head_w[static_cast<std::size_t>(o) * f + c] * pooled[c];
        logits[o] = acc;
    }
    return logits;
}

double softmax_ce(const std::vector<double>& logits, int label, std::vector<double>* probs) {
    const double maxl = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - maxl);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    const double loss = -std::log(std::max(p[label], 1e-300));
    if (probs) *probs = std::move(p);
    return loss;
}

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::vector<double> model_forward(const Model& m, const FeatureMap& x) {
    const FeatureMap enc = encoder_forward(m, x);
    const FeatureMap z = rd_forward(enc, m.rd).first;
    return pool_and_head(m, z);
}

double evaluate_accuracy(const Model& m, const ToyDataset& data) {
    int correct = 0;
    for (const auto& [x, label] : data.samples)
        if (argmax(model_forward(m, x)) == label) ++correct;
    return data.samples.empty() ? 0.0 : static_cast<double>(correct) / data.samples.size();
}

std::pair<Model, std::vector<EpochMetrics>> train_model(const TrainConfig& cfg,
                                                        const Dictionary& dict0,
                                                        const ToyDataset& train,
                                                        const ToyDataset& val) {
    if (train.samples.empty()) throw std::invalid_argument("train_model: empty training set");
    const int f = dict0.dim;
    if (train.samples[0].first.channels != f)
        throw std::invalid_argument("train_model: dictionary dim (" + std::to_string(f) +
                                    ") != encoder output channels (" +
                                    std::to_string(train.samples[0].first.channels) + ")");
    const int N = dict0.atoms;
    const int k = 3;
    const int classes = train.num_classes;

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Model m;
    m.features = f;
    m.num_classes = classes;
    // Encoder starts near identity so the RD input matches the data scale.
    m.encoder.assign(static_cast<std::size_t>(f) * f, 0.0);
    for (int i = 0; i < f; ++i)
        m.encoder[static_cast<std::size_t>(i) * f + i] = 1.0;
    for (double& v : m.encoder) v += 0.01 * gauss(rng);

    m.rd.retriever = RetrieverWeights(N, f, k);
    const double pw_scale = 1.0 / std::sqrt(static_cast<double>(f));
    for (double& v : m.rd.retriever.pointwise) v = pw_scale * gauss(rng);
    for (int n = 0; n < N; ++n) {
        m.rd.retriever.dw(n, k / 2, k / 2) = 1.0;
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) m.rd.retriever.dw(n, a, b) += 0.05 * gauss(rng);
    }
    m.rd.pono = PonoParams(N);
    m.rd.dictionary = dict0;
    m.rd.dictionary.trainable = cfg.train_dictionary;
    m.rd.freeze_dictionary = !cfg.train_dictionary;
    m.rd.lambda = cfg.lambda;
    m.head_w.assign(static_cast<std::size_t>(classes) * f, 0.0);
    m.head_b.assign(classes, 0.0);

    std::vector<EpochMetrics> metrics;
    const int n_samples = static_cast<int>(train.samples.size());
    std::vector<int> order(n_samples);
    std::iota(order.begin(), order.end(), 0);
    const int B = std::max(1, cfg.batch_size);
    const int HW = train.samples[0].first.height * train.samples[0].first.width;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int epoch_correct = 0;

        for (int start = 0; start < n_samples; start += B) {
            const int end = std::min(start + B, n_samples);
            const int bsz = end - start;

            std::vector<double> d_encoder(m.encoder.size(), 0.0);
            std::vector<double> d_head_w(m.head_w.size(), 0.0);
            std::vector<double> d_head_b(m.head_b.size(), 0.0);
            RDGradients d_rd;
            bool have_rd = false;

            for (int bi = start; bi < end; ++bi) {
                const auto& [x, label] = train.samples[order[bi]];
                const FeatureMap enc = encoder_forward(m, x);
                auto [z, cache] = rd_forward(enc, m.rd);
                const std::vector<double> logits = pool_and_head(m, z);
                std::vector<double> probs;
                const double loss = softmax_ce(logits, label, &probs);
                if (!std::isfinite(loss))
                    throw std::runtime_error("train_model: non-finite loss at epoch " +
                                             std::to_string(epoch) + ", sample " +
                                             std::to_string(bi));
                epoch_loss += loss;
                if (argmax(logits) == label) ++epoch_correct;
                if (cfg.learning_rate == 0.0) continue;

                // Head and pooled gradients.
                std::vector<double> dlogits = probs;
                dlogits[label] -= 1.0;
                std::vector<double> pooled(f, 0.0);
                const double inv_hw = 1.0 / HW;
                for (int c = 0; c < f; ++c) {
                    double acc = 0.0;
                    for (int h = 0; h < z.height; ++h)
                        for (int w = 0; w < z.width; ++w) acc += z.at(c, h, w);
                    pooled[c] = acc * inv_hw;
                }
                std::vector<double> d_pooled(f, 0.0);
                for (int o = 0; o < classes; ++o) {
                    d_head_b[o] += dlogits[o];
                    for (int c = 0; c < f; ++c) {
                        d_head_w[static_cast<std::size_t>(o) * f + c] += dlogits[o] * pooled[c];
                        d_pooled[c] += m.head_w[static_cast<std::size_t>(o) * f + c] * dlogits[o];
                    }
                }
                FeatureMap d_z(f, z.height, z.width);
                for (int c = 0; c < f; ++c)
                    for (int h = 0; h < z.height; ++h)
                        for (int w = 0; w < z.width; ++w) d_z.at(c, h, w) = d_pooled[c] * inv_hw;

                RDGradients g = rd_backward(d_z, cache, m.rd);
                for (int c = 0; c < f; ++c)
                    for (int i = 0; i < f; ++i) {
                        double acc = 0.0;
                        for (int h = 0; h < x.height; ++h)
                            for (int w = 0; w < x.width; ++w)
                                acc += g.d_input.at(c, h, w) * x.at(i, h, w);
                        d_encoder[static_cast<std::size_t>(c) * f + i] += acc;
                    }
                if (!have_rd) {
                    d_rd = std::move(g);
                    have_rd = true;
                } else {
                    for (std::size_t j = 0; j < d_rd.d_pointwise.size(); ++j)
                        d_rd.d_pointwise[j] += g.d_pointwise[j];
                    for (std::size_t j = 0; j < d_rd.d_depthwise.size(); ++j)
                        d_rd.d_depthwise[j] += g.d_depthwise[j];
                    for (std::size_t j = 0; j < d_rd.d_gamma.size(); ++j) {
                        d_rd.d_gamma[j] += g.d_gamma[j];
                        d_rd.d_beta[j] += g.d_beta[j];
                    }
                    for (std::size_t j = 0; j < d_rd.d_dictionary.size(); ++j)
                        d_rd.d_dictionary[j] += g.d_dictionary[j];
                }
            }

            if (cfg.learning_rate == 0.0 || !have_rd) continue;
            const double step = cfg.learning_rate / bsz;
            for (std::size_t j = 0; j < m.head_w.size(); ++j) m.head_w[j] -= step * d_head_w[j];
            for (std::size_t j = 0; j < m.head_b.size(); ++j) m.head_b[j] -= step * d_head_b[j];
            if (cfg.train_backbone)
                for (std::size_t j = 0; j < m.encoder.size(); ++j)
                    m.encoder[j] -= step * d_encoder[j];
            if (cfg.train_retriever) {
                for (std::size_t j = 0; j < m.rd.retriever.pointwise.size(); ++j)
                    m.rd.retriever.pointwise[j] -= step * d_rd.d_pointwise[j];
                for (std::size_t j = 0; j < m.rd.retriever.depthwise.size(); ++j)
                    m.rd.retriever.depthwise[j] -= step * d_rd.d_depthwise[j];
                for (std::size_t j = 0; j < m.rd.pono.gamma.size(); ++j) {
                    m.rd.pono.gamma[j] -= step * d_rd.d_gamma[j];
                    m.rd.pono.beta[j] -= step * d_rd.d_beta[j];
                }
            }
            if (cfg.train_dictionary)
                for (std::size_t j = 0; j < m.rd.dictionary.data.size(); ++j)
                    m.rd.dictionary.data[j] -= step * d_rd.d_dictionary[j];
        }

        EpochMetrics tm;
        tm.epoch = epoch;
        tm.split = "train";
        tm.loss = epoch_loss / n_samples;
        tm.acc = static_cast<double>(epoch_correct) / n_samples;
        metrics.push_back(tm);

        double val_loss = 0.0;
        int val_correct = 0;
        for (const auto& [x, label] : val.samples) {
            const std::vector<double> logits = model_forward(m, x);
            val_loss += softmax_ce(logits, label, nullptr);
            if (argmax(logits) == label) ++val_correct;
        }
        EpochMetrics vm;
        vm.epoch = epoch;
        vm.split = "val";
        vm.loss = val.samples.empty() ? 0.0 : val_loss / val.samples.size();
        vm.acc = val.samples.empty() ? 0.0 : static_cast<double>(val_correct) / val.samples.size();
        metrics.push_back(vm);
    }
    return {std::move(m), std::move(metrics)};
}

std::vector<std::pair<double, double>> taylor_update_check(
    const RetrieverWeights& w, const std::vector<double>& d_pointwise,
    const std::vector<double>& d_depthwise, const std::vector<double>& eta_list) {
    if (d_pointwise.size() != w.pointwise.size() || d_depthwise.size() != w.depthwise.size())
        throw std::invalid_argument("taylor_update_check: gradient shapes mismatch");
    std::vector<std::pair<double, double>> table;
    for (double eta : eta_list) {
        RetrieverWeights updated = w;
        for (std::size_t i = 0; i < updated.pointwise.size(); ++i)
            updated.pointwise[i] -= eta * d_pointwise[i];
        for (std::size_t i = 0; i < updated.depthwise.size(); ++i)
            updated.depthwise[i] -= eta * d_depthwise[i];

        // Per fused element, fuse(w - eta*g) minus the first-order update of
        // fuse(w) is exactly the product of the two applied deltas. Measuring
        // it through the deltas keeps the identity exact in floating point:
        // an untouched factor contributes a delta of literal zero.
        double max_gap = 0.0;
        const int k = w.kernel_size;
        for (int c = 0; c < w.atoms; ++c)
            for (int i = 0; i < w.features; ++i) {
                const double dpw = updated.pw(c, i) - w.pw(c, i);
                for (int a = 0; a < k; ++a)
                    for (int b = 0; b < k; ++b) {
                        const double ddw = updated.dw(c, a, b) - w.dw(c, a, b);
                        max_gap = std::max(max_gap, std::abs(dpw * ddw));
                    }
            }
        table.emplace_back(eta, max_gap);
    }
    return table;
}

std::vector<CorrelationRow> correlation_coefficient_table(const FeatureMap& x_region,
                                                          const RDParams& p) {
    p.validate();
    if (x_region.channels != p.retriever.features)
        throw std::invalid_argument("correlation_coefficient_table: channel mismatch");
    const int f = p.retriever.features;
    std::vector<double> avg(f, 0.0);
    const double inv = 1.0 / (static_cast<double>(x_region.height) * x_region.width);
    for (int c = 0; c < f; ++c) {
        double acc = 0.0;
        for (int h = 0; h < x_region.height; ++h)
            for (int w = 0; w < x_region.width; ++w) acc += x_region.at(c, h, w);
        avg[c] = acc * inv;
    }
    double avg_norm = 0.0;
    for (double v : avg) avg_norm += v * v;
    avg_norm = std::sqrt(avg_norm);
    if (avg_norm < 1e-12)
        throw std::runtime_error(
            "correlation_coefficient_table: spatially averaged feature has zero norm");

    const Dictionary wn = weight_normalize(p.dictionary);
    const CoefficientMap cprime = pono(retriever_core(x_region, p.retriever), p.pono);

    std::vector<CorrelationRow> rows(p.dictionary.atoms);
    const double coef_inv = 1.0 / (static_cast<double>(cprime.height) * cprime.width);
    for (int i = 0; i < p.dictionary.atoms; ++i) {
        double dot = 0.0;
        for (int j = 0; j < f; ++j) dot += avg[j] * wn.at(i, j);
        double coef = 0.0;
        for (int h = 0; h < cprime.height; ++h)
            for (int w = 0; w < cprime.width; ++w) coef += cprime.at(i, h, w);
        rows[i] = {i, dot / avg_norm, coef * coef_inv};
    }
    return rows;
}

std::map<std::string, std::string> parse_pipeline_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    std::map<std::string, std::string> cfg;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) cfg[key] = value;
    }
    return cfg;
}

namespace {

std::string get_or(const std::map<std::string, std::string>& cfg, const std::string& key,
                   const std::string& fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
}

long get_long(const std::map<std::string, std::string>& cfg, const std::string& key,
              long fallback) {
    return std::stol(get_or(cfg, key, std::to_string(fallback)));
}

double get_double(const std::map<std::string, std::string>& cfg, const std::string& key,
                  double fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : std::stod(it->second);
}

double mean_position_cosine(const std::vector<FeatureMap>& a, const std::vector<FeatureMap>& b) {
    double total = 0.0;
    long long count = 0;
    for (std::size_t s = 0; s < a.size(); ++s)
        for (int h = 0; h < a[s].height; ++h)
            for (int w = 0; w < a[s].width; ++w) {
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (int c = 0; c < a[s].channels; ++c) {
                    const double va = a[s].at(c, h, w), vb = b[s].at(c, h, w);
                    dot += va * vb;
                    na += va * va;
                    nb += vb * vb;
                }
                if (na > 0.0 && nb > 0.0) total += dot / std::sqrt(na * nb);
                ++count;
            }
    return count ? total / count : 0.0;
}

}  // namespace

PipelineResult run_pipeline(const std::map<std::string, std::string>& cfg) {
    const std::uint64_t seed = static_cast<std::uint64_t>(get_long(cfg, "seed", 0));
    const int num_classes = static_cast<int>(get_long(cfg, "num_classes", 4));
    const int samples_per_class = static_cast<int>(get_long(cfg, "samples_per_class", 200));
    const int f = static_cast<int>(get_long(cfg, "features", 16));
    const int height = static_cast<int>(get_long(cfg, "height", 8));
    const int width = static_cast<int>(get_long(cfg, "width", 8));
    const int atoms = static_cast<int>(get_long(cfg, "atoms", 32));
    const bool resume = get_long(cfg, "resume", 0) != 0;
    const std::string out_dir = get_or(cfg, "out_dir", ".");
    std::filesystem::create_directories(out_dir);

    PipelineResult result;
    result.dictionary_path = out_dir + "/dictionary.rddc";
    result.model_path = out_dir + "/model.rdmd";
    result.compressed_model_path = out_dir + "/model_compressed.rdmd";
    result.metrics_path = out_dir + "/metrics.log";
    const std::string embeddings_path = out_dir + "/embeddings.rdem";

    auto [train, val] = generate_toy_task(seed, num_classes, samples_per_class, f, height, width);

    // Phase 1: dictionary construction from per-sample mean embeddings.
    try {
        if (!(resume && std::filesystem::exists(result.dictionary_path))) {
            EmbeddingSet emb(static_cast<int>(train.samples.size()), f);
            emb.source_tag = "toy-task";
            const double inv = 1.0 / (static_cast<double>(height) * width);
            for (std::size_t s = 0; s < train.samples.size(); ++s)
                for (int c = 0; c < f; ++c) {
                    double acc = 0.0;
                    for (int h = 0; h < height; ++h)
                        for (int w = 0; w < width; ++w) acc += train.samples[s].first.at(c, h, w);
                    emb.at(static_cast<int>(s), c) = acc * inv;
                }
            write_embedding_file(embeddings_path, emb);
            const PreprocessMode mode = parse_preprocess_mode(get_or(cfg, "preprocess", "none"));
            const EmbeddingSet prepared = preprocess(emb, mode);
            KMeansConfig kc;
            kc.clusters = atoms;
            kc.max_iters = static_cast<int>(get_long(cfg, "kmeans_max_iters", 300));
            kc.tol = get_double(cfg, "kmeans_tol", 1e-4);
            kc.seed = seed;
            write_dictionary_file(result.dictionary_path, kmeans(prepared, kc).dictionary);
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("pipeline phase build: ") + e.what());
    }

    // Phase 2: standard training.
    Model model;
    try {
        if (resume && std::filesystem::exists(result.model_path)) {
            model = read_model_file(result.model_path);
        } else {
            const Dictionary dict0 = read_dictionary_file(result.dictionary_path);
            TrainConfig tc;
            tc.epochs = static_cast<int>(get_long(cfg, "train_epochs", 30));
            tc.batch_size = static_cast<int>(get_long(cfg, "batch_size", 16));
            tc.learning_rate = get_double(cfg, "train_lr", 0.05);
            tc.lambda = get_double(cfg, "lambda", 0.8);
            tc.seed = seed;
            auto [trained, metrics] = train_model(tc, dict0, train, val);
            model = std::move(trained);
            std::ofstream log(result.metrics_path, std::ios::trunc);
            for (const auto& e : metrics)
                log << "epoch=" << e.epoch << " split=" << e.split << " loss=" << e.loss
                    << " acc=" << e.acc << "\n";
            write_model_file(result.model_path, model);
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("pipeline phase train: ") + e.what());
    }
    result.teacher_val_acc = evaluate_accuracy(model, val);

    // Phase 3: dictionary compression.
    try {
        std::vector<FeatureMap> backbone_train, backbone_val;
        for (const auto& [x, label] : train.samples) backbone_train.push_back(encoder_forward(model, x));
        for (const auto& [x, label] : val.samples) backbone_val.push_back(encoder_forward(model, x));

        Model compressed = model;
        if (resume && std::filesystem::exists(result.compressed_model_path)) {
            compressed = read_model_file(result.compressed_model_path);
        } else {
            DistillConfig dc;
            dc.student_atoms = static_cast<int>(get_long(cfg, "compress_atoms", atoms / 2));
            dc.tau = get_double(cfg, "tau", 0.07);
            dc.epochs = static_cast<int>(get_long(cfg, "compress_epochs", 10));
            dc.learning_rate = get_double(cfg, "compress_lr", 0.05);
            dc.batch_size = static_cast<int>(get_long(cfg, "compress_batch", 4));
            dc.seed = seed;
            compressed.rd = distill(model.rd, backbone_train, dc);
            write_model_file(result.compressed_model_path, compressed);
        }

        std::vector<FeatureMap> teacher_out, student_out;
        for (const auto& x : backbone_val) {
            teacher_out.push_back(rd_forward(x, model.rd).first);
            student_out.push_back(rd_forward(x, compressed.rd).first);
        }
        result.student_cosine = mean_position_cosine(student_out, teacher_out);
        std::ofstream report(out_dir + "/compress_report.txt", std::ios::trunc);
        report << "student_atoms=" << compressed.rd.dictionary.atoms
               << " student_cosine=" << result.student_cosine << "\n";
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("pipeline phase compress: ") + e.what());
    }
    return result;
}

}  // namespace rd
