#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rd/checks.hpp"
#include "rd/compressor.hpp"
#include "rd/dictionary_builder.hpp"
#include "rd/harness.hpp"
#include "rd/io.hpp"

namespace {

constexpr int kExitCheckFailure = 1;
constexpr int kExitBadFile = 2;
constexpr int kExitTooManyClusters = 3;
constexpr int kExitShapeMismatch = 4;

struct ToyFlags {
    int classes = 4;
    int samples_per_class = 200;
    int height = 8;
    int width = 8;
};

void add_toy_flags(CLI::App* cmd, ToyFlags& t) {
    cmd->add_option("--classes", t.classes, "toy task class count");
    cmd->add_option("--samples-per-class", t.samples_per_class, "toy task samples per class");
    cmd->add_option("--map-height", t.height, "feature map height");
    cmd->add_option("--map-width", t.width, "feature map width");
}

int cmd_build_dict(const std::string& embeddings, int atoms, std::uint64_t seed, int max_iters,
                   double tol, const std::string& normalize, const std::string& out) {
    rd::EmbeddingSet emb;
    try {
        emb = rd::read_embedding_file(embeddings);
    } catch (const rd::FileFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadFile;
    }
    if (atoms > emb.count) {
        std::cerr << "error: requested atoms (" << atoms << ") exceed embedding count ("
                  << emb.count << ")\n";
        return kExitTooManyClusters;
    }
    const rd::EmbeddingSet prepared =
        rd::preprocess(emb, rd::parse_preprocess_mode(normalize));
    rd::KMeansConfig cfg;
    cfg.clusters = atoms;
    cfg.max_iters = max_iters;
    cfg.tol = tol;
    cfg.seed = seed;
    const rd::KMeansOutcome result = rd::kmeans(prepared, cfg);
    rd::write_dictionary_file(out, result.dictionary);
    std::cout << std::setprecision(12) << "sse=" << result.sse << " iters=" << result.iterations
              << "\n";
    return 0;
}

int cmd_train(const std::string& dict_path, const ToyFlags& toy, int epochs, double lr,
              double lambda, int batch_size, bool freeze_dict, bool freeze_retriever,
              std::uint64_t seed, const std::string& out) {
    rd::Dictionary dict0;
    try {
        dict0 = rd::read_dictionary_file(dict_path);
    } catch (const rd::FileFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadFile;
    }
    auto [train, val] = rd::generate_toy_task(seed, toy.classes, toy.samples_per_class, dict0.dim,
                                              toy.height, toy.width);
    rd::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.lambda = lambda;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    cfg.train_dictionary = !freeze_dict;
    cfg.train_retriever = !freeze_retriever;
    auto [model, metrics] = rd::train_model(cfg, dict0, train, val);
    rd::write_model_file(out, model);
    std::ofstream log(out + ".metrics.log", std::ios::trunc);
    for (const auto& e : metrics)
        log << "epoch=" << e.epoch << " split=" << e.split << " loss=" << e.loss
            << " acc=" << e.acc << "\n";
    std::cout << std::setprecision(12) << "val_acc=" << rd::evaluate_accuracy(model, val) << "\n";
    return 0;
}

int cmd_compress(const std::string& model_path, const ToyFlags& toy, int atoms, double tau,
                 int epochs, double lr, int batch_size, std::uint64_t seed,
                 const std::string& out) {
    rd::Model model;
    try {
        model = rd::read_model_file(model_path);
    } catch (const rd::FileFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadFile;
    }
    if (atoms > model.rd.dictionary.atoms) {
        std::cerr << "error: student atoms (" << atoms << ") exceed teacher atoms ("
                  << model.rd.dictionary.atoms << ")\n";
        return kExitShapeMismatch;
    }
    auto [train, val] = rd::generate_toy_task(seed, toy.classes, toy.samples_per_class,
                                              model.features, toy.height, toy.width);
    std::vector<rd::FeatureMap> features;
    for (const auto& [x, label] : train.samples)
        features.push_back(rd::encoder_forward(model, x));

    rd::DistillConfig cfg;
    cfg.student_atoms = atoms;
    cfg.tau = tau;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    rd::Model compressed = model;
    compressed.rd = rd::distill(model.rd, features, cfg);
    rd::write_model_file(out, compressed);

    double cosine = 0.0;
    long long count = 0;
    for (const auto& [x, label] : val.samples) {
        const rd::FeatureMap enc = rd::encoder_forward(model, x);
        const rd::FeatureMap zt = rd::rd_forward(enc, model.rd).first;
        const rd::FeatureMap zs = rd::rd_forward(enc, compressed.rd).first;
        for (int h = 0; h < zt.height; ++h)
            for (int w = 0; w < zt.width; ++w) {
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (int c = 0; c < zt.channels; ++c) {
                    dot += zt.at(c, h, w) * zs.at(c, h, w);
                    na += zt.at(c, h, w) * zt.at(c, h, w);
                    nb += zs.at(c, h, w) * zs.at(c, h, w);
                }
                if (na > 0.0 && nb > 0.0) cosine += dot / std::sqrt(na * nb);
                ++count;
            }
    }
    std::ofstream log(out + ".metrics.log", std::ios::trunc);
    log << "student_atoms=" << atoms << " student_cosine=" << (count ? cosine / count : 0.0)
        << "\n";
    std::cout << std::setprecision(12) << "student_cosine=" << (count ? cosine / count : 0.0)
              << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const ToyFlags& toy, std::uint64_t seed) {
    rd::Model model;
    try {
        model = rd::read_model_file(model_path);
    } catch (const rd::FileFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadFile;
    }
    auto [train, val] = rd::generate_toy_task(seed, toy.classes, toy.samples_per_class,
                                              model.features, toy.height, toy.width);
    std::cout << std::setprecision(12) << "val_acc=" << rd::evaluate_accuracy(model, val) << "\n";
    return 0;
}

int cmd_inspect(const std::string& model_path, const ToyFlags& toy, int sample_index,
                std::uint64_t seed, const std::string& out) {
    rd::Model model;
    try {
        model = rd::read_model_file(model_path);
    } catch (const rd::FileFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadFile;
    }
    auto [train, val] = rd::generate_toy_task(seed, toy.classes, toy.samples_per_class,
                                              model.features, toy.height, toy.width);
    if (sample_index < 0 || sample_index >= static_cast<int>(val.samples.size())) {
        std::cerr << "error: sample index " << sample_index << " out of range [0, "
                  << val.samples.size() << ")\n";
        return kExitShapeMismatch;
    }
    const rd::FeatureMap enc = rd::encoder_forward(model, val.samples[sample_index].first);
    const auto rows = rd::correlation_coefficient_table(enc, model.rd);
    std::ofstream csv(out, std::ios::trunc | std::ios::binary);
    csv << "atom,correlation,coefficient\n" << std::setprecision(12);
    for (const auto& r : rows)
        csv << r.atom << "," << r.correlation << "," << r.coefficient << "\n";
    return 0;
}

int cmd_check(const std::string& suite) {
    bool ok = false;
    if (suite == "fuse") ok = rd::check_fuse(std::cout);
    else if (suite == "grads") ok = rd::check_grads(std::cout);
    else if (suite == "taylor") ok = rd::check_taylor(std::cout);
    else if (suite == "pono") ok = rd::check_pono(std::cout);
    else {
        std::cerr << "error: unknown check suite: " << suite << "\n";
        return kExitCheckFailure;
    }
    return ok ? 0 : kExitCheckFailure;
}

int cmd_run_pipeline(const std::string& config_path) {
    const auto cfg = rd::parse_pipeline_config(config_path);
    const rd::PipelineResult result = rd::run_pipeline(cfg);
    std::cout << std::setprecision(12) << "teacher_val_acc=" << result.teacher_val_acc
              << " student_cosine=" << result.student_cosine << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retriever-Dictionary workbench: build, train, compress, inspect"};
    app.require_subcommand(1);

    // build-dict
    std::string embeddings, dict_out, normalize = "none";
    int atoms = 512, max_iters = 300;
    double tol = 1e-4;
    std::uint64_t seed = 0;
    auto* build = app.add_subcommand("build-dict", "k-means dictionary from an embedding file");
    build->add_option("--embeddings", embeddings)->required();
    build->add_option("--atoms", atoms)->required();
    build->add_option("--seed", seed);
    build->add_option("--max-iters", max_iters);
    build->add_option("--tol", tol);
    build->add_option("--normalize", normalize)->check(CLI::IsMember({"none", "standard", "tanh"}));
    build->add_option("--out", dict_out)->required();

    // train
    std::string train_dict, train_out;
    int epochs = 30, batch_size = 16;
    double lr = 0.05, lambda = 0.8;
    bool freeze_dict = false, freeze_retriever = false;
    ToyFlags train_toy;
    auto* train = app.add_subcommand("train", "train the toy classifier with an RD layer");
    train->add_option("--dict", train_dict)->required();
    train->add_option("--epochs", epochs);
    train->add_option("--lr", lr);
    train->add_option("--lambda", lambda);
    train->add_option("--batch-size", batch_size);
    train->add_flag("--freeze-dict", freeze_dict);
    train->add_flag("--freeze-retriever", freeze_retriever);
    train->add_option("--seed", seed);
    train->add_option("--out", train_out)->required();
    add_toy_flags(train, train_toy);

    // compress
    std::string comp_model, comp_out;
    int comp_atoms = 16, comp_epochs = 10, comp_batch = 4;
    double tau = 0.07, comp_lr = 0.05;
    ToyFlags comp_toy;
    auto* compress = app.add_subcommand("compress", "distill the dictionary into fewer atoms");
    compress->add_option("--model", comp_model)->required();
    compress->add_option("--atoms", comp_atoms)->required();
    compress->add_option("--tau", tau);
    compress->add_option("--epochs", comp_epochs);
    compress->add_option("--lr", comp_lr);
    compress->add_option("--batch-size", comp_batch);
    compress->add_option("--seed", seed);
    compress->add_option("--out", comp_out)->required();
    add_toy_flags(compress, comp_toy);

    // eval
    std::string eval_model;
    ToyFlags eval_toy;
    auto* eval = app.add_subcommand("eval", "report validation accuracy");
    eval->add_option("--model", eval_model)->required();
    eval->add_option("--seed", seed);
    add_toy_flags(eval, eval_toy);

    // inspect
    std::string inspect_model, inspect_out;
    int sample_index = 0;
    ToyFlags inspect_toy;
    auto* inspect = app.add_subcommand("inspect", "atom correlation/coefficient table as CSV");
    inspect->add_option("--model", inspect_model)->required();
    inspect->add_option("--sample-index", sample_index);
    inspect->add_option("--seed", seed);
    inspect->add_option("--out", inspect_out)->required();
    add_toy_flags(inspect, inspect_toy);

    // check
    std::string suite;
    auto* check = app.add_subcommand("check", "run a property suite");
    check->add_option("suite", suite, "one of: grads, fuse, taylor, pono")->required();

    // run-pipeline
    std::string config_path;
    auto* pipeline = app.add_subcommand("run-pipeline", "build -> train -> compress from a config");
    pipeline->add_option("config", config_path, "key=value config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (build->parsed())
            return cmd_build_dict(embeddings, atoms, seed, max_iters, tol, normalize, dict_out);
        if (train->parsed())
            return cmd_train(train_dict, train_toy, epochs, lr, lambda, batch_size, freeze_dict,
                             freeze_retriever, seed, train_out);
        if (compress->parsed())
            return cmd_compress(comp_model, comp_toy, comp_atoms, tau, comp_epochs, comp_lr,
                                comp_batch, seed, comp_out);
        if (eval->parsed()) return cmd_eval(eval_model, eval_toy, seed);
        if (inspect->parsed())
            return cmd_inspect(inspect_model, inspect_toy, sample_index, seed, inspect_out);
        if (check->parsed()) return cmd_check(suite);
        if (pipeline->parsed()) return cmd_run_pipeline(config_path);
    } catch (const rd::FileFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadFile;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
