#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rd/compressor.hpp"
#include "rd/dictionary_builder.hpp"
#include "rd/rd_layer.hpp"

namespace rd {

/// Desk-scale stand-in for real imagery: class-conditional Gaussian maps.
struct ToyDataset {
    std::vector<std::pair<FeatureMap, int>> samples;
    int num_classes = 0;
    std::string split_tag;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 16;
    double learning_rate = 0.05;
    double lambda = 0.8;
    std::uint64_t seed = 0;
    bool train_backbone = true;
    bool train_retriever = true;
    bool train_dictionary = true;
};

/// Tiny classifier: 1x1 linear encoder (f -> f) -> RD layer -> global
/// average pool -> linear head.
struct Model {
    int features = 0;
    int num_classes = 0;
    std::vector<double> encoder;  // f x f
    RDParams rd;
    std::vector<double> head_w;  // num_classes x f
    std::vector<double> head_b;  // num_classes
};

struct EpochMetrics {
    int epoch = 0;
    std::string split;  // "train" | "val"
    double loss = 0.0;
    double acc = 0.0;
};

struct CorrelationRow {
    int atom = 0;
    double correlation = 0.0;
    double coefficient = 0.0;
};

std::pair<ToyDataset, ToyDataset> generate_toy_task(std::uint64_t seed, int num_classes,
                                                    int samples_per_class, int f, int height,
                                                    int width, double noise_sigma = 0.5);

/// Forward pass of the tiny model; logits out.
std::vector<double> model_forward(const Model& m, const FeatureMap& x);

/// Encoder output for one sample (the frozen "backbone" feature used by
/// the compression phase).
FeatureMap encoder_forward(const Model& m, const FeatureMap& x);

double evaluate_accuracy(const Model& m, const ToyDataset& data);

std::pair<Model, std::vector<EpochMetrics>> train_model(const TrainConfig& cfg,
                                                        const Dictionary& dict0,
                                                        const ToyDataset& train,
                                                        const ToyDataset& val);

/// For each learning rate: max-abs gap between fusing the updated split
/// weights and the first-order update of the fused kernel. The gap is the
/// pure second-order term, so it scales as eta^2.
std::vector<std::pair<double, double>> taylor_update_check(const RetrieverWeights& w,
                                                           const std::vector<double>& d_pointwise,
                                                           const std::vector<double>& d_depthwise,
                                                           const std::vector<double>& eta_list);

/// Per atom: cosine of the spatially averaged input against the normalized
/// atom, and the spatial mean of the atom's normalized coefficient.
std::vector<CorrelationRow> correlation_coefficient_table(const FeatureMap& x_region,
                                                          const RDParams& p);

/// key=value pipeline configuration ('#' comments, one pair per line).
std::map<std::string, std::string> parse_pipeline_config(const std::string& path);

struct PipelineResult {
    std::string dictionary_path;
    std::string model_path;
    std::string compressed_model_path;
    std::string metrics_path;
    double teacher_val_acc = 0.0;
    double student_cosine = 0.0;
};

/// Build -> train -> compress, artifacts written under out_dir.
PipelineResult run_pipeline(const std::map<std::string, std::string>& cfg);

}  // namespace rd
