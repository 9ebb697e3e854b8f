#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lta/dataset.hpp"
#include "lta/nets.hpp"
#include "lta/tensor.hpp"

namespace lta {

// Gaussian moments of a feature set: sample mean and unbiased covariance.
struct GaussStats {
    std::vector<double> mu;     // F
    std::vector<double> sigma;  // F x F, row-major, symmetric
    int dim() const { return static_cast<int>(mu.size()); }
};

GaussStats gaussian_stats(const std::vector<std::vector<float>>& features);

// Fréchet distance ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with
// the matrix square root taken on the symmetric form Sa^{1/2} Sb Sa^{1/2}
// and eigenvalues clamped at zero.
double frechet_distance(const GaussStats& a, const GaussStats& b);

// Mean average precision over class_set. Rankings sort scores descending
// with ties broken by ascending record index; classes without positives are
// skipped, and an all-skipped class_set is an error.
double mean_ap(const std::vector<std::vector<float>>& scores,
               const std::vector<LabelVector>& labels, const std::vector<int>& class_set);

struct SparsityReport {
    double mean_entropy = 0.0;             // nats per spatial coordinate
    double mean_effective_channels = 0.0;  // mean of exp(per-coordinate entropy)
};

SparsityReport sparsity_report(const std::vector<Tensor>& sparse_set);

// Settings for the small evaluation classifier trained from scratch per run.
struct DownstreamConfig {
    int epochs = 60;
    float lr = 1.0f;  // plain SGD on mean-normalized losses needs large steps
    int batch_size = 32;
    int hidden = 24;
    void validate() const;
};

struct EvalRow {
    std::string method;
    double avg_tail_fd = 0.0;  // NaN when no synthetic tail samples exist
    double head_map = 0.0;
    double tail_map = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    uint64_t seed = 0;
    std::string config_echo;  // raw JSON text of the run configuration
};

// Feature vector for Fréchet statistics: globally pooled activations of the
// classifier's last convolution.
std::vector<float> pooled_features(const ClassifierNet<float>& clf, const Tensor& input);

// Trains a fresh classifier on train_m's train split, scores test_m's test
// split, and reports head/tail mAP plus the average per-tail-class Fréchet
// distance between real and synthetic train features.
EvalRow downstream_eval(const DatasetManifest& train_m, const DatasetManifest& test_m,
                        const PartitionSpec& partition, const DownstreamConfig& cfg, uint64_t seed,
                        const std::string& method_name);

void write_eval_report_json(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_eval_report_json(const std::filesystem::path& path);
void write_eval_report_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace lta
