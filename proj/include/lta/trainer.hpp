#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "lta/dataset.hpp"
#include "lta/nets.hpp"

namespace lta {

struct ILConfig {
    int generations = 3;
    int imitation_epochs = 5;
    int interaction_epochs = 20;
    float lambda = 0.5f;      // weight on reconstruction in the joint objective
    float lr = 1.0f;          // plain SGD on mean-normalized losses needs large steps
    int batch_size = 32;
    uint64_t seed = 7;
    int sparse_channels = 16;  // C' of the simplicial code
    int hidden = 32;
    void validate() const;  // throws ConfigError naming the offending field
};

// One row per epoch; fields that do not apply to the phase are NaN and
// serialize as empty CSV cells.
struct LossRecord {
    int generation = 0;
    int epoch = 0;  // within its phase
    std::string phase;
    double imitation = std::numeric_limits<double>::quiet_NaN();
    double reconstruction = std::numeric_limits<double>::quiet_NaN();
    double classification = std::numeric_limits<double>::quiet_NaN();
    double combined = std::numeric_limits<double>::quiet_NaN();
};

// End-of-generation snapshots. The decoder and classifier persist across
// generations; students are trained from scratch each generation.
struct CheckpointSet {
    std::vector<StudentNet<float>> students;
    std::vector<DecoderNet<float>> decoders;
    std::vector<ClassifierNet<float>> classifiers;
    std::vector<LossRecord> history;
};

// Mean binary cross-entropy with probabilities clamped to [eps, 1-eps],
// eps = 1e-7. When dp is non-null the gradient of the mean w.r.t. p is
// written there, evaluated at the clamped probability but not zeroed in the
// clamp region: a saturated-wrong prediction keeps a finite restoring
// gradient (through a sigmoid this recovers the bounded score-minus-target
// form) instead of getting stuck.
template <typename T>
T bce_mean_grad(const T* p, const T* y, size_t n, T* dp) {
    const T eps = T(1e-7);
    const T hi = T(1) - eps;
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const T ph = p[i] < eps ? eps : (p[i] > hi ? hi : p[i]);
        sum -= static_cast<double>(y[i] * std::log(ph) + (T(1) - y[i]) * std::log(T(1) - ph));
        if (dp) dp[i] = (-y[i] / ph + (T(1) - y[i]) / (T(1) - ph)) / static_cast<T>(n);
    }
    return static_cast<T>(sum / static_cast<double>(n));
}

// Mean squared error; dp (optional) receives the gradient w.r.t. b.
template <typename T>
T mse_grad(const T* a, const T* b, size_t n, T* dp) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const T d = b[i] - a[i];
        sum += static_cast<double>(d) * static_cast<double>(d);
        if (dp) dp[i] = T(2) * d / static_cast<T>(n);
    }
    return static_cast<T>(sum / static_cast<double>(n));
}

template <typename T>
T imitation_loss(const TensorT<T>& student_probs, const TensorT<T>& target) {
    if (!same_shape(student_probs, target))
        throw ShapeError("imitation_loss: shape mismatch");
    return bce_mean_grad<T>(student_probs.data(), target.data(), student_probs.numel(), nullptr);
}

template <typename T>
T reconstruction_loss(const TensorT<T>& z, const TensorT<T>& zhat) {
    if (!same_shape(z, zhat)) throw ShapeError("reconstruction_loss: shape mismatch");
    return mse_grad<T>(z.data(), zhat.data(), z.numel(), nullptr);
}

template <typename T>
T classification_loss(const std::vector<uint8_t>& y, const std::vector<T>& scores) {
    if (y.size() != scores.size()) throw ShapeError("classification_loss: length mismatch");
    std::vector<T> yt(y.begin(), y.end());
    return bce_mean_grad<T>(scores.data(), yt.data(), scores.size(), nullptr);
}

template <typename T>
T interaction_objective(T lambda, T recon, T classif) {
    if (!(lambda >= T(0) && lambda <= T(1)))
        throw ConfigError("interaction_objective: lambda must lie in [0,1]");
    return lambda * recon + (T(1) - lambda) * classif;
}

// Trains one generation in place: a fresh student each generation; for
// gen_index > 0 the previous student acts as frozen teacher for the
// imitation phase, then student/decoder/classifier jointly minimize
// lambda*L_R + (1-lambda)*L_C. Appends per-epoch rows to out.history.
void run_generation(CheckpointSet& out, const std::vector<Tensor>& latents,
                    const std::vector<LabelVector>& labels, const ILConfig& cfg, int gen_index);

// Full iterated-learning loop over cfg.generations on the train split.
CheckpointSet run_il(const ILConfig& cfg, const DatasetManifest& manifest);

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);
std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path);

}  // namespace lta
