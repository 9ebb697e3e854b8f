#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lta/cam.hpp"
#include "lta/dataset.hpp"
#include "lta/nets.hpp"
#include "lta/tensor.hpp"

namespace lta {

// Post-decode smoothing schedule: s = round(base_steps / divisor) passes of
// the configured denoiser. base_steps = 0 (with divisor 1) is the zero-step
// variant; the identity tag skips smoothing regardless of s.
struct DenoiseConfig {
    int base_steps = 75;  // N
    int divisor = 15;     // d, in [1, N] when N > 0
    std::string tag = "gaussian-smoother";  // identity | gaussian-smoother | external
    std::string conditioning;
    int steps() const;
    void validate() const;
};

// Hook for plugging in an out-of-process denoiser behind the "external" tag.
using ExternalDenoiser = std::function<Tensor(const Tensor&, int steps, const std::string& cond)>;
void set_external_denoiser(ExternalDenoiser fn);

// Full provenance of one fused sample.
struct FusionRecord {
    std::string tail_id, head_id;
    int tail_class = -1, head_class = -1;
    Tensor mask_specific;  // from the tail record's CAM for tail_class
    Tensor mask_generic;   // from the head neighbor's CAM for head_class
    uint64_t seed = 0;     // random-mask substream seed
    Tensor sparse_fused;   // (H, W, C')
    Tensor latent;         // decoded, after denoising; (H, W, C)
    int denoise_steps = 0;
};

struct AugmentConfig {
    float tau_h = 0.4f;
    float tau_l = 0.4f;
    int k = 5;                  // neighbor count for head pairing
    int target_per_tail = 200;  // train positives per tail class after augmentation
    DenoiseConfig denoise;
    uint64_t seed = 7;
    void validate() const;
};

// Head class whose mean predicted probability over the given sample scores is
// highest; ties go to the lowest class index. scores is one row of K
// per-class probabilities per sample of the tail class.
int select_confusion_head(const std::vector<std::vector<float>>& scores,
                          const PartitionSpec& partition);

// Uniformly picks one of the k nearest pool entries (Euclidean distance on
// flattened tensors, ties by lower index; k is clipped to the pool size).
size_t knn_neighbor(const Tensor& query, const std::vector<const Tensor*>& pool, int k,
                    uint64_t seed);

// Fair coin per spatial coordinate.
Tensor draw_random_mask(uint32_t H, uint32_t W, uint64_t seed);

// Mask-guided combination of two sparse codes: specific-only coordinates keep
// the tail values, generic-only keep the head values, and coordinates where
// the masks agree fall back to the random mask's pick. Masks are (H, W) and
// broadcast across channels.
Tensor fuse_sparse(const Tensor& z_tail, const Tensor& z_head, const Tensor& mask_specific,
                   const Tensor& mask_generic, const Tensor& mask_random);
Tensor fuse_sparse(const Tensor& z_tail, const Tensor& z_head, const Tensor& mask_specific,
                   const Tensor& mask_generic, uint64_t seed);

Tensor decode_fused(const DecoderNet<float>& decoder, const Tensor& sparse_fused);

Tensor denoise(const Tensor& latent, const DenoiseConfig& cfg);

// Interpolative oversampling: each new sample is x + u * (x_nn - x) with
// u ~ Uniform[0,1], x a random pool member and x_nn one of its k nearest
// neighbors within the pool.
std::vector<Tensor> smote_oversample(const std::vector<Tensor>& pool, int n_new, int k,
                                     uint64_t seed);

// Stage-3 orchestration: brings every tail class up to cfg.target_per_tail
// train positives by fusing tail records with confusion-head neighbors,
// decoding and denoising. New tensors are written under out_dir; the returned
// manifest is rooted there and keeps existing tensors via relative paths.
// When records != nullptr, the full per-sample provenance is appended to it.
DatasetManifest augment_tailset(const DatasetManifest& manifest, const PartitionSpec& partition,
                                const StudentNet<float>& student, const DecoderNet<float>& decoder,
                                const ClassifierNet<float>& classifier, const AugmentConfig& cfg,
                                const std::filesystem::path& out_dir,
                                std::vector<FusionRecord>* records = nullptr);

}  // namespace lta
