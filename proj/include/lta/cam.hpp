#pragma once

#include <filesystem>
#include <vector>

#include "lta/nets.hpp"
#include "lta/tensor.hpp"

namespace lta {

// Min-max normalized activation map for one class, entries in [0,1].
struct CamMap {
    Tensor m;  // (H, W)
    int class_id = -1;
};

// Binary masks from double-thresholding a map: `specific` marks high
// activations (>= tau_h), `generic` marks low ones (<= tau_l). With
// tau_l >= tau_h the two may overlap; fusion resolves that case.
struct MaskPair {
    Tensor specific;  // (H, W), entries in {0,1}
    Tensor generic;
    float tau_h = 0.4f;
    float tau_l = 0.4f;
};

// Projection of the (optionally channel-gated) activations onto their first
// right singular vector. The gate is clamped at zero per channel before use;
// an absent gate means all-ones. Sign is chosen so the map sums >= 0, then
// negatives are clamped. All-zero gated activations yield an all-zero map.
Tensor eigencam_raw(const Tensor& activations, const std::vector<float>* class_gate = nullptr);

// Min-max scaling to [0,1]; a constant map becomes all 0.5.
Tensor normalize_map(const Tensor& raw);

// Bilinear upsampling on cell-center sample points. Shrinking is unsupported.
Tensor upsample_bilinear(const Tensor& m, uint32_t H, uint32_t W);

MaskPair threshold_masks(const Tensor& m, float tau_h, float tau_l);

// Grayscale export for visual inspection (P5, maxval 255).
void write_pgm(const Tensor& m, const std::filesystem::path& path);

// Convenience: activation map of `sparse_code` for one class. Channels are
// gated by the positive part of the classifier head's weights for that class;
// class_gated = false gives the class-agnostic map.
CamMap class_cam(const ClassifierNet<float>& clf, const Tensor& sparse_code, int class_id,
                 bool class_gated = true);

}  // namespace lta
