#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lta/tensor.hpp"

namespace lta {

enum class Split { train, test };

// Multilabel indicator vector over the K classes.
struct LabelVector {
    std::vector<uint8_t> y;

    LabelVector() = default;
    explicit LabelVector(size_t k) : y(k, 0) {}

    bool positive(int c) const { return y[static_cast<size_t>(c)] != 0; }
    int count() const {
        int n = 0;
        for (uint8_t v : y) n += v != 0;
        return n;
    }
    bool operator==(const LabelVector&) const = default;
};

struct Record {
    std::string id;
    std::string tensor;  // path relative to the manifest's directory
    LabelVector labels;
    Split split = Split::train;

    // Provenance, set on synthetic (augmented) records only.
    bool synthetic = false;
    std::string tail_id;
    std::string head_id;
    uint64_t seed = 0;
    int denoise_steps = 0;
};

struct DatasetManifest {
    std::array<uint32_t, 3> dims{};  // (H, W, C)
    std::vector<std::string> class_names;
    std::vector<Record> records;
    std::filesystem::path base_dir;  // tensor refs resolve against this

    int num_classes() const { return static_cast<int>(class_names.size()); }
    std::filesystem::path tensor_path(const Record& r) const { return base_dir / r.tensor; }
    std::vector<size_t> split_indices(Split s) const;
    // Per-class positive counts over the train split.
    std::vector<int> train_positives() const;
};

void save_manifest(const DatasetManifest& m, const std::filesystem::path& file);

// Loads and validates: unique ids, label length K, at least one positive
// label per train record, every class trainable (>= 1 train positive),
// all tensor refs resolvable.
DatasetManifest load_manifest(const std::filesystem::path& file);

struct SynthConfig {
    int head_classes = 3;
    int tail_classes = 3;
    int head_count = 200;  // train records with a head primary class
    int tail_count = 20;
    int test_per_class = 25;
    std::array<uint32_t, 3> dims{8, 8, 4};
    float noise_std = 0.1f;
    // Probability of each extra co-occurring label. Default 0: with disjoint
    // regions, co-labeled head records are near-duplicates of tail records in
    // code space, so k-NN pairing would select exactly the neighbors that
    // already carry the tail class.
    float co_occur = 0.0f;

    int num_classes() const { return head_classes + tail_classes; }
    void validate() const;  // throws ConfigError naming the field
};

// Half-open rectangle [y0, y1) x [x0, x1).
struct RegionRect {
    int y0, x0, y1, x1;
};

// Axis-aligned class regions tiled row-major over the H x W grid.
std::vector<RegionRect> class_regions(int K, int H, int W);

// Generates the synthetic long-tailed dataset. Every class owns a spatial
// region and a prototype patch; a record's latent is the sum of the patches
// of its labels plus Gaussian noise. Pure function of (cfg, seed); tensors
// are written under out_dir/tensors/.
DatasetManifest synth_longtail(const SynthConfig& cfg, uint64_t seed,
                               const std::filesystem::path& out_dir);

struct PartitionSpec {
    std::vector<int> head;  // sorted ascending
    std::vector<int> tail;

    bool is_head(int c) const;
    void validate(int K) const;  // disjoint cover of {0..K-1}, both non-empty
};

PartitionSpec partition_explicit(const DatasetManifest& m, std::vector<int> head,
                                 std::vector<int> tail);

// head = classes with train positives strictly above the threshold.
PartitionSpec partition_by_threshold(const DatasetManifest& m, int threshold);

}  // namespace lta
