#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lta/dataset.hpp"
#include "lta/fusion.hpp"
#include "lta/metrics.hpp"
#include "lta/trainer.hpp"

namespace lta {

// Everything a full run needs, loaded from one JSON file. The master seed
// can be overridden by the LTA_MASTER_SEED environment variable; nothing
// else reads the environment. Per-stage seeds are substreams of the master.
struct RunConfig {
    uint64_t seed = 7;
    std::filesystem::path out_dir = "run";
    SynthConfig synth;
    int partition_threshold = 100;  // head classes have more train positives
    ILConfig train;
    float tau_h = 0.4f;
    float tau_l = 0.4f;
    bool cam_class_gated = true;
    int knn_k = 5;
    int target_per_tail = 200;
    DenoiseConfig denoise;
    DownstreamConfig eval;
    int smote_k = 5;
    std::string config_json;  // raw file text, echoed into reports
};

// Parses and validates; throws ConfigError naming the offending key.
RunConfig load_run_config(const std::filesystem::path& file);

// Stage entry points. Each reads its inputs from, and writes its outputs
// under, cfg.out_dir:
//   dataset/    manifest + tensors            (synth)
//   ckpt/       per-generation checkpoints + loss_history.csv   (train)
//   cams/       per-record activation maps, .lta + .pgm          (cam)
//   augmented/  fused manifest + tensors      (augment)
//   eval/       per-method manifests + report (eval)
//   report/     merged report, JSON + CSV     (report)
void stage_synth(const RunConfig& cfg);
void stage_train(const RunConfig& cfg);
void stage_cam(const RunConfig& cfg);
void stage_augment(const RunConfig& cfg);
void stage_eval(const RunConfig& cfg);
void stage_report(const RunConfig& cfg);

}  // namespace lta
