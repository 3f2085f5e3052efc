#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fmkt/encoders.hpp"
#include "fmkt/losses.hpp"
#include "fmkt/schedules.hpp"
#include "fmkt/variants.hpp"

namespace fmkt::harness {

struct ModelSpec {
    int blocks = 2;
    int width = 32;
};

struct DatasetConfig {
    std::string kind = "synthetic_gaussians";  // synthetic_gaussians | two_spirals | tiny_images
    int classes = 4;
    int dim = 2;
    int clusters_per_class = 4;
    double spread = 0.15;
    int train_size = 2048;
    int test_size = 2048;
    double noise = 0.2;      // two_spirals jitter
    std::string path;        // tiny_images archive
};

struct ExperimentConfig {
    std::string method = "fmkt";  // fmkt | fmkt_theta | ofmkt | vanilla_kd_baseline | ce_baseline
    DatasetConfig dataset;
    ModelSpec teacher_arch{6, 48};
    ModelSpec student_arch{2, 16};
    schedules::NoiseSchedule schedule = schedules::NoiseSchedule::rectified();
    encoders::EncoderSpec encoder;
    losses::MetricLoss loss = losses::MetricLoss::dist();
    double loss_weight = 1.0;
    int n_train_steps = 8;  // N
    bool allow_large_n = false;
    std::vector<int> k_eval = {1, 2, 4, 8};
    int epochs = 40;
    int batch_size = 64;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::vector<int> lr_milestones = {24, 32};
    double lr_factor = 0.1;
    int warmup_epochs = 0;  // defaults to 3 for vp/ve when the config omits it
    uint64_t seed = 1;
    double dirac_ratio = 1.0;  // defaults to 0.25 in feature-based mode
    std::array<int, 3> distill_stages = {0, 0, 0};  // [n3,n2,n1]; all zero = logit-based
    bool match_label = true;   // defaults on for logit-based, off for feature-based
    double theta_balance_weight = 1.0;
    variants::OnlineTarget online_target = variants::OnlineTarget::final_state_prediction;

    bool feature_based() const {
        return distill_stages[0] != 0 || distill_stages[1] != 0 || distill_stages[2] != 0;
    }
};

struct LoadedConfig {
    ExperimentConfig cfg;
    std::string canonical_json;  // merged config snapshot stored in checkpoints
};

// Reads a JSON config file, applies --set dotted.key=value overrides in
// order, honors FLOWKT_SEED, then validates.
LoadedConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

// Same pipeline starting from an in-memory JSON document. Checkpoint
// snapshots are re-parsed with apply_env_seed = false so a live FLOWKT_SEED
// cannot alter a frozen run.
LoadedConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {},
                          bool apply_env_seed = true);

}  // namespace fmkt::harness
