#pragma once

#include <map>
#include <memory>
#include <optional>

#include "fmkt/flow.hpp"
#include "fmkt/harness/checkpoint.hpp"
#include "fmkt/harness/config.hpp"
#include "fmkt/harness/dataset.hpp"
#include "fmkt/harness/metrics.hpp"
#include "fmkt/harness/model.hpp"

namespace fmkt::harness {

// Everything one experiment needs, built deterministically from the config
// seed. Optimizers are created over the method's trainable parameter set.
struct Rig {
    LoadedConfig lc;
    Dataset data;
    SmallNet teacher;  // only populated when the method uses one
    bool has_teacher = false;
    SmallNet student;
    std::unique_ptr<encoders::MetaEncoder> encoder;  // logit-based flow methods
    encoders::ShapeTransform flow_transform;
    std::vector<int> feature_stages;  // stages-from-end carrying flow modules
    std::vector<std::unique_ptr<encoders::MetaEncoder>> stage_encoders;
    std::vector<encoders::ShapeTransform> stage_transforms;

    std::vector<nn::NamedParam> all_named_params() const;
    std::vector<autograd::Var> trainable_params() const;
};

std::unique_ptr<Rig> build_rig(const LoadedConfig& lc);

struct TeacherResult {
    Checkpoint checkpoint;
    std::vector<MetricsRecord> metrics;
    double final_test_top1 = 0.0;
};

TeacherResult train_teacher(const LoadedConfig& lc);

struct DistillResult {
    Checkpoint best_checkpoint;
    std::vector<MetricsRecord> metrics;
    std::map<int, double> best_per_k;
    int best_epoch = 0;
    bool encoder_constructed = false;
};

// teacher may be null for ofmkt / ce_baseline (it is ignored there anyway).
DistillResult distill(const LoadedConfig& lc, const Checkpoint* teacher);

struct EvalStats {
    long encoder_forward_calls = 0;
};

// Frozen-weight evaluation of a checkpoint at sampling budget K. Rebuilds the
// experiment from the embedded config snapshot; fully deterministic.
MetricsRecord evaluate_checkpoint(const Checkpoint& ckpt, const std::string& split, int k,
                                  EvalStats* stats = nullptr);

// Evaluation over an already-built rig (used by the loops and by tests).
struct EvalResult {
    double top1 = 0.0;
    double ce = 0.0;
};
EvalResult evaluate_model(Rig& rig, const std::string& split, int k);

// Softmax probabilities of each per-step prediction along the K-step sampling
// trajectory over a split, with the ensemble appended as the last entry.
// Only meaningful for flow-sampled methods (fmkt logit-based, ofmkt).
std::vector<Tensor> trajectory_probabilities(const Checkpoint& ckpt, const std::string& split, int k);

}  // namespace fmkt::harness
