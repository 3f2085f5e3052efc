#pragma once

#include "fmkt/encoders.hpp"
#include "fmkt/harness/config.hpp"
#include "fmkt/nn.hpp"

namespace fmkt::harness {

using autograd::Var;

// Desk-scale backbone: `blocks` [Linear-ReLU] blocks of uniform width plus a
// pool_linear classification head. Stage k counts from the end (stage 1 is
// the last block's activation, the pre-pooling feature).
class SmallNet : public nn::Module {
public:
    SmallNet() = default;
    SmallNet(int input_dim, int classes, ModelSpec spec, Rng& rng);

    std::vector<Var> stages(const Var& x) const;  // one activation per block
    Var features(const Var& x) const { return stages(x).back(); }
    Var logits(const Var& x) const { return head.apply(features(x)); }

    void collect(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;

    std::vector<nn::Linear> blocks;
    encoders::ShapeTransform head;  // the student-owned T_vanilla
    int input_dim = 0, classes = 0, width = 0;
};

}  // namespace fmkt::harness
