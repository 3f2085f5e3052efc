#include "fmkt/harness/model.hpp"

namespace fmkt::harness {

SmallNet::SmallNet(int input_dim_, int classes_, ModelSpec spec, Rng& rng)
    : input_dim(input_dim_), classes(classes_), width(spec.width) {
    int in = input_dim_;
    for (int b = 0; b < spec.blocks; ++b) {
        blocks.emplace_back(in, spec.width, rng);
        in = spec.width;
    }
    head = encoders::ShapeTransform::pool_linear(spec.width, classes_, rng);
}

std::vector<Var> SmallNet::stages(const Var& x) const {
    std::vector<Var> acts;
    Var h = x;
    for (const auto& block : blocks) {
        h = autograd::relu(block.forward(h));
        acts.push_back(h);
    }
    return acts;
}

void SmallNet::collect(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    for (size_t b = 0; b < blocks.size(); ++b)
        blocks[b].collect(prefix + "block" + std::to_string(b) + ".", out);
    head.collect(prefix + "head.", out);
}

}  // namespace fmkt::harness
