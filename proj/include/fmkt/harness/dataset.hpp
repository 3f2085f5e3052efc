#pragma once

#include <vector>

#include "fmkt/harness/config.hpp"
#include "fmkt/tensor.hpp"

namespace fmkt::harness {

struct Dataset {
    Tensor x_train, x_test;  // [N, D]
    std::vector<int> y_train, y_test;
    int classes = 0;
    int dim = 0;
};

// Deterministic generation from (config, seed). synthetic_gaussians lays the
// class clusters on a grid with class = (row + col) mod classes, so the
// decision boundary is piecewise and depth-limited students underfit it.
Dataset make_dataset(const DatasetConfig& cfg, uint64_t seed);

// Archive format (little-endian): "FKTI", u32 version, u32 n_train, u32
// n_test, u32 dim, u32 classes, f32 train data, i32 train labels, f32 test
// data, i32 test labels.
Dataset load_tiny_images(const std::string& path);
void save_tiny_images(const std::string& path, const Dataset& d);

}  // namespace fmkt::harness
