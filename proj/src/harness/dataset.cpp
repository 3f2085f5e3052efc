#include "fmkt/harness/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "fmkt/rng.hpp"

namespace fmkt::harness {

namespace {

void fill_gaussians(const DatasetConfig& cfg, Rng& rng, int n, Tensor& x, std::vector<int>& y) {
    int m = cfg.classes * cfg.clusters_per_class;
    int grid = 1;
    while (grid * grid < m) ++grid;
    double spacing = 2.0 / grid;
    double sigma = cfg.spread * spacing;
    x = Tensor::zeros({n, cfg.dim});
    y.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int cluster = static_cast<int>(rng.below(static_cast<uint64_t>(m)));
        int row = cluster / grid, col = cluster % grid;
        y[static_cast<size_t>(i)] = (row + col) % cfg.classes;
        double cx = -1.0 + spacing * (col + 0.5);
        double cy = -1.0 + spacing * (row + 0.5);
        double* out = &x.data[static_cast<size_t>(i) * cfg.dim];
        out[0] = cx + sigma * rng.normal();
        if (cfg.dim > 1) out[1] = cy + sigma * rng.normal();
        for (int d = 2; d < cfg.dim; ++d) out[d] = sigma * rng.normal();
    }
}

void fill_spirals(const DatasetConfig& cfg, Rng& rng, int n, Tensor& x, std::vector<int>& y) {
    x = Tensor::zeros({n, cfg.dim});
    y.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int cls = static_cast<int>(rng.below(2));
        double u = rng.uniform();
        double angle = u * 3.0 * 6.283185307179586 / 2.0;  // 1.5 turns
        double radius = 0.1 + 0.9 * u;
        double sgn = cls == 0 ? 1.0 : -1.0;
        double px = sgn * radius * std::cos(angle) + cfg.noise * cfg.spread * rng.normal();
        double py = sgn * radius * std::sin(angle) + cfg.noise * cfg.spread * rng.normal();
        y[static_cast<size_t>(i)] = cls;
        double* out = &x.data[static_cast<size_t>(i) * cfg.dim];
        out[0] = px;
        if (cfg.dim > 1) out[1] = py;
        for (int d = 2; d < cfg.dim; ++d) out[d] = cfg.noise * cfg.spread * rng.normal();
    }
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw io_error("truncated dataset archive: " + path);
    return v;
}

}  // namespace

Dataset make_dataset(const DatasetConfig& cfg, uint64_t seed) {
    if (cfg.kind == "tiny_images") return load_tiny_images(cfg.path);
    if (cfg.dim < 1 || cfg.classes < 2 || cfg.train_size < 1 || cfg.test_size < 1)
        throw config_error("dataset dims/classes/sizes must be positive");
    Dataset d;
    d.classes = cfg.classes;
    d.dim = cfg.dim;
    Rng train_rng(Rng::derive(seed, 11));
    Rng test_rng(Rng::derive(seed, 13));
    if (cfg.kind == "synthetic_gaussians") {
        fill_gaussians(cfg, train_rng, cfg.train_size, d.x_train, d.y_train);
        fill_gaussians(cfg, test_rng, cfg.test_size, d.x_test, d.y_test);
    } else if (cfg.kind == "two_spirals") {
        fill_spirals(cfg, train_rng, cfg.train_size, d.x_train, d.y_train);
        fill_spirals(cfg, test_rng, cfg.test_size, d.x_test, d.y_test);
        d.classes = 2;
    } else {
        throw config_error("unknown dataset kind: " + cfg.kind);
    }
    return d;
}

void save_tiny_images(const std::string& path, const Dataset& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write dataset archive: " + path);
    out.write("FKTI", 4);
    write_pod<uint32_t>(out, 1);
    write_pod<uint32_t>(out, static_cast<uint32_t>(d.x_train.dim(0)));
    write_pod<uint32_t>(out, static_cast<uint32_t>(d.x_test.dim(0)));
    write_pod<uint32_t>(out, static_cast<uint32_t>(d.dim));
    write_pod<uint32_t>(out, static_cast<uint32_t>(d.classes));
    for (double v : d.x_train.data) write_pod<float>(out, static_cast<float>(v));
    for (int v : d.y_train) write_pod<int32_t>(out, v);
    for (double v : d.x_test.data) write_pod<float>(out, static_cast<float>(v));
    for (int v : d.y_test) write_pod<int32_t>(out, v);
}

Dataset load_tiny_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("dataset missing: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FKTI", 4) != 0)
        throw io_error("not a tiny-images archive: " + path);
    uint32_t version = read_pod<uint32_t>(in, path);
    if (version != 1) throw io_error("unsupported tiny-images version in " + path);
    uint32_t n_train = read_pod<uint32_t>(in, path);
    uint32_t n_test = read_pod<uint32_t>(in, path);
    uint32_t dim = read_pod<uint32_t>(in, path);
    uint32_t classes = read_pod<uint32_t>(in, path);
    if (dim == 0 || classes < 2 || n_train == 0 || n_test == 0)
        throw io_error("corrupt tiny-images header in " + path);
    Dataset d;
    d.dim = static_cast<int>(dim);
    d.classes = static_cast<int>(classes);
    d.x_train = Tensor::zeros({static_cast<int>(n_train), d.dim});
    d.x_test = Tensor::zeros({static_cast<int>(n_test), d.dim});
    for (double& v : d.x_train.data) v = static_cast<double>(read_pod<float>(in, path));
    d.y_train.resize(n_train);
    for (int& v : d.y_train) {
        v = read_pod<int32_t>(in, path);
        if (v < 0 || v >= d.classes) throw io_error("label out of range in " + path);
    }
    for (double& v : d.x_test.data) v = static_cast<double>(read_pod<float>(in, path));
    d.y_test.resize(n_test);
    for (int& v : d.y_test) {
        v = read_pod<int32_t>(in, path);
        if (v < 0 || v >= d.classes) throw io_error("label out of range in " + path);
    }
    return d;
}

}  // namespace fmkt::harness
