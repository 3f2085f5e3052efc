#include "fmkt/harness/metrics.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "fmkt/common.hpp"

namespace fmkt::harness {

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
    bool real_walltime = std::getenv("FLOWKT_WALLTIME") != nullptr;
    std::string out = "epoch,split,loss,top1,k,wall_time_s\n";
    char line[256];
    for (const auto& r : records)
        for (const auto& [k, acc] : r.per_k_accuracy) {
            std::snprintf(line, sizeof(line), "%d,%s,%.6f,%.6f,%d,%.3f\n", r.epoch,
                          r.split.c_str(), r.loss, acc, k,
                          real_walltime ? r.wall_time_seconds : 0.0);
            out += line;
        }
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write metrics: " + path);
    out << metrics_csv(records);
}

}  // namespace fmkt::harness
