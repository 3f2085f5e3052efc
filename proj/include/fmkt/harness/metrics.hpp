#pragma once

#include <map>
#include <string>
#include <vector>

namespace fmkt::harness {

struct MetricsRecord {
    int epoch = 0;
    std::string split = "test";
    double loss = 0.0;
    double top1_accuracy = 0.0;
    std::map<int, double> per_k_accuracy;
    double wall_time_seconds = 0.0;
};

// Header: epoch,split,loss,top1,k,wall_time_s — one row per (epoch, K).
// wall_time_s is written as 0.000 by default so identical runs produce
// byte-identical files; set FLOWKT_WALLTIME=1 to record measured times.
std::string metrics_csv(const std::vector<MetricsRecord>& records);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);

}  // namespace fmkt::harness
