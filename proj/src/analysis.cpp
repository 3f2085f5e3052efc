#include "fmkt/analysis.hpp"

#include <cmath>

namespace fmkt::analysis {

AnalyticField constant_field(double c) {
    AnalyticField f;
    f.velocity = [c](double, double) { return c; };
    f.exact_state = [c](double z1, double tau) { return z1 - c * tau; };
    f.velocity_dz = [](double, double) { return 0.0; };
    return f;
}

AnalyticField linear_field() {
    AnalyticField f;
    f.velocity = [](double z, double) { return z; };
    f.exact_state = [](double z1, double tau) { return z1 * std::exp(-tau); };
    f.velocity_dz = [](double, double) { return 1.0; };
    return f;
}

ErrorStudyReport truncation_error_study(const AnalyticField& field,
                                        const schedules::NoiseSchedule& schedule, double z_start,
                                        const std::vector<int>& k_values, bool with_per_step) {
    for (size_t i = 1; i < k_values.size(); ++i)
        if (k_values[i] <= k_values[i - 1])
            throw config_error("truncation_error_study: K values must be strictly increasing");
    for (int k : k_values)
        if (k < 1 || k > 1024) throw config_error("truncation_error_study: K must be in [1,1024]");

    double alpha1 = schedules::evaluate(schedule, 1.0).alpha;
    double z1 = alpha1 * z_start;

    ErrorStudyReport report;
    report.k_values = k_values;
    for (int k : k_values) {
        double h = 1.0 / k;
        double z = z1;
        for (int i = 0; i < k; ++i) {
            double t = static_cast<double>(k - i) / k;
            z -= h * field.velocity(z, t);
        }
        double exact = field.exact_state(z1, 1.0);
        report.endpoint_errors.push_back(std::fabs(z - exact));

        if (with_per_step) {
            // One-step defects of the exact trajectory pushed through the
            // scheme: d_i = Z*(tau_{i+1}) - Z*(tau_i) + h v(Z*(tau_i), t_i).
            // The recursion propagates each defect through the remaining
            // (1 - psi/K) factors; their sum estimates the signed endpoint
            // error up to the O(1/K^3) remainder.
            std::vector<double> defects(static_cast<size_t>(k));
            double estimate = 0.0;
            for (int i = 0; i < k; ++i) {
                double tau_i = static_cast<double>(i) / k;
                double tau_n = static_cast<double>(i + 1) / k;
                double t = 1.0 - tau_i;
                double zs = field.exact_state(z1, tau_i);
                double d = field.exact_state(z1, tau_n) - zs + h * field.velocity(zs, t);
                defects[static_cast<size_t>(i)] = d / h;  // velocity-units defect K(t_i)
                double damp = 1.0;
                for (int j = i + 1; j < k; ++j) {
                    double tau_j = static_cast<double>(j) / k;
                    damp *= 1.0 - h * field.velocity_dz(field.exact_state(z1, tau_j), 1.0 - tau_j);
                }
                estimate += -d * damp;
            }
            report.per_step_errors.push_back(std::move(defects));
            report.first_order_estimates.push_back(estimate);
        }
    }

    // least-squares slope of log(err) vs log(K), ignoring exact-to-rounding points
    std::vector<double> lx, ly;
    for (size_t i = 0; i < report.k_values.size(); ++i)
        if (report.endpoint_errors[i] > 1e-14) {
            lx.push_back(std::log(static_cast<double>(report.k_values[i])));
            ly.push_back(std::log(report.endpoint_errors[i]));
        }
    if (lx.size() >= 2) {
        double mx = 0.0, my = 0.0;
        for (size_t i = 0; i < lx.size(); ++i) {
            mx += lx[i];
            my += ly[i];
        }
        mx /= lx.size();
        my /= ly.size();
        double sxy = 0.0, sxx = 0.0;
        for (size_t i = 0; i < lx.size(); ++i) {
            sxy += (lx[i] - mx) * (ly[i] - my);
            sxx += (lx[i] - mx) * (lx[i] - mx);
        }
        report.fitted_order = -sxy / sxx;
    }
    return report;
}

ReliabilityHistogram reliability_histogram(const Tensor& probabilities,
                                           const std::vector<int>& labels, int bins,
                                           int step_index) {
    if (probabilities.rank() != 2 || probabilities.dim(0) == 0)
        throw std::invalid_argument("reliability_histogram: want non-empty [N,C] probabilities");
    if (bins < 1) throw std::invalid_argument("reliability_histogram: bins must be >= 1");
    int n = probabilities.dim(0), c = probabilities.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("reliability_histogram: labels length mismatch");

    ReliabilityHistogram h;
    h.step_index = step_index;
    h.bin_edges.resize(static_cast<size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i)
        h.bin_edges[static_cast<size_t>(i)] = static_cast<double>(i) / bins;
    h.bin_confidence.assign(static_cast<size_t>(bins), 0.0);
    h.bin_accuracy.assign(static_cast<size_t>(bins), 0.0);
    h.bin_counts.assign(static_cast<size_t>(bins), 0);

    for (int i = 0; i < n; ++i) {
        const double* row = &probabilities.data[static_cast<size_t>(i) * c];
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += row[j];
        if (std::fabs(sum - 1.0) > 1e-4)
            throw std::invalid_argument("reliability_histogram: row " + std::to_string(i) +
                                        " sums to " + std::to_string(sum));
        int arg = 0;
        for (int j = 1; j < c; ++j)
            if (row[j] > row[arg]) arg = j;
        double conf = row[arg];
        int bin = std::min(static_cast<int>(conf * bins), bins - 1);
        h.bin_counts[static_cast<size_t>(bin)] += 1;
        h.bin_confidence[static_cast<size_t>(bin)] += conf;
        if (arg == labels[static_cast<size_t>(i)]) h.bin_accuracy[static_cast<size_t>(bin)] += 1.0;
    }
    double ece = 0.0;
    for (int b = 0; b < bins; ++b) {
        size_t bi = static_cast<size_t>(b);
        if (h.bin_counts[bi] > 0) {
            h.bin_confidence[bi] /= h.bin_counts[bi];
            h.bin_accuracy[bi] /= h.bin_counts[bi];
            ece += std::fabs(h.bin_confidence[bi] - h.bin_accuracy[bi]) * h.bin_counts[bi] / n;
        }
    }
    h.ece = ece;
    return h;
}

}  // namespace fmkt::analysis
