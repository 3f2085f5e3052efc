#include "fmkt/harness/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "fmkt/harness/plots.hpp"
#include "fmkt/harness/train.hpp"

namespace fmkt::harness {

namespace fs = std::filesystem;

namespace {

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    if (out.empty()) throw config_error("expected a comma-separated integer list, got: " + csv);
    return out;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory " + dir + ": " + ec.message());
}

int run_train_teacher(const std::string& config, const std::vector<std::string>& sets,
                      const std::string& out_dir) {
    LoadedConfig lc = load_config(config, sets);
    ensure_dir(out_dir);
    TeacherResult r = train_teacher(lc);
    save_checkpoint(r.checkpoint, out_dir + "/teacher.ckpt");
    write_metrics_csv(out_dir + "/teacher_metrics.csv", r.metrics);
    std::cout << "teacher trained: test top1 " << r.final_test_top1 << "% after "
              << lc.cfg.epochs << " epochs\n"
              << "wrote " << out_dir << "/teacher.ckpt and teacher_metrics.csv\n";
    return 0;
}

int run_distill(const std::string& config, const std::vector<std::string>& sets,
                const std::string& teacher_path, const std::string& out_dir) {
    LoadedConfig lc = load_config(config, sets);
    ensure_dir(out_dir);
    Checkpoint teacher;
    bool have_teacher = !teacher_path.empty();
    if (have_teacher) teacher = load_checkpoint(teacher_path);
    DistillResult r = distill(lc, have_teacher ? &teacher : nullptr);
    save_checkpoint(r.best_checkpoint, out_dir + "/student.ckpt");
    write_metrics_csv(out_dir + "/metrics.csv", r.metrics);
    std::cout << "method " << lc.cfg.method << ": best epoch " << r.best_epoch << ", per-K top1";
    for (const auto& [k, acc] : r.best_per_k) std::cout << "  K=" << k << ": " << acc << "%";
    std::cout << "\nwrote " << out_dir << "/student.ckpt and metrics.csv\n";
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& split, int k) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    EvalStats stats;
    MetricsRecord rec = evaluate_checkpoint(ckpt, split, k, &stats);
    std::cout << "split " << split << " K=" << k << ": top1 " << rec.top1_accuracy
              << "%  ce " << rec.loss << "  (epoch " << rec.epoch << ", encoder forwards "
              << stats.encoder_forward_calls << ")\n";
    return 0;
}

int run_analyze_truncation(const std::string& k_csv, const std::string& field_name,
                           const std::string& schedule_name, double z0,
                           const std::string& out_dir) {
    analysis::AnalyticField field;
    if (field_name == "linear")
        field = analysis::linear_field();
    else if (field_name == "constant")
        field = analysis::constant_field(1.0);
    else
        throw config_error("unknown field: " + field_name + " (want linear|constant)");
    schedules::NoiseSchedule sched;
    switch (schedules::parse_kind(schedule_name)) {
        case schedules::Kind::rectified_flow: sched = schedules::NoiseSchedule::rectified(); break;
        case schedules::Kind::vp_ode: sched = schedules::NoiseSchedule::vp(); break;
        case schedules::Kind::ve_ode: sched = schedules::NoiseSchedule::ve(); break;
    }
    std::vector<int> ks = parse_int_list(k_csv);
    std::sort(ks.begin(), ks.end());
    auto report = analysis::truncation_error_study(field, sched, z0, ks, /*with_per_step=*/true);
    ensure_dir(out_dir);
    {
        std::ofstream csv(out_dir + "/truncation.csv");
        if (!csv) throw io_error("cannot write " + out_dir + "/truncation.csv");
        csv << "k,endpoint_error\n";
        for (size_t i = 0; i < report.k_values.size(); ++i) {
            char line[64];
            std::snprintf(line, sizeof(line), "%d,%.12g\n", report.k_values[i],
                          report.endpoint_errors[i]);
            csv << line;
        }
    }
    write_error_curve_svg(out_dir + "/truncation.svg", report);
    std::cout << "fitted convergence order: " << report.fitted_order << "\nwrote " << out_dir
              << "/truncation.csv and truncation.svg\n";
    return 0;
}

int run_analyze_reliability(const std::string& ckpt_path, const std::string& split, int k, int bins,
                            const std::string& out_dir) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    LoadedConfig lc = parse_config(ckpt.config_json, {}, false);
    Dataset data = make_dataset(lc.cfg.dataset, lc.cfg.seed);
    const std::vector<int>& labels = split == "train" ? data.y_train : data.y_test;
    std::vector<Tensor> probs = trajectory_probabilities(ckpt, split, k);
    ensure_dir(out_dir);
    std::ofstream csv(out_dir + "/reliability.csv");
    if (!csv) throw io_error("cannot write " + out_dir + "/reliability.csv");
    csv << "step,bin_lo,bin_hi,confidence,accuracy,count\n";
    for (size_t step = 0; step < probs.size(); ++step) {
        int step_index = static_cast<int>(step);
        auto hist = analysis::reliability_histogram(probs[step], labels, bins, step_index);
        for (size_t b = 0; b < hist.bin_counts.size(); ++b) {
            char line[128];
            std::snprintf(line, sizeof(line), "%d,%.3f,%.3f,%.6f,%.6f,%d\n", step_index,
                          hist.bin_edges[b], hist.bin_edges[b + 1], hist.bin_confidence[b],
                          hist.bin_accuracy[b], hist.bin_counts[b]);
            csv << line;
        }
        std::string tag = step + 1 < probs.size() ? "step" + std::to_string(step + 1) : "ensemble";
        write_reliability_svg(out_dir + "/reliability_" + tag + ".svg", hist);
    }
    std::cout << "wrote " << out_dir << "/reliability.csv and per-step diagrams (K=" << k << ")\n";
    return 0;
}

int run_analyze_boundary(const std::string& which) {
    std::vector<schedules::NoiseSchedule> list;
    if (which == "all") {
        list = {schedules::NoiseSchedule::rectified(), schedules::NoiseSchedule::vp(),
                schedules::NoiseSchedule::ve()};
    } else {
        switch (schedules::parse_kind(which)) {
            case schedules::Kind::rectified_flow: list = {schedules::NoiseSchedule::rectified()}; break;
            case schedules::Kind::vp_ode: list = {schedules::NoiseSchedule::vp()}; break;
            case schedules::Kind::ve_ode: list = {schedules::NoiseSchedule::ve()}; break;
        }
    }
    for (const auto& s : list)
        std::cout << schedules::to_string(s.kind) << ": "
                  << schedules::format(schedules::boundary_report(s)) << "\n";
    return 0;
}

int run_report(const std::string& metrics_path) {
    std::ifstream in(metrics_path);
    if (!in) throw io_error("metrics file not found: " + metrics_path);
    std::string header;
    std::getline(in, header);
    if (header.rfind("epoch,split,loss,top1,k", 0) != 0)
        throw io_error("unrecognized metrics header in " + metrics_path);
    std::map<int, double> best;
    std::map<int, int> best_epoch;
    int last_epoch = -1;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 5) continue;
        int epoch = std::stoi(fields[0]);
        double top1 = std::stod(fields[3]);
        int k = std::stoi(fields[4]);
        last_epoch = std::max(last_epoch, epoch);
        if (!best.count(k) || top1 > best[k]) {
            best[k] = top1;
            best_epoch[k] = epoch;
        }
    }
    std::cout << "epochs: " << last_epoch + 1 << "\n";
    for (const auto& [k, acc] : best)
        std::cout << "K=" << k << ": best top1 " << acc << "% (epoch " << best_epoch[k] << ")\n";
    return 0;
}

}  // namespace

int cli(int argc, const char* const* argv) {
    CLI::App app{"flowkt: flow-matching knowledge transfer experiments"};
    app.require_subcommand(1);

    std::string config, out_dir = "out", teacher_path, ckpt_path, split = "test";
    std::vector<std::string> sets;
    int k = 4, bins = 10;
    std::string k_csv = "4,8,16,32,64,128,256", field_name = "linear",
                schedule_name = "rectified_flow", which_schedule = "all", metrics_path;
    double z0 = 1.0;

    auto* tt = app.add_subcommand("train-teacher", "train the teacher with cross-entropy");
    tt->add_option("--config", config, "config JSON")->required();
    tt->add_option("--set", sets, "dotted.key=value overrides");
    tt->add_option("--out", out_dir, "output directory");

    auto* di = app.add_subcommand("distill", "train a student under the configured method");
    di->add_option("--config", config, "config JSON")->required();
    di->add_option("--set", sets, "dotted.key=value overrides");
    di->add_option("--teacher", teacher_path, "teacher checkpoint (ignored by ofmkt/ce_baseline)");
    di->add_option("--out", out_dir, "output directory");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint at a sampling budget K");
    ev->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    ev->add_option("--k", k, "sampling steps");
    ev->add_option("--split", split, "train|test");

    auto* an = app.add_subcommand("analyze", "numerical studies");
    an->require_subcommand(1);
    auto* tr = an->add_subcommand("truncation", "Euler truncation-error study");
    tr->add_option("--k", k_csv, "comma-separated K values");
    tr->add_option("--field", field_name, "linear|constant");
    tr->add_option("--schedule", schedule_name, "noise schedule kind");
    tr->add_option("--z0", z0, "start state");
    tr->add_option("--out", out_dir, "output directory");
    auto* re = an->add_subcommand("reliability", "reliability histograms along the trajectory");
    re->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    re->add_option("--k", k, "sampling steps");
    re->add_option("--bins", bins, "histogram bins");
    re->add_option("--split", split, "train|test");
    re->add_option("--out", out_dir, "output directory");
    auto* bo = an->add_subcommand("boundary", "schedule boundary reports");
    bo->add_option("--schedule", which_schedule, "all or a schedule kind");

    auto* rp = app.add_subcommand("report", "summarize a metrics CSV");
    rp->add_option("--metrics", metrics_path, "metrics.csv path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (tt->parsed()) return run_train_teacher(config, sets, out_dir);
        if (di->parsed()) return run_distill(config, sets, teacher_path, out_dir);
        if (ev->parsed()) return run_eval(ckpt_path, split, k);
        if (an->parsed()) {
            if (tr->parsed()) return run_analyze_truncation(k_csv, field_name, schedule_name, z0, out_dir);
            if (re->parsed()) return run_analyze_reliability(ckpt_path, split, k, bins, out_dir);
            if (bo->parsed()) return run_analyze_boundary(which_schedule);
        }
        if (rp->parsed()) return run_report(metrics_path);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const numerical_failure& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    } catch (const config_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace fmkt::harness
