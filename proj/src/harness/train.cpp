#include "fmkt/harness/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fmkt/variants.hpp"

namespace fmkt::harness {

namespace ag = fmkt::autograd;

namespace {

// deterministic seed streams per component
enum : uint64_t {
    kStreamTeacher = 1,
    kStreamStudent = 2,
    kStreamEncoder = 3,
    kStreamTransform = 4,
    kStreamOrder = 5,
    kStreamPd = 6,
};

bool needs_teacher(const std::string& method) {
    return method == "fmkt" || method == "fmkt_theta" || method == "vanilla_kd_baseline";
}

bool is_flow_method(const std::string& method) {
    return method == "fmkt" || method == "fmkt_theta" || method == "ofmkt";
}

Tensor gather_rows(const Tensor& x, const std::vector<size_t>& idx, size_t begin, size_t end) {
    int dim = x.dim(1);
    Tensor out = Tensor::zeros({static_cast<int>(end - begin), dim});
    for (size_t i = begin; i < end; ++i)
        for (int d = 0; d < dim; ++d)
            out.data[(i - begin) * static_cast<size_t>(dim) + static_cast<size_t>(d)] =
                x.data[idx[i] * static_cast<size_t>(dim) + static_cast<size_t>(d)];
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<size_t>& idx,
                               size_t begin, size_t end) {
    std::vector<int> out(end - begin);
    for (size_t i = begin; i < end; ++i) out[i - begin] = y[idx[i]];
    return out;
}

double lr_at_epoch(const ExperimentConfig& c, int epoch) {
    double lr = c.learning_rate;
    for (int m : c.lr_milestones)
        if (epoch >= m) lr *= c.lr_factor;
    if (c.warmup_epochs > 0 && epoch < c.warmup_epochs)
        lr *= static_cast<double>(epoch + 1) / c.warmup_epochs;
    return lr;
}

int argmax_row(const Tensor& logits, int row) {
    int c = logits.dim(1);
    const double* r = &logits.data[static_cast<size_t>(row) * c];
    int best = 0;
    for (int j = 1; j < c; ++j)
        if (r[j] > r[best]) best = j;
    return best;
}

double ce_of_logits(const Tensor& logits, const std::vector<int>& labels) {
    ag::NoGradGuard guard;
    return ag::cross_entropy(ag::constant(logits), labels).value().item();
}

double accuracy_of_logits(const Tensor& logits, const std::vector<int>& labels) {
    int n = logits.dim(0);
    int hit = 0;
    for (int i = 0; i < n; ++i)
        if (argmax_row(logits, i) == labels[static_cast<size_t>(i)]) ++hit;
    return 100.0 * hit / n;
}

}  // namespace

std::vector<nn::NamedParam> Rig::all_named_params() const {
    std::vector<nn::NamedParam> out;
    if (has_teacher) teacher.collect("teacher.", out);
    student.collect("student.", out);
    if (encoder) encoder->collect("encoder.", out);
    flow_transform.collect("transform.", out);
    for (size_t i = 0; i < stage_encoders.size(); ++i) {
        stage_encoders[i]->collect("encoder_stage" + std::to_string(feature_stages[i]) + ".", out);
        stage_transforms[i].collect("transform_stage" + std::to_string(feature_stages[i]) + ".", out);
    }
    return out;
}

std::vector<autograd::Var> Rig::trainable_params() const {
    const std::string& m = lc.cfg.method;
    std::vector<nn::NamedParam> named;
    for (size_t b = 0; b < student.blocks.size(); ++b)
        student.blocks[b].collect("student.block" + std::to_string(b) + ".", named);
    // the vanilla head trains unless the flow's T replaces it (fmkt/ofmkt
    // logit-based inference goes through the sampler, not the head)
    bool head_trains = m == "fmkt_theta" || m == "vanilla_kd_baseline" || m == "ce_baseline" ||
                       (m == "fmkt" && !feature_stages.empty());
    if (head_trains) student.head.collect("student.head.", named);
    if (encoder) encoder->collect("encoder.", named);
    flow_transform.collect("transform.", named);
    for (size_t i = 0; i < stage_encoders.size(); ++i) {
        stage_encoders[i]->collect("se.", named);
        stage_transforms[i].collect("st.", named);
    }
    std::vector<autograd::Var> out;
    out.reserve(named.size());
    for (auto& p : named) out.push_back(p.var);
    return out;
}

std::unique_ptr<Rig> build_rig(const LoadedConfig& lc) {
    const ExperimentConfig& c = lc.cfg;
    auto rig = std::make_unique<Rig>();
    rig->lc = lc;
    rig->data = make_dataset(c.dataset, c.seed);

    Rng teacher_rng(Rng::derive(c.seed, kStreamTeacher));
    Rng student_rng(Rng::derive(c.seed, kStreamStudent));
    Rng encoder_rng(Rng::derive(c.seed, kStreamEncoder));
    Rng transform_rng(Rng::derive(c.seed, kStreamTransform));

    rig->has_teacher = needs_teacher(c.method);
    if (rig->has_teacher)
        rig->teacher = SmallNet(rig->data.dim, rig->data.classes, c.teacher_arch, teacher_rng);
    rig->student = SmallNet(rig->data.dim, rig->data.classes, c.student_arch, student_rng);

    bool feature = c.feature_based();
    if (c.method == "fmkt" && feature) {
        // [n3,n2,n1]: entry 0 toggles the 3rd-last stage, entry 2 the last
        for (int slot = 0; slot < 3; ++slot) {
            if (!c.distill_stages[static_cast<size_t>(slot)]) continue;
            int from_end = 3 - slot;
            if (from_end > static_cast<int>(rig->student.blocks.size()) ||
                from_end > static_cast<int>(rig->teacher.blocks.size()))
                throw config_error("distill_stages selects stage " + std::to_string(from_end) +
                                   " from the end, but a network has too few blocks");
            rig->feature_stages.push_back(from_end);
            encoders::EncoderSpec spec = c.encoder;
            rig->stage_encoders.push_back(
                encoders::build_encoder(spec, {c.student_arch.width}, encoder_rng));
            if (c.student_arch.width == c.teacher_arch.width)
                rig->stage_transforms.push_back(encoders::ShapeTransform::identity());
            else
                rig->stage_transforms.push_back(encoders::ShapeTransform::conv_projection(
                    c.student_arch.width, c.teacher_arch.width, /*spatial=*/false, transform_rng));
        }
    } else if (is_flow_method(c.method)) {
        rig->encoder = encoders::build_encoder(c.encoder, {c.student_arch.width}, encoder_rng);
        rig->flow_transform =
            encoders::ShapeTransform::pool_linear(c.student_arch.width, rig->data.classes, transform_rng);
    }
    return rig;
}

namespace {

// test-set logits for head-evaluated methods, flow ensemble otherwise
Tensor eval_logits(Rig& rig, const Tensor& x, int k) {
    ag::NoGradGuard guard;
    const std::string& m = rig.lc.cfg.method;
    Var input = ag::constant(x);
    bool flow_eval = (m == "fmkt" && rig.encoder != nullptr) || m == "ofmkt";
    if (!flow_eval) return rig.student.logits(input).value();
    Tensor feats = rig.student.features(input).value();
    flow::FlowTrajectory traj =
        flow::sample(feats, *rig.encoder, rig.lc.cfg.schedule, k, rig.flow_transform);
    return traj.ensemble;
}

}  // namespace

EvalResult evaluate_model(Rig& rig, const std::string& split, int k) {
    const Tensor& x = split == "train" ? rig.data.x_train : rig.data.x_test;
    const std::vector<int>& y = split == "train" ? rig.data.y_train : rig.data.y_test;
    if (split != "train" && split != "test") throw config_error("split must be train or test");
    int n = x.dim(0);
    int chunk = 512;
    int hit = 0;
    double ce_sum = 0.0;
    for (int begin = 0; begin < n; begin += chunk) {
        int end = std::min(n, begin + chunk);
        std::vector<size_t> idx(static_cast<size_t>(end - begin));
        for (int i = begin; i < end; ++i) idx[static_cast<size_t>(i - begin)] = static_cast<size_t>(i);
        Tensor xb = gather_rows(x, idx, 0, idx.size());
        std::vector<int> yb = gather_labels(y, idx, 0, idx.size());
        Tensor logits = eval_logits(rig, xb, k);
        for (int i = 0; i < logits.dim(0); ++i)
            if (argmax_row(logits, i) == yb[static_cast<size_t>(i)]) ++hit;
        ce_sum += ce_of_logits(logits, yb) * (end - begin);
    }
    return {100.0 * hit / n, ce_sum / n};
}

namespace {

Checkpoint snapshot(const Rig& rig, int epoch, uint64_t rng_state) {
    Checkpoint ckpt;
    ckpt.config_json = rig.lc.canonical_json;
    ckpt.epoch = epoch;
    ckpt.rng_state = rng_state;
    append_parameters(ckpt, rig.all_named_params());
    return ckpt;
}

}  // namespace

TeacherResult train_teacher(const LoadedConfig& lc) {
    const ExperimentConfig& c = lc.cfg;
    Dataset data = make_dataset(c.dataset, c.seed);
    Rng init_rng(Rng::derive(c.seed, kStreamTeacher));
    SmallNet teacher(data.dim, data.classes, c.teacher_arch, init_rng);

    std::vector<nn::NamedParam> named;
    teacher.collect("teacher.", named);
    std::vector<Var> params;
    for (auto& p : named) params.push_back(p.var);
    nn::Sgd opt(params, c.learning_rate, c.momentum);

    Rng order_rng(Rng::derive(c.seed, kStreamOrder));
    int n = data.x_train.dim(0);
    TeacherResult result;
    for (int epoch = 0; epoch < c.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        opt.set_lr(lr_at_epoch(c, epoch));
        std::vector<size_t> order = order_rng.permutation(static_cast<size_t>(n));
        double loss_sum = 0.0;
        int batches = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(c.batch_size)) {
            size_t end = std::min(order.size(), begin + static_cast<size_t>(c.batch_size));
            Var xb = ag::constant(gather_rows(data.x_train, order, begin, end));
            std::vector<int> yb = gather_labels(data.y_train, order, begin, end);
            Var loss = ag::cross_entropy(teacher.logits(xb), yb);
            double lv = loss.value().item();
            if (!std::isfinite(lv))
                throw numerical_failure("train_teacher: non-finite loss at epoch " +
                                            std::to_string(epoch), 0.0, epoch);
            loss_sum += lv;
            ++batches;
            opt.zero_grad();
            ag::backward(loss);
            opt.step();
        }
        // head-based eval; K does not apply to the teacher (recorded as k=0)
        Tensor logits;
        {
            ag::NoGradGuard guard;
            logits = teacher.logits(ag::constant(data.x_test)).value();
        }
        double top1 = accuracy_of_logits(logits, data.y_test);
        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        MetricsRecord rec;
        rec.epoch = epoch;
        rec.split = "test";
        rec.loss = loss_sum / batches;
        rec.top1_accuracy = top1;
        rec.per_k_accuracy = {{0, top1}};
        rec.wall_time_seconds = wall;
        result.metrics.push_back(rec);
        result.final_test_top1 = top1;
    }
    Checkpoint ckpt;
    ckpt.config_json = lc.canonical_json;
    ckpt.epoch = c.epochs - 1;
    ckpt.rng_state = order_rng.state();
    append_parameters(ckpt, named);
    result.checkpoint = std::move(ckpt);
    return result;
}

DistillResult distill(const LoadedConfig& lc, const Checkpoint* teacher) {
    const ExperimentConfig& c = lc.cfg;
    auto rig = build_rig(lc);
    if (rig->has_teacher) {
        if (!teacher) throw config_error("method " + c.method + " requires a teacher checkpoint");
        std::vector<nn::NamedParam> tp;
        rig->teacher.collect("teacher.", tp);
        assign_parameters(*teacher, tp);
    }

    nn::Sgd opt(rig->trainable_params(), c.learning_rate, c.momentum);
    Rng order_rng(Rng::derive(c.seed, kStreamOrder));
    Rng pd_rng(Rng::derive(c.seed, kStreamPd));
    losses::MetricLoss kd_loss = c.loss.kind == losses::Kind::vanilla_kd
                                     ? c.loss
                                     : losses::MetricLoss::vanilla_kd();

    flow::SerialLossOptions opts;
    opts.allow_large_n = c.allow_large_n;
    opts.loss_weight = c.loss_weight;

    DistillResult result;
    result.encoder_constructed = rig->encoder != nullptr || !rig->stage_encoders.empty();
    double best_top1 = -1.0;
    int n = rig->data.x_train.dim(0);
    int max_k = *std::max_element(c.k_eval.begin(), c.k_eval.end());

    for (int epoch = 0; epoch < c.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        opt.set_lr(lr_at_epoch(c, epoch));
        std::vector<size_t> order = order_rng.permutation(static_cast<size_t>(n));
        double loss_sum = 0.0;
        int batches = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(c.batch_size)) {
            size_t end = std::min(order.size(), begin + static_cast<size_t>(c.batch_size));
            Var xb = ag::constant(gather_rows(rig->data.x_train, order, begin, end));
            std::vector<int> yb = gather_labels(rig->data.y_train, order, begin, end);
            flow::PairDecoupleConfig pd{c.dirac_ratio, pd_rng.next_u64()};

            Var loss;
            if (c.method == "fmkt" && !rig->feature_stages.empty()) {
                // feature-based: flow modules are training-time auxiliaries
                std::vector<Var> stages_s = rig->student.stages(xb);
                std::vector<Tensor> stages_t;
                {
                    ag::NoGradGuard guard;
                    for (const Var& s : rig->teacher.stages(xb)) stages_t.push_back(s.value());
                }
                loss = ag::cross_entropy(rig->student.head.apply(stages_s.back()), yb);
                for (size_t i = 0; i < rig->feature_stages.size(); ++i) {
                    int from_end = rig->feature_stages[i];
                    flow::FlowBatch fb;
                    fb.x_s = stages_s[stages_s.size() - static_cast<size_t>(from_end)];
                    fb.x_t = ag::constant(stages_t[stages_t.size() - static_cast<size_t>(from_end)]);
                    fb.y = yb;
                    fb.mode = flow::Mode::feature_based;
                    auto serial = flow::serial_loss(fb, *rig->stage_encoders[i], c.schedule, c.loss,
                                                    c.n_train_steps, rig->stage_transforms[i],
                                                    c.match_label, pd, opts);
                    loss = ag::add(loss, serial.loss);
                }
            } else if (c.method == "fmkt") {
                flow::FlowBatch fb;
                fb.x_s = rig->student.features(xb);
                {
                    ag::NoGradGuard guard;
                    fb.x_t = ag::constant(rig->teacher.logits(xb).value());
                }
                fb.y = yb;
                fb.mode = flow::Mode::logit_based;
                auto serial = flow::serial_loss(fb, *rig->encoder, c.schedule, c.loss, c.n_train_steps,
                                                rig->flow_transform, c.match_label, pd, opts);
                loss = serial.loss;
            } else if (c.method == "fmkt_theta") {
                flow::FlowBatch fb;
                fb.x_s = rig->student.features(xb);
                {
                    ag::NoGradGuard guard;
                    fb.x_t = ag::constant(rig->teacher.logits(xb).value());
                }
                fb.y = yb;
                fb.mode = flow::Mode::logit_based;
                variants::ThetaConfig tc;
                tc.balance_weight = c.theta_balance_weight;
                tc.vanilla_head = &rig->student.head;
                auto theta = variants::theta_loss(fb, *rig->encoder, c.schedule, c.loss,
                                                  c.n_train_steps, rig->flow_transform, tc, pd, opts);
                loss = theta.loss;
            } else if (c.method == "ofmkt") {
                variants::OnlineConfig oc;
                oc.n_steps = c.n_train_steps;
                oc.loss = c.loss;
                oc.target = c.online_target;
                oc.loss_weight = c.loss_weight;
                oc.allow_large_n = c.allow_large_n;
                auto online = variants::online_loss(rig->student.features(xb), yb, *rig->encoder,
                                                    c.schedule, rig->flow_transform, oc);
                loss = online.loss;
            } else if (c.method == "vanilla_kd_baseline") {
                Var logits = rig->student.logits(xb);
                Var target;
                {
                    ag::NoGradGuard guard;
                    target = ag::constant(rig->teacher.logits(xb).value());
                }
                loss = ag::add(ag::cross_entropy(logits, yb),
                               losses::compute(kd_loss, logits, target, yb));
            } else {  // ce_baseline
                loss = ag::cross_entropy(rig->student.logits(xb), yb);
            }

            double lv = loss.value().item();
            if (!std::isfinite(lv))
                throw numerical_failure("distill: non-finite loss at epoch " + std::to_string(epoch),
                                        0.0, epoch);
            loss_sum += lv;
            ++batches;
            opt.zero_grad();
            ag::backward(loss);
            opt.step();
        }

        MetricsRecord rec;
        rec.epoch = epoch;
        rec.split = "test";
        rec.loss = loss_sum / batches;
        for (int k : c.k_eval) rec.per_k_accuracy[k] = evaluate_model(*rig, "test", k).top1;
        rec.top1_accuracy = rec.per_k_accuracy[max_k];
        rec.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.metrics.push_back(rec);

        if (rec.top1_accuracy > best_top1) {
            best_top1 = rec.top1_accuracy;
            result.best_checkpoint = snapshot(*rig, epoch, order_rng.state());
            result.best_per_k = rec.per_k_accuracy;
            result.best_epoch = epoch;
        }
    }
    return result;
}

std::vector<Tensor> trajectory_probabilities(const Checkpoint& ckpt, const std::string& split, int k) {
    LoadedConfig lc = parse_config(ckpt.config_json, {}, /*apply_env_seed=*/false);
    const std::string& m = lc.cfg.method;
    bool flow_eval = (m == "fmkt" && !lc.cfg.feature_based()) || m == "ofmkt";
    if (!flow_eval)
        throw config_error("trajectory analysis needs a flow-sampled method (fmkt logit-based or "
                           "ofmkt), got " + m);
    auto rig = build_rig(lc);
    assign_parameters(ckpt, rig->all_named_params());
    const Tensor& x = split == "train" ? rig->data.x_train : rig->data.x_test;
    int n = x.dim(0), classes = rig->data.classes;
    std::vector<Tensor> probs(static_cast<size_t>(k) + 1, Tensor::zeros({n, classes}));
    ag::NoGradGuard guard;
    int chunk = 512;
    for (int begin = 0; begin < n; begin += chunk) {
        int end = std::min(n, begin + chunk);
        std::vector<size_t> idx(static_cast<size_t>(end - begin));
        for (int i = begin; i < end; ++i) idx[static_cast<size_t>(i - begin)] = static_cast<size_t>(i);
        Tensor feats = rig->student.features(ag::constant(gather_rows(x, idx, 0, idx.size()))).value();
        flow::FlowTrajectory traj =
            flow::sample(feats, *rig->encoder, lc.cfg.schedule, k, rig->flow_transform);
        for (int step = 0; step <= k; ++step) {
            const Tensor& logits = step < k ? traj.per_step_predictions[static_cast<size_t>(step)]
                                            : traj.ensemble;
            Tensor p = ag::softmax_rows(ag::constant(logits)).value();
            for (int i = 0; i < end - begin; ++i)
                for (int c = 0; c < classes; ++c)
                    probs[static_cast<size_t>(step)]
                        .data[(static_cast<size_t>(begin) + i) * classes + c] =
                        p.data[static_cast<size_t>(i) * classes + c];
        }
    }
    return probs;
}

MetricsRecord evaluate_checkpoint(const Checkpoint& ckpt, const std::string& split, int k,
                                  EvalStats* stats) {
    if (ckpt.format_version != kCheckpointVersion)
        throw io_error("checkpoint version mismatch: " + std::to_string(ckpt.format_version));
    LoadedConfig lc = parse_config(ckpt.config_json, {}, /*apply_env_seed=*/false);
    auto rig = build_rig(lc);
    assign_parameters(ckpt, rig->all_named_params());
    long calls_before = rig->encoder ? rig->encoder->forward_calls() : 0;
    EvalResult r = evaluate_model(*rig, split, k);
    if (stats)
        stats->encoder_forward_calls = (rig->encoder ? rig->encoder->forward_calls() : 0) - calls_before;
    MetricsRecord rec;
    rec.epoch = ckpt.epoch;
    rec.split = split;
    rec.loss = r.ce;
    rec.top1_accuracy = r.top1;
    rec.per_k_accuracy = {{k, r.top1}};
    return rec;
}

}  // namespace fmkt::harness
