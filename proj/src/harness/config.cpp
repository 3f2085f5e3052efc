#include "fmkt/harness/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fmkt::harness {

using nlohmann::json;

namespace {

// --set dotted.key=value; value parsed as JSON when possible, string otherwise
void apply_override(json& root, const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw config_error("override must look like dotted.key=value, got: " + spec);
    std::string path = spec.substr(0, eq);
    std::string raw = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &root;
    size_t pos = 0;
    for (;;) {
        size_t dot = path.find('.', pos);
        std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (key.empty()) throw config_error("bad override key: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error(std::string("config key '") + key + "': " + e.what());
    }
}

DatasetConfig parse_dataset(const json& j) {
    DatasetConfig d;
    if (j.is_string()) {
        d.kind = j.get<std::string>();
    } else if (j.is_object()) {
        d.kind = get_or<std::string>(j, "kind", d.kind);
        d.classes = get_or(j, "classes", d.classes);
        d.dim = get_or(j, "dim", d.dim);
        d.clusters_per_class = get_or(j, "clusters_per_class", d.clusters_per_class);
        d.spread = get_or(j, "spread", d.spread);
        d.train_size = get_or(j, "train_size", d.train_size);
        d.test_size = get_or(j, "test_size", d.test_size);
        d.noise = get_or(j, "noise", d.noise);
        d.path = get_or<std::string>(j, "path", d.path);
    } else {
        throw config_error("dataset must be a string or an object");
    }
    if (d.kind != "synthetic_gaussians" && d.kind != "two_spirals" && d.kind != "tiny_images")
        throw config_error("unknown dataset kind: " + d.kind);
    if (d.kind == "two_spirals") d.classes = 2;
    return d;
}

ModelSpec parse_model(const json& j, ModelSpec def) {
    ModelSpec m = def;
    m.blocks = get_or(j, "blocks", m.blocks);
    m.width = get_or(j, "width", m.width);
    if (m.blocks < 1 || m.width < 1) throw config_error("model blocks/width must be positive");
    return m;
}

schedules::NoiseSchedule parse_schedule(const json& j) {
    schedules::NoiseSchedule s = schedules::NoiseSchedule::rectified();
    std::string kind = get_or<std::string>(j, "kind", "rectified_flow");
    switch (schedules::parse_kind(kind)) {
        case schedules::Kind::rectified_flow: s = schedules::NoiseSchedule::rectified(); break;
        case schedules::Kind::vp_ode: s = schedules::NoiseSchedule::vp(); break;
        case schedules::Kind::ve_ode: s = schedules::NoiseSchedule::ve(); break;
    }
    if (j.contains("a")) s.a = j.at("a").get<double>();
    if (j.contains("b")) s.b = j.at("b").get<double>();
    if (j.contains("derivative_mode"))
        s.derivative_mode = schedules::parse_derivative_mode(j.at("derivative_mode").get<std::string>());
    if (j.contains("fd_delta")) s.fd_delta = j.at("fd_delta").get<double>();
    if (j.contains("ve_sigma_slope")) s.ve_sigma_slope = j.at("ve_sigma_slope").get<double>();
    return s;
}

encoders::EncoderSpec parse_encoder(const json& j) {
    encoders::EncoderSpec e;
    e.arch = encoders::parse_arch(get_or<std::string>(j, "arch", "mlp"));
    e.depth = get_or(j, "depth", e.depth);
    e.width = get_or(j, "width", e.width);
    e.heads = get_or(j, "heads", e.heads);
    e.norm = encoders::parse_norm(get_or<std::string>(j, "norm", "none"));
    return e;
}

losses::MetricLoss parse_loss(const json& j) {
    losses::MetricLoss l = losses::MetricLoss::dist();
    l.kind = losses::parse_kind(get_or<std::string>(j, "kind", "dist"));
    l.temperature = get_or(j, "temperature", l.temperature);
    l.dkd_alpha = get_or(j, "dkd_alpha", l.dkd_alpha);
    l.dkd_beta = get_or(j, "dkd_beta", l.dkd_beta);
    l.dist_beta = get_or(j, "dist_beta", l.dist_beta);
    l.dist_gamma = get_or(j, "dist_gamma", l.dist_gamma);
    return l;
}

LoadedConfig finish(json j, const std::vector<std::string>& overrides, bool apply_env_seed) {
    for (const auto& o : overrides) apply_override(j, o);

    ExperimentConfig c;
    c.method = get_or<std::string>(j, "method", c.method);
    if (c.method != "fmkt" && c.method != "fmkt_theta" && c.method != "ofmkt" &&
        c.method != "vanilla_kd_baseline" && c.method != "ce_baseline")
        throw config_error("unknown method: " + c.method);
    if (j.contains("dataset")) c.dataset = parse_dataset(j.at("dataset"));
    if (j.contains("teacher_arch")) c.teacher_arch = parse_model(j.at("teacher_arch"), c.teacher_arch);
    if (j.contains("student_arch")) c.student_arch = parse_model(j.at("student_arch"), c.student_arch);
    if (j.contains("schedule")) c.schedule = parse_schedule(j.at("schedule"));
    if (j.contains("encoder")) c.encoder = parse_encoder(j.at("encoder"));
    if (j.contains("loss")) {
        c.loss = parse_loss(j.at("loss"));
        c.loss_weight = get_or(j.at("loss"), "weight", c.loss_weight);
    }
    c.n_train_steps = get_or(j, "N", c.n_train_steps);
    c.allow_large_n = get_or(j, "allow_large_n", c.allow_large_n);
    c.k_eval = get_or(j, "K_eval", c.k_eval);
    c.epochs = get_or(j, "epochs", c.epochs);
    c.batch_size = get_or(j, "batch_size", c.batch_size);
    c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
    c.momentum = get_or(j, "momentum", c.momentum);
    c.lr_milestones = get_or(j, "lr_milestones", c.lr_milestones);
    c.lr_factor = get_or(j, "lr_factor", c.lr_factor);
    c.seed = get_or<uint64_t>(j, "seed", c.seed);
    if (j.contains("distill_stages")) {
        auto v = j.at("distill_stages").get<std::vector<int>>();
        if (v.size() != 3) throw config_error("distill_stages must have 3 entries [n3,n2,n1]");
        for (int b : v)
            if (b != 0 && b != 1) throw config_error("distill_stages entries must be 0 or 1");
        c.distill_stages = {v[0], v[1], v[2]};
    }
    c.theta_balance_weight = get_or(j, "theta_balance_weight", c.theta_balance_weight);
    if (j.contains("online_target"))
        c.online_target = variants::parse_online_target(j.at("online_target").get<std::string>());

    // mode- and schedule-dependent defaults
    bool feature = c.feature_based();
    c.warmup_epochs = j.contains("warmup_epochs")
                          ? j.at("warmup_epochs").get<int>()
                          : (c.schedule.kind == schedules::Kind::rectified_flow ? 0 : 3);
    c.dirac_ratio = j.contains("dirac_ratio") ? j.at("dirac_ratio").get<double>() : (feature ? 0.25 : 1.0);
    c.match_label = j.contains("match_label") ? j.at("match_label").get<bool>() : !feature;
    // fd_delta follows the training step size unless pinned explicitly
    if (j.contains("schedule") && !j.at("schedule").contains("fd_delta") && c.n_train_steps > 0)
        c.schedule.fd_delta = 1.0 / c.n_train_steps;

    const char* env = apply_env_seed ? std::getenv("FLOWKT_SEED") : nullptr;
    if (env) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') throw config_error("FLOWKT_SEED must be an integer");
        c.seed = static_cast<uint64_t>(v);
        j["seed"] = c.seed;
    }

    if (c.n_train_steps < 1 || (c.n_train_steps > 8 && !c.allow_large_n))
        throw config_error("N must be in [1,8] (allow_large_n lifts the cap)");
    if (c.k_eval.empty()) throw config_error("K_eval must not be empty");
    for (int k : c.k_eval)
        if (k < 1) throw config_error("K_eval entries must be >= 1");
    if (c.epochs < 1 || c.batch_size < 1) throw config_error("epochs/batch_size must be positive");
    if (c.learning_rate <= 0.0) throw config_error("learning_rate must be positive");
    if (c.dirac_ratio < 0.0 || c.dirac_ratio > 1.0) throw config_error("dirac_ratio must be in [0,1]");
    if (c.warmup_epochs < 0) throw config_error("warmup_epochs must be >= 0");
    if (c.theta_balance_weight < 0.0) throw config_error("theta_balance_weight must be >= 0");
    if ((c.method == "fmkt_theta" || c.method == "ofmkt") && feature)
        throw config_error(c.method + " is logit-based; distill_stages must be [0,0,0]");

    LoadedConfig out;
    out.cfg = c;
    out.canonical_json = j.dump(2);
    return out;
}

}  // namespace

LoadedConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides,
                          bool apply_env_seed) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("malformed config: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config root must be a JSON object");
    return finish(std::move(j), overrides, apply_env_seed);
}

LoadedConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw io_error("config file not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

}  // namespace fmkt::harness
