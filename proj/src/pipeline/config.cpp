// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/pipeline/config.hpp"

#include <fstream>
#include <set>

namespace rr {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
    }

    template <typename V>
    void read(const char* key, V& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            out = j_.at(key).get<V>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    template <typename E, typename Parse>
    void read_enum(const char* key, E& out, Parse parse) {
        std::string s;
        if (!j_.contains(key)) return;
        read(key, s);
        try {
            out = parse(s);
        } catch (const ConfigError& e) {
            throw ConfigError(where(key) + ": " + e.what());
        } catch (const Error& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    const json* object(const char* key) {
        if (!j_.contains(key)) return nullptr;
        seen_.insert(key);
        return &j_.at(key);
    }

    std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown config key '" + child(k.c_str()) + "'");
    }

private:
    std::string where(const char* key = nullptr) const {
        if (key) return "config key '" + child(key) + "'";
        return path_.empty() ? "config root" : "config key '" + path_ + "'";
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_schedule(const json& j, const std::string& path, ScheduleConfig& c) {
    Fields f(j, path);
    f.read("timesteps", c.timesteps);
    f.read("beta_start", c.beta_start);
    f.read("beta_end", c.beta_end);
    f.finish();
}

void read_optimizer(const json& j, const std::string& path, OptimizerConfig& c) {
    Fields f(j, path);
    f.read("learning_rate", c.learning_rate);
    f.read("batch_size", c.batch_size);
    f.read("epochs", c.epochs);
    f.finish();
}

void read_extractor(const json& j, const std::string& path, ExtractorConfig& c) {
    Fields f(j, path);
    f.read_enum("kind", c.kind, extractor_from_string);
    f.read("width", c.width);
    f.read("tap_stage", c.tap_stage);
    f.read("reduced", c.reduced);
    f.read("embed_dim", c.attention.embed_dim);
    f.read("heads", c.attention.heads);
    f.read("freeze", c.freeze);
    f.read("joint_sources", c.joint_sources);
    f.finish();
}

void read_restore(const json& j, const std::string& path, RestoreConfig& c) {
    Fields f(j, path);
    f.read("t_start", c.t_start);
    f.read("stochastic", c.stochastic);
    std::vector<std::string> labels;
    if (j.contains("target_labels")) {
        f.read("target_labels", labels);
        c.target_labels.clear();
        for (const auto& name : labels) {
            try {
                c.target_labels.push_back(label_from_name(name));
            } catch (const Error& e) {
                throw ConfigError("config key '" + f.child("target_labels") + "': " + e.what());
            }
        }
    }
    f.finish();
}

void read_restorer(const json& j, const std::string& path, RestorerConfig& c) {
    Fields f(j, path);
    f.read("image_size", c.image_size);
    if (const auto* s = f.object("schedule")) read_schedule(*s, f.child("schedule"), c.schedule);
    f.read_enum("backbone", c.backbone, backbone_from_string);
    f.read_enum("parameterization", c.parameterization, parameterization_from_string);
    f.read("width", c.width);
    f.read("time_dim", c.time_dim);
    f.read("vae_channels", c.vae_channels);
    f.read("latent_dim", c.latent_dim);
    f.read("kl_weight", c.kl_weight);
    f.read("pairing", c.pairing);
    f.read("min_snr_gamma", c.min_snr_gamma);
    if (const auto* fu = f.object("fusion")) {
        Fields ff(*fu, f.child("fusion"));
        ff.read_enum("strategy", c.fusion, FusionStrategy::from_key);
        ff.read_enum("condition", c.condition_mode, condition_mode_from_string);
        ff.finish();
    }
    if (const auto* e = f.object("extractor")) read_extractor(*e, f.child("extractor"), c.extractor);
    if (const auto* o = f.object("optimizer")) read_optimizer(*o, f.child("optimizer"), c.optimizer);
    if (const auto* r = f.object("restore")) read_restore(*r, f.child("restore"), c.restore);
    f.read("seed", c.seed);
    f.finish();
    c.extractor.input_size = c.image_size;
}

json restorer_json(const RestorerConfig& c, bool with_seed) {
    std::vector<std::string> labels;
    for (Label l : c.restore.target_labels) labels.emplace_back(kLabelNames[static_cast<std::size_t>(l)]);
    json j = {
        {"image_size", c.image_size},
        {"schedule",
         {{"timesteps", c.schedule.timesteps}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end}}},
        {"backbone", to_string(c.backbone)},
        {"parameterization", to_string(c.parameterization)},
        {"width", c.width},
        {"time_dim", c.time_dim},
        {"vae_channels", c.vae_channels},
        {"latent_dim", c.latent_dim},
        {"kl_weight", c.kl_weight},
        {"pairing", c.pairing},
        {"min_snr_gamma", c.min_snr_gamma},
        {"fusion", {{"strategy", c.fusion.key()}, {"condition", to_string(c.condition_mode)}}},
        {"extractor",
         {{"kind", to_string(c.extractor.kind)},
          {"width", c.extractor.width},
          {"tap_stage", c.extractor.tap_stage},
          {"reduced", c.extractor.reduced},
          {"embed_dim", c.extractor.attention.embed_dim},
          {"heads", c.extractor.attention.heads},
          {"freeze", c.extractor.freeze},
          {"joint_sources", c.extractor.joint_sources}}},
        {"optimizer",
         {{"learning_rate", c.optimizer.learning_rate},
          {"batch_size", c.optimizer.batch_size},
          {"epochs", c.optimizer.epochs}}},
        {"restore", {{"t_start", c.restore.t_start}, {"stochastic", c.restore.stochastic}, {"target_labels", labels}}},
    };
    if (with_seed) j["seed"] = c.seed;
    return j;
}

}  // namespace

std::string to_string(ConditionMode m) { return m == ConditionMode::add ? "add" : "concat"; }

ConditionMode condition_mode_from_string(const std::string& s) {
    if (s == "add") return ConditionMode::add;
    if (s == "concat") return ConditionMode::concat;
    throw ConfigError("unknown condition mode '" + s + "' (expected add or concat)");
}

DenoiserConfig RestorerConfig::denoiser_config() const {
    DenoiserConfig d;
    d.backbone = backbone;
    d.image_size = image_size;
    d.in_channels = condition_mode == ConditionMode::concat ? 6 : 3;
    d.out_channels = 3;
    d.width = width;
    d.time_dim = time_dim;
    d.vae_channels = vae_channels;
    d.latent_dim = latent_dim;
    return d;
}

void RestorerConfig::validate() const {
    require<ConfigError>(image_size >= 8 && image_size % 8 == 0, "restorer.image_size must be a multiple of 8, got ",
                         image_size);
    require<ConfigError>(schedule.timesteps >= 1, "restorer.schedule.timesteps must be >= 1");
    require<ConfigError>(schedule.beta_start > 0 && schedule.beta_start <= schedule.beta_end && schedule.beta_end < 1,
                         "restorer.schedule needs 0 < beta_start <= beta_end < 1");
    denoiser_config().validate();
    require<ConfigError>(kl_weight >= 0, "restorer.kl_weight must be >= 0");
    require<ConfigError>(pairing == "clean" || pairing == "degraded",
                         "restorer.pairing must be 'clean' or 'degraded', got '", pairing, "'");
    require<ConfigError>(min_snr_gamma >= 0, "restorer.min_snr_gamma must be >= 0");
    require<ConfigError>(backbone != Backbone::vae || parameterization == Parameterization::x0,
                         "the vae backbone has a sigmoid output and needs parameterization x0");
    extractor.validate();
    require<ConfigError>(extractor.input_size == image_size, "extractor input size must equal restorer.image_size");
    require<ConfigError>(optimizer.learning_rate > 0 && optimizer.batch_size >= 1 && optimizer.epochs >= 1,
                         "restorer.optimizer needs learning_rate > 0, batch_size >= 1, epochs >= 1");
    require<ConfigError>(restore.t_start >= 1 && restore.t_start <= schedule.timesteps,
                         "restorer.restore.t_start must lie in [1, timesteps]");
    require<ConfigError>(!restore.target_labels.empty(), "restorer.restore.target_labels must not be empty");
    require<ConfigError>(extractor.freeze || extractor.joint_sources >= 1, "extractor.joint_sources must be >= 1");
}

GeneratorConfig DataConfig::generator_config() const {
    GeneratorConfig g;
    g.degraded_fraction = degraded_fraction;
    if (categories == "separable_blur") g.categories = GeneratorConfig::separable_blur_categories();
    return g;
}

void DataConfig::validate() const {
    require<ConfigError>(count >= 1, "data.count must be >= 1");
    require<ConfigError>(image_size >= 16, "data.image_size must be >= 16");
    require<ConfigError>(degraded_fraction >= 0 && degraded_fraction <= 1, "data.degraded_fraction must lie in [0, 1]");
    require<ConfigError>(categories == "default" || categories == "separable_blur",
                         "data.categories must be 'default' or 'separable_blur'");
    require<ConfigError>(split.train >= 0 && split.val >= 0 && split.test >= 0 && split.train + split.val + split.test > 0,
                         "data.split ratios must be non-negative and not all zero");
}

ExperimentConfig::ExperimentConfig() {
    readability.input_size = 64;
    readability.learning_rate = 1e-3;
    readability.width = 16;
    readability.epochs = 10;
}

void ExperimentConfig::validate() const {
    data.validate();
    try {
        readability.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("readability: ") + e.what());
    }
    restorer.validate();
    require<ConfigError>(compare.count >= 10 && compare.image_size >= 32 && compare.image_size % 8 == 0,
                         "compare needs count >= 10 and an image_size that is a multiple of 8 (>= 32)");
    require<ConfigError>(compare.epochs >= 1 && compare.width >= 4 && compare.extractor_width >= 8 &&
                             compare.extractor_width % 8 == 0 && compare.max_eval >= 1,
                         "invalid compare settings");
    require<ConfigError>(compare.heads >= 1 && compare.embed_dim % compare.heads == 0 &&
                             compare.embed_dim <= 4 * compare.extractor_width,
                         "compare.embed_dim must be divisible by compare.heads and <= 4 * compare.extractor_width");
}

RestorerConfig restorer_config_from_json(const json& j) {
    RestorerConfig c;
    read_restorer(j, "restorer", c);
    c.validate();
    return c;
}

json to_json(const RestorerConfig& c) { return restorer_json(c, true); }

ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig c;
    Fields f(j, "");
    f.read("seed", c.seed);
    c.restorer.seed = c.seed;
    if (const auto* d = f.object("data")) {
        Fields fd(*d, "data");
        fd.read("count", c.data.count);
        fd.read("image_size", c.data.image_size);
        fd.read("degraded_fraction", c.data.degraded_fraction);
        fd.read("categories", c.data.categories);
        if (const auto* s = fd.object("split")) {
            Fields fs(*s, "data.split");
            fs.read("train", c.data.split.train);
            fs.read("val", c.data.split.val);
            fs.read("test", c.data.split.test);
            fs.finish();
        }
        fd.finish();
    }
    if (const auto* r = f.object("readability")) {
        Fields fr(*r, "readability");
        fr.read("input_size", c.readability.input_size);
        fr.read_enum("base", c.readability.base, classifier_base_from_string);
        fr.read("learning_rate", c.readability.learning_rate);
        fr.read("optimizer", c.readability.optimizer);
        fr.read("epochs", c.readability.epochs);
        fr.read("batch_size", c.readability.batch_size);
        fr.read("width", c.readability.width);
        fr.finish();
    }
    if (const auto* r = f.object("restorer")) {
        read_restorer(*r, "restorer", c.restorer);
        if (r->contains("seed")) throw ConfigError("set the seed at the top level, not in 'restorer'");
        c.restorer.seed = c.seed;
    }
    if (const auto* k = f.object("compare")) {
        Fields fc(*k, "compare");
        fc.read("count", c.compare.count);
        fc.read("image_size", c.compare.image_size);
        fc.read("epochs", c.compare.epochs);
        fc.read("width", c.compare.width);
        fc.read("extractor_width", c.compare.extractor_width);
        fc.read("embed_dim", c.compare.embed_dim);
        fc.read("heads", c.compare.heads);
        fc.read("max_eval", c.compare.max_eval);
        fc.finish();
    }
    f.finish();
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

json to_json(const ExperimentConfig& c) {
    return {
        {"seed", c.seed},
        {"data",
         {{"count", c.data.count},
          {"image_size", c.data.image_size},
          {"degraded_fraction", c.data.degraded_fraction},
          {"categories", c.data.categories},
          {"split", {{"train", c.data.split.train}, {"val", c.data.split.val}, {"test", c.data.split.test}}}}},
        {"readability",
         {{"input_size", c.readability.input_size},
          {"base", to_string(c.readability.base)},
          {"learning_rate", c.readability.learning_rate},
          {"optimizer", c.readability.optimizer},
          {"epochs", c.readability.epochs},
          {"batch_size", c.readability.batch_size},
          {"width", c.readability.width}}},
        {"restorer", restorer_json(c.restorer, false)},
        {"compare",
         {{"count", c.compare.count},
          {"image_size", c.compare.image_size},
          {"epochs", c.compare.epochs},
          {"width", c.compare.width},
          {"extractor_width", c.compare.extractor_width},
          {"embed_dim", c.compare.embed_dim},
          {"heads", c.compare.heads},
          {"max_eval", c.compare.max_eval}}},
    };
}

}  // namespace rr
