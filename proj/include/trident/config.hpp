// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "trident/errors.hpp"
#include "trident/rng.hpp"

namespace trident {

using json = nlohmann::json;

namespace detail {

/// Wraps a JSON object for exact-schema extraction: every key must be
/// consumed, unknown keys are rejected.
class StrictObject {
public:
    StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw config_error(path_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.insert(key);
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw config_error(path_ + "." + key + ": wrong type");
        }
    }

    bool has(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end()) return false;
        seen_.insert(key);
        return true;
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key()))
                throw config_error(path_ + ": unknown key \"" + it.key() + "\"");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace detail

struct ModelConfig {
    // feature geometry
    int q = 6;       // global feature count (condition masks)
    int p = 12;      // local feature count (FAA modules); defaults to 2q
    int n_patches = 576;
    int d_v = 1024;  // cls width = aligned feature width d
    int d_p = 4096;  // connector patch width
    // joint spaces
    int d_m = 4096;     // word embedding width
    int word_dim = 1024; // D_w; must equal d_v
    int comp_dim = 1024; // D_c
    int word_hidden = 2048;   // word MLP hidden width (0 = single affine)
    int weight_hidden = 512;  // share-weight MLP hidden width (0 = single affine)
    // regularization / classifier
    double dropout = 0.3;
    double temperature = 0.05;           // delta
    bool temperature_multiplies = false; // literal "delta * cos" reading
    double alpha = 0.09;                 // attribute smoothing factor
    int t = 3;                           // auxiliary attributes per composition
    double gamma_ortho = 0.1;
    double gamma_comp = 1.0;
    double gamma_attr = 0.5;
    double gamma_obj = 0.5;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    double init_sigma = 0.02;
    // ablation switches
    bool use_faa = true;
    bool use_condition_masks = true;
    bool use_word_expanding = true;
    bool use_attribute_smoothing = true;

    int h() const { return p + q; }

    void validate() const {
        if (p <= 0 || q <= 0) throw config_error("model.p and model.q must be positive");
        if (n_patches <= 0 || d_v <= 0 || d_p <= 0 || d_m <= 0)
            throw config_error("model dimensions must be positive");
        if (word_dim != d_v)
            throw config_error("model.word_dim must equal model.d_v (shared cosine space)");
        if (comp_dim <= 0) throw config_error("model.comp_dim must be positive");
        if (temperature <= 0.0) throw config_error("model.temperature must be > 0");
        if (alpha < 0.0 || alpha >= 1.0) throw config_error("model.alpha must be in [0, 1)");
        if (alpha > 0.0 && use_attribute_smoothing && t < 1)
            throw config_error("model.t must be >= 1 when smoothing is enabled");
        if (dropout < 0.0 || dropout >= 1.0) throw config_error("model.dropout must be in [0, 1)");
        if (word_hidden < 0 || weight_hidden < 0)
            throw config_error("hidden widths must be >= 0");
    }
};

struct TrainConfig {
    int batch_size = 128;
    int epochs = 50;
    double weight_decay = 5e-5;
    double lr_main = 2e-4;
    double lr_embeddings = 1.5e-6;
    std::vector<int> decay_epochs{30, 40};
    double decay_factor = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool clip_gradients = false;
    double clip_norm = 5.0;
    bool decay_norm_params = false; // batch-norm scale/shift excluded from weight decay

    void validate() const {
        if (batch_size <= 0) throw config_error("train.batch_size must be positive");
        if (epochs < 0) throw config_error("train.epochs must be >= 0");
        if (lr_main <= 0.0 || lr_embeddings <= 0.0) throw config_error("learning rates must be positive");
        if (weight_decay < 0.0) throw config_error("train.weight_decay must be >= 0");
        for (int e : decay_epochs)
            if (e < 1 || (epochs > 0 && e >= epochs))
                throw config_error("train.decay_epochs entries must lie in [1, epochs)");
        if (decay_factor <= 0.0 || decay_factor > 1.0)
            throw config_error("train.decay_factor must be in (0, 1]");
    }

    /// Multiplier on both base learning rates during `epoch` (1-indexed).
    double lr_multiplier(int epoch) const {
        double f = 1.0;
        for (int d : decay_epochs)
            if (epoch > d) f *= decay_factor;
        return f;
    }
};

struct SynthConfig {
    int attrs = 6;
    int objects = 6;
    int seen_pairs = 24;
    int unseen_pairs = 12;
    int train_per_pair = 15;
    int val_per_pair = 4;
    int test_per_pair = 5;
    double sigma = 0.1;
    double background_fraction = 0.25;

    void validate() const {
        if (attrs <= 0 || objects <= 0) throw config_error("synth primitive counts must be positive");
        if (seen_pairs <= 0 || unseen_pairs < 0)
            throw config_error("synth.seen_pairs must be positive");
        if (seen_pairs + unseen_pairs > attrs * objects)
            throw config_error("synth: seen + unseen pairs exceed |A|x|O|");
        if (seen_pairs < attrs || seen_pairs < objects)
            throw config_error("synth: seen pairs cannot cover every attribute and object");
        if (sigma < 0.0) throw config_error("synth.sigma must be >= 0");
        if (background_fraction < 0.0 || background_fraction >= 1.0)
            throw config_error("synth.background_fraction must be in [0, 1)");
    }
};

struct RunConfig {
    int schema_version = 1;
    std::uint64_t seed = 17;
    std::string provider = "stub"; // stub | live | none
    int topk = 1;
    std::string manifest;
    std::string features;
    std::string aux_cache;
    std::string embeddings;
    std::string output_dir;
    ModelConfig model;
    TrainConfig train;
    SynthConfig synth;

    void validate() const {
        if (schema_version != 1) throw config_error("unsupported schema_version");
        if (provider != "stub" && provider != "live" && provider != "none")
            throw config_error("provider must be one of: stub, live, none");
        if (topk < 1) throw config_error("topk must be >= 1");
        model.validate();
        train.validate();
        synth.validate();
    }

    /// Hash over everything that shapes parameters or the data trajectory.
    /// Paths and provider selection are deliberately excluded.
    std::uint64_t config_hash() const;
};

inline void to_json(json& j, const ModelConfig& m) {
    j = json{{"q", m.q},
             {"p", m.p},
             {"n_patches", m.n_patches},
             {"d_v", m.d_v},
             {"d_p", m.d_p},
             {"d_m", m.d_m},
             {"word_dim", m.word_dim},
             {"comp_dim", m.comp_dim},
             {"word_hidden", m.word_hidden},
             {"weight_hidden", m.weight_hidden},
             {"dropout", m.dropout},
             {"temperature", m.temperature},
             {"temperature_multiplies", m.temperature_multiplies},
             {"alpha", m.alpha},
             {"t", m.t},
             {"gamma_ortho", m.gamma_ortho},
             {"gamma_comp", m.gamma_comp},
             {"gamma_attr", m.gamma_attr},
             {"gamma_obj", m.gamma_obj},
             {"bn_momentum", m.bn_momentum},
             {"bn_eps", m.bn_eps},
             {"init_sigma", m.init_sigma},
             {"use_faa", m.use_faa},
             {"use_condition_masks", m.use_condition_masks},
             {"use_word_expanding", m.use_word_expanding},
             {"use_attribute_smoothing", m.use_attribute_smoothing}};
}

inline void from_json(const json& j, ModelConfig& m) {
    detail::StrictObject o(j, "model");
    o.get("q", m.q);
    bool p_given = o.has("p");
    if (p_given) o.get("p", m.p);
    else m.p = 2 * m.q;
    o.get("n_patches", m.n_patches);
    o.get("d_v", m.d_v);
    o.get("d_p", m.d_p);
    o.get("d_m", m.d_m);
    o.get("word_dim", m.word_dim);
    o.get("comp_dim", m.comp_dim);
    o.get("word_hidden", m.word_hidden);
    o.get("weight_hidden", m.weight_hidden);
    o.get("dropout", m.dropout);
    o.get("temperature", m.temperature);
    o.get("temperature_multiplies", m.temperature_multiplies);
    o.get("alpha", m.alpha);
    o.get("t", m.t);
    o.get("gamma_ortho", m.gamma_ortho);
    o.get("gamma_comp", m.gamma_comp);
    o.get("gamma_attr", m.gamma_attr);
    o.get("gamma_obj", m.gamma_obj);
    o.get("bn_momentum", m.bn_momentum);
    o.get("bn_eps", m.bn_eps);
    o.get("init_sigma", m.init_sigma);
    o.get("use_faa", m.use_faa);
    o.get("use_condition_masks", m.use_condition_masks);
    o.get("use_word_expanding", m.use_word_expanding);
    o.get("use_attribute_smoothing", m.use_attribute_smoothing);
    o.finish();
}

inline void to_json(json& j, const TrainConfig& t) {
    j = json{{"batch_size", t.batch_size},
             {"epochs", t.epochs},
             {"weight_decay", t.weight_decay},
             {"lr_main", t.lr_main},
             {"lr_embeddings", t.lr_embeddings},
             {"decay_epochs", t.decay_epochs},
             {"decay_factor", t.decay_factor},
             {"adam_beta1", t.adam_beta1},
             {"adam_beta2", t.adam_beta2},
             {"adam_eps", t.adam_eps},
             {"clip_gradients", t.clip_gradients},
             {"clip_norm", t.clip_norm},
             {"decay_norm_params", t.decay_norm_params}};
}

inline void from_json(const json& j, TrainConfig& t) {
    detail::StrictObject o(j, "train");
    o.get("batch_size", t.batch_size);
    o.get("epochs", t.epochs);
    o.get("weight_decay", t.weight_decay);
    o.get("lr_main", t.lr_main);
    o.get("lr_embeddings", t.lr_embeddings);
    o.get("decay_epochs", t.decay_epochs);
    o.get("decay_factor", t.decay_factor);
    o.get("adam_beta1", t.adam_beta1);
    o.get("adam_beta2", t.adam_beta2);
    o.get("adam_eps", t.adam_eps);
    o.get("clip_gradients", t.clip_gradients);
    o.get("clip_norm", t.clip_norm);
    o.get("decay_norm_params", t.decay_norm_params);
    o.finish();
}

inline void to_json(json& j, const SynthConfig& s) {
    j = json{{"attrs", s.attrs},
             {"objects", s.objects},
             {"seen_pairs", s.seen_pairs},
             {"unseen_pairs", s.unseen_pairs},
             {"train_per_pair", s.train_per_pair},
             {"val_per_pair", s.val_per_pair},
             {"test_per_pair", s.test_per_pair},
             {"sigma", s.sigma},
             {"background_fraction", s.background_fraction}};
}

inline void from_json(const json& j, SynthConfig& s) {
    detail::StrictObject o(j, "synth");
    o.get("attrs", s.attrs);
    o.get("objects", s.objects);
    o.get("seen_pairs", s.seen_pairs);
    o.get("unseen_pairs", s.unseen_pairs);
    o.get("train_per_pair", s.train_per_pair);
    o.get("val_per_pair", s.val_per_pair);
    o.get("test_per_pair", s.test_per_pair);
    o.get("sigma", s.sigma);
    o.get("background_fraction", s.background_fraction);
    o.finish();
}

inline void to_json(json& j, const RunConfig& r) {
    j = json{{"schema_version", r.schema_version},
             {"seed", r.seed},
             {"provider", r.provider},
             {"topk", r.topk},
             {"manifest", r.manifest},
             {"features", r.features},
             {"aux_cache", r.aux_cache},
             {"embeddings", r.embeddings},
             {"output_dir", r.output_dir},
             {"model", r.model},
             {"train", r.train},
             {"synth", r.synth}};
}

inline void from_json(const json& j, RunConfig& r) {
    detail::StrictObject o(j, "config");
    o.get("schema_version", r.schema_version);
    o.get("seed", r.seed);
    o.get("provider", r.provider);
    o.get("topk", r.topk);
    o.get("manifest", r.manifest);
    o.get("features", r.features);
    o.get("aux_cache", r.aux_cache);
    o.get("embeddings", r.embeddings);
    o.get("output_dir", r.output_dir);
    if (o.has("model")) r.model = o.raw("model").get<ModelConfig>();
    if (o.has("train")) r.train = o.raw("train").get<TrainConfig>();
    if (o.has("synth")) r.synth = o.raw("synth").get<SynthConfig>();
    o.finish();
}

inline bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return json(a) == json(b);
}
inline bool operator==(const TrainConfig& a, const TrainConfig& b) {
    return json(a) == json(b);
}
inline bool operator==(const SynthConfig& a, const SynthConfig& b) {
    return json(a) == json(b);
}
inline bool operator==(const RunConfig& a, const RunConfig& b) {
    return json(a) == json(b);
}

inline std::uint64_t RunConfig::config_hash() const {
    json j{{"seed", seed}, {"model", model}, {"train", train}};
    return fnv1a64(j.dump());
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("config " + path + ": " + e.what());
    }
    RunConfig cfg = j.get<RunConfig>();
    cfg.validate();
    return cfg;
}

inline void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write config: " + path);
    out << json(cfg).dump(2) << "\n";
}

} // namespace trident
