// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Optimization loop: Adam over two learning-rate groups (embedding rows low,
// everything else main), step decay schedule, JSONL epoch log, and the
// checkpoint container (JSON header + float32 payloads).

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trident/binio.hpp"
#include "trident/config.hpp"
#include "trident/data.hpp"
#include "trident/model.hpp"

namespace trident {

template <class S>
struct AdamState {
    std::vector<Mat<S>> m, v; // aligned with the optimized-parameter list
    long step = 0;

    void init(const std::vector<Param<S>*>& optimized) {
        m.clear();
        v.clear();
        for (const Param<S>* p : optimized) {
            m.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
            v.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
        }
        step = 0;
    }
};

template <class S>
struct TrainState {
    int epoch_done = 0;
    AdamState<S> adam;
};

/// Parameters the optimizer touches, in registry order (running statistics
/// excluded).
template <class S>
std::vector<Param<S>*> optimized_params(TridentModel<S>& model) {
    std::vector<Param<S>*> out;
    for (Param<S>* p : model.params())
        if (p->group != ParamGroup::norm_state && p->value.size() > 0) out.push_back(p);
    return out;
}

/// One Adam update. Weight decay is classic L2-into-gradient; norm-layer
/// scale/shift parameters are excluded unless configured otherwise.
template <class S>
void adam_step(std::vector<Param<S>*>& opt, AdamState<S>& state, const TrainConfig& tc,
               const RunConfig& rc, double lr_mult) {
    ++state.step;
    const double b1 = tc.adam_beta1, b2 = tc.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    if (tc.clip_gradients) {
        double sq = 0.0;
        for (Param<S>* p : opt) sq += static_cast<double>(p->grad.squaredNorm());
        const double norm = std::sqrt(sq);
        if (norm > tc.clip_norm) {
            const S f = static_cast<S>(tc.clip_norm / norm);
            for (Param<S>* p : opt) p->grad *= f;
        }
    }

    for (std::size_t i = 0; i < opt.size(); ++i) {
        Param<S>& p = *opt[i];
        const double lr =
            (p.group == ParamGroup::embedding ? tc.lr_embeddings : tc.lr_main) * lr_mult;
        Mat<S> g = p.grad;
        if (p.decay || tc.decay_norm_params)
            g += static_cast<S>(tc.weight_decay) * p.value;
        state.m[i] = static_cast<S>(b1) * state.m[i] + static_cast<S>(1.0 - b1) * g;
        state.v[i] = static_cast<S>(b2) * state.v[i] +
                     static_cast<S>(1.0 - b2) * Mat<S>(g.cwiseProduct(g));
        Mat<S> mhat = state.m[i] / static_cast<S>(bc1);
        Mat<S> vhat = state.v[i] / static_cast<S>(bc2);
        p.value -= (static_cast<S>(lr) * mhat.array() /
                    (vhat.array().sqrt() + static_cast<S>(tc.adam_eps)))
                       .matrix();
        p.zero_grad();
    }
}

struct EpochLog {
    int epoch = 0;
    double lr_mult = 1.0;
    LossBreakdown loss; // per-triplet means over the epoch
    int triplets = 0;
};

inline void to_json(json& j, const EpochLog& e) {
    j = json{{"epoch", e.epoch},       {"lr_mult", e.lr_mult}, {"l_ortho", e.loss.ortho},
             {"l_comp", e.loss.comp},  {"l_attr", e.loss.attr}, {"l_obj", e.loss.obj},
             {"total", e.loss.total},  {"triplets", e.triplets}};
}

/// Runs epochs (state.epoch_done, epochs]. Companions are resampled every
/// epoch from per-(seed, epoch) streams, so a resumed run retraces an
/// uninterrupted one exactly.
template <class S>
std::vector<EpochLog> train(TridentModel<S>& model, const DatasetSplit& split,
                            const FeatureStore& store, const RunConfig& rc,
                            TrainState<S>& state,
                            const std::function<void(const EpochLog&)>& on_epoch = nullptr) {
    const TrainConfig& tc = rc.train;
    tc.validate();
    store.check_covers(split);
    if (split.train_idx.empty()) throw schema_error("no train records");

    std::vector<Param<S>*> opt = optimized_params(model);
    if (state.adam.m.size() != opt.size()) state.adam.init(opt);
    for (Param<S>* p : opt) p->zero_grad();

    std::vector<EpochLog> logs;
    for (int epoch = state.epoch_done + 1; epoch <= tc.epochs; ++epoch) {
        const double lr_mult = tc.lr_multiplier(epoch);
        Rng shuffle_rng = Rng::stream(rc.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        Rng companion_rng =
            Rng::stream(rc.seed, "companion/worker0", static_cast<std::uint64_t>(epoch));
        Rng dropout_rng = Rng::stream(rc.seed, "dropout", static_cast<std::uint64_t>(epoch));

        std::vector<std::size_t> order = split.train_idx;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        EpochLog log;
        log.epoch = epoch;
        log.lr_mult = lr_mult;
        double sum_ortho = 0, sum_comp = 0, sum_attr = 0, sum_obj = 0, sum_total = 0;

        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t bend = std::min(order.size(), at + static_cast<std::size_t>(tc.batch_size));
            std::vector<TripletSample> batch;
            batch.reserve(bend - at);
            for (std::size_t i = at; i < bend; ++i) {
                Triplet t = sample_triplet(split, order[i], companion_rng);
                batch.push_back({t.main_idx, t.attr_companion, t.obj_companion});
            }
            auto batch_ids = [&]() {
                std::string ids;
                for (const TripletSample& s : batch)
                    ids += " " + split.records[s.main_idx].image_id;
                return ids;
            };
            ad::Tape<S> tape;
            BatchLossVars<S> losses;
            try {
                losses = model.forward_losses(tape, store, split, batch, true, dropout_rng);
            } catch (const numeric_error& e) {
                throw training_error("numerical failure at epoch " + std::to_string(epoch) +
                                     " (" + e.what() + "); batch mains:" + batch_ids());
            }
            if (!std::isfinite(losses.values.total))
                throw training_error("non-finite loss at epoch " + std::to_string(epoch) +
                                     "; batch mains:" + batch_ids());
            tape.backward(losses.total);
            adam_step(opt, state.adam, tc, rc, lr_mult);

            const double n = static_cast<double>(batch.size());
            sum_ortho += losses.values.ortho * n;
            sum_comp += losses.values.comp * n;
            sum_attr += losses.values.attr * n;
            sum_obj += losses.values.obj * n;
            sum_total += losses.values.total * n;
            log.triplets += static_cast<int>(batch.size());
        }

        const double n = std::max(1, log.triplets);
        log.loss.ortho = sum_ortho / n;
        log.loss.comp = sum_comp / n;
        log.loss.attr = sum_attr / n;
        log.loss.obj = sum_obj / n;
        log.loss.total = sum_total / n;
        logs.push_back(log);
        state.epoch_done = epoch;
        if (on_epoch) on_epoch(log);
    }
    return logs;
}

inline void append_epoch_log(const std::string& path, const EpochLog& log) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw io_error("cannot write train log: " + path);
    out << json(log).dump() << "\n";
}

// ---------------------------------------------------------------------------
// checkpoint container: u32 header length, JSON header (shapes, config hash,
// epoch, adam step, vocabulary), then per parameter the float32 value payload
// and, for optimized parameters, the float32 adam m/v payloads.

inline constexpr char kCheckpointMagic[6] = {'T', 'R', 'C', 'K', '1', '\0'};

namespace detail {

inline json vocab_to_json(const Vocabulary& v) {
    json aux = json::object();
    for (const auto& [comp, ids] : v.aux_map()) {
        std::vector<std::string> words;
        words.reserve(ids.size());
        for (int id : ids) words.push_back(v.word(id));
        aux[comp.key()] = words;
    }
    return json{{"attributes", v.attributes()},
                {"objects", v.objects()},
                {"t", v.t()},
                {"aux", aux}};
}

inline Vocabulary vocab_from_json(const json& j) {
    std::map<Composition, std::vector<std::string>> aux;
    for (auto it = j.at("aux").begin(); it != j.at("aux").end(); ++it) {
        const std::string& key = it.key();
        const auto space = key.find(' ');
        aux[Composition{key.substr(0, space), key.substr(space + 1)}] =
            it.value().get<std::vector<std::string>>();
    }
    return build_vocabulary(j.at("attributes").get<std::vector<std::string>>(),
                            j.at("objects").get<std::vector<std::string>>(), aux,
                            j.at("t").get<int>());
}

} // namespace detail

template <class S>
void save_checkpoint(const std::string& path, TridentModel<S>& model, const TrainState<S>& state,
                     const RunConfig& rc) {
    std::vector<Param<S>*> all = model.params();
    std::vector<Param<S>*> opt = optimized_params(model);

    json params = json::array();
    for (const Param<S>* p : all)
        params.push_back({{"name", p->name},
                          {"rows", p->value.rows()},
                          {"cols", p->value.cols()},
                          {"group", static_cast<int>(p->group)},
                          {"decay", p->decay}});
    json header{{"config_hash", rc.config_hash()},
                {"epoch", state.epoch_done},
                {"adam_step", state.adam.step},
                {"seed", rc.seed},
                {"params", params},
                {"vocab", detail::vocab_to_json(model.vocab)}};
    const std::string hdr = header.dump();

    binio::Writer w(path);
    w.bytes(kCheckpointMagic, 6);
    w.u32(static_cast<std::uint32_t>(hdr.size()));
    w.str(hdr);
    auto write_mat = [&](const Mat<S>& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) w.f32(static_cast<float>(m(i, j)));
    };
    for (const Param<S>* p : all) write_mat(p->value);
    for (std::size_t i = 0; i < opt.size(); ++i) {
        write_mat(state.adam.m[i]);
        write_mat(state.adam.v[i]);
    }
    w.close();
}

/// Restores parameters, optimizer state and epoch into an already-initialized
/// model (same config). Refuses a config-hash mismatch unless forced.
template <class S>
TrainState<S> load_checkpoint(const std::string& path, TridentModel<S>& model,
                              const RunConfig& rc, bool force = false) {
    binio::Reader r(path);
    binio::expect_magic(r, kCheckpointMagic, 6);
    const std::uint32_t hdr_len = r.u32();
    json header;
    try {
        header = json::parse(r.str(hdr_len));
    } catch (const json::exception& e) {
        throw io_error("checkpoint header: " + std::string(e.what()));
    }
    const std::uint64_t hash = header.at("config_hash").get<std::uint64_t>();
    if (hash != rc.config_hash() && !force)
        throw training_error("checkpoint config hash mismatch (use force to override)");

    std::vector<Param<S>*> all = model.params();
    const json& params = header.at("params");
    if (params.size() != all.size())
        throw training_error("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < all.size(); ++i) {
        const json& pj = params[i];
        if (pj.at("name").get<std::string>() != all[i]->name ||
            pj.at("rows").get<Eigen::Index>() != all[i]->value.rows() ||
            pj.at("cols").get<Eigen::Index>() != all[i]->value.cols())
            throw training_error("checkpoint parameter layout mismatch at " + all[i]->name);
    }
    auto read_mat = [&](Mat<S>& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(r.f32());
    };
    for (Param<S>* p : all) {
        read_mat(p->value);
        p->zero_grad();
    }
    TrainState<S> state;
    state.epoch_done = header.at("epoch").get<int>();
    std::vector<Param<S>*> opt = optimized_params(model);
    state.adam.init(opt);
    state.adam.step = header.at("adam_step").get<long>();
    for (std::size_t i = 0; i < opt.size(); ++i) {
        read_mat(state.adam.m[i]);
        read_mat(state.adam.v[i]);
    }
    return state;
}

/// Reads just the vocabulary back out of a checkpoint header.
inline Vocabulary checkpoint_vocabulary(const std::string& path) {
    binio::Reader r(path);
    binio::expect_magic(r, kCheckpointMagic, 6);
    const std::uint32_t hdr_len = r.u32();
    json header = json::parse(r.str(hdr_len));
    return detail::vocab_from_json(header.at("vocab"));
}

} // namespace trident
