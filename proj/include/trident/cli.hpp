// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Batch CLI: synth, gen-aux, embed-words, train, eval, retrieve. Paths may
// come from the config document; flags override. Exit codes: 0 success,
// 1 validation error (config/schema/missing files), 2 runtime error.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trident/aux_gen.hpp"
#include "trident/config.hpp"
#include "trident/data.hpp"
#include "trident/embeddings.hpp"
#include "trident/eval.hpp"
#include "trident/model.hpp"
#include "trident/providers_http.hpp"
#include "trident/train.hpp"

namespace trident::cli {

namespace fs = std::filesystem;
using Scalar = float; // pipeline lane; float32 checkpoints round-trip exactly

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_dir, manifest, features, aux, embeddings, provider, phase = "test";
    int topk = 0;
};

namespace detail {

inline RunConfig resolve(const CommonArgs& a) {
    RunConfig cfg = a.config_path.empty() ? RunConfig{} : load_run_config(a.config_path);
    if (a.seed_given) cfg.seed = a.seed;
    if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
    if (!a.manifest.empty()) cfg.manifest = a.manifest;
    if (!a.features.empty()) cfg.features = a.features;
    if (!a.aux.empty()) cfg.aux_cache = a.aux;
    if (!a.embeddings.empty()) cfg.embeddings = a.embeddings;
    if (!a.provider.empty()) cfg.provider = a.provider;
    if (a.topk > 0) cfg.topk = a.topk;
    cfg.validate();
    return cfg;
}

inline std::string require(const std::string& v, const char* what) {
    if (v.empty()) throw config_error(std::string("missing required path: ") + what);
    return v;
}

inline std::unique_ptr<TextProvider> make_text_provider(const RunConfig& cfg) {
    if (cfg.provider == "stub") return std::make_unique<StubTextProvider>(cfg.seed);
    if (cfg.provider == "live")
        return std::make_unique<HttpTextProvider>(HttpProviderConfig::from_env());
    return std::make_unique<NullTextProvider>();
}

inline std::unique_ptr<EmbeddingProvider> make_embedding_provider(const RunConfig& cfg) {
    if (cfg.provider == "stub")
        return std::make_unique<StubEmbeddingProvider>(cfg.seed, cfg.model.d_m);
    if (cfg.provider == "live")
        return std::make_unique<HttpEmbeddingProvider>(HttpProviderConfig::from_env(),
                                                       cfg.model.d_m);
    throw config_error("embed-words needs provider stub or live");
}

inline std::vector<Composition> seen_compositions(const DatasetSplit& split) {
    return split.seen_pairs;
}

/// Vocabulary over the dataset universe plus cached auxiliary words. The aux
/// cache is mandatory only when attribute smoothing is active.
inline Vocabulary build_dataset_vocabulary(const DatasetSplit& split, const RunConfig& cfg,
                                           const AuxCache* cache) {
    std::map<Composition, std::vector<std::string>> aux_map;
    const bool need_aux = cfg.model.use_attribute_smoothing && cfg.model.alpha > 0.0;
    if (cache) {
        for (const Composition& c : split.seen_pairs) {
            if (cache->has(c)) aux_map[c] = cache->get(c);
            else if (need_aux)
                throw cache_miss_error("aux cache has no entry for seen composition \"" +
                                       c.key() + "\"; run gen-aux first");
        }
    } else if (need_aux) {
        throw cache_miss_error("attribute smoothing is enabled but no aux cache was given");
    }
    return build_vocabulary(split.attribute_universe(), split.object_universe(), aux_map,
                            cfg.model.t);
}

inline SyntheticSpec synth_spec(const RunConfig& cfg) {
    SyntheticSpec s;
    s.attrs = cfg.synth.attrs;
    s.objects = cfg.synth.objects;
    s.seen_pairs = cfg.synth.seen_pairs;
    s.unseen_pairs = cfg.synth.unseen_pairs;
    s.train_per_pair = cfg.synth.train_per_pair;
    s.val_per_pair = cfg.synth.val_per_pair;
    s.test_per_pair = cfg.synth.test_per_pair;
    s.n_patches = cfg.model.n_patches;
    s.d_v = cfg.model.d_v;
    s.d_p = cfg.model.d_p;
    s.sigma = cfg.synth.sigma;
    s.background_fraction = cfg.synth.background_fraction;
    s.seed = cfg.seed;
    return s;
}

struct LoadedRun {
    RunConfig cfg;
    DatasetSplit split;
    FeatureStore store;
    Vocabulary vocab;
    TridentModel<Scalar> model;
};

/// Shared eval/retrieve setup: dataset + model restored from a checkpoint.
inline LoadedRun load_for_inference(const CommonArgs& args, const std::string& checkpoint) {
    LoadedRun run;
    run.cfg = resolve(args);
    if (!fs::exists(checkpoint)) throw io_error("checkpoint not found: " + checkpoint);
    run.split = load_manifest(require(run.cfg.manifest, "--manifest"));
    run.store = FeatureStore::load(require(run.cfg.features, "--features"));
    run.store.check_covers(run.split);
    run.vocab = checkpoint_vocabulary(checkpoint);
    EmbeddingTable<Scalar> table;
    table.d_m = run.cfg.model.d_m;
    table.rows = Mat<Scalar>::Zero(run.vocab.size(), table.d_m);
    run.model.init(run.cfg.model, run.vocab, table, run.cfg.seed);
    load_checkpoint(checkpoint, run.model, run.cfg);
    return run;
}

inline Phase parse_phase_arg(const std::string& s) {
    if (s == "val") return Phase::val;
    if (s == "test") return Phase::test;
    throw config_error("--phase must be val or test");
}

/// Score matrix of one evaluation phase.
inline ScoreMatrix phase_scores(LoadedRun& run, Phase phase) {
    return run.model.score_phase(run.store, run.split, phase);
}

} // namespace detail

// ---------------------------------------------------------------------------
// subcommands

inline int cmd_synth(const CommonArgs& args) {
    RunConfig cfg = detail::resolve(args);
    const std::string dir = detail::require(cfg.output_dir, "--out");
    fs::create_directories(dir);
    SyntheticData data = generate_synthetic(detail::synth_spec(cfg));
    save_manifest(data.split, dir + "/manifest.jsonl");
    save_pairs(data.split.val_pairs, dir + "/val_pairs.json");
    save_pairs(data.split.test_pairs, dir + "/test_pairs.json");
    data.store.save(dir + "/features.trif");
    std::cout << "synth: " << data.split.records.size() << " records, "
              << data.split.seen_pairs.size() << " seen pairs -> " << dir << "\n";
    return 0;
}

inline int cmd_gen_aux(const CommonArgs& args) {
    RunConfig cfg = detail::resolve(args);
    DatasetSplit split = load_manifest(detail::require(cfg.manifest, "--manifest"));
    const std::string out = detail::require(cfg.aux_cache, "--aux");
    AuxCache cache;
    if (fs::exists(out)) cache = AuxCache::load(out, cfg.model.t);
    auto provider = detail::make_text_provider(cfg);
    const int added =
        generate_all_aux(*provider, detail::seen_compositions(split), cfg.model.t, cache);
    cache.save(out);
    std::cout << "gen-aux: " << added << " new entries, " << cache.size() << " total, "
              << provider->calls() << " provider call(s) -> " << out << "\n";
    return 0;
}

inline int cmd_embed_words(const CommonArgs& args) {
    RunConfig cfg = detail::resolve(args);
    DatasetSplit split = load_manifest(detail::require(cfg.manifest, "--manifest"));
    AuxCache cache;
    const bool have_cache = !cfg.aux_cache.empty() && fs::exists(cfg.aux_cache);
    if (have_cache) cache = AuxCache::load(cfg.aux_cache, cfg.model.t);
    Vocabulary vocab =
        detail::build_dataset_vocabulary(split, cfg, have_cache ? &cache : nullptr);
    auto provider = detail::make_embedding_provider(cfg);
    EmbeddingTable<Scalar> table = import_embeddings<Scalar>(*provider, vocab);
    const std::string out = detail::require(cfg.embeddings, "--embeddings");
    save_embeddings(out, vocab, table);
    std::cout << "embed-words: " << vocab.size() << " words x " << table.d_m << " -> " << out
              << "\n";
    return 0;
}

inline int cmd_train(const CommonArgs& args) {
    RunConfig cfg = detail::resolve(args);
    DatasetSplit split = load_manifest(detail::require(cfg.manifest, "--manifest"));
    FeatureStore store = FeatureStore::load(detail::require(cfg.features, "--features"));
    store.check_covers(split);
    if (store.n != cfg.model.n_patches || store.d_v != cfg.model.d_v ||
        store.d_p != cfg.model.d_p)
        throw config_error("feature store geometry does not match the model config");

    AuxCache cache;
    const bool have_cache = !cfg.aux_cache.empty() && fs::exists(cfg.aux_cache);
    if (have_cache) cache = AuxCache::load(cfg.aux_cache, cfg.model.t);
    else if (!cfg.aux_cache.empty())
        throw io_error("aux cache not found: " + cfg.aux_cache);
    Vocabulary vocab =
        detail::build_dataset_vocabulary(split, cfg, have_cache ? &cache : nullptr);
    EmbeddingTable<Scalar> table =
        load_embeddings<Scalar>(detail::require(cfg.embeddings, "--embeddings"), vocab);

    const std::string dir = detail::require(cfg.output_dir, "--out");
    fs::create_directories(dir);
    const std::string log_path = dir + "/train_log.jsonl";
    std::ofstream(log_path, std::ios::trunc).close();

    TridentModel<Scalar> model;
    model.init(cfg.model, vocab, table, cfg.seed);
    TrainState<Scalar> state;

    // model selection: validation AUC, when a validation phase exists
    const bool with_val = !split.val_idx.empty() && !split.val_pairs.empty();
    double best_val_auc = -1.0;
    int best_epoch = 0;
    train(model, split, store, cfg, state, [&](const EpochLog& log) {
        json line = log;
        if (with_val) {
            MetricsReport rep =
                bias_sweep(model.score_phase(store, split, Phase::val), cfg.topk);
            line["val_auc"] = rep.auc;
            if (rep.auc > best_val_auc) {
                best_val_auc = rep.auc;
                best_epoch = log.epoch;
                save_checkpoint(dir + "/checkpoint_best.trck", model, state, cfg);
            }
        }
        std::ofstream out(log_path, std::ios::app);
        if (!out) throw io_error("cannot write train log: " + log_path);
        out << line.dump() << "\n";
    });
    save_checkpoint(dir + "/checkpoint.trck", model, state, cfg);
    std::cout << "train: " << state.epoch_done << " epoch(s) -> " << dir << "/checkpoint.trck";
    if (with_val && best_epoch > 0)
        std::cout << " (best val AUC " << best_val_auc << " at epoch " << best_epoch
                  << " -> checkpoint_best.trck)";
    std::cout << "\n";
    return 0;
}

inline int cmd_eval(const CommonArgs& args, const std::string& checkpoint) {
    detail::LoadedRun run = detail::load_for_inference(args, checkpoint);
    const Phase phase = detail::parse_phase_arg(args.phase);
    ScoreMatrix sm = detail::phase_scores(run, phase);
    MetricsReport rep = bias_sweep(sm, run.cfg.topk);
    json j = rep;
    auto [raw_seen, raw_unseen] = raw_topk_accuracy(sm, run.cfg.topk);
    j["raw_seen"] = 100.0 * raw_seen;
    j["raw_unseen"] = 100.0 * raw_unseen;
    const std::string text = j.dump(2);
    if (!run.cfg.output_dir.empty()) {
        fs::create_directories(run.cfg.output_dir);
        std::ofstream out(run.cfg.output_dir + "/report_" + args.phase + ".json");
        out << text << "\n";
    }
    std::cout << text << "\n";
    return 0;
}

inline int cmd_retrieve(const CommonArgs& args, const std::string& checkpoint,
                        const std::string& direction, const std::string& query) {
    detail::LoadedRun run = detail::load_for_inference(args, checkpoint);
    const Phase phase = detail::parse_phase_arg(args.phase);
    const auto& pairs = run.split.phase_pairs(phase);
    std::vector<Composition> comps;
    comps.reserve(pairs.size());
    for (const auto& tp : pairs) comps.push_back(tp.comp);
    const int top_n = args.topk > 0 ? args.topk : 5;

    json out;
    if (direction == "i2t") {
        if (!run.store.contains(query)) throw io_error("image id not found: " + query);
        Eigen::MatrixXd f =
            run.model.fcomp_matrix(run.store, {query}).template cast<double>();
        Eigen::MatrixXd cand = run.model.pair_embedding_matrix(comps).template cast<double>();
        Eigen::MatrixXd s = score_candidates(f, cand);
        std::vector<int> ranked = retrieve_ranked(f.row(0), cand, top_n);
        out = json::array();
        for (std::size_t r = 0; r < ranked.size(); ++r)
            out.push_back({{"rank", r + 1},
                           {"attribute", comps[static_cast<std::size_t>(ranked[r])].attribute},
                           {"object", comps[static_cast<std::size_t>(ranked[r])].object},
                           {"score", s(0, ranked[r])}});
    } else if (direction == "t2i") {
        const auto space = query.find(' ');
        if (space == std::string::npos)
            throw config_error("t2i query must be \"attribute object\"");
        Composition c{query.substr(0, space), query.substr(space + 1)};
        Eigen::MatrixXd e = run.model.pair_embedding_matrix({c}).template cast<double>();
        const auto& idxs = run.split.phase_indices(phase);
        std::vector<std::string> ids;
        ids.reserve(idxs.size());
        for (std::size_t i : idxs) ids.push_back(run.split.records[i].image_id);
        Eigen::MatrixXd f = run.model.fcomp_matrix(run.store, ids).template cast<double>();
        Eigen::MatrixXd s = score_candidates(e, f);
        std::vector<int> ranked = retrieve_ranked(e.row(0), f, top_n);
        out = json::array();
        for (std::size_t r = 0; r < ranked.size(); ++r)
            out.push_back({{"rank", r + 1},
                           {"image_id", ids[static_cast<std::size_t>(ranked[r])]},
                           {"score", s(0, ranked[r])}});
    } else {
        throw config_error("retrieve direction must be i2t or t2i");
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

inline void add_common(CLI::App* sub, CommonArgs& a) {
    sub->add_option("--config", a.config_path, "JSON config document");
    auto* seed = sub->add_option("--seed", a.seed, "override the config seed");
    seed->each([&a](const std::string&) { a.seed_given = true; });
    sub->add_option("--out", a.out_dir, "output directory");
    sub->add_option("--manifest", a.manifest, "dataset manifest (JSON Lines)");
    sub->add_option("--features", a.features, "TRIF1 feature store");
    sub->add_option("--aux", a.aux, "auxiliary-attribute cache (JSON)");
    sub->add_option("--embeddings", a.embeddings, "TRIE1 word-embedding file");
    sub->add_option("--provider", a.provider, "text/embedding provider")
        ->check(CLI::IsMember({"stub", "live"}));
    sub->add_option("--phase", a.phase, "evaluation phase")
        ->check(CLI::IsMember({"val", "test"}));
    sub->add_option("--topk", a.topk, "top-k for metrics / retrieval depth");
}

inline int dispatch(std::vector<std::string> argv) {
    CLI::App app{"trident: compositional zero-shot learning pipeline"};
    app.require_subcommand(1);

    CommonArgs a_synth, a_gen, a_embed, a_train, a_eval, a_retr;
    std::string eval_ckpt, retr_ckpt, retr_dir, retr_query;

    add_common(app.add_subcommand("synth", "generate a synthetic dataset"), a_synth);
    add_common(app.add_subcommand("gen-aux", "generate auxiliary attributes"), a_gen);
    add_common(app.add_subcommand("embed-words", "import word embeddings"), a_embed);
    add_common(app.add_subcommand("train", "train a model"), a_train);
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(ev, a_eval);
    ev->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
    auto* rt = app.add_subcommand("retrieve", "image<->text retrieval");
    add_common(rt, a_retr);
    rt->add_option("checkpoint", retr_ckpt, "checkpoint file")->required();
    rt->add_option("direction", retr_dir, "i2t or t2i")->required();
    rt->add_option("query", retr_query, "image id (i2t) or \"attribute object\" (t2i)")
        ->required();

    std::reverse(argv.begin(), argv.end()); // CLI11 consumes args reversed
    try {
        app.parse(argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (app.got_subcommand("synth")) return cmd_synth(a_synth);
        if (app.got_subcommand("gen-aux")) return cmd_gen_aux(a_gen);
        if (app.got_subcommand("embed-words")) return cmd_embed_words(a_embed);
        if (app.got_subcommand("train")) return cmd_train(a_train);
        if (app.got_subcommand("eval")) return cmd_eval(a_eval, eval_ckpt);
        if (app.got_subcommand("retrieve"))
            return cmd_retrieve(a_retr, retr_ckpt, retr_dir, retr_query);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const schema_error& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return 1;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const cache_miss_error& e) {
        std::cerr << "cache miss: " << e.what() << "\n";
        return 1;
    } catch (const parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const provider_error& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace trident::cli
