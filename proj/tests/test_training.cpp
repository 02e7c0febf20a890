// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "trident/aux_gen.hpp"
#include "trident/train.hpp"

using namespace trident;

namespace {

/// Small but non-trivial synthetic run shared across the training tests.
RunConfig small_run_config(int epochs, std::uint64_t seed = 33) {
    RunConfig rc;
    rc.seed = seed;
    rc.model.q = 1;
    rc.model.p = 2;
    rc.model.n_patches = 8;
    rc.model.d_v = 16;
    rc.model.d_p = 12;
    rc.model.d_m = 24;
    rc.model.word_dim = 16;
    rc.model.comp_dim = 16;
    rc.model.word_hidden = 24;
    rc.model.weight_hidden = 24;
    rc.model.alpha = 0.09;
    rc.model.t = 3;
    rc.train.batch_size = 64;
    rc.train.epochs = epochs;
    rc.train.decay_epochs = {};
    rc.synth.attrs = 4;
    rc.synth.objects = 4;
    rc.synth.seen_pairs = 10;
    rc.synth.unseen_pairs = 4;
    rc.synth.train_per_pair = 6;
    rc.synth.val_per_pair = 2;
    rc.synth.test_per_pair = 2;
    return rc;
}

template <class S>
struct World {
    SyntheticData data;
    Vocabulary vocab;
    TridentModel<S> model;
    RunConfig rc;
};

template <class S>
World<S> make_world(int epochs, std::uint64_t seed = 33) {
    World<S> w;
    w.rc = small_run_config(epochs, seed);
    SyntheticSpec spec;
    spec.attrs = w.rc.synth.attrs;
    spec.objects = w.rc.synth.objects;
    spec.seen_pairs = w.rc.synth.seen_pairs;
    spec.unseen_pairs = w.rc.synth.unseen_pairs;
    spec.train_per_pair = w.rc.synth.train_per_pair;
    spec.val_per_pair = w.rc.synth.val_per_pair;
    spec.test_per_pair = w.rc.synth.test_per_pair;
    spec.n_patches = w.rc.model.n_patches;
    spec.d_v = w.rc.model.d_v;
    spec.d_p = w.rc.model.d_p;
    spec.seed = seed;
    w.data = generate_synthetic(spec);

    StubTextProvider text(seed);
    AuxCache cache;
    generate_all_aux(text, w.data.split.seen_pairs, w.rc.model.t, cache);
    std::map<Composition, std::vector<std::string>> aux;
    for (const auto& c : w.data.split.seen_pairs) aux[c] = cache.get(c);
    w.vocab = build_vocabulary(w.data.split.attribute_universe(),
                               w.data.split.object_universe(), aux, w.rc.model.t);
    StubEmbeddingProvider emb(seed, w.rc.model.d_m);
    auto table = import_embeddings<S>(emb, w.vocab);
    w.model.init(w.rc.model, w.vocab, table, seed);
    return w;
}

} // namespace

TEST_CASE("learning-rate schedule factors") {
    TrainConfig tc; // defaults: decay by 10 at epochs 30 and 40
    REQUIRE(tc.lr_multiplier(1) == 1.0);
    REQUIRE(tc.lr_multiplier(30) == 1.0);
    REQUIRE(tc.lr_multiplier(31) == Catch::Approx(0.1));
    REQUIRE(tc.lr_multiplier(40) == Catch::Approx(0.1));
    REQUIRE(tc.lr_multiplier(41) == Catch::Approx(0.01));
    REQUIRE(tc.lr_multiplier(50) == Catch::Approx(0.01));
}

TEST_CASE("zero epochs leave parameters untouched") {
    auto w = make_world<float>(0);
    std::vector<Mat<float>> before;
    for (Param<float>* p : w.model.params()) before.push_back(p->value);
    TrainState<float> state;
    auto logs = train(w.model, w.data.split, w.data.store, w.rc, state);
    REQUIRE(logs.empty());
    auto params = w.model.params();
    for (std::size_t i = 0; i < params.size(); ++i) REQUIRE(params[i]->value == before[i]);
}

TEST_CASE("same seed reproduces the first-epoch loss bit for bit") {
    auto w1 = make_world<float>(1, 77);
    auto w2 = make_world<float>(1, 77);
    TrainState<float> s1, s2;
    auto l1 = train(w1.model, w1.data.split, w1.data.store, w1.rc, s1);
    auto l2 = train(w2.model, w2.data.split, w2.data.store, w2.rc, s2);
    REQUIRE(l1.size() == 1);
    REQUIRE(l1[0].loss.total == l2[0].loss.total);
    REQUIRE(l1[0].loss.comp == l2[0].loss.comp);

    auto w3 = make_world<float>(1, 78);
    TrainState<float> s3;
    auto l3 = train(w3.model, w3.data.split, w3.data.store, w3.rc, s3);
    REQUIRE(l3[0].loss.total != l1[0].loss.total);
}

TEST_CASE("optimizer keeps exactly two learning-rate groups") {
    auto w = make_world<float>(0);
    bool saw_embedding = false;
    for (Param<float>* p : optimized_params(w.model)) {
        if (p->name == "embeddings.rows") {
            REQUIRE(p->group == ParamGroup::embedding);
            saw_embedding = true;
        } else {
            REQUIRE(p->group == ParamGroup::main);
        }
    }
    REQUIRE(saw_embedding);
    // running statistics are not optimized
    for (Param<float>* p : optimized_params(w.model))
        REQUIRE(p->group != ParamGroup::norm_state);
}

TEST_CASE("adam applies the group learning rates") {
    Param<double> a, b;
    a.reset("a", Mat<double>::Zero(1, 1), ParamGroup::main);
    b.reset("b", Mat<double>::Zero(1, 1), ParamGroup::embedding);
    a.grad = Mat<double>::Constant(1, 1, 0.3);
    b.grad = Mat<double>::Constant(1, 1, 0.3);
    std::vector<Param<double>*> opt{&a, &b};
    AdamState<double> st;
    st.init(opt);
    RunConfig rc;
    rc.train.weight_decay = 0.0;
    adam_step(opt, st, rc.train, rc, 1.0);
    // with bias correction, the first step moves by ~lr in the gradient sign
    REQUIRE(std::abs(a.value(0, 0) + rc.train.lr_main) < 1e-9);
    REQUIRE(std::abs(b.value(0, 0) + rc.train.lr_embeddings) < 1e-12);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    auto w = make_world<float>(2, 41);
    TrainState<float> state;
    train(w.model, w.data.split, w.data.store, w.rc, state);
    tsupport::TempDir dir("ckpt");
    const std::string path = dir.str("model.trck");
    save_checkpoint(path, w.model, state, w.rc);

    // evaluation output before reload
    std::vector<std::string> ids{w.data.store.ids()[0], w.data.store.ids()[1]};
    Mat<float> before = w.model.fcomp_matrix(w.data.store, ids);

    auto w2 = make_world<float>(2, 41);
    // perturb, then restore from the checkpoint
    w2.model.word_rows.value.array() += 1.0f;
    TrainState<float> restored = load_checkpoint(path, w2.model, w2.rc);
    REQUIRE(restored.epoch_done == 2);
    auto p1 = w.model.params();
    auto p2 = w2.model.params();
    for (std::size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i]->value == p2[i]->value);
    Mat<float> after = w2.model.fcomp_matrix(w2.data.store, ids);
    REQUIRE(before == after);

    SECTION("config-hash mismatches are refused unless forced") {
        auto w3 = make_world<float>(2, 41);
        w3.rc.model.p = 3; // different architecture hash
        w3.rc.model.validate();
        REQUIRE_THROWS_AS(load_checkpoint(path, w3.model, w3.rc), training_error);
    }
    SECTION("vocabulary travels inside the checkpoint") {
        Vocabulary v = checkpoint_vocabulary(path);
        REQUIRE(v.size() == w.vocab.size());
        for (int i = 0; i < v.size(); ++i) REQUIRE(v.word(i) == w.vocab.word(i));
    }
}

TEST_CASE("a resumed run retraces an uninterrupted one") {
    auto full = make_world<float>(4, 52);
    TrainState<float> full_state;
    auto full_logs = train(full.model, full.data.split, full.data.store, full.rc, full_state);

    auto part = make_world<float>(2, 52);
    TrainState<float> part_state;
    auto part_logs = train(part.model, part.data.split, part.data.store, part.rc, part_state);
    tsupport::TempDir dir("resume");
    save_checkpoint(dir.str("mid.trck"), part.model, part_state, part.rc);

    auto resumed = make_world<float>(4, 52);
    TrainState<float> resume_state = load_checkpoint(dir.str("mid.trck"), resumed.model,
                                                     resumed.rc, /*force=*/true);
    auto tail_logs =
        train(resumed.model, resumed.data.split, resumed.data.store, resumed.rc, resume_state);

    REQUIRE(full_logs.size() == 4);
    REQUIRE(part_logs.size() == 2);
    REQUIRE(tail_logs.size() == 2);
    for (int e = 0; e < 2; ++e) {
        REQUIRE(full_logs[e].loss.total == part_logs[e].loss.total);
        REQUIRE(full_logs[e + 2].loss.total == tail_logs[e].loss.total);
        REQUIRE(full_logs[e + 2].loss.attr == tail_logs[e].loss.attr);
    }
    tsupport::TempDir dir2("resume2");
    save_checkpoint(dir2.str("full.trck"), full.model, full_state, full.rc);
    save_checkpoint(dir2.str("resumed.trck"), resumed.model, resume_state, resumed.rc);
    REQUIRE(tsupport::slurp(dir2.str("full.trck")) == tsupport::slurp(dir2.str("resumed.trck")));
}

TEST_CASE("the synthetic task is learnable and losses stay finite") {
    auto w = make_world<float>(10, 60);
    TrainState<float> state;
    auto logs = train(w.model, w.data.split, w.data.store, w.rc, state);
    REQUIRE(logs.size() == 10);
    for (const auto& log : logs) REQUIRE(std::isfinite(log.loss.total));

    // composition loss trends down through a 3-epoch window (the strict
    // monotone check runs on the full-size task in the acceptance suite)
    std::vector<double> ma;
    for (std::size_t i = 0; i + 2 < logs.size(); ++i)
        ma.push_back((logs[i].loss.comp + logs[i + 1].loss.comp + logs[i + 2].loss.comp) / 3.0);
    REQUIRE(ma.back() < ma.front());
}

TEST_CASE("FAA gates learn to suppress pure-noise patch rows") {
    // isolate the alignment pressure: no orthogonality term, flat schedule
    auto w = make_world<float>(60, 61);
    w.rc.model.gamma_ortho = 0.0;
    w.model.cfg.gamma_ortho = 0.0;
    w.rc.train.lr_main = 1e-3;
    TrainState<float> state;
    train(w.model, w.data.split, w.data.store, w.rc, state);

    const int bg = w.data.background_rows;
    const int n = w.rc.model.n_patches;
    double signal_sum = 0.0, bg_sum = 0.0;
    long signal_count = 0, bg_count = 0;
    for (std::size_t i : w.data.split.val_idx) {
        Mat<float> gates = w.model.faa_gates(w.data.store.get(w.data.split.records[i].image_id));
        for (int r = 0; r < n; ++r) {
            for (int k = 0; k < w.rc.model.p; ++k) {
                if (r < n - bg) {
                    signal_sum += gates(r, k);
                    ++signal_count;
                } else {
                    bg_sum += gates(r, k);
                    ++bg_count;
                }
            }
        }
    }
    REQUIRE(bg_count > 0);
    REQUIRE(signal_sum / signal_count > bg_sum / bg_count);
}

TEST_CASE("non-finite losses abort with the offending batch") {
    auto w = make_world<float>(2, 62);
    w.rc.train.lr_main = 1e30; // guaranteed float overflow after one step
    TrainState<float> state;
    try {
        train(w.model, w.data.split, w.data.store, w.rc, state);
        FAIL("expected training_error");
    } catch (const training_error& e) {
        REQUIRE(std::string(e.what()).find("synth_") != std::string::npos);
    }
}
