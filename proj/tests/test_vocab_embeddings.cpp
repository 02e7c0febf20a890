// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "trident/embeddings.hpp"
#include "trident/vocab.hpp"

using namespace trident;

namespace {

/// Fixture provider with explicit token states per word.
class FixtureProvider final : public EmbeddingProvider {
public:
    FixtureProvider(int d_m) : d_m_(d_m) {}
    void set(const std::string& word, Eigen::MatrixXd states) {
        states_[fold_case(word)] = std::move(states);
    }
    Eigen::MatrixXd states(const std::string& word) override {
        auto it = states_.find(fold_case(word));
        if (it == states_.end()) throw provider_error("no fixture for " + word);
        return it->second;
    }
    int dim() const override { return d_m_; }

private:
    int d_m_;
    std::map<std::string, Eigen::MatrixXd> states_;
};

} // namespace

TEST_CASE("vocabulary ids follow listed order") {
    Vocabulary v = build_vocabulary({"ripe", "peeled"}, {"apple"}, {}, 0);
    REQUIRE(v.size() == 3);
    REQUIRE(v.id("ripe") == 0);
    REQUIRE(v.id("peeled") == 1);
    REQUIRE(v.id("apple") == 2);
}

TEST_CASE("auxiliary words extend the vocabulary") {
    std::map<Composition, std::vector<std::string>> aux{
        {{"ripe", "apple"}, {"juicy", "fresh", "red"}}};
    Vocabulary v = build_vocabulary({"ripe"}, {"apple"}, aux, 3);
    REQUIRE(v.size() == 5); // union count
    REQUIRE(v.aux_of({"ripe", "apple"}).size() == 3);
    // round trip: id(word(i)) == i
    for (int i = 0; i < v.size(); ++i) REQUIRE(v.id(v.word(i)) == i);
}

TEST_CASE("auxiliary word equal to the composition attribute is rejected") {
    std::map<Composition, std::vector<std::string>> aux{
        {{"ripe", "apple"}, {"ripe", "fresh", "red"}}};
    REQUIRE_THROWS_AS(build_vocabulary({"ripe"}, {"apple"}, aux, 3), invariant_error);
}

TEST_CASE("aux list of wrong length is a configuration error") {
    std::map<Composition, std::vector<std::string>> aux{{{"ripe", "apple"}, {"juicy"}}};
    REQUIRE_THROWS_AS(build_vocabulary({"ripe"}, {"apple"}, aux, 3), config_error);
}

TEST_CASE("case-folded deduplication shares one id per surface form") {
    std::map<Composition, std::vector<std::string>> aux{
        {{"ripe", "apple"}, {"peeled", "juicy", "Red"}}}; // "peeled" already an attribute
    Vocabulary v = build_vocabulary({"ripe", "peeled"}, {"apple", "Ripe"}, aux, 3);
    // "Ripe" as object reuses id 0; aux "peeled" reuses id 1
    REQUIRE(v.id("RIPE") == 0);
    REQUIRE(v.object_ids().front() == v.id("apple"));
    REQUIRE(std::find(v.object_ids().begin(), v.object_ids().end(), 0) != v.object_ids().end());
    REQUIRE(v.size() == 5); // ripe, peeled, apple, juicy, red
    const auto& ids = v.aux_of({"ripe", "apple"});
    REQUIRE(ids[0] == v.id("peeled"));
}

TEST_CASE("import pools token states") {
    Vocabulary v = build_vocabulary({"ripe"}, {"apple"}, {}, 0);
    FixtureProvider provider(3);

    SECTION("single token row is returned as-is") {
        Eigen::MatrixXd one(1, 3);
        one << 1.0, 2.0, 3.0;
        provider.set("ripe", one);
        provider.set("apple", Eigen::MatrixXd::Zero(1, 3));
        auto table = import_embeddings<double>(provider, v);
        REQUIRE(table.rows.row(0).isApprox(one.row(0)));
        REQUIRE(table.trainable);
    }
    SECTION("two tokens average to (u+v)/2") {
        Eigen::MatrixXd two(2, 3);
        two << 1.0, 0.0, 4.0, 3.0, 2.0, 0.0;
        provider.set("ripe", two);
        provider.set("apple", Eigen::MatrixXd::Zero(1, 3));
        auto table = import_embeddings<double>(provider, v);
        Eigen::RowVector3d mean(2.0, 1.0, 2.0);
        REQUIRE(table.rows.row(0).isApprox(mean));
    }
    SECTION("token-order permutation leaves the pooled row unchanged") {
        Rng rng(5);
        Eigen::MatrixXd st = tsupport::randmat(rng, 4, 3);
        Eigen::MatrixXd perm(4, 3);
        perm << st.row(2), st.row(0), st.row(3), st.row(1);
        provider.set("ripe", st);
        provider.set("apple", Eigen::MatrixXd::Zero(1, 3));
        auto a = import_embeddings<double>(provider, v);
        provider.set("ripe", perm);
        auto b = import_embeddings<double>(provider, v);
        REQUIRE(a.rows.row(0).isApprox(b.rows.row(0), 1e-12));
    }
    SECTION("failures are collected and reported together") {
        provider.set("ripe", Eigen::MatrixXd::Ones(1, 3));
        try {
            import_embeddings<double>(provider, v);
            FAIL("expected provider_error");
        } catch (const provider_error& e) {
            REQUIRE(std::string(e.what()).find("apple") != std::string::npos);
        }
    }
}

TEST_CASE("stub embedding provider is deterministic across runs") {
    Vocabulary v = build_vocabulary({"ripe", "shiny"}, {"apple", "car"}, {}, 0);
    StubEmbeddingProvider p1(7, 16), p2(7, 16);
    auto t1 = import_embeddings<float>(p1, v);
    auto t2 = import_embeddings<float>(p2, v);
    tsupport::TempDir dir("trie");
    save_embeddings(dir.str("a.trie"), v, t1);
    save_embeddings(dir.str("b.trie"), v, t2);
    REQUIRE(tsupport::slurp(dir.str("a.trie")) == tsupport::slurp(dir.str("b.trie")));
    // a different seed changes the table
    StubEmbeddingProvider p3(8, 16);
    auto t3 = import_embeddings<float>(p3, v);
    REQUIRE(!t3.rows.isApprox(t1.rows));
}

TEST_CASE("TRIE1 files round-trip and reject corruption") {
    Vocabulary v = build_vocabulary({"ripe"}, {"apple"}, {}, 0);
    StubEmbeddingProvider provider(3, 8);
    auto table = import_embeddings<float>(provider, v);
    tsupport::TempDir dir("trie_io");
    const std::string path = dir.str("words.trie");
    save_embeddings(path, v, table);

    SECTION("round trip is exact") {
        auto loaded = load_embeddings<float>(path, v);
        REQUIRE(loaded.rows == table.rows);
        REQUIRE(loaded.d_m == 8);
    }
    SECTION("wrong magic is rejected") {
        std::string bytes = tsupport::slurp(path);
        bytes[0] = 'X';
        tsupport::spit(path, bytes);
        REQUIRE_THROWS_AS(load_embeddings<float>(path, v), io_error);
    }
    SECTION("truncation is rejected") {
        std::string bytes = tsupport::slurp(path);
        bytes.resize(bytes.size() - 5);
        tsupport::spit(path, bytes);
        REQUIRE_THROWS_AS(load_embeddings<float>(path, v), io_error);
    }
}

TEST_CASE("embed_word projections") {
    Vocabulary v = build_vocabulary({"ripe"}, {"apple"}, {}, 0);
    Rng rng(11);
    EmbeddingTable<double> table;
    table.d_m = 4;
    table.rows = tsupport::randmat(rng, 2, 4);

    SECTION("identity single-layer map returns the raw row") {
        ProjectionParams<double> proj;
        proj.init(4, 4, 4, 0, Rng(1));
        proj.word_w1.value = Eigen::MatrixXd::Identity(4, 4);
        proj.word_b1.value.setZero();
        auto out = embed_word(table, proj, 0);
        REQUIRE(out.transpose().isApprox(table.rows.row(0), 1e-12));
    }
    SECTION("zero map sends every word to zero") {
        ProjectionParams<double> proj;
        proj.init(4, 3, 3, 2, Rng(1));
        proj.word_w1.value.setZero();
        proj.word_b1.value.setZero();
        proj.word_w2.value.setZero();
        proj.word_b2.value.setZero();
        REQUIRE(embed_word(table, proj, 0).norm() == 0.0);
        REQUIRE(embed_word(table, proj, 1).norm() == 0.0);
    }
    SECTION("two-layer perceptron matches a hand-rolled forward pass") {
        ProjectionParams<double> proj;
        proj.init(4, 3, 3, 5, Rng(2));
        auto out = embed_word(table, proj, 1);
        Eigen::RowVectorXd h =
            table.rows.row(1) * proj.word_w1.value + proj.word_b1.value.row(0);
        h = h.cwiseMax(0.0);
        Eigen::RowVectorXd expect = h * proj.word_w2.value + proj.word_b2.value.row(0);
        REQUIRE(tsupport::rel_err(out.transpose(), expect) < 1e-6);
    }
    SECTION("unknown id is a lookup error") {
        ProjectionParams<double> proj;
        proj.init(4, 3, 3, 0, Rng(3));
        REQUIRE_THROWS_AS(embed_word(table, proj, 9), invariant_error);
    }
    SECTION("repeated calls are bit-identical") {
        ProjectionParams<double> proj;
        proj.init(4, 3, 3, 5, Rng(4));
        auto a = embed_word(table, proj, 0);
        auto b = embed_word(table, proj, 0);
        REQUIRE(a == b);
    }
}

TEST_CASE("embed_pair projections") {
    Rng rng(12);
    EmbeddingTable<double> table;
    table.d_m = 3;
    table.rows = tsupport::randmat(rng, 2, 3);

    SECTION("zero pair map gives zero") {
        ProjectionParams<double> proj;
        proj.init(3, 3, 4, 0, Rng(5));
        proj.pair_w.value.setZero();
        proj.pair_b.value.setZero();
        REQUIRE(embed_pair(table, proj, 0, 1).norm() == 0.0);
    }
    SECTION("selector matrix [I | 0] returns the attribute row") {
        ProjectionParams<double> proj;
        proj.init(3, 3, 3, 0, Rng(6));
        proj.pair_w.value.setZero();
        proj.pair_w.value.topRows(3) = Eigen::MatrixXd::Identity(3, 3);
        proj.pair_b.value.setZero();
        auto out = embed_pair(table, proj, 0, 1);
        REQUIRE(out.transpose().isApprox(table.rows.row(0), 1e-12));
    }
    SECTION("random inputs match the concat-then-affine computation") {
        ProjectionParams<double> proj;
        proj.init(3, 3, 4, 0, Rng(7));
        auto out = embed_pair(table, proj, 1, 0);
        Eigen::RowVectorXd cat(6);
        cat << table.rows.row(1), table.rows.row(0);
        Eigen::RowVectorXd expect = cat * proj.pair_w.value + proj.pair_b.value.row(0);
        REQUIRE(tsupport::rel_err(out.transpose(), expect) < 1e-6);
    }
}

TEST_CASE("embed_word gradient w.r.t. the stored row matches finite differences") {
    Rng rng(13);
    Param<double> row;
    row.reset("row", tsupport::randmat(rng, 1, 4));
    ProjectionParams<double> proj;
    proj.init(4, 3, 3, 5, Rng(8));
    Eigen::MatrixXd w = tsupport::randmat(rng, 1, 3);

    auto value = [&]() {
        ad::Tape<double> tape;
        auto out = project_words(tape, proj, tape.param(row));
        return ad::sum_all(ad::hadamard(out, tape.constant(w))).val()(0, 0);
    };
    auto backward = [&]() {
        ad::Tape<double> tape;
        auto out = project_words(tape, proj, tape.param(row));
        tape.backward(ad::sum_all(ad::hadamard(out, tape.constant(w))));
    };
    REQUIRE(tsupport::gradcheck({&row}, value, backward) < 1e-4);
}
