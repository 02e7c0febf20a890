// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Word-embedding storage and providers. A provider yields, per word, either
// token-wise last hidden states (z x d_m) or a single pre-pooled vector;
// import averages the token states into one row per vocabulary id.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "trident/autodiff.hpp"
#include "trident/binio.hpp"
#include "trident/errors.hpp"
#include "trident/rng.hpp"
#include "trident/vocab.hpp"

namespace trident {

template <class S>
struct EmbeddingTable {
    int d_m = 0;
    Mat<S> rows;           // |Y| x d_m
    bool trainable = true; // fine-tuned at the low learning rate

    void check(const Vocabulary& vocab) const {
        if (rows.rows() != vocab.size())
            throw invariant_error("embedding table row count != |Y|");
        if (!rows.allFinite()) throw numeric_error("embedding table contains non-finite values");
    }
};

/// Source of per-word hidden states.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    /// Returns z x d_m token states (z >= 1) for one word.
    virtual Eigen::MatrixXd states(const std::string& word) = 0;
    virtual int dim() const = 0;
};

/// Deterministic stand-in: one unit-normalized pseudo-random vector per word,
/// keyed by (seed, word) so tables are byte-identical across runs.
class StubEmbeddingProvider final : public EmbeddingProvider {
public:
    StubEmbeddingProvider(std::uint64_t seed, int d_m) : seed_(seed), d_m_(d_m) {}

    Eigen::MatrixXd states(const std::string& word) override {
        Rng rng = Rng::stream(seed_, "word-embedding:" + fold_case(word));
        Eigen::MatrixXd v(1, d_m_);
        for (int j = 0; j < d_m_; ++j) v(0, j) = rng.normal();
        v.row(0) /= v.row(0).norm();
        return v;
    }
    int dim() const override { return d_m_; }

private:
    std::uint64_t seed_;
    int d_m_;
};

/// Mean-pools provider states into one row per id. Collects every failing
/// word before raising so the error names all missing entries at once.
template <class S>
EmbeddingTable<S> import_embeddings(EmbeddingProvider& provider, const Vocabulary& vocab) {
    EmbeddingTable<S> table;
    table.d_m = provider.dim();
    table.rows = Mat<S>::Zero(vocab.size(), table.d_m);
    table.trainable = true;
    std::vector<std::string> missing;
    for (int i = 0; i < vocab.size(); ++i) {
        try {
            Eigen::MatrixXd st = provider.states(vocab.word(i));
            if (st.rows() < 1 || st.cols() != table.d_m)
                throw provider_error("bad embedding shape for \"" + vocab.word(i) + "\"");
            Eigen::RowVectorXd mean = st.colwise().mean();
            if (!mean.allFinite()) throw provider_error("non-finite embedding");
            table.rows.row(i) = mean.template cast<S>();
        } catch (const std::exception&) {
            missing.push_back(vocab.word(i));
        }
    }
    if (!missing.empty()) {
        std::string msg = "embedding import failed for " + std::to_string(missing.size()) + " word(s):";
        for (const auto& w : missing) msg += " " + w;
        throw provider_error(msg);
    }
    return table;
}

// --------------------------------------------------------------------------
// TRIE1 container: magic "TRIE1\0", u32 word count, u32 d_m, then per word a
// u16 byte length, the UTF-8 word, and d_m float32 values. Little-endian.

inline constexpr char kTrie1Magic[6] = {'T', 'R', 'I', 'E', '1', '\0'};

template <class S>
void save_embeddings(const std::string& path, const Vocabulary& vocab,
                     const EmbeddingTable<S>& table) {
    table.check(vocab);
    binio::Writer w(path);
    w.bytes(kTrie1Magic, 6);
    w.u32(static_cast<std::uint32_t>(vocab.size()));
    w.u32(static_cast<std::uint32_t>(table.d_m));
    for (int i = 0; i < vocab.size(); ++i) {
        const std::string& word = vocab.word(i);
        if (word.size() > 0xffff) throw io_error("word too long for TRIE1: " + word);
        w.u16(static_cast<std::uint16_t>(word.size()));
        w.str(word);
        for (int j = 0; j < table.d_m; ++j) w.f32(static_cast<float>(table.rows(i, j)));
    }
    w.close();
}

/// Loads a TRIE1 file and aligns its rows to `vocab` ids. Every vocabulary
/// word must be present; extra words in the file are an error.
template <class S>
EmbeddingTable<S> load_embeddings(const std::string& path, const Vocabulary& vocab) {
    binio::Reader r(path);
    binio::expect_magic(r, kTrie1Magic, 6);
    const std::uint32_t count = r.u32();
    const std::uint32_t d_m = r.u32();
    if (count != static_cast<std::uint32_t>(vocab.size()))
        throw io_error("TRIE1 word count " + std::to_string(count) + " != |Y| " +
                       std::to_string(vocab.size()));
    EmbeddingTable<S> table;
    table.d_m = static_cast<int>(d_m);
    table.rows = Mat<S>::Zero(vocab.size(), table.d_m);
    std::vector<bool> filled(static_cast<std::size_t>(vocab.size()), false);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t len = r.u16();
        const std::string word = r.str(len);
        if (!vocab.contains(word)) throw io_error("TRIE1 contains unknown word: " + word);
        const int id = vocab.id(word);
        for (int j = 0; j < table.d_m; ++j) table.rows(id, j) = static_cast<S>(r.f32());
        filled[static_cast<std::size_t>(id)] = true;
    }
    for (int i = 0; i < vocab.size(); ++i)
        if (!filled[static_cast<std::size_t>(i)])
            throw io_error("TRIE1 missing embedding for word: " + vocab.word(i));
    table.check(vocab);
    return table;
}

// --------------------------------------------------------------------------
// Projections into the joint spaces (Eqs. word-MLP / pair-linear).

template <class S>
struct ProjectionParams {
    int hidden = 0; // 0: single affine d_m -> D_w
    Param<S> word_w1, word_b1; // d_m x H, 1 x H   (or d_m x D_w when hidden == 0)
    Param<S> word_w2, word_b2; // H x D_w, 1 x D_w (unused when hidden == 0)
    Param<S> pair_w, pair_b;   // 2 d_m x D_c, 1 x D_c

    static Mat<S> glorot(Rng& rng, Eigen::Index r, Eigen::Index c) {
        const double s = std::sqrt(2.0 / static_cast<double>(r + c));
        Mat<S> m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = static_cast<S>(rng.normal() * s);
        return m;
    }

    void init(int d_m, int word_dim, int comp_dim, int hidden_width, Rng rng) {
        hidden = hidden_width;
        if (hidden > 0) {
            word_w1.reset("proj.word_w1", glorot(rng, d_m, hidden));
            // small positive bias keeps narrow rectifier layers alive at init
            word_b1.reset("proj.word_b1", Mat<S>::Constant(1, hidden, S(0.1)));
            word_w2.reset("proj.word_w2", glorot(rng, hidden, word_dim));
            word_b2.reset("proj.word_b2", Mat<S>::Zero(1, word_dim));
        } else {
            word_w1.reset("proj.word_w1", glorot(rng, d_m, word_dim));
            word_b1.reset("proj.word_b1", Mat<S>::Zero(1, word_dim));
            word_w2.reset("proj.word_w2", Mat<S>::Zero(0, 0));
            word_b2.reset("proj.word_b2", Mat<S>::Zero(0, 0));
        }
        pair_w.reset("proj.pair_w", glorot(rng, 2 * d_m, comp_dim));
        pair_b.reset("proj.pair_b", Mat<S>::Zero(1, comp_dim));
    }

    void collect(std::vector<Param<S>*>& out) {
        out.push_back(&word_w1);
        out.push_back(&word_b1);
        if (hidden > 0) {
            out.push_back(&word_w2);
            out.push_back(&word_b2);
        }
        out.push_back(&pair_w);
        out.push_back(&pair_b);
    }
};

/// Projects raw embedding rows (R x d_m) into the word joint space (R x D_w).
template <class S>
ad::Var<S> project_words(ad::Tape<S>& tape, ProjectionParams<S>& proj, ad::Var<S> rows) {
    ad::Var<S> h = ad::affine(rows, tape.param(proj.word_w1), tape.param(proj.word_b1));
    if (proj.hidden > 0)
        h = ad::affine(ad::relu(h), tape.param(proj.word_w2), tape.param(proj.word_b2));
    return h;
}

/// Concatenates raw attribute/object rows and applies the pair linear map.
template <class S>
ad::Var<S> project_pairs(ad::Tape<S>& tape, ProjectionParams<S>& proj, ad::Var<S> attr_rows,
                         ad::Var<S> obj_rows) {
    ad::Var<S> cat = ad::hstack<S>({attr_rows, obj_rows});
    return ad::affine(cat, tape.param(proj.pair_w), tape.param(proj.pair_b));
}

/// Joint-space embedding of one word (spec surface; differentiable path is
/// project_words on the training tape).
template <class S>
Eigen::Vector<S, Eigen::Dynamic> embed_word(const EmbeddingTable<S>& table,
                                            ProjectionParams<S>& proj, int word_id) {
    if (word_id < 0 || word_id >= table.rows.rows())
        throw invariant_error("embed_word: unknown id " + std::to_string(word_id));
    ad::Tape<S> tape;
    ad::Var<S> row = tape.constant(table.rows.row(word_id));
    return project_words(tape, proj, row).val().row(0);
}

/// Joint-space embedding of an (attribute, object) pair.
template <class S>
Eigen::Vector<S, Eigen::Dynamic> embed_pair(const EmbeddingTable<S>& table,
                                            ProjectionParams<S>& proj, int attribute_id,
                                            int object_id) {
    if (attribute_id < 0 || attribute_id >= table.rows.rows() || object_id < 0 ||
        object_id >= table.rows.rows())
        throw invariant_error("embed_pair: unknown id");
    ad::Tape<S> tape;
    ad::Var<S> a = tape.constant(table.rows.row(attribute_id));
    ad::Var<S> o = tape.constant(table.rows.row(object_id));
    return project_pairs(tape, proj, a, o).val().row(0);
}

} // namespace trident
