// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Full model assembly: one forward pass over a triplet batch producing the
// four loss components, plus the evaluation-mode helpers used by inference
// and the CLI.

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "trident/autodiff.hpp"
#include "trident/config.hpp"
#include "trident/data.hpp"
#include "trident/disentangle.hpp"
#include "trident/embeddings.hpp"
#include "trident/eval.hpp"
#include "trident/extractor.hpp"
#include "trident/losses.hpp"
#include "trident/vocab.hpp"

namespace trident {

struct TripletSample {
    std::size_t main_idx;
    std::size_t attr_companion;
    std::size_t obj_companion;
};

template <class S>
struct BatchLossVars {
    ad::Var<S> ortho, comp, attr, obj, total;
    LossBreakdown values;
};

template <class S>
class TridentModel {
public:
    ModelConfig cfg;
    Vocabulary vocab;
    Param<S> word_rows; // |Y| x d_m, low-LR group
    ProjectionParams<S> proj;
    ExtractorParams<S> extractor;
    DisentangleParams<S> disent;

    TridentModel() = default;

    void init(const ModelConfig& config, const Vocabulary& v, const EmbeddingTable<S>& table,
              std::uint64_t seed) {
        cfg = config;
        cfg.validate();
        vocab = v;
        table.check(vocab);
        if (table.d_m != cfg.d_m)
            throw config_error("embedding width " + std::to_string(table.d_m) +
                               " != model.d_m " + std::to_string(cfg.d_m));
        word_rows.reset("embeddings.rows", table.rows, ParamGroup::embedding);
        proj.init(cfg.d_m, cfg.word_dim, cfg.comp_dim, cfg.word_hidden,
                  Rng::stream(seed, "init-proj"));
        extractor.init(cfg, Rng::stream(seed, "init-extractor"));
        disent.init(cfg, Rng::stream(seed, "init-disent"));
        build_candidates();
    }

    std::vector<Param<S>*> params() {
        std::vector<Param<S>*> out;
        out.push_back(&word_rows);
        proj.collect(out);
        extractor.collect(out);
        disent.collect(out);
        return out;
    }

    /// Candidate word-id list for the attribute (resp. object) losses. With
    /// word expanding this is all of Y; distributions over it always have
    /// length |Y|.
    const std::vector<int>& attr_candidates() const { return attr_cands_; }
    const std::vector<int>& obj_candidates() const { return obj_cands_; }

    // -- training forward ---------------------------------------------------

    template <class LabelFn>
    BatchLossVars<S> forward_losses(ad::Tape<S>& tape, const FeatureStore& store,
                                    const DatasetSplit& split,
                                    const std::vector<TripletSample>& batch, bool training,
                                    Rng& dropout_rng, LabelFn&& record_of) {
        const int B = static_cast<int>(batch.size());
        if (B == 0) throw invariant_error("empty batch");
        const int d = cfg.d_v;

        // per-image extraction, image order (m, a, o) per triplet
        std::vector<BundleVars<S>> bundles;
        bundles.reserve(static_cast<std::size_t>(3 * B));
        std::vector<ad::Var<S>> pooled_rows;
        pooled_rows.reserve(static_cast<std::size_t>(3 * B));
        for (const TripletSample& ts : batch) {
            for (std::size_t idx : {ts.main_idx, ts.attr_companion, ts.obj_companion}) {
                const Record& rec = record_of(idx);
                bundles.push_back(extract_on_tape(tape, extractor, cfg, store.get(rec.image_id)));
                pooled_rows.push_back(bundles.back().pooled);
            }
        }

        // orthogonality: mean over triplets of the per-triplet sum (Eq.-3 sums
        // the three images)
        ad::Var<S> ortho_sum = bundles[0].ortho;
        for (std::size_t i = 1; i < bundles.size(); ++i)
            ortho_sum = ad::add(ortho_sum, bundles[i].ortho);
        ad::Var<S> l_ortho = ad::scale(ortho_sum, S(1) / static_cast<S>(B));

        // image embedder tail over the whole 3B stack
        ad::Var<S> pooled = ad::vstack(pooled_rows);
        ad::Var<S> f_comp = image_embed_tail(tape, extractor, cfg, pooled, training, dropout_rng);

        // word and pair candidate embeddings
        ad::Var<S> rows = tape.param(word_rows);
        ad::Var<S> attr_cand_rows = maybe_gather(tape, rows, attr_cands_);
        ad::Var<S> obj_cand_rows = maybe_gather(tape, rows, obj_cands_);
        ad::Var<S> E_attr = project_words(tape, proj, attr_cand_rows);
        ad::Var<S> E_obj = project_words(tape, proj, obj_cand_rows);

        std::vector<int> cs_attr_ids, cs_obj_ids;
        cs_attr_ids.reserve(split.seen_pairs.size());
        for (const Composition& c : split.seen_pairs) {
            cs_attr_ids.push_back(vocab.id(c.attribute));
            cs_obj_ids.push_back(vocab.id(c.object));
        }
        ad::Var<S> E_pairs = project_pairs(tape, proj, ad::gather_rows(rows, cs_attr_ids),
                                           ad::gather_rows(rows, cs_obj_ids));

        // disentanglement + supervision
        std::vector<ad::Var<S>> attr_rows, obj_rows;
        attr_rows.reserve(static_cast<std::size_t>(5 * B));
        obj_rows.reserve(static_cast<std::size_t>(5 * B));
        Mat<S> attr_targets(5 * B, static_cast<Eigen::Index>(attr_cands_.size()));
        Mat<S> obj_targets(5 * B, static_cast<Eigen::Index>(obj_cands_.size()));
        Mat<S> comp_targets = Mat<S>::Zero(3 * B, static_cast<Eigen::Index>(split.seen_pairs.size()));
        const bool smooth = cfg.use_attribute_smoothing && cfg.alpha > 0.0;

        for (int b = 0; b < B; ++b) {
            const Record& m = record_of(batch[static_cast<std::size_t>(b)].main_idx);
            const Record& a = record_of(batch[static_cast<std::size_t>(b)].attr_companion);
            const Record& o = record_of(batch[static_cast<std::size_t>(b)].obj_companion);
            if (fold_case(a.comp.attribute) != fold_case(m.comp.attribute))
                throw invariant_error("attribute companion does not share the attribute");
            if (fold_case(o.comp.object) != fold_case(m.comp.object))
                throw invariant_error("object companion does not share the object");

            ad::Var<S> F_m = bundles[static_cast<std::size_t>(3 * b)].F;
            ad::Var<S> F_a = bundles[static_cast<std::size_t>(3 * b + 1)].F;
            ad::Var<S> F_o = bundles[static_cast<std::size_t>(3 * b + 2)].F;

            PairSupervision sup_ma; // x = m, y = a, shared attribute
            sup_ma.shared = vocab.id(m.comp.attribute);
            sup_ma.excl_x2y = vocab.id(a.comp.object);
            sup_ma.excl_y2x = vocab.id(m.comp.object);
            DisentangledPair<S> pair_ma = disentangle_pair(tape, disent.attr_pair, F_m, F_a,
                                                           SharedKind::attribute, sup_ma);

            PairSupervision sup_mo; // x = m, y = o, shared object
            sup_mo.shared = vocab.id(m.comp.object);
            sup_mo.excl_x2y = vocab.id(o.comp.attribute);
            sup_mo.excl_y2x = vocab.id(m.comp.attribute);
            DisentangledPair<S> pair_mo = disentangle_pair(tape, disent.obj_pair, F_m, F_o,
                                                           SharedKind::object, sup_mo);

            // attribute rows: m2a, a2m (shared of the attr pair), m2o, o2m
            // (exclusive of the obj pair), then the fused shared attribute.
            // Smoothing uses the composition of the image each feature was
            // pooled from.
            const int r0 = 5 * b;
            attr_rows.push_back(pair_ma.f_shared_x2y);
            attr_targets.row(r0) = attr_target(sup_ma.shared, a.comp, smooth);
            attr_rows.push_back(pair_ma.f_shared_y2x);
            attr_targets.row(r0 + 1) = attr_target(sup_ma.shared, m.comp, smooth);
            attr_rows.push_back(pair_mo.f_excl_x2y);
            attr_targets.row(r0 + 2) = attr_target(sup_mo.excl_x2y, o.comp, smooth);
            attr_rows.push_back(pair_mo.f_excl_y2x);
            attr_targets.row(r0 + 3) = attr_target(sup_mo.excl_y2x, m.comp, smooth);
            attr_rows.push_back(pair_ma.f_shared_fused);
            attr_targets.row(r0 + 4) = attr_target(sup_ma.shared, m.comp, false);

            // object rows: exclusives of the attr pair, shared of the obj
            // pair, then the fused shared object. All one-hot.
            obj_rows.push_back(pair_ma.f_excl_x2y);
            obj_targets.row(r0) = obj_target(sup_ma.excl_x2y);
            obj_rows.push_back(pair_ma.f_excl_y2x);
            obj_targets.row(r0 + 1) = obj_target(sup_ma.excl_y2x);
            obj_rows.push_back(pair_mo.f_shared_x2y);
            obj_targets.row(r0 + 2) = obj_target(sup_mo.shared);
            obj_rows.push_back(pair_mo.f_shared_y2x);
            obj_targets.row(r0 + 3) = obj_target(sup_mo.shared);
            obj_rows.push_back(pair_mo.f_shared_fused);
            obj_targets.row(r0 + 4) = obj_target(sup_mo.shared);

            for (int k = 0; k < 3; ++k) {
                const Record& rec = k == 0 ? m : (k == 1 ? a : o);
                auto it = split.seen_index.find(rec.comp);
                if (it == split.seen_index.end())
                    throw invariant_error("train label \"" + rec.comp.key() +
                                          "\" is not a seen composition");
                comp_targets(3 * b + k, it->second) = S(1);
            }
        }

        BatchLossVars<S> out;
        out.ortho = l_ortho;
        const S invB = S(1) / static_cast<S>(B);
        out.attr = ad::scale(cross_entropy_sum(tape, ad::vstack(attr_rows), E_attr, attr_targets,
                                               cfg.temperature, cfg.temperature_multiplies),
                             invB);
        out.obj = ad::scale(cross_entropy_sum(tape, ad::vstack(obj_rows), E_obj, obj_targets,
                                              cfg.temperature, cfg.temperature_multiplies),
                            invB);
        out.comp = ad::scale(cross_entropy_sum(tape, f_comp, E_pairs, comp_targets,
                                               cfg.temperature, cfg.temperature_multiplies),
                             invB);
        ad::Var<S> total = ad::scale(out.ortho, static_cast<S>(cfg.gamma_ortho));
        total = ad::add(total, ad::scale(out.comp, static_cast<S>(cfg.gamma_comp)));
        total = ad::add(total, ad::scale(out.attr, static_cast<S>(cfg.gamma_attr)));
        total = ad::add(total, ad::scale(out.obj, static_cast<S>(cfg.gamma_obj)));
        out.total = total;
        // breakdown filled directly: the training loop owns the abort decision
        // for non-finite values and reports the offending batch
        out.values.ortho = static_cast<double>(out.ortho.val()(0, 0));
        out.values.comp = static_cast<double>(out.comp.val()(0, 0));
        out.values.attr = static_cast<double>(out.attr.val()(0, 0));
        out.values.obj = static_cast<double>(out.obj.val()(0, 0));
        out.values.total = static_cast<double>(total.val()(0, 0));
        return out;
    }

    BatchLossVars<S> forward_losses(ad::Tape<S>& tape, const FeatureStore& store,
                                    const DatasetSplit& split,
                                    const std::vector<TripletSample>& batch, bool training,
                                    Rng& dropout_rng) {
        return forward_losses(tape, store, split, batch, training, dropout_rng,
                              [&](std::size_t i) -> const Record& { return split.records[i]; });
    }

    // -- evaluation helpers ---------------------------------------------------

    /// f_comp rows for the given image ids (evaluation mode, deterministic).
    Mat<S> fcomp_matrix(const FeatureStore& store, const std::vector<std::string>& ids) {
        Mat<S> out(static_cast<Eigen::Index>(ids.size()), cfg.comp_dim);
        Rng unused(0);
        const std::size_t chunk = 256;
        for (std::size_t at = 0; at < ids.size(); at += chunk) {
            const std::size_t m = std::min(chunk, ids.size() - at);
            ad::Tape<S> tape;
            std::vector<ad::Var<S>> pooled_rows;
            pooled_rows.reserve(m);
            for (std::size_t i = 0; i < m; ++i)
                pooled_rows.push_back(extract_on_tape(tape, extractor, cfg, store.get(ids[at + i])).pooled);
            ad::Var<S> f =
                image_embed_tail(tape, extractor, cfg, ad::vstack(pooled_rows), false, unused);
            out.middleRows(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(m)) = f.val();
        }
        return out;
    }

    /// Joint-space embeddings of the given compositions (rows align with the
    /// input order).
    Mat<S> pair_embedding_matrix(const std::vector<Composition>& pairs) {
        std::vector<int> attr_ids, obj_ids;
        attr_ids.reserve(pairs.size());
        for (const Composition& c : pairs) {
            attr_ids.push_back(vocab.id(c.attribute));
            obj_ids.push_back(vocab.id(c.object));
        }
        ad::Tape<S> tape;
        ad::Var<S> rows = tape.param(word_rows);
        ad::Var<S> e = project_pairs(tape, proj, ad::gather_rows(rows, attr_ids),
                                     ad::gather_rows(rows, obj_ids));
        return e.val();
    }

    /// Joint-space embeddings of all |Y| words.
    Mat<S> word_embedding_matrix() {
        ad::Tape<S> tape;
        ad::Var<S> e = project_words(tape, proj, tape.param(word_rows));
        return e.val();
    }

    /// Cosine scores of one evaluation phase against its tagged candidate
    /// set, with ground-truth columns resolved per record.
    ScoreMatrix score_phase(const FeatureStore& store, const DatasetSplit& split, Phase phase) {
        const auto& pairs = split.phase_pairs(phase);
        if (pairs.empty()) throw schema_error("phase has no candidate pairs");
        std::vector<Composition> comps;
        std::map<Composition, int> col_of;
        ScoreMatrix sm;
        for (const auto& tp : pairs) {
            if (col_of.count(tp.comp))
                throw schema_error("duplicate candidate pair: " + tp.comp.key());
            col_of[tp.comp] = static_cast<int>(comps.size());
            comps.push_back(tp.comp);
            sm.col_seen.push_back(tp.seen);
        }
        const auto& idxs = split.phase_indices(phase);
        if (idxs.empty()) throw schema_error("phase has no evaluation records");
        std::vector<std::string> ids;
        ids.reserve(idxs.size());
        for (std::size_t i : idxs) {
            const Record& r = split.records[i];
            auto it = col_of.find(r.comp);
            if (it == col_of.end())
                throw schema_error("record pair not in candidate set: " + r.comp.key());
            ids.push_back(r.image_id);
            sm.gt_col.push_back(it->second);
        }
        Eigen::MatrixXd f = fcomp_matrix(store, ids).template cast<double>();
        Eigen::MatrixXd cand = pair_embedding_matrix(comps).template cast<double>();
        sm.scores = score_candidates(f, cand);
        return sm;
    }

    /// Per-patch FAA gates of one image (n x p), evaluation mode.
    Mat<S> faa_gates(const RawImageFeatures& raw) {
        ad::Tape<S> tape;
        BundleVars<S> b = extract_on_tape(tape, extractor, cfg, raw);
        Mat<S> gates(cfg.n_patches, cfg.p);
        for (int k = 0; k < cfg.p; ++k)
            gates.col(k) = b.faa_gates.at(static_cast<std::size_t>(k)).val().col(0);
        return gates;
    }

private:
    static ad::Var<S> maybe_gather(ad::Tape<S>& tape, ad::Var<S> rows,
                                   const std::vector<int>& ids) {
        if (static_cast<Eigen::Index>(ids.size()) == rows.rows()) {
            bool identity = true;
            for (std::size_t i = 0; i < ids.size(); ++i)
                if (ids[i] != static_cast<int>(i)) {
                    identity = false;
                    break;
                }
            if (identity) return rows;
        }
        return ad::gather_rows(rows, ids);
    }

    void build_candidates() {
        attr_cands_.clear();
        obj_cands_.clear();
        if (cfg.use_word_expanding) {
            for (int i = 0; i < vocab.size(); ++i) attr_cands_.push_back(i);
            obj_cands_ = attr_cands_;
        } else {
            // confined domains: attributes plus auxiliaries for the smoothed
            // losses, objects alone for the object losses
            std::vector<bool> in(static_cast<std::size_t>(vocab.size()), false);
            for (int id : vocab.attribute_ids())
                if (!in[static_cast<std::size_t>(id)]) {
                    in[static_cast<std::size_t>(id)] = true;
                    attr_cands_.push_back(id);
                }
            for (int id : vocab.auxiliary_ids())
                if (!in[static_cast<std::size_t>(id)]) {
                    in[static_cast<std::size_t>(id)] = true;
                    attr_cands_.push_back(id);
                }
            for (const auto& [comp, ids] : vocab.aux_map())
                for (int id : ids)
                    if (!in[static_cast<std::size_t>(id)]) {
                        in[static_cast<std::size_t>(id)] = true;
                        attr_cands_.push_back(id);
                    }
            obj_cands_ = vocab.object_ids();
        }
        attr_pos_.assign(static_cast<std::size_t>(vocab.size()), -1);
        for (std::size_t i = 0; i < attr_cands_.size(); ++i)
            attr_pos_[static_cast<std::size_t>(attr_cands_[i])] = static_cast<int>(i);
        obj_pos_.assign(static_cast<std::size_t>(vocab.size()), -1);
        for (std::size_t i = 0; i < obj_cands_.size(); ++i)
            obj_pos_[static_cast<std::size_t>(obj_cands_[i])] = static_cast<int>(i);
    }

    Eigen::RowVector<S, Eigen::Dynamic> attr_target(int gt_word, const Composition& source_comp,
                                                    bool smooth) {
        const int K = static_cast<int>(attr_cands_.size());
        const int gt_pos = attr_pos_.at(static_cast<std::size_t>(gt_word));
        if (gt_pos < 0) throw invariant_error("ground-truth attribute not in candidate set");
        std::vector<int> aux_pos;
        if (smooth) {
            for (int id : vocab.aux_of(source_comp)) {
                const int p = attr_pos_.at(static_cast<std::size_t>(id));
                if (p < 0) throw invariant_error("auxiliary word not in candidate set");
                aux_pos.push_back(p);
            }
        }
        const double alpha = smooth ? cfg.alpha : 0.0;
        return smoothed_targets<S>(K, gt_pos, aux_pos, alpha).transpose();
    }

    Eigen::RowVector<S, Eigen::Dynamic> obj_target(int gt_word) {
        const int K = static_cast<int>(obj_cands_.size());
        const int gt_pos = obj_pos_.at(static_cast<std::size_t>(gt_word));
        if (gt_pos < 0) throw invariant_error("ground-truth object not in candidate set");
        return smoothed_targets<S>(K, gt_pos, {}, 0.0).transpose();
    }

    std::vector<int> attr_cands_, obj_cands_;
    std::vector<int> attr_pos_, obj_pos_;
};

} // namespace trident
