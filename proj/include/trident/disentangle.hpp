// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Weighted attribute-object disentanglement over an image pair sharing one
// primitive. Direction convention: weights labeled x2y come from MLP_{x2y}
// and pool F_y; the exclusive feature pooled from an image is supervised with
// that image's own exclusive primitive.

#pragma once

#include <string>
#include <vector>

#include "trident/autodiff.hpp"
#include "trident/config.hpp"
#include "trident/errors.hpp"
#include "trident/rng.hpp"

namespace trident {

enum class SharedKind { attribute, object };

/// The two direction MLPs plus the fusion layer for one pair type.
template <class S>
struct PairDisentangleParams {
    int hidden = 0;
    Param<S> w1_x2y, b1_x2y, w2_x2y, b2_x2y;
    Param<S> w1_y2x, b1_y2x, w2_y2x, b2_y2x;
    Param<S> fuse_w, fuse_b; // 2d x d, 1 x d

    void init(const std::string& prefix, int h, int d, int hidden_width, Rng& rng) {
        hidden = hidden_width;
        const int in = 2 * h * d;
        auto glorot = [&](Eigen::Index r, Eigen::Index c) {
            const double s = std::sqrt(2.0 / static_cast<double>(r + c));
            Mat<S> m(r, c);
            for (Eigen::Index i = 0; i < r; ++i)
                for (Eigen::Index j = 0; j < c; ++j) m(i, j) = static_cast<S>(rng.normal() * s);
            return m;
        };
        auto init_dir = [&](const std::string& dir, Param<S>& w1, Param<S>& b1, Param<S>& w2,
                            Param<S>& b2) {
            if (hidden > 0) {
                w1.reset(prefix + "." + dir + ".w1", glorot(in, hidden));
                b1.reset(prefix + "." + dir + ".b1", Mat<S>::Constant(1, hidden, S(0.1)));
                w2.reset(prefix + "." + dir + ".w2", glorot(hidden, h));
                b2.reset(prefix + "." + dir + ".b2", Mat<S>::Zero(1, h));
            } else {
                w1.reset(prefix + "." + dir + ".w1", glorot(in, h));
                b1.reset(prefix + "." + dir + ".b1", Mat<S>::Zero(1, h));
                w2.reset(prefix + "." + dir + ".w2", Mat<S>::Zero(0, 0));
                b2.reset(prefix + "." + dir + ".b2", Mat<S>::Zero(0, 0));
            }
        };
        init_dir("x2y", w1_x2y, b1_x2y, w2_x2y, b2_x2y);
        init_dir("y2x", w1_y2x, b1_y2x, w2_y2x, b2_y2x);
        fuse_w.reset(prefix + ".fuse_w", glorot(2 * d, d));
        fuse_b.reset(prefix + ".fuse_b", Mat<S>::Zero(1, d));
    }

    void collect(std::vector<Param<S>*>& out) {
        out.push_back(&w1_x2y);
        out.push_back(&b1_x2y);
        if (hidden > 0) {
            out.push_back(&w2_x2y);
            out.push_back(&b2_x2y);
        }
        out.push_back(&w1_y2x);
        out.push_back(&b1_y2x);
        if (hidden > 0) {
            out.push_back(&w2_y2x);
            out.push_back(&b2_y2x);
        }
        out.push_back(&fuse_w);
        out.push_back(&fuse_b);
    }
};

template <class S>
struct DisentangleParams {
    PairDisentangleParams<S> attr_pair; // images sharing the attribute
    PairDisentangleParams<S> obj_pair;  // images sharing the object

    void init(const ModelConfig& cfg, Rng rng) {
        attr_pair.init("disent.attr", cfg.h(), cfg.d_v, cfg.weight_hidden, rng);
        obj_pair.init("disent.obj", cfg.h(), cfg.d_v, cfg.weight_hidden, rng);
    }
    void collect(std::vector<Param<S>*>& out) {
        attr_pair.collect(out);
        obj_pair.collect(out);
    }
};

template <class S>
struct ShareWeightVars {
    ad::Var<S> shared_x2y, shared_y2x; // 1 x h, sigmoid outputs
    ad::Var<S> excl_x2y, excl_y2x;     // complements
};

namespace detail {

template <class S>
ad::Var<S> weight_mlp(ad::Tape<S>& tape, int hidden, Param<S>& w1, Param<S>& b1, Param<S>& w2,
                      Param<S>& b2, ad::Var<S> flat) {
    ad::Var<S> h = ad::affine(flat, tape.param(w1), tape.param(b1));
    if (hidden > 0) h = ad::affine(ad::relu(h), tape.param(w2), tape.param(b2));
    return ad::sigmoid(h);
}

} // namespace detail

/// Shared/exclusive weights from the flattened vertical concatenation
/// [F_x; F_y]. Complements hold exactly by construction.
template <class S>
ShareWeightVars<S> compute_share_weights(ad::Tape<S>& tape, PairDisentangleParams<S>& params,
                                         ad::Var<S> F_x, ad::Var<S> F_y) {
    if (F_x.rows() != F_y.rows() || F_x.cols() != F_y.cols())
        throw invariant_error("compute_share_weights: pair shapes differ");
    ad::Var<S> flat = ad::flatten_rows(ad::vstack<S>({F_x, F_y}));
    ShareWeightVars<S> w;
    w.shared_x2y = detail::weight_mlp(tape, params.hidden, params.w1_x2y, params.b1_x2y,
                                      params.w2_x2y, params.b2_x2y, flat);
    w.shared_y2x = detail::weight_mlp(tape, params.hidden, params.w1_y2x, params.b1_y2x,
                                      params.w2_y2x, params.b2_y2x, flat);
    ad::Var<S> ones = tape.constant(Mat<S>::Ones(1, w.shared_x2y.cols()));
    w.excl_x2y = ad::sub(ones, w.shared_x2y);
    w.excl_y2x = ad::sub(ones, w.shared_y2x);
    return w;
}

/// (1/h) sum_i w_i F_{i,:}.
template <class S>
ad::Var<S> weighted_pool(ad::Var<S> w, ad::Var<S> F) {
    if (w.cols() != F.rows())
        throw invariant_error("weighted_pool: weight length does not match row count");
    return ad::scale(ad::matmul(w, F), S(1) / static_cast<S>(F.rows()));
}

/// Relativity-free fusion of the two directed shared features.
template <class S>
ad::Var<S> fuse_relative(ad::Tape<S>& tape, PairDisentangleParams<S>& params, ad::Var<S> f_xy,
                         ad::Var<S> f_yx) {
    return ad::affine(ad::hstack<S>({f_xy, f_yx}), tape.param(params.fuse_w),
                      tape.param(params.fuse_b));
}

/// Word-id supervision attached to the five features of one pair.
struct PairSupervision {
    int shared = -1;    // shared primitive (all three shared features)
    int excl_x2y = -1;  // exclusive primitive of image y (pooled from F_y)
    int excl_y2x = -1;  // exclusive primitive of image x
};

template <class S>
struct DisentangledPair {
    SharedKind kind = SharedKind::attribute;
    ad::Var<S> f_shared_x2y, f_shared_y2x;
    ad::Var<S> f_excl_x2y, f_excl_y2x;
    ad::Var<S> f_shared_fused;
    PairSupervision supervision;
};

template <class S>
DisentangledPair<S> disentangle_pair(ad::Tape<S>& tape, PairDisentangleParams<S>& params,
                                     ad::Var<S> F_x, ad::Var<S> F_y, SharedKind kind,
                                     const PairSupervision& supervision) {
    ShareWeightVars<S> w = compute_share_weights(tape, params, F_x, F_y);
    DisentangledPair<S> out;
    out.kind = kind;
    out.f_shared_x2y = weighted_pool(w.shared_x2y, F_y);
    out.f_excl_x2y = weighted_pool(w.excl_x2y, F_y);
    out.f_shared_y2x = weighted_pool(w.shared_y2x, F_x);
    out.f_excl_y2x = weighted_pool(w.excl_y2x, F_x);
    out.f_shared_fused = fuse_relative(tape, params, out.f_shared_x2y, out.f_shared_y2x);
    out.supervision = supervision;
    return out;
}

} // namespace trident
