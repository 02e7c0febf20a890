// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Cosine-softmax classification with word expanding, attribute smoothing and
// the four training losses. The default temperature reading divides by delta
// (cos/0.05 = 20*cos); the literal multiply-by-delta form stays available as
// a config flag for fidelity experiments.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "trident/autodiff.hpp"
#include "trident/config.hpp"
#include "trident/errors.hpp"
#include "trident/vocab.hpp"

namespace trident {

/// Logit scale for temperature delta.
inline double temperature_scale(double delta, bool multiplies) {
    if (delta <= 0.0) throw config_error("temperature must be > 0");
    return multiplies ? delta : 1.0 / delta;
}

/// softmax_j( cos(f, e_j) * scale ). Throws numeric_error on zero-norm input.
template <class S>
Eigen::Vector<S, Eigen::Dynamic> classifier_distribution(
    const Eigen::RowVector<S, Eigen::Dynamic>& f, const Mat<S>& candidates, double delta,
    bool multiplies = false) {
    const S fn = f.norm();
    if (!(fn > S(1e-20))) throw numeric_error("classifier_distribution: zero-norm query");
    const S scale = static_cast<S>(temperature_scale(delta, multiplies));
    Eigen::Vector<S, Eigen::Dynamic> logits(candidates.rows());
    for (Eigen::Index j = 0; j < candidates.rows(); ++j) {
        const S cn = candidates.row(j).norm();
        if (!(cn > S(1e-20)))
            throw numeric_error("classifier_distribution: zero-norm candidate row " +
                                std::to_string(j));
        logits(j) = scale * f.dot(candidates.row(j)) / (fn * cn);
    }
    const S m = logits.maxCoeff();
    Eigen::Vector<S, Eigen::Dynamic> p = (logits.array() - m).exp();
    p /= p.sum();
    return p;
}

/// Target distribution of Eq.-12 shape: 1-alpha at the ground truth, alpha/t
/// on each auxiliary id, zero elsewhere.
template <class S = double>
Eigen::Vector<S, Eigen::Dynamic> smoothed_targets(int vocab_size, int gt_id,
                                                  const std::vector<int>& aux_ids, double alpha) {
    if (gt_id < 0 || gt_id >= vocab_size) throw invariant_error("smoothed_targets: bad gt id");
    if (alpha < 0.0 || alpha >= 1.0) throw config_error("smoothing alpha must be in [0, 1)");
    Eigen::Vector<S, Eigen::Dynamic> z = Eigen::Vector<S, Eigen::Dynamic>::Zero(vocab_size);
    if (alpha == 0.0 || aux_ids.empty()) {
        z(gt_id) = S(1);
        return z;
    }
    std::vector<int> seen;
    for (int a : aux_ids) {
        if (a < 0 || a >= vocab_size) throw invariant_error("smoothed_targets: bad aux id");
        if (a == gt_id)
            throw invariant_error("smoothed_targets: auxiliary id equals the ground truth");
        for (int s : seen)
            if (s == a) throw invariant_error("smoothed_targets: duplicate auxiliary id");
        seen.push_back(a);
    }
    const S t = static_cast<S>(aux_ids.size());
    z(gt_id) = S(1) - static_cast<S>(alpha);
    for (int a : aux_ids) z(a) = static_cast<S>(alpha) / t;
    return z;
}

/// -sum_y z_y log p_y against classifier_distribution, computed in log space.
template <class S>
S cross_entropy(const Eigen::RowVector<S, Eigen::Dynamic>& f,
                const Eigen::Vector<S, Eigen::Dynamic>& targets, const Mat<S>& candidates,
                double delta, bool multiplies = false) {
    if (targets.size() != candidates.rows())
        throw invariant_error("cross_entropy: target/candidate size mismatch");
    const S fn = f.norm();
    if (!(fn > S(1e-20))) throw numeric_error("cross_entropy: zero-norm query");
    const S scale = static_cast<S>(temperature_scale(delta, multiplies));
    Eigen::Vector<S, Eigen::Dynamic> logits(candidates.rows());
    for (Eigen::Index j = 0; j < candidates.rows(); ++j) {
        const S cn = candidates.row(j).norm();
        if (!(cn > S(1e-20))) throw numeric_error("cross_entropy: zero-norm candidate");
        logits(j) = scale * f.dot(candidates.row(j)) / (fn * cn);
    }
    const S m = logits.maxCoeff();
    const S lse = std::log((logits.array() - m).exp().sum()) + m;
    S loss = S(0);
    for (Eigen::Index j = 0; j < targets.size(); ++j)
        if (targets(j) != S(0)) loss -= targets(j) * (logits(j) - lse);
    return loss;
}

/// Tape version: total cross-entropy over a stack of query rows against a
/// shared candidate matrix. `targets` is a dense R x K constant.
template <class S>
ad::Var<S> cross_entropy_sum(ad::Tape<S>& tape, ad::Var<S> queries, ad::Var<S> candidates,
                             const Mat<S>& targets, double delta, bool multiplies = false) {
    const S scale = static_cast<S>(temperature_scale(delta, multiplies));
    ad::Var<S> qn = ad::normalize_rows(queries);
    ad::Var<S> cn = ad::normalize_rows(candidates);
    ad::Var<S> logits = ad::scale(ad::matmul(qn, ad::transpose(cn)), scale);
    ad::Var<S> logp = ad::log_softmax_rows(logits);
    ad::Var<S> weighted = ad::hadamard(tape.constant(targets), logp);
    return ad::scale(ad::sum_all(weighted), S(-1));
}

struct LossBreakdown {
    double ortho = 0.0;
    double comp = 0.0;
    double attr = 0.0;
    double obj = 0.0;
    double total = 0.0;
};

/// Eq.-16 weighting.
inline LossBreakdown total_loss(double l_ortho, double l_comp, double l_attr, double l_obj,
                                const ModelConfig& cfg) {
    for (double v : {l_ortho, l_comp, l_attr, l_obj})
        if (!std::isfinite(v)) throw training_error("non-finite loss component");
    LossBreakdown b;
    b.ortho = l_ortho;
    b.comp = l_comp;
    b.attr = l_attr;
    b.obj = l_obj;
    b.total = cfg.gamma_ortho * l_ortho + cfg.gamma_comp * l_comp + cfg.gamma_attr * l_attr +
              cfg.gamma_obj * l_obj;
    return b;
}

} // namespace trident
