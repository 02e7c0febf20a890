// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Visual feature extraction: patch alignment, feature adaptive aggregation
// (FAA) modules, learnable condition masks, the stacked bundle with its
// orthogonality penalty, and the image embedder producing f_comp.

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "trident/autodiff.hpp"
#include "trident/config.hpp"
#include "trident/data.hpp"
#include "trident/errors.hpp"
#include "trident/rng.hpp"

namespace trident {

template <class S>
struct ExtractorParams {
    Param<S> align_w; // d_p x d
    Param<S> align_b; // 1 x d
    std::vector<Param<S>> faa_w; // p entries, d x 1
    std::vector<Param<S>> faa_b; // p entries, 1 x 1
    std::vector<Param<S>> masks; // q entries, 1 x d
    Param<S> embed_w; // 2d x D_c
    Param<S> embed_b; // 1 x D_c
    Param<S> bn_gamma, bn_beta; // 1 x 2d
    Param<S> bn_mean, bn_var;   // 1 x 2d running statistics

    void init(const ModelConfig& cfg, Rng rng) {
        const int d = cfg.d_v;
        auto gauss = [&](Eigen::Index r, Eigen::Index c, double s) {
            Mat<S> m(r, c);
            for (Eigen::Index i = 0; i < r; ++i)
                for (Eigen::Index j = 0; j < c; ++j) m(i, j) = static_cast<S>(rng.normal() * s);
            return m;
        };
        align_w.reset("extractor.align_w", gauss(cfg.d_p, d, std::sqrt(2.0 / (cfg.d_p + d))));
        align_b.reset("extractor.align_b", Mat<S>::Zero(1, d));
        faa_w.resize(static_cast<std::size_t>(cfg.p));
        faa_b.resize(static_cast<std::size_t>(cfg.p));
        for (int k = 0; k < cfg.p; ++k) {
            faa_w[static_cast<std::size_t>(k)].reset("extractor.faa_w" + std::to_string(k),
                                                     gauss(d, 1, cfg.init_sigma));
            faa_b[static_cast<std::size_t>(k)].reset("extractor.faa_b" + std::to_string(k),
                                                     Mat<S>::Zero(1, 1));
        }
        masks.resize(static_cast<std::size_t>(cfg.q));
        for (int j = 0; j < cfg.q; ++j) {
            Mat<S> m = Mat<S>::Ones(1, d) + gauss(1, d, cfg.init_sigma);
            masks[static_cast<std::size_t>(j)].reset("extractor.mask" + std::to_string(j),
                                                     std::move(m));
        }
        embed_w.reset("extractor.embed_w",
                      gauss(2 * d, cfg.comp_dim, std::sqrt(2.0 / (2 * d + cfg.comp_dim))));
        embed_b.reset("extractor.embed_b", Mat<S>::Zero(1, cfg.comp_dim));
        bn_gamma.reset("extractor.bn_gamma", Mat<S>::Ones(1, 2 * d), ParamGroup::main, false);
        bn_beta.reset("extractor.bn_beta", Mat<S>::Zero(1, 2 * d), ParamGroup::main, false);
        bn_mean.reset("extractor.bn_mean", Mat<S>::Zero(1, 2 * d), ParamGroup::norm_state, false);
        bn_var.reset("extractor.bn_var", Mat<S>::Ones(1, 2 * d), ParamGroup::norm_state, false);
    }

    void collect(std::vector<Param<S>*>& out) {
        out.push_back(&align_w);
        out.push_back(&align_b);
        for (auto& pw : faa_w) out.push_back(&pw);
        for (auto& pb : faa_b) out.push_back(&pb);
        for (auto& m : masks) out.push_back(&m);
        out.push_back(&embed_w);
        out.push_back(&embed_b);
        out.push_back(&bn_gamma);
        out.push_back(&bn_beta);
        out.push_back(&bn_mean);
        out.push_back(&bn_var);
    }
};

/// One FAA module: per-patch gate agg = sigmoid(patches w + b), output is the
/// gate-weighted *sum* of patch rows.
template <class S>
ad::Var<S> faa_forward(ad::Tape<S>& tape, Param<S>& w, Param<S>& b, ad::Var<S> patches) {
    ad::Var<S> pre = ad::add_rowbcast(ad::matmul(patches, tape.param(w)), tape.param(b));
    ad::Var<S> agg = ad::sigmoid(pre); // n x 1
    return ad::matmul(ad::transpose(agg), patches); // 1 x d
}

/// One condition mask: elementwise gate on the cls feature.
template <class S>
ad::Var<S> condition_mask_forward(ad::Tape<S>& tape, Param<S>& mask, ad::Var<S> cls) {
    return ad::hadamard(cls, tape.param(mask));
}

/// || F F^T - I ||_Fro.
template <class S>
ad::Var<S> orthogonal_penalty(ad::Tape<S>& tape, ad::Var<S> F) {
    const Eigen::Index h = F.rows();
    ad::Var<S> gram = ad::matmul(F, ad::transpose(F));
    ad::Var<S> eye = tape.constant(Mat<S>::Identity(h, h));
    return ad::frobenius(ad::sub(gram, eye));
}

/// Per-image forward pieces kept on the tape: the training engine batches the
/// image-embedder tail separately because batch normalization mixes rows.
template <class S>
struct BundleVars {
    ad::Var<S> F_l;     // p x d
    ad::Var<S> F_g;     // q x d
    ad::Var<S> F;       // (p+q) x d, locals first
    ad::Var<S> pooled;  // 1 x 2d, [avg(F_g), avg(F_l)]
    ad::Var<S> ortho;   // 1 x 1
    std::vector<ad::Var<S>> faa_gates; // p entries, n x 1 (diagnostics)
};

template <class S>
BundleVars<S> extract_on_tape(ad::Tape<S>& tape, ExtractorParams<S>& params,
                              const ModelConfig& cfg, const RawImageFeatures& raw) {
    if (raw.patches.rows() != cfg.n_patches || raw.patches.cols() != cfg.d_p ||
        raw.cls.cols() != cfg.d_v)
        throw config_error("raw feature shapes do not match the model config");
    ad::Var<S> patches = tape.constant(raw.patches.template cast<S>());
    ad::Var<S> cls = tape.constant(raw.cls.template cast<S>());

    ad::Var<S> aligned =
        ad::affine(patches, tape.param(params.align_w), tape.param(params.align_b));

    BundleVars<S> out;
    std::vector<ad::Var<S>> rows;
    rows.reserve(static_cast<std::size_t>(cfg.h()));
    for (int k = 0; k < cfg.p; ++k) {
        if (cfg.use_faa) {
            auto& w = params.faa_w[static_cast<std::size_t>(k)];
            auto& b = params.faa_b[static_cast<std::size_t>(k)];
            ad::Var<S> pre = ad::add_rowbcast(ad::matmul(aligned, tape.param(w)), tape.param(b));
            ad::Var<S> agg = ad::sigmoid(pre);
            out.faa_gates.push_back(agg);
            rows.push_back(ad::matmul(ad::transpose(agg), aligned));
        } else {
            rows.push_back(ad::mean_rows(aligned));
        }
    }
    for (int j = 0; j < cfg.q; ++j) {
        if (cfg.use_condition_masks)
            rows.push_back(condition_mask_forward(tape, params.masks[static_cast<std::size_t>(j)], cls));
        else
            rows.push_back(cls);
    }
    std::vector<ad::Var<S>> local_rows(rows.begin(), rows.begin() + cfg.p);
    std::vector<ad::Var<S>> global_rows(rows.begin() + cfg.p, rows.end());
    out.F_l = ad::vstack(local_rows);
    out.F_g = ad::vstack(global_rows);
    out.F = ad::vstack<S>({out.F_l, out.F_g});
    out.ortho = orthogonal_penalty(tape, out.F);
    out.pooled = ad::hstack<S>({ad::mean_rows(out.F_g), ad::mean_rows(out.F_l)});
    return out;
}

/// Image-embedder tail over a stack of pooled rows (B x 2d): batch norm,
/// rectifier, dropout (training only), then the linear map to D_c. In
/// training mode the running statistics are updated in place.
template <class S>
ad::Var<S> image_embed_tail(ad::Tape<S>& tape, ExtractorParams<S>& params, const ModelConfig& cfg,
                            ad::Var<S> pooled, bool training, Rng& dropout_rng) {
    ad::Var<S> xhat;
    if (training && pooled.rows() > 1) {
        ad::Var<S> mu = ad::mean_rows(pooled);
        ad::Var<S> centered = ad::sub_rowbcast(pooled, mu);
        ad::Var<S> var = ad::mean_rows(ad::hadamard(centered, centered));
        ad::Var<S> rstd = ad::rsqrt(ad::shift(var, static_cast<S>(cfg.bn_eps)));
        xhat = ad::mul_rowbcast(centered, rstd);
        // running statistics (unbiased variance, matching common BN practice)
        const auto B = static_cast<double>(pooled.rows());
        const S mom = static_cast<S>(cfg.bn_momentum);
        Mat<S> batch_mu = mu.val();
        Mat<S> batch_var = var.val() * static_cast<S>(B / (B - 1.0));
        params.bn_mean.value = (S(1) - mom) * params.bn_mean.value + mom * batch_mu;
        params.bn_var.value = (S(1) - mom) * params.bn_var.value + mom * batch_var;
    } else {
        ad::Var<S> mu = tape.constant(params.bn_mean.value);
        Mat<S> rstd_v = (params.bn_var.value.array() + static_cast<S>(cfg.bn_eps))
                            .rsqrt()
                            .matrix();
        ad::Var<S> rstd = tape.constant(std::move(rstd_v));
        xhat = ad::mul_rowbcast(ad::sub_rowbcast(pooled, mu), rstd);
    }
    ad::Var<S> bn = ad::add_rowbcast(ad::mul_rowbcast(xhat, tape.param(params.bn_gamma)),
                                     tape.param(params.bn_beta));
    ad::Var<S> act = ad::relu(bn);
    act = ad::dropout(act, cfg.dropout, training, dropout_rng);
    return ad::affine(act, tape.param(params.embed_w), tape.param(params.embed_b));
}

/// Plain-value bundle for the inference surface.
template <class S>
struct VisualFeatureBundle {
    Mat<S> F_l, F_g, F;
    Eigen::RowVector<S, Eigen::Dynamic> f_comp;
};

/// Deterministic single-image extraction (evaluation mode: running BN stats,
/// dropout off).
template <class S>
VisualFeatureBundle<S> extract(ExtractorParams<S>& params, const ModelConfig& cfg,
                               const RawImageFeatures& raw) {
    ad::Tape<S> tape;
    BundleVars<S> b = extract_on_tape(tape, params, cfg, raw);
    Rng unused(0);
    ad::Var<S> f_comp = image_embed_tail(tape, params, cfg, b.pooled, false, unused);
    VisualFeatureBundle<S> out;
    out.F_l = b.F_l.val();
    out.F_g = b.F_g.val();
    out.F = b.F.val();
    out.f_comp = f_comp.val().row(0);
    return out;
}

} // namespace trident
