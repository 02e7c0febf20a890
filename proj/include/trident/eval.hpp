// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Generalized-CZSL inference: cosine scores against the phase candidate set,
// the calibration-bias sweep (AUC / best Seen / best Unseen / best HM), and
// image<->text retrieval.
//
// The sweep's evaluation points are derived from the per-row score gaps
// max_seen - max_unseen. Accuracies as a function of the bias are step
// functions whose only breakpoints (at top-1) are those gaps, so the sweep
// evaluates one bias strictly inside each plateau (midpoints, plus sentinels
// outside the extremes). That makes the reported curve exact: refining the
// bias set cannot change any metric, and a dense-grid oracle must agree.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "trident/errors.hpp"

namespace trident {

struct ScoreMatrix {
    Eigen::MatrixXd scores;     // images x candidates, cosine similarities
    std::vector<bool> col_seen; // candidate tag
    std::vector<int> gt_col;    // ground-truth column per row

    bool row_seen(Eigen::Index r) const {
        return col_seen[static_cast<std::size_t>(gt_col[static_cast<std::size_t>(r)])];
    }
};

/// Cosine similarities of every query row against every candidate row.
inline Eigen::MatrixXd score_candidates(const Eigen::MatrixXd& queries,
                                        const Eigen::MatrixXd& candidates) {
    if (candidates.rows() == 0) throw invariant_error("score_candidates: empty candidate set");
    if (queries.cols() != candidates.cols())
        throw invariant_error("score_candidates: dimension mismatch");
    Eigen::MatrixXd qn = queries;
    for (Eigen::Index i = 0; i < qn.rows(); ++i) {
        const double n = qn.row(i).norm();
        if (!(n > 1e-30)) throw numeric_error("score_candidates: zero-norm query row");
        qn.row(i) /= n;
    }
    Eigen::MatrixXd cn = candidates;
    for (Eigen::Index j = 0; j < cn.rows(); ++j) {
        const double n = cn.row(j).norm();
        if (!(n > 1e-30)) throw numeric_error("score_candidates: zero-norm candidate row");
        cn.row(j) /= n;
    }
    return qn * cn.transpose();
}

struct BiasPoint {
    double bias = 0.0;
    double seen = 0.0;   // percent
    double unseen = 0.0; // percent
};

struct MetricsReport {
    double auc = 0.0;        // percent (percent^2 / 100 convention)
    double best_seen = 0.0;  // percent
    double best_unseen = 0.0;
    double best_hm = 0.0;
    int k = 1;
    std::vector<BiasPoint> curve;
    std::string warning;
};

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : r.curve)
        curve.push_back({{"bias", p.bias}, {"seen", p.seen}, {"unseen", p.unseen}});
    j = nlohmann::json{{"auc", r.auc},   {"hm", r.best_hm}, {"seen", r.best_seen},
                       {"unseen", r.best_unseen}, {"k", r.k}, {"curve", curve}};
    if (!r.warning.empty()) j["warning"] = r.warning;
}

namespace detail {

/// Top-k correctness with deterministic tie handling: the ground truth must
/// strictly beat the competition or win ties by column precedence.
inline bool topk_correct(const Eigen::RowVectorXd& biased, int gt, int k) {
    const double g = biased(gt);
    int rank = 0;
    for (Eigen::Index j = 0; j < biased.size(); ++j) {
        if (j == gt) continue;
        if (biased(j) > g || (biased(j) == g && j < gt)) ++rank;
        if (rank >= k) return false;
    }
    return rank < k;
}

struct Accs {
    double seen = 0.0, unseen = 0.0; // fractions
};

inline Accs accuracies_at(const ScoreMatrix& sm, double bias, int k,
                          const std::vector<int>& unseen_cols) {
    Eigen::RowVectorXd biased(sm.scores.cols());
    int seen_rows = 0, unseen_rows = 0, seen_hit = 0, unseen_hit = 0;
    for (Eigen::Index r = 0; r < sm.scores.rows(); ++r) {
        biased = sm.scores.row(r);
        for (int c : unseen_cols) biased(c) += bias;
        const bool hit = topk_correct(biased, sm.gt_col[static_cast<std::size_t>(r)], k);
        if (sm.row_seen(r)) {
            ++seen_rows;
            seen_hit += hit;
        } else {
            ++unseen_rows;
            unseen_hit += hit;
        }
    }
    Accs a;
    a.seen = seen_rows ? static_cast<double>(seen_hit) / seen_rows : 0.0;
    a.unseen = unseen_rows ? static_cast<double>(unseen_hit) / unseen_rows : 0.0;
    return a;
}

} // namespace detail

inline MetricsReport bias_sweep(const ScoreMatrix& sm, int k) {
    if (k < 1) throw config_error("bias_sweep: k must be >= 1");
    if (sm.scores.rows() == 0) throw invariant_error("bias_sweep: empty score matrix");
    if (sm.scores.cols() != static_cast<Eigen::Index>(sm.col_seen.size()) ||
        sm.scores.rows() != static_cast<Eigen::Index>(sm.gt_col.size()))
        throw invariant_error("bias_sweep: inconsistent score matrix");
    for (int g : sm.gt_col)
        if (g < 0 || g >= sm.scores.cols())
            throw invariant_error("bias_sweep: ground-truth column out of range");

    std::vector<int> seen_cols, unseen_cols;
    for (std::size_t c = 0; c < sm.col_seen.size(); ++c)
        (sm.col_seen[c] ? seen_cols : unseen_cols).push_back(static_cast<int>(c));

    MetricsReport rep;
    rep.k = k;

    int unseen_rows = 0;
    for (Eigen::Index r = 0; r < sm.scores.rows(); ++r)
        if (!sm.row_seen(r)) ++unseen_rows;
    if (unseen_rows == 0) rep.warning = "no unseen-tagged rows; unseen metrics are 0";
    if (unseen_cols.empty()) {
        rep.warning = "no unseen-tagged candidates; bias sweep degenerates to raw accuracy";
        detail::Accs a = detail::accuracies_at(sm, 0.0, k, unseen_cols);
        rep.best_seen = 100.0 * a.seen;
        rep.best_unseen = 100.0 * a.unseen;
        const double s = a.seen, u = a.unseen;
        rep.best_hm = (s + u) > 0 ? 100.0 * (2 * s * u / (s + u)) : 0.0;
        rep.curve.push_back({0.0, rep.best_seen, rep.best_unseen});
        return rep;
    }

    // per-row gaps between the best seen and best unseen candidate scores
    std::set<double> gap_set;
    for (Eigen::Index r = 0; r < sm.scores.rows(); ++r) {
        double max_seen = -std::numeric_limits<double>::infinity();
        double max_unseen = -std::numeric_limits<double>::infinity();
        for (int c : seen_cols) max_seen = std::max(max_seen, sm.scores(r, c));
        for (int c : unseen_cols) max_unseen = std::max(max_unseen, sm.scores(r, c));
        if (seen_cols.empty()) max_seen = 0.0;
        gap_set.insert(max_seen - max_unseen);
    }
    std::vector<double> gaps(gap_set.begin(), gap_set.end());

    std::vector<double> biases;
    biases.push_back(gaps.front() - 1.0);
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i)
        biases.push_back(0.5 * (gaps[i] + gaps[i + 1]));
    biases.push_back(gaps.back() + 1.0);

    double best_hm = 0.0;
    for (double b : biases) {
        detail::Accs a = detail::accuracies_at(sm, b, k, unseen_cols);
        rep.curve.push_back({b, 100.0 * a.seen, 100.0 * a.unseen});
        rep.best_seen = std::max(rep.best_seen, 100.0 * a.seen);
        rep.best_unseen = std::max(rep.best_unseen, 100.0 * a.unseen);
        if (a.seen + a.unseen > 0)
            best_hm = std::max(best_hm, 2.0 * a.seen * a.unseen / (a.seen + a.unseen));
    }
    rep.best_hm = 100.0 * best_hm;

    // trapezoid over (unseen, seen), sorted by unseen accuracy. Ties in
    // unseen keep decreasing seen so the traversal matches increasing bias.
    std::vector<BiasPoint> pts = rep.curve;
    std::sort(pts.begin(), pts.end(), [](const BiasPoint& x, const BiasPoint& y) {
        return x.unseen != y.unseen ? x.unseen < y.unseen : x.seen > y.seen;
    });
    double auc = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        auc += (pts[i + 1].unseen - pts[i].unseen) * 0.5 * (pts[i].seen + pts[i + 1].seen);
    rep.auc = auc / 100.0;
    return rep;
}

/// Raw (zero-bias) top-k accuracy split by row tag; convenience for reporting.
inline std::pair<double, double> raw_topk_accuracy(const ScoreMatrix& sm, int k) {
    std::vector<int> unseen_cols;
    for (std::size_t c = 0; c < sm.col_seen.size(); ++c)
        if (!sm.col_seen[c]) unseen_cols.push_back(static_cast<int>(c));
    detail::Accs a = detail::accuracies_at(sm, 0.0, k, unseen_cols);
    return {a.seen, a.unseen};
}

/// Indices of the top_n candidates by descending cosine to the query, ties
/// broken by candidate index.
inline std::vector<int> retrieve_ranked(const Eigen::RowVectorXd& query,
                                        const Eigen::MatrixXd& candidates, int top_n) {
    Eigen::MatrixXd s = score_candidates(query, candidates);
    std::vector<int> order(static_cast<std::size_t>(candidates.rows()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return s(0, a) > s(0, b); });
    if (top_n >= 0 && static_cast<int>(order.size()) > top_n) order.resize(static_cast<std::size_t>(top_n));
    return order;
}

} // namespace trident
