// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "trident/eval.hpp"

using namespace trident;

namespace {

/// Brute-force reference: evaluates accuracies on a dense, evenly spaced bias
/// grid and integrates the (unseen, seen) polyline by trapezoid. Independent
/// of the production sweep: plain argmax-count logic, no gap analysis.
struct OracleReport {
    double best_seen = 0, best_unseen = 0, best_hm = 0, auc = 0; // percents
};

OracleReport dense_grid_oracle(const ScoreMatrix& sm, int k, int grid = 10000) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<int> unseen_cols;
    for (std::size_t c = 0; c < sm.col_seen.size(); ++c)
        if (!sm.col_seen[c]) unseen_cols.push_back(static_cast<int>(c));
    for (Eigen::Index r = 0; r < sm.scores.rows(); ++r) {
        double ms = -1e300, mu = -1e300;
        for (Eigen::Index c = 0; c < sm.scores.cols(); ++c)
            (sm.col_seen[static_cast<std::size_t>(c)] ? ms : mu) =
                std::max(sm.col_seen[static_cast<std::size_t>(c)] ? ms : mu, sm.scores(r, c));
        lo = std::min(lo, ms - mu);
        hi = std::max(hi, ms - mu);
    }
    lo -= 1.0;
    hi += 1.0;

    OracleReport rep;
    std::vector<std::pair<double, double>> pts; // (unseen, seen) fractions
    for (int g = 0; g < grid; ++g) {
        const double b = lo + (hi - lo) * g / (grid - 1.0);
        int sr = 0, ur = 0, sh = 0, uh = 0;
        for (Eigen::Index r = 0; r < sm.scores.rows(); ++r) {
            const int gt = sm.gt_col[static_cast<std::size_t>(r)];
            const double gtb =
                sm.scores(r, gt) + (sm.col_seen[static_cast<std::size_t>(gt)] ? 0.0 : b);
            int better = 0;
            for (Eigen::Index c = 0; c < sm.scores.cols(); ++c) {
                if (c == gt) continue;
                const double cb =
                    sm.scores(r, c) + (sm.col_seen[static_cast<std::size_t>(c)] ? 0.0 : b);
                if (cb > gtb) ++better;
            }
            const bool hit = better < k;
            if (sm.row_seen(r)) {
                ++sr;
                sh += hit;
            } else {
                ++ur;
                uh += hit;
            }
        }
        const double s = sr ? double(sh) / sr : 0.0;
        const double u = ur ? double(uh) / ur : 0.0;
        pts.emplace_back(u, s);
        rep.best_seen = std::max(rep.best_seen, 100.0 * s);
        rep.best_unseen = std::max(rep.best_unseen, 100.0 * u);
        if (s + u > 0) rep.best_hm = std::max(rep.best_hm, 100.0 * 2 * s * u / (s + u));
    }
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second > b.second;
    });
    double auc = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        auc += (pts[i + 1].first - pts[i].first) * 0.5 * (pts[i].second + pts[i + 1].second);
    rep.auc = auc * 100.0;
    return rep;
}

ScoreMatrix random_instance(Rng& rng, int max_rows = 20, int max_cols = 10) {
    ScoreMatrix sm;
    const int rows = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_rows - 1)));
    const int cols = 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_cols - 2)));
    sm.scores.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) sm.scores(r, c) = 2.0 * rng.uniform() - 1.0;
    sm.col_seen.resize(static_cast<std::size_t>(cols));
    // at least one seen and one unseen column
    sm.col_seen[0] = true;
    sm.col_seen[1] = false;
    for (int c = 2; c < cols; ++c) sm.col_seen[static_cast<std::size_t>(c)] = rng.uniform() < 0.5;
    for (int r = 0; r < rows; ++r)
        sm.gt_col.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(cols))));
    return sm;
}

} // namespace

TEST_CASE("score_candidates computes cosines") {
    SECTION("a candidate equal to the query scores one") {
        Eigen::MatrixXd q(1, 3), c(2, 3);
        q << 1.0, 2.0, 3.0;
        c << 2.0, 4.0, 6.0, -3.0, 0.0, 1.0;
        Eigen::MatrixXd s = score_candidates(q, c);
        REQUIRE(s(0, 0) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("orthogonal vectors score zero") {
        Eigen::MatrixXd q(1, 2), c(1, 2);
        q << 1.0, 0.0;
        c << 0.0, 5.0;
        REQUIRE(score_candidates(q, c)(0, 0) == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("random case matches the normalized dot product") {
        Rng rng(1);
        Eigen::MatrixXd q = tsupport::randmat(rng, 3, 4), c = tsupport::randmat(rng, 4, 4);
        Eigen::MatrixXd s = score_candidates(q, c);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) {
                const double expect =
                    q.row(i).dot(c.row(j)) / (q.row(i).norm() * c.row(j).norm());
                REQUIRE(s(i, j) == Catch::Approx(expect).margin(1e-7));
                REQUIRE(std::abs(s(i, j)) <= 1.0 + 1e-12);
            }
    }
    SECTION("empty candidate sets are rejected") {
        Eigen::MatrixXd q(1, 2);
        q << 1.0, 0.0;
        REQUIRE_THROWS_AS(score_candidates(q, Eigen::MatrixXd(0, 2)), invariant_error);
    }
}

TEST_CASE("bias sweep on a two-row hand instance matches the dense oracle") {
    ScoreMatrix sm;
    sm.scores.resize(2, 2);
    // row 0: seen gt (col 0); row 1: unseen gt (col 1)
    sm.scores << 0.8, 0.3, 0.6, 0.5;
    sm.col_seen = {true, false};
    sm.gt_col = {0, 1};
    MetricsReport rep = bias_sweep(sm, 1);
    OracleReport oracle = dense_grid_oracle(sm, 1);
    REQUIRE(rep.best_seen == Catch::Approx(oracle.best_seen).margin(1e-6));
    REQUIRE(rep.best_unseen == Catch::Approx(oracle.best_unseen).margin(1e-6));
    REQUIRE(rep.best_hm == Catch::Approx(oracle.best_hm).margin(1e-6));
    REQUIRE(rep.auc == Catch::Approx(oracle.auc).margin(1e-6));
    // both rows can be right at some bias: 100/100/100, auc 100
    REQUIRE(rep.best_seen == 100.0);
    REQUIRE(rep.best_unseen == 100.0);
}

TEST_CASE("bias sweep equals the dense oracle on random instances") {
    Rng rng(20240817);
    for (int trial = 0; trial < 12; ++trial) {
        ScoreMatrix sm = random_instance(rng);
        MetricsReport rep = bias_sweep(sm, 1);
        OracleReport oracle = dense_grid_oracle(sm, 1);
        INFO("trial " << trial);
        REQUIRE(rep.best_seen == Catch::Approx(oracle.best_seen).margin(1e-6));
        REQUIRE(rep.best_unseen == Catch::Approx(oracle.best_unseen).margin(1e-6));
        REQUIRE(rep.best_hm == Catch::Approx(oracle.best_hm).margin(1e-6));
        REQUIRE(rep.auc == Catch::Approx(oracle.auc).margin(1e-6));
    }
}

TEST_CASE("sweep curve is monotone in the bias") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        ScoreMatrix sm = random_instance(rng);
        MetricsReport rep = bias_sweep(sm, 1);
        for (std::size_t i = 0; i + 1 < rep.curve.size(); ++i) {
            REQUIRE(rep.curve[i].bias < rep.curve[i + 1].bias);
            REQUIRE(rep.curve[i].seen >= rep.curve[i + 1].seen);     // non-increasing
            REQUIRE(rep.curve[i].unseen <= rep.curve[i + 1].unseen); // non-decreasing
        }
        // at the high sentinel every prediction is unseen: seen rows all miss
        REQUIRE(rep.curve.back().seen == 0.0);
        // AUC upper bound in the percent convention
        REQUIRE(rep.auc <= rep.best_seen * rep.best_unseen / 100.0 + 1e-9);
    }
}

TEST_CASE("top-3 accuracy dominates top-1 at every bias") {
    Rng rng(8);
    ScoreMatrix sm = random_instance(rng, 15, 8);
    MetricsReport r1 = bias_sweep(sm, 1);
    MetricsReport r3 = bias_sweep(sm, 3);
    REQUIRE(r3.best_seen >= r1.best_seen);
    REQUIRE(r3.best_unseen >= r1.best_unseen);
    // same evaluation points, pointwise domination
    REQUIRE(r1.curve.size() == r3.curve.size());
    for (std::size_t i = 0; i < r1.curve.size(); ++i) {
        REQUIRE(r3.curve[i].seen >= r1.curve[i].seen);
        REQUIRE(r3.curve[i].unseen >= r1.curve[i].unseen);
    }
}

TEST_CASE("row order does not change the report") {
    Rng rng(9);
    ScoreMatrix sm = random_instance(rng);
    MetricsReport base = bias_sweep(sm, 1);
    ScoreMatrix shuffled = sm;
    std::vector<int> perm(static_cast<std::size_t>(sm.scores.rows()));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.scores.row(static_cast<Eigen::Index>(i)) = sm.scores.row(perm[i]);
        shuffled.gt_col[i] = sm.gt_col[static_cast<std::size_t>(perm[i])];
    }
    MetricsReport rep = bias_sweep(shuffled, 1);
    REQUIRE(rep.auc == Catch::Approx(base.auc).margin(1e-12));
    REQUIRE(rep.best_hm == Catch::Approx(base.best_hm).margin(1e-12));
    REQUIRE(rep.best_seen == base.best_seen);
    REQUIRE(rep.best_unseen == base.best_unseen);
}

TEST_CASE("a sweep without unseen rows warns and zeroes the unseen metrics") {
    ScoreMatrix sm;
    sm.scores.resize(2, 3);
    sm.scores << 0.9, 0.1, 0.2, 0.2, 0.8, 0.3;
    sm.col_seen = {true, true, false};
    sm.gt_col = {0, 1}; // both rows seen
    MetricsReport rep = bias_sweep(sm, 1);
    REQUIRE(rep.best_unseen == 0.0);
    REQUIRE(!rep.warning.empty());
    nlohmann::json j = rep;
    REQUIRE(j.contains("warning"));
}

TEST_CASE("retrieval ranks by descending cosine") {
    SECTION("the query itself ranks first") {
        Rng rng(10);
        Eigen::MatrixXd cand = tsupport::randmat(rng, 6, 5);
        Eigen::RowVectorXd q = cand.row(3);
        auto ranked = retrieve_ranked(q, cand, 5);
        REQUIRE(ranked.front() == 3);
        REQUIRE(ranked.size() == 5);
    }
    SECTION("reversing the candidate list keeps the ranked contents") {
        Rng rng(11);
        Eigen::MatrixXd cand = tsupport::randmat(rng, 7, 4);
        Eigen::RowVectorXd q = tsupport::randmat(rng, 1, 4).row(0);
        auto fwd = retrieve_ranked(q, cand, 7);
        Eigen::MatrixXd rev = cand.colwise().reverse();
        auto bwd = retrieve_ranked(q, rev, 7);
        for (std::size_t i = 0; i < fwd.size(); ++i) REQUIRE(fwd[i] == 6 - bwd[i]);
    }
    SECTION("ranking matches an independent sort") {
        Rng rng(12);
        Eigen::MatrixXd cand = tsupport::randmat(rng, 9, 4);
        Eigen::RowVectorXd q = tsupport::randmat(rng, 1, 4).row(0);
        auto ranked = retrieve_ranked(q, cand, -1);
        std::vector<std::pair<double, int>> scored;
        for (int i = 0; i < 9; ++i)
            scored.emplace_back(-q.dot(cand.row(i)) / (q.norm() * cand.row(i).norm()), i);
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (int i = 0; i < 9; ++i) REQUIRE(ranked[static_cast<std::size_t>(i)] == scored[static_cast<std::size_t>(i)].second);
    }
}
