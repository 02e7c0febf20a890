// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Shared test utilities: finite-difference gradient checking, scratch
// directories, small random matrices.

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "trident/autodiff.hpp"
#include "trident/rng.hpp"

namespace tsupport {

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double denom = std::max({a.norm(), b.norm(), 1e-12});
    return (a - b).norm() / denom;
}

/// Central finite differences over every entry of every parameter against the
/// analytic gradients produced by `backward`. Returns the worst per-parameter
/// relative error (norm-wise).
inline double gradcheck(const std::vector<trident::Param<double>*>& params,
                        const std::function<double()>& value,
                        const std::function<void()>& backward, double step = 1e-5) {
    for (auto* p : params) p->zero_grad();
    backward();
    std::vector<Eigen::MatrixXd> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        trident::Param<double>* p = params[pi];
        Eigen::MatrixXd num(p->value.rows(), p->value.cols());
        for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
            for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
                const double orig = p->value(i, j);
                p->value(i, j) = orig + step;
                const double fp = value();
                p->value(i, j) = orig - step;
                const double fm = value();
                p->value(i, j) = orig;
                num(i, j) = (fp - fm) / (2.0 * step);
            }
        }
        worst = std::max(worst, rel_err(analytic[pi], num));
        p->zero_grad();
    }
    return worst;
}

inline Eigen::MatrixXd randmat(trident::Rng& rng, Eigen::Index r, Eigen::Index c,
                               double scale = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal() * scale;
    return m;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("trident_test_" + tag + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string str(const std::string& name = "") const {
        return name.empty() ? path_.string() : (path_ / name).string();
    }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

} // namespace tsupport
