// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "trident/autodiff.hpp"

using namespace trident;
using ad::Var;

namespace {

// Reduces any op output to a scalar with fixed random weights so every entry
// of the output contributes to the checked gradient.
double scalarize_weights_seed = 99;

template <class BuildOp>
double op_gradcheck(std::vector<Param<double>*> inputs, BuildOp&& build) {
    Rng wrng(static_cast<std::uint64_t>(scalarize_weights_seed));
    Eigen::MatrixXd w; // fixed after first forward
    auto value = [&]() {
        ad::Tape<double> tape;
        std::vector<Var<double>> vars;
        for (auto* p : inputs) vars.push_back(tape.param(*p));
        Var<double> out = build(tape, vars);
        if (w.size() == 0) w = tsupport::randmat(wrng, out.rows(), out.cols());
        return ad::sum_all(ad::hadamard(out, tape.constant(w))).val()(0, 0);
    };
    auto backward = [&]() {
        ad::Tape<double> tape;
        std::vector<Var<double>> vars;
        for (auto* p : inputs) vars.push_back(tape.param(*p));
        Var<double> out = build(tape, vars);
        if (w.size() == 0) w = tsupport::randmat(wrng, out.rows(), out.cols());
        tape.backward(ad::sum_all(ad::hadamard(out, tape.constant(w))));
    };
    return tsupport::gradcheck(inputs, value, backward);
}

Param<double> make_param(const std::string& name, Eigen::MatrixXd v) {
    Param<double> p;
    p.reset(name, std::move(v));
    return p;
}

} // namespace

TEST_CASE("elementwise and matrix ops match finite differences") {
    Rng rng(42);
    auto A = make_param("A", tsupport::randmat(rng, 3, 4));
    auto B = make_param("B", tsupport::randmat(rng, 3, 4));
    auto M = make_param("M", tsupport::randmat(rng, 4, 5));

    SECTION("add/sub/hadamard") {
        REQUIRE(op_gradcheck({&A, &B}, [](auto& t, auto& v) {
                    return ad::add(v[0], ad::hadamard(v[0], ad::sub(v[1], v[0])));
                }) < 1e-7);
    }
    SECTION("matmul and transpose") {
        REQUIRE(op_gradcheck({&A, &M}, [](auto& t, auto& v) {
                    return ad::matmul(v[0], v[1]);
                }) < 1e-7);
        REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) {
                    return ad::matmul(ad::transpose(v[0]), v[0]);
                }) < 1e-7);
    }
    SECTION("scale and shift") {
        REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) {
                    return ad::shift(ad::scale(v[0], 2.5), -0.75);
                }) < 1e-7);
    }
    SECTION("sigmoid relu") {
        REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) { return ad::sigmoid(v[0]); }) < 1e-6);
        // keep entries away from the relu kink
        auto C = make_param("C", tsupport::randmat(rng, 3, 4).array().abs().matrix() +
                                     Eigen::MatrixXd::Constant(3, 4, 0.5));
        REQUIRE(op_gradcheck({&C}, [](auto& t, auto& v) { return ad::relu(v[0]); }) < 1e-7);
    }
    SECTION("rsqrt and sqrt on positive inputs") {
        auto P = make_param("P", (tsupport::randmat(rng, 3, 3).array().abs() + 1.0).matrix());
        REQUIRE(op_gradcheck({&P}, [](auto& t, auto& v) { return ad::rsqrt(v[0]); }) < 1e-6);
        REQUIRE(op_gradcheck({&P}, [](auto& t, auto& v) { return ad::sqrt_cw(v[0]); }) < 1e-6);
    }
}

TEST_CASE("reductions, stacking and broadcasting match finite differences") {
    Rng rng(43);
    auto A = make_param("A", tsupport::randmat(rng, 4, 3));
    auto B = make_param("B", tsupport::randmat(rng, 2, 3));
    auto R = make_param("R", tsupport::randmat(rng, 1, 3));

    REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) { return ad::mean_rows(v[0]); }) < 1e-7);
    REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) { return ad::sum_all(v[0]); }) < 1e-7);
    REQUIRE(op_gradcheck({&A, &B}, [](auto& t, auto& v) {
                return ad::vstack<double>({v[0], v[1]});
            }) < 1e-7);
    REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) {
                return ad::hstack<double>({v[0], ad::scale(v[0], 2.0)});
            }) < 1e-7);
    REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) { return ad::block(v[0], 1, 1, 2, 2); }) <
            1e-7);
    REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) { return ad::flatten_rows(v[0]); }) < 1e-7);
    REQUIRE(op_gradcheck({&A, &R}, [](auto& t, auto& v) {
                return ad::add_rowbcast(v[0], v[1]);
            }) < 1e-7);
    REQUIRE(op_gradcheck({&A, &R}, [](auto& t, auto& v) {
                return ad::sub_rowbcast(v[0], v[1]);
            }) < 1e-7);
    REQUIRE(op_gradcheck({&A, &R}, [](auto& t, auto& v) {
                return ad::mul_rowbcast(v[0], v[1]);
            }) < 1e-7);
    REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) { return ad::gather_rows(v[0], {2, 0, 2}); }) <
            1e-7);
}

TEST_CASE("softmax and normalization ops match finite differences") {
    Rng rng(44);
    auto A = make_param("A", tsupport::randmat(rng, 3, 5));
    REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) { return ad::log_softmax_rows(v[0]); }) <
            1e-6);
    auto N = make_param("N", tsupport::randmat(rng, 3, 5) +
                                 Eigen::MatrixXd::Constant(3, 5, 0.1));
    REQUIRE(op_gradcheck({&N}, [](auto& t, auto& v) { return ad::normalize_rows(v[0]); }) < 1e-6);
    REQUIRE(op_gradcheck({&A}, [](auto& t, auto& v) { return ad::frobenius(v[0]); }) < 1e-6);
}

TEST_CASE("normalize_rows rejects zero rows") {
    ad::Tape<double> tape;
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 3);
    z.row(0) << 1.0, 2.0, 3.0;
    auto v = tape.constant(z);
    REQUIRE_THROWS_AS(ad::normalize_rows(v), numeric_error);
}

TEST_CASE("forward passes are pure") {
    Rng rng(45);
    Eigen::MatrixXd x = tsupport::randmat(rng, 4, 4);
    auto run = [&]() {
        ad::Tape<double> tape;
        auto v = tape.constant(x);
        return ad::log_softmax_rows(ad::sigmoid(ad::matmul(v, ad::transpose(v)))).val();
    };
    Eigen::MatrixXd a = run(), b = run();
    REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward accumulates into parameter sinks once per pass") {
    auto P = make_param("P", Eigen::MatrixXd::Constant(1, 1, 3.0));
    ad::Tape<double> tape;
    auto v = tape.param(P);
    auto loss = ad::sum_all(ad::hadamard(v, v)); // d/dP (P^2) = 2P = 6
    tape.backward(loss);
    REQUIRE(P.grad(0, 0) == Catch::Approx(6.0));
    ad::Tape<double> tape2;
    auto v2 = tape2.param(P);
    tape2.backward(ad::sum_all(v2));
    REQUIRE(P.grad(0, 0) == Catch::Approx(7.0)); // accumulated, not reset
}
