// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode autodiff on dense Eigen matrices. A Tape owns the
// forward graph for one batch; Vars are cheap (tape, index) handles. Ops are
// free functions; each registers a pull-back that routes this node's adjoint
// into its parents. Parameters live outside the tape (Param<S>) and receive
// accumulated adjoints when Tape::backward finishes.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "trident/errors.hpp"
#include "trident/rng.hpp"

namespace trident {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

enum class ParamGroup {
    main,       // optimized at lr_main
    embedding,  // optimized at lr_embeddings
    norm_state, // running statistics: serialized, never optimized
};

/// A named, persistent parameter matrix with its gradient accumulator.
template <class S>
struct Param {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
    ParamGroup group = ParamGroup::main;
    bool decay = true;

    void reset(std::string n, Mat<S> v, ParamGroup g = ParamGroup::main, bool d = true) {
        name = std::move(n);
        value = std::move(v);
        grad = Mat<S>::Zero(value.rows(), value.cols());
        group = g;
        decay = d;
    }
    void zero_grad() { grad.setZero(); }
};

namespace ad {

template <class S>
class Tape;

template <class S>
struct Var {
    Tape<S>* tape = nullptr;
    int id = -1;
    const Mat<S>& val() const { return tape->value(id); }
    Eigen::Index rows() const { return val().rows(); }
    Eigen::Index cols() const { return val().cols(); }
};

template <class S>
class Tape {
public:
    struct Node {
        Mat<S> value;
        Mat<S> adj;
        bool has_adj = false;
        bool requires_grad = false;
        Param<S>* sink = nullptr;
        std::function<void(Tape&, const Mat<S>&)> back;
    };

    const Mat<S>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t size() const { return nodes_.size(); }

    Var<S> constant(Mat<S> v) {
        Node n;
        n.value = std::move(v);
        return push(std::move(n));
    }

    Var<S> leaf(Mat<S> v) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = true;
        return push(std::move(n));
    }

    Var<S> param(Param<S>& p) {
        Node n;
        n.value = p.value;
        n.requires_grad = true;
        n.sink = &p;
        return push(std::move(n));
    }

    Var<S> make(Mat<S> value, bool needs,
                std::function<void(Tape&, const Mat<S>&)> back) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = needs;
        if (needs) n.back = std::move(back);
        return push(std::move(n));
    }

    bool needs_grad(const Var<S>& v) const {
        return nodes_[static_cast<std::size_t>(v.id)].requires_grad;
    }

    void accumulate(int id, const Mat<S>& g) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad) return;
        if (!n.has_adj) {
            n.adj = g;
            n.has_adj = true;
        } else {
            n.adj += g;
        }
    }

    /// Adjoint of a node after backward(); zero matrix if it was never reached.
    Mat<S> adjoint(const Var<S>& v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.has_adj) return n.adj;
        return Mat<S>::Zero(n.value.rows(), n.value.cols());
    }

    /// Seeds the (1x1) root with 1 and sweeps the graph in reverse creation
    /// order, then flushes leaf adjoints into their Param sinks.
    void backward(const Var<S>& root) {
        if (root.val().rows() != 1 || root.val().cols() != 1)
            throw invariant_error("backward root must be a scalar node");
        accumulate(root.id, Mat<S>::Ones(1, 1));
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.has_adj && n.back) n.back(*this, n.adj);
        }
        for (Node& n : nodes_) {
            if (n.sink && n.has_adj) n.sink->grad += n.adj;
        }
    }

private:
    Var<S> push(Node&& n) {
        nodes_.push_back(std::move(n));
        return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
    }
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// ops

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val() + b.val();
    bool req = t.needs_grad(a) || t.needs_grad(b);
    return t.make(std::move(v), req, [a, b](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, g);
        tp.accumulate(b.id, g);
    });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val() - b.val();
    bool req = t.needs_grad(a) || t.needs_grad(b);
    return t.make(std::move(v), req, [a, b](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, g);
        tp.accumulate(b.id, Mat<S>(-g));
    });
}

template <class S>
Var<S> hadamard(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val().cwiseProduct(b.val());
    bool req = t.needs_grad(a) || t.needs_grad(b);
    return t.make(std::move(v), req, [a, b](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>(g.cwiseProduct(b.val())));
        tp.accumulate(b.id, Mat<S>(g.cwiseProduct(a.val())));
    });
}

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val() * b.val();
    bool req = t.needs_grad(a) || t.needs_grad(b);
    return t.make(std::move(v), req, [a, b](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>(g * b.val().transpose()));
        tp.accumulate(b.id, Mat<S>(a.val().transpose() * g));
    });
}

template <class S>
Var<S> transpose(Var<S> a) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val().transpose();
    return t.make(std::move(v), t.needs_grad(a), [a](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>(g.transpose()));
    });
}

template <class S>
Var<S> scale(Var<S> a, S c) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val() * c;
    return t.make(std::move(v), t.needs_grad(a), [a, c](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>(g * c));
    });
}

template <class S>
Var<S> shift(Var<S> a, S c) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val().array() + c;
    return t.make(std::move(v), t.needs_grad(a), [a](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, g);
    });
}

template <class S>
Var<S> sigmoid(Var<S> a) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val().unaryExpr([](S x) { return S(1) / (S(1) + std::exp(-x)); });
    Mat<S> y = v;
    return t.make(std::move(v), t.needs_grad(a), [a, y](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>(g.cwiseProduct(
            y.unaryExpr([](S s) { return s * (S(1) - s); }))));
    });
}

template <class S>
Var<S> relu(Var<S> a) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val().cwiseMax(S(0));
    return t.make(std::move(v), t.needs_grad(a), [a](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> mask = a.val().unaryExpr([](S x) { return x > S(0) ? S(1) : S(0); });
        tp.accumulate(a.id, Mat<S>(g.cwiseProduct(mask)));
    });
}

/// y = 1/sqrt(x); caller guarantees x > 0 elementwise.
template <class S>
Var<S> rsqrt(Var<S> a) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val().unaryExpr([](S x) { return S(1) / std::sqrt(x); });
    Mat<S> y = v;
    return t.make(std::move(v), t.needs_grad(a), [a, y](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>(g.cwiseProduct(
            y.unaryExpr([](S s) { return S(-0.5) * s * s * s; }))));
    });
}

/// Elementwise sqrt with subgradient 0 at x == 0.
template <class S>
Var<S> sqrt_cw(Var<S> a) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val().unaryExpr([](S x) { return std::sqrt(x); });
    Mat<S> y = v;
    return t.make(std::move(v), t.needs_grad(a), [a, y](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>(g.cwiseProduct(y.unaryExpr(
            [](S s) { return s > S(0) ? S(0.5) / s : S(0); }))));
    });
}

template <class S>
Var<S> mean_rows(Var<S> a) {
    Tape<S>& t = *a.tape;
    const auto r = a.val().rows();
    Mat<S> v = a.val().colwise().mean();
    return t.make(std::move(v), t.needs_grad(a), [a, r](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>((Mat<S>::Ones(r, 1) * g) / S(r)));
    });
}

template <class S>
Var<S> sum_all(Var<S> a) {
    Tape<S>& t = *a.tape;
    Mat<S> v(1, 1);
    v(0, 0) = a.val().sum();
    return t.make(std::move(v), t.needs_grad(a), [a](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>(Mat<S>::Constant(a.val().rows(), a.val().cols(), g(0, 0))));
    });
}

template <class S>
Var<S> vstack(const std::vector<Var<S>>& parts) {
    Tape<S>& t = *parts.front().tape;
    Eigen::Index rows = 0;
    const Eigen::Index cols = parts.front().cols();
    bool req = false;
    for (const auto& p : parts) {
        rows += p.rows();
        req = req || t.needs_grad(p);
    }
    Mat<S> v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleRows(at, p.rows()) = p.val();
        at += p.rows();
    }
    auto ps = parts;
    return t.make(std::move(v), req, [ps](Tape<S>& tp, const Mat<S>& g) {
        Eigen::Index at = 0;
        for (const auto& p : ps) {
            tp.accumulate(p.id, Mat<S>(g.middleRows(at, p.rows())));
            at += p.rows();
        }
    });
}

template <class S>
Var<S> hstack(const std::vector<Var<S>>& parts) {
    Tape<S>& t = *parts.front().tape;
    Eigen::Index cols = 0;
    const Eigen::Index rows = parts.front().rows();
    bool req = false;
    for (const auto& p : parts) {
        cols += p.cols();
        req = req || t.needs_grad(p);
    }
    Mat<S> v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.val();
        at += p.cols();
    }
    auto ps = parts;
    return t.make(std::move(v), req, [ps](Tape<S>& tp, const Mat<S>& g) {
        Eigen::Index at = 0;
        for (const auto& p : ps) {
            tp.accumulate(p.id, Mat<S>(g.middleCols(at, p.cols())));
            at += p.cols();
        }
    });
}

template <class S>
Var<S> block(Var<S> a, Eigen::Index r0, Eigen::Index c0, Eigen::Index h, Eigen::Index w) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val().block(r0, c0, h, w);
    return t.make(std::move(v), t.needs_grad(a), [a, r0, c0, h, w](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> d = Mat<S>::Zero(a.val().rows(), a.val().cols());
        d.block(r0, c0, h, w) = g;
        tp.accumulate(a.id, d);
    });
}

/// Row-major flatten of an RxC matrix into 1x(R*C).
template <class S>
Var<S> flatten_rows(Var<S> a) {
    Tape<S>& t = *a.tape;
    const Eigen::Index r = a.rows(), c = a.cols();
    Mat<S> v(1, r * c);
    for (Eigen::Index i = 0; i < r; ++i)
        v.block(0, i * c, 1, c) = a.val().row(i);
    return t.make(std::move(v), t.needs_grad(a), [a, r, c](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> d(r, c);
        for (Eigen::Index i = 0; i < r; ++i) d.row(i) = g.block(0, i * c, 1, c);
        tp.accumulate(a.id, d);
    });
}

template <class S>
Var<S> add_rowbcast(Var<S> x, Var<S> row) {
    Tape<S>& t = *x.tape;
    Mat<S> v = x.val().rowwise() + Eigen::RowVector<S, Eigen::Dynamic>(row.val().row(0));
    bool req = t.needs_grad(x) || t.needs_grad(row);
    return t.make(std::move(v), req, [x, row](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(x.id, g);
        tp.accumulate(row.id, Mat<S>(g.colwise().sum()));
    });
}

template <class S>
Var<S> sub_rowbcast(Var<S> x, Var<S> row) {
    Tape<S>& t = *x.tape;
    Mat<S> v = x.val().rowwise() - Eigen::RowVector<S, Eigen::Dynamic>(row.val().row(0));
    bool req = t.needs_grad(x) || t.needs_grad(row);
    return t.make(std::move(v), req, [x, row](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(x.id, g);
        tp.accumulate(row.id, Mat<S>(-g.colwise().sum()));
    });
}

template <class S>
Var<S> mul_rowbcast(Var<S> x, Var<S> row) {
    Tape<S>& t = *x.tape;
    Mat<S> v = x.val().array().rowwise() *
               Eigen::Array<S, 1, Eigen::Dynamic>(row.val().row(0).array());
    bool req = t.needs_grad(x) || t.needs_grad(row);
    return t.make(std::move(v), req, [x, row](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> dx = g.array().rowwise() *
                    Eigen::Array<S, 1, Eigen::Dynamic>(row.val().row(0).array());
        tp.accumulate(x.id, dx);
        tp.accumulate(row.id, Mat<S>(g.cwiseProduct(x.val()).colwise().sum()));
    });
}

/// Stable per-row log-softmax.
template <class S>
Var<S> log_softmax_rows(Var<S> a) {
    Tape<S>& t = *a.tape;
    Mat<S> v = a.val();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const S m = v.row(i).maxCoeff();
        S lse = std::log((v.row(i).array() - m).exp().sum()) + m;
        v.row(i).array() -= lse;
    }
    Mat<S> y = v;
    return t.make(std::move(v), t.needs_grad(a), [a, y](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> d = g;
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            const S s = g.row(i).sum();
            d.row(i) -= y.row(i).array().exp().matrix() * s;
        }
        tp.accumulate(a.id, d);
    });
}

/// L2-normalizes every row. Throws numeric_error on a (near-)zero row.
template <class S>
Var<S> normalize_rows(Var<S> a) {
    Tape<S>& t = *a.tape;
    const Eigen::Index r = a.rows();
    Eigen::Vector<S, Eigen::Dynamic> norms(r);
    Mat<S> v = a.val();
    for (Eigen::Index i = 0; i < r; ++i) {
        const S n = v.row(i).norm();
        if (!(n > S(1e-20)))
            throw numeric_error("cannot normalize a zero-norm vector (row " +
                                std::to_string(i) + ")");
        norms(i) = n;
        v.row(i) /= n;
    }
    Mat<S> y = v;
    return t.make(std::move(v), t.needs_grad(a), [a, y, norms](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> d(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const S dot = g.row(i).dot(y.row(i));
            d.row(i) = (g.row(i) - dot * y.row(i)) / norms(i);
        }
        tp.accumulate(a.id, d);
    });
}

template <class S>
Var<S> gather_rows(Var<S> a, std::vector<int> idx) {
    Tape<S>& t = *a.tape;
    Mat<S> v(static_cast<Eigen::Index>(idx.size()), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = a.val().row(idx[i]);
    return t.make(std::move(v), t.needs_grad(a), [a, idx](Tape<S>& tp, const Mat<S>& g) {
        Mat<S> d = Mat<S>::Zero(a.val().rows(), a.val().cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
            d.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        tp.accumulate(a.id, d);
    });
}

/// Inverted dropout; identity when !training or rate == 0.
template <class S>
Var<S> dropout(Var<S> a, double rate, bool training, Rng& rng) {
    if (!training || rate <= 0.0) return a;
    Tape<S>& t = *a.tape;
    const S keep = S(1) - S(rate);
    Mat<S> mask(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j)
            mask(i, j) = rng.uniform() < rate ? S(0) : S(1) / keep;
    Mat<S> v = a.val().cwiseProduct(mask);
    return t.make(std::move(v), t.needs_grad(a), [a, mask](Tape<S>& tp, const Mat<S>& g) {
        tp.accumulate(a.id, Mat<S>(g.cwiseProduct(mask)));
    });
}

/// ||A||_Fro as a 1x1 node.
template <class S>
Var<S> frobenius(Var<S> a) {
    return sqrt_cw(sum_all(hadamard(a, a)));
}

/// x W + 1 b  (b is a 1xN row).
template <class S>
Var<S> affine(Var<S> x, Var<S> w, Var<S> b) {
    return add_rowbcast(matmul(x, w), b);
}

} // namespace ad
} // namespace trident
