#include <gtest/gtest.h>

#include <functional>

#include "ligram/autodiff.hpp"

using namespace ligram;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using M = Matrix<double>;

namespace {

constexpr int trials = 100;
constexpr double tolerance = 1e-4;

M random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
    M m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
    }
    return m;
}

Eigen::Index dim(Rng& rng, Eigen::Index lo = 1, Eigen::Index hi = 5) {
    return lo + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

// Reduces an output to a scalar with fixed random weights so every output entry
// contributes a distinct gradient.
Var<double> weighted_sum(Var<double> out, const M& weights) {
    return ad::sum(ad::mul(out, out.tape().constant(weights)));
}

using Builder = std::function<Var<double>(std::span<const Var<double>>)>;

// Runs `trials` random checks; `setup` draws inputs and returns the primitive under test.
void check_primitive(const char* name, std::uint64_t seed,
                     const std::function<std::pair<std::vector<M>, Builder>(Rng&)>& setup) {
    Rng rng(seed);
    double worst = 0.0;
    std::size_t excluded = 0, checked = 0;
    for (int t = 0; t < trials; ++t) {
        auto [inputs, build] = setup(rng);
        M weights;
        {
            Tape<double> tape;
            std::vector<Var<double>> vars;
            for (const auto& x : inputs) vars.push_back(tape.constant(x));
            const auto out = build(vars);
            weights = random_matrix(rng, out.rows(), out.cols());
        }
        const ad::ScalarFunction f = [&](Tape<double>&, std::span<const Var<double>> vars) {
            return weighted_sum(build(vars), weights);
        };
        const auto report = ad::check_gradients(f, inputs);
        worst = std::max(worst, report.max_rel_error);
        excluded += report.excluded;
        checked += report.checked;
    }
    EXPECT_LT(worst, tolerance) << name;
    EXPECT_GT(checked, 0u) << name;
    EXPECT_LT(excluded, checked / 10 + 1) << name;
}

} // namespace

TEST(Primitives, Examples) {
    Tape<double> tape;
    M v(1, 2);
    v << 3, 4;
    EXPECT_TRUE(ad::l2_normalize_rows(tape.constant(v)).value().isApprox((M(1, 2) << 0.6, 0.8).finished(), 1e-15));
    EXPECT_TRUE(ad::l2_normalize_cols(tape.constant(M(v.transpose())))
                    .value()
                    .isApprox((M(2, 1) << 0.6, 0.8).finished(), 1e-15));
    M r(1, 2);
    r << -1, 2;
    EXPECT_EQ(ad::relu(tape.constant(r)).value(), (M(1, 2) << 0, 2).finished());
    const auto s = ad::softmax_rows(tape.constant(M::Zero(1, 3))).value();
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(s(0, k), 1.0 / 3.0, 1e-16);
}

TEST(Primitives, ShapeErrors) {
    Tape<double> tape;
    const auto a = tape.constant(M::Ones(2, 3));
    const auto b = tape.constant(M::Ones(2, 3));
    EXPECT_THROW(ad::matmul(a, b), NumericError);
    EXPECT_THROW(ad::add(a, tape.constant(M::Ones(3, 2))), NumericError);
    EXPECT_THROW(ad::concat_cols<double>({a, tape.constant(M::Ones(3, 1))}), NumericError);
    Rng rng(1);
    EXPECT_THROW(ad::dropout(a, 1.0, rng, ad::Mode::train), Error);
    EXPECT_THROW(ad::dropout(a, -0.1, rng, ad::Mode::train), Error);
    EXPECT_THROW(tape.backward(a), NumericError);
}

TEST(Primitives, NonFiniteValuesTrip) {
    Tape<double> tape;
    M big(1, 1);
    big << 1000.0;
    EXPECT_THROW(ad::exp(tape.constant(big)), NumericError);
    EXPECT_THROW(ad::log(tape.constant(M::Zero(1, 1))), NumericError);
}

TEST(Primitives, SoftmaxRowsAreDistributions) {
    Rng rng(2);
    for (int t = 0; t < trials; ++t) {
        Tape<double> tape;
        const auto s = ad::softmax_rows(tape.constant(random_matrix(rng, dim(rng), dim(rng), -30, 30))).value();
        EXPECT_GE(s.minCoeff(), 0.0);
        for (Eigen::Index i = 0; i < s.rows(); ++i) EXPECT_NEAR(s.row(i).sum(), 1.0, 1e-9);
    }
}

TEST(Primitives, L2NormalizeGuardsZeroColumns) {
    Tape<double> tape;
    M x(2, 3);
    x << 0, 1, 3, 0, 0, 4;
    const auto in = tape.parameter(x);
    const auto out = ad::l2_normalize_cols(in);
    EXPECT_EQ(out.value().col(0), M::Zero(2, 1));
    EXPECT_EQ(out.value().col(1), x.col(1));
    tape.backward(ad::sum(out));
    EXPECT_EQ(tape.grad(in).col(0), M::Zero(2, 1));

    Rng rng(3);
    for (int t = 0; t < trials; ++t) {
        Tape<double> tp;
        const auto n = ad::l2_normalize_cols(tp.constant(random_matrix(rng, dim(rng), dim(rng), -5, 5))).value();
        for (Eigen::Index c = 0; c < n.cols(); ++c) EXPECT_NEAR(n.col(c).norm(), 1.0, 1e-10);
    }
}

TEST(Primitives, DropoutIsIdentityInEvalAndInvertedInTrain) {
    Rng rng(4);
    Tape<double> tape;
    const M x = random_matrix(rng, 20, 30);
    EXPECT_EQ(ad::dropout(tape.constant(x), 0.7, rng, ad::Mode::eval).value(), x);
    EXPECT_EQ(ad::dropout(tape.constant(x), 0.0, rng, ad::Mode::train).value(), x);
    const auto y = ad::dropout(tape.constant(M::Ones(200, 200)), 0.7, rng, ad::Mode::train).value();
    std::size_t kept = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double v = y.data()[i];
        EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.3) < 1e-12);
        kept += v != 0.0;
    }
    EXPECT_NEAR(static_cast<double>(kept) / 40000.0, 0.3, 0.02);
}

TEST(Backward, HandDerivativeOfLinearForm) {
    // loss = sum(W x): dL/dW[i][j] = x[j]
    Tape<double> tape;
    M w(2, 3), x(3, 1);
    w << 1, 2, 3, 4, 5, 6;
    x << 7, -8, 9;
    const auto wv = tape.parameter(w);
    tape.backward(ad::sum(ad::matmul(wv, tape.constant(x))));
    const M expected = M::Ones(2, 1) * x.transpose();
    EXPECT_EQ(tape.grad(wv), expected);
}

TEST(Backward, UnreachedParameterHasZeroGradient) {
    Tape<double> tape;
    const auto w = tape.parameter(M::Ones(2, 2));
    const auto other = tape.parameter(M::Ones(1, 1));
    tape.backward(ad::sum(other));
    EXPECT_EQ(tape.grad(w), M::Zero(2, 2));
}

TEST(Backward, AccumulationIsAdditive) {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        const M w0 = random_matrix(rng, 3, 3), x = random_matrix(rng, 3, 2);
        auto grad_of = [&](int which) {
            Tape<double> tape;
            const auto w = tape.parameter(w0);
            const auto f = ad::sum(ad::relu(ad::matmul(w, tape.constant(x))));
            const auto g = ad::mean(ad::exp(ad::scale(w, 0.5)));
            tape.backward(which == 0 ? f : which == 1 ? g : ad::add(f, g));
            return tape.grad(w);
        };
        EXPECT_LE((grad_of(2) - (grad_of(0) + grad_of(1))).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(Backward, FanOutAccumulates) {
    Tape<double> tape;
    M x0(1, 1);
    x0 << 3.0;
    const auto x = tape.parameter(x0);
    tape.backward(ad::sum(ad::add(ad::mul(x, x), x))); // x^2 + x
    EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 7.0);
}

TEST(GradCheck, QuadraticIsExact) {
    M w(1, 1);
    w << 3.0;
    const ad::ScalarFunction f = [](Tape<double>&, std::span<const Var<double>> v) { return ad::sum(ad::mul(v[0], v[0])); };
    const auto r = ad::check_gradients(f, {w});
    EXPECT_LT(r.max_rel_error, 1e-9);
    EXPECT_NEAR(r.worst_analytic, 6.0, 1e-15);
    EXPECT_NEAR(r.worst_numeric, 6.0, 1e-8);
}

TEST(GradCheck, ReluKinkIsExcluded) {
    M w(1, 3);
    w << 0.0, 1.0, -1.0;
    const ad::ScalarFunction f = [](Tape<double>&, std::span<const Var<double>> v) { return ad::sum(ad::relu(v[0])); };
    const auto r = ad::check_gradients(f, {w});
    EXPECT_EQ(r.excluded, 1u);
    EXPECT_EQ(r.checked, 2u);
    EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, NonDeterministicFunctionIsRejected) {
    auto counter = std::make_shared<int>(0);
    const ad::ScalarFunction f = [counter](Tape<double>&, std::span<const Var<double>> v) {
        return ad::scale(ad::sum(v[0]), static_cast<double>(++*counter));
    };
    EXPECT_THROW(ad::check_gradients(f, {M::Ones(1, 1)}), Error);
}

TEST(GradCheck, CatchesAWrongGradient) {
    // A deliberately wrong backward rule must be reported.
    const ad::ScalarFunction f = [](Tape<double>& tape, std::span<const Var<double>> v) {
        const auto x = v[0];
        M sq = x.value().array().square();
        const auto out = tape.record("bad_square", sq, x.requires_grad(), [x](Tape<double>& t, const M& g) {
            t.accumulate(x.id(), g.cwiseProduct(x.value())); // should be 2x
        });
        return ad::sum(out);
    };
    EXPECT_GT(ad::check_gradients(f, {M::Constant(1, 2, 1.5)}).max_rel_error, 0.1);
}

// ---- per-primitive finite-difference checks ---------------------------------

TEST(PrimitiveGradients, Matmul) {
    check_primitive("matmul", 10, [](Rng& rng) {
        const auto n = dim(rng), k = dim(rng), m = dim(rng);
        return std::pair{std::vector<M>{random_matrix(rng, n, k), random_matrix(rng, k, m)},
                         Builder([](auto v) { return ad::matmul(v[0], v[1]); })};
    });
}

TEST(PrimitiveGradients, SparseMatmul) {
    check_primitive("sparse_matmul", 11, [](Rng& rng) {
        const auto n = dim(rng), k = dim(rng), m = dim(rng);
        std::vector<Eigen::Triplet<double>> t;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < k; ++j) {
                if (rng.uniform() < 0.5) t.emplace_back(i, j, rng.uniform(-1, 1));
            }
        }
        auto s = std::make_shared<ad::SparseOperator<double>>(n, k);
        s->setFromTriplets(t.begin(), t.end());
        return std::pair{std::vector<M>{random_matrix(rng, k, m)},
                         Builder([s](auto v) { return ad::sparse_matmul<double>(s, v[0]); })};
    });
}

TEST(PrimitiveGradients, Transpose) {
    check_primitive("transpose", 12, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng))},
                         Builder([](auto v) { return ad::transpose(v[0]); })};
    });
}

TEST(PrimitiveGradients, Relu) {
    check_primitive("relu", 13, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng))},
                         Builder([](auto v) { return ad::relu(v[0]); })};
    });
}

TEST(PrimitiveGradients, ReluAfterMatmul) {
    check_primitive("relu(matmul)", 14, [](Rng& rng) {
        const auto n = dim(rng), k = dim(rng), m = dim(rng);
        return std::pair{std::vector<M>{random_matrix(rng, n, k), random_matrix(rng, k, m)},
                         Builder([](auto v) { return ad::relu(ad::matmul(v[0], v[1])); })};
    });
}

TEST(PrimitiveGradients, SoftmaxRows) {
    check_primitive("softmax_rows", 15, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng), -3, 3)},
                         Builder([](auto v) { return ad::softmax_rows(v[0]); })};
    });
}

TEST(PrimitiveGradients, LogAndExp) {
    check_primitive("log", 16, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng), 0.2, 3.0)},
                         Builder([](auto v) { return ad::log(v[0], 1e-12); })};
    });
    check_primitive("exp", 17, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng), -2, 2)},
                         Builder([](auto v) { return ad::exp(v[0]); })};
    });
}

TEST(PrimitiveGradients, ElementwiseWithBroadcast) {
    for (int kind = 0; kind < 3; ++kind) {
        check_primitive("add/sub/mul", 18 + kind, [kind](Rng& rng) {
            const auto r = dim(rng), c = dim(rng);
            const M b = kind == 0 ? random_matrix(rng, r, c) : kind == 1 ? random_matrix(rng, 1, c) : random_matrix(rng, r, 1);
            return std::pair{std::vector<M>{random_matrix(rng, r, c), b}, Builder([](auto v) {
                                 return ad::add(ad::mul(v[0], v[1]), ad::sub(v[0], v[1]));
                             })};
        });
    }
}

TEST(PrimitiveGradients, Scale) {
    check_primitive("scale", 21, [](Rng& rng) {
        const double f = rng.uniform(-3, 3);
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng))},
                         Builder([f](auto v) { return ad::scale(v[0], f); })};
    });
}

TEST(PrimitiveGradients, ConcatCols) {
    check_primitive("concat_cols", 22, [](Rng& rng) {
        const auto r = dim(rng);
        return std::pair{std::vector<M>{random_matrix(rng, r, dim(rng)), random_matrix(rng, r, dim(rng)),
                                        random_matrix(rng, r, dim(rng))},
                         Builder([](auto v) { return ad::concat_cols<double>({v[0], v[1], v[2]}); })};
    });
}

TEST(PrimitiveGradients, L2Normalize) {
    check_primitive("l2_normalize_rows", 23, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng))},
                         Builder([](auto v) { return ad::l2_normalize_rows(v[0]); })};
    });
    check_primitive("l2_normalize_cols", 24, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng))},
                         Builder([](auto v) { return ad::l2_normalize_cols(v[0]); })};
    });
}

TEST(PrimitiveGradients, DropoutWithFixedSeed) {
    check_primitive("dropout", 25, [](Rng& rng) {
        const double rate = rng.uniform(0.0, 0.9);
        const auto seed = rng.next_u64();
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng))}, Builder([rate, seed](auto v) {
                             Rng local(seed);
                             return ad::dropout(v[0], rate, local, ad::Mode::train);
                         })};
    });
}

TEST(PrimitiveGradients, CosineSimilarityMatrix) {
    check_primitive("cosine_similarity_matrix", 26, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng, 2, 5), dim(rng))},
                         Builder([](auto v) { return ad::cosine_similarity_matrix(v[0]); })};
    });
}

TEST(PrimitiveGradients, Gathers) {
    check_primitive("gather_rows", 27, [](Rng& rng) {
        const auto r = dim(rng), c = dim(rng);
        std::vector<std::size_t> rows;
        for (int k = 0; k < 4; ++k) rows.push_back(rng.below(static_cast<std::uint64_t>(r)));
        return std::pair{std::vector<M>{random_matrix(rng, r, c)},
                         Builder([rows](auto v) { return ad::gather_rows(v[0], rows); })};
    });
    check_primitive("gather_elements", 28, [](Rng& rng) {
        const auto r = dim(rng), c = dim(rng);
        std::vector<std::size_t> rows, cols;
        for (int k = 0; k < 4; ++k) {
            rows.push_back(rng.below(static_cast<std::uint64_t>(r)));
            cols.push_back(rng.below(static_cast<std::uint64_t>(c)));
        }
        return std::pair{std::vector<M>{random_matrix(rng, r, c)},
                         Builder([rows, cols](auto v) { return ad::gather_elements(v[0], rows, cols); })};
    });
}

TEST(PrimitiveGradients, Reductions) {
    check_primitive("sum", 29, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng))},
                         Builder([](auto v) { return ad::sum(ad::mul(v[0], v[0])); })};
    });
    check_primitive("mean", 30, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng))},
                         Builder([](auto v) { return ad::mean(ad::mul(v[0], v[0])); })};
    });
    check_primitive("row_sum", 31, [](Rng& rng) {
        return std::pair{std::vector<M>{random_matrix(rng, dim(rng), dim(rng))},
                         Builder([](auto v) { return ad::row_sum(v[0]); })};
    });
}

TEST(PrimitiveGradients, DetachBlocksGradient) {
    Tape<double> tape;
    const auto x = tape.parameter(M::Constant(2, 2, 2.0));
    tape.backward(ad::sum(ad::mul(x, ad::detach(x))));
    EXPECT_EQ(tape.grad(x), M::Constant(2, 2, 2.0));
}

TEST(FloatTape, MatchesDoubleWithinSinglePrecision) {
    Rng rng(40);
    const M a = random_matrix(rng, 6, 5), b = random_matrix(rng, 5, 4);
    Tape<double> td;
    Tape<float> tf;
    const auto vd = ad::softmax_rows(ad::relu(ad::matmul(td.parameter(a), td.constant(b))));
    const auto vf = ad::softmax_rows(ad::relu(ad::matmul(tf.parameter(a.cast<float>()), tf.constant(b.cast<float>()))));
    EXPECT_LE((vf.value().cast<double>() - vd.value()).cwiseAbs().maxCoeff(), 1e-6);
}
