#include <cmath>

#include "braingraph/error.hpp"
#include "braingraph/kernels.hpp"
#include "braingraph/nn.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace braingraph;
using namespace braingraph::nn;
using namespace testsupport;

namespace {

// Scalar probe loss sum(out .* r); its gradient w.r.t. out is r.
double probe(const Tensor2& out, const Tensor2& r) {
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * r.data()[i];
    return s;
}

GradCheckOptions tight() {
    GradCheckOptions o;
    o.tolerance = 1e-6;
    return o;
}

}  // namespace

TEST_CASE("normalized adjacency of small graphs") {
    const auto single = NormalizedAdjacency::from_edges(1, {});
    CHECK(single.dense()(0, 0) == 1.0);
    const auto pair = NormalizedAdjacency::from_edges(2, {{0, 1}});
    const Tensor2 a = pair.dense();
    for (double v : a.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gcn layer on an isolated node") {
    const auto adj = NormalizedAdjacency::from_edges(1, {});
    const Tensor2 out = gcn_forward(adj, Tensor2::from_rows({{3, -2}}), Tensor2::identity(2));
    CHECK(out == Tensor2::from_rows({{3, 0}}));
}

TEST_CASE("gcn layer on two connected nodes averages the basis vectors") {
    const auto adj = NormalizedAdjacency::from_edges(2, {{0, 1}});
    const Tensor2 out = gcn_forward(adj, Tensor2::identity(2), Tensor2::identity(2));
    for (double v : out.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gcn shape mismatch is a dimension error") {
    const auto adj = NormalizedAdjacency::from_edges(3, {{0, 1}});
    CHECK_THROWS_AS(gcn_forward(adj, Tensor2(3, 4), Tensor2(5, 2)), DimensionError);
    CHECK_THROWS_AS(gcn_forward(adj, Tensor2(2, 4), Tensor2(4, 2)), DimensionError);
}

TEST_CASE("gcn layer gradients match central differences") {
    Rng rng(201);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 4 + rng.uniform_index(8);
        const auto adj = NormalizedAdjacency::from_edges(n, random_graph(n, 0.4, rng));
        const Tensor2 r = random_matrix(n, 3, rng);
        ParamStore p;
        p.add("x", random_matrix(n, 5, rng));
        p.add("w", random_matrix(5, 3, rng));
        const auto closure = [&](const ParamStore& ps, ParamStore* g) {
            GcnCache cache;
            const Tensor2 out = gcn_forward(adj, ps.at("x"), ps.at("w"), &cache);
            if (g) {
                const GcnGrads gg = gcn_backward(adj, ps.at("w"), cache, r);
                g->at("x") += gg.dx;
                g->at("w") += gg.dw;
            }
            return probe(out, r);
        };
        const GradCheckReport rep = grad_check(closure, p, tight());
        CHECK(rep.pass);
        CHECK(rep.max_rel_error < 1e-6);
    }
}

TEST_CASE("mlp with zero weights outputs the bias") {
    Rng rng(202);
    const MlpShape shape{"m", {4, 6, 3}};
    ParamStore p;
    init_mlp(p, shape, rng);
    p.at("m.w0").fill(0);
    p.at("m.w1").fill(0);
    p.at("m.b1") = Tensor2::from_rows({{0.5, -1, 2}});
    const Tensor2 out = mlp_forward(random_matrix(5, 4, rng), p, shape, 0.0, false, nullptr);
    for (std::size_t r = 0; r < 5; ++r) CHECK(out(r, 0) == 0.5);
    for (std::size_t r = 0; r < 5; ++r) CHECK(out(r, 2) == 2.0);
}

TEST_CASE("mlp dropout") {
    Rng rng(203);
    const MlpShape shape{"m", {4, 16, 2}};
    ParamStore p;
    init_mlp(p, shape, rng);
    const Tensor2 x = random_matrix(3, 4, rng);
    Rng a(1), b(2);
    CHECK(mlp_forward(x, p, shape, 0.0, true, &a) == mlp_forward(x, p, shape, 0.0, true, &b));
    CHECK(mlp_forward(x, p, shape, 0.5, false, nullptr) == mlp_forward(x, p, shape, 0.0, false, nullptr));
    CHECK_THROWS_AS(mlp_forward(x, p, shape, 1.0, false, nullptr), ValidationError);
    CHECK_THROWS_AS(mlp_forward(x, p, shape, -0.1, false, nullptr), ValidationError);

    MlpCache cache;
    Rng c(3);
    mlp_forward(x, p, shape, 0.5, true, &c, &cache);
    REQUIRE(!cache.masks.empty());
    for (double m : cache.masks[0].values()) CHECK((m == 0.0 || m == 2.0));
}

TEST_CASE("mlp gradients match central differences") {
    Rng rng(204);
    const MlpShape shape{"m", {6, 8, 5, 2}};
    ParamStore p;
    init_mlp(p, shape, rng);
    p.add("x", random_matrix(3, 6, rng));
    const Tensor2 r = random_matrix(3, 2, rng);
    const auto closure = [&](const ParamStore& ps, ParamStore* g) {
        MlpCache cache;
        const Tensor2 out = mlp_forward(ps.at("x"), ps, shape, 0.0, false, nullptr, &cache);
        if (g) g->at("x") += mlp_backward(ps, shape, cache, r, *g);
        return probe(out, r);
    };
    const GradCheckReport rep = grad_check(closure, p, tight());
    CHECK(rep.pass);
    CHECK(rep.params.size() == 7);
}

TEST_CASE("sort pooling orders rows by the last channel") {
    const Tensor2 h = Tensor2::from_rows({{1, 0.1}, {2, 0.9}, {3, 0.5}});
    SortPoolCache cache;
    const Tensor2 out = sort_pool(h, 2, &cache);
    CHECK(out == Tensor2::from_rows({{2, 0.9, 3, 0.5}}));
    CHECK(cache.order == std::vector<std::size_t>{1, 2});
}

TEST_CASE("sort pooling pads with zeros when k exceeds n") {
    const Tensor2 out = sort_pool(Tensor2::from_rows({{1, 2}, {3, 4}}), 4);
    CHECK(out == Tensor2::from_rows({{3, 4, 1, 2, 0, 0, 0, 0}}));
}

TEST_CASE("sort pooling keeps node order on ties") {
    const Tensor2 out = sort_pool(Tensor2::from_rows({{1, 7}, {2, 7}, {3, 7}}), 3);
    CHECK(out == Tensor2::from_rows({{1, 7, 2, 7, 3, 7}}));
}

TEST_CASE("property: sort pooling ignores node order when keys are distinct") {
    Rng rng(205);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(20), d = 1 + rng.uniform_index(5), k = 1 + rng.uniform_index(25);
        const Tensor2 h = random_matrix(n, d, rng);
        const auto perm = random_permutation(n, rng);
        Tensor2 hp(n, d);
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t c = 0; c < d; ++c) hp(perm[v], c) = h(v, c);
        CHECK(sort_pool(h, k) == sort_pool(hp, k));
        CHECK(sort_pool(h, k).cols() == k * d);
    }
}

TEST_CASE("sort pooling routes gradients to the selected rows") {
    Rng rng(206);
    ParamStore p;
    p.add("h", random_matrix(7, 3, rng));
    const Tensor2 r = random_matrix(1, 15, rng);
    const auto closure = [&](const ParamStore& ps, ParamStore* g) {
        SortPoolCache cache;
        const Tensor2 out = sort_pool(ps.at("h"), 5, &cache);
        if (g) g->at("h") += sort_pool_backward(cache, r);
        return probe(out, r);
    };
    CHECK(grad_check(closure, p, tight()).pass);
}

TEST_CASE("mean readout gradients") {
    Rng rng(207);
    ParamStore p;
    p.add("h", random_matrix(6, 4, rng));
    const Tensor2 r = random_matrix(1, 4, rng);
    const auto closure = [&](const ParamStore& ps, ParamStore* g) {
        if (g) g->at("h") += mean_rows_backward(6, r);
        return probe(mean_rows(ps.at("h")), r);
    };
    CHECK(grad_check(closure, p, tight()).pass);
}

TEST_CASE("attention over a single frame returns its value projection") {
    Rng rng(208);
    const Tensor2 s = random_matrix(1, 4, rng);
    const Tensor2 wq = random_matrix(4, 4, rng), wk = random_matrix(4, 4, rng), wv = random_matrix(4, 4, rng);
    const Tensor2 out = attention_forward(s, wq, wk, wv, true);
    const Tensor2 expect = kernels::matmul(s + sinusoidal_encoding(1, 4), wv);
    CHECK(max_abs_diff(out, expect) < 1e-14);
    const Tensor2 plain = attention_forward(s, wq, wk, wv, false);
    CHECK(max_abs_diff(plain, kernels::matmul(s, wv)) < 1e-14);
}

TEST_CASE("attention over identical frames without encoding gives identical rows") {
    Rng rng(209);
    const Tensor2 frame = random_matrix(1, 5, rng);
    Tensor2 s(6, 5);
    for (std::size_t t = 0; t < 6; ++t)
        for (std::size_t c = 0; c < 5; ++c) s(t, c) = frame(0, c);
    const Tensor2 out = attention_forward(s, random_matrix(5, 5, rng), random_matrix(5, 5, rng), random_matrix(5, 5, rng), false);
    for (std::size_t t = 1; t < 6; ++t)
        for (std::size_t c = 0; c < 5; ++c) CHECK(out(t, c) == out(0, c));
}

TEST_CASE("attention shape mismatch is a dimension error") {
    CHECK_THROWS_AS(attention_forward(Tensor2(3, 4), Tensor2(5, 4), Tensor2(4, 4), Tensor2(4, 4), false), DimensionError);
}

TEST_CASE("attention gradients match central differences") {
    Rng rng(210);
    for (bool pe : {false, true}) {
        ParamStore p;
        p.add("s", random_matrix(3, 4, rng));
        p.add("wq", random_matrix(4, 4, rng));
        p.add("wk", random_matrix(4, 4, rng));
        p.add("wv", random_matrix(4, 4, rng));
        const Tensor2 r = random_matrix(3, 4, rng);
        const auto closure = [&](const ParamStore& ps, ParamStore* g) {
            AttentionCache cache;
            const Tensor2 out = attention_forward(ps.at("s"), ps.at("wq"), ps.at("wk"), ps.at("wv"), pe, &cache);
            if (g) {
                const AttentionGrads ag = attention_backward(ps.at("wq"), ps.at("wk"), ps.at("wv"), cache, r);
                g->at("s") += ag.ds;
                g->at("wq") += ag.dwq;
                g->at("wk") += ag.dwk;
                g->at("wv") += ag.dwv;
            }
            return probe(out, r);
        };
        const GradCheckReport rep = grad_check(closure, p, tight());
        CHECK(rep.pass);
        CHECK(rep.max_rel_error < 1e-6);
    }
}

TEST_CASE("property: softmax rows sum to one") {
    Rng rng(211);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor2 x = random_matrix(1 + rng.uniform_index(6), 1 + rng.uniform_index(10), rng, -50, 50);
        const Tensor2 y = softmax_rows(x);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double s = 0;
            for (std::size_t c = 0; c < y.cols(); ++c) s += y(r, c);
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("cross entropy of uniform logits is ln 2") {
    const LossResult r = cross_entropy(Tensor2::from_rows({{0.3, 0.3}}), 1);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(r.grad(0, 0) == doctest::Approx(0.5));
    CHECK(r.grad(0, 1) == doctest::Approx(-0.5));
}

TEST_CASE("cross entropy rejects invalid classes") {
    CHECK_THROWS_AS(cross_entropy(Tensor2(1, 2), 2), ValidationError);
    CHECK_THROWS_AS(cross_entropy(Tensor2(1, 2), -1), ValidationError);
}

TEST_CASE("property: cross entropy gradient is softmax minus one-hot") {
    Rng rng(212);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(6);
        const auto target = static_cast<std::int64_t>(rng.uniform_index(c));
        ParamStore p;
        p.add("z", random_matrix(1, c, rng, -5, 5));
        const LossResult r = cross_entropy(p.at("z"), target);
        const Tensor2 sm = softmax_rows(p.at("z"));
        double total = 0;
        for (std::size_t j = 0; j < c; ++j) {
            const double expect = sm(0, j) - (static_cast<std::int64_t>(j) == target ? 1.0 : 0.0);
            CHECK(std::abs(r.grad(0, j) - expect) < 1e-14);
            total += r.grad(0, j);
        }
        CHECK(std::abs(total) < 1e-10);
        const auto closure = [&](const ParamStore& ps, ParamStore* g) {
            const LossResult lr = cross_entropy(ps.at("z"), target);
            if (g) g->at("z") += lr.grad;
            return lr.loss;
        };
        CHECK(grad_check(closure, p, tight()).pass);
    }
}

TEST_CASE("cross entropy is stable for large logits") {
    const LossResult r = cross_entropy(Tensor2::from_rows({{1000, 0}}), 1);
    CHECK(r.loss == doctest::Approx(1000.0));
    CHECK(std::isfinite(r.grad(0, 0)));
}

TEST_CASE("mean absolute error") {
    const Tensor2 a = Tensor2::from_rows({{0.2, -1.5, 3}});
    const LossResult same = mean_absolute_error(a, a);
    CHECK(same.loss == 0.0);
    for (double g : same.grad.values()) CHECK(g == 0.0);
    const LossResult r = mean_absolute_error(Tensor2::from_rows({{1, 2}}), Tensor2::from_rows({{0, 4}}));
    CHECK(r.loss == 1.5);
    CHECK(r.grad == Tensor2::from_rows({{0.5, -0.5}}));
    CHECK_THROWS_AS(mean_absolute_error(Tensor2(1, 2), Tensor2(1, 3)), DimensionError);

    Rng rng(213);
    ParamStore p;
    p.add("y", random_matrix(2, 3, rng));
    const Tensor2 target = random_matrix(2, 3, rng);
    const auto closure = [&](const ParamStore& ps, ParamStore* g) {
        const LossResult lr = mean_absolute_error(ps.at("y"), target);
        if (g) g->at("y") += lr.grad;
        return lr.loss;
    };
    CHECK(grad_check(closure, p, tight()).pass);
}

TEST_CASE("adam with zero gradient and no decay leaves parameters alone") {
    Rng rng(214);
    ParamStore p;
    p.add("w", random_matrix(3, 3, rng));
    const ParamStore before = p;
    AdamState st = AdamState::for_params(p);
    for (int i = 0; i < 5; ++i) adam_step(p, p.zeros_like(), st, 0.01, 0.0);
    CHECK(p == before);
}

TEST_CASE("adam first step moves by about lr") {
    ParamStore p;
    p.add("w", Tensor2(1, 1, 2.0));
    ParamStore g = p.zeros_like();
    g.at("w")(0, 0) = 1.0;
    AdamState st = AdamState::for_params(p);
    adam_step(p, g, st, 0.001, 0.0);
    // mhat = 1, vhat = 1, so the step is lr / (1 + eps).
    CHECK(std::abs((2.0 - p.at("w")(0, 0)) - 0.001 / (1.0 + 1e-8)) < 1e-15);
    CHECK(st.step == 1);
}

TEST_CASE("adam decay-only path") {
    ParamStore p;
    p.add("w", Tensor2::from_rows({{1.0, -4.0}}));
    AdamState st = AdamState::for_params(p);
    adam_step(p, p.zeros_like(), st, 0.1, 5e-4);
    CHECK(p.at("w")(0, 0) == doctest::Approx(1.0 * (1 - 0.1 * 5e-4)).epsilon(1e-15));
    CHECK(p.at("w")(0, 1) == doctest::Approx(-4.0 * (1 - 0.1 * 5e-4)).epsilon(1e-15));
}

TEST_CASE("adam rejects mismatched layouts") {
    ParamStore p, g;
    p.add("w", Tensor2(2, 2));
    g.add("w", Tensor2(2, 3));
    AdamState st = AdamState::for_params(p);
    CHECK_THROWS_AS(adam_step(p, g, st, 0.1, 0), DimensionError);
}

TEST_CASE("grad check on a linear model is essentially exact") {
    Rng rng(215);
    ParamStore p;
    p.add("w", random_matrix(4, 3, rng));
    const Tensor2 c = random_matrix(4, 3, rng);
    const auto closure = [&](const ParamStore& ps, ParamStore* g) {
        if (g) g->at("w") += c;
        return probe(ps.at("w"), c);
    };
    const GradCheckReport rep = grad_check(closure, p);
    CHECK(rep.max_rel_error < 1e-9);
    CHECK(rep.pass);
    CHECK(rep.step == 1e-5);
    REQUIRE(rep.params.size() == 1);
    CHECK(rep.params[0].coords == 12);
}

TEST_CASE("grad check catches a corrupted backward") {
    Rng rng(216);
    ParamStore p;
    p.add("w", random_matrix(3, 3, rng));
    const auto closure = [&](const ParamStore& ps, ParamStore* g) {
        double s = 0;
        for (double v : ps.at("w").values()) s += v * v;
        if (g) g->at("w") += ps.at("w") * 3.0;  // true gradient is 2w
        return s;
    };
    const GradCheckReport rep = grad_check(closure, p);
    CHECK(!rep.pass);
    CHECK(rep.max_rel_error > 0.1);
}

TEST_CASE("grad check subsamples large tensors") {
    Rng rng(217);
    ParamStore p;
    p.add("w", random_matrix(20, 20, rng));
    const auto closure = [&](const ParamStore& ps, ParamStore* g) {
        if (g) g->at("w") += ps.at("w") * 2.0;
        double s = 0;
        for (double v : ps.at("w").values()) s += v * v;
        return s;
    };
    const GradCheckReport rep = grad_check(closure, p);
    CHECK(rep.params[0].coords == 32);
    CHECK(rep.pass);
}

TEST_CASE("grad check raises on non-finite loss") {
    ParamStore p;
    p.add("w", Tensor2(1, 1, 1.0));
    const auto closure = [](const ParamStore&, ParamStore*) { return std::nan(""); };
    CHECK_THROWS_AS(grad_check(closure, p), NumericalError);
}

TEST_CASE("parameter checkpoints round-trip") {
    Rng rng(218);
    TempDir dir("nnparams");
    ParamStore p;
    p.add("a.w0", random_matrix(3, 5, rng));
    p.add("a.b0", random_matrix(1, 5, rng));
    p.add("z", Tensor2(0, 0));
    p.init_seed = 99;
    save_params(p, dir.path(), R"({"note": "x"})");
    const ParamStore q = load_params(dir.path());
    CHECK(q == p);
    CHECK(q.same_layout(p));
    CHECK_THROWS_AS(load_params(dir / "missing"), IoError);
}

TEST_CASE("glorot initialisation stays inside its bound") {
    Rng rng(219);
    const Tensor2 w = glorot_uniform(30, 20, rng);
    const double bound = std::sqrt(6.0 / 50.0);
    for (double v : w.values()) CHECK(std::abs(v) <= bound);
}
