#include <cmath>
#include <cstring>

#include "doctest.h"
#include "ldm/common.hpp"
#include "ldm/tensor.hpp"
#include "oracles.hpp"

using namespace ldm;

TEST_SUITE("tensor") {

TEST_CASE("elementwise forward basics") {
    Tensor a = Tensor::from_data({1, 2}, {2});
    Tensor b = Tensor::from_data({3, 4}, {2});
    Tensor c = add(a, b);
    CHECK(c.at(0) == 4.0);
    CHECK(c.at(1) == 6.0);
    CHECK(exp(Tensor::from_data({0}, {1})).at(0) == 1.0);
    Tensor d = sub(b, a);
    CHECK(d.at(0) == 2.0);
    CHECK(mul(a, b).at(1) == 8.0);
    CHECK(div(b, a).at(1) == 2.0);
}

TEST_CASE("broadcast is trailing-suffix only") {
    Tensor m = Tensor::from_data({1, 2, 3, 4, 5, 6}, {2, 3});
    Tensor v = Tensor::from_data({10, 20, 30}, {3});
    Tensor r = add(m, v);
    CHECK(r.at(0, 0) == 11.0);
    CHECK(r.at(1, 2) == 36.0);
    Tensor bad = Tensor::from_data({1, 2}, {2, 1});
    CHECK_THROWS_AS(add(m, bad), Error);
}

TEST_CASE("grad of sum(square(a))") {
    Tensor a = Tensor::param({1, 2, 3}, {3});
    Tensor loss = sum(square(a));
    backward(loss);
    CHECK(a.grad()[0] == doctest::Approx(2.0));
    CHECK(a.grad()[1] == doctest::Approx(4.0));
    CHECK(a.grad()[2] == doctest::Approx(6.0));

    auto fd = oracles::finite_diff_grad([&] { return sum(square(a)).item(); }, a, 1e-6);
    CHECK(oracles::max_grad_rel_err(a.grad(), fd) < 1e-6);
}

TEST_CASE("matmul forward") {
    Tensor eye = Tensor::from_data({1, 0, 0, 1}, {2, 2});
    Tensor m = Tensor::from_data({1, 2, 3, 4}, {2, 2});
    Tensor r = matmul(eye, m);
    CHECK(std::memcmp(r.data().data(), m.data().data(), 4 * sizeof(double)) == 0);

    Tensor a = Tensor::from_data({1, 2}, {1, 2});
    Tensor b = Tensor::from_data({3, 4}, {2, 1});
    CHECK(matmul(a, b).item() == 11.0);

    CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("gradient of trace(A*B) w.r.t. A equals B^T") {
    Rng rng(7);
    std::vector<double> av(9), bv(9);
    for (auto& x : av) x = rng.normal();
    for (auto& x : bv) x = rng.normal();
    Tensor a = Tensor::param(av, {3, 3});
    Tensor b = Tensor::from_data(bv, {3, 3});
    backward(trace(matmul(a, b)));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(a.grad()[size_t(i * 3 + j)] == doctest::Approx(bv[size_t(j * 3 + i)]));

    auto fd = oracles::finite_diff_grad([&] { return trace(matmul(a, b)).item(); }, a);
    CHECK(oracles::max_grad_rel_err(a.grad(), fd) < 1e-4);
}

TEST_CASE("stopgrad forward identity, zero pullback") {
    Tensor a = Tensor::param({2}, {1});
    Tensor s = stopgrad(a);
    CHECK(s.at(0) == 2.0);
    CHECK(!s.requires_grad());

    // only the non-stopgrad factor contributes
    Tensor loss = sum(mul(stopgrad(a), a));
    backward(loss);
    CHECK(a.grad()[0] == doctest::Approx(2.0));
    // finite differences with the stopgrad branch frozen
    Tensor frozen = Tensor::from_data({2}, {1});
    auto fd = oracles::finite_diff_grad([&] { return sum(mul(frozen, a)).item(); }, a);
    CHECK(fd[0] == doctest::Approx(2.0).epsilon(1e-6));

    // a loss made only of stopgrad output is not tape-connected
    a.zero_grad();
    CHECK_THROWS_AS(backward(sum(stopgrad(a))), Error);
    // connected through a zero branch, the stopgrad part still pulls zero
    Tensor loss2 = sum(stopgrad(a)) + sum(mul_scalar(a, 0.0));
    backward(loss2);
    CHECK(a.grad()[0] == 0.0);
}

TEST_CASE("slogdet values") {
    Tensor eye3 = Tensor::from_data({1, 0, 0, 0, 1, 0, 0, 0, 1}, {3, 3});
    auto [s1, l1] = slogdet(eye3);
    CHECK(s1 == 1.0);
    CHECK(l1.item() == doctest::Approx(0.0));

    auto [s2, l2] = slogdet(Tensor::from_data({2, 0, 0, 3}, {2, 2}));
    CHECK(s2 == 1.0);
    CHECK(l2.item() == doctest::Approx(std::log(6.0)));

    // 2x2 cofactor expansion: det = 1 - 0.01 = 0.99
    auto [s3, l3] = slogdet(Tensor::from_data({1, 0.1, 0.1, 1}, {2, 2}));
    CHECK(s3 == 1.0);
    CHECK(l3.item() == doctest::Approx(std::log(0.99)));

    CHECK_THROWS_AS(slogdet(Tensor::zeros({2, 2})), Error);

    auto [s4, l4] = slogdet(Tensor::from_data({0, 1, 1, 0}, {2, 2}));
    CHECK(s4 == -1.0);
    CHECK(l4.item() == doctest::Approx(0.0));
}

TEST_CASE("slogdet gradient matches finite differences on random SPD") {
    Rng rng(11);
    for (int n : {2, 4, 6}) {
        std::vector<double> m(static_cast<size_t>(n * n));
        for (auto& x : m) x = rng.normal();
        // SPD via A = M*M^T + n*I
        std::vector<double> spd(size_t(n * n), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                for (int p = 0; p < n; ++p) spd[size_t(i * n + j)] += m[size_t(i * n + p)] * m[size_t(j * n + p)];
                if (i == j) spd[size_t(i * n + j)] += n;
            }
        Tensor a = Tensor::param(spd, {n, n});
        auto [sign, lad] = slogdet(a);
        CHECK(sign == 1.0);
        backward(lad);
        auto fd = oracles::finite_diff_grad(
            [&] {
                auto [s, l] = slogdet(a);
                return l.item();
            },
            a);
        CHECK(oracles::max_grad_rel_err(a.grad(), fd) < 1e-4);
    }
}

TEST_CASE("solve identity and diagonal") {
    Tensor eye = Tensor::from_data({1, 0, 0, 1}, {2, 2});
    Tensor b = Tensor::from_data({5, 7}, {2, 1});
    Tensor x = solve(eye, b);
    CHECK(x.at(0, 0) == 5.0);
    CHECK(x.at(1, 0) == 7.0);

    Tensor d = Tensor::from_data({2, 0, 0, 4}, {2, 2});
    Tensor rhs = Tensor::from_data({2, 4}, {2, 1});
    Tensor y = solve(d, rhs);
    CHECK(y.at(0, 0) == doctest::Approx(1.0));
    CHECK(y.at(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("solve residual on random well-conditioned 8x8") {
    Rng rng(3);
    int n = 8;
    std::vector<double> av(static_cast<size_t>(n * n));
    for (auto& x : av) x = rng.normal();
    for (int i = 0; i < n; ++i) av[size_t(i * n + i)] += 4.0;  // keeps condition modest
    Tensor a = Tensor::from_data(av, {n, n});
    std::vector<double> bv(static_cast<size_t>(n * 2));
    for (auto& x : bv) x = rng.normal();
    Tensor b = Tensor::from_data(bv, {n, 2});
    Tensor x = solve(a, b);
    Tensor r = sub(matmul(a, x), b);
    double rn = std::sqrt(sum(square(r)).item());
    double bn = std::sqrt(sum(square(b)).item());
    CHECK(rn / bn < 1e-8);
}

TEST_CASE("solve gradients match finite differences") {
    Rng rng(5);
    int n = 3;
    std::vector<double> av(static_cast<size_t>(n * n));
    for (auto& x : av) x = rng.normal();
    for (int i = 0; i < n; ++i) av[size_t(i * n + i)] += 3.0;
    std::vector<double> bv(static_cast<size_t>(n));
    for (auto& x : bv) x = rng.normal();
    Tensor a = Tensor::param(av, {n, n});
    Tensor b = Tensor::param(bv, {n});
    auto make_loss = [&] { return sum(square(solve(a, b))); };
    backward(make_loss());
    auto fda = oracles::finite_diff_grad([&] { return make_loss().item(); }, a);
    auto fdb = oracles::finite_diff_grad([&] { return make_loss().item(); }, b);
    CHECK(oracles::max_grad_rel_err(a.grad(), fda) < 1e-4);
    CHECK(oracles::max_grad_rel_err(b.grad(), fdb) < 1e-4);
}

TEST_CASE("backward basics and accumulation") {
    Tensor a = Tensor::param({1, 2, 3}, {3});
    backward(sum(a));
    CHECK(a.grad()[0] == 1.0);
    CHECK(a.grad()[1] == 1.0);
    CHECK(a.grad()[2] == 1.0);

    a.zero_grad();
    Tensor loss = sum(square(a));
    backward(loss, /*retain_tape=*/true);
    backward(loss);
    CHECK(a.grad()[0] == doctest::Approx(4.0));  // two calls double the grads
    CHECK(a.grad()[2] == doctest::Approx(12.0));

    CHECK_THROWS_AS(backward(Tensor::from_data({1, 2}, {2})), Error);  // not scalar
    CHECK_THROWS_AS(backward(Tensor::scalar(1.0)), Error);             // disconnected
}

TEST_CASE("composite mlp loss gradient matches finite differences") {
    Rng rng(17);
    auto randvec = [&](size_t count) {
        std::vector<double> v(count);
        for (auto& x : v) x = rng.normal() * 0.5;
        return v;
    };
    Tensor w1 = Tensor::param(randvec(12), {4, 3});
    Tensor b1 = Tensor::param(randvec(3), {3});
    Tensor w2 = Tensor::param(randvec(6), {3, 2});
    Tensor x = Tensor::from_data(randvec(20), {5, 4});
    Tensor target = Tensor::from_data(randvec(10), {5, 2});

    auto loss_fn = [&] {
        Tensor h = tanh(add(matmul(x, w1), b1));
        Tensor out = matmul(h, w2);
        return mean(square(sub(out, target)));
    };
    backward(loss_fn());
    for (Tensor* p : {&w1, &b1, &w2}) {
        auto fd = oracles::finite_diff_grad([&] { return loss_fn().item(); }, *p);
        CHECK(oracles::max_grad_rel_err(p->grad(), fd) < 1e-4);
    }
}

TEST_CASE("property: random op compositions match finite differences at 20 points") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(6);
        for (auto& x : v) x = 0.3 + rng.uniform() * 1.5;  // keep log/sqrt/div in-domain
        Tensor a = Tensor::param(v, {2, 3});
        auto loss_fn = [&] {
            Tensor t1 = mul(a, tanh(a));
            Tensor t2 = add(exp(mul_scalar(a, -0.7)), sqrt(a));
            Tensor t3 = div(t1, add_scalar(square(a), 1.0));
            Tensor t4 = log(add_scalar(abs(t2), 0.5));
            return sum(add(t3, t4)) + mean(relu(sub(a, 1.0 + t4 * 0.0)));
        };
        backward(loss_fn());
        auto fd = oracles::finite_diff_grad([&] { return loss_fn().item(); }, a);
        CHECK(oracles::max_grad_rel_err(a.grad(), fd) < 1e-4);
    }
}

TEST_CASE("reductions and row helpers") {
    Tensor a = Tensor::param({1, 2, 3, 4, 5, 6}, {2, 3});
    Tensor rs = rowwise_sum(a);
    CHECK(rs.at(0) == 6.0);
    CHECK(rs.at(1) == 15.0);
    Tensor cm = colwise_mean(a);
    CHECK(cm.at(1) == doctest::Approx(3.5));

    Tensor v = Tensor::param({2, -1}, {2});
    Tensor sc = scale_rows(a, v);
    CHECK(sc.at(0, 2) == 6.0);
    CHECK(sc.at(1, 0) == -4.0);

    auto loss_fn = [&] { return sum(square(scale_rows(shift_rows(a, v), v))); };
    backward(loss_fn());
    auto fda = oracles::finite_diff_grad([&] { return loss_fn().item(); }, a);
    auto fdv = oracles::finite_diff_grad([&] { return loss_fn().item(); }, v);
    CHECK(oracles::max_grad_rel_err(a.grad(), fda) < 1e-4);
    CHECK(oracles::max_grad_rel_err(v.grad(), fdv) < 1e-4);
}

TEST_CASE("logsumexp stability and gradient") {
    Tensor a = Tensor::param({1000.0, 1000.0, -1000.0, 3.0}, {2, 2});
    Tensor l = logsumexp_rows(a);
    CHECK(l.at(0) == doctest::Approx(1000.0 + std::log(2.0)));
    CHECK(l.at(1) == doctest::Approx(3.0));

    Tensor b = Tensor::param({0.3, 1.1, -0.4, 0.9}, {2, 2});
    auto loss_fn = [&] { return sum(logsumexp_rows(b)); };
    backward(loss_fn());
    auto fd = oracles::finite_diff_grad([&] { return loss_fn().item(); }, b);
    CHECK(oracles::max_grad_rel_err(b.grad(), fd) < 1e-4);
}

TEST_CASE("concat, gather, diag ops with gradients") {
    Tensor a = Tensor::param({1, 2, 3, 4}, {2, 2});
    Tensor b = Tensor::param({5, 6}, {1, 2});
    Tensor cr = concat_rows(a, b);
    CHECK(cr.dim(0) == 3);
    CHECK(cr.at(2, 1) == 6.0);
    Tensor cc = concat_cols(a, transpose(b));
    CHECK(cc.dim(1) == 3);
    CHECK(cc.at(1, 2) == 6.0);

    Tensor g = gather_rows(a, {1, 1, 0});
    CHECK(g.dim(0) == 3);
    CHECK(g.at(0, 0) == 3.0);
    auto loss_fn = [&] { return sum(square(gather_rows(a, {1, 1, 0}))); };
    backward(loss_fn());
    auto fd = oracles::finite_diff_grad([&] { return loss_fn().item(); }, a);
    CHECK(oracles::max_grad_rel_err(a.grad(), fd) < 1e-4);

    Tensor dm = diag_matrix(Tensor::from_data({2, 3}, {2}));
    CHECK(dm.at(0, 0) == 2.0);
    CHECK(dm.at(0, 1) == 0.0);
    CHECK(take_diag(dm).at(1) == 3.0);
    Tensor sd = set_diag(a, -7.0);
    CHECK(sd.at(0, 0) == -7.0);
    CHECK(sd.at(0, 1) == 2.0);
}

TEST_CASE("domain errors") {
    CHECK_THROWS_AS(log(Tensor::from_data({0.0}, {1})), Error);
    CHECK_THROWS_AS(log(Tensor::from_data({-1.0}, {1})), Error);
    CHECK_THROWS_AS(div(Tensor::scalar(1.0), Tensor::scalar(0.0)), Error);
    CHECK_THROWS_AS(sqrt(Tensor::from_data({-2.0}, {1})), Error);
}

TEST_CASE("determinism: same seed and op sequence is bit-identical") {
    auto run = [] {
        Rng rng(99);
        std::vector<double> v(16);
        for (auto& x : v) x = rng.normal();
        Tensor a = Tensor::param(v, {4, 4});
        Tensor l = mean(square(tanh(matmul(a, transpose(a)))));
        backward(l);
        std::vector<double> out(a.grad().begin(), a.grad().end());
        out.push_back(l.item());
        return out;
    };
    auto r1 = run(), r2 = run();
    CHECK(r1.size() == r2.size());
    CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("sigmoid and softplus compositions") {
    Tensor a = Tensor::param({-30.0, -1.0, 0.0, 1.0, 30.0}, {5});
    Tensor s = sigmoid(a);
    CHECK(s.at(2) == doctest::Approx(0.5));
    CHECK(s.at(4) == doctest::Approx(1.0));
    Tensor sp = softplus(a);
    CHECK(sp.at(0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(sp.at(4) == doctest::Approx(30.0));
    auto loss_fn = [&] { return sum(softplus(a)) + sum(sigmoid(a)); };
    backward(loss_fn());
    auto fd = oracles::finite_diff_grad([&] { return loss_fn().item(); }, a);
    CHECK(oracles::max_grad_rel_err(a.grad(), fd) < 1e-4);
}

}  // TEST_SUITE
