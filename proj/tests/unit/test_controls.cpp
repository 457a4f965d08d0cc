#include <cmath>
#include <doctest.h>

#include "helpers.hpp"
#include "sdeis/control.hpp"
#include "sdeis/hjb.hpp"

using namespace sdeis;
using sdeis::test::fd_gradient;
using sdeis::test::random_vec;
using sdeis::test::rel_err;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

FeedForwardNet small_net(std::size_t d, std::uint64_t seed)
{
    return FeedForwardNet::random_init(FeedForwardNet::widths_for(d, {30, 30}), seed);
}

double normalized_density(const Vec& x, const Vec& mu, const Mat& cov)
{
    const double d = static_cast<double>(x.size());
    Vec r = x - mu;
    return std::exp(-0.5 * r.dot(cov.ldlt().solve(r))) / std::sqrt(std::pow(2.0 * M_PI, d) * cov.determinant());
}

/// cotangent . u_theta(x) as a function of theta, for finite differences.
double contracted(Control& c, const Vec& theta, const Vec& x, const Vec& cot)
{
    Vec saved = to_vec(c.params());
    c.set_params(as_span(theta));
    double v = cot.dot(control_eval(c, x));
    c.set_params(as_span(saved));
    return v;
}

}  // namespace

TEST_CASE("zero control")
{
    ZeroControl z(3);
    CHECK(control_eval(z, Vec::Constant(3, 0.7)).isZero(0.0));
    CHECK(z.param_count() == 0);
    CHECK_THROWS_AS(control_param_vjp(z, Vec::Zero(3), Vec::Ones(3)), UnsupportedOperation);
    CHECK_THROWS_AS(control_eval(z, Vec::Zero(2)), InputError);
}

TEST_CASE("bias-derived control")
{
    CHECK(control_from_bias(BiasPotential(1), 1.0)->is_zero());
    CHECK(control_eval(*control_from_bias(BiasPotential(2), 1.0), Vec::Constant(2, 0.3)).isZero(0.0));

    BiasPotential b(1, {GaussianBump::isotropic(1.0, v1(0.0), 0.5)});
    auto u = control_from_bias(b, 1.0);
    CHECK(control_eval(*u, v1(1.0))[0] == doctest::Approx(2.0 * std::exp(-1.0) / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(control_eval(*u, v1(1.0))[0] == doctest::Approx(0.520260).epsilon(1e-6));
    CHECK_THROWS_AS(control_param_vjp(*u, v1(0.0), v1(1.0)), UnsupportedOperation);

    std::mt19937_64 g(11);
    for (double beta : {0.5, 1.0, 3.0}) {
        BiasPotential c(2);
        for (int k = 0; k < 4; ++k)
            c.add(GaussianBump::isotropic(0.5 + k, random_vec(g, 2, -1, 1), 0.5));
        auto uc = control_from_bias(c, beta);
        const double sigma = std::sqrt(2.0 / beta);
        for (int i = 0; i < 20; ++i) {
            Vec x = random_vec(g, 2, -2, 2);
            Vec drift = sigma * control_eval(*uc, x);
            Vec grad = bias_grad(c, x);
            CHECK(rel_err(drift, -grad) <= 4e-16);
        }
    }
}

TEST_CASE("gaussian ansatz basics")
{
    auto a = GaussianAnsatz::on_grid(1, -3.0, 3.0, 50, 0.5);
    CHECK(a.size() == 50);
    CHECK(a.center(0)[0] == -3.0);
    CHECK(a.center(49)[0] == 3.0);
    CHECK(a.normalization(0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI * 0.5)).epsilon(1e-15));
    CHECK(GaussianAnsatz::on_grid(2, -3.0, 3.0, 10, 0.5).size() == 100);

    GaussianAnsatz single({v1(0.4)}, {Mat::Constant(1, 1, 0.5)}, Vec::Constant(1, 3.0));
    CHECK(control_eval(single, v1(0.4))[0] == 0.0);
}

TEST_CASE("gaussian ansatz gradient is the gradient of the normalized density")
{
    std::mt19937_64 g(12);
    for (int t = 0; t < 30; ++t) {
        const auto d = static_cast<Eigen::Index>(1 + t % 3);
        Vec mu = random_vec(g, d, -1, 1);
        Mat L = Mat::Random(d, d) * 0.3;
        Mat cov = L * L.transpose() + 0.4 * Mat::Identity(d, d);
        cov = (0.5 * (cov + cov.transpose())).eval();
        GaussianAnsatz a({mu}, {cov}, Vec::Ones(1));
        Vec x = random_vec(g, d, -1.5, 1.5);
        Vec fd = fd_gradient([&](const Vec& y) { return normalized_density(y, mu, cov); }, x, 1e-5);
        CHECK(rel_err(control_eval(a, x), fd) <= 1e-7);
    }
}

TEST_CASE("gaussian ansatz is linear in its weights")
{
    std::mt19937_64 g(13);
    auto a = GaussianAnsatz::on_grid(2, -3, 3, 4, 0.5);
    auto b = a, c = a;
    Vec t1 = random_vec(g, 16, -1, 1), t2 = random_vec(g, 16, -1, 1);
    b.set_params(as_span(t1));
    c.set_params(as_span(t2));
    Vec mix = 2.5 * t1 - 0.75 * t2;
    a.set_params(as_span(mix));
    for (int i = 0; i < 20; ++i) {
        Vec x = random_vec(g, 2, -3, 3);
        Vec lhs = control_eval(a, x);
        Vec rhs = 2.5 * control_eval(b, x) - 0.75 * control_eval(c, x);
        CHECK(rel_err(lhs, rhs, 1e-300) <= 1e-13);
    }
}

TEST_CASE("gaussian ansatz vjp does not depend on the weights")
{
    std::mt19937_64 g(14);
    auto a = GaussianAnsatz::on_grid(1, -3, 3, 7, 0.5);
    Vec x = v1(0.37), cot = v1(-1.3);
    Vec before = control_param_vjp(a, x, cot);
    Vec th = random_vec(g, 7, -5, 5);
    a.set_params(as_span(th));
    Vec after = control_param_vjp(a, x, cot);
    CHECK((before.array() == after.array()).all());
    CHECK(control_param_vjp(a, x, v1(0.0)).isZero(0.0));
    for (std::size_t i = 0; i < 7; ++i) {
        GaussianAnsatz one({a.center(i)}, {a.covariance(i)}, Vec::Ones(1));
        CHECK(before[static_cast<Eigen::Index>(i)] == doctest::Approx(cot.dot(control_eval(one, x))).epsilon(1e-14));
    }
}

TEST_CASE("network shape and degenerate cases")
{
    std::vector<std::size_t> w{3, 30, 30, 3};
    CHECK(FeedForwardNet::count_params(w) == 3 * 30 + 30 + 30 * 30 + 30 + 30 * 3 + 3);
    auto net = FeedForwardNet::random_init(w, 1);
    CHECK(net.param_count() == FeedForwardNet::count_params(w));
    CHECK(net.dim() == 3);

    // all weight matrices zero: constant output b_L
    Vec p = Vec::Zero(static_cast<Eigen::Index>(net.param_count()));
    Vec bL(3);
    bL << 0.1, -0.2, 0.3;
    p.tail(3) = bL;
    p.segment(90, 30).setConstant(0.7);  // b_1 nonzero is irrelevant once A_2 = 0
    FeedForwardNet c(w, p);
    std::mt19937_64 g(15);
    for (int i = 0; i < 5; ++i)
        CHECK((control_eval(c, random_vec(g, 3, -3, 3)).array() == bL.array()).all());

    // single identity layer is the identity map
    Vec q = Vec::Zero(6);
    q << 1.0, 0.0, 0.0, 1.0, 0.0, 0.0;
    FeedForwardNet id({2, 2}, q);
    Vec x = random_vec(g, 2, -3, 3);
    CHECK((control_eval(id, x).array() == x.array()).all());

    net.zero_output_layer();
    CHECK(control_eval(net, random_vec(g, 3, -3, 3)).isZero(0.0));

    CHECK_THROWS_AS(FeedForwardNet({2, 5, 3}, Vec::Zero(static_cast<Eigen::Index>(FeedForwardNet::count_params({2, 5, 3})))),
                    InputError);
    CHECK_THROWS_AS(FeedForwardNet(w, Vec::Zero(4)), InputError);
}

TEST_CASE("network initialization is seeded and bounded by fan-in")
{
    auto w = FeedForwardNet::widths_for(2, {30, 30});
    auto a = FeedForwardNet::random_init(w, 42), b = FeedForwardNet::random_init(w, 42),
         c = FeedForwardNet::random_init(w, 43);
    CHECK((to_vec(a.params()).array() == to_vec(b.params()).array()).all());
    CHECK(!(to_vec(a.params()).array() == to_vec(c.params()).array()).all());
    Vec p = to_vec(a.params());
    CHECK(p.head(2 * 30 + 30).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(2.0));
    CHECK(p.segment(90, 930).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(30.0));
}

TEST_CASE("network outputs stay finite on the domain box")
{
    std::mt19937_64 g(16);
    for (std::size_t d : {1u, 2u, 5u}) {
        auto net = small_net(d, d);
        for (int i = 0; i < 200; ++i)
            CHECK(control_eval(net, random_vec(g, static_cast<Eigen::Index>(d), -3, 3)).allFinite());
    }
}

TEST_CASE("network vjp matches finite differences on 100 random pairs")
{
    std::mt19937_64 g(17);
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = 1 + static_cast<std::size_t>(t % 3);
        auto net = small_net(d, static_cast<std::uint64_t>(100 + t));
        const auto D = static_cast<Eigen::Index>(d);
        Vec x = random_vec(g, D, -3, 3), cot = random_vec(g, D, -1, 1);
        Vec vjp = control_param_vjp(net, x, cot);
        Vec theta = to_vec(net.params());
        Vec fd = fd_gradient([&](const Vec& th) { return contracted(net, th, x, cot); }, theta, 1e-5);
        CHECK(rel_err(vjp, fd) <= 1e-5);
    }
}

TEST_CASE("vjp is linear in the cotangent")
{
    std::mt19937_64 g(18);
    auto net = small_net(2, 5);
    auto ans = GaussianAnsatz::on_grid(2, -3, 3, 5, 0.5);
    for (Control* c : std::initializer_list<Control*>{&net, &ans}) {
        for (int i = 0; i < 20; ++i) {
            Vec x = random_vec(g, 2, -3, 3), c1 = random_vec(g, 2, -1, 1), c2 = random_vec(g, 2, -1, 1);
            Vec lhs = control_param_vjp(*c, x, 1.7 * c1 - 0.4 * c2);
            Vec rhs = 1.7 * control_param_vjp(*c, x, c1) - 0.4 * control_param_vjp(*c, x, c2);
            CHECK(rel_err(lhs, rhs, 1e-300) <= 1e-13);
        }
    }
}

TEST_CASE("repeated vjp on one forward pass accumulates")
{
    auto net = small_net(2, 9);
    Vec x(2), c1(2), c2(2);
    x << 0.2, -0.9;
    c1 << 1.0, 0.5;
    c2 << -0.3, 2.0;
    Scratch s;
    Vec u(2), acc = Vec::Zero(static_cast<Eigen::Index>(net.param_count()));
    net.eval(as_span(x), as_span(u), s);
    net.accumulate_vjp(s, as_span(c1), as_span(acc));
    net.accumulate_vjp(s, as_span(c2), as_span(acc));
    Vec expect = control_param_vjp(net, x, c1) + control_param_vjp(net, x, c2);
    CHECK(rel_err(acc, expect) <= 1e-14);
}

TEST_CASE("deferred pair vjp equals separate vjps")
{
    std::mt19937_64 g(23);
    auto net = small_net(2, 4);
    auto inner = std::make_shared<FeedForwardNet>(small_net(1, 6));
    CvLiftedControl lifted(inner, {1}, 3);
    GaussianAnsatz ans = GaussianAnsatz::on_grid(2, -1.0, 1.0, 3, 0.4);
    Vec w = random_vec(g, 9, -1, 1);
    ans.set_params(as_span(w));
    for (const Control* c : {static_cast<const Control*>(&net), static_cast<const Control*>(&lifted),
                             static_cast<const Control*>(&ans)}) {
        const auto d = static_cast<Eigen::Index>(c->dim());
        const auto p = static_cast<Eigen::Index>(c->param_count());
        // 75 steps cross two block boundaries and leave a partial block for the flush
        for (int steps : {1, 32, 75}) {
            Scratch s;
            Vec a = Vec::Zero(p), b = Vec::Zero(p), ea = Vec::Zero(p), eb = Vec::Zero(p), u(d);
            for (int n = 0; n < steps; ++n) {
                Vec x = random_vec(g, d, -2, 2), ca = random_vec(g, d, -1, 1), cb = random_vec(g, d, -1, 1);
                c->eval(as_span(x), as_span(u), s);
                c->accumulate_vjp_pair(s, as_span(ca), as_span(cb), as_span(a), as_span(b));
                ea += control_param_vjp(*c, x, ca);
                eb += control_param_vjp(*c, x, cb);
            }
            c->flush_vjp(s, as_span(a), as_span(b));
            CHECK(rel_err(a, ea) <= 1e-13);
            CHECK(rel_err(b, eb) <= 1e-13);
            // flushing again is a no-op
            Vec a2 = a;
            c->flush_vjp(s, as_span(a), as_span(b));
            CHECK((a.array() == a2.array()).all());
        }
    }
}

TEST_CASE("cv lift")
{
    std::mt19937_64 g(19);
    BiasPotential b1(1);
    for (int k = 0; k < 5; ++k)
        b1.add(GaussianBump::isotropic(0.5 + 0.2 * k, random_vec(g, 1, -1.5, 0.5), 0.5));

    auto lifted = lift_cv_control(b1, {0}, 20, 1.0);
    auto inner = control_from_bias(b1, 1.0);
    for (int i = 0; i < 20; ++i) {
        Vec x = random_vec(g, 20, -2, 2);
        Vec u = control_eval(*lifted, x);
        CHECK(u.tail(19).isZero(0.0));
        CHECK(u[0] == control_eval(*inner, x.head(1))[0]);
        // coordinate 1 is -sigma^-1 d/dx_1 of the bias composed with the projection
        Vec fd = fd_gradient([&](const Vec& y) { return bias_eval(b1, y.head(1)); }, x, 1e-5);
        CHECK(std::abs(u[0] - (-fd[0] / std::sqrt(2.0))) <= 1e-6 * std::max(1.0, std::abs(u[0])));
    }

    BiasPotential b2(2);
    for (int k = 0; k < 3; ++k)
        b2.add(GaussianBump::isotropic(1.0, random_vec(g, 2, -1, 1), 0.5));
    auto ident = lift_cv_control(b2, {0, 1}, 2, 1.0);
    auto direct = control_from_bias(b2, 1.0);
    for (int i = 0; i < 10; ++i) {
        Vec x = random_vec(g, 2, -2, 2);
        CHECK((control_eval(*ident, x).array() == control_eval(*direct, x).array()).all());
    }

    CHECK_THROWS_AS(lift_cv_control(b2, {1, 1}, 3, 1.0), InputError);
    CHECK_THROWS_AS(lift_cv_control(b2, {0, 3}, 3, 1.0), InputError);
    CHECK_THROWS_AS(lift_cv_control(b2, {0}, 3, 1.0), InputError);
}

TEST_CASE("cv lift of a parametric control forwards the vjp")
{
    auto inner = std::make_shared<FeedForwardNet>(FeedForwardNet::random_init({1, 8, 1}, 3));
    CvLiftedControl lifted(inner, {2}, 4);
    CHECK(lifted.param_count() == inner->param_count());
    Vec x(4), cot(4);
    x << 0.3, -0.1, 0.8, 2.0;
    cot << 5.0, 5.0, 0.7, 5.0;
    Vec got = control_param_vjp(lifted, x, cot);
    Vec expect = control_param_vjp(*inner, Vec::Constant(1, 0.8), Vec::Constant(1, 0.7));
    CHECK((got.array() == expect.array()).all());
}

TEST_CASE("controls round-trip through json exactly")
{
    std::mt19937_64 g(20);
    auto net = small_net(2, 77);
    auto ans = GaussianAnsatz::on_grid(2, -3, 3, 3, 0.5);
    Vec th = random_vec(g, 9, -1, 1);
    ans.set_params(as_span(th));
    BiasPotential b(1, {GaussianBump::isotropic(0.9, v1(-0.8), 0.5)});
    auto bias = control_from_bias(b, 2.0);
    auto lifted = lift_cv_control(b, {1}, 3, 1.0);
    ZeroControl zero(2);

    for (const Control* c : std::initializer_list<const Control*>{&net, &ans, bias.get(), lifted.get(), &zero}) {
        auto back = control_from_json(nlohmann::json::parse(c->to_json().dump()));
        CHECK(back->kind() == c->kind());
        CHECK(back->dim() == c->dim());
        CHECK(back->param_count() == c->param_count());
        if (c->parametric())
            CHECK((to_vec(back->params()).array() == to_vec(c->params()).array()).all());
        for (int i = 0; i < 5; ++i) {
            Vec x = random_vec(g, static_cast<Eigen::Index>(c->dim()), -2, 2);
            CHECK((control_eval(*back, x).array() == control_eval(*c, x).array()).all());
        }
    }
    CHECK_THROWS_AS(control_from_json(nlohmann::json::parse(R"({"kind":"spline"})")), InputError);
    CHECK_THROWS_AS(control_from_json(nlohmann::json::parse(R"({"kind":"feedforward","widths":[1,2,1]})")), InputError);
}

TEST_CASE("clone is deep for parametric controls")
{
    auto net = small_net(1, 1);
    auto copy = net.clone();
    Vec p = to_vec(net.params());
    p.setZero();
    copy->set_params(as_span(p));
    CHECK(!to_vec(net.params()).isZero(0.0));
}
