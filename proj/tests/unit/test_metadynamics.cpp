#include <cmath>
#include <doctest.h>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "sdeis/metadynamics.hpp"

using namespace sdeis;

namespace {

MetaConfig meta(std::size_t d, double alpha, double delta, std::uint64_t seed)
{
    MetaConfig m;
    m.dynamics.potential = PotentialSpec(std::vector<double>(d, alpha));
    m.dynamics.x0 = Vec::Constant(static_cast<Eigen::Index>(d), -1.0);
    m.dynamics.target = Box::cube(d, 1.0, 3.0);
    m.delta = delta;
    m.eta = 1.0;
    m.cov = 0.5 * Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    m.seed = seed;
    return m;
}

struct Interval
{
    Vec mean, lo, hi;
};

/// Straight re-simulation of one biased trajectory, recording each interval's states.
std::vector<Interval> replay(const MetaConfig& m, std::size_t index, BiasPotential bias, double weight)
{
    const auto& c = m.dynamics;
    const auto d = static_cast<Eigen::Index>(c.dim());
    const double sigma = c.sigma(), sq = std::sqrt(c.dt);
    const auto per = static_cast<std::size_t>(std::llround(m.delta / c.dt));
    RngStream rng(m.seed, index);
    Vec x = c.x0, xi(d);
    std::vector<Interval> out;
    std::vector<Vec> states;
    for (std::uint64_t n = 0; n < c.max_steps && !c.target.contains(as_span(x)); ++n) {
        Vec u = -bias_grad(bias, x) / sigma;
        rng.fill_normal(as_span(xi));
        x = x + (-potential_grad(c.potential, x) + sigma * u) * c.dt + sigma * sq * xi;
        if (c.target.contains(as_span(x)))
            break;
        states.push_back(x);
        if (states.size() == per) {
            Interval iv{Vec::Zero(d), states[0], states[0]};
            for (const auto& s : states) {
                iv.mean += s;
                iv.lo = iv.lo.cwiseMin(s);
                iv.hi = iv.hi.cwiseMax(s);
            }
            iv.mean /= static_cast<double>(per);
            bias.add(GaussianBump(weight, iv.mean, m.cov));
            out.push_back(iv);
            states.clear();
        }
    }
    return out;
}

}  // namespace

TEST_CASE("config validation")
{
    auto m = meta(1, 5.0, 0.2, 1);
    CHECK_NOTHROW(m.validate());
    CHECK(m.steps_per_interval() == 200);
    auto bad = m;
    bad.delta = 0.2005;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = m;
    bad.k_meta = 3;
    bad.scale_r = 1.0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = m;
    bad.cov = Mat::Identity(2, 2);
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = m;
    bad.eta = 0.0;
    CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("start inside the target deposits nothing")
{
    auto m = meta(1, 5.0, 0.2, 1);
    m.dynamics.x0 = Vec::Constant(1, 1.5);
    auto r = metadynamics_single(m);
    CHECK(r.bias.size() == 0);
    CHECK(r.complete);
    CHECK(r.log.at(0).steps == 0);
}

TEST_CASE("bump means are interval averages inside the visited hull")
{
    for (std::size_t d : {1u, 2u}) {
        auto m = meta(d, 3.0, 0.05, 4);
        auto r = metadynamics_single(m);
        auto iv = replay(m, 0, BiasPotential(d), 1.0);
        REQUIRE(iv.size() == r.bias.size());
        for (std::size_t i = 0; i < iv.size(); ++i) {
            const Vec& mu = r.bias.bumps()[i].mean();
            CHECK(sdeis::test::rel_err(mu, iv[i].mean, 1.0) <= 1e-10);
            CHECK((mu.array() >= iv[i].lo.array() - 1e-12).all());
            CHECK((mu.array() <= iv[i].hi.array() + 1e-12).all());
            CHECK(r.bias.bumps()[i].weight() == 1.0);
        }
    }
}

TEST_CASE("cumulative weights follow r^k eta per trajectory")
{
    auto m = meta(1, 3.0, 0.05, 8);
    m.k_meta = 5;
    m.scale_r = 0.8;
    m.eta = 0.7;
    auto r = metadynamics_cumulative(m);
    REQUIRE(r.log.size() == 5);
    std::size_t at = 0;
    for (std::size_t k = 0; k < 5; ++k) {
        const double w = k == 0 ? 0.7 : 0.7 * std::pow(0.8, static_cast<double>(k));
        for (std::size_t b = 0; b < r.log[k].bumps; ++b)
            CHECK(r.bias.bumps()[at++].weight() == w);
    }
    CHECK(at == r.bias.size());
}

TEST_CASE("single trajectory equals cumulative with one trajectory")
{
    auto m = meta(1, 5.0, 0.2, 3);
    m.k_meta = 1;
    auto a = metadynamics_single(m);
    auto b = metadynamics_cumulative(m);
    REQUIRE(a.bias.size() == b.bias.size());
    for (std::size_t i = 0; i < a.bias.size(); ++i) {
        CHECK((a.bias.bumps()[i].mean().array() == b.bias.bumps()[i].mean().array()).all());
        CHECK(a.bias.bumps()[i].weight() == b.bias.bumps()[i].weight());
    }
    // single ignores k_meta
    m.k_meta = 4;
    CHECK(metadynamics_single(m).bias.size() == a.bias.size());
}

TEST_CASE("bias grows monotonically across trajectories")
{
    auto m = meta(1, 3.0, 0.05, 2);
    m.scale_r = 0.9;
    std::vector<BiasPotential> stages;
    for (std::size_t k = 1; k <= 4; ++k) {
        m.k_meta = k;
        stages.push_back(metadynamics_cumulative(m).bias);
    }
    for (std::size_t k = 1; k < stages.size(); ++k) {
        CHECK(stages[k].size() >= stages[k - 1].size());
        for (double x = -3.0; x <= 3.0; x += 0.05) {
            Vec y = Vec::Constant(1, x);
            CHECK(bias_eval(stages[k], y) >= bias_eval(stages[k - 1], y));
        }
    }
}

TEST_CASE("bump count for the alpha=5 double well")
{
    std::size_t in_range = 0;
    std::vector<std::size_t> counts;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        auto r = metadynamics_single(meta(1, 5.0, 0.2, s));
        counts.push_back(r.bias.size());
        in_range += r.complete && r.bias.size() >= 2 && r.bias.size() <= 15;
    }
    std::string list;
    for (auto c : counts)
        list += std::to_string(c) + " ";
    MESSAGE("M over 20 seeds: " << list);
    CHECK(in_range >= 19);
}

TEST_CASE("bump count for the two-dimensional double well")
{
    std::size_t in_range = 0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        auto r = metadynamics_single(meta(2, 5.0, 1.0, s));
        in_range += r.complete && r.bias.size() >= 4 && r.bias.size() <= 20;
    }
    CHECK(in_range >= 19);
}

TEST_CASE("cumulative bump count in four dimensions")
{
    auto m = meta(4, 5.0, 5.0, 1);
    m.k_meta = 100;
    m.scale_r = 0.95;
    auto r = metadynamics_cumulative(m);
    MESSAGE("4D cumulative M = " << r.bias.size());
    CHECK(r.complete);
    CHECK(r.bias.size() >= 100);
    CHECK(r.bias.size() <= 600);
}

TEST_CASE("metadynamics escapes where plain dynamics does not")
{
    // budget of 1e4 steps (10 time units) against a mean uncontrolled hitting time near 36
    std::size_t meta_hits = 0, plain_hits = 0;
    ZeroControl z(1);
    for (std::uint64_t s = 1; s <= 20; ++s) {
        auto m = meta(1, 5.0, 0.2, s);
        m.dynamics.max_steps = 10000;
        meta_hits += metadynamics_single(m).complete;
        RngStream rng(s, 0);
        plain_hits += !simulate_trajectory(m.dynamics, z, rng).truncated;
    }
    MESSAGE("hits: metadynamics " << meta_hits << "/20, plain " << plain_hits << "/20");
    CHECK(meta_hits >= 19);
    CHECK(plain_hits <= 10);
}

TEST_CASE("incomplete runs return the partial bias")
{
    auto m = meta(1, 5.0, 0.2, 1);
    m.dynamics.max_steps = 450;
    auto r = metadynamics_single(m);
    CHECK(!r.complete);
    CHECK(r.bias.size() == 2);
    CHECK(!r.log[0].hit);
}

TEST_CASE("collective-variable mode")
{
    MetaConfig m;
    std::vector<double> alpha(20, 0.5);
    alpha[0] = 5.0;
    m.dynamics.potential = PotentialSpec(alpha);
    m.dynamics.x0 = Vec::Constant(20, -1.0);
    Vec lo = Vec::Constant(20, -3.0), hi = Vec::Constant(20, 3.0);
    lo[0] = 1.0;
    m.dynamics.target = Box(lo, hi);
    m.delta = 0.2;
    m.cov = Mat::Constant(1, 1, 0.5);
    m.cv_projection = std::vector<std::size_t>{0};
    m.seed = 5;
    auto r = metadynamics_single(m);
    CHECK(r.complete);
    CHECK(r.bias.space_dim() == 1);
    CHECK(r.bias.size() >= 1);
    for (const auto& b : r.bias.bumps())
        CHECK(b.mean().size() == 1);
    auto u = r.control(m);
    CHECK(u->dim() == 20);
    std::mt19937_64 g(1);
    for (int i = 0; i < 10; ++i) {
        Vec v = control_eval(*u, sdeis::test::random_vec(g, 20, -2, 2));
        CHECK(v.tail(19).isZero(0.0));
    }
    auto bad = m;
    bad.cv_projection = std::vector<std::size_t>{0, 0};
    bad.cov = Mat::Identity(2, 2);
    CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("log csv")
{
    auto m = meta(1, 5.0, 0.2, 1);
    m.k_meta = 3;
    auto r = metadynamics_cumulative(m);
    auto path = std::filesystem::temp_directory_path() / "sdeis_test_meta_log.csv";
    write_meta_log_csv(r, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "# schema_version=1");
    std::getline(in, line);
    CHECK(line == "trajectory,bumps,status,steps");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        CHECK(line.find(",hit,") != std::string::npos);
        ++rows;
    }
    CHECK(rows == 3);
    std::filesystem::remove(path);
}
