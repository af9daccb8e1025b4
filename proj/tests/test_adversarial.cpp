#include <cmath>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "ril/adversarial.hpp"
#include "ril/common.hpp"

using namespace ril;

namespace {

template <typename T>
Tensor<T> random_feat(std::mt19937_64& gen, int n, int c, int h, int w, double scale = 1.0) {
    Tensor<T> t(n, c, h, w);
    for (auto& v : t.v)
        v = static_cast<T>((static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * scale);
    return t;
}

template <typename T>
std::vector<T> snapshot_params(Discriminator<T>& d) {
    std::vector<T> out;
    d.visit_params([&](const std::string&, Tensor<T>& p, Tensor<T>*) {
        out.insert(out.end(), p.v.begin(), p.v.end());
    });
    return out;
}

}  // namespace

TEST_CASE("critic loss formulas") {
    CHECK(std::abs(d_net_loss(0.5, 0.5) - 2.0 * std::log(2.0)) < 1e-9);
    CHECK(std::abs(d_data_loss(0.5, 0.5) - 2.0 * std::log(2.0)) < 1e-9);

    // Perfect-discriminator limit.
    CHECK(d_net_loss(1.0 - 1e-12, 1e-12) < 1e-9);

    CHECK(d_net_loss(0.9, 0.2) == doctest::Approx(0.3285).epsilon(1e-3));
    CHECK(d_data_loss(0.99, 0.01) == doctest::Approx(0.0201).epsilon(1e-3));

    // The formula is not symmetric in its arguments.
    CHECK(d_net_loss(0.9, 0.2) != doctest::Approx(d_net_loss(0.2, 0.9)).epsilon(1e-6));

    CHECK(adv_total(1.3863, 1.3863) == doctest::Approx(2.7726).epsilon(1e-6));

    // Probabilities at or beyond the open interval are rejected by name.
    CHECK_THROWS_WITH_AS(d_net_loss(0.0, 0.5), doctest::Contains("teacher"), ValidationError);
    CHECK_THROWS_WITH_AS(d_net_loss(0.5, 1.0), doctest::Contains("complement"), ValidationError);
    CHECK_THROWS_AS(d_data_loss(-0.1, 0.5), ValidationError);
    CHECK_THROWS_AS(d_data_loss(0.5, 1.5), ValidationError);
}

TEST_CASE("scalar partial derivatives match finite differences") {
    std::mt19937_64 gen(1);
    for (int draw = 0; draw < 20; ++draw) {
        double p = 0.05 + 0.9 * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
        double q = 0.05 + 0.9 * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
        // d_net_loss partials: d/dp = -1/p, d/dq = 1/(1-q).
        auto net = [&]() { return d_net_loss(p, q); };
        CHECK(oracle::rel_err(-1.0 / p, oracle::fd_derivative(net, p, 1e-7)) < 1e-3);
        CHECK(oracle::rel_err(1.0 / (1.0 - q), oracle::fd_derivative(net, q, 1e-7)) < 1e-3);
        auto data = [&]() { return d_data_loss(p, q); };
        CHECK(oracle::rel_err(-1.0 / p, oracle::fd_derivative(data, p, 1e-7)) < 1e-3);
        CHECK(oracle::rel_err(1.0 / (1.0 - q), oracle::fd_derivative(data, q, 1e-7)) < 1e-3);
    }
}

TEST_CASE("config validation") {
    AdvConfig cfg;
    cfg.validate(4);
    CHECK(cfg.resolved_stage(4) == 4);
    cfg.observed_stage = 2;
    CHECK(cfg.resolved_stage(4) == 2);
    cfg.observed_stage = 5;
    CHECK_THROWS_AS(cfg.validate(4), ValidationError);
    cfg.observed_stage = 0;
    cfg.d_momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(4), ValidationError);
    cfg.d_momentum = 0.5;
    cfg.g_weight = -1.0;
    CHECK_THROWS_AS(cfg.validate(4), ValidationError);

    CHECK(adv_mode_from_string("coupled") == AdvMode::coupled);
    CHECK_THROWS_AS(adv_mode_from_string("both"), ValidationError);
}

TEST_CASE("off mode is a no-op") {
    AdvConfig cfg;
    cfg.mode = AdvMode::off;
    AdversarialModule<double> adv;
    adv.init(cfg, 4, 7);
    AdvStepResult r = adv.step(nullptr, nullptr, nullptr, nullptr, nullptr);
    CHECK(r.d_net == 0.0);
    CHECK(r.d_data == 0.0);
    CHECK(adv_total(r.g_net, r.g_data) == 0.0);
}

TEST_CASE("single mode computes the net formula on (teacher, student-real)") {
    AdvConfig cfg;
    cfg.mode = AdvMode::single;
    AdversarialModule<double> adv;
    adv.init(cfg, 4, 11);
    // Move off the zero-init plateau so probabilities are generic.
    adv.d_single_disc.visit_params([](const std::string&, Tensor<double>& p, Tensor<double>*) {
        for (auto& v : p.v) v += 0.19;
    });

    std::mt19937_64 gen(12);
    Tensor<double> t = random_feat<double>(gen, 2, 4, 8, 8);
    Tensor<double> sr = random_feat<double>(gen, 2, 4, 8, 8);

    // Independent evaluation of Eq.-style cross-entropy on the same inputs.
    Discriminator<double>::Cache c1, c2;
    Tensor<double> pt = adv.d_single_disc.forward(t, c1);
    Tensor<double> pr = adv.d_single_disc.forward(sr, c2);
    double expected = 0.0;
    for (int i = 0; i < 2; ++i) expected += d_net_loss(pt.v[i], pr.v[i]);
    expected /= 2.0;

    Tensor<double> g_sr = Tensor<double>::like(sr);
    AdvStepResult r = adv.step(&t, nullptr, &sr, nullptr, &g_sr);
    CHECK(r.d_net == doctest::Approx(expected).epsilon(1e-9));
    CHECK(r.d_data == 0.0);
    CHECK(r.g_data == 0.0);
}

TEST_CASE("one alternation: critics move, teacher features and phases stay isolated") {
    AdvConfig cfg;  // coupled
    AdversarialModule<float> adv;
    adv.init(cfg, 4, 13);

    std::mt19937_64 gen(14);
    Tensor<float> t = random_feat<float>(gen, 2, 4, 8, 8);
    Tensor<float> sv = random_feat<float>(gen, 2, 4, 8, 8);
    Tensor<float> sr = random_feat<float>(gen, 2, 4, 8, 8);
    std::vector<float> t_before = t.v;

    std::vector<float> net_before = snapshot_params(adv.d_net_disc);
    std::vector<float> data_before = snapshot_params(adv.d_data_disc);

    Tensor<float> g_sv = Tensor<float>::like(sv);
    Tensor<float> g_sr = Tensor<float>::like(sr);
    AdvStepResult r = adv.step(&t, &sv, &sr, &g_sv, &g_sr);
    CHECK(std::isfinite(r.d_net));
    CHECK(std::isfinite(r.d_data));
    CHECK(r.d_net > 0.0);
    CHECK(r.d_data > 0.0);

    CHECK(t.v == t_before);  // features are constants to the critics
    CHECK(snapshot_params(adv.d_net_disc) != net_before);
    CHECK(snapshot_params(adv.d_data_disc) != data_before);

    // Generator phase alone never touches critic parameters.
    std::vector<float> net_after = snapshot_params(adv.d_net_disc);
    Tensor<float> g2 = Tensor<float>::like(sv);
    adv.generator_term(adv.d_net_disc, sv, g2);
    CHECK(snapshot_params(adv.d_net_disc) == net_after);
}

TEST_CASE("probability clamping keeps saturated inputs finite") {
    AdvConfig cfg;
    AdversarialModule<double> adv;
    adv.init(cfg, 2, 17);
    adv.d_net_disc.visit_params([](const std::string&, Tensor<double>& p, Tensor<double>*) {
        for (auto& v : p.v) v += 0.5;
    });
    std::mt19937_64 gen(18);
    Tensor<double> huge = random_feat<double>(gen, 1, 2, 8, 8, 1e6);
    Discriminator<double>::Cache cache;
    Tensor<double> p = adv.d_net_disc.forward(huge, cache);
    CHECK(p.v[0] >= 1e-7);
    CHECK(p.v[0] <= 1.0 - 1e-7);
    // Even at the clamp boundary the surrogate stays finite.
    Tensor<double> g = Tensor<double>::like(huge);
    double term = adv.generator_term(adv.d_net_disc, huge, g);
    CHECK(std::isfinite(term));
    CHECK(term <= -std::log(1e-7) + 1e-6);
}

TEST_CASE("generator surrogate gradients match finite differences") {
    AdvConfig cfg;
    AdversarialModule<double> adv;
    adv.init(cfg, 3, 19);
    adv.d_net_disc.visit_params([](const std::string&, Tensor<double>& p, Tensor<double>*) {
        for (auto& v : p.v) v += 0.23;
    });

    std::mt19937_64 gen(20);
    for (int draw = 0; draw < 20; ++draw) {
        Tensor<double> feat = random_feat<double>(gen, 1, 3, 8, 8);
        auto surrogate = [&]() {
            Discriminator<double>::Cache c;
            Tensor<double> p = adv.d_net_disc.forward(feat, c);
            return cfg.g_weight * -std::log(p.v[0]);
        };
        Tensor<double> g = Tensor<double>::like(feat);
        adv.generator_term(adv.d_net_disc, feat, g);
        for (int probe = 0; probe < 4; ++probe) {
            std::size_t i = bounded_uint(gen, feat.v.size());
            CHECK(oracle::rel_err(g.v[i], oracle::fd_derivative(surrogate, feat.v[i], 1e-6)) < 1e-3);
        }
    }
}

TEST_CASE("critic parameter gradients match finite differences") {
    DiscriminatorSpec spec;
    spec.in_channels = 3;
    spec.width = 8;
    spec.layers = 2;
    Discriminator<double> d;
    d.init(spec, 21);
    d.visit_params([](const std::string&, Tensor<double>& p, Tensor<double>*) {
        for (auto& v : p.v) v += 0.17;
    });

    std::mt19937_64 gen(22);
    Tensor<double> pos = random_feat<double>(gen, 1, 3, 8, 8);
    Tensor<double> neg = random_feat<double>(gen, 1, 3, 8, 8);

    auto critic_loss = [&]() {
        Discriminator<double>::Cache cp, cn;
        double pp = d.forward(pos, cp).v[0];
        double pn = d.forward(neg, cn).v[0];
        return d_net_loss(pp, pn);
    };

    // Analytic parameter gradients the way the critic phase computes them.
    d.zero_grad();
    Discriminator<double>::Cache cp, cn;
    Tensor<double> pp = d.forward(pos, cp);
    Tensor<double> pn = d.forward(neg, cn);
    Tensor<double> dpos(1, 1, 1, 1), dneg(1, 1, 1, 1);
    dpos.v[0] = -1.0 / pp.v[0];
    dneg.v[0] = 1.0 / (1.0 - pn.v[0]);
    d.backward(cp, dpos, true);
    d.backward(cn, dneg, true);

    d.visit_params([&](const std::string&, Tensor<double>& p, Tensor<double>* grad) {
        REQUIRE(grad != nullptr);
        for (int probe = 0; probe < 4; ++probe) {
            std::size_t i = bounded_uint(gen, p.v.size());
            CHECK(oracle::rel_err(grad->v[i], oracle::fd_derivative(critic_loss, p.v[i], 1e-6)) < 1e-3);
        }
    });
}

TEST_CASE("literal objective differs from the fooling surrogate") {
    AdvConfig cfg;
    AdversarialModule<double> surrogate_adv;
    surrogate_adv.init(cfg, 3, 25);
    surrogate_adv.d_net_disc.visit_params([](const std::string&, Tensor<double>& p, Tensor<double>*) {
        for (auto& v : p.v) v += 0.31;
    });

    std::mt19937_64 gen(26);
    Tensor<double> t = random_feat<double>(gen, 1, 3, 8, 8);
    Tensor<double> sv = random_feat<double>(gen, 1, 3, 8, 8);

    Tensor<double> g_sur = Tensor<double>::like(sv);
    surrogate_adv.generator_term(surrogate_adv.d_net_disc, sv, g_sur);
    Tensor<double> g_lit = Tensor<double>::like(sv);
    surrogate_adv.generator_term_literal(surrogate_adv.d_net_disc, t, nullptr, sv, &g_lit);

    // The surrogate pulls D(S_v) up, the literal objective pushes it down:
    // gradients point in opposite directions.
    double dot = 0.0;
    for (std::size_t i = 0; i < g_sur.v.size(); ++i) dot += g_sur.v[i] * g_lit.v[i];
    CHECK(dot < 0.0);
}

TEST_CASE("critics separate a linearly separable toy set") {
    AdvConfig cfg;
    cfg.d_learning_rate = 0.05;
    AdversarialModule<float> adv;
    adv.init(cfg, 2, 29);

    std::mt19937_64 gen(30);
    // Positives sit on a +1 plane, negatives on -1, with small jitter.
    auto make = [&](double center) {
        Tensor<float> f(4, 2, 8, 8);
        for (auto& v : f.v)
            v = static_cast<float>(center + 0.05 * (static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5));
        return f;
    };
    Tensor<float> pos = make(1.0), neg = make(-1.0);
    double loss = 0.0;
    for (int step = 0; step < 200; ++step) loss = adv.critic_phase(adv.d_net_disc, "d_net", pos, neg);
    CHECK(loss < 0.2);
}
