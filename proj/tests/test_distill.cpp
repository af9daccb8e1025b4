#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "ril/common.hpp"
#include "ril/distill.hpp"

using namespace ril;

namespace {

/// Four-stage pyramid over an 16x32 input: dims halve per stage, channels
/// double, mirroring the backbone's layout.
FeaturePyramid<double> make_pyramid(NetRole net, DataKind data, double value) {
    FeaturePyramid<double> p;
    p.net = net;
    p.data = data;
    int h = 8, w = 16, c = 2;
    for (int j = 0; j < 4; ++j) {
        Tensor<double> t(1, c, h, w);
        t.fill(value);
        p.stages.push_back(std::move(t));
        h /= 2;
        w /= 2;
        c *= 2;
    }
    return p;
}

void randomize(FeaturePyramid<double>& p, std::mt19937_64& gen, double scale = 1.0) {
    for (auto& s : p.stages)
        for (auto& v : s.v) v = (static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * scale;
}

}  // namespace

TEST_CASE("config validation") {
    DistillConfig cfg;
    cfg.validate(4);  // defaults fit a 4-stage backbone

    DistillConfig bad = cfg;
    bad.cross_pairs = {{2, 4}};
    CHECK_THROWS_WITH_AS(bad.validate(4), doctest::Contains("adjacent"), ValidationError);

    bad = cfg;
    bad.same_stages = {5};
    CHECK_THROWS_AS(bad.validate(4), ValidationError);

    bad = cfg;
    bad.mode = DistillMode::scale_fusing;
    bad.cross_pairs.clear();
    CHECK_THROWS_AS(bad.validate(4), ValidationError);
    bad.mode = DistillMode::same_only;
    bad.validate(4);  // cross pairs unused in same_only mode

    CHECK(distill_mode_from_string("scale_fusing") == DistillMode::scale_fusing);
    CHECK_THROWS_WITH_AS(distill_mode_from_string("fuse"), doctest::Contains("fuse"), ValidationError);
    CHECK(std::string(to_string(DistillMode::same_only)) == "same_only");
}

TEST_CASE("down-sample alignment") {
    // Constants survive pooling, contraction, and expansion.
    Tensor<double> c7(1, 4, 8, 8);
    c7.fill(7.0);
    Tensor<double> same_c = align_down(c7, 4, 4, 4);
    Tensor<double> down_c = align_down(c7, 2, 4, 4);
    Tensor<double> up_c = align_down(c7, 8, 4, 4);
    for (auto v : same_c.v) CHECK(v == doctest::Approx(7.0));
    for (auto v : down_c.v) CHECK(v == doctest::Approx(7.0));
    for (auto v : up_c.v) CHECK(v == doctest::Approx(7.0));
    CHECK(up_c.c == 8);
    CHECK(up_c.h == 4);

    // One 2x2 block [[1,1],[3,3]] pools to its mean, 2.
    Tensor<double> block(1, 1, 2, 2);
    block.v = {1.0, 1.0, 3.0, 3.0};
    Tensor<double> pooled = align_down(block, 1, 1, 1);
    REQUIRE(pooled.numel() == 1);
    CHECK(pooled.v[0] == doctest::Approx(2.0));

    // Channel contraction averages groups; expansion replicates.
    Tensor<double> two(1, 2, 2, 2);
    for (int i = 0; i < 4; ++i) two.v[i] = 1.0;          // channel 0
    for (int i = 4; i < 8; ++i) two.v[i] = 3.0;          // channel 1
    Tensor<double> contracted = align_down(two, 1, 1, 1);
    CHECK(contracted.v[0] == doctest::Approx(2.0));      // (1+3)/2
    Tensor<double> expanded = align_down(two, 4, 1, 1);
    CHECK(expanded.at(0, 0, 0, 0) == doctest::Approx(1.0));
    CHECK(expanded.at(0, 1, 0, 0) == doctest::Approx(1.0));
    CHECK(expanded.at(0, 2, 0, 0) == doctest::Approx(3.0));
    CHECK(expanded.at(0, 3, 0, 0) == doctest::Approx(3.0));

    CHECK_THROWS_WITH_AS(align_down(c7, 4, 3, 3), doctest::Contains("2x"), ValidationError);
}

TEST_CASE("same-scale loss hand values") {
    DistillConfig cfg;
    auto tv = make_pyramid(NetRole::teacher, DataKind::virtual_data, 1.0);
    auto sv = make_pyramid(NetRole::student, DataKind::virtual_data, 1.0);
    auto sr = make_pyramid(NetRole::student, DataKind::real_data, 1.0);

    CHECK(loss_same(tv, sv, sr, cfg) == doctest::Approx(0.0));

    // T=1, S_v=0, S_r=1 at every stage: each configured stage adds 1+0.
    for (auto& s : sv.stages) s.fill(0.0);
    CHECK(loss_same(tv, sv, sr, cfg) == doctest::Approx(1.0).epsilon(1e-12));

    // Homogeneity: scaling every pyramid by c scales the loss by c^2.
    auto tv3 = make_pyramid(NetRole::teacher, DataKind::virtual_data, 3.0);
    auto sv3 = make_pyramid(NetRole::student, DataKind::virtual_data, 0.0);
    auto sr3 = make_pyramid(NetRole::student, DataKind::real_data, 3.0);
    CHECK(loss_same(tv3, sv3, sr3, cfg) == doctest::Approx(9.0).epsilon(1e-12));

    // Zero iff all three coincide on the configured stages.
    std::mt19937_64 gen(1);
    auto svr = make_pyramid(NetRole::student, DataKind::virtual_data, 1.0);
    randomize(svr, gen);
    CHECK(loss_same(tv, svr, sr, cfg) > 0.0);

    // Provenance is enforced.
    CHECK_THROWS_WITH_AS(loss_same(sv, sv, sr, cfg), doctest::Contains("teacher/virtual"), ValidationError);
    CHECK_THROWS_WITH_AS(loss_same(tv, sr, sr, cfg), doctest::Contains("student/virtual"), ValidationError);
    CHECK_THROWS_WITH_AS(loss_same(tv, sv, sv, cfg), doctest::Contains("student/real"), ValidationError);
}

TEST_CASE("cross-scale loss hand values") {
    DistillConfig cfg;
    auto tv = make_pyramid(NetRole::teacher, DataKind::virtual_data, 5.0);
    auto sv = make_pyramid(NetRole::student, DataKind::virtual_data, 5.0);
    auto sr = make_pyramid(NetRole::student, DataKind::real_data, 5.0);
    CHECK(loss_cross(tv, sv, sr, cfg) == doctest::Approx(0.0));  // constants align to constants

    // A(T) = 2 against S_v = 0 and S_r = 2: per pair 4 + 0, mean over 2 pairs = 4.
    auto tv2 = make_pyramid(NetRole::teacher, DataKind::virtual_data, 2.0);
    auto sv0 = make_pyramid(NetRole::student, DataKind::virtual_data, 0.0);
    auto sr2 = make_pyramid(NetRole::student, DataKind::real_data, 2.0);
    CHECK(loss_cross(tv2, sv0, sr2, cfg) == doctest::Approx(4.0).epsilon(1e-12));

    // Pair order never matters.
    std::mt19937_64 gen(2);
    randomize(tv2, gen);
    randomize(sv0, gen);
    randomize(sr2, gen);
    DistillConfig flipped = cfg;
    std::swap(flipped.cross_pairs[0], flipped.cross_pairs[1]);
    CHECK(loss_cross(tv2, sv0, sr2, cfg) ==
          doctest::Approx(loss_cross(tv2, sv0, sr2, flipped)).epsilon(1e-12));
}

TEST_CASE("combined loss dispatch") {
    DistillConfig cfg;
    auto tv = make_pyramid(NetRole::teacher, DataKind::virtual_data, 1.0);
    auto sv = make_pyramid(NetRole::student, DataKind::virtual_data, 0.0);
    auto sr = make_pyramid(NetRole::student, DataKind::real_data, 1.0);

    cfg.mode = DistillMode::off;
    DistillResult off = loss_distill(tv, sv, sr, cfg);
    CHECK(off.same == 0.0);
    CHECK(off.cross == 0.0);
    CHECK(off.total() == 0.0);

    cfg.mode = DistillMode::same_only;
    DistillResult same_only = loss_distill(tv, sv, sr, cfg);
    CHECK(same_only.cross == 0.0);
    CHECK(same_only.same > 0.0);

    cfg.mode = DistillMode::scale_fusing;
    DistillResult full = loss_distill(tv, sv, sr, cfg);
    CHECK(full.total() == doctest::Approx(full.same + full.cross));

    // The worked components: same = 1.0 (1/0/1) and cross = 4.0 (2/0/2,
    // doubled amplitudes) sum as plain addition.
    auto tv2 = make_pyramid(NetRole::teacher, DataKind::virtual_data, 2.0);
    auto sr2 = make_pyramid(NetRole::student, DataKind::real_data, 2.0);
    auto sv0 = make_pyramid(NetRole::student, DataKind::virtual_data, 0.0);
    double same_part = loss_same(tv2, sv0, sr2, cfg);   // (4+0+4+0)/2... per stage d=4
    double cross_part = loss_cross(tv2, sv0, sr2, cfg);
    CHECK(same_part == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(cross_part == doctest::Approx(4.0).epsilon(1e-12));
    DistillResult both = loss_distill(tv2, sv0, sr2, cfg);
    CHECK(both.total() == doctest::Approx(8.0).epsilon(1e-12));

    DistillResult literal{1.0, 4.0};
    CHECK(literal.total() == doctest::Approx(5.0));
}

TEST_CASE("distillation gradients match finite differences") {
    DistillConfig cfg;
    std::mt19937_64 gen(3);
    for (int draw = 0; draw < 20; ++draw) {
        auto tv = make_pyramid(NetRole::teacher, DataKind::virtual_data, 0.0);
        auto sv = make_pyramid(NetRole::student, DataKind::virtual_data, 0.0);
        auto sr = make_pyramid(NetRole::student, DataKind::real_data, 0.0);
        randomize(tv, gen);
        randomize(sv, gen);
        randomize(sr, gen);

        std::vector<Tensor<double>> g_sv, g_sr;
        cfg.mode = DistillMode::scale_fusing;
        double base_same = loss_same(tv, sv, sr, cfg, &g_sv, &g_sr);
        double base_cross = loss_cross(tv, sv, sr, cfg, &g_sv, &g_sr);
        CHECK(base_same >= 0.0);
        CHECK(base_cross >= 0.0);

        auto total = [&]() {
            return loss_same(tv, sv, sr, cfg) + loss_cross(tv, sv, sr, cfg);
        };
        // Probe the stages the defaults touch on the student side: 3 and 4.
        for (int j : {2, 3}) {
            std::size_t i = bounded_uint(gen, sv.stages[j].v.size());
            double fd_v = oracle::fd_derivative(total, sv.stages[j].v[i], 1e-6);
            CHECK(oracle::rel_err(g_sv[j].v[i], fd_v) < 1e-3);
            std::size_t k = bounded_uint(gen, sr.stages[j].v.size());
            double fd_r = oracle::fd_derivative(total, sr.stages[j].v[k], 1e-6);
            CHECK(oracle::rel_err(g_sr[j].v[k], fd_r) < 1e-3);
        }
    }
}

TEST_CASE("gradient scale multiplies accumulated slopes") {
    DistillConfig cfg;
    std::mt19937_64 gen(4);
    auto tv = make_pyramid(NetRole::teacher, DataKind::virtual_data, 0.0);
    auto sv = make_pyramid(NetRole::student, DataKind::virtual_data, 0.0);
    auto sr = make_pyramid(NetRole::student, DataKind::real_data, 0.0);
    randomize(tv, gen);
    randomize(sv, gen);
    randomize(sr, gen);

    std::vector<Tensor<double>> g1, g1r, g2, g2r;
    loss_same(tv, sv, sr, cfg, &g1, &g1r, 1.0);
    loss_same(tv, sv, sr, cfg, &g2, &g2r, 2.5);
    for (int j : {2, 3})
        for (std::size_t i = 0; i < g1[j].v.size(); ++i)
            CHECK(g2[j].v[i] == doctest::Approx(2.5 * g1[j].v[i]).epsilon(1e-9));
}
