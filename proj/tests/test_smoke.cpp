#include <doctest.h>

#include "ril/adversarial.hpp"
#include "ril/checkpoint.hpp"
#include "ril/common.hpp"
#include "ril/dataset.hpp"
#include "ril/distill.hpp"
#include "ril/geometry.hpp"
#include "ril/image.hpp"
#include "ril/layers.hpp"
#include "ril/model.hpp"
#include "ril/repaint.hpp"
#include "ril/tensor.hpp"

// Instantiates the templated stack at both precisions and runs one tiny
// end-to-end forward/backward so type errors surface early.
TEST_CASE("templated stack instantiates and runs at float and double") {
    ril::BackboneSpec spec;
    spec.stages = 2;
    spec.base_channels = 4;
    spec.input_h = 16;
    spec.input_w = 16;
    spec.k_max = 2;

    auto run = [&](auto tag) {
        using T = decltype(tag);
        ril::SegNet<T> net;
        net.init(spec, 7);
        ril::Tensor<T> x(2, 3, 16, 16);
        for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] = T(i % 7) / T(7);
        typename ril::SegNet<T>::Cache cache;
        ril::Tensor<T> logits = net.forward_logits(x, true, cache, ril::NetRole::student, ril::DataKind::real_data);
        CHECK(logits.c == spec.k_max + 1);
        CHECK(logits.h == 16);
        CHECK(ril::all_finite(logits));
        ril::Tensor<T> g = ril::Tensor<T>::like(logits);
        g.fill(T(1e-3));
        net.zero_grad();
        net.backward(cache, &g, nullptr);

        ril::Discriminator<T> disc;
        ril::DiscriminatorSpec dspec;
        dspec.in_channels = spec.stage_channels(spec.stages);
        disc.init(dspec, 3);
        typename ril::Discriminator<T>::Cache dcache;
        ril::Tensor<T> p = disc.forward(cache.enc_stage_out[spec.stages - 1], dcache);
        for (int i = 0; i < p.n; ++i) CHECK(p.v[i] == doctest::Approx(0.5));  // zero-initialized head
        ril::Tensor<T> dp(p.n, 1, 1, 1);
        dp.fill(T(1));
        ril::Tensor<T> gfeat = disc.backward(dcache, dp, true);
        CHECK(gfeat.same_shape(cache.enc_stage_out[spec.stages - 1]));
    };
    run(float{});
    run(double{});
}

TEST_CASE("distill and adversarial headers link") {
    ril::DistillConfig dcfg;
    dcfg.validate(4);
    CHECK(ril::adv_total(1.0, 2.0) == 3.0);
    CHECK(ril::d_net_loss(0.5, 0.5) == doctest::Approx(2.0 * std::log(2.0)));
}
