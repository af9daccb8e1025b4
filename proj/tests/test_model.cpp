#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "ril/checkpoint.hpp"
#include "ril/common.hpp"
#include "ril/model.hpp"

using namespace ril;
namespace fs = std::filesystem;

namespace {

template <typename T>
Tensor<T> random_tensor(std::mt19937_64& gen, int n, int c, int h, int w, double scale = 1.0) {
    Tensor<T> t(n, c, h, w);
    for (auto& v : t.v)
        v = static_cast<T>((static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * scale);
    return t;
}

/// Scalar probe: fixed random weights make any tensor-valued function a
/// scalar one so central differences apply.
template <typename T>
double weighted_sum(const Tensor<T>& t, const Tensor<T>& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.v.size(); ++i) acc += static_cast<double>(t.v[i]) * static_cast<double>(w.v[i]);
    return acc;
}

}  // namespace

TEST_CASE("pyramid dimension law") {
    BackboneSpec spec;
    spec.stages = 4;
    spec.base_channels = 16;
    spec.input_h = 64;
    spec.input_w = 64;
    SegNet<float> net;
    net.init(spec, 1);

    Tensor<float> x(1, 3, 64, 64);
    std::mt19937_64 gen(2);
    for (auto& v : x.v) v = static_cast<float>(bounded_uint(gen, 256)) / 255.0f;
    SegNet<float>::Cache cache;
    FeaturePyramid<float> pyr = net.backbone_forward(x, false, NetRole::teacher, DataKind::virtual_data, cache);
    REQUIRE(pyr.stages.size() == 4);
    int expect_h = 32, expect_c = 16;
    for (int j = 0; j < 4; ++j) {
        CHECK(pyr.stages[j].h == expect_h);
        CHECK(pyr.stages[j].w == expect_h);
        CHECK(pyr.stages[j].c == expect_c);
        expect_h /= 2;
        expect_c *= 2;
    }
    CHECK(pyr.net == NetRole::teacher);
    CHECK(pyr.data == DataKind::virtual_data);

    // Same input twice in inference mode: bit-identical features.
    SegNet<float>::Cache cache2;
    FeaturePyramid<float> again =
        net.backbone_forward(x, false, NetRole::teacher, DataKind::virtual_data, cache2);
    for (int j = 0; j < 4; ++j) CHECK(again.stages[j].v == pyr.stages[j].v);

    // A second net from the same seed is the same function.
    SegNet<float> twin;
    twin.init(spec, 1);
    SegNet<float>::Cache cache3;
    FeaturePyramid<float> other =
        twin.backbone_forward(x, false, NetRole::student, DataKind::virtual_data, cache3);
    for (int j = 0; j < 4; ++j) CHECK(other.stages[j].v == pyr.stages[j].v);

    CHECK(net.param_count() == twin.param_count());
    CHECK(net.state_checksum() == twin.state_checksum());

    Tensor<float> wrong(1, 3, 32, 64);
    SegNet<float>::Cache cache4;
    CHECK_THROWS_AS(net.backbone_forward(wrong, false, NetRole::teacher, DataKind::virtual_data, cache4),
                    ValidationError);
}

TEST_CASE("segmentation head output") {
    BackboneSpec spec;
    spec.stages = 3;
    spec.base_channels = 8;
    spec.input_h = 32;
    spec.input_w = 32;
    SegNet<float> net;
    net.init(spec, 7);

    std::mt19937_64 gen(3);
    Tensor<float> x(2, 3, 32, 32);
    for (auto& v : x.v) v = static_cast<float>(bounded_uint(gen, 256)) / 255.0f;
    Tensor<float> logits = net.forward_logits(x, false);
    CHECK(logits.n == 2);
    CHECK(logits.c == spec.k_max + 1);
    CHECK(logits.h == 32);
    CHECK(logits.w == 32);
    for (auto v : logits.v) CHECK(std::isfinite(v));

    Tensor<float> probs = softmax_channels(logits);
    for (int n = 0; n < probs.n; ++n)
        for (int y = 0; y < probs.h; ++y)
            for (int x2 = 0; x2 < probs.w; ++x2) {
                float sum = 0.0f;
                for (int c = 0; c < probs.c; ++c) sum += probs.at(n, c, y, x2);
                CHECK(sum == doctest::Approx(1.0f).epsilon(1e-4));
            }
}

TEST_CASE("lane decoding") {
    // All-background probabilities decode to nothing.
    Tensor<float> bg(1, 3, 8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) bg.at(0, 0, y, x) = 1.0f;
    CHECK(decode_lanes(bg, 0, 0.3).empty());

    // One-hot vertical lanes are recovered at their columns, in class order.
    Tensor<float> hot(1, 3, 8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) hot.at(0, 0, y, x) = 1.0f;
    for (int y = 0; y < 8; ++y) {
        hot.at(0, 0, y, 2) = 0.0f;
        hot.at(0, 1, y, 2) = 1.0f;  // lane 1 at x=2
        hot.at(0, 0, y, 6) = 0.0f;
        hot.at(0, 2, y, 6) = 1.0f;  // lane 2 at x=6
    }
    auto lanes = decode_lanes(hot, 0, 0.3);
    REQUIRE(lanes.size() == 2);
    CHECK(lanes[0].size() == 8);
    CHECK(lanes[1].size() == 8);
    for (const auto& pt : lanes[0]) CHECK(std::abs(pt.x - 2.0) <= 1.0);
    for (const auto& pt : lanes[1]) CHECK(std::abs(pt.x - 6.0) <= 1.0);
    for (std::size_t i = 1; i < lanes[0].size(); ++i) CHECK(lanes[0][i].y > lanes[0][i - 1].y);

    // A lane present in a single row (< 2 points) is dropped.
    Tensor<float> lone(1, 2, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) lone.at(0, 0, y, x) = 1.0f;
    lone.at(0, 0, 2, 1) = 0.0f;
    lone.at(0, 1, 2, 1) = 1.0f;
    CHECK(decode_lanes(lone, 0, 0.3).empty());
}

TEST_CASE("discriminator basics") {
    DiscriminatorSpec dspec;
    dspec.in_channels = 8;
    Discriminator<float> d;
    d.init(dspec, 5);

    // Zero-initialized terminal affine layer squashes to exactly one half.
    std::mt19937_64 gen(6);
    Tensor<float> feat = random_tensor<float>(gen, 2, 8, 8, 8);
    Discriminator<float>::Cache cache;
    Tensor<float> p = d.forward(feat, cache);
    REQUIRE(p.numel() == 2);
    CHECK(p.v[0] == 0.5f);
    CHECK(p.v[1] == 0.5f);

    // After perturbing the head weights, outputs stay strictly inside (0,1).
    d.visit_params([&](const std::string&, Tensor<float>& val, Tensor<float>*) {
        for (auto& v : val.v) v += 0.37f;
    });
    for (int trial = 0; trial < 100; ++trial) {
        Tensor<float> f = random_tensor<float>(gen, 1, 8, 8, 8, 3.0);
        Discriminator<float>::Cache c2;
        Tensor<float> out = d.forward(f, c2);
        CHECK(out.v[0] > 0.0f);
        CHECK(out.v[0] < 1.0f);
    }
}

TEST_CASE("discriminator input gradient matches finite differences") {
    DiscriminatorSpec dspec;
    dspec.in_channels = 4;
    dspec.width = 8;
    dspec.layers = 2;
    Discriminator<double> d;
    d.init(dspec, 9);
    d.visit_params([&](const std::string&, Tensor<double>& val, Tensor<double>*) {
        for (auto& v : val.v) v += 0.21;  // leave the zero-init plateau
    });

    std::mt19937_64 gen(10);
    for (int draw = 0; draw < 20; ++draw) {
        Tensor<double> feat = random_tensor<double>(gen, 1, 4, 8, 8);
        auto prob = [&]() {
            Discriminator<double>::Cache c;
            return d.forward(feat, c).v[0];
        };
        Discriminator<double>::Cache cache;
        d.forward(feat, cache);
        Tensor<double> dprob(1, 1, 1, 1);
        dprob.v[0] = 1.0;
        Tensor<double> gin = d.backward(cache, dprob, false);
        for (int probe = 0; probe < 6; ++probe) {
            std::size_t i = bounded_uint(gen, feat.v.size());
            double fd = oracle::fd_derivative(prob, feat.v[i], 1e-6);
            CHECK(oracle::rel_err(gin.v[i], fd) < 1e-3);
        }
    }
}

TEST_CASE("conv and batchnorm gradients match finite differences") {
    std::mt19937_64 gen(12);
    ParamRng rng(13);

    Conv2d<double> conv;
    conv.configure(3, 4, 3, 1, 1, rng, 1.0);
    Tensor<double> x = random_tensor<double>(gen, 2, 3, 6, 6);
    Tensor<double> probe_w = random_tensor<double>(gen, 2, 4, 6, 6);
    auto conv_loss = [&]() { return weighted_sum(conv.forward(x), probe_w); };

    conv.zero_grad();
    Tensor<double> gin = conv.backward(x, probe_w);
    for (int probe = 0; probe < 10; ++probe) {
        std::size_t i = bounded_uint(gen, x.v.size());
        CHECK(oracle::rel_err(gin.v[i], oracle::fd_derivative(conv_loss, x.v[i], 1e-6)) < 1e-4);
    }
    conv.visit("conv", [&](const std::string&, Tensor<double>& val, Tensor<double>* grad) {
        REQUIRE(grad != nullptr);
        for (int probe = 0; probe < 6; ++probe) {
            std::size_t i = bounded_uint(gen, val.v.size());
            CHECK(oracle::rel_err(grad->v[i], oracle::fd_derivative(conv_loss, val.v[i], 1e-6)) < 1e-4);
        }
    });

}

TEST_CASE("batchnorm training-mode gradient matches finite differences") {
    std::mt19937_64 gen(14);
    BatchNorm2d<double> bn;
    bn.configure(4);
    bn.visit("bn", [&](const std::string&, Tensor<double>& val, Tensor<double>*) {
        for (auto& v : val.v) v += 0.15;
    });
    Tensor<double> x = random_tensor<double>(gen, 2, 4, 5, 5);
    Tensor<double> probe = random_tensor<double>(gen, 2, 4, 5, 5);

    auto loss = [&]() {
        BatchNorm2d<double> scratch = bn;
        BatchNorm2d<double>::Cache c;
        return weighted_sum(scratch.forward(x, true, &c), probe);
    };

    BatchNorm2d<double> work = bn;
    BatchNorm2d<double>::Cache cache;
    work.forward(x, true, &cache);
    work.zero_grad();
    Tensor<double> gin = work.backward(x, cache, probe);
    for (int i = 0; i < 12; ++i) {
        std::size_t k = bounded_uint(gen, x.v.size());
        CHECK(oracle::rel_err(gin.v[k], oracle::fd_derivative(loss, x.v[k], 1e-6)) < 1e-4);
    }
    // Parameter gradients: `loss` closes over bn, so perturb bn's tensors.
    for (int c = 0; c < 4; ++c) {
        CHECK(oracle::rel_err(work.ggrad.v[c], oracle::fd_derivative(loss, bn.gamma.v[c], 1e-6)) < 1e-4);
        CHECK(oracle::rel_err(work.bgrad.v[c], oracle::fd_derivative(loss, bn.beta.v[c], 1e-6)) < 1e-4);
    }
}

TEST_CASE("batchnorm uses batch stats in training and running stats in eval") {
    std::mt19937_64 gen(15);
    BatchNorm2d<float> bn;
    bn.configure(2);
    Tensor<float> x = random_tensor<float>(gen, 4, 2, 3, 3, 2.0);
    for (auto& v : x.v) v += 1.5f;  // nonzero mean so the paths differ

    BatchNorm2d<float>::Cache cache;
    Tensor<float> train_out = bn.forward(x, true, &cache);
    // Training output is standardized per channel.
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0;
        int n = 0;
        for (int b = 0; b < 4; ++b)
            for (int y = 0; y < 3; ++y)
                for (int x2 = 0; x2 < 3; ++x2) {
                    mean += train_out.at(b, c, y, x2);
                    ++n;
                }
        CHECK(std::abs(mean / n) < 1e-5);
    }
    Tensor<float> eval_out = bn.forward(x, false, nullptr);
    CHECK(train_out.v != eval_out.v);  // one running update != batch stats
}

TEST_CASE("checkpoint round trip is bit exact") {
    fs::path dir = fs::temp_directory_path() / "ril_test_ckpt";
    fs::create_directories(dir);
    BackboneSpec spec;
    spec.stages = 3;
    spec.base_channels = 8;
    spec.input_h = 32;
    spec.input_w = 32;

    SegNet<float> net;
    net.init(spec, 21);
    // Run one training-mode forward so running stats leave their init values.
    std::mt19937_64 gen(22);
    Tensor<float> x = random_tensor<float>(gen, 2, 3, 32, 32);
    net.forward_logits(x, true);

    std::string path = (dir / "net.ckpt").string();
    save_segnet(path, net);
    SegNet<float> back = load_segnet(path);
    CHECK(back.spec == net.spec);
    CHECK(back.state_checksum() == net.state_checksum());

    // Loading a teacher checkpoint as "the student" is the same call; the
    // round-tripped net must behave identically.
    Tensor<float> a = net.forward_logits(x, false);
    Tensor<float> b = back.forward_logits(x, false);
    CHECK(a.v == b.v);

    Discriminator<float> d;
    DiscriminatorSpec dspec;
    dspec.in_channels = 8;
    d.init(dspec, 23);
    std::string dpath = (dir / "disc.ckpt").string();
    save_discriminator(dpath, d);
    Discriminator<float> dback = load_discriminator(dpath);
    Tensor<float> feat = random_tensor<float>(gen, 1, 8, 8, 8);
    Discriminator<float>::Cache c1, c2;
    CHECK(d.forward(feat, c1).v == dback.forward(feat, c2).v);

    // Kind mismatch names both kinds.
    CHECK_THROWS_WITH_AS(load_segnet(dpath), doctest::Contains("discriminator"), ValidationError);

    // Corruption is rejected.
    std::ofstream(path, std::ios::trunc) << "garbage";
    CHECK_THROWS_AS(load_segnet(path), ValidationError);
    fs::remove_all(dir);
}
