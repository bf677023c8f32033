#include <doctest.h>

#include <cmath>

#include "slim/cfg.hpp"
#include "slim/errors.hpp"
#include "slim/forward.hpp"
#include "test_util.hpp"

using namespace slim;

namespace {

ConvolutionalSpec conv_spec(int filters, int size, int stride, bool pad, bool bn,
                            const char* act) {
    ConvolutionalSpec s;
    s.filters = filters;
    s.size = size;
    s.stride = stride;
    s.pad = pad;
    s.batch_normalize = bn;
    s.activation = act;
    return s;
}

} // namespace

TEST_CASE("forward: 1x1 identity conv passes the input through") {
    Tensor in = testutil::random_tensor(1, 3, 3, 7);
    ConvWeights w;
    w.kernel = {1.0f};
    w.biases = {0.0f};
    Tensor out = conv_forward(in, conv_spec(1, 1, 1, false, false, "linear"), w);
    CHECK(out.data == in.data);
}

TEST_CASE("forward: zero gamma makes the channel constant beta") {
    Tensor in = testutil::random_tensor(1, 4, 4, 9);
    ConvWeights w;
    w.kernel = {2.5f};
    w.biases = {0.75f};            // beta
    w.scales = {0.0f};             // gamma
    w.rolling_mean = {1.0f};
    w.rolling_variance = {0.5f};
    Tensor out = conv_forward(in, conv_spec(1, 1, 1, false, true, "linear"), w);
    for (float v : out.data) CHECK(v == 0.75f);
}

TEST_CASE("forward: hand-convolved 3x3 all-ones kernel") {
    Tensor in(1, 3, 3, 1.0f);
    ConvWeights w;
    w.kernel.assign(9, 1.0f);
    w.biases = {0.0f};
    Tensor out = conv_forward(in, conv_spec(1, 3, 1, true, false, "linear"), w);
    CHECK(out.at(0, 1, 1) == 9.0f);
    CHECK(out.at(0, 0, 0) == 4.0f);
    CHECK(out.at(0, 0, 2) == 4.0f);
    CHECK(out.at(0, 2, 0) == 4.0f);
    CHECK(out.at(0, 2, 2) == 4.0f);
    CHECK(out.at(0, 0, 1) == 6.0f);
}

TEST_CASE("forward: leaky activation uses slope 0.1") {
    CHECK(apply_activation("leaky", 2.0f) == 2.0f);
    CHECK(apply_activation("leaky", -2.0f) == doctest::Approx(-0.2f));
    CHECK(apply_activation("linear", -2.0f) == -2.0f);
    CHECK_THROWS_AS(apply_activation("mish", 1.0f), ArgumentError);
}

TEST_CASE("forward: size-1 stride-1 maxpool is the identity") {
    Tensor in = testutil::random_tensor(3, 5, 5, 11);
    MaxPoolSpec spec;
    spec.size = 1;
    spec.stride = 1;
    Tensor out = maxpool_forward(in, spec);
    CHECK(out.data == in.data);
}

TEST_CASE("forward: 2x2 stride-2 maxpool takes the window max") {
    Tensor in(1, 2, 2);
    in.data = {1, 2, 3, 4};
    MaxPoolSpec spec;
    spec.size = 2;
    spec.stride = 2;
    Tensor out = maxpool_forward(in, spec);
    REQUIRE(out.size() == 1);
    CHECK(out.data[0] == 4.0f);
}

TEST_CASE("forward: stride-1 maxpool ignores padded cells") {
    Tensor in(1, 3, 3, -5.0f); // all negative; padding must not contribute zeros
    MaxPoolSpec spec;
    spec.size = 5;
    spec.stride = 1;
    Tensor out = maxpool_forward(in, spec);
    CHECK(out.h == 3);
    for (float v : out.data) CHECK(v == -5.0f);
}

TEST_CASE("forward: upsample repeats values in blocks") {
    Tensor in(1, 2, 2);
    in.data = {1, 2, 3, 4};
    Tensor out = upsample_forward(in, 2);
    CHECK(out.h == 4);
    CHECK(out.w == 4);
    CHECK(out.at(0, 0, 0) == 1.0f);
    CHECK(out.at(0, 0, 1) == 1.0f);
    CHECK(out.at(0, 1, 1) == 1.0f);
    CHECK(out.at(0, 0, 2) == 2.0f);
    CHECK(out.at(0, 3, 3) == 4.0f);
}

TEST_CASE("forward: route concatenates in listed order") {
    Tensor a(1, 1, 2);
    a.data = {1, 2};
    Tensor b(2, 1, 2);
    b.data = {3, 4, 5, 6};
    Tensor out = route_concat({&b, &a});
    CHECK(out.c == 3);
    CHECK(out.data == std::vector<float>{3, 4, 5, 6, 1, 2});
}

TEST_CASE("forward: shortcut adds elementwise") {
    Tensor a(1, 1, 2);
    a.data = {1, -3};
    Tensor b(1, 1, 2);
    b.data = {2, 1};
    Tensor out = shortcut_add(a, b, "leaky");
    CHECK(out.data[0] == 3.0f);
    CHECK(out.data[1] == doctest::Approx(-0.2f));
    Tensor c(2, 1, 1);
    CHECK_THROWS_AS(shortcut_add(a, c, "linear"), ValidationError);
}

TEST_CASE("forward: yolo decode at zero logits") {
    YoloSpec spec;
    spec.classes = 2;
    spec.anchors = {{10.0f, 14.0f}};
    spec.anchor_mask = {0};
    Tensor feat(3 * (5 + 2) / 3 * 1, 1, 1); // 7 channels, 1x1 grid, one anchor
    REQUIRE(feat.c == 7);
    auto dets = yolo_decode(feat, spec, 416, 416, 0.1f);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].x == doctest::Approx(208.0));
    CHECK(dets[0].y == doctest::Approx(208.0));
    CHECK(dets[0].w == doctest::Approx(10.0));
    CHECK(dets[0].h == doctest::Approx(14.0));
    CHECK(dets[0].objectness == doctest::Approx(0.5));
    CHECK(dets[0].score == doctest::Approx(0.25));
}

TEST_CASE("forward: objectness threshold filters weak detections") {
    YoloSpec spec;
    spec.classes = 1;
    spec.anchors = {{10.0f, 14.0f}};
    spec.anchor_mask = {0};
    Tensor feat(6, 1, 1);
    feat.at(4, 0, 0) = std::log(0.05f / 0.95f); // sigmoid -> 0.05
    CHECK(yolo_decode(feat, spec, 416, 416, 0.1f).empty());
    CHECK(yolo_decode(feat, spec, 416, 416, 0.01f).size() == 1);
}

TEST_CASE("forward: saturated tx drives x to the right cell boundary") {
    YoloSpec spec;
    spec.classes = 1;
    spec.anchors = {{10.0f, 14.0f}};
    spec.anchor_mask = {0};
    Tensor feat(6, 1, 1);
    feat.at(0, 0, 0) = 50.0f; // sigmoid -> 1
    auto dets = yolo_decode(feat, spec, 416, 416, 0.1f);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].x == doctest::Approx(416.0));
}

TEST_CASE("forward: wrong channel count is a decode error") {
    YoloSpec spec;
    spec.classes = 2;
    spec.anchors = {{10.0f, 14.0f}};
    spec.anchor_mask = {0};
    Tensor feat(6, 1, 1);
    CHECK_THROWS_AS(yolo_decode(feat, spec, 416, 416, 0.1f), ValidationError);
}

TEST_CASE("forward: single identity conv network") {
    NetworkDef def = parse_cfg("[net]\nwidth=3\nheight=3\nchannels=1\n\n"
                               "[convolutional]\nfilters=1\nsize=1\nstride=1\n"
                               "activation=linear\n");
    WeightStore store;
    store.layers.resize(1);
    store.layers[0].kernel = {1.0f};
    store.layers[0].biases = {0.0f};
    Tensor in = testutil::random_tensor(1, 3, 3, 5);
    ForwardResult result = run_network(def, store, in);
    CHECK(result.layer_out[0].data == in.data);
}

TEST_CASE("forward: tiny fixture runs to completion with finite outputs") {
    NetworkDef def = testutil::load_fixture("yolov3-tiny.cfg");
    WeightStore store = testutil::random_store(def, 17);
    Tensor zeros(3, 160, 160); // multiple of 32, small enough for a quick pass
    ForwardResult result = run_network(def, store, zeros);
    CHECK(result.layer_out.size() == def.layers.size());
    for (const Tensor& t : result.layer_out)
        for (float v : t.data) REQUIRE(std::isfinite(v));
    CHECK(result.head_layers.size() == 2);
}

TEST_CASE("forward: repeated runs are bit-identical") {
    NetworkDef def = testutil::load_fixture("yolov3-tiny.cfg");
    WeightStore store = testutil::random_store(def, 23);
    Tensor in = testutil::random_tensor(3, 96, 96, 29);
    ForwardResult a = run_network(def, store, in);
    ForwardResult b = run_network(def, store, in);
    for (size_t i = 0; i < a.layer_out.size(); ++i)
        REQUIRE(a.layer_out[i].data == b.layer_out[i].data);
}

TEST_CASE("forward: spp block quadruples channels and keeps the identity slice") {
    // source conv then pools 5/9/13 and the 4-way concat route
    NetworkDef def = parse_cfg(
        "[net]\nwidth=8\nheight=8\nchannels=2\n\n"
        "[convolutional]\nfilters=3\nsize=1\nstride=1\nactivation=linear\n\n"
        "[maxpool]\nsize=5\nstride=1\n\n"
        "[route]\nlayers=-2\n\n"
        "[maxpool]\nsize=9\nstride=1\n\n"
        "[route]\nlayers=-4\n\n"
        "[maxpool]\nsize=13\nstride=1\n\n"
        "[route]\nlayers=-1,-3,-5,-6\n");
    WeightStore store = testutil::random_store(def, 31);
    Tensor in = testutil::random_tensor(2, 8, 8, 37);
    ForwardResult result = run_network(def, store, in);
    const Tensor& source = result.layer_out[0];
    const Tensor& concat = result.layer_out[6];
    CHECK(concat.c == 4 * source.c);
    // identity branch occupies the trailing slice
    for (int ci = 0; ci < source.c; ++ci)
        for (int y = 0; y < source.h; ++y)
            for (int x = 0; x < source.w; ++x)
                REQUIRE(concat.at(3 * source.c + ci, y, x) == source.at(ci, y, x));
}
