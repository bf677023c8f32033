#include <doctest.h>

#include <cstring>

#include "slim/cfg.hpp"
#include "slim/errors.hpp"
#include "slim/graph.hpp"
#include "slim/weights.hpp"
#include "test_util.hpp"

using namespace slim;

namespace {

NetworkDef one_bn_conv_def() {
    return parse_cfg("[net]\nwidth=1\nheight=1\nchannels=1\n\n"
                     "[convolutional]\nbatch_normalize=1\nfilters=1\nsize=1\nstride=1\n"
                     "activation=linear\n");
}

void push_i32(std::vector<std::uint8_t>& out, std::int32_t v) {
    out.resize(out.size() + 4);
    std::memcpy(out.data() + out.size() - 4, &v, 4);
}

void push_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    out.resize(out.size() + 8);
    std::memcpy(out.data() + out.size() - 8, &v, 8);
}

void push_f32(std::vector<std::uint8_t>& out, float v) {
    out.resize(out.size() + 4);
    std::memcpy(out.data() + out.size() - 4, &v, 4);
}

} // namespace

TEST_CASE("weights: hand-built byte fixture reads back exactly") {
    NetworkDef def = one_bn_conv_def();

    // header + (beta, gamma, mean, variance) + one kernel weight = 40 bytes
    std::vector<std::uint8_t> bytes;
    push_i32(bytes, 0);
    push_i32(bytes, 2);
    push_i32(bytes, 0);
    push_u64(bytes, 0);
    push_f32(bytes, 0.25f);  // beta
    push_f32(bytes, 1.5f);   // gamma
    push_f32(bytes, -0.75f); // rolling mean
    push_f32(bytes, 2.0f);   // rolling variance
    push_f32(bytes, 3.0f);   // kernel
    REQUIRE(bytes.size() == 40);

    WeightStore store = read_weights(bytes, def);
    CHECK(store.major == 0);
    CHECK(store.minor == 2);
    CHECK(store.seen == 0);
    CHECK(store.layers[0].biases == std::vector<float>{0.25f});
    CHECK(store.layers[0].scales == std::vector<float>{1.5f});
    CHECK(store.layers[0].rolling_mean == std::vector<float>{-0.75f});
    CHECK(store.layers[0].rolling_variance == std::vector<float>{2.0f});
    CHECK(store.layers[0].kernel == std::vector<float>{3.0f});
}

TEST_CASE("weights: legacy header uses a 32-bit sample counter") {
    NetworkDef def = one_bn_conv_def();
    std::vector<std::uint8_t> bytes;
    push_i32(bytes, 0);
    push_i32(bytes, 1); // major*10+minor < 2
    push_i32(bytes, 0);
    push_i32(bytes, 7); // 4-byte seen
    for (int i = 0; i < 5; ++i) push_f32(bytes, 1.0f);
    WeightStore store = read_weights(bytes, def);
    CHECK(store.seen == 7);
}

TEST_CASE("weights: stream shorter than the header underflows") {
    NetworkDef def = one_bn_conv_def();
    std::vector<std::uint8_t> bytes(10, 0);
    CHECK_THROWS_WITH_AS(read_weights(bytes, def), doctest::Contains("underflow"), ParseError);
}

TEST_CASE("weights: truncation inside a layer names the layer") {
    NetworkDef def = one_bn_conv_def();
    std::vector<std::uint8_t> bytes;
    push_i32(bytes, 0);
    push_i32(bytes, 2);
    push_i32(bytes, 0);
    push_u64(bytes, 0);
    push_f32(bytes, 1.0f); // only beta; gamma onwards missing
    CHECK_THROWS_WITH_AS(read_weights(bytes, def), doctest::Contains("layer 0"), ParseError);
}

TEST_CASE("weights: trailing bytes are reported with their count") {
    NetworkDef def = one_bn_conv_def();
    std::vector<std::uint8_t> bytes;
    push_i32(bytes, 0);
    push_i32(bytes, 2);
    push_i32(bytes, 0);
    push_u64(bytes, 0);
    for (int i = 0; i < 5; ++i) push_f32(bytes, 1.0f);
    bytes.push_back(0xAB);
    bytes.push_back(0xCD);
    CHECK_THROWS_WITH_AS(read_weights(bytes, def), doctest::Contains("2 trailing bytes"),
                         ParseError);
}

TEST_CASE("weights: detection-header layout without batch norm") {
    // two layers: bn conv into a plain conv; the second stores bias + kernel only
    NetworkDef def = parse_cfg(
        "[net]\nwidth=2\nheight=2\nchannels=1\n\n"
        "[convolutional]\nbatch_normalize=1\nfilters=2\nsize=1\nstride=1\nactivation=leaky\n\n"
        "[convolutional]\nfilters=3\nsize=1\nstride=1\nactivation=linear\n");
    std::vector<std::uint8_t> bytes;
    push_i32(bytes, 0);
    push_i32(bytes, 2);
    push_i32(bytes, 0);
    push_u64(bytes, 0);
    // layer 0: beta[2] gamma[2] mean[2] var[2] kernel[2]
    for (int i = 0; i < 10; ++i) push_f32(bytes, 0.5f);
    // layer 1: bias[3] kernel[3*2]
    for (int i = 0; i < 9; ++i) push_f32(bytes, static_cast<float>(i));
    WeightStore store = read_weights(bytes, def);
    CHECK(store.layers[1].scales.empty());
    CHECK(store.layers[1].biases == std::vector<float>{0.0f, 1.0f, 2.0f});
    CHECK(store.layers[1].kernel.size() == 6);
}

TEST_CASE("weights: bit-exact round trip on the tiny fixture") {
    NetworkDef def = testutil::load_fixture("yolov3-tiny.cfg");
    WeightStore store = testutil::random_store(def, 42);
    auto bytes = write_weights(store, def);
    CHECK(static_cast<std::int64_t>(bytes.size()) == 20 + 4 * float_count(def));
    WeightStore reread = read_weights(bytes, def);
    CHECK(reread == store);
    CHECK(write_weights(reread, def) == bytes);
}

TEST_CASE("weights: stream length follows the float-count formula") {
    NetworkDef def = parse_cfg(
        "[net]\nwidth=4\nheight=4\nchannels=3\n\n"
        "[convolutional]\nbatch_normalize=1\nfilters=5\nsize=3\nstride=1\npad=1\n"
        "activation=leaky\n\n"
        "[convolutional]\nfilters=2\nsize=1\nstride=1\nactivation=linear\n");
    // layer0: 4*5 + 3*3*3*5 = 155; layer1: 2 + 5*2 = 12
    CHECK(float_count(def) == 167);
    WeightStore store = testutil::random_store(def, 1);
    CHECK(write_weights(store, def).size() == 20 + 4 * 167);
}

TEST_CASE("weights: total float count matches count_params on conv-only networks") {
    NetworkDef def = testutil::load_fixture("yolov3.cfg");
    CHECK(float_count(def) == count_params(def).total_params);
}

TEST_CASE("weights: empty network writes the 20-byte header only") {
    NetworkDef def;
    def.width = 4;
    def.height = 4;
    def.channels = 1;
    WeightStore store;
    CHECK(write_weights(store, def).size() == 20);
}

TEST_CASE("weights: misaligned store is an alignment error") {
    NetworkDef def = one_bn_conv_def();
    WeightStore store = testutil::random_store(def, 3);
    SUBCASE("wrong kernel length") {
        store.layers[0].kernel.push_back(1.0f);
        CHECK_THROWS_AS(write_weights(store, def), ValidationError);
    }
    SUBCASE("negative variance") {
        store.layers[0].rolling_variance[0] = -1.0f;
        CHECK_THROWS_AS(write_weights(store, def), ValidationError);
    }
    SUBCASE("missing bn arrays") {
        store.layers[0].scales.clear();
        CHECK_THROWS_AS(write_weights(store, def), ValidationError);
    }
}
