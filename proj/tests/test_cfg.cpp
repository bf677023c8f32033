#include <doctest.h>

#include <algorithm>

#include "slim/cfg.hpp"
#include "slim/errors.hpp"
#include "test_util.hpp"

using namespace slim;

namespace {

const char* kMinimalDoc = R"(
[net]
width=416
height=416
channels=3

[convolutional]
filters=16
size=3
stride=1
pad=1
batch_normalize=1
activation=leaky
)";

} // namespace

TEST_CASE("cfg: minimal document parses") {
    NetworkDef def = parse_cfg(kMinimalDoc);
    CHECK(def.width == 416);
    CHECK(def.height == 416);
    CHECK(def.channels == 3);
    REQUIRE(def.layers.size() == 1);
    CHECK(def.layers[0].kind == LayerKind::Convolutional);
    CHECK(def.layers[0].conv.filters == 16);
    CHECK(def.layers[0].conv.batch_normalize);
    CHECK(def.layers[0].conv.activation == "leaky");
    CHECK(validate(def).empty());
}

TEST_CASE("cfg: fixture layer count equals the section-header count") {
    for (const char* name : {"yolov3-tiny.cfg", "yolov3.cfg", "yolov3-spp1.cfg"}) {
        std::string text = testutil::read_file(testutil::fixture_path(name));
        REQUIRE(!text.empty());
        // independent scan: count '[' header lines, minus the [net] section
        long headers = 0;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            auto first = line.find_first_not_of(" \t\r");
            if (first != std::string::npos && line[first] == '[') ++headers;
        }
        NetworkDef def = parse_cfg(text);
        CHECK(static_cast<long>(def.layers.size()) == headers - 1);
        CHECK(validate(def).empty());
    }
}

TEST_CASE("cfg: unknown section is rejected with its line number") {
    std::string doc = "[net]\nwidth=4\nheight=4\nchannels=1\n\n[bogus]\nkey=1\n";
    CHECK_THROWS_WITH_AS(parse_cfg(doc), doctest::Contains("unknown section [bogus]"),
                         ParseError);
    CHECK_THROWS_WITH_AS(parse_cfg(doc), doctest::Contains("line 6"), ParseError);
}

TEST_CASE("cfg: unsupported darknet layer types are rejected, not ignored") {
    std::string doc = "[net]\nwidth=4\nheight=4\nchannels=1\n\n[connected]\noutput=10\n";
    CHECK_THROWS_AS(parse_cfg(doc), ParseError);
}

TEST_CASE("cfg: missing [net] header is a structural error") {
    CHECK_THROWS_WITH_AS(parse_cfg("[convolutional]\nfilters=1\n"),
                         doctest::Contains("first section must be [net]"), ParseError);
}

TEST_CASE("cfg: malformed key=value reports the line") {
    std::string doc = "[net]\nwidth=4\nheight=4\nchannels=1\nnonsense line\n";
    CHECK_THROWS_WITH_AS(parse_cfg(doc), doctest::Contains("line 5"), ParseError);
}

TEST_CASE("cfg: out-of-range route reference is a reference error") {
    std::string doc =
        "[net]\nwidth=8\nheight=8\nchannels=1\n\n[convolutional]\nfilters=2\nsize=1\n"
        "stride=1\nactivation=linear\n\n[route]\nlayers=5\n";
    CHECK_THROWS_AS(parse_cfg(doc), ParseError);
}

TEST_CASE("cfg: round trip on the minimal document") {
    NetworkDef def = parse_cfg(kMinimalDoc);
    CHECK(parse_cfg(emit_cfg(def)) == def);
}

TEST_CASE("cfg: round trip on every fixture") {
    for (const char* name : {"yolov3-tiny.cfg", "yolov3.cfg", "yolov3-spp1.cfg"}) {
        NetworkDef def = testutil::load_fixture(name);
        NetworkDef reparsed = parse_cfg(emit_cfg(def));
        CHECK(reparsed == def);
        // emission is stable once canonicalized
        CHECK(emit_cfg(reparsed) == emit_cfg(def));
    }
}

TEST_CASE("cfg: empty network emits the [net] section only") {
    NetworkDef def;
    def.width = 32;
    def.height = 32;
    def.channels = 3;
    std::string text = emit_cfg(def);
    CHECK(text.find("[net]") == 0);
    CHECK(text.find("[convolutional]") == std::string::npos);
    CHECK(parse_cfg(text) == def);
}

TEST_CASE("cfg: comments and blank lines never change the parse") {
    std::string doc = kMinimalDoc;
    std::string noisy = "# leading comment\n\n[net]\n\nwidth=416 # trailing\nheight=416\n"
                        "channels=3\n# mid comment\n\n[convolutional]\nfilters=16\nsize=3\n"
                        "stride=1\npad=1\nbatch_normalize=1\nactivation=leaky\n\n";
    CHECK(parse_cfg(noisy) == parse_cfg(doc));
}

TEST_CASE("cfg: unknown keys inside known sections are preserved verbatim") {
    std::string doc = "[net]\nwidth=4\nheight=4\nchannels=1\nburn_in=1000\npolicy=steps\n\n"
                      "[convolutional]\nfilters=1\nsize=1\nstride=1\nactivation=linear\n"
                      "custom_key=some value\n";
    NetworkDef def = parse_cfg(doc);
    REQUIRE(def.net_extras.size() == 2);
    CHECK(def.net_extras[0].key == "burn_in");
    CHECK(def.net_extras[1].value == "steps");
    REQUIRE(def.layers[0].extras.size() == 1);
    CHECK(def.layers[0].extras[0].key == "custom_key");
    CHECK(def.layers[0].extras[0].value == "some value");

    std::string emitted = emit_cfg(def);
    CHECK(emitted.find("burn_in=1000") != std::string::npos);
    CHECK(emitted.find("custom_key=some value") != std::string::npos);
    CHECK(parse_cfg(emitted) == def);
}

TEST_CASE("cfg: negative references are kept in relative form") {
    NetworkDef def = testutil::load_fixture("yolov3-tiny.cfg");
    auto is_route = [](const LayerSpec& l) { return l.kind == LayerKind::Route; };
    auto it = std::find_if(def.layers.begin(), def.layers.end(), is_route);
    REQUIRE(it != def.layers.end());
    CHECK(it->route.layers == std::vector<int>{-4});
    int index = static_cast<int>(it - def.layers.begin());
    CHECK(def.route_sources(index) == std::vector<int>{index - 4});
    CHECK(emit_cfg(def).find("layers=-4") != std::string::npos);
}

TEST_CASE("cfg: validate flags forward route references") {
    NetworkDef def = parse_cfg(kMinimalDoc);
    def.layers.push_back(make_route({3})); // beyond its own position
    auto diags = validate(def);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].layer == 1);
}

TEST_CASE("cfg: validate flags non-positive net dimensions") {
    NetworkDef def = parse_cfg(kMinimalDoc);
    def.width = 0;
    auto diags = validate(def);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].layer == -1);
}

TEST_CASE("cfg: validate flags shortcut channel mismatch through shape inference") {
    std::string doc =
        "[net]\nwidth=8\nheight=8\nchannels=3\n\n"
        "[convolutional]\nfilters=4\nsize=1\nstride=1\nactivation=linear\n\n"
        "[convolutional]\nfilters=6\nsize=1\nstride=1\nactivation=linear\n\n"
        "[shortcut]\nfrom=-2\nactivation=linear\n";
    NetworkDef def = parse_cfg(doc);
    auto diags = validate(def);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].message.find("shortcut") != std::string::npos);
}

TEST_CASE("cfg: validate flags yolo mask index beyond the anchor list") {
    std::string doc = "[net]\nwidth=32\nheight=32\nchannels=3\n\n"
                      "[convolutional]\nfilters=18\nsize=1\nstride=1\nactivation=linear\n\n"
                      "[yolo]\nmask=0,1,5\nanchors=10,14, 23,27, 37,58\nclasses=1\n";
    NetworkDef def = parse_cfg(doc);
    auto diags = validate(def);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].layer == 1);
    CHECK(diags[0].message.find("mask index 5") != std::string::npos);
}
