#include "ipld/config.hpp"
#include "ipld/error.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace ipld;
using namespace ipld::config;

TEST_CASE("parse key=value text") {
    const auto kv = parse("# header\nvmd.alpha = 2000\n\n  vmd.k=4   # trailing\nsynth.device_names=a,b\n");
    CHECK(kv.size() == 3);
    CHECK(kv.at("vmd.alpha") == "2000");
    CHECK(kv.at("vmd.k") == "4");
    CHECK(kv.at("synth.device_names") == "a,b");
    CHECK(parse("a=1\na=2\n").at("a") == "2");
    CHECK(parse("empty=\n").at("empty").empty());

    try {
        parse("a=1\n\nno equals here\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse("=5\n"), ParseError);
}

TEST_CASE("config files report their path and line") {
    const auto path = std::filesystem::temp_directory_path() / "ipld_test_config.conf";
    std::ofstream(path) << "vmd.alpha=1\nbroken\n";
    try {
        load_file(path);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
    }
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_file(path), InvalidArgument);
}

TEST_CASE("environment names") {
    CHECK(env_name("vmd.max_iters") == "IPLD_VMD_MAX_ITERS");
    CHECK(env_name("device.kiln-2.rated_kw") == "IPLD_DEVICE_KILN_2_RATED_KW");
}

TEST_CASE("environment values override the file and later layers win") {
    ::setenv("IPLD_VMD_ALPHA", "3000", 1);
    ::unsetenv("IPLD_VMD_TAU");
    KeyValues kv{{"vmd.alpha", "2000"}, {"vmd.tau", "0.001"}};
    merge(kv, parse("vmd.tau=0.01\n"));
    merge(kv, from_environment({"vmd.alpha", "vmd.tau"}));
    CHECK(kv.at("vmd.alpha") == "3000");
    CHECK(kv.at("vmd.tau") == "0.01");
    merge(kv, {{"vmd.alpha", "10"}});
    CHECK(kv.at("vmd.alpha") == "10");
    ::unsetenv("IPLD_VMD_ALPHA");
}

TEST_CASE("typed getters name the key") {
    const KeyValues kv{{"a", "1.5"}, {"n", "-3"}, {"u", "7"}, {"b", "true"}, {"list", "20, 30,40"}, {"bad", "x1"}};
    CHECK(get_double(kv, "a") == 1.5);
    CHECK(get_int(kv, "n") == -3);
    CHECK(get_uint(kv, "u") == 7);
    CHECK(get_bool(kv, "b"));
    CHECK(get_doubles(kv, "list") == std::vector<double>{20, 30, 40});
    try {
        get_double(kv, "bad");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "bad");
    }
    CHECK_THROWS_AS(get_int(kv, "a"), ConfigError);
    CHECK_THROWS_AS(get_uint(kv, "n"), ConfigError);
    CHECK_THROWS_AS(get_bool(kv, "a"), ConfigError);
    CHECK_THROWS_AS(get_double(kv, "missing"), ConfigError);
}

TEST_CASE("hash is FNV-1a over sorted lines") {
    CHECK(hash({}) == "cbf29ce484222325");
    CHECK(hash({{"vmd.k", "4"}, {"vmd.alpha", "2000"}}) == "a7c7e3469ce3b2ba");
    CHECK(hash({{"vmd.k", "5"}, {"vmd.alpha", "2000"}}) != "a7c7e3469ce3b2ba");
}
