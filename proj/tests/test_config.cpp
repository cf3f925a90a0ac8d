#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "zefoz/config.hpp"
#include "zefoz/util.hpp"

using namespace zefoz;

namespace {

const char* kMinimal = R"({
  "systems": {
    "ground": {
      "S": "1/2", "I": "1/2",
      "A": {"unit": "MHz", "principal_values": [1183.0, -127.0, 5000.0]},
      "g": {"principal_values": [0.13, 1.5, 6.06]},
      "g_n": 0.98734
    }
  }
})";

std::string example_path() {
    namespace fs = std::filesystem;
    for (fs::path dir :
         {fs::path("configs"), fs::path("../configs"), fs::path("../../configs")}) {
        if (fs::exists(dir / "yb171_yso_siteII.json"))
            return (dir / "yb171_yso_siteII.json").string();
    }
    return "/root/proj/configs/yb171_yso_siteII.json";
}

} // namespace

TEST_CASE("shipped example config parses and reproduces the 655/528 splittings") {
    const Config cfg = parse_config(example_path());
    REQUIRE(cfg.has_system("ground"));
    REQUIRE(cfg.has_system("excited"));
    CHECK(cfg.constants.mu_B_mhz_per_t == doctest::Approx(13996.2449));
    CHECK(cfg.noise.magnitude_t == doctest::Approx(3e-6));
    CHECK(cfg.noise.mode == NoiseVector::Mode::IsotropicAverage);
    CHECK(cfg.map_window.theta_min_deg == doctest::Approx(-10.0));
    CHECK(cfg.map_window.phi_step_deg == doctest::Approx(0.5));
    CHECK(cfg.optical_offset_mhz.has_value());
    CHECK(cfg.source_hash != 0);

    const ZeroFieldLevels zf = zero_field_levels(cfg.system("ground").A.principal_values);
    CHECK(zf.psi_splitting() == doctest::Approx(655.0));
    CHECK(zf.phi_splitting() == doctest::Approx(528.0));
}

TEST_CASE("minimal config and defaults") {
    const Config cfg = parse_config_text(kMinimal);
    CHECK(cfg.systems.size() == 1);
    CHECK(cfg.noise.magnitude_t == doctest::Approx(3e-6));
    CHECK(cfg.noise.mode == NoiseVector::Mode::IsotropicAverage);
    CHECK(cfg.map_window.theta_max_deg == doctest::Approx(10.0));
    CHECK(cfg.seed_inhomogeneity == 20180730);
    CHECK_THROWS_AS(cfg.system("excited"), ConfigError);
}

TEST_CASE("GHz unit converts to MHz internally") {
    std::string text = kMinimal;
    text.replace(text.find("\"MHz\""), 5, "\"GHz\"");
    const Config cfg = parse_config_text(text);
    CHECK(cfg.system("ground").A.principal_values(2) == doctest::Approx(5.0e6));
}

TEST_CASE("unsupported unit is rejected with the JSON path") {
    std::string text = kMinimal;
    text.replace(text.find("\"MHz\""), 5, "\"tesla\"");
    CHECK_THROWS_WITH_AS(parse_config_text(text), doctest::Contains("/systems/ground/A/unit"),
                         ConfigError);
}

TEST_CASE("unknown keys are rejected with their path") {
    const char* extra = R"({
      "systems": {
        "ground": {
          "S": "1/2", "I": "1/2",
          "A": {"unit": "MHz", "principal_values": [1.0, 2.0, 3.0]},
          "g": {"principal_values": [1.0, 1.0, 1.0]},
          "g_n": 0.5,
          "hyperfine_axz": 12.0
        }
      }
    })";
    CHECK_THROWS_WITH_AS(parse_config_text(extra),
                         doctest::Contains("/systems/ground/hyperfine_axz"), ConfigError);

    const char* top = R"({"systems": {"g": {"S": "1/2", "I": "1/2",
      "A": {"unit": "MHz", "principal_values": [1.0, 2.0, 3.0]},
      "g": {"principal_values": [1.0, 1.0, 1.0]}, "g_n": 0.5}}, "plot": true})";
    CHECK_THROWS_WITH_AS(parse_config_text(top), doctest::Contains("unknown key"), ConfigError);
}

TEST_CASE("duplicate keys are rejected") {
    const char* dup = R"({
      "systems": {
        "ground": {
          "S": "1/2", "I": "1/2",
          "A": {"unit": "MHz", "principal_values": [1.0, 2.0, 3.0]},
          "A": {"unit": "MHz", "principal_values": [4.0, 5.0, 6.0]},
          "g": {"principal_values": [1.0, 1.0, 1.0]},
          "g_n": 0.5
        }
      }
    })";
    CHECK_THROWS_WITH_AS(parse_config_text(dup), doctest::Contains("duplicate key"), ConfigError);
}

TEST_CASE("empty file reports a parse error with a byte offset") {
    try {
        parse_config_text("", "empty.json");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("empty.json") != std::string::npos);
        // nlohmann reports "... at line L, column C" / byte position
        CHECK((msg.find("byte") != std::string::npos || msg.find("column") != std::string::npos));
    }
}

TEST_CASE("non-finite numbers cannot sneak in") {
    std::string text = kMinimal;
    text.replace(text.find("5000.0"), 6, "1e999");  // overflows to inf
    CHECK_THROWS_AS(parse_config_text(text), ConfigError);
}

TEST_CASE("missing required keys are reported with their path") {
    const char* no_gn = R"({
      "systems": {
        "ground": {
          "S": "1/2", "I": "1/2",
          "A": {"unit": "MHz", "principal_values": [1.0, 2.0, 3.0]},
          "g": {"principal_values": [1.0, 1.0, 1.0]}
        }
      }
    })";
    CHECK_THROWS_WITH_AS(parse_config_text(no_gn), doctest::Contains("g_n"), ConfigError);
}

TEST_CASE("quantum numbers accept fractions, integers and doubles") {
    std::string text = kMinimal;
    text.replace(text.find("\"1/2\", \"I\": \"1/2\""), std::string("\"1/2\", \"I\": \"1/2\"").size(),
                 "0.5, \"I\": \"3/2\"");
    const Config cfg = parse_config_text(text);
    CHECK(cfg.system("ground").S.twice() == 1);
    CHECK(cfg.system("ground").I.twice() == 3);

    std::string bad = kMinimal;
    bad.replace(bad.find("\"1/2\""), 5, "\"2/3\"");
    CHECK_THROWS_AS(parse_config_text(bad), ConfigError);
}

TEST_CASE("fixed-direction noise requires a direction") {
    std::string text(kMinimal);
    text.insert(text.rfind('}') - 1, R"(, "noise": {"magnitude_ut": 2.0, "mode": "fixed-direction"})");
    CHECK_THROWS_WITH_AS(parse_config_text(text), doctest::Contains("direction"), ConfigError);

    std::string ok(kMinimal);
    ok.insert(ok.rfind('}') - 1,
              R"(, "noise": {"magnitude_ut": 2.0, "mode": "fixed-direction", "direction": [0, 0, 1]})");
    const Config cfg = parse_config_text(ok);
    CHECK(cfg.noise.mode == NoiseVector::Mode::FixedDirection);
    CHECK(cfg.noise.direction(2) == doctest::Approx(1.0));
}

TEST_CASE("Q for I=1/2 produces a warning, not an error") {
    std::string text(kMinimal);
    const std::string q = R"(, "Q": {"unit": "MHz", "principal_values": [10.0, -4.0, -6.0]})";
    text.insert(text.find("\"g_n\": 0.98734") + std::string("\"g_n\": 0.98734").size(), q);
    const Config cfg = parse_config_text(text);
    CHECK(cfg.warnings.size() >= 1);
    CHECK(cfg.warnings[0].find("constant shift") != std::string::npos);
}

TEST_CASE("identical text yields identical hashes; different text differs") {
    const Config a = parse_config_text(kMinimal);
    const Config b = parse_config_text(kMinimal);
    CHECK(a.source_hash == b.source_hash);
    std::string text(kMinimal);
    text.replace(text.find("0.98734"), 7, "0.98735");
    const Config c = parse_config_text(text);
    CHECK(a.source_hash != c.source_hash);
}
