#include <sstream>

#include "doctest.h"
#include "mapgo/config.hpp"
#include "mapgo/errors.hpp"

using namespace mapgo;

TEST_CASE("config values parse by type") {
  CHECK(parse_config_value("3").get<long long>() == 3);
  CHECK(parse_config_value(" -2.5e-3 ").get<double>() == -2.5e-3);
  CHECK(parse_config_value("true").get<bool>());
  CHECK(parse_config_value("\"a # b\"").get<std::string>() == "a # b");
  CHECK(parse_config_value("V2").get<std::string>() == "V2");
  const auto arr = parse_config_value("[1, 2.5, x]");
  REQUIRE(arr.size() == 3);
  CHECK(arr[1].get<double>() == 2.5);
  CHECK_THROWS_AS(parse_config_value(""), ParseError);
  CHECK_THROWS_AS(parse_config_value("\"open"), ParseError);
  CHECK_THROWS_AS(parse_config_value("a b"), ParseError);
}

TEST_CASE("config files support comments, sections and round trip") {
  std::istringstream in("# header\nbatch = 32  # trailing\n\n[admm]\npenalty = 1.5\nname = \"x\"\n");
  const auto cfg = parse_config(in);
  CHECK(cfg.size() == 3);
  CHECK(cfg["batch"].get<int>() == 32);
  CHECK(cfg["admm.penalty"].get<double>() == 1.5);
  std::istringstream again(format_config(cfg));
  CHECK(parse_config(again) == cfg);
}

TEST_CASE("config errors carry the line number") {
  std::istringstream dup("a = 1\nb = 2\na = 3\n");
  try {
    parse_config(dup);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 3);
  }
  std::istringstream bad("a = 1\nnonsense\n");
  CHECK_THROWS_AS(parse_config(bad), ParseError);
}

TEST_CASE("assignments override earlier values") {
  nlohmann::json cfg = {{"lr", 0.1}};
  apply_assignment(cfg, "lr=0.2");
  apply_assignment(cfg, " seed = 7 ");
  CHECK(cfg["lr"].get<double>() == 0.2);
  CHECK(cfg["seed"].get<int>() == 7);
  CHECK_THROWS_AS(apply_assignment(cfg, "noequals"), ParseError);
  CHECK_THROWS_AS(apply_assignment(cfg, "=1"), ParseError);
}
