#include <doctest.h>

#include <json.hpp>

#include "mhl/error.hpp"
#include "mhl/experiments.hpp"

using namespace mhl;

namespace {

ExperimentOutput run(const std::string& cfg, ExperimentOverrides ov = {}) {
  return run_experiment(parse_experiment_config(cfg, ".", ov));
}

const std::string* file(const ExperimentOutput& o, const std::string& name) {
  for (const auto& [n, c] : o.files)
    if (n == name) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("csv formatting") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("two\nlines") == "\"two\nlines\"");
  CHECK(csv_number(0.1) == "0.10000000000000001");
  CHECK(csv_number(2.0) == "2");
  CHECK(std::stod(csv_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("config validation") {
  auto bad = [](const std::string& cfg) {
    CHECK_THROWS_AS(parse_experiment_config(cfg), Error);
  };
  bad("not json");
  bad("[1,2]");
  bad(R"({"command":"nonsense"})");
  bad(R"({})");
  bad(R"({"command":"constants"})");  // randomized, no seed
  bad(R"({"command":"probe","seed":-1})");
  bad(R"({"command":"identities","colour":"blue"})");
  bad(R"({"command":"constants","seed":1,"p_values":[1.0]})");
  bad(R"({"command":"constants","seed":1,"trials":0})");
  bad(R"({"command":"identities","filtration":"/nonexistent/file.json"})");
  bad(R"({"command":"identities","filtration":{"base_weights":[0.5,0.6],"N":1,"M":1}})");
  bad(R"({"command":"decompose","seed":1,"mask_mode":"clever"})");

  ExperimentOverrides ov;
  ov.command = "probe";
  ov.seed = 9;
  ov.jobs = 3;
  const auto cfg = parse_experiment_config(R"({"command":"identities","seed":1})", ".", ov);
  CHECK(cfg.command == ExperimentCommand::Probe);
  CHECK(*cfg.seed == 9);
  CHECK(cfg.jobs == 3);
  CHECK(cfg.p_values == std::vector<double>{2.0, 4.0, 8.0});
  CHECK(cfg.filtration_source == "default");
}

TEST_CASE("identities on coin N=M=2") {
  const auto o = run(R"({"command":"identities"})");
  CHECK(o.exit_code == kExitOk);
  const auto s = nlohmann::json::parse(o.summary_json);
  CHECK(s["status"] == "ok");
  CHECK(s["results"]["atoms"] == 64);
  CHECK(s["config"]["filtration"]["N"] == 2);
  REQUIRE(file(o, "identities.csv"));
}

TEST_CASE("identities on a universal grid") {
  const auto o = run(
      R"({"command":"identities","filtration":{"universal_grid":[[[0.2,0.8],[0.5,0.5]],[[0.3,0.7],[0.1,0.2,0.7]]]}})");
  CHECK(o.exit_code == kExitOk);
  const auto s = nlohmann::json::parse(o.summary_json);
  CHECK(s["results"]["atoms"] == 2 * 2 * 2 * 3);
  for (const auto& c : s["checks"]) CHECK(c["name"] != "regularity_product");
}

TEST_CASE("decompose with F = 0") {
  std::string zeros = "[";
  for (int k = 0; k < 16; ++k) zeros += k ? ",0" : "0";
  zeros += "]";
  const auto o = run(R"({"command":"decompose","F":)" + zeros + "}");
  CHECK(o.exit_code == kExitOk);
  const auto s = nlohmann::json::parse(o.summary_json);
  const auto& d = s["results"]["decomposition"];
  for (const char* t : {"tA", "tB", "tC", "tD"}) CHECK(d[t] == 0.0);
  CHECK(s["results"]["max_inflation"] == 1.0);
}

TEST_CASE("decompose rejects a wrong-sized F") {
  const auto o = run(R"({"command":"decompose","F":[1,2,3]})");
  CHECK(o.exit_code == kExitInvalidConfig);
  CHECK(nlohmann::json::parse(o.summary_json)["status"] == "invalid_config");
}

TEST_CASE("outputs do not depend on jobs") {
  for (const char* cmd : {"constants", "decompose", "probe", "gradcheck"}) {
    const std::string cfg = std::string(R"({"command":")") + cmd + R"(","seed":7,"trials":6})";
    ExperimentOverrides one, many;
    one.jobs = 1;
    many.jobs = 4;
    const auto a = run(cfg, one), b = run(cfg, many);
    CHECK(a.exit_code == kExitOk);
    REQUIRE(a.files.size() == b.files.size());
    for (std::size_t k = 0; k < a.files.size(); ++k) {
      CHECK(a.files[k].first == b.files[k].first);
      CHECK(a.files[k].second == b.files[k].second);
    }
    const auto again = run(cfg, one);
    CHECK(again.summary_json == a.summary_json);
  }
}

TEST_CASE("constants rows carry quantity, value, instance and seed") {
  const auto o = run(R"({"command":"constants","seed":11,"trials":20})");
  const auto* c = file(o, "constants.csv");
  REQUIRE(c);
  CHECK(c->rfind("quantity,value,instance,seed\r\n", 0) == 0);
  std::size_t lines = 0, pos = 0;
  while ((pos = c->find("\r\n", pos)) != std::string::npos) {
    ++lines;
    pos += 2;
  }
  CHECK(lines > 10);
  CHECK(c->find(",11\r\n") != std::string::npos);
  REQUIRE(file(o, "decoupling.csv"));
}

TEST_CASE("probe rows") {
  const auto o = run(R"({"command":"probe","seed":2,"trials":2,"p_values":[2,4]})");
  CHECK(o.exit_code == kExitOk);
  const auto* c = file(o, "probe.csv");
  REQUIRE(c);
  CHECK(std::count(c->begin(), c->end(), '\n') == 5);
}
