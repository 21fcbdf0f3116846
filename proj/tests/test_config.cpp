#include <catch2/catch.hpp>
#include <sstream>

#include "dtnprobe/config.hpp"
#include "dtnprobe/report.hpp"

using namespace dtnprobe;

TEST_CASE("toml subset parsing") {
    std::istringstream in(R"(
# comment
[geometry]
nodes_per_axis = 17   # trailing comment
r0 = 0.3
face = "z+"

[sweep]
deltas = [0.1, 0.2]

[nonlinearity]
unknown = "cubic"
unknown_params = [2.0, 0.5]
)");
    auto table = toml::parse(in);
    RunConfig c = config_from_table(table);
    REQUIRE(c.nodes_per_axis == 17);
    REQUIRE(c.r0 == 0.3);
    REQUIRE(c.face == "z+");
    REQUIRE(c.deltas == std::vector<double>{0.1, 0.2});
    REQUIRE(c.unknown.name == "cubic");
    REQUIRE(c.unknown.params == std::vector<double>{2.0, 0.5});
    // untouched fields keep defaults
    REQUIRE(c.tol_lin == 1e-10);
    REQUIRE(c.identity_pairs == 5);
}

TEST_CASE("malformed configs are rejected with line numbers") {
    std::istringstream bad1("[geometry\nx = 1\n");
    REQUIRE_THROWS_WITH(toml::parse(bad1), Catch::Contains("line 1"));
    std::istringstream bad2("[s]\nkey 3\n");
    REQUIRE_THROWS_WITH(toml::parse(bad2), Catch::Contains("key = value"));
    std::istringstream bad3("[s]\nk = [1, \"a\"]\n");
    REQUIRE_THROWS_WITH(toml::parse(bad3), Catch::Contains("mixed array"));
}

TEST_CASE("config round-trips through serialization") {
    RunConfig c;
    c.nodes_per_axis = 21;
    c.r0 = 0.37;
    c.deltas = {0.11, 0.17};
    c.unknown = {"sine", {0.8}};
    c.seed = 123456789;
    c.workers = 2;
    const std::string text = serialize_config(c);
    std::istringstream in(text);
    RunConfig c2 = config_from_table(toml::parse(in));
    REQUIRE(serialize_config(c2) == text);
    REQUIRE(c2.nodes_per_axis == 21);
    REQUIRE(c2.r0 == 0.37);
    REQUIRE(c2.deltas == c.deltas);
    REQUIRE(c2.unknown.name == "sine");
    REQUIRE(c2.seed == c.seed);
}

TEST_CASE("config validation catches bad fields") {
    RunConfig c;
    c.nodes_per_axis = 4;
    c.r1 = 0.6;
    c.t_points = 4;
    c.unknown.name = "made-up";
    const auto errs = validate_config(c);
    REQUIRE(errs.size() >= 4);
    bool has_face = false, has_n = false;
    for (const auto& e : errs) {
        if (e.find("nodes_per_axis") != std::string::npos) has_n = true;
        if (e.find("r1") != std::string::npos) has_face = true;
    }
    REQUIRE(has_n);
    REQUIRE(has_face);

    REQUIRE(validate_config(RunConfig{}).empty());  // defaults are valid
}

TEST_CASE("csv round trip and fixed formatting") {
    const std::string path = "test_roundtrip.csv";
    write_csv(path, {"a", "b"}, {{1.0, 2.5e-11}, {3.14159, -7.0}});
    CsvData d = read_csv(path);
    REQUIRE(d.columns == std::vector<std::string>{"a", "b"});
    REQUIRE(d.rows.size() == 2);
    REQUIRE(d.rows[0][1] == Approx(2.5e-11));
    REQUIRE(d.rows[1][0] == Approx(3.14159));
    std::remove(path.c_str());
}

TEST_CASE("slope fit basics") {
    std::vector<double> x = {1.0, 2.0, 4.0, 8.0};
    std::vector<double> y;
    for (double v : x) y.push_back(v * v);
    auto fit = fit_slope(x, y);
    REQUIRE(fit.slope == Approx(2.0).epsilon(1e-12));
    REQUIRE(fit.r2 == Approx(1.0).epsilon(1e-12));

    std::vector<double> c = {3.0, 3.0, 3.0, 3.0};
    REQUIRE(fit_slope(x, c).slope == Approx(0.0).margin(1e-12));

    std::vector<double> neg = {1.0, -1.0, 2.0};
    REQUIRE_THROWS_AS(fit_slope(std::vector<double>{1, 2, 3}, neg), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_slope(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
                      std::invalid_argument);
}
