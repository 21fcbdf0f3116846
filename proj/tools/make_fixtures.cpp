// Regenerates the frozen oracle fixtures. Run from the repository root:
//   ./build/tools/make-fixtures tests/fixtures/oracle_fixtures.json
#include <cstdio>
#include <fstream>
#include <iostream>

#include "../tests/fixture_check.hpp"

using namespace dtnprobe;

int main(int argc, char** argv) {
    const std::string out = argc > 1 ? argv[1] : "tests/fixtures/oracle_fixtures.json";
    nlohmann::json doc;
    doc["description"] =
        "Reference values computed by the dense brute-force oracle path; "
        "regenerate with the make-fixtures tool.";
    doc["grid"] = "9^3 unit cube, anisotropic A (see fixture_check.hpp for the generating setup)";
    doc["fixtures"] = nlohmann::json::array();
    for (const auto& spec : fixtures::fixture_spec()) {
        nlohmann::json fx = spec;
        const double v = fixtures::evaluate_quantity(spec.at("name").get<std::string>(), true);
        fx["expected"] = v;
        doc["fixtures"].push_back(fx);
        std::printf("%-28s %.17g\n", spec.at("name").get<std::string>().c_str(), v);
    }
    std::ofstream o(out, std::ios::binary);
    o << doc.dump(2) << "\n";
    std::cout << "wrote " << out << "\n";
    return 0;
}
