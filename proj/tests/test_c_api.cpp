#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "morea/morea.h"

namespace {

std::string slurp(const std::filesystem::path &p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int stop_after_two(int generation, double, double, size_t, void *user) {
    ++*static_cast<int *>(user);
    return generation >= 1;
}

} // namespace

TEST_CASE("status codes and last error") {
    morea_config *cfg = nullptr;
    CHECK(morea_config_parse("x = = 1\n", &cfg) == MOREA_ERR_CONFIG);
    CHECK(cfg == nullptr);
    CHECK(std::string(morea_last_error()).size() > 0);
    morea_problem *p = nullptr;
    CHECK(morea_problem_load("/nonexistent/problem", &p) == MOREA_ERR_DATA);
    CHECK(morea_config_parse(nullptr, &cfg) == MOREA_ERR_CONFIG);
    size_t n = 0;
    CHECK(morea_front_size("/nonexistent/run", &n) == MOREA_ERR_DATA);
    CHECK(std::string(morea_version()) == "0.1.0");
}

TEST_CASE("synthesize, register, export through the C interface") {
    const auto root = std::filesystem::temp_directory_path() / "morea_c_api";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
    morea::save_synth_spec(root / "spec.json", morea::test::coarse_synth_spec());

    morea_problem *p = nullptr;
    REQUIRE(morea_problem_synthesize((root / "spec.json").c_str(), 2, &p) == MOREA_OK);
    REQUIRE(morea_problem_save(p, (root / "prob").c_str()) == MOREA_OK);
    morea_problem_free(p);
    REQUIRE(morea_problem_load((root / "prob").c_str(), &p) == MOREA_OK);

    morea_config *cfg = nullptr;
    REQUIRE(morea_config_parse(morea::test::tiny_run_config(1).c_str(), &cfg) == MOREA_OK);
    REQUIRE(morea_config_set_seed(cfg, 8) == MOREA_OK);
    const char *text = nullptr;
    REQUIRE(morea_config_serialize(cfg, &text) == MOREA_OK);
    CHECK(std::string(text).starts_with("seed = 8\n"));

    int calls = 0;
    REQUIRE(morea_register(p, cfg, (root / "run").c_str(), stop_after_two, &calls) == MOREA_OK);
    CHECK(calls == 2);
    const std::string stats = slurp(root / "run" / "stats.csv");
    CHECK(std::count(stats.begin(), stats.end(), '\n') == 3);
    CHECK(slurp(root / "run" / "config.txt") == text);

    size_t n = 0;
    REQUIRE(morea_front_size((root / "run").c_str(), &n) == MOREA_OK);
    CHECK(n > 0);
    REQUIRE(morea_export_front((root / "run").c_str(), MOREA_FRONT_JSON, (root / "front.json").c_str()) == MOREA_OK);

    const auto geno = root / "run" / "selected" / "best_guidance" / "genotype.json";
    REQUIRE(morea_rasterize(p, geno.c_str(), (root / "dvf").c_str()) == MOREA_OK);
    REQUIRE(morea_evaluate_dvfs(p, (root / "dvf" / "dvf_forward").c_str(), (root / "dvf" / "dvf_inverse").c_str(), 15.0,
                                (root / "eval").c_str()) == MOREA_OK);
    CHECK(std::filesystem::exists(root / "eval" / "metrics.json"));
    CHECK(morea_evaluate_genotype(p, geno.c_str(), -1.0, (root / "eval2").c_str()) == MOREA_ERR_CONFIG);

    const std::string mask = (root / "prob" / "masks" / "source_bladder").string();
    const char *masks[] = {mask.c_str()};
    CHECK(morea_render((root / "prob" / "target").c_str(), masks, 1, geno.c_str(), nullptr, nullptr,
                       MOREA_RENDER_CONTOURS, 2, -1, (root / "a.ppm").c_str()) == MOREA_OK);
    CHECK(morea_render((root / "prob" / "target").c_str(), masks, 1, nullptr, nullptr, nullptr, MOREA_RENDER_GRID, 1,
                       32, (root / "b.ppm").c_str()) == MOREA_ERR_DATA);
    CHECK(std::filesystem::exists(root / "a.ppm"));

    morea_config_free(cfg);
    morea_problem_free(p);
    std::filesystem::remove_all(root);
}
