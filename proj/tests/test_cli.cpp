#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr combined
};

std::string cli() {
    const char* p = std::getenv("CQM_CLI");
    REQUIRE_MESSAGE(p != nullptr, "CQM_CLI must point at the binary");
    return p;
}

std::string data(const std::string& name) {
    const char* p = std::getenv("CQM_DATA");
    REQUIRE_MESSAGE(p != nullptr, "CQM_DATA must point at the fixture directory");
    return (fs::path(p) / name).string();
}

RunResult run(const std::string& args) {
    const std::string command = "\"" + cli() + "\" " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult result;
    char buffer[4096];
    while (std::size_t n = std::fread(buffer, 1, sizeof buffer, pipe))
        result.output.append(buffer, n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

fs::path scratch() {
    static const fs::path dir = [] {
        auto p = fs::temp_directory_path() /
                 ("cqm_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

Json load(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), ("cannot open " + path.string()));
    Json j;
    in >> j;
    return j;
}

// Entrywise numeric comparison of two JSON trees to 1e-12.
void check_close(const Json& a, const Json& b, const std::string& where) {
    INFO(where);
    REQUIRE(a.type() == b.type());
    if (a.is_object()) {
        REQUIRE(a.size() == b.size());
        for (const auto& [key, value] : a.items())
            check_close(value, b.at(key), where + "." + key);
    } else if (a.is_array()) {
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            check_close(a[i], b[i], where + "[" + std::to_string(i) + "]");
    } else if (a.is_number()) {
        CHECK(std::abs(a.get<double>() - b.get<double>()) < 1e-12);
    } else {
        CHECK(a == b);
    }
}

}  // namespace

TEST_CASE("validate") {
    SUBCASE("well-formed POVM passes") {
        const auto r = run("validate " + data("unsharp_qubit.povm.json"));
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("ok") != std::string::npos);
    }
    SUBCASE("non-normalized POVM exits 1 and names the invariant") {
        const auto r = run("validate " + data("bad_nonnormalized.povm.json"));
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("NotNormalized") != std::string::npos);
        CHECK(r.output.find("0.5") != std::string::npos);
    }
    SUBCASE("corrupt JSON exits 2") {
        const auto r = run("validate " + data("corrupt.json"));
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("parse error") != std::string::npos);
    }
    SUBCASE("missing file exits 2") {
        CHECK(run("validate /nonexistent/file.json").exit_code == 2);
    }
    SUBCASE("unsupported kind exits 2") {
        CHECK(run("validate " + data("z_basis.multiplicity.json")).exit_code == 2);
    }
    SUBCASE("no subcommand exits 2") { CHECK(run("").exit_code == 2); }
}

TEST_CASE("refine golden round trip") {
    const fs::path out = scratch() / "refined.json";
    const auto r = run("refine " + data("unsharp_qubit.povm.json") + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    check_close(load(out), load(data("unsharp_qubit.refined.golden.json")), "refined");
    CHECK(run("validate " + out.string()).exit_code == 0);
}

TEST_CASE("dilate golden round trip") {
    const fs::path out = scratch() / "model.json";
    const auto r = run("dilate " + data("luders_z.instrument.json") + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("ancilla dim 2") != std::string::npos);
    check_close(load(out), load(data("luders_z.model.golden.json")), "model");
    CHECK(run("verify " + out.string()).exit_code == 0);
}

TEST_CASE("compose golden round trip") {
    const fs::path out = scratch() / "joint.json";
    const auto r = run("compose " + data("luders_z.instrument.json") + " " +
                       data("luders_x.instrument.json") + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    check_close(load(out), load(data("z_then_x.joint.golden.json")), "joint");
    CHECK(run("verify " + out.string()).exit_code == 0);
}

TEST_CASE("complete golden round trip") {
    const fs::path out = scratch() / "complete.json";
    const auto r = run("complete " + data("unsharp_qubit.povm.json") + " " +
                       data("z_basis.multiplicity.json") + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("residual") != std::string::npos);
    check_close(load(out), load(data("unsharp_complete.joint.golden.json")), "complete");
    CHECK(run("validate " + out.string()).exit_code == 0);
}

TEST_CASE("simulate") {
    SUBCASE("chain file statistics pass at the default threshold") {
        const auto r = run("simulate " + data("luders_z.chain.json") + " --json");
        REQUIRE(r.exit_code == 0);
        const Json report = Json::parse(r.output);
        CHECK(report["pass"].get<bool>());
        CHECK(report["trials"].get<long long>() == 20000);
        CHECK(report["max_z"].get<double>() < 5.0);
    }
    SUBCASE("seed determinism: identical reports for identical invocations") {
        const std::string args =
            "simulate " + data("luders_z.chain.json") + " --json --trials 5000 --seed 42";
        CHECK(run(args).output == run(args).output);
    }
    SUBCASE("different seeds give different counts") {
        const std::string base = "simulate " + data("luders_z.chain.json") + " --json";
        CHECK(run(base + " --seed 1").output != run(base + " --seed 2").output);
    }
    SUBCASE("CSV output") {
        const fs::path out = scratch() / "freq.csv";
        const auto r = run("simulate " + data("luders_z.chain.json") + " --trials 100 --out " +
                           out.string());
        REQUIRE(r.exit_code == 0);
        std::ifstream in(out);
        std::string header;
        std::getline(in, header);
        CHECK(header == "stage,label,count,frequency");
    }
    SUBCASE("wrong manifest kind exits 2") {
        CHECK(run("simulate " + data("unsharp_qubit.povm.json")).exit_code == 2);
    }
}

TEST_CASE("verify") {
    SUBCASE("model reproducibility passes") {
        const auto r = run("verify " + data("luders_z.model.golden.json") + " --json");
        REQUIRE(r.exit_code == 0);
        const Json report = Json::parse(r.output);
        CHECK(report["residual"].get<double>() <= 1e-10);
    }
    SUBCASE("joint normalization passes") {
        CHECK(run("verify " + data("z_then_x.joint.golden.json")).exit_code == 0);
    }
    SUBCASE("povm manifest is the wrong kind") {
        CHECK(run("verify " + data("unsharp_qubit.povm.json")).exit_code == 2);
    }
}
