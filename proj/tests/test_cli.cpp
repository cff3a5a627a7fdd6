#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path work = fs::temp_directory_path() / "gtap_cli_test";

void write(const fs::path& p, const std::string& text)
{
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::string& args)
{
    const fs::path out = work / "stdout.txt", err = work / "stderr.txt";
    const std::string cmd = std::string("cd ") + work.string() + " && " + GTAP_CLI_PATH + " " + args + " >" +
                            out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::vector<std::string> lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

struct Inputs {
    Inputs()
    {
        fs::remove_all(work);
        write(work / "sk.json", R"({"sk_beta": 0.8, "h": 0.2})");
        write(work / "mixed.json", R"({"coeffs_sq": [0.1, 0.4, 0.2]})");
        write(work / "dirac1.json", R"({"atoms": [[1.0, 1.0]]})");
        write(work / "mu.json", R"({"interval": [-1, 1], "atoms": [[-0.4, 0.3], [0.5, 0.7]]})");
        write(work / "bad.json", "{\n  \"sk_beta\": 0.8,\n  \"h\": \n}\n");
        write(work / "unknown.json", "{\n  \"sk_beta\": 0.8,\n  \"beta\": 1\n}\n");
    }
};

const Inputs inputs;

}  // namespace

TEST_CASE("correction of the atom at one is zero")
{
    const Run r = run("correction --model sk.json --mu dirac1.json --out d1");
    REQUIRE(r.code == 0);
    const json j = json::parse(slurp(work / "d1" / "correction.json"));
    CHECK(std::abs(j["tap"]["value"].get<double>()) <= 1e-12);
    CHECK(j["rs"].is_null());
}

TEST_CASE("config errors exit with code 2 and a line number")
{
    const Run bad = run("correction --model bad.json --mu mu.json --out e1");
    CHECK(bad.code == 2);
    CHECK(bad.err.find("bad.json:4") != std::string::npos);
    const Run unknown = run("correction --model unknown.json --mu mu.json --out e2");
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("unknown.json:3") != std::string::npos);
    CHECK(run("correction --model missing.json --mu mu.json").code == 2);
    CHECK(run("correction --model sk.json").code == 2);
    CHECK(run("correction --bogus").code == 2);
    CHECK(run("correction --model sk.json --mu mu.json --grid-step -1").code == 2);
}

TEST_CASE("correction reruns are byte-identical")
{
    REQUIRE(run("correction --model mixed.json --mu mu.json --r-atoms 6 --out c1").code == 0);
    REQUIRE(run("correction --model mixed.json --mu mu.json --r-atoms 6 --out c2").code == 0);
    const std::string a = slurp(work / "c1" / "correction.json");
    CHECK(!a.empty());
    CHECK(a == slurp(work / "c2" / "correction.json"));
    CHECK(slurp(work / "c1" / "gamma.csv") == slurp(work / "c2" / "gamma.csv"));
    const json j = json::parse(a);
    CHECK(j["tap"]["converged"].get<bool>());
    CHECK(j.contains("classical_tap"));
    CHECK(j["rs"].contains("sup_gamma"));
}

TEST_CASE("rs-scan tables")
{
    REQUIRE(run("rs-scan --model sk.json --mu mu.json --out rs --betas 0.5 2 --fields 0.1 1").code == 0);
    const std::vector<std::string> gamma = lines(slurp(work / "rs" / "gamma.csv"));
    REQUIRE(gamma.size() > 2);
    CHECK(gamma[0] == "s,gamma,big_gamma");
    CHECK(gamma[1].substr(gamma[1].rfind(',')) == ",0");
    const std::vector<std::string> at = lines(slurp(work / "rs" / "at_plefka.csv"));
    REQUIRE(at.size() == 5);
    CHECK(at[0] == "beta,h,q,at,plefka,at_holds,plefka_holds");
    CHECK(json::parse(slurp(work / "rs" / "rs.json"))["rs"]["is_rs"].get<bool>());
}

TEST_CASE("parisi command")
{
    REQUIRE(run("parisi --model sk.json --r-atoms 6 --out p").code == 0);
    const json j = json::parse(slurp(work / "p" / "parisi.json"));
    CHECK(j["converged"].get<bool>());
    CHECK(j["value"].get<double>() > std::log(2.0));
}

TEST_CASE("mc-verify rows and seeded rerun")
{
    const std::string args = " --N 6 --draws 100 --seed 5";
    const Run a = run("mc-verify --out m1" + args);
    const Run b = run("mc-verify --out m2" + args);
    CHECK(a.code == 0);
    const std::string csv = slurp(work / "m1" / "mc_verify.csv");
    CHECK(csv == slurp(work / "m2" / "mc_verify.csv"));
    CHECK(a.out == b.out);
    const std::vector<std::string> rows = lines(csv);
    REQUIRE(rows.size() == 7);
    CHECK(rows[0] == "check,status,value,reference,tolerance");
    CHECK(rows[1].rfind("zero_model,pass,", 0) == 0);
    for (const char* name : {"cascade_pde", "upsilon", "sde_identity", "exact_chain", "concentration"})
        CHECK(csv.find(std::string(name) + ",") != std::string::npos);
}

TEST_CASE("tap-solve fixed points")
{
    REQUIRE(run("tap-solve --model sk.json --N 6 --r-atoms 6 --starts 2 --steps 1 --out t").code == 0);
    const std::vector<std::string> rows = lines(slurp(work / "t" / "fixed_points.csv"));
    REQUIRE(rows.size() == 4);
    CHECK(rows[1] == "-1,zero_disorder,1,1,0,0,0,0,0");
    for (std::size_t k = 2; k < rows.size(); ++k) {
        std::vector<std::string> f;
        std::istringstream in(rows[k]);
        for (std::string c; std::getline(in, c, ',');)
            f.push_back(c);
        REQUIRE(f.size() == 9);
        if (f[3] == "1")
            CHECK(std::stod(f[6]) < 1e-6);
    }
    CHECK(fs::exists(work / "t" / "trajectory.csv"));
}

TEST_CASE("check mode verdict")
{
    const Run r = run("--check");
    CHECK(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j["verdict"] == "pass");
    CHECK(j["checks"].size() >= 5);
}
