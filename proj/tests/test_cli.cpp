#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <random>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("STM_CLI_PATH");
    REQUIRE(p != nullptr);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// every regular file, relative path -> content
std::vector<std::pair<std::string, std::string>> dir_contents(const fs::path& root) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            out.emplace_back(fs::relative(entry.path(), root).string(), slurp(entry.path()));
    std::sort(out.begin(), out.end());
    return out;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("stm_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("gen is byte-identical across reruns") {
    TempDir tmp;
    const std::string cmd =
        "gen --seed 7 --count 2 --frames 8 --grid 20 --channels 8 --out " +
        (tmp.path / "d").string();
    REQUIRE(run(cmd) == 0);
    fs::rename(tmp.path / "d", tmp.path / "first");
    REQUIRE(run(cmd) == 0);
    auto a = dir_contents(tmp.path / "first");
    auto b = dir_contents(tmp.path / "d");
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); i++) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second == b[i].second);
    }
}

TEST_CASE("exit codes separate usage from data errors") {
    CHECK(run("definitely-not-a-subcommand") == 1);
    CHECK(run("gen") == 1);                                    // missing required --out
    CHECK(run("train --data /nonexistent --out /tmp/x") == 2); // data error
    CHECK(run("gradcheck --scope bogus") == 2);
    CHECK(run("--help") == 0);
    CHECK(run("gen --help") == 0);
}

TEST_CASE("config file layering and unknown-key rejection") {
    TempDir tmp;
    {
        std::ofstream cfg(tmp.path / "run.json");
        cfg << R"({"gen": {"frames": 6, "channels": 8, "grid": 20, "seed": 11}})";
    }
    REQUIRE(run("--config " + (tmp.path / "run.json").string() + " gen --out " +
                (tmp.path / "c").string()) == 0);
    // config frames=6 applied
    std::string desc = slurp(tmp.path / "c/seq_0000/descriptor.json");
    CHECK(desc.find("\"frames\": 6") != std::string::npos);

    // flag wins over config
    REQUIRE(run("--config " + (tmp.path / "run.json").string() + " gen --frames 4 --out " +
                (tmp.path / "d").string()) == 0);
    std::string desc2 = slurp(tmp.path / "d/seq_0000/descriptor.json");
    CHECK(desc2.find("\"frames\": 4") != std::string::npos);

    // resolved-config echo written next to outputs
    CHECK(fs::exists(tmp.path / "c/resolved_config.json"));

    {
        std::ofstream cfg(tmp.path / "bad.json");
        cfg << R"({"gen": {"framez": 6}})";
    }
    CHECK(run("--config " + (tmp.path / "bad.json").string() + " gen --out " +
              (tmp.path / "e").string()) == 2);
    {
        std::ofstream cfg(tmp.path / "bad2.json");
        cfg << R"({"generate": {}})";
    }
    CHECK(run("--config " + (tmp.path / "bad2.json").string() + " gen --out " +
              (tmp.path / "f").string()) == 2);
}

TEST_CASE("train and track round trip through the filesystem") {
    TempDir tmp;
    REQUIRE(run("gen --seed 3 --count 2 --frames 10 --grid 20 --channels 8 --out " +
                (tmp.path / "data").string()) == 0);
    REQUIRE(run("train --data " + (tmp.path / "data").string() + " --out " +
                (tmp.path / "params").string() +
                " --steps 12 --batch 2 --channels 8 --template-cells 4 --search-cells 12"
                " --warmup 4 --decay 8 --seed 5") == 0);
    CHECK(fs::exists(tmp.path / "params/manifest.json"));
    CHECK(fs::exists(tmp.path / "params/loss.csv"));

    // identical reruns byte-match (loss curve and banks)
    REQUIRE(run("train --data " + (tmp.path / "data").string() + " --out " +
                (tmp.path / "params2").string() +
                " --steps 12 --batch 2 --channels 8 --template-cells 4 --search-cells 12"
                " --warmup 4 --decay 8 --seed 5") == 0);
    CHECK(slurp(tmp.path / "params/loss.csv") == slurp(tmp.path / "params2/loss.csv"));
    CHECK(slurp(tmp.path / "params/head_heat_w.st1") ==
          slurp(tmp.path / "params2/head_heat_w.st1"));

    const std::string seq = (tmp.path / "data/seq_0000/descriptor.json").string();
    REQUIRE(run("track --seq " + seq + " --params " + (tmp.path / "params").string() +
                " --out " + (tmp.path / "boxes.csv").string() + " --scores-csv " +
                (tmp.path / "scores.csv").string()) == 0);
    std::string boxes = slurp(tmp.path / "boxes.csv");
    CHECK(boxes.rfind("frame,cx,cy,w,h,confidence,k_hat", 0) == 0);
    CHECK(fs::exists(tmp.path / "scores.csv"));

    // disabled temporal branch equals K=1, byte for byte
    REQUIRE(run("track --seq " + seq + " --params " + (tmp.path / "params").string() +
                " --no-arm --out " + (tmp.path / "boxes_noarm.csv").string()) == 0);
    REQUIRE(run("track --seq " + seq + " --params " + (tmp.path / "params").string() +
                " --k 1 --out " + (tmp.path / "boxes_k1.csv").string()) == 0);
    CHECK(slurp(tmp.path / "boxes_noarm.csv") == slurp(tmp.path / "boxes_k1.csv"));

    REQUIRE(run("eval --data " + (tmp.path / "data").string() + " --params " +
                (tmp.path / "params").string() + " --out " + (tmp.path / "metrics.csv").string() +
                " --summary " + (tmp.path / "summary.csv").string()) == 0);
    std::string metrics = slurp(tmp.path / "metrics.csv");
    CHECK(metrics.rfind("scenario,frames,mean_iou,mean_center_err,failures", 0) == 0);
    CHECK(metrics.find("seq_0001") != std::string::npos);
}

TEST_CASE("ablate emits one row per cell plus p-values") {
    TempDir tmp;
    REQUIRE(run("ablate --cells 'dw,svc x arm,noarm' --scenarios 2 --train-steps 6"
                " --train-sequences 2 --out " +
                (tmp.path / "summary.csv").string()) == 0);
    std::string summary = slurp(tmp.path / "summary.csv");
    CHECK(summary.rfind("corr,arm,sequences,total_failures,mean_iou,mean_center_err", 0) == 0);
    int rows = 0;
    for (char c : summary) rows += c == '\n';
    CHECK(rows == 5);  // header + 4 cells
    CHECK(fs::exists(tmp.path / "summary.csv.pvalues.csv"));
}

TEST_CASE("gradcheck subcommand passes on every scope") {
    CHECK(run("gradcheck --scope all --max-coords 40") == 0);
}

TEST_CASE("ablate reruns are byte-identical") {
    TempDir tmp;
    const std::string cmd =
        "ablate --cells 'svc x arm' --scenarios 2 --train-steps 6 --train-sequences 2 --out " +
        (tmp.path / "s.csv").string();
    REQUIRE(run(cmd) == 0);
    fs::rename(tmp.path / "s.csv", tmp.path / "first.csv");
    REQUIRE(run(cmd) == 0);
    CHECK(slurp(tmp.path / "first.csv") == slurp(tmp.path / "s.csv"));
}
