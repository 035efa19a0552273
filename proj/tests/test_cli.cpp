#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string("\"") + HGNN_CLI_PATH + "\" " + args +
                            " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Rotating ring-plus-chord pattern: deterministic, every slot populated,
// enough structure that a short training run stays healthy.
void write_edge_file(const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    const int n = 10, slots = 6;
    for (int t = 0; t < slots; ++t) {
        for (int i = 0; i < n; ++i) {
            os << i << ' ' << (i + 1 + t) % n << ' ' << t * 10 + 3 << '\n';
            if (i % 2 == 0) os << i << ' ' << (i + 2) % n << ' ' << t * 10 + 7 << '\n';
        }
    }
    // one malformed row and one self loop to exercise the lenient parser
    os << "garbage line\n";
    os << "3 3 12\n";
}

struct Workspace {
    fs::path dir;
    fs::path edges;
    fs::path cache;
    fs::path out;

    Workspace() {
        dir = fs::temp_directory_path() / "hgnn_cli_suite";
        fs::remove_all(dir);
        fs::create_directories(dir);
        edges = dir / "edges.txt";
        cache = dir / "graph.dgc1";
        out = dir / "runs";
        write_edge_file(edges);
    }
};

Workspace& ws() {
    static Workspace w;
    return w;
}

std::string base_flags() {
    return "--cache \"" + ws().cache.string() + "\" --out \"" + ws().out.string() +
           "\" -F 4 -L 2 -K 2 --lr 0.05 --max-iters 4 --patience 4 --seed 11";
}

}  // namespace

TEST_CASE("cli: help exits cleanly, missing subcommand is an input error") {
    REQUIRE(run("--help") == 0);
    REQUIRE(run("train --help") == 0);
    REQUIRE(run("") == 2);
    REQUIRE(run("frobnicate") == 2);
}

TEST_CASE("cli: missing or empty inputs exit with code 2") {
    REQUIRE(run("prepare " + (ws().dir / "nope.txt").string()) == 2);
    const fs::path empty = ws().dir / "empty.txt";
    std::ofstream(empty.string()).put('\n');
    REQUIRE(run("prepare " + empty.string()) == 2);
    REQUIRE(run("train --cache " + (ws().dir / "nope.dgc1").string()) == 2);
    REQUIRE(run("eval --checkpoint " + (ws().dir / "nope.hcna").string()) == 2);
    REQUIRE(run("train --cache " + ws().cache.string() + " --transform fourier") == 2);
}

TEST_CASE("cli: prepare builds a cache and is byte-stable across reruns") {
    REQUIRE(run("prepare \"" + ws().edges.string() + "\" --cache \"" +
                ws().cache.string() + "\" -T 6 -F 4 --seed 11") == 0);
    REQUIRE(fs::exists(ws().cache));
    const std::string first = file_bytes(ws().cache);
    REQUIRE(run("prepare \"" + ws().edges.string() + "\" --cache \"" +
                ws().cache.string() + "\" -T 6 -F 4 --seed 11") == 0);
    REQUIRE(file_bytes(ws().cache) == first);
}

TEST_CASE("cli: gradcheck passes on both transforms and fails when corrupted") {
    REQUIRE(run("gradcheck") == 0);
    REQUIRE(run("gradcheck --transform identity") == 0);
    REQUIRE(run("gradcheck --corrupt") == 3);
}

TEST_CASE("cli: train writes metrics, checkpoint and report deterministically") {
    REQUIRE(run("train " + base_flags()) == 0);

    fs::path run_dir;
    for (const auto& e : fs::directory_iterator(ws().out))
        if (e.is_directory()) run_dir = e.path();
    REQUIRE(!run_dir.empty());
    REQUIRE(fs::exists(run_dir / "metrics.tsv"));
    REQUIRE(fs::exists(run_dir / "model.hcna"));
    REQUIRE(fs::exists(run_dir / "report.txt"));

    std::ifstream mf(run_dir / "metrics.tsv");
    int lines = 0;
    std::string line;
    while (std::getline(mf, line)) {
        ++lines;
        std::istringstream row(line);
        int iter;
        double loss, f1, acc;
        row >> iter >> loss >> f1 >> acc;
        REQUIRE(iter == lines);
        REQUIRE(std::isfinite(loss));
        REQUIRE(f1 >= 0.0);
        REQUIRE(acc <= 1.0);
    }
    REQUIRE(lines == 4);

    const std::string metrics1 = file_bytes(run_dir / "metrics.tsv");
    const std::string model1 = file_bytes(run_dir / "model.hcna");
    REQUIRE(run("train " + base_flags()) == 0);
    REQUIRE(file_bytes(run_dir / "metrics.tsv") == metrics1);
    REQUIRE(file_bytes(run_dir / "model.hcna") == model1);

    // a different seed lands in a different run directory with different bytes
    REQUIRE(run("train " + base_flags() + "9") == 0);
    int dirs = 0;
    for (const auto& e : fs::directory_iterator(ws().out))
        if (e.is_directory()) ++dirs;
    REQUIRE(dirs == 2);
}

TEST_CASE("cli: eval and scores consume the training artifacts") {
    fs::path run_dir;
    for (const auto& e : fs::directory_iterator(ws().out))
        if (e.is_directory() && e.path().filename().string().find("-s11") != std::string::npos)
            run_dir = e.path();
    REQUIRE(!run_dir.empty());
    const std::string ckpt = (run_dir / "model.hcna").string();

    REQUIRE(run("eval --checkpoint \"" + ckpt + "\"") == 0);

    const fs::path sout = ws().dir / "scores";
    REQUIRE(run("scores --checkpoint \"" + ckpt + "\" --cache \"" + ws().cache.string() +
                "\" -t 0 --out \"" + sout.string() + "\"") == 0);
    REQUIRE(fs::exists(sout / "scores_chat_t0.csv"));
    REQUIRE(fs::exists(sout / "scores_c_t0.csv"));
    REQUIRE(fs::exists(sout / "scores_o_t0.csv"));

    // normalized rows of C sum to 1 over the mask: spot-check the header and
    // one row parse
    std::ifstream cf(sout / "scores_c_t0.csv");
    std::string header, row;
    REQUIRE(std::getline(cf, header));
    REQUIRE(header.rfind("node,", 0) == 0);
    REQUIRE(std::getline(cf, row));
    std::replace(row.begin(), row.end(), ',', ' ');
    std::istringstream rs(row);
    double node, v, total = 0.0;
    rs >> node;
    while (rs >> v) total += v;
    REQUIRE(total == Catch::Approx(1.0).margin(1e-9));

    REQUIRE(run("scores --checkpoint \"" + ckpt + "\" --cache \"" + ws().cache.string() +
                "\" -t 99 --out \"" + sout.string() + "\"") == 2);
}
