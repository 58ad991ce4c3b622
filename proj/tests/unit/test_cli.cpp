#include <doctest.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "featnorm/cli.hpp"
#include "featnorm/dataset.hpp"
#include "featnorm/random.hpp"

// After Eigen: <resolv.h> defines a _res macro that collides with Eigen internals.
#include <httplib.h>

using namespace featnorm;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "featnorm");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "featnorm_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// synth + synthetic oracle-fill into `dir`; returns (human, machine) paths.
std::pair<fs::path, fs::path> make_pair_files(const fs::path& dir, int concepts = 60,
                                              int features = 120) {
  const auto human = dir / "human.csv";
  const auto machine = dir / "machine.csv";
  REQUIRE(run_cli({"--seed", "42", "synth", "-o", human.string(), "--concepts",
                   std::to_string(concepts), "--features", std::to_string(features)})
              .code == 0);
  REQUIRE(run_cli({"--seed", "42", "oracle-fill", human.string(), "-o", machine.string(), "--fp",
                   "0.25", "--fn", "0.15"})
              .code == 0);
  return {human, machine};
}

}  // namespace

TEST_CASE("ingest reports the shape of a full-size count table") {
  const auto dir = workdir("ingest_big");
  const auto norms = dir / "animals.csv";
  {
    Rng rng(1);
    std::ofstream out(norms);
    out << "concept";
    for (int j = 0; j < 764; ++j) out << ",feature_" << j;
    out << '\n';
    for (int i = 0; i < 129; ++i) {
      out << "animal_" << i;
      for (int j = 0; j < 764; ++j) out << ',' << rng.below(5);
      out << '\n';
    }
  }
  const auto r = run_cli({"ingest", norms.string(), "-o", (dir / "binary.csv").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("concepts: 129") != std::string::npos);
  CHECK(r.out.find("features: 764") != std::string::npos);
  const auto matrix = read_binary_table(dir / "binary.csv", ',');
  CHECK(matrix.rows() == 129);
  CHECK(matrix.cols() == 764);
  CHECK(fs::exists(dir / "binary.csv.manifest.json"));
}

TEST_CASE("ingest thresholds on unanimity") {
  const auto dir = workdir("ingest_threshold");
  write_text(dir / "n.csv", "concept,a,b,c\nx,3,4,0\ny,4,3,3\n");
  REQUIRE(run_cli({"ingest", (dir / "n.csv").string(), "-o", (dir / "b.csv").string(), "-t", "4"})
              .code == 0);
  CHECK(slurp(dir / "b.csv") == "concept,a,b,c\nx,0,1,0\ny,1,0,0\n");

  REQUIRE(run_cli({"ingest", (dir / "n.csv").string(), "-o", (dir / "b3.csv").string(), "-t", "3"})
              .code == 0);
  CHECK(slurp(dir / "b3.csv") == "concept,a,b,c\nx,1,1,0\ny,1,1,1\n");

  write_text(dir / "n.tsv", "concept\ta\nx\t4\n");
  REQUIRE(run_cli({"-d", "tab", "ingest", (dir / "n.tsv").string(), "-o",
                   (dir / "b.tsv").string()})
              .code == 0);
  CHECK(slurp(dir / "b.tsv") == "concept\ta\nx\t1\n");
}

TEST_CASE("ingest rejects a bad row with its line number") {
  const auto dir = workdir("ingest_bad");
  write_text(dir / "n.csv", "concept,a,b\nx,1,2\ny,1\n");
  const auto r = run_cli({"ingest", (dir / "n.csv").string(), "-o", (dir / "b.csv").string()});
  CHECK(r.code == cli::kExitParse);
  CHECK(r.err.find("line 3") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "b.csv"));
}

TEST_CASE("usage errors and missing files") {
  CHECK(run_cli({}).code == cli::kExitUsage);
  CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run_cli({"ingest"}).code == cli::kExitUsage);
  CHECK(run_cli({"--help"}).code == cli::kExitOk);
  const auto dir = workdir("missing");
  CHECK(run_cli({"ingest", (dir / "nope.csv").string(), "-o", (dir / "b.csv").string()}).code ==
        cli::kExitIo);
  CHECK(run_cli({"ingest", (dir / "nope.csv").string(), "-o", "/no/such/dir/b.csv"}).code ==
        cli::kExitIo);
}

TEST_CASE("scree of a block-diagonal matrix") {
  const auto dir = workdir("scree_diag");
  // A 3x3 and a 2x2 block of ones: singular values 3 and 2, then zeros.
  write_text(dir / "m.csv",
             "concept,a,b,c,d,e\n"
             "x,1,1,1,0,0\ny,1,1,1,0,0\nz,1,1,1,0,0\n"
             "u,0,0,0,1,1\nv,0,0,0,1,1\n");
  REQUIRE(run_cli({"scree", (dir / "m.csv").string(), "-o", (dir / "s.csv").string()}).code == 0);
  std::istringstream in(slurp(dir / "s.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "index,singular_value");
  std::vector<double> values;
  while (std::getline(in, line)) values.push_back(std::stod(line.substr(line.find(',') + 1)));
  REQUIRE(values.size() == 5);
  CHECK(values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(values[1] == doctest::Approx(2.0).epsilon(1e-12));
  for (std::size_t k = 2; k < 5; ++k) CHECK(std::abs(values[k]) <= 1e-12);
}

TEST_CASE("scree rows are min(n, m) and non-increasing") {
  const auto dir = workdir("scree_shape");
  REQUIRE(run_cli({"synth", "-o", (dir / "m.csv").string(), "--concepts", "12", "--features",
                   "30"})
              .code == 0);
  REQUIRE(run_cli({"scree", (dir / "m.csv").string(), "-o", (dir / "s.csv").string()}).code == 0);
  std::istringstream in(slurp(dir / "s.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<double> values;
  while (std::getline(in, line)) values.push_back(std::stod(line.substr(line.find(',') + 1)));
  REQUIRE(values.size() == 12);
  for (std::size_t k = 1; k < values.size(); ++k) CHECK(values[k] <= values[k - 1]);
}

TEST_CASE("synthetic oracle-fill is deterministic for a seed") {
  const auto dir = workdir("fill_synthetic");
  REQUIRE(run_cli({"synth", "-o", (dir / "h.csv").string(), "--concepts", "20", "--features",
                   "30"})
              .code == 0);
  auto fill = [&](const std::string& seed, const std::string& name) {
    return run_cli({"--seed", seed, "oracle-fill", (dir / "h.csv").string(), "-o",
                    (dir / name).string(), "--fp", "0.3", "--fn", "0.2"})
        .code;
  };
  REQUIRE(fill("5", "a.csv") == 0);
  REQUIRE(fill("5", "b.csv") == 0);
  REQUIRE(fill("6", "c.csv") == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.csv") != slurp(dir / "c.csv"));

  CHECK(run_cli({"oracle-fill", (dir / "h.csv").string(), "-o", (dir / "x.csv").string(), "--fp",
                 "1.5"})
            .code == cli::kExitUsage);
}

TEST_CASE("live oracle-fill without a token is a configuration error") {
  const auto dir = workdir("fill_token");
  write_text(dir / "h.csv", "concept,a\nx,1\n");
  ::unsetenv("FEATNORM_CLI_TEST_TOKEN");
  const auto r = run_cli({"oracle-fill", (dir / "h.csv").string(), "-o", (dir / "m.csv").string(),
                          "--mode", "live", "--endpoint", "http://127.0.0.1:9/x", "--token-env",
                          "FEATNORM_CLI_TEST_TOKEN"});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("FEATNORM_CLI_TEST_TOKEN") != std::string::npos);
}

TEST_CASE("live oracle-fill resumes from its cache") {
  const auto dir = workdir("fill_resume");
  write_text(dir / "h.csv", "concept,has_fur,can_fly\ncat,1,0\nbird,0,1\n");

  std::atomic<int> hits{0};
  std::atomic<bool> fail_bird{true};
  httplib::Server server;
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const auto prompt = nlohmann::json::parse(req.body)["prompt"].get<std::string>();
    if (fail_bird && prompt.find("birds?") != std::string::npos) {
      res.status = 503;
      return;
    }
    const bool yes = prompt.find("[has_fur] true for cats") != std::string::npos ||
                     prompt.find("[can_fly] true for birds") != std::string::npos;
    res.set_content(nlohmann::json{{"text", yes ? " True" : " False"}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("FEATNORM_CLI_TEST_TOKEN", "t", 1);
  const std::vector<std::string> args{"oracle-fill",  (dir / "h.csv").string(),
                                      "-o",           (dir / "m.csv").string(),
                                      "--mode",       "live",
                                      "--endpoint",   "http://127.0.0.1:" + std::to_string(port) +
                                                          "/generate",
                                      "--token-env",  "FEATNORM_CLI_TEST_TOKEN",
                                      "--cache",      (dir / "cache.jsonl").string(),
                                      "--retries",    "0",
                                      "--backoff-ms", "1"};

  const auto first = run_cli(args);
  CHECK(first.code == cli::kExitNetwork);
  CHECK(hits == 3);  // both cat cells, then the first bird cell fails

  fail_bird = false;
  hits = 0;
  const auto second = run_cli(args);
  CHECK(second.code == 0);
  CHECK(hits == 2);
  CHECK(second.out.find("live requests: 2") != std::string::npos);
  CHECK(slurp(dir / "m.csv") == slurp(dir / "h.csv"));

  hits = 0;
  const auto third = run_cli(args);
  CHECK(third.code == 0);
  CHECK(hits == 0);
  CHECK(third.out.find("live requests: 0") != std::string::npos);

  ::unsetenv("FEATNORM_CLI_TEST_TOKEN");
  server.stop();
  thread.join();
}

TEST_CASE("loo emits JSON, delimited table and manifest") {
  const auto dir = workdir("loo");
  const auto [human, machine] = make_pair_files(dir);
  const auto prefix = (dir / "loo").string();
  const auto r = run_cli({"loo", human.string(), machine.string(), "-r", "5", "-o", prefix});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("paired t: ") != std::string::npos);

  const auto report = nlohmann::json::parse(slurp(prefix + ".json"));
  CHECK(report["kind"] == "leave_one_out");
  CHECK(report["paired_t"].get<double>() > 0.0);
  CHECK(report["config"]["rank"] == 5);
  CHECK(count_lines(slurp(prefix + ".csv")) == 61);

  const auto manifest = nlohmann::json::parse(slurp(prefix + ".manifest.json"));
  CHECK(manifest["subcommand"] == "loo");
  CHECK(manifest["inputs"].size() == 2);
  CHECK(manifest["inputs"][0]["sha256"].get<std::string>().size() == 64);
  CHECK(manifest["config"]["l2_penalty"] == 1.0);
}

TEST_CASE("loo with rank above n - 2 is a precondition error") {
  const auto dir = workdir("loo_rank");
  const auto [human, machine] = make_pair_files(dir, 8, 20);
  const auto prefix = (dir / "loo").string();
  const auto r = run_cli({"loo", human.string(), machine.string(), "-r", "7", "-o", prefix});
  CHECK(r.code == cli::kExitUsage);
  // The manifest goes out before any result file.
  CHECK(fs::exists(prefix + ".manifest.json"));
  CHECK_FALSE(fs::exists(prefix + ".json"));
  CHECK(run_cli({"loo", human.string(), machine.string(), "-r", "6", "-o", prefix}).code == 0);
}

TEST_CASE("sweep defaults to nine fractions and honours repeats") {
  const auto dir = workdir("sweep");
  const auto [human, machine] = make_pair_files(dir, 40, 60);
  const auto prefix = (dir / "sweep").string();
  REQUIRE(run_cli({"sweep", human.string(), machine.string(), "-r", "3", "--repeats", "2", "-o",
                   prefix})
              .code == 0);
  CHECK(count_lines(slurp(prefix + ".csv")) == 10);
  const auto report = nlohmann::json::parse(slurp(prefix + ".json"));
  REQUIRE(report["per_fraction"].size() == 9);
  // 0.5 of 40 concepts = 20 held out per repeat.
  const auto& half = report["per_fraction"][4];
  CHECK(half["held_out_per_repeat"] == 20);
  CHECK(half["df"].get<int>() + 1 + static_cast<int>(half["failures"].size()) == 40);

  const auto one = (dir / "one").string();
  REQUIRE(run_cli({"sweep", human.string(), machine.string(), "-r", "3", "--repeats", "1",
                   "--fractions", "0.25,0.5", "-o", one})
              .code == 0);
  const auto single = nlohmann::json::parse(slurp(one + ".json"));
  REQUIRE(single["per_fraction"].size() == 2);
  CHECK(single["per_fraction"][1]["df"].get<int>() +
            static_cast<int>(single["per_fraction"][1]["failures"].size()) ==
        19);
}

TEST_CASE("identical runs produce byte-identical outputs") {
  const auto a = workdir("repro_a");
  const auto b = workdir("repro_b");
  for (const auto& dir : {a, b}) {
    const auto [human, machine] = make_pair_files(dir, 30, 40);
    REQUIRE(run_cli({"-j", dir == a ? "1" : "2", "loo", human.string(), machine.string(), "-r",
                     "4", "-o", (dir / "loo").string()})
                .code == 0);
    REQUIRE(run_cli({"sweep", human.string(), machine.string(), "-r", "4", "--repeats", "2",
                     "--fractions", "0.2,0.6", "-o", (dir / "sweep").string()})
                .code == 0);
    REQUIRE(run_cli({"scree", human.string(), "-o", (dir / "scree.csv").string()}).code == 0);
  }
  for (const auto* name :
       {"human.csv", "machine.csv", "loo.json", "loo.csv", "sweep.json", "sweep.csv", "scree.csv"}) {
    INFO(name);
    CHECK(slurp(a / name) == slurp(b / name));
  }
}

TEST_CASE("config file values sit under flags") {
  const auto dir = workdir("config");
  const auto [human, machine] = make_pair_files(dir, 20, 30);
  write_text(dir / "run.toml", "[loo]\nrank = 3\nlambda = 0.25\n");
  const auto cfg = (dir / "run.toml").string();

  REQUIRE(run_cli({"--config", cfg, "loo", human.string(), machine.string(), "-o",
                   (dir / "a").string()})
              .code == 0);
  auto report = nlohmann::json::parse(slurp((dir / "a.json").string()));
  CHECK(report["config"]["rank"] == 3);
  CHECK(report["config"]["l2_penalty"] == 0.25);

  REQUIRE(run_cli({"--config", cfg, "loo", human.string(), machine.string(), "-r", "4", "-o",
                   (dir / "b").string()})
              .code == 0);
  report = nlohmann::json::parse(slurp((dir / "b.json").string()));
  CHECK(report["config"]["rank"] == 4);
  CHECK(report["config"]["l2_penalty"] == 0.25);
}
