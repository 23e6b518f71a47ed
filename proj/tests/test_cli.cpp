#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "restorekit/degrade.hpp"
#include "restorekit/synthetic.hpp"
#include "restorekit/tensor_io.hpp"
#include "test_util.hpp"

using namespace restorekit;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI binary in `dir`, capturing both streams.
Run run_cli(const fs::path& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && '" + RESTOREKIT_CLI + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::read_bytes(out);
  r.err = testutil::read_bytes(err);
  return r;
}

fs::path cli_dir(const std::string& name) {
  auto dir = testutil::scratch_dir("cli_" + name);
  write_image(natural_test_image(32, 32, 3, 1), dir / "x.ppm", ImageFormat::ppm8);
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("degrade writes the measurement and sidecar and prints the resolved config") {
    auto dir = cli_dir("degrade");
    const std::string args = "degrade --in x.ppm --sigma-k 2 --scale 4 --sigma-n 0.0392 --quality 60 --seed 7 --out y.ppm";
    auto r = run_cli(dir, args);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("# seed=7") != std::string::npos);
    CHECK(r.out.find("# sigma_k=2") != std::string::npos);
    auto y = read_image(dir / "y.ppm");
    CHECK(y.height() == 8);
    CHECK(y.width() == 8);
    auto side = read_sidecar(dir / "y.params.txt");
    REQUIRE(side.size() == 1);
    CHECK(side[0].second == DegradationParams{2.0, 4.0, 0.0392, 60.0});
    const auto first = testutil::read_bytes(dir / "y.ppm");
    REQUIRE(run_cli(dir, args).code == 0);
    CHECK(testutil::read_bytes(dir / "y.ppm") == first);
  }

  TEST_CASE("verify-prop1 succeeds with a tiny residual") {
    auto dir = cli_dir("prop1");
    auto r = run_cli(dir, "verify-prop1 --channels 20 --estimators 5 --seed 1");
    CHECK(r.code == 0);
    CHECK(r.out.find("max_residual") != std::string::npos);
  }

  TEST_CASE("metrics writes CSV and JSON summaries") {
    auto dir = cli_dir("metrics");
    fs::create_directories(dir / "clean");
    fs::create_directories(dir / "meas");
    std::ofstream csv(dir / "manifest.csv");
    csv << "name,restored,measurement,reference,proxy,latent_proxy,sigma_k,scale,sigma_n,quality\n";
    for (int i = 0; i < 3; ++i) {
      const std::string n = "c" + std::to_string(i) + ".ppm";
      auto x = natural_test_image(32, 32, 3, 10 + i);
      SeededRng g(i);
      write_image(x, dir / "clean" / n, ImageFormat::ppm8);
      write_image(degrade(x, {1.5, 2.0, 0.02, 70.0}, ChainFlags{}, g), dir / "meas" / n, ImageFormat::ppm8);
      csv << "i" << i << ",clean/" << n << ",meas/" << n << ",clean/" << n << ",clean/" << n << ",,1.5,2,0.02,70\n";
    }
    csv.close();
    auto r = run_cli(dir, "metrics --pairs manifest.csv --which mse,proxmse,proxcmse --seed 3 --out-csv m.csv --out-json m.json");
    REQUIRE(r.code == 0);
    const auto text = testutil::read_bytes(dir / "m.csv");
    CHECK(text.rfind("item,metric,value\n", 0) == 0);
    CHECK(text.find("i2,proxcmse,") != std::string::npos);
    auto j = nlohmann::json::parse(testutil::read_bytes(dir / "m.json"));
    CHECK(j["mse"]["mean"].get<double>() == 0.0);
    CHECK(j["proxcmse"]["count"].get<int>() == 3);
    REQUIRE(run_cli(dir, "metrics --pairs manifest.csv --which mse,proxmse,proxcmse --seed 3 --jobs 4 --out-csv m4.csv --out-json m4.json").code == 0);
    CHECK(testutil::read_bytes(dir / "m4.csv") == text);
  }

  TEST_CASE("validation failures exit 1 with an ERROR prefix") {
    auto dir = cli_dir("errors");
    auto r = run_cli(dir, "degrade --in x.ppm --sigma-k 99 --out y.ppm");
    CHECK(r.code == 1);
    CHECK(r.err.rfind("ERROR:", 0) == 0);
    r = run_cli(dir, "degrade --in missing.ppm --out y.ppm");
    CHECK(r.code == 1);
    CHECK(r.err.find("missing.ppm") != std::string::npos);
    r = run_cli(dir, "degrade --in x.ppm --out y.ppm --bogus-flag 3");
    CHECK(r.code == 1);
    CHECK(r.err.rfind("ERROR:", 0) == 0);
    CHECK(run_cli(dir, "").code == 1);
  }

  TEST_CASE("help documents flags and bounds") {
    auto dir = cli_dir("help");
    auto r = run_cli(dir, "--help");
    CHECK(r.code == 0);
    CHECK(r.out.find("sigma_k") != std::string::npos);
    CHECK(r.out.find("[30, 100]") != std::string::npos);
    r = run_cli(dir, "degrade --help");
    CHECK(r.code == 0);
    CHECK(r.out.find("--resize-back") != std::string::npos);
  }

  TEST_CASE("config files fill options and flags override them") {
    auto dir = cli_dir("config");
    testutil::write_bytes(dir / "c.cfg", "sigma_k=3\nscale=2\nquality=50\n");
    auto r = run_cli(dir, "--config c.cfg degrade --in x.ppm --out y.ppm --scale 4");
    REQUIRE(r.code == 0);
    auto side = read_sidecar(dir / "y.params.txt");
    CHECK(side[0].second.sigma_k == 3.0);
    CHECK(side[0].second.scale == 4.0);
    CHECK(side[0].second.quality == 50.0);
    testutil::write_bytes(dir / "bad.cfg", "sigma_q=3\n");
    CHECK(run_cli(dir, "--config bad.cfg degrade --in x.ppm --out y.ppm").code == 1);
  }

  TEST_CASE("mean output is independent of the job count") {
    auto dir = cli_dir("jobs");
    REQUIRE(run_cli(dir, "mean --in x.ppm --sigma-k 1 --scale 2 --sigma-n 0.03 --quality 70 --mc-samples 16 --seed 4 --jobs 1 --out a.rf32").code == 0);
    REQUIRE(run_cli(dir, "mean --in x.ppm --sigma-k 1 --scale 2 --sigma-n 0.03 --quality 70 --mc-samples 16 --seed 4 --jobs 3 --out b.rf32").code == 0);
    CHECK(testutil::read_bytes(dir / "a.rf32") == testutil::read_bytes(dir / "b.rf32"));
  }

  TEST_CASE("kde fit, sample and estimate dispatch") {
    auto dir = cli_dir("kde");
    SidecarEntries e;
    SeededRng rng(2);
    for (int i = 0; i < 20; ++i) e.push_back({"s" + std::to_string(i), sample_uniform_params(ParamBounds{}, rng)});
    write_sidecar(dir / "p.txt", e);
    REQUIRE(run_cli(dir, "kde-fit --params p.txt --out k.json").code == 0);
    REQUIRE(run_cli(dir, "kde-sample --model k.json --n 7 --out d.txt --seed 3").code == 0);
    CHECK(read_sidecar(dir / "d.txt").size() == 7);
    REQUIRE(run_cli(dir, "degrade --in x.ppm --sigma-k 1.5 --scale 2 --sigma-n 0.03 --quality 70 --out y.ppm").code == 0);
    auto r = run_cli(dir, "estimate --in y.ppm --clean x.ppm --out est.txt");
    REQUIRE(r.code == 0);
    auto est = read_sidecar(dir / "est.txt");
    REQUIRE(est.size() == 1);
    CHECK(est[0].second.scale == doctest::Approx(2.0).epsilon(0.05));
  }
}
