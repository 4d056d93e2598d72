#include "bglmm/tabular.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace bglmm;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "bglmm_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

/// Runs the CLI with `args`, output captured to files; returns the exit status.
int run(const std::string& args) {
  const std::string cmd = std::string("\"") + BGLMM_CLI_PATH + "\" " + args + " > \"" +
                          (work_dir() / "stdout.txt").string() + "\" 2> \"" + (work_dir() / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

const fs::path& data_file() {
  static const fs::path path = [] {
    std::mt19937_64 rng(8);
    const std::size_t n = 80;
    const auto x = testing::normal_values(rng, n, 0.0, 1.0);
    const auto z = testing::normal_values(rng, n, 5.0, 2.0);
    const auto e = testing::normal_values(rng, n, 0.0, 0.7);
    const auto g = testing::categorical_values(rng, n, 5, "G");
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 + 0.8 * x[i] - 0.2 * z[i] + e[i];
    DataTable t;
    t.add_column(DataTable::numeric_column("y", y));
    t.add_column(DataTable::numeric_column("x", x));
    t.add_column(DataTable::numeric_column("z", z));
    t.add_column(DataTable::categorical_column("g", g));
    const auto p = work_dir() / "data.csv";
    write_csv(t, p);
    return p;
  }();
  return path;
}

std::string fit_args(const fs::path& out) {
  return "fit --formula 'y ~ x + z + (1|g)' --data \"" + data_file().string() +
         "\" --draws 200 --tune 200 --chains 2 --seed 17 --out \"" + out.string() + "\"";
}

}  // namespace

TEST_CASE("fit writes every artifact and reruns are byte identical") {
  const auto a = work_dir() / "fit_a";
  const auto b = work_dir() / "fit_b";
  REQUIRE(run(fit_args(a)) == 0);
  REQUIRE(run(fit_args(b)) == 0);
  for (const char* name : {"model.txt", "draws.csv", "summary.csv", "summary.txt", "sampler_stats.csv",
                           "rank_histograms.csv", "manifest.json", "training_data.csv"}) {
    CAPTURE(name);
    CHECK(fs::exists(a / name));
    CHECK(slurp(a / name) == slurp(b / name));
  }
  CHECK(line_count(a / "draws.csv") == 1 + 2 * 200);
  CHECK(line_count(a / "sampler_stats.csv") == 1 + 2 * 200);
  // Intercept, x, z, group sd, 5 group effects, y_sigma.
  CHECK(line_count(a / "summary.csv") == 1 + 10);
  CHECK(slurp(a / "model.txt").find("Family: gaussian") != std::string::npos);

  const auto c = work_dir() / "fit_c";
  REQUIRE(run("fit --formula 'y ~ x + z + (1|g)' --data \"" + data_file().string() +
              "\" --draws 200 --tune 200 --chains 2 --seed 18 --out \"" + c.string() + "\"") == 0);
  CHECK(slurp(a / "draws.csv") != slurp(c / "draws.csv"));
}

TEST_CASE("predict and pcorr from a saved fit") {
  const auto fit = work_dir() / "fit_p";
  REQUIRE(run(fit_args(fit)) == 0);

  REQUIRE(run("predict --fit \"" + fit.string() + "\" --kind mean") == 0);
  CHECK(line_count(fit / "predictions_mean.csv") == 1 + 2 * 200 * 80);
  CHECK(line_count(fit / "predictions_mean_summary.csv") == 1 + 80);
  CHECK(slurp(fit / "predictions_mean.csv").rfind("chain,draw,row,y_mean\n", 0) == 0);

  std::ofstream(work_dir() / "new.csv") << "x,z,g\n0.5,4,G1\n-1,6,G3\n";
  const auto out = work_dir() / "pred_new";
  REQUIRE(run("predict --fit \"" + fit.string() + "\" --data \"" + (work_dir() / "new.csv").string() +
              "\" --kind pps --ndraws 50 --seed 3 --out \"" + out.string() + "\"") == 0);
  CHECK(line_count(out / "predictions_pps.csv") == 1 + 2 * 50 * 2);
  const std::string first = slurp(out / "predictions_pps.csv");
  REQUIRE(run("predict --fit \"" + fit.string() + "\" --data \"" + (work_dir() / "new.csv").string() +
              "\" --kind pps --ndraws 50 --seed 3 --out \"" + out.string() + "\"") == 0);
  CHECK(slurp(out / "predictions_pps.csv") == first);

  std::ofstream(work_dir() / "unseen.csv") << "x,z,g\n0.5,4,G99\n";
  CHECK(run("predict --fit \"" + fit.string() + "\" --data \"" + (work_dir() / "unseen.csv").string() + "\"") == 1);
  CHECK(slurp(work_dir() / "stderr.txt").find("G99") != std::string::npos);

  REQUIRE(run("pcorr --fit \"" + fit.string() + "\" --predictors x,z") == 0);
  CHECK(line_count(fit / "pcorr_draws.csv") == 1 + 2 * 200);
  CHECK(slurp(fit / "pcorr_draws.csv").rfind("chain,draw,x,z\n", 0) == 0);
  CHECK(line_count(fit / "pcorr_summary.csv") == 1 + 4);
  CHECK(run("pcorr --fit \"" + fit.string() + "\" --predictors nothere") == 1);
}

TEST_CASE("prior sampling") {
  const auto out = work_dir() / "prior";
  REQUIRE(run("prior-sample --formula 'y ~ x + (1|g)' --data \"" + data_file().string() + "\" --n 30 --seed 2 --out \"" +
              out.string() + "\"") == 0);
  const std::string text = slurp(out / "prior_draws.csv");
  CHECK(line_count(out / "prior_draws.csv") == 31);
  CHECK(text.rfind("draw,", 0) == 0);
  CHECK(slurp(work_dir() / "stdout.txt").find("Priors:") != std::string::npos);
}

TEST_CASE("exit codes") {
  // Usage errors.
  CHECK(run("") == 2);
  CHECK(run("fit --data \"" + data_file().string() + "\"") == 2);
  CHECK(run("fit --formula 'y ~ x' --data \"" + data_file().string() + "\" --bogus 1") == 2);
  CHECK(run("fit --formula 'y ~ x' --data /no/such/file.csv") == 2);
  CHECK(run("predict --fit \"" + work_dir().string() + "\" --kind median") == 2);
  // Model and data errors.
  CHECK(run("fit --formula 'y ~ (x' --data \"" + data_file().string() + "\" --out \"" +
            (work_dir() / "bad").string() + "\"") == 1);
  CHECK(run("fit --formula 'y ~ nothere' --data \"" + data_file().string() + "\" --out \"" +
            (work_dir() / "bad").string() + "\"") == 1);
  CHECK(run("fit --formula 'y ~ x' --family poisson --link logit --data \"" + data_file().string() + "\" --out \"" +
            (work_dir() / "bad").string() + "\"") == 1);
  CHECK(slurp(work_dir() / "stderr.txt").rfind("error: ", 0) == 0);
  CHECK(run("predict --fit \"" + work_dir().string() + "\"") == 1);
  CHECK(run("--help") == 0);
}
