#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("sfo_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int bench(const std::string& args) {
  const std::string cmd = std::string("\"") + BENCH_EXE + "\" " + args + " >>\"" +
                          (workdir() / "log.txt").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config(const char* name) { return std::string("\"") + CONFIG_DIR + "/" + name + "\""; }

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = workdir() / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(bench("") == 1);
  CHECK(bench("frobnicate") == 1);
  CHECK(bench("run") == 1);
  CHECK(bench("overhead --repeats 0 --quiet") == 1);
  CHECK(bench("overhead --m-list 10,abc --quiet") == 1);
  CHECK(bench("--help") == 0);
}

TEST_CASE("bad configs exit with 1") {
  CHECK(bench("run /nonexistent/config.json --quiet") == 1);
  const fs::path bad = write_file("bad.json", R"({"schema_version": 1, "optimizers": ["sfo"], "extra": true})");
  CHECK(bench("run \"" + bad.string() + "\" --quiet") == 1);
  const fs::path broken = write_file("broken.json", "{ not json");
  CHECK(bench("gradcheck \"" + broken.string() + "\" --quiet") == 1);
  CHECK(bench("run " + config("quadratic.json") + " --passes -1 --quiet") == 1);
}

TEST_CASE("gradcheck passes on the shipped problems") {
  CHECK(bench("gradcheck " + config("logistic.json") + " --points 20") == 0);
  CHECK(bench("gradcheck " + config("quadratic.json") + " --points 20") == 0);
  // An impossible tolerance is a runtime failure.
  CHECK(bench("gradcheck " + config("logistic.json") + " --points 5 --tolerance 0 --quiet") == 2);
}

TEST_CASE("run then plotdata") {
  const fs::path out = workdir() / "quad";
  CHECK(bench("run " + config("quadratic.json") + " --passes 2 --out \"" + out.string() + "\"") == 0);
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "config.json"));
  CHECK(fs::exists(out / "traces" / "sfo-0.csv"));
  CHECK(bench("plotdata \"" + out.string() + "\" --quiet") == 0);
  CHECK(fs::exists(out / "plotdata.csv"));

  // The persisted config reproduces the run.
  const fs::path again = workdir() / "quad_again";
  CHECK(bench("run \"" + (out / "config.json").string() + "\" --out \"" + again.string() + "\" --quiet") == 0);
  CHECK(fs::exists(again / "traces" / "sfo-0.csv"));

  fs::remove(out / "traces" / "sfo-0.csv");
  CHECK(bench("plotdata \"" + out.string() + "\" --quiet") == 2);
  CHECK(bench("plotdata \"" + (workdir() / "nowhere").string() + "\" --quiet") == 2);
}

TEST_CASE("unwritable output is a runtime failure") {
  const fs::path blocker = write_file("blocker", "x");
  CHECK(bench("run " + config("quadratic.json") + " --passes 1 --quiet --out \"" + (blocker / "sub").string() + "\"") == 2);
}

TEST_CASE("overhead on tiny sizes") {
  const fs::path out = workdir() / "overhead";
  CHECK(bench("overhead --m-list 20,40 --n-list 3 --fixed-n 3 --fixed-m 20 --repeats 1 --out \"" + out.string() + "\"") == 0);
  CHECK(fs::exists(out / "overhead.csv"));
  CHECK(fs::exists(out / "overhead_fit.json"));
}
