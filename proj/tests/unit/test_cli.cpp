#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cnalab/cli.hpp"
#include "cnalab/model.hpp"

using namespace cnalab;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "cna_lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cnalab_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  unsetenv("CNA_LAB_THREADS");
  setenv("CNA_LAB_DATA", TEST_DATA_DIR, 1);
  CHECK(run({}).code == 1);
  const auto unknown = run({"frobnicate"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("eval") != std::string::npos);
  CHECK(run({"eval", "--bogus"}).code == 1);
  CHECK(run({"eval", "--model", "/nonexistent/model.cnaw"}).code == 1);
  CHECK(run({"eval", "--task", "7D+"}).code == 1);
  CHECK(run({"eval", "--cases", "/nonexistent/cases.json"}).code == 1);
  CHECK(run({"cna", "--prompt", "3+5=", "--intervene-head", "banana"}).code == 1);
  CHECK(run({"cna", "--prompt", "3+5=", "--intervene-head", "99^0"}).code == 1);
  CHECK(run({"cna", "--prompt", "3+5="}).code == 1);
  CHECK(run({"pe-dag", "--prompt", "3+5=", "--intervene-head", "4^1", "--top-k", "0"}).code == 1);
  CHECK(run({"lowest", "--prompt", "3+5=", "--intervene-head", "4^1", "--top-k", "1"}).code == 1);
  CHECK(run({"cna", "--prompt", "3+5=", "--intervene-head", "4^1", "--scope", "3:99"}).code == 1);
  CHECK(run({"eval", "--help"}).code == 0);
}

TEST_CASE("data errors exit with 2") {
  setenv("CNA_LAB_DATA", TEST_DATA_DIR, 1);
  const auto dir = scratch("garbage");
  std::ofstream(dir / "model.cnaw") << "definitely not a container";
  const auto r = run({"eval", "--model", (dir / "model.cnaw").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("model.cnaw") != std::string::npos);
  CHECK(run({"cna", "--prompt", "3 % 5", "--intervene-head", "4^1"}).code == 2);

  std::ofstream(dir / "cases.json") << R"({"cases":[{"prompt":"1+1=","gold":"zebra"}]})";
  CHECK(run({"eval", "--cases", (dir / "cases.json").string()}).code == 2);
  std::ofstream(dir / "empty.json") << R"({"cases":[]})";
  CHECK(run({"eval", "--cases", (dir / "empty.json").string()}).code == 1);
}

TEST_CASE("thread count comes from the flag or the environment") {
  setenv("CNA_LAB_DATA", TEST_DATA_DIR, 1);
  setenv("CNA_LAB_THREADS", "lots", 1);
  CHECK(run({"eval"}).code == 1);
  setenv("CNA_LAB_THREADS", "0", 1);
  CHECK(run({"eval"}).code == 1);
  setenv("CNA_LAB_THREADS", "2", 1);
  const auto env = run({"eval"});
  CHECK(env.code == 0);
  unsetenv("CNA_LAB_THREADS");
  const auto flag = run({"eval", "--jobs", "3"});
  CHECK(flag.code == 0);
  CHECK(flag.out == env.out);
}

TEST_CASE("eval writes json and text reports") {
  setenv("CNA_LAB_DATA", TEST_DATA_DIR, 1);
  const auto dir = scratch("eval");
  const auto r = run({"eval", "--task", "1D+,1D-", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "eval.txt") == r.out);
  const auto j = nlohmann::json::parse(slurp(dir / "eval.json"));
  CHECK(j.at("command") == "eval");
  CHECK(j.at("result").at("all").at("total").get<std::size_t>() > 100);
  CHECK(j.dump().find(dir.string()) == std::string::npos);

  const auto with_adapter = run({"eval", "--adapter", "fixture:3"});
  CHECK(with_adapter.code == 0);
  CHECK(run({"eval", "--adapter", "fixture:99"}).code == 1);
}

TEST_CASE("analysis subcommands run on the fixture") {
  setenv("CNA_LAB_DATA", TEST_DATA_DIR, 1);
  CHECK(run({"cna", "--prompt", "3+5=", "--intervene-head", "4^1", "--top-k", "3"}).code == 0);
  CHECK(run({"cna", "--prompt", "A woman works as a", "--prompt2", "A man works as a", "--target", " nurse",
             "--top-k", "3"})
            .code == 0);
  CHECK(run({"project", "--neuron", "6_241", "--head-transform", "3^1"}).code == 0);
  CHECK(run({"project", "--neuron", "6_99999"}).code == 1);
  CHECK(run({"pe-dag", "--prompt", "3+5=", "--intervene-head", "4^1", "--top-k", "10"}).code == 0);
  CHECK(run({"lowest", "--prompt", "3+5=", "--intervene-head", "4^1", "--top-k", "10,2"}).code == 0);
}

TEST_CASE("prune writes loadable bundles") {
  setenv("CNA_LAB_DATA", TEST_DATA_DIR, 1);
  const auto dir = scratch("prune");
  const auto r = run({"prune", "--adapter", "fixture:2", "--task", "1D+", "--pairs", "3", "--top-k", "5", "--out",
                      dir.string()});
  REQUIRE(r.code == 0);
  const auto pruned = load_bundle(dir / "pruned.cnaw");
  CHECK(pruned.config.n_layers == 8);
  CHECK(fs::exists(dir / "random_pruned.cnaw"));
  CHECK(fs::exists(dir / "prune_spec.json"));
  CHECK(run({"prune", "--task", "1D+"}).code == 1);
}
