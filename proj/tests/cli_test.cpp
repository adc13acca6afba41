#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#ifndef MSP_CLI_PATH
#error "MSP_CLI_PATH must point at the built binary"
#endif

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MSP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const char* kTinyData = "cli_test_data.jsonl";
const char* kTinyGen = "--profile multi1to4 --seed 3 --n-train 48 --n-valid 16 --n-test 16";

void ensure_dataset() {
  static bool done = false;
  if (done) return;
  REQUIRE(run_cli(std::string("gen-data ") + kTinyGen + " --out " + kTinyData) == 0);
  done = true;
}

}  // namespace

TEST_CASE("help exits cleanly, unknown flags do not") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("gen-data --help") == 0);
  CHECK(run_cli("--no-such-flag") != 0);
  CHECK(run_cli("gen-data") != 0);  // --out is required
  CHECK(run_cli("frobnicate") != 0);
}

TEST_CASE("gen-data is byte-deterministic") {
  ensure_dataset();
  REQUIRE(run_cli(std::string("gen-data ") + kTinyGen + " --out cli_test_data2.jsonl") == 0);
  CHECK(file_bytes(kTinyData) == file_bytes("cli_test_data2.jsonl"));
  std::remove("cli_test_data2.jsonl");
}

TEST_CASE("missing and malformed data files exit with the data error code") {
  CHECK(run_cli("train --data cli_test_nope.jsonl --epochs 1 --out cli_test_run") == 2);
  {
    std::ofstream out("cli_test_garbled.jsonl");
    out << "{\"version\": 999}\n";
  }
  CHECK(run_cli("train --data cli_test_garbled.jsonl --epochs 1 --out cli_test_run") == 2);
  std::remove("cli_test_garbled.jsonl");
}

TEST_CASE("train, eval, entropy pipeline round-trips") {
  ensure_dataset();
  REQUIRE(run_cli(std::string("train --data ") + kTinyData +
                  " --loss multiset --epochs 1 --batch 16 --seed 4 --out cli_test_run") == 0);
  CHECK(file_bytes("cli_test_run.checkpoint.json").size() > 0);
  CHECK(file_bytes("cli_test_run.record.json").size() > 0);

  REQUIRE(run_cli(std::string("eval --data ") + kTinyData +
                  " --checkpoint cli_test_run.checkpoint.json --split test"
                  " --out cli_test_eval.csv") == 0);
  const std::string eval_csv = file_bytes("cli_test_eval.csv");
  CHECK(eval_csv.find("# config:") == 0);  // artifacts echo their config
  CHECK(eval_csv.find("example_id,em,f1,pred_counts,target_counts") != std::string::npos);

  REQUIRE(run_cli(std::string("entropy --data ") + kTinyData +
                  " --oracle --steps 4 --out cli_test_entropy.csv") == 0);
  CHECK(file_bytes("cli_test_entropy.csv").find("arm,step,entropy_mean,entropy_std") !=
        std::string::npos);

  REQUIRE(run_cli(std::string("entropy --data ") + kTinyData +
                  " --checkpoint cli_test_run.checkpoint.json --steps 4"
                  " --out cli_test_entropy2.csv") == 0);

  // re-training with the same seed reproduces the record byte for byte
  REQUIRE(run_cli(std::string("train --data ") + kTinyData +
                  " --loss multiset --epochs 1 --batch 16 --seed 4 --out cli_test_run2") == 0);
  CHECK(file_bytes("cli_test_run.record.json") == file_bytes("cli_test_run2.record.json"));

  for (const char* f :
       {"cli_test_run.checkpoint.json", "cli_test_run.record.json",
        "cli_test_run2.checkpoint.json", "cli_test_run2.record.json", "cli_test_eval.csv",
        "cli_test_entropy.csv", "cli_test_entropy2.csv"})
    std::remove(f);
}

TEST_CASE("compare runs a reduced experiment and writes the summary") {
  CHECK(run_cli("compare --exp exp2_strategies --seeds 1,2 --epochs 1") != 0);  // needs >= 5

  REQUIRE(run_cli("compare --exp exp1_rank --seeds 1 --epochs 1"
                  " --profile multi1to4 --out cli_test_cmp") == 0);
  const std::string csv = file_bytes("cli_test_cmp.csv");
  CHECK(csv.find("# config:") == 0);
  CHECK(csv.find("seq_random") != std::string::npos);
  CHECK(csv.find("seq_spatial") != std::string::npos);
  CHECK(csv.find("seq_area") != std::string::npos);
  std::remove("cli_test_cmp.csv");
}

TEST_CASE("final cleanup") { std::remove(kTinyData); }
