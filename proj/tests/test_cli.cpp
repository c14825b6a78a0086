#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#ifndef TCK_CLI_PATH
#error "TCK_CLI_PATH must be defined"
#endif

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(TCK_CLI_PATH) + " " + args + " > cli_stdout.txt 2> cli_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("toy, inject, train, evaluate and embed chain together") {
  REQUIRE(run("toy --out cli_toy.mts --n 40 --v 2 --t 12 --seed 3") == 0);
  REQUIRE(run("inject --data cli_toy.mts --rho 0.3 --seed 5 --out cli_inj.mts "
              "--report cli_rep.txt") == 0);
  CHECK(slurp("cli_rep.txt").find("missing_rate") != std::string::npos);

  REQUIRE(run("train --data cli_inj.mts --q 2 --ic-min 2 --ic-max 2 --seed 7 "
              "--model-out cli_model.bin --gram-out cli_gram.txt") == 0);
  CHECK(slurp("cli_gram.txt").rfind("#gram kind=in", 0) == 0);
  CHECK(slurp("cli_stderr.txt").find("successful base models") != std::string::npos);

  REQUIRE(run("evaluate --data cli_inj.mts --q 2 --ic-min 2 --ic-max 2 --seed 7 --folds 2 "
              "--k-grid 1,3 --d 2 --report-out cli_eval.csv") == 0);
  CHECK(slurp("cli_eval.csv").find("accuracy") != std::string::npos);

  REQUIRE(run("embed --model cli_model.bin --data cli_inj.mts --out cli_embed.csv --d 2") == 0);
  CHECK(slurp("cli_embed.csv").rfind("id,dim1,dim2", 0) == 0);
  REQUIRE(run("embed --model cli_model.bin --data cli_inj.mts --out cli_embed.svg "
              "--format svg --d 2") == 0);
  CHECK(slurp("cli_embed.svg").find("<svg") != std::string::npos);
}

TEST_CASE("ingest bins a long-format event file") {
  {
    std::ofstream out("cli_events.csv");
    out << "sample_id,timestamp,variable,value\n";
    out << "a,0.5,hr,60\na,1.5,hr,70\nb,2.5,hr,55\nb,9.0,hr,1\n";
  }
  REQUIRE(run("ingest --events cli_events.csv --bins 4 --horizon 8 --out cli_ing.mts") == 0);
  CHECK(slurp("cli_stdout.txt").find("overall missing rate") != std::string::npos);
  CHECK(slurp("cli_stderr.txt").find("dropped 1 events") != std::string::npos);
  CHECK(slurp("cli_ing.mts").rfind("#mts N=2 V=1 T=4", 0) == 0);
}

TEST_CASE("config file values apply and flags override them") {
  {
    std::ofstream out("cli_cfg.ini");
    out << "# ensemble settings\nq = 2\nic-min = 2\nic-max = 2\nseed = 7\n";
  }
  REQUIRE(run("train --data cli_inj.mts --config cli_cfg.ini --gram-out cli_gram_cfg.txt") == 0);
  CHECK(slurp("cli_gram_cfg.txt") == slurp("cli_gram.txt"));
  REQUIRE(run("train --data cli_inj.mts --config cli_cfg.ini --ic-max 3 "
              "--gram-out cli_gram_cfg2.txt") == 0);
  CHECK(slurp("cli_gram_cfg2.txt") != slurp("cli_gram.txt"));
}

TEST_CASE("error paths use the documented exit codes") {
  CHECK(run("train --data does_not_exist.mts") == 1);
  {
    std::ofstream out("cli_bad.ini");
    out << "q = 2\nnot-a-key = 1\n";
  }
  CHECK(run("train --data cli_inj.mts --config cli_bad.ini") == 1);
  CHECK(run("inject --data cli_toy.mts --rho 0.99 --seed 1 --out cli_nope.mts") == 2);
  CHECK(slurp("cli_stderr.txt").find("maximum achievable") != std::string::npos);
  std::ifstream nope("cli_nope.mts");
  CHECK_FALSE(nope.good());  // no partial artifact on failure
}

TEST_CASE("gram output is identical across worker counts") {
  REQUIRE(run("train --data cli_inj.mts --q 2 --ic-min 2 --ic-max 3 --seed 11 --workers 1 "
              "--gram-out cli_gram_w1.txt") == 0);
  REQUIRE(run("train --data cli_inj.mts --q 2 --ic-min 2 --ic-max 3 --seed 11 --workers 4 "
              "--gram-out cli_gram_w4.txt") == 0);
  CHECK(slurp("cli_gram_w1.txt") == slurp("cli_gram_w4.txt"));
}
