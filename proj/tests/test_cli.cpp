#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "fisherflow/cli.hpp"
#include "fisherflow/config.hpp"
#include "fisherflow/errors.hpp"

namespace fisherflow {
namespace {

namespace fs = std::filesystem;

const std::string kHarmonic = std::string(FISHERFLOW_CONFIG_DIR) + "/harmonic.ini";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("fisherflow_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  int invoke(const std::string& sub, const std::string& dir, std::vector<std::string> overrides = {},
             bool with_config = true) {
    CliRequest r;
    r.subcommand = sub;
    if (with_config) r.config_path = kHarmonic;
    r.overrides = std::move(overrides);
    r.out_dir = (root_ / dir).string();
    out_.str("");
    err_.str("");
    return run(r, out_, err_);
  }

  std::string slurp(const std::string& rel) const {
    std::ifstream f(root_ / rel, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  }

  nlohmann::json manifest(const std::string& dir) const {
    return nlohmann::json::parse(slurp(dir + "/manifest.json"));
  }

  fs::path root_;
  std::ostringstream out_, err_;
};

const std::vector<std::string> kShort = {"dynamics.t_end=0.5", "grid.n=512"};

TEST_F(CliTest, CheckOnTheShippedConfigPasses) {
  EXPECT_EQ(invoke("check", "check"), kExitOk) << err_.str();
  const std::string text = out_.str();
  EXPECT_NE(text.find("PASS energy_monotone"), std::string::npos);
  EXPECT_NE(text.find("PASS ground_state_eigenvalue"), std::string::npos);
  EXPECT_EQ(text.find("FAIL"), std::string::npos) << text;
  EXPECT_TRUE(fs::exists(root_ / "check/check.csv"));
}

TEST_F(CliTest, ValidationErrorsExitWithOneAndNameThePrecondition) {
  EXPECT_EQ(invoke("evolve", "a", {"params.sigma=0"}), kExitValidation);
  EXPECT_NE(err_.str().find("sigma > 0"), std::string::npos) << err_.str();
  EXPECT_EQ(invoke("evolve", "b", {"grid.bogus=1"}), kExitValidation);
  EXPECT_NE(err_.str().find("bogus"), std::string::npos);
  EXPECT_EQ(invoke("evolve", "c", {"no_equals_sign"}), kExitValidation);
  EXPECT_EQ(invoke("frobnicate", "d"), kExitValidation);
  // 0.1 / 0.03 is not an integer stride
  EXPECT_EQ(invoke("jko", "e", {"proximal.reference_dt=0.03"}), kExitValidation);
  EXPECT_NE(err_.str().find("reference_dt"), std::string::npos);
}

TEST_F(CliTest, NumericalFailureKeepsPartialOutputs) {
  EXPECT_EQ(invoke("evolve", "f", {"dynamics.dt=1", "grid.n=512"}), kExitNumerical);
  EXPECT_NE(err_.str().find("dt too large"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "f/trace.csv"));
  EXPECT_TRUE(fs::exists(root_ / "f/config.ini"));
  const auto m = manifest("f");
  EXPECT_EQ(m["status"], "failed");
  EXPECT_EQ(m["exit_code"], kExitNumerical);
}

TEST_F(CliTest, ManifestEchoesTheExactConfig) {
  ASSERT_EQ(invoke("evolve", "g", kShort), kExitOk) << err_.str();
  const auto m = manifest("g");
  EXPECT_EQ(m["tool"], "fisherflow");
  EXPECT_EQ(m["subcommand"], "evolve");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["config"]["grid"]["n"], "512");
  EXPECT_TRUE(m.contains("wall_time_seconds"));
  EXPECT_TRUE(m.contains("version"));
  const RunConfig echoed = RunConfig::from_file((root_ / "g/config.ini").string());
  EXPECT_EQ(echoed.to_ini(), m["config_ini"].get<std::string>());
  EXPECT_EQ(echoed.raw("dynamics", "t_end"), "0.5");
  for (const auto& f : m["files"]) EXPECT_TRUE(fs::exists(root_ / "g" / f.get<std::string>())) << f;
  const std::string trace = slurp("g/trace.csv");
  EXPECT_EQ(trace.rfind("# schema=dynamics_trace", 0), 0u);
  EXPECT_NE(trace.find("t,F,I,H,energy,residual_l2p,lambda,m2,boundary_mass\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "g/trace_energy.dat"));
}

TEST_F(CliTest, RunsAreByteIdentical) {
  ASSERT_EQ(invoke("evolve", "r1", kShort), kExitOk);
  ASSERT_EQ(invoke("evolve", "r2", kShort), kExitOk);
  EXPECT_EQ(slurp("r1/trace.csv"), slurp("r2/trace.csv"));
  EXPECT_EQ(slurp("r1/final_density.csv"), slurp("r2/final_density.csv"));
}

TEST_F(CliTest, ParticleOutputsDoNotDependOnTheThreadCount) {
  const std::vector<std::string> small = {"grid.n=512", "particles.N=1000", "particles.M=500",
                                          "particles.t_end=0.2", "particles.barpsi_points=21"};
  ::setenv("FISHERFLOW_THREADS", "1", 1);
  ASSERT_EQ(invoke("sample", "s1", small), kExitOk) << err_.str();
  ::setenv("FISHERFLOW_THREADS", "2", 1);
  ASSERT_EQ(invoke("sample", "s2", small), kExitOk) << err_.str();
  ::setenv("FISHERFLOW_THREADS", "zero", 1);
  EXPECT_EQ(invoke("sample", "s3", small), kExitValidation);
  ::unsetenv("FISHERFLOW_THREADS");
  for (const char* f : {"particles.csv", "measure.csv", "comparison.csv"}) {
    EXPECT_EQ(slurp(std::string("s1/") + f), slurp(std::string("s2/") + f)) << f;
  }
  EXPECT_EQ(manifest("s1")["threads"], 1);
  EXPECT_EQ(manifest("s2")["threads"], 2);
}

TEST_F(CliTest, SeedFlagOverridesTheConfig) {
  const std::vector<std::string> small = {"grid.n=512", "particles.N=500", "particles.M=200",
                                          "particles.t_end=0.1", "particles.barpsi_points=11"};
  CliRequest r;
  r.subcommand = "sample";
  r.config_path = kHarmonic;
  r.overrides = small;
  r.seed = 99;
  r.out_dir = (root_ / "seed").string();
  ASSERT_EQ(run(r, out_, err_), kExitOk);
  EXPECT_EQ(manifest("seed")["seed"], 99);
  EXPECT_EQ(manifest("seed")["config"]["particles"]["seed"], "99");
}

TEST_F(CliTest, EvolveAndGroundStateAgree) {
  const std::vector<std::string> o = {"grid.n=512", "dynamics.t_end=100"};
  ASSERT_EQ(invoke("evolve", "ev", o), kExitOk);
  ASSERT_EQ(invoke("ground-state", "gs", o), kExitOk);
  EXPECT_NE(out_.str().find("Schrodinger eigenvalue"), std::string::npos);
  const auto a = manifest("ev")["summary"];
  const auto b = manifest("gs")["summary"];
  EXPECT_EQ(a["converged"], 1.0);
  EXPECT_NEAR(a["energy"].get<double>(), b["energy_star"].get<double>(), 1e-9);
  EXPECT_NEAR(b["relative_difference"].get<double>(), 0.0, 1e-8);
}

TEST_F(CliTest, JkoAndSweepWriteTheirTables) {
  ASSERT_EQ(invoke("jko", "jko", {"grid.n=512", "proximal.T=0.4", "proximal.h=0.2",
                                  "proximal.reference_dt=0.001"}),
            kExitOk)
      << err_.str();
  const std::string prox = slurp("jko/proximal.csv");
  EXPECT_NE(prox.find("i,t,F,I,H,energy,lambda_raw,lambda,inner_steps\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "jko/comparison.csv"));
  ASSERT_EQ(invoke("sweep", "sw", {"grid.n=512", "sweep.kind=both", "sweep.sigmas=1 0.5",
                                   "sweep.hs=0.2 0.1", "proximal.T=0.4", "proximal.reference_dt=0.001"}),
            kExitOk)
      << err_.str();
  for (const char* f : {"sigma_sweep.csv", "sigma_sweep.dat", "h_study.csv", "h_0/proximal.csv",
                        "h_1/comparison.csv"}) {
    EXPECT_TRUE(fs::exists(root_ / "sw" / f)) << f;
  }
}

TEST_F(CliTest, DefaultsRunWithoutAConfigFile) {
  EXPECT_EQ(invoke("evolve", "def", kShort, false), kExitOk) << err_.str();
}

TEST(Config, RoundTripAndOverrides) {
  RunConfig c;
  c.apply_override("params.sigma=0.5");
  c.apply_override("model.perturbation=bump 0.3 0.5 1");
  const RunConfig back = RunConfig::from_string(c.to_ini());
  EXPECT_EQ(back.to_ini(), c.to_ini());
  EXPECT_DOUBLE_EQ(back.params().sigma, 0.5);
  EXPECT_EQ(back.model().perturbation().kind, PerturbationSpec::Kind::kBump);
  EXPECT_THROW(c.apply_override("params.sigma"), ValidationError);
  EXPECT_THROW(c.set("params", "nope", "1"), ValidationError);
  EXPECT_THROW(RunConfig::from_file("/nonexistent/config.ini"), ValidationError);
  EXPECT_THROW(RunConfig::from_string("[grid]\nn = 2.5\n").validate(), ValidationError);
  EXPECT_THROW(RunConfig::from_string("[model]\nkernel = quadratic 1\nvariant = interaction\n").validate(),
               ValidationError);
}

TEST(Config, SpecParsers) {
  const QuadraticSpec q = parse_quadratic("quadratic 2 -1");
  EXPECT_DOUBLE_EQ(q.a, 2.0);
  EXPECT_DOUBLE_EQ(q.center, -1.0);
  EXPECT_THROW(parse_quadratic("cubic 1"), ValidationError);
  EXPECT_EQ(parse_perturbation("cosine 0.1 2").kind, PerturbationSpec::Kind::kCosine);
  EXPECT_THROW(parse_perturbation("bump 1 0 0"), ValidationError);
  EXPECT_EQ(parse_kernel("gaussian 1 0.5").kind, KernelSpec::Kind::kGaussian);
  EXPECT_THROW(parse_kernel("gaussian 1"), ValidationError);
}

TEST(CliMain, ArgumentErrorsMapToValidation) {
  const char* bad[] = {"fisherflow", "evolve", "--no-such-flag"};
  EXPECT_EQ(cli_main(3, const_cast<char**>(bad)), kExitValidation);
  const char* none[] = {"fisherflow"};
  EXPECT_EQ(cli_main(1, const_cast<char**>(none)), kExitValidation);
  const char* missing[] = {"fisherflow", "check", "--config", "/nonexistent.ini"};
  EXPECT_EQ(cli_main(4, const_cast<char**>(missing)), kExitValidation);
}

}  // namespace
}  // namespace fisherflow
