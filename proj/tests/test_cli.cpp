// End-to-end checks of the daemx binary: invoked as `test_cli <path-to-daemx>`.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

int failures = 0;

#define REQUIRE(cond, msg)                                                     \
  do {                                                                         \
    if (!(cond)) {                                                             \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << (msg)    \
                << "\n";                                                       \
      ++failures;                                                              \
    }                                                                          \
  } while (0)

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run(const std::string& cmd) {
  const std::string full = cmd + " 2>&1";
  FILE* pipe = popen(full.c_str(), "r");
  if (!pipe) return {-1, "popen failed"};
  std::string out;
  char buf[4096];
  while (std::size_t got = fread(buf, 1, sizeof(buf), pipe)) out.append(buf, got);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: test_cli <daemx-binary>\n";
    return 2;
  }
  const std::string bin = argv[1];
  const fs::path work = fs::temp_directory_path() / "daemx_cli_test";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string out = (work / "run1").string();

  {  // simulate: row count, header, determinism
    const RunResult r1 =
        run(bin + " simulate --model example23 --steps 2000 --seed 7 --out " + out);
    REQUIRE(r1.exit_code == 0, "simulate exit code: " + r1.output);
    REQUIRE(r1.output.find("RUN simulate ok") != std::string::npos, "simulate summary line");
    const std::string csv = slurp(fs::path(out) / "simulation.csv");
    REQUIRE(line_count(csv) == 2002, "2001 rows + header");
    REQUIRE(csv.rfind("t,x1,x2,f2,y_clean,eta,y\n", 0) == 0, "header contract");

    const std::string out2 = (work / "run2").string();
    const RunResult r2 =
        run(bin + " simulate --model example23 --steps 2000 --seed 7 --out " + out2);
    REQUIRE(r2.exit_code == 0, "second simulate");
    REQUIRE(slurp(fs::path(out2) / "simulation.csv") == csv, "determinism: identical files");
  }

  {  // invalid steps
    const RunResult r = run(bin + " simulate --model example23 --steps 1 --out " +
                            (work / "bad").string());
    REQUIRE(r.exit_code != 0, "steps=1 must fail validation");
  }

  {  // estimate without observations
    const RunResult r =
        run(bin + " estimate --model example23 --out " + (work / "empty").string());
    REQUIRE(r.exit_code == 2, "missing observation file yields exit code 2, got " +
                                  std::to_string(r.exit_code));
    REQUIRE(!fs::exists(work / "empty" / "comparison.csv"), "no partial outputs");
  }

  {  // estimate over a small sweep
    const RunResult r = run(bin + " estimate --model example23 --steps 2000 --eps 1e-2,1e-4 " +
                            "--ell 1,0 --out " + out);
    REQUIRE(r.exit_code == 0, "estimate exit code: " + r.output);
    REQUIRE(r.output.find("RUN estimate-optimal ok") != std::string::npos, "optimal ran");
    REQUIRE(r.output.find("RUN estimate-sub-1e-02 ok") != std::string::npos, "sub 1e-2 ran");
    REQUIRE(fs::exists(fs::path(out) / "estimate_opt.csv"), "optimal CSV");
    REQUIRE(fs::exists(fs::path(out) / "estimate_sub_1e-02.csv"), "sub CSV");
    const std::string cmp = slurp(fs::path(out) / "comparison.csv");
    REQUIRE(cmp.rfind("t,xhat_opt,xhat_sub_1e-02,xhat_sub_1e-04,x1_true\n", 0) == 0,
            "comparison header, got: " + cmp.substr(0, 60));
    const std::string ecsv = slurp(fs::path(out) / "estimate_opt.csv");
    REQUIRE(ecsv.rfind("t,xhat,K,sigma_hat\n", 0) == 0, "estimate csv header");
  }

  {  // ell = 0 keeps sigma at zero
    const RunResult r = run(bin + " estimate --model example23 --steps 2000 --eps 1e-3 " +
                            "--ell 0,0 --out " + out);
    REQUIRE(r.exit_code == 0, "estimate ell=0");
    REQUIRE(r.output.find("sigma=0") != std::string::npos, "zero sigma reported: " + r.output);
  }

  {  // observability verdicts
    const RunResult r = run(bin + " observability --model example23 --steps 1000 --ell 1,0 " +
                            "--out " + out);
    REQUIRE(r.exit_code == 0, "observability exit");
    REQUIRE(r.output.find("verdict=observable") != std::string::npos,
            "observable verdict: " + r.output);
    REQUIRE(fs::exists(fs::path(out) / "observability.csv"), "sweep table written");
    const std::string v = slurp(fs::path(out) / "observability_verdict.txt");
    REQUIRE(v.find("verdict: observable") != std::string::npos, "verdict file");

    const RunResult rb = run(bin + " observability --model example23-blind --steps 2000 " +
                             "--eps 1e-2,1e-3,1e-4,1e-5,1e-6 --ell 1,0 --out " + out);
    REQUIRE(rb.exit_code == 0, "blind observability exit: " + rb.output);
    REQUIRE(rb.output.find("verdict=unobservable") != std::string::npos,
            "unobservable verdict: " + rb.output);
  }

  {  // DAEMX_OUT overrides --out
    const std::string envout = (work / "envout").string();
    const RunResult r = run("DAEMX_OUT=" + envout + " " + bin +
                            " simulate --model example23 --steps 200 --seed 1 --out " + out);
    REQUIRE(r.exit_code == 0, "env override run");
    REQUIRE(fs::exists(fs::path(envout) / "simulation.csv"), "output went to DAEMX_OUT");
  }

  {  // config-file models: simulate (F = I regression) and estimate on top of it
    const fs::path cfg = work / "kalman.json";
    {
      std::ofstream f(cfg);
      f << R"({"m": 1, "n": 1, "p": 1,
               "grid": {"t0": 0.0, "t_end": 1.0, "n_steps": 500},
               "F": [[1]], "C": {"inline": [[-1]]}, "H": {"inline": [[1]]},
               "Q": {"inline": [[1]]}, "R": {"inline": [[1]]}})";
    }
    const std::string cfgout = (work / "cfgout").string();
    const RunResult rs = run(bin + " simulate --config " + cfg.string() + " --seed 3 --out " +
                             cfgout);
    REQUIRE(rs.exit_code == 0, "config simulate: " + rs.output);
    const RunResult re = run(bin + " estimate --config " + cfg.string() +
                             " --eps 1e-3 --ell 1 --out " + cfgout);
    REQUIRE(re.exit_code == 0, "config estimate: " + re.output);
    REQUIRE(re.output.find("RUN estimate-optimal ok") != std::string::npos,
            "optimal on config model: " + re.output);
  }

  {  // selftest
    const RunResult r = run(bin + " selftest");
    REQUIRE(r.exit_code == 0, "selftest exit: " + r.output);
    REQUIRE(r.output.find("PASS oracle-equivalence") != std::string::npos, "selftest output");
  }

  if (failures == 0) {
    std::cout << "test_cli: all checks passed\n";
    return 0;
  }
  std::cerr << "test_cli: " << failures << " failures\n";
  return 1;
}
