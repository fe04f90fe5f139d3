#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <sys/wait.h>

#include "hstn/fileio.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = HSTN_CLI_PATH;

int run(const std::string& args) {
  const int status = std::system((kCli + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hstn_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return hstn::read_file_bytes(p.string()); }

}  // namespace

TEST(Cli, HelpAndUsageExitCodes) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("gen-data --no-such-flag"), 2);
  EXPECT_EQ(run("gen-data --kind nonsense --out /tmp/hstn_cli_x"), 2);
  EXPECT_EQ(run("train --model cnn --task align --data /nonexistent"), 2);
}

TEST(Cli, MissingInputFileIsRuntimeFailure) {
  const auto d = scratch("missing");
  EXPECT_EQ(run("align /nonexistent/a.pgm /nonexistent/b.pgm --out " + d.string()), 1);
}

TEST(Cli, ConfigFileIsOverriddenByFlags) {
  const auto d = scratch("config");
  hstn::write_file_atomic((d / "run.cfg").string(), "kind = digits\nn = 4\nseed = 3\n");
  ASSERT_EQ(run("gen-data --config " + (d / "run.cfg").string() + " --n 6 --out " + (d / "out").string()), 0);
  const auto manifest = slurp(d / "out" / "manifest.txt");
  EXPECT_NE(manifest.find("n = 6\n"), std::string::npos);
  EXPECT_NE(manifest.find("seed = 3\n"), std::string::npos);
  hstn::write_file_atomic((d / "bad.cfg").string(), "colour = red\n");
  EXPECT_EQ(run("gen-data --config " + (d / "bad.cfg").string()), 2);
}

TEST(Cli, GenDataIsDeterministic) {
  const auto d = scratch("gen");
  std::map<std::string, std::string> first;
  for (int k = 0; k < 2; ++k) {
    ASSERT_EQ(run("gen-data --kind pairs --n 3 --pair-size 16 --seed 5 --out " + (d / "out").string()), 0);
    for (const auto& e : fs::directory_iterator(d / "out")) {
      const auto name = e.path().filename().string();
      if (k == 0)
        first[name] = slurp(e.path());
      else
        EXPECT_EQ(first.at(name), slurp(e.path())) << name;
    }
  }
  EXPECT_EQ(first.size(), 11u);  // 9 pair files, pairs_meta.tsv, manifest.txt
}

TEST(Cli, AlignWritesArtifacts) {
  const auto d = scratch("align");
  ASSERT_EQ(run("gen-data --kind pairs --n 1 --pair-size 16 --out " + (d / "p").string()), 0);
  const auto p = (d / "p").string();
  ASSERT_EQ(run("align " + p + "/pair_0000_src.pgm " + p + "/pair_0000_tgt.pgm --gt " + p +
                "/pair_0000_gt.flo --flow-steps 50 --affine-steps 50 --crop-margin 2 --out " + (d / "o").string()),
            0);
  EXPECT_TRUE(fs::exists(d / "o" / "warped.pgm"));
  EXPECT_TRUE(fs::exists(d / "o" / "field.flo"));
  EXPECT_TRUE(fs::exists(d / "o" / "align.manifest"));
}

TEST(Cli, GradcheckReportsCorruption) {
  EXPECT_EQ(run("gradcheck --module affine"), 0);
  EXPECT_EQ(run("gradcheck --module affine --corrupt to_motion_field"), 1);
}
