#include <aap/io.hpp>
#include <aap/report.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace aap;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  json j() const { return json::parse(out); }
};

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("aap_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliResult run(const std::string& args) const {
    const std::string out = path("stdout.txt");
    const std::string cmd = std::string(AAP_CLI_PATH) + " " + args + " > " + out + " 2> " + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
  }

  fs::path dir_;
};

} // namespace

TEST_F(Cli, GenTemplateDeterministic) {
  ASSERT_EQ(run("gen --template alexnet-conv --seed 1 -o " + path("a.aapw")).code, 0);
  const auto first = run("gen --template alexnet-conv --seed 1 -o " + path("b.aapw")).j();
  EXPECT_EQ(read_file(path("a.aapw")), read_file(path("b.aapw")));
  const auto set = load_layers(path("a.aapw"));
  EXPECT_EQ(set.find("conv2")->conv().c_channels, 48u);
  EXPECT_TRUE(fs::exists(path("a.aapw.manifest.json")));
  EXPECT_EQ(first.at("layers").size(), 5u);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("gen --template resnet -o " + path("x.aapw")).code, 2);
  EXPECT_EQ(run("gen").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("prune -i " + path("missing.aapw") + " -o " + path("m.aapm")).code, 3);
}

TEST_F(Cli, PruneSummaries) {
  ASSERT_EQ(run("gen --template alexnet-conv --seed 3 -o " + path("w.aapw")).code, 0);
  auto r = run("prune -i " + path("w.aapw") + " -o " + path("m.aapm") + " --axis channel --group 16 --nprune 12");
  ASSERT_EQ(r.code, 0);
  EXPECT_DOUBLE_EQ(r.j().at("group_ratio").get<double>(), 0.75);
  const auto conv3 = r.j().at("layers").at(2);
  EXPECT_EQ(conv3.at("kept_per_group_histogram").at("4"), 384u * 9u * 16u);

  r = run("prune -i " + path("w.aapw") + " -o " + path("m0.aapm") + " --nprune 0");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.j().at("ratio").get<double>(), 0.0);

  r = run("prune -i " + path("w.aapw") + " -o " + path("u.aapm") + " --mode unstructured --ratio 0.8125");
  ASSERT_EQ(r.code, 0);
  EXPECT_NEAR(r.j().at("ratio").get<double>(), 0.8125, 1e-5);

  r = run("prune -i " + path("w.aapw") + " -o " + path("i.aapm") +
          " --mode incremental --group 8 --initial 5 --increment 1 --target 7");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.j().at("schedule"), json::parse("[5, 6, 7]"));

  EXPECT_EQ(run("prune -i " + path("w.aapw") + " -o " + path("x.aapm") + " --axis spatial --group 4 --nprune 2").code,
            0);
  EXPECT_EQ(run("prune -i " + path("w.aapw") + " -o " + path("x.aapm") + " --group 16 --nprune 16").code, 2);
}

TEST_F(Cli, EncodeReports) {
  ASSERT_EQ(run("gen --template custom --layers conv:32x48x3,conv:16x64x3 --seed 2 -o " + path("w.aapw")).code, 0);
  ASSERT_EQ(run("prune -i " + path("w.aapw") + " -o " + path("m.aapm") + " --group 16 --nprune 12").code, 0);
  auto r = run("encode -i " + path("w.aapw") + " -m " + path("m.aapm") + " -o " + path("s.aaps") +
               " --group 16 --par 64 --align 16");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.j().at("layers").at(0).at("index_bits"), 4);
  EXPECT_EQ(r.j().at("layers").at(0).at("n_padding"), 32u * 9u * 4u);
  EXPECT_EQ(r.j().at("layers").at(1).at("n_padding"), 0u);
  EXPECT_TRUE(r.j().contains("padding_report"));

  ASSERT_EQ(run("prune -i " + path("w.aapw") + " -o " + path("d.aapm") + " --nprune 0").code, 0);
  r = run("encode -i " + path("w.aapw") + " -m " + path("d.aapm") + " -o " + path("r.aaps") + " --format relative");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.j().at("padding_report").at("n_filler"), 0u);
  EXPECT_EQ(run("encode -i " + path("w.aapw") + " -m " + path("d.aapm") + " -o " + path("r.aaps") +
                " --format relative --align 4")
                .code,
            2);
}

TEST_F(Cli, SimAndCompare) {
  ASSERT_EQ(run("gen --template custom --layers conv:32x64x3:p1:i8,conv:16x128x3:i6 --seed 4 -o " + path("w.aapw")).code,
            0);
  ASSERT_EQ(run("prune -i " + path("w.aapw") + " -o " + path("b.aapm") + " --group 16 --nprune 12").code, 0);
  ASSERT_EQ(run("prune -i " + path("w.aapw") + " -o " + path("u.aapm") + " --mode unstructured --ratio 0.75").code, 0);
  auto b = run("sim -i " + path("w.aapw") + " -m " + path("b.aapm") + " --in-hw 8,6 -o " + path("b.json"));
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(b.j().at("total").at("utilization"), 1.0);
  auto u = run("sim -i " + path("w.aapw") + " -m " + path("u.aapm") + " --in-hw 8,6 -o " + path("u.json"));
  ASSERT_EQ(u.code, 0);
  for (const auto& l : u.j().at("layers")) {
    const double expect = l.at("n_mac").get<double>() / (l.at("n_cycle").get<double>() * 16 * 16);
    EXPECT_DOUBLE_EQ(l.at("utilization").get<double>(), expect);
  }
  auto c = run("compare " + path("u.json") + " " + path("b.json") + " --label han --label aap");
  ASSERT_EQ(c.code, 0);
  EXPECT_LT(c.j().at("rows").at(1).at("cycle_delta_pct").get<double>(), 0.0);
  auto self = run("compare " + path("b.json") + " " + path("b.json"));
  EXPECT_EQ(self.j().at("rows").at(1).at("cycle_delta_pct"), 0.0);
  EXPECT_EQ(run("compare " + path("b.json") + " " + path("u.json")).out,
            run("compare " + path("b.json") + " " + path("u.json")).out);

  auto csv = run("sim -i " + path("w.aapw") + " -m " + path("b.aapm") + " --in-hw 8 --csv");
  EXPECT_EQ(csv.code, 0);
  EXPECT_EQ(std::count(csv.out.begin(), csv.out.end(), '\n'), 3);
}

TEST_F(Cli, EieBlockedQueued) {
  ASSERT_EQ(run("gen --template custom --layers fc:1024x300 --seed 5 -o " + path("w.aapw")).code, 0);
  ASSERT_EQ(run("prune -i " + path("w.aapw") + " -o " + path("m.aapm") + " --axis column --group 16 --nprune 12").code,
            0);
  auto r = run("sim -i " + path("w.aapw") + " -m " + path("m.aapm") + " --arch eie --sync queued --assign blocked");
  ASSERT_EQ(r.code, 0);
  const auto nnz = r.j().at("total").at("n_nonzero").get<std::uint64_t>();
  EXPECT_EQ(r.j().at("total").at("n_cycle").get<std::uint64_t>(), (nnz + 63) / 64);
  EXPECT_EQ(r.j().at("total").at("utilization"), 1.0);
}

TEST_F(Cli, VerifyPipeline) {
  ASSERT_EQ(run("gen --template custom --layers conv:8x20x3:p1,fc:12x30 --seed 6 -o " + path("w.aapw")).code, 0);
  ASSERT_EQ(run("prune -i " + path("w.aapw") + " -o " + path("m.aapm") + " --group 4 --nprune 2").code, 0);
  ASSERT_EQ(run("encode -i " + path("w.aapw") + " -m " + path("m.aapm") + " -o " + path("s.aaps") +
                " --group 4 --par 8 --align 3")
                .code,
            0);
  auto ok = run("verify -i " + path("w.aapw") + " -m " + path("m.aapm") + " -s " + path("s.aaps"));
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("PASS 2/2"), std::string::npos);

  auto packed = load_sparse(path("s.aaps"));
  auto& e = packed[0].fetch_groups[5].entries;
  e[0].index = e[1].index;
  store_sparse(packed, path("bad.aaps"));
  auto bad = run("verify -i " + path("w.aapw") + " -m " + path("m.aapm") + " -s " + path("bad.aaps"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL conv1"), std::string::npos) << bad.out;
  EXPECT_NE(bad.out.find("channel fiber"), std::string::npos) << bad.out;

  auto random = run("verify --random 20 --seed 9");
  EXPECT_EQ(random.code, 0);
  EXPECT_NE(random.out.find("PASS 20/20"), std::string::npos);

  std::ofstream(path("junk.aaps")) << "junk";
  EXPECT_EQ(run("verify -i " + path("w.aapw") + " -m " + path("m.aapm") + " -s " + path("junk.aaps")).code, 3);
}

TEST_F(Cli, ManifestReproducesOutputs) {
  ASSERT_EQ(run("gen --template custom --layers fc:256x512,fc:64x256 --seed 8 -o " + path("w.aapw")).code, 0);
  ASSERT_EQ(run("prune -i " + path("w.aapw") + " -o " + path("m.aapm") + " --axis row --group 16 --nprune 12").code, 0);
  const auto bytes = read_file(path("m.aapm"));
  std::ifstream in(path("m.aapm.manifest.json"));
  const json manifest = json::parse(in);
  EXPECT_EQ(manifest.at("version"), "0.1.0");
  EXPECT_EQ(manifest.at("inputs").size(), 1u);
  EXPECT_EQ(manifest.at("config_hash").get<std::string>().size(), 64u);
  std::string cmd = manifest.at("command").get<std::string>();
  ASSERT_EQ(cmd.rfind("aap ", 0), 0u);
  fs::remove(path("m.aapm"));
  ASSERT_EQ(run(cmd.substr(4)).code, 0);
  EXPECT_EQ(read_file(path("m.aapm")), bytes);
  std::ifstream again(path("m.aapm.manifest.json"));
  EXPECT_EQ(json::parse(again), manifest);
}
