// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(RR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("rr_cli_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(Cli, HelpSucceeds) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("restore --help"), 0);
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("no-such-command"), 2);
    EXPECT_EQ(run("train-restorer --no-such-flag"), 2);
    EXPECT_EQ(run("train-restorer --config /nonexistent/config.json"), 2);
    EXPECT_EQ(run("restore --restorer x.rrgn"), 2);  // --readability missing
}

TEST(Cli, BadConfigExitsTwo) {
    const fs::path d = scratch("config");
    std::ofstream(d / "bad.json") << R"({"restorer": {"no_such_key": 1}})";
    EXPECT_EQ(run("train-restorer --config " + (d / "bad.json").string() + " --out " + d.string()), 2);
    std::ofstream(d / "value.json") << R"({"restorer": {"width": -4}})";
    EXPECT_EQ(run("train-restorer --config " + (d / "value.json").string() + " --out " + d.string()), 2);
}

TEST(Cli, RuntimeFailureExitsThree) {
    const fs::path d = scratch("runtime");
    std::ofstream(d / "junk.rrgn") << "not a checkpoint";
    EXPECT_EQ(run("restore --out " + d.string() + " --readability " + (d / "junk.rrgn").string() + " --restorer " +
                  (d / "junk.rrgn").string()),
              3);
}

TEST(Cli, GenDataWritesCorpus) {
    const fs::path d = scratch("gen");
    std::ofstream(d / "small.json") << R"({"data": {"count": 6, "image_size": 32}})";
    ASSERT_EQ(run("gen-data --config " + (d / "small.json").string() + " --out " + d.string()), 0);
    EXPECT_TRUE(fs::exists(d / "manifest.jsonl"));
    EXPECT_TRUE(fs::exists(d / "split.json"));
    EXPECT_TRUE(fs::exists(d / "config.json"));
    int pngs = 0;
    for (const auto& e : fs::directory_iterator(d / "images")) pngs += e.path().extension() == ".png";
    EXPECT_EQ(pngs, 6);
}
