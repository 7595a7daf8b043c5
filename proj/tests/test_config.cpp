#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "vlogdesk/config.hpp"
#include "vlogdesk/errors.hpp"

using namespace vlogdesk;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& p, const std::string& content) : path(p) {
        std::ofstream f(p, std::ios::trunc);
        f << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("defaults and overrides") {
    RunConfig cfg;
    CHECK(cfg.data.resolution == 32);
    CHECK(cfg.video.clip_len == 16);
    CHECK(cfg.video.overlap == 8);
    CHECK(cfg.motion.layers == 4);
    CHECK(cfg.motion.lambda_temp_expr == 0.1);
    CHECK(cfg.motion.lambda_temp_pose == 1.0);
    CHECK(cfg.video.gap_min == 24);

    TempFile f("cfg_test.ini",
               "# comment\n[data]\ntrain = 8\nseed = 99\n\n[motion]\nwidth = 64\n"
               "predict_residual = false\n[video]\nmode = dense\n");
    cfg.apply_file(f.path);
    CHECK(cfg.data.train == 8);
    CHECK(cfg.data.seed == 99);
    CHECK(cfg.motion.width == 64);
    CHECK_FALSE(cfg.motion.predict_residual);
    CHECK(cfg.video.mode == "dense");
    // Untouched keys keep their defaults.
    CHECK(cfg.data.test == 16);
}

TEST_CASE("unknown keys and malformed lines are rejected") {
    RunConfig cfg;
    {
        TempFile f("cfg_bad1.ini", "[data]\nbanana = 3\n");
        CHECK_THROWS_AS(cfg.apply_file(f.path), Error);
    }
    {
        TempFile f("cfg_bad2.ini", "[nosuchsection]\ntrain = 3\n");
        CHECK_THROWS_AS(cfg.apply_file(f.path), Error);
    }
    {
        TempFile f("cfg_bad3.ini", "[data]\ntrain 3\n");
        CHECK_THROWS_AS(cfg.apply_file(f.path), Error);
    }
    {
        TempFile f("cfg_bad4.ini", "[data]\ntrain = pear\n");
        CHECK_THROWS_AS(cfg.apply_file(f.path), Error);
    }
    try {
        TempFile f("cfg_bad5.ini", "[motion]\nwobble = 1\n");
        cfg.apply_file(f.path);
        FAIL("expected usage error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrKind::Usage);
        CHECK(std::string(e.what()).find("motion.wobble") != std::string::npos);
    }
}

TEST_CASE("dump lists every key and the hash tracks changes") {
    RunConfig a;
    const std::string dump = a.dump();
    CHECK(dump.find("[data]") != std::string::npos);
    CHECK(dump.find("clip_len = 16") != std::string::npos);
    CHECK(dump.find("lambda_temp_pose = 1") != std::string::npos);

    RunConfig b;
    CHECK(a.hash() == b.hash());
    b.data.seed = 4;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("derived model configs") {
    RunConfig cfg;
    cfg.motion.width = 96;
    cfg.video.mode = "keypoints";
    MotionModelConfig mc = cfg.motion_config();
    CHECK(mc.width == 96);
    CHECK(mc.frame_dims() == kNumExpressions + kNumJoints * 3);
    VideoModelConfig vc = cfg.video_config();
    CHECK(vc.mode == ControlMode::Keypoints);
    CHECK(vc.control_channels() == 6);
    cfg.video.mode = "dense_warp";
    CHECK(cfg.video_config().control_channels() == 3 + kNumClasses + 3 + 1 + 3);
    DiffusionSchedule s = cfg.make_schedule();
    CHECK(s.steps == 1000);
}
