#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vlogdesk/synth.hpp"

using namespace vlogdesk;

namespace {

const AvatarTemplate& desk_template() {
    static AvatarTemplate tmpl = build_desk_avatar();
    return tmpl;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb + 1e-30);
}

std::vector<char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("scene frame counts at the reference duration") {
    const auto& tmpl = desk_template();
    SyntheticScene scene = make_scene(tmpl, 100, 10.0, 24.0, 16);
    CHECK(scene.frame_count() == 240);
    CHECK(scene.frames.size() == 240);
    CHECK(scene.audio.samples.size() == 160000);
}

TEST_CASE("same seed reproduces the scene bit-exactly") {
    const auto& tmpl = desk_template();
    SyntheticScene a = make_scene(tmpl, 7, 1.0, 24.0, 16);
    SyntheticScene b = make_scene(tmpl, 7, 1.0, 24.0, 16);
    REQUIRE(a.audio.samples.size() == b.audio.samples.size());
    for (size_t i = 0; i < a.audio.samples.size(); ++i)
        CHECK(a.audio.samples[i] == b.audio.samples[i]);
    for (int f = 0; f < a.frame_count(); ++f) {
        for (int j = 0; j < kNumJoints; ++j)
            CHECK((a.motion[f].pose[j] - b.motion[f].pose[j]).norm() == 0.0);
        for (size_t i = 0; i < a.frames[f].px.size(); ++i)
            CHECK(a.frames[f].px[i] == b.frames[f].px[i]);
    }
}

TEST_CASE("jaw channel tracks the audio energy envelope") {
    const auto& tmpl = desk_template();
    for (uint64_t seed : {11u, 12u, 13u}) {
        SyntheticScene scene = make_scene(tmpl, seed, 2.0, 24.0, 16);
        const auto env = energy_envelope(scene.audio, scene.fps);
        std::vector<double> jaw;
        for (const auto& p : scene.motion) jaw.push_back(p.expression[kExprJaw]);
        REQUIRE(env.size() >= jaw.size());
        std::vector<double> env_cut(env.begin(), env.begin() + jaw.size());
        INFO("seed " << seed);
        CHECK(pearson(jaw, env_cut) > 0.7);

        // Linear regression env -> jaw explains most of the variance.
        const double r = pearson(jaw, env_cut);
        CHECK(r * r > 0.5);
    }
}

TEST_CASE("scene control renders satisfy the channel invariants") {
    const auto& tmpl = desk_template();
    SyntheticScene scene = make_scene(tmpl, 21, 0.5, 24.0, 16);
    const BakedColors baked =
        bake_vertex_colors(scene.frames[0], tmpl, scene.motion[0], scene.camera);
    for (int f = 0; f < scene.frame_count(); f += 4) {
        ControlFrame cf = render_controls(tmpl, scene.motion[f], scene.camera, &baked);
        int covered = 0;
        for (int i = 0; i < cf.h * cf.w; ++i) {
            if (cf.warp_valid[i]) CHECK(cf.semantic[i] != kClassBackground);
            covered += cf.semantic[i] != kClassBackground;
        }
        CHECK(covered > 20);
    }
}

TEST_CASE("dataset layout, disjoint splits and byte determinism") {
    namespace fs = std::filesystem;
    const auto& tmpl = desk_template();
    const std::string dir_a = "synth_ds_a";
    const std::string dir_b = "synth_ds_b";
    DatasetManifest m = make_dataset(tmpl, dir_a, 3, 2, 900, 0.5, 24.0, 16);

    SUBCASE("splits are disjoint and the manifest reloads") {
        for (uint64_t tr : m.train_seeds)
            for (uint64_t te : m.test_seeds) CHECK(tr != te);
        DatasetManifest back = load_manifest(dir_a);
        CHECK(back.train_seeds == m.train_seeds);
        CHECK(back.test_seeds == m.test_seeds);
        CHECK(back.resolution == 16);
    }

    SUBCASE("scenes reload faithfully") {
        SyntheticScene scene = load_scene(tmpl, scene_dir(dir_a, m.train_seeds[0]));
        CHECK(scene.frame_count() == 12);
        CHECK(scene.seed == m.train_seeds[0]);
        // Motion JSON round trip is exact.
        SyntheticScene fresh = make_scene(tmpl, m.train_seeds[0], 0.5, 24.0, 16);
        for (int f = 0; f < scene.frame_count(); ++f)
            for (int j = 0; j < kNumJoints; ++j)
                CHECK((scene.motion[f].pose[j] - fresh.motion[f].pose[j]).norm() < 1e-12);
    }

    SUBCASE("regeneration reproduces identical bytes") {
        make_dataset(tmpl, dir_b, 3, 2, 900, 0.5, 24.0, 16);
        for (const char* rel :
             {"/manifest.json", "/scenes/900/meta.json", "/scenes/900/audio.wav",
              "/scenes/900/motion.json", "/scenes/900/frames/0003.png"}) {
            INFO(rel);
            CHECK(read_bytes(dir_a + rel) == read_bytes(dir_b + rel));
        }
    }

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("motion track extraction aligns mel and frames") {
    const auto& tmpl = desk_template();
    SyntheticScene scene = make_scene(tmpl, 31, 1.0, 24.0, 16);
    MotionTrack track = scene_motion_track(scene, 16);
    CHECK(track.frames == 24);
    CHECK(track.mel_cols == 16);
    CHECK(track.mel.size() == static_cast<size_t>(24) * 16);
    CHECK(track.expr.size() == static_cast<size_t>(24) * kNumExpressions);
    CHECK(track.pose_abs.size() == static_cast<size_t>(24) * kNumJoints * 3);
    CHECK(track.ref_pose.size() == static_cast<size_t>(kNumJoints) * 3);
}
