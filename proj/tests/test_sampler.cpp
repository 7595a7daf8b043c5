#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "vlogdesk/errors.hpp"
#include "vlogdesk/outpaint.hpp"
#include "vlogdesk/synth.hpp"

using namespace vlogdesk;

namespace {

const AvatarTemplate& desk_template() {
    static AvatarTemplate tmpl = build_desk_avatar();
    return tmpl;
}

VideoModelConfig tiny_config(ControlMode mode = ControlMode::DenseWarp) {
    VideoModelConfig cfg;
    cfg.resolution = 16;
    cfg.base_channels = 8;
    cfg.temb_dim = 16;
    cfg.groups = 4;
    cfg.attn_heads = 2;
    cfg.mode = mode;
    return cfg;
}

VideoModel tiny_model(ControlMode mode = ControlMode::DenseWarp) {
    VideoModel model(tiny_config(mode), 97);
    Rng nz(3);
    for (auto& [name, t] : model.base_params().items)
        if (name == "base.head.w")
            for (auto& v : t.data()) v += 0.05 * nz.normal();
    model.freeze_base();
    model.attach_control_branch(98);
    model.insert_temporal_layers();
    return model;
}

Tensor random_controls(int n, const VideoModelConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    return Tensor::uniform({n, cfg.control_channels(), cfg.resolution, cfg.resolution}, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("outpaint plan arithmetic") {
    SUBCASE("N=16 K=8 L=40 needs 4 calls") {
        OutpaintPlan plan = OutpaintPlan::make(16, 8, 40);
        CHECK(plan.calls() == 4);
        CHECK(plan.frames_needed() == 40);
    }
    SUBCASE("single call when the target fits") {
        CHECK(OutpaintPlan::make(16, 8, 16).calls() == 1);
        CHECK(OutpaintPlan::make(16, 8, 10).calls() == 1);
    }
    SUBCASE("generated length covers the target") {
        for (int n : {8, 16})
            for (int k : {0, 2, 4})
                for (int l : {5, 16, 33, 100}) {
                    OutpaintPlan plan = OutpaintPlan::make(n, k, l);
                    const int total = n + (plan.calls() - 1) * (n - k);
                    CHECK(total >= l);
                    // No wasted calls: one fewer would fall short.
                    const bool minimal = plan.calls() == 1 || total - (n - k) < std::max(l, n);
                    CHECK(minimal);
                }
    }
    SUBCASE("overlap bounds are enforced") {
        CHECK_THROWS_AS(OutpaintPlan::make(8, 8, 10), Error);
        CHECK_THROWS_AS(OutpaintPlan::make(8, -1, 10), Error);
    }
}

TEST_CASE("sample_clip determinism and range") {
    VideoModel model = tiny_model();
    DiffusionSchedule sched = DiffusionSchedule::cosine(100);
    Tensor controls = random_controls(3, model.config(), 11);
    SampleOptions opts;
    opts.sample_steps = 6;
    opts.seed = 5;
    VideoClip a = sample_clip(model, controls, sched, opts);
    VideoClip b = sample_clip(model, controls, sched, opts);
    REQUIRE(a.data.size() == b.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
    for (double v : a.data) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("outpaint_extend") {
    VideoModel model = tiny_model();
    DiffusionSchedule sched = DiffusionSchedule::cosine(100);
    SampleOptions opts;
    opts.sample_steps = 6;
    opts.seed = 21;

    SUBCASE("conditioned frames are preserved bit-exactly") {
        Tensor c0 = random_controls(6, model.config(), 31);
        VideoClip first = sample_clip(model, c0, sched, opts);
        VideoClip tail = first.slice_frames(3, 3);

        Tensor c1 = random_controls(6, model.config(), 32);
        SampleOptions opts2 = opts;
        opts2.seed = 22;
        VideoClip next = outpaint_extend(model, tail, c1, sched, opts2);
        REQUIRE(next.frames == 6);
        for (int64_t i = 0; i < 3 * next.frame_size(); ++i) CHECK(next.data[i] == tail.data[i]);
    }

    SUBCASE("zero overlap reduces to sample_clip") {
        Tensor c = random_controls(4, model.config(), 41);
        VideoClip tail;  // empty
        tail.h = model.config().resolution;
        tail.w = model.config().resolution;
        VideoClip a = outpaint_extend(model, tail, c, sched, opts);
        VideoClip b = sample_clip(model, c, sched, opts);
        REQUIRE(a.data.size() == b.data.size());
        for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
    }

    SUBCASE("overlap must stay below the clip length") {
        Tensor c = random_controls(3, model.config(), 51);
        VideoClip tail;
        tail.frames = 3;
        tail.h = tail.w = model.config().resolution;
        tail.data.assign(static_cast<size_t>(3) * tail.frame_size(), 0.0);
        CHECK_THROWS_AS(outpaint_extend(model, tail, c, sched, opts), Error);
    }
}

TEST_CASE("generate_video windows and determinism") {
    const auto& tmpl = desk_template();
    VideoModel model = tiny_model();
    DiffusionSchedule sched = DiffusionSchedule::cosine(100);
    SyntheticScene scene = make_scene(tmpl, 4242, 1.0, 24.0, 16);

    GenerateOptions opts;
    opts.plan = OutpaintPlan::make(8, 4, 20);
    opts.sample_steps = 5;
    opts.seed = 7;
    REQUIRE(scene.frame_count() >= opts.plan.frames_needed());

    VideoClip a = generate_video(model, tmpl, scene.motion, scene.frames[0],
                                 scene.reference_params, scene.camera, sched, opts);
    CHECK(a.frames == 20);
    VideoClip b = generate_video(model, tmpl, scene.motion, scene.frames[0],
                                 scene.reference_params, scene.camera, sched, opts);
    for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);

    SUBCASE("motion shorter than the plan is an error") {
        std::vector<AvatarParams> short_motion(scene.motion.begin(), scene.motion.begin() + 10);
        CHECK_THROWS_AS(generate_video(model, tmpl, short_motion, scene.frames[0],
                                       scene.reference_params, scene.camera, sched, opts),
                        Error);
    }
}

TEST_CASE("edit_video") {
    const auto& tmpl = desk_template();
    VideoModel model = tiny_model();
    DiffusionSchedule sched = DiffusionSchedule::cosine(100);
    SyntheticScene scene = make_scene(tmpl, 555, 0.5, 24.0, 16);
    VideoClip source = scene.video();

    EditOptions opts;
    opts.plan = OutpaintPlan::make(8, 4, source.frames);
    opts.sample_steps = 5;
    opts.seed = 3;

    SUBCASE("identical params are a byte-level no-op") {
        VideoClip out = edit_video(model, tmpl, source, scene.motion, scene.motion, scene.camera,
                                   sched, opts);
        REQUIRE(out.data.size() == source.data.size());
        for (size_t i = 0; i < out.data.size(); ++i) CHECK(out.data[i] == source.data[i]);
    }

    SUBCASE("mouth edit confines changes to the dilated mask") {
        nlohmann::json script = nlohmann::json::array(
            {{{"frames", {0, source.frames - 1}}, {"set", {{"jaw", 0.0}, {"mouth_wide", 0.6}}}}});
        auto edited = apply_edit_script(tmpl, scene.motion, script);
        const auto masks = edit_masks(tmpl, scene.motion, edited, scene.camera, 2);

        VideoClip out =
            edit_video(model, tmpl, source, scene.motion, edited, scene.camera, sched, opts);
        const int hw = source.h * source.w;
        double masked_change = 0, unmasked_change = 0;
        int64_t masked_n = 0, unmasked_n = 0;
        for (int f = 0; f < source.frames; ++f)
            for (int i = 0; i < hw; ++i) {
                double d = 0;
                for (int c = 0; c < 3; ++c) {
                    const size_t k = static_cast<size_t>(f) * source.frame_size() +
                                     static_cast<size_t>(c) * hw + i;
                    d += std::abs(out.data[k] - source.data[k]);
                }
                if (masks[f][i]) {
                    masked_change += d;
                    ++masked_n;
                } else {
                    CHECK(d == 0.0);  // held to the source exactly
                    unmasked_change += d;
                    ++unmasked_n;
                }
            }
        REQUIRE(masked_n > 0);
        REQUIRE(unmasked_n > 0);
        CHECK(masked_change / masked_n > 5.0 * (unmasked_change / std::max<int64_t>(1, unmasked_n)));
        CHECK(masked_change > 0.0);
    }

    SUBCASE("length mismatch is an error") {
        std::vector<AvatarParams> wrong(scene.motion.begin(), scene.motion.end() - 1);
        CHECK_THROWS_AS(edit_video(model, tmpl, source, wrong, wrong, scene.camera, sched, opts),
                        Error);
    }
}

TEST_CASE("edit script application") {
    const auto& tmpl = desk_template();
    std::vector<AvatarParams> seq(5, AvatarParams::rest());
    nlohmann::json script =
        nlohmann::json::array({{{"frames", {1, 3}}, {"set", {{"eyelids", 1.0}}}}});
    auto out = apply_edit_script(tmpl, seq, script);
    CHECK(out[0].expression[kExprEyelids] == 0.0);
    CHECK(out[1].expression[kExprEyelids] == 1.0);
    CHECK(out[3].expression[kExprEyelids] == 1.0);
    CHECK(out[4].expression[kExprEyelids] == 0.0);
    nlohmann::json bad = nlohmann::json::array({{{"frames", {0, 1}}, {"set", {{"nose", 1.0}}}}});
    CHECK_THROWS_AS(apply_edit_script(tmpl, seq, bad), Error);
}

TEST_CASE("video png directory round trip") {
    namespace fs = std::filesystem;
    Rng rng(8);
    std::vector<Image> frames;
    for (int f = 0; f < 3; ++f) {
        Image img(10, 12, 3);
        for (auto& v : img.px) v = rng.uniform();
        frames.push_back(img);
    }
    VideoClip clip = VideoClip::from_images(frames, 24.0);
    const std::string dir = "video_rt_test";
    save_video_png_dir(dir, clip, {{"seed", 5}});
    VideoClip back = load_video_png_dir(dir);
    REQUIRE(back.frames == 3);
    CHECK(back.fps == 24.0);
    for (size_t i = 0; i < clip.data.size(); ++i)
        CHECK(std::abs(back.data[i] - clip.data[i]) <= 2.0 / 255.0 + 1e-12);
    // A second save of the loaded clip must be byte-stable.
    const std::string dir2 = "video_rt_test2";
    save_video_png_dir(dir2, back, {{"seed", 5}});
    VideoClip back2 = load_video_png_dir(dir2);
    for (size_t i = 0; i < back.data.size(); ++i) CHECK(back2.data[i] == back.data[i]);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}
