// vlogdesk: audio-driven avatar video synthesis at desk scale.
// Subcommands cover data synthesis, the two training stages, generation,
// editing, personalization, evaluation and a numeric self-check.
#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vlogdesk/checkpoint.hpp"
#include "vlogdesk/config.hpp"
#include "vlogdesk/errors.hpp"
#include "vlogdesk/pipeline.hpp"

using namespace vlogdesk;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_interrupted{false};

void handle_sigint(int) { g_interrupted.store(true); }

RunConfig load_config(const std::string& path) {
    RunConfig cfg;
    if (!path.empty()) cfg.apply_file(path);
    return cfg;
}

void log_config(const RunConfig& cfg) {
    std::printf("resolved config (hash %016llx):\n%s",
                static_cast<unsigned long long>(cfg.hash()), cfg.dump().c_str());
}

nlohmann::json base_manifest(const char* command, const RunConfig& cfg, uint64_t seed) {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(cfg.hash()));
    nlohmann::json m;
    m["command"] = command;
    m["config_hash"] = hash;
    m["seed"] = seed;
    return m;
}

std::string hash_hex(const std::string& path) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(file_hash(path)));
    return buf;
}

// Progress printer that also honors Ctrl-C (training stops at the next step
// boundary and the caller checkpoints what it has).
std::function<bool(int, double)> progress_logger(const char* stage, int every) {
    return [stage, every](int step, double loss) {
        if (step % every == 0)
            std::printf("[%s] step %d loss %.5f\n", stage, step, loss);
        return !g_interrupted.load();
    };
}

int cmd_synth_data(const std::string& out, int train, int test, uint64_t seed,
                   const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    if (train > 0) cfg.data.train = train;
    if (test > 0) cfg.data.test = test;
    if (seed != 0) cfg.data.seed = seed;
    log_config(cfg);
    const AvatarTemplate tmpl = build_desk_avatar();
    DatasetManifest m = make_dataset(tmpl, out, cfg.data.train, cfg.data.test, cfg.data.seed,
                                     cfg.data.duration, cfg.data.fps, cfg.data.resolution);
    std::printf("wrote %zu train + %zu test scenes under %s\n", m.train_seeds.size(),
                m.test_seeds.size(), out.c_str());
    return 0;
}

int cmd_train_motion(const std::string& data_dir, const std::string& config_path,
                     const std::string& out) {
    RunConfig cfg = load_config(config_path);
    log_config(cfg);
    const AvatarTemplate tmpl = build_desk_avatar();
    const DatasetManifest manifest = load_manifest(data_dir);
    const auto scenes = load_scenes(tmpl, data_dir, manifest.train_seeds);
    const auto tracks = make_motion_tracks(scenes, cfg.motion.mel_bins);
    const DiffusionSchedule sched = cfg.make_schedule();

    MotionModel model(cfg.motion_config(), cfg.data.seed ^ 0x3a07ULL);
    auto log = train_motion_model(model, tracks, sched, cfg.motion_train_options(),
                                  progress_logger("motion", 50));

    nlohmann::json meta = base_manifest("train-motion", cfg, cfg.data.seed);
    meta["step"] = log.empty() ? 0 : log.back().step + 1;
    model.save(out, meta);
    nlohmann::json losses = nlohmann::json::array();
    for (const auto& e : log) losses.push_back({{"step", e.step}, {"loss", e.loss}});
    std::ofstream lf(out + ".loss.json", std::ios::trunc);
    lf << losses.dump() << "\n";
    std::printf("saved motion checkpoint to %s (final loss %.5f)\n", out.c_str(),
                log.empty() ? 0.0 : log.back().loss);
    return g_interrupted ? 130 : 0;
}

int cmd_train_video(const std::string& data_dir, const std::string& config_path,
                    const std::string& out, const std::string& stage,
                    const std::string& base_path, const std::string& init_path) {
    RunConfig cfg = load_config(config_path);
    log_config(cfg);
    const AvatarTemplate tmpl = build_desk_avatar();
    const DatasetManifest manifest = load_manifest(data_dir);
    const auto scenes = load_scenes(tmpl, data_dir, manifest.train_seeds);
    const DiffusionSchedule sched = cfg.make_schedule();

    VideoModel model = [&]() {
        if (!init_path.empty()) return VideoModel::load(init_path);
        if (!base_path.empty()) {
            VideoModel m = VideoModel::load(base_path);
            if (!m.base_frozen()) m.freeze_base();
            return m;
        }
        std::printf("pretraining the base denoiser (%d steps)\n", cfg.video.base_steps);
        return pretrain_base_model(cfg, scenes, sched, progress_logger("base", 100));
    }();

    if (stage == "both" || stage == "joint") {
        train_video_pipeline(model, cfg, scenes, sched,
                             stage == "joint" ? VideoTrainSchedule::Joint
                                              : VideoTrainSchedule::TwoStage,
                             progress_logger("video", 50));
    } else if (stage == "1") {
        if (!model.has_control()) model.attach_control_branch(cfg.data.seed ^ 0xc7121ULL);
        VideoTrainOptions s1;
        s1.steps = cfg.video.stage1_steps;
        s1.items_per_step = cfg.video.stage1_batch;
        s1.lr = cfg.video.lr;
        s1.seed = cfg.data.seed ^ 0x57a6e1ULL;
        auto draw = [&](Rng& rng) {
            return draw_control_frame(tmpl, scenes, model.config().mode, cfg.video.gap_min, rng);
        };
        train_video(model, draw, model.control_params(), sched, s1, progress_logger("stage1", 50));
    } else if (stage == "2") {
        if (!model.has_control()) fail_usage("--stage 2 needs an --init checkpoint with a control branch");
        if (!model.has_temporal()) model.insert_temporal_layers();
        ParamSet trainable;
        trainable.append(model.control_params());
        trainable.append(model.temporal_params());
        VideoTrainOptions s2;
        s2.steps = cfg.video.stage2_steps;
        s2.items_per_step = cfg.video.stage2_clips;
        s2.lr = cfg.video.lr;
        s2.seed = cfg.data.seed ^ 0x57a6e2ULL;
        auto draw = [&](Rng& rng) {
            return draw_control_clip(tmpl, scenes, model.config().mode, cfg.video.gap_min,
                                     cfg.video.train_clip_len, rng);
        };
        train_video(model, draw, trainable, sched, s2, progress_logger("stage2", 50));
    } else {
        fail_usage("--stage must be 1, 2, both or joint");
    }

    nlohmann::json meta = base_manifest("train-video", cfg, cfg.data.seed);
    meta["stage"] = stage;
    model.save(out, meta);
    std::printf("saved video checkpoint to %s\n", out.c_str());
    return g_interrupted ? 130 : 0;
}

// Resolves the reference metadata for an input image: the enclosing
// synthetic-scene directory supplies camera intrinsics and the per-frame
// avatar parameters; the frame index comes from the file name.
struct ReferenceInfo {
    AvatarParams params;
    Camera camera;
    double fps = 24.0;
};

ReferenceInfo resolve_reference(const AvatarTemplate& tmpl, const std::string& image_path,
                                int resolution) {
    const fs::path img(image_path);
    fs::path scene_root = img.parent_path();
    if (scene_root.filename() == "frames") scene_root = scene_root.parent_path();
    const fs::path meta_path = scene_root / "meta.json";
    if (!fs::exists(meta_path))
        fail_data("no scene metadata next to " + image_path +
                  " (expected meta.json; the camera field of view and reference body parameters "
                  "are read from it)");
    SyntheticScene scene = load_scene(tmpl, scene_root.string());
    ReferenceInfo info;
    info.fps = scene.fps;
    int frame = 0;
    try {
        frame = std::stoi(img.stem().string());
    } catch (...) {
        frame = 0;
    }
    frame = std::clamp(frame, 0, scene.frame_count() - 1);
    info.params = scene.motion[frame];
    info.camera = Camera::look_at(resolution, resolution, scene.identity.fov,
                                  {0, 1.3, scene.identity.camera_dist}, {0, 1.3, 0});
    return info;
}

int cmd_generate(const std::string& image_path, const std::string& audio_path,
                 const std::string& motion_ckpt, const std::string& video_ckpt,
                 const std::string& out, uint64_t seed, double guidance, int frames,
                 const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    if (guidance > 0) cfg.motion.guidance = guidance;
    log_config(cfg);
    const AvatarTemplate tmpl = build_desk_avatar();

    MotionModel motion_model = MotionModel::load(motion_ckpt);
    VideoModel video_model = VideoModel::load(video_ckpt);
    const DiffusionSchedule sched = cfg.make_schedule();

    const Image reference = load_png(image_path);
    ReferenceInfo ref = resolve_reference(tmpl, image_path, video_model.config().resolution);
    if (reference.h != video_model.config().resolution ||
        reference.w != video_model.config().resolution)
        fail_data("reference image size does not match the model resolution");

    AudioClip audio = load_wav(audio_path);
    MelOptions mopts;
    mopts.mel_bins = motion_model.config().mel_bins;
    const MelSpectrogram mel = mel_spectrogram(audio, ref.fps, mopts);

    int target = frames > 0 ? frames : mel.rows;
    OutpaintPlan plan = OutpaintPlan::make(cfg.video.clip_len, cfg.video.overlap, target);
    while (plan.frames_needed() > mel.rows && target > 1) {
        --target;
        plan = OutpaintPlan::make(cfg.video.clip_len, cfg.video.overlap, target);
    }
    if (plan.frames_needed() > mel.rows)
        fail_data("audio provides " + std::to_string(mel.rows) +
                  " frames, not enough for the outpainting plan");

    // Stage 1: audio -> motion (sampled over the full window span).
    MelSpectrogram mel_span = mel;
    mel_span.rows = plan.frames_needed();
    mel_span.data.resize(static_cast<size_t>(mel_span.rows) * mel.cols);
    MotionSampleOptions mo;
    mo.sample_steps = cfg.motion.sample_steps;
    mo.guidance = cfg.motion.guidance;
    mo.seed = seed ^ 0x6d6f74ULL;
    MotionSampleResult motion = sample_motion(motion_model, mel_span, ref.params, sched, mo);

    // Stage 2: motion -> video.
    GenerateOptions go;
    go.plan = plan;
    go.sample_steps = cfg.video.sample_steps;
    go.seed = seed ^ 0x766964ULL;
    VideoClip clip = generate_video(video_model, tmpl, motion.params, reference, ref.params,
                                    ref.camera, sched, go);
    clip.fps = ref.fps;

    nlohmann::json manifest = base_manifest("generate", cfg, seed);
    manifest["image"] = image_path;
    manifest["audio"] = audio_path;
    manifest["motion_ckpt_hash"] = hash_hex(motion_ckpt);
    manifest["video_ckpt_hash"] = hash_hex(video_ckpt);
    manifest["guidance"] = cfg.motion.guidance;
    save_video_png_dir(out, clip, manifest);
    save_params_sequence(out + "/motion.json", motion.params);
    std::printf("wrote %d frames to %s\n", clip.frames, out.c_str());
    return 0;
}

int cmd_edit(const std::string& video_dir, const std::string& script_path, const std::string& out,
             const std::string& video_ckpt, uint64_t seed, const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    log_config(cfg);
    const AvatarTemplate tmpl = build_desk_avatar();
    SyntheticScene scene = load_scene(tmpl, video_dir);

    std::ifstream sf(script_path);
    if (!sf) fail_data("cannot open edit script: " + script_path);
    nlohmann::json script = nlohmann::json::parse(sf, nullptr, false);
    if (script.is_discarded()) fail_data("invalid JSON in edit script: " + script_path);

    nlohmann::json manifest = base_manifest("edit", cfg, seed);
    manifest["source"] = video_dir;
    manifest["script"] = script;

    if (script.empty()) {
        // Byte-level no-op: copy the source frames as they are.
        fs::create_directories(fs::path(out) / "frames");
        for (int f = 0; f < scene.frame_count(); ++f) {
            char name[64];
            std::snprintf(name, sizeof(name), "frames/%04d.png", f);
            fs::copy_file(fs::path(video_dir) / name, fs::path(out) / name,
                          fs::copy_options::overwrite_existing);
        }
        manifest["frames"] = scene.frame_count();
        manifest["height"] = scene.resolution;
        manifest["width"] = scene.resolution;
        manifest["fps"] = scene.fps;
        std::ofstream mf(out + "/manifest.json", std::ios::trunc);
        mf << manifest.dump(2) << "\n";
        std::printf("empty script: copied %d frames unchanged\n", scene.frame_count());
        return 0;
    }

    VideoModel model = VideoModel::load(video_ckpt);
    const DiffusionSchedule sched = cfg.make_schedule();
    const auto edited_params = apply_edit_script(tmpl, scene.motion, script);

    EditOptions eo;
    eo.plan = OutpaintPlan::make(cfg.video.clip_len, cfg.video.overlap,
                                 std::max(cfg.video.clip_len, scene.frame_count()));
    eo.sample_steps = cfg.video.sample_steps;
    eo.seed = seed;
    VideoClip source = scene.video();
    VideoClip edited =
        edit_video(model, tmpl, source, scene.motion, edited_params, scene.camera, sched, eo);
    edited.fps = scene.fps;

    manifest["video_ckpt_hash"] = hash_hex(video_ckpt);
    save_video_png_dir(out, edited, manifest);
    save_params_sequence(out + "/motion.json", edited_params);
    std::printf("wrote %d edited frames to %s\n", edited.frames, out.c_str());
    return 0;
}

int cmd_personalize(const std::string& video_dir, const std::string& ckpt, int steps,
                    const std::string& out, uint64_t seed, const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    log_config(cfg);
    const AvatarTemplate tmpl = build_desk_avatar();
    SyntheticScene scene = load_scene(tmpl, video_dir);
    if (scene.frame_count() < cfg.video.train_clip_len)
        fail_data("personalize: the video has " + std::to_string(scene.frame_count()) +
                  " frames, fewer than one training clip (" +
                  std::to_string(cfg.video.train_clip_len) + ")");

    Checkpoint original = load_checkpoint(ckpt);
    VideoModel model = VideoModel::load(ckpt);
    if (steps > 0) {
        if (!model.has_control() || !model.has_temporal())
            fail_data("personalize: checkpoint must be a stage-2 model");
        const DiffusionSchedule sched = cfg.make_schedule();
        std::vector<SyntheticScene> subject = {std::move(scene)};
        ParamSet trainable;
        trainable.append(model.control_params());
        trainable.append(model.temporal_params());
        VideoTrainOptions opts;
        opts.steps = steps;
        opts.items_per_step = cfg.video.stage2_clips;
        opts.lr = cfg.video.lr;
        opts.seed = seed ^ 0x9e55ULL;
        auto draw = [&](Rng& rng) {
            return draw_control_clip(tmpl, subject, model.config().mode, cfg.video.gap_min,
                                     cfg.video.train_clip_len, rng);
        };
        train_video(model, draw, trainable, sched, opts, progress_logger("personalize", 20));
    }
    nlohmann::json meta = original.meta;
    if (steps > 0) {
        meta["personalized_from"] = hash_hex(ckpt);
        meta["personalize_steps"] = steps;
    }
    model.save(out, meta);
    std::printf("saved personalized checkpoint to %s\n", out.c_str());
    return g_interrupted ? 130 : 0;
}

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir, const std::string& out) {
    const AvatarTemplate tmpl = build_desk_avatar();
    SyntheticScene gt_scene = load_scene(tmpl, gt_dir);
    VideoClip pred = load_video_png_dir(pred_dir);
    const int L = std::min(pred.frames, gt_scene.frame_count());

    std::vector<Image> gt_images(gt_scene.frames.begin(), gt_scene.frames.begin() + L);
    VideoClip gt = VideoClip::from_images(gt_images, gt_scene.fps);
    VideoClip pred_cut = pred.slice_frames(0, L);

    MetricReport report;
    report.full_image = image_metrics(pred_cut, gt);
    std::vector<std::vector<uint8_t>> semantic;
    for (int f = 0; f < L; ++f) {
        const auto posed = pose_mesh(tmpl, gt_scene.motion[f]);
        semantic.push_back(render_semantic(tmpl, rasterize(posed, tmpl.triangles, gt_scene.camera)));
    }
    for (const auto& [cls, m] : per_part_image_metrics(pred_cut, gt, semantic))
        report.per_part[semantic_class_name(cls)] = m;
    if (pred.frames >= 4) report.pixel_jitter = video_pixel_jitter(pred);

    if (fs::exists(fs::path(pred_dir) / "motion.json")) {
        auto pred_motion = load_params_sequence(pred_dir + "/motion.json");
        if (static_cast<int>(pred_motion.size()) >= L) {
            pred_motion.resize(L);
            std::vector<AvatarParams> gt_motion(gt_scene.motion.begin(),
                                                gt_scene.motion.begin() + L);
            report.lme_mm = landmark_error_mm(tmpl, pred_motion, gt_motion);
            std::vector<int> ids = tmpl.landmarks.mouth;
            ids.insert(ids.end(), tmpl.landmarks.face_outline.begin(),
                       tmpl.landmarks.face_outline.end());
            if (L >= 4)
                report.jitter_mm_s3 =
                    jitter_mm_s3(landmark_trajectory(tmpl, pred_motion, ids), gt_scene.fps);
        }
    }

    std::ofstream rf(out, std::ios::trunc);
    if (!rf) fail_data("cannot write report: " + out);
    rf << report.to_json().dump(2) << "\n";
    std::printf("%s", report.to_table().c_str());
    std::printf("report written to %s\n", out.c_str());
    return 0;
}

int run_selfcheck();

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_sigint);
    CLI::App app{"desk-scale audio-driven avatar video synthesis"};
    app.require_subcommand(1);

    std::string out, data_dir, config_path, ckpt, image_path, audio_path, motion_ckpt, video_ckpt,
        stage = "both", base_path, init_path, script_path, pred_dir, gt_dir, video_dir;
    int train = 0, test = 0, frames = 0, steps = 0;
    uint64_t seed = 0;
    double guidance = 0;

    auto* synth = app.add_subcommand("synth-data", "generate the synthetic dataset");
    synth->add_option("--out", out)->required();
    synth->add_option("--train", train);
    synth->add_option("--test", test);
    synth->add_option("--seed", seed);
    synth->add_option("--config", config_path);

    auto* tm = app.add_subcommand("train-motion", "train the audio-to-motion model");
    tm->add_option("--data", data_dir)->required();
    tm->add_option("--config", config_path);
    tm->add_option("--out", out)->required();

    auto* tv = app.add_subcommand("train-video", "train the control-conditioned video model");
    tv->add_option("--data", data_dir)->required();
    tv->add_option("--config", config_path);
    tv->add_option("--out", out)->required();
    tv->add_option("--stage", stage, "1, 2, both or joint");
    tv->add_option("--base", base_path, "pretrained base checkpoint");
    tv->add_option("--init", init_path, "checkpoint to continue from");

    auto* gen = app.add_subcommand("generate", "audio + reference image -> video");
    gen->add_option("--image", image_path)->required();
    gen->add_option("--audio", audio_path)->required();
    gen->add_option("--motion-ckpt", motion_ckpt)->required();
    gen->add_option("--video-ckpt", video_ckpt)->required();
    gen->add_option("--out", out)->required();
    gen->add_option("--seed", seed);
    gen->add_option("--guidance", guidance);
    gen->add_option("--frames", frames);
    gen->add_option("--config", config_path);

    auto* edit = app.add_subcommand("edit", "re-generate masked regions under edited expressions");
    edit->add_option("--video", video_dir)->required();
    edit->add_option("--script", script_path)->required();
    edit->add_option("--out", out)->required();
    edit->add_option("--video-ckpt", video_ckpt);
    edit->add_option("--seed", seed);
    edit->add_option("--config", config_path);

    auto* pers = app.add_subcommand("personalize", "fine-tune the video model on one subject");
    pers->add_option("--video", video_dir)->required();
    pers->add_option("--ckpt", ckpt)->required();
    pers->add_option("--steps", steps)->required();
    pers->add_option("--out", out)->required();
    pers->add_option("--seed", seed);
    pers->add_option("--config", config_path);

    auto* ev = app.add_subcommand("evaluate", "compare generated frames against a scene");
    ev->add_option("--pred", pred_dir)->required();
    ev->add_option("--gt", gt_dir)->required();
    ev->add_option("--out", out)->required();

    app.add_subcommand("selfcheck", "run the numeric verification suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        std::fprintf(stderr, "vlogdesk: error code=1 kind=usage reason=\"%s\"\n", e.what());
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth_data(out, train, test, seed, config_path);
        if (tm->parsed()) return cmd_train_motion(data_dir, config_path, out);
        if (tv->parsed())
            return cmd_train_video(data_dir, config_path, out, stage, base_path, init_path);
        if (gen->parsed())
            return cmd_generate(image_path, audio_path, motion_ckpt, video_ckpt, out, seed,
                                guidance, frames, config_path);
        if (edit->parsed())
            return cmd_edit(video_dir, script_path, out, video_ckpt, seed, config_path);
        if (pers->parsed())
            return cmd_personalize(video_dir, ckpt, steps, out, seed, config_path);
        if (ev->parsed()) return cmd_evaluate(pred_dir, gt_dir, out);
        return run_selfcheck();
    } catch (const Error& e) {
        const char* kind = e.kind() == ErrKind::Usage ? "usage"
                           : e.kind() == ErrKind::Data ? "data"
                                                       : "numeric";
        std::fprintf(stderr, "vlogdesk: error code=%d kind=%s reason=\"%s\"\n", e.exit_code(),
                     kind, e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "vlogdesk: error code=2 kind=data reason=\"%s\"\n", e.what());
        return 2;
    }
}

namespace {

int run_selfcheck() {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    int failures = 0;
    auto verdict = [&](const char* name, bool ok, const std::string& detail = "") {
        std::printf("%s %s%s%s\n", ok ? "PASS" : "FAIL", name, detail.empty() ? "" : ": ",
                    detail.c_str());
        if (!ok) ++failures;
    };

    // Gradient checks over the op library.
    {
        double worst = 0;
        std::string where;
        auto probe_op = [&](const char* name, const std::function<Tensor(std::vector<Tensor>&)>& op,
                            std::vector<Tensor> inputs) {
            auto fn = [&]() {
                Rng rng(7);
                Tensor w = Tensor::uniform(op(inputs).shape(), rng, 0.5, 1.5);
                return mean(mul(op(inputs), w));
            };
            GradcheckReport rep = gradcheck(fn, inputs, 1e-5);
            if (rep.max_rel_err > worst) {
                worst = rep.max_rel_err;
                where = name;
            }
        };
        Rng rng(1);
        probe_op("matmul", [](std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
                 {Tensor::randn({3, 4}, rng), Tensor::randn({4, 2}, rng)});
        probe_op("conv2d", [](std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
                 {Tensor::randn({1, 2, 5, 5}, rng), Tensor::randn({3, 2, 3, 3}, rng),
                  Tensor::randn({3}, rng)});
        probe_op("group_norm",
                 [](std::vector<Tensor>& in) { return group_norm(in[0], 2, in[1], in[2]); },
                 {Tensor::randn({1, 4, 3, 3}, rng), Tensor::randn({4}, rng),
                  Tensor::uniform({4}, rng, 0.5, 1.5)});
        probe_op("attention",
                 [](std::vector<Tensor>& in) {
                     return attention(in[0], in[1], in[2], causal_mask(4), 2);
                 },
                 {Tensor::randn({4, 6}, rng), Tensor::randn({4, 6}, rng), Tensor::randn({4, 6}, rng)});
        verdict("gradcheck ops", worst < 1e-4, "max rel err " + std::to_string(worst) + " at " + where);
    }

    // Rasterizer vs brute force on a few seeded scenes.
    {
        bool ok = true;
        for (int scene = 0; scene < 3 && ok; ++scene) {
            Rng rng(9000 + scene);
            Camera cam = Camera::look_at(32, 32, 55.0 * 3.14159265358979 / 180.0, {0, 0, 3}, {0, 0, 0});
            std::vector<Vec3> verts;
            std::vector<std::array<int, 3>> tris;
            for (int t = 0; t < 40; ++t) {
                const int base = static_cast<int>(verts.size());
                for (int k = 0; k < 3; ++k)
                    verts.push_back({rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1, 1)});
                tris.push_back({base, base + 1, base + 2});
            }
            FragmentBuffer fb = rasterize(verts, tris, cam);
            for (int y = 0; y < 32 && ok; ++y)
                for (int x = 0; x < 32 && ok; ++x) {
                    const double px = x + 0.5, py = y + 0.5;
                    int best = -1;
                    double best_depth = 1e300;
                    for (size_t t = 0; t < tris.size(); ++t) {
                        Projected a = project_point(cam, verts[tris[t][0]]);
                        Projected b = project_point(cam, verts[tris[t][1]]);
                        Projected c = project_point(cam, verts[tris[t][2]]);
                        if (!a.valid || !b.valid || !c.valid) continue;
                        const double area = (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
                        if (area == 0) continue;
                        const double w0 = (c.u - b.u) * (py - b.v) - (c.v - b.v) * (px - b.u);
                        const double w1 = (a.u - c.u) * (py - c.v) - (a.v - c.v) * (px - c.u);
                        const double w2 = (b.u - a.u) * (py - a.v) - (b.v - a.v) * (px - a.u);
                        const bool in =
                            (w0 >= 0 && w1 >= 0 && w2 >= 0) || (w0 <= 0 && w1 <= 0 && w2 <= 0);
                        if (!in) continue;
                        const double inv_z = w0 / area / a.depth + w1 / area / b.depth + w2 / area / c.depth;
                        if (inv_z <= 0) continue;
                        const double depth = 1.0 / inv_z;
                        if (depth < best_depth ||
                            (depth == best_depth && static_cast<int>(t) < best)) {
                            best = static_cast<int>(t);
                            best_depth = depth;
                        }
                    }
                    ok = fb.at(y, x).tri == best;
                }
        }
        verdict("rasterizer oracle", ok);
    }

    // Causality of the motion model.
    {
        MotionModelConfig mc;
        mc.width = 32;
        mc.heads = 2;
        mc.layers = 2;
        mc.mel_bins = 8;
        mc.expr_dims = 3;
        mc.pose_dims = 6;
        MotionModel model(mc, 5);
        Rng rng(6);
        const int n = 6, d = mc.frame_dims();
        Tensor x = Tensor::randn({n, d}, rng);
        Tensor mel = Tensor::randn({n, 8}, rng);
        Tensor base = model.forward(x, 3, &mel);
        bool ok = true;
        for (int trial = 0; trial < 5 && ok; ++trial) {
            Tensor x2 = x.detach(), mel2 = mel.detach();
            Rng prng(100 + trial);
            for (int f = 3; f < n; ++f)
                for (int k = 0; k < d; ++k) x2.data()[f * d + k] += prng.normal() * 4;
            for (int f = 3; f < n; ++f)
                for (int k = 0; k < 8; ++k) mel2.data()[f * 8 + k] += prng.normal() * 4;
            Tensor out = model.forward(x2, 3, &mel2);
            for (int f = 0; f < 3 && ok; ++f)
                for (int k = 0; k < d; ++k) ok = out.data()[f * d + k] == base.data()[f * d + k];
        }
        verdict("motion causality", ok);
    }

    // Zero-init control equality and temporal identity.
    {
        VideoModelConfig vc;
        vc.resolution = 16;
        vc.base_channels = 8;
        vc.temb_dim = 16;
        vc.groups = 4;
        vc.attn_heads = 2;
        VideoModel model(vc, 9);
        Rng nz(10);
        for (auto& [name, t] : model.base_params().items)
            if (name == "base.head.w")
                for (auto& v : t.data()) v += 0.05 * nz.normal();
        model.freeze_base();
        Rng rng(11);
        Tensor x = Tensor::randn({2, 3, 16, 16}, rng);
        Tensor before = model.forward(x, {4, 4}, nullptr);
        model.attach_control_branch(12);
        Tensor controls = Tensor::randn({2, vc.control_channels(), 16, 16}, rng);
        Tensor with_ctrl = model.forward(x, {4, 4}, &controls);
        bool ok = true;
        for (int64_t i = 0; i < before.size(); ++i)
            ok = ok && std::abs(with_ctrl.data()[i] - before.data()[i]) < 1e-12;
        verdict("zero-init control equality", ok);

        model.insert_temporal_layers();
        Tensor after = model.forward(x, {4, 4}, &controls);
        bool ok2 = true;
        for (int64_t i = 0; i < after.size(); ++i)
            ok2 = ok2 && after.data()[i] == with_ctrl.data()[i];
        verdict("temporal identity insertion", ok2);

        // Outpaint preservation on the same toy model.
        DiffusionSchedule sched = DiffusionSchedule::cosine(50);
        SampleOptions so;
        so.sample_steps = 5;
        so.seed = 13;
        Tensor c0 = Tensor::uniform({4, vc.control_channels(), 16, 16}, rng, 0.0, 1.0);
        VideoClip first = sample_clip(model, c0, sched, so);
        VideoClip tail = first.slice_frames(2, 2);
        so.seed = 14;
        VideoClip next = outpaint_extend(model, tail, c0, sched, so);
        bool ok3 = true;
        for (int64_t i = 0; i < 2 * next.frame_size(); ++i)
            ok3 = ok3 && next.data[i] == tail.data[i];
        verdict("outpaint preservation", ok3);
    }

    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    std::printf("selfcheck %s in %.1f s\n", failures == 0 ? "passed" : "FAILED", secs);
    return failures == 0 ? 0 : 3;
}

}  // namespace
