#include "vlogdesk/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

std::vector<SyntheticScene> load_scenes(const AvatarTemplate& tmpl, const std::string& data_dir,
                                        const std::vector<uint64_t>& seeds, int limit) {
    std::vector<SyntheticScene> scenes;
    int count = 0;
    for (uint64_t s : seeds) {
        if (limit >= 0 && count >= limit) break;
        scenes.push_back(load_scene(tmpl, scene_dir(data_dir, s)));
        ++count;
    }
    if (scenes.empty()) fail_data("no scenes found under " + data_dir);
    return scenes;
}

std::vector<MotionTrack> make_motion_tracks(const std::vector<SyntheticScene>& scenes,
                                            int mel_bins) {
    std::vector<MotionTrack> tracks;
    tracks.reserve(scenes.size());
    for (const auto& s : scenes) tracks.push_back(scene_motion_track(s, mel_bins));
    return tracks;
}

namespace {

Tensor frames_tensor(const SyntheticScene& scene, int start, int count) {
    std::vector<Image> images(scene.frames.begin() + start, scene.frames.begin() + start + count);
    VideoClip clip = VideoClip::from_images(images, scene.fps);
    return Tensor::from_data({count, 3, clip.h, clip.w}, clip.data);
}

// Reference index at temporal distance >= gap_min from [start, start+len).
int sample_reference_index(const SyntheticScene& scene, int start, int len, int gap_min, Rng& rng) {
    std::vector<int> feasible;
    for (int r = 0; r < scene.frame_count(); ++r) {
        const int dist = r < start ? start - r : (r >= start + len ? r - (start + len - 1) : 0);
        if (dist >= gap_min) feasible.push_back(r);
    }
    if (feasible.empty())
        fail_data("reference sampling: no frame at distance >= " + std::to_string(gap_min) +
                  " from a length-" + std::to_string(len) + " window (scene has " +
                  std::to_string(scene.frame_count()) + " frames)");
    return feasible[rng.uniform_int(0, static_cast<int64_t>(feasible.size()) - 1)];
}

Tensor controls_for_window(const AvatarTemplate& tmpl, const SyntheticScene& scene, int start,
                           int len, int ref, ControlMode mode) {
    ControlClip clip;
    clip.reference_image = scene.frames[ref];
    clip.reference_params = scene.motion[ref];
    const BakedColors baked =
        bake_vertex_colors(scene.frames[ref], tmpl, scene.motion[ref], scene.camera);
    std::vector<Image> km;
    for (int f = start; f < start + len; ++f) {
        clip.frames.push_back(render_controls(tmpl, scene.motion[f], scene.camera, &baked));
        if (mode == ControlMode::Keypoints)
            km.push_back(render_keypoint_map(tmpl, scene.motion[f], scene.camera));
    }
    return make_control_stack(clip, mode, mode == ControlMode::Keypoints ? &km : nullptr);
}

}  // namespace

VideoClipItem draw_base_frame(const std::vector<SyntheticScene>& scenes, Rng& rng) {
    const auto& scene = scenes[rng.uniform_int(0, static_cast<int64_t>(scenes.size()) - 1)];
    const int f = static_cast<int>(rng.uniform_int(0, scene.frame_count() - 1));
    VideoClipItem item;
    item.clip = frames_tensor(scene, f, 1);
    return item;
}

VideoClipItem draw_control_frame(const AvatarTemplate& tmpl,
                                 const std::vector<SyntheticScene>& scenes, ControlMode mode,
                                 int gap_min, Rng& rng) {
    const auto& scene = scenes[rng.uniform_int(0, static_cast<int64_t>(scenes.size()) - 1)];
    const int f = static_cast<int>(rng.uniform_int(0, scene.frame_count() - 1));
    const int ref = sample_reference_index(scene, f, 1, gap_min, rng);
    VideoClipItem item;
    item.clip = frames_tensor(scene, f, 1);
    item.controls = controls_for_window(tmpl, scene, f, 1, ref, mode);
    return item;
}

VideoClipItem draw_control_clip(const AvatarTemplate& tmpl,
                                const std::vector<SyntheticScene>& scenes, ControlMode mode,
                                int gap_min, int clip_len, Rng& rng) {
    const auto& scene = scenes[rng.uniform_int(0, static_cast<int64_t>(scenes.size()) - 1)];
    if (scene.frame_count() < clip_len)
        fail_data("draw_control_clip: scene shorter than the clip length");
    // Restrict starts to windows that admit a reference at the required gap.
    std::vector<int> starts;
    for (int s = 0; s + clip_len <= scene.frame_count(); ++s) {
        const bool left = s >= gap_min;
        const bool right = scene.frame_count() - (s + clip_len) >= gap_min;
        if (left || right) starts.push_back(s);
    }
    if (starts.empty())
        fail_data("draw_control_clip: no window admits a reference at gap_min " +
                  std::to_string(gap_min));
    const int start = starts[rng.uniform_int(0, static_cast<int64_t>(starts.size()) - 1)];
    const int ref = sample_reference_index(scene, start, clip_len, gap_min, rng);
    VideoClipItem item;
    item.clip = frames_tensor(scene, start, clip_len);
    item.controls = controls_for_window(tmpl, scene, start, clip_len, ref, mode);
    return item;
}

VideoModel pretrain_base_model(const RunConfig& cfg, const std::vector<SyntheticScene>& scenes,
                               const DiffusionSchedule& sched,
                               const std::function<bool(int, double)>& progress) {
    VideoModel model(cfg.video_config(), cfg.data.seed ^ 0xba5eULL);
    VideoTrainOptions opts;
    opts.steps = cfg.video.base_steps;
    opts.items_per_step = cfg.video.base_batch;
    opts.lr = cfg.video.base_lr;
    opts.seed = cfg.data.seed ^ 0xba5e7212ULL;
    auto draw = [&](Rng& rng) { return draw_base_frame(scenes, rng); };
    auto log = train_video(model, draw, model.base_params(), sched, opts, progress);
    if (!log.empty() && !std::isfinite(log.back().loss))
        fail_numeric("pretrain_base: divergent loss");
    model.freeze_base();
    return model;
}

void train_video_pipeline(VideoModel& model, const RunConfig& cfg,
                          const std::vector<SyntheticScene>& scenes,
                          const DiffusionSchedule& sched, VideoTrainSchedule schedule_kind,
                          const std::function<bool(int, double)>& progress) {
    const AvatarTemplate tmpl = build_desk_avatar();
    const ControlMode mode = model.config().mode;
    if (!model.has_control()) model.attach_control_branch(cfg.data.seed ^ 0xc7121ULL);

    auto frame_draw = [&](Rng& rng) {
        return draw_control_frame(tmpl, scenes, mode, cfg.video.gap_min, rng);
    };
    auto clip_draw = [&](Rng& rng) {
        return draw_control_clip(tmpl, scenes, mode, cfg.video.gap_min, cfg.video.train_clip_len,
                                 rng);
    };

    if (schedule_kind == VideoTrainSchedule::TwoStage) {
        VideoTrainOptions s1;
        s1.steps = cfg.video.stage1_steps;
        s1.items_per_step = cfg.video.stage1_batch;
        s1.lr = cfg.video.lr;
        s1.seed = cfg.data.seed ^ 0x57a6e1ULL;
        train_video(model, frame_draw, model.control_params(), sched, s1, progress);

        model.insert_temporal_layers();
        ParamSet stage2;
        stage2.append(model.control_params());
        stage2.append(model.temporal_params());
        VideoTrainOptions s2;
        s2.steps = cfg.video.stage2_steps;
        s2.items_per_step = cfg.video.stage2_clips;
        s2.lr = cfg.video.lr;
        s2.seed = cfg.data.seed ^ 0x57a6e2ULL;
        train_video(model, clip_draw, stage2, sched, s2, progress);
    } else {
        // Joint single-stage baseline: everything attached from the start,
        // trained on clips for a sample-count-matched budget.
        model.insert_temporal_layers();
        ParamSet all;
        all.append(model.control_params());
        all.append(model.temporal_params());
        const int frames_two_stage = cfg.video.stage1_steps * cfg.video.stage1_batch +
                                     cfg.video.stage2_steps * cfg.video.stage2_clips *
                                         cfg.video.train_clip_len;
        const int per_step = std::max(1, cfg.video.stage2_clips * cfg.video.train_clip_len);
        VideoTrainOptions sj;
        sj.steps = std::max(1, frames_two_stage / per_step);
        sj.items_per_step = cfg.video.stage2_clips;
        sj.lr = cfg.video.lr;
        sj.seed = cfg.data.seed ^ 0x57a6e3ULL;
        train_video(model, clip_draw, all, sched, sj, progress);
    }
}

ReenactResult reenact_scene(const VideoModel& model, const AvatarTemplate& tmpl,
                            const SyntheticScene& scene, const DiffusionSchedule& sched,
                            const RunConfig& cfg, int length, uint64_t seed) {
    const int L = std::min(length, scene.frame_count());
    GenerateOptions opts;
    opts.plan = OutpaintPlan::make(std::min(cfg.video.clip_len, L),
                                   std::min(cfg.video.overlap, std::min(cfg.video.clip_len, L) - 1),
                                   L);
    opts.sample_steps = cfg.video.sample_steps;
    opts.seed = seed;
    // The plan may peek past L; pad the motion by holding the last frame.
    std::vector<AvatarParams> motion(scene.motion.begin(), scene.motion.begin() + L);
    while (static_cast<int>(motion.size()) < opts.plan.frames_needed())
        motion.push_back(motion.back());

    ReenactResult result;
    result.generated = generate_video(model, tmpl, motion, scene.frames[0], scene.motion[0],
                                      scene.camera, sched, opts);
    result.generated.fps = scene.fps;

    std::vector<Image> gt_images(scene.frames.begin(), scene.frames.begin() + L);
    const VideoClip gt = VideoClip::from_images(gt_images, scene.fps);
    result.full = image_metrics(result.generated, gt);
    std::vector<std::vector<uint8_t>> semantic;
    for (int f = 0; f < L; ++f) {
        const auto posed = pose_mesh(tmpl, scene.motion[f]);
        const FragmentBuffer fb = rasterize(posed, tmpl.triangles, scene.camera);
        semantic.push_back(render_semantic(tmpl, fb));
    }
    result.per_part = per_part_image_metrics(result.generated, gt, semantic);
    return result;
}

}  // namespace vlogdesk
