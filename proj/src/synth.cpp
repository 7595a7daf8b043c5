#include "vlogdesk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 jitter_color(const Vec3& base, double amount, Rng& rng) {
    auto c = [&](double v) { return std::clamp(v + amount * (rng.uniform() - 0.5), 0.02, 0.98); };
    return {c(base.x), c(base.y), c(base.z)};
}

// Smooth mean-reverting walk used for sway/gesture/expression channels.
// Starts at zero (the reference frame) and drifts toward occasional new
// targets slowly enough that sample trajectories keep spreading over a few
// seconds.
struct SmoothWalk {
    double value = 0;
    double target = 0;
    double amplitude;
    double agility;
    Rng rng;

    SmoothWalk(double amplitude_, double agility_, Rng rng_)
        : amplitude(amplitude_), agility(agility_), rng(rng_) {}

    double step() {
        if (rng.uniform() < agility) target = amplitude * (2.0 * rng.uniform() - 1.0);
        value += 0.08 * (target - value);
        return value;
    }
};

}  // namespace

SceneIdentity make_identity(const AvatarTemplate& tmpl, uint64_t identity_seed) {
    Rng rng(identity_seed * 0x9e3779b97f4a7c15ULL + 17);
    SceneIdentity id;

    // Per-class palette with per-identity variation.
    const Vec3 skin = jitter_color({0.75, 0.58, 0.45}, 0.45, rng);
    const Vec3 shirt = jitter_color({0.25, 0.35, 0.60}, 0.7, rng);
    const Vec3 mouth = jitter_color({0.62, 0.15, 0.18}, 0.12, rng);
    const Vec3 eyes = jitter_color({0.12, 0.10, 0.10}, 0.1, rng);
    const Vec3 hands = jitter_color(skin, 0.06, rng);
    id.background = jitter_color({0.5, 0.55, 0.5}, 0.6, rng);

    id.vertex_colors.resize(tmpl.vertex_count());
    Rng vrng = rng.fork(2);
    const double phase = vrng.uniform(0.0, 6.28);
    const double freq = vrng.uniform(6.0, 14.0);
    for (int v = 0; v < tmpl.vertex_count(); ++v) {
        Vec3 base;
        switch (tmpl.semantic_label[v]) {
            case kClassFace: base = skin; break;
            case kClassEyes: base = eyes; break;
            case kClassMouth: base = mouth; break;
            case kClassTorso: base = shirt; break;
            case kClassLeftArm:
            case kClassRightArm: base = shirt; break;
            case kClassHands: base = hands; break;
            default: base = skin; break;
        }
        // Smooth per-vertex shading variation (stripes on the shirt, gentle
        // gradients elsewhere) so warps carry real appearance information.
        const Vec3 p = tmpl.vertices[v];
        const double mod = 0.06 * std::sin(freq * p.y + 3.0 * p.x + phase);
        id.vertex_colors[v] = {std::clamp(base.x + mod, 0.02, 0.98),
                               std::clamp(base.y + mod, 0.02, 0.98),
                               std::clamp(base.z + mod * 0.5, 0.02, 0.98)};
    }

    id.fov = rng.uniform(45.0, 55.0) * kPi / 180.0;
    id.camera_dist = rng.uniform(1.40, 1.65);
    id.shape.resize(kNumShapeCoeffs);
    for (auto& s : id.shape) s = rng.normal() * 0.4;

    // Reference poses differ meaningfully across identities, the way real
    // reference images do; the residual parameterization absorbs this while
    // absolute prediction has to infer it from audio alone.
    id.base_pose.assign(kNumJoints, Vec3{});
    Rng prng = rng.fork(3);
    for (int j : {static_cast<int>(kJointLeftShoulder), static_cast<int>(kJointRightShoulder)})
        id.base_pose[j] = {prng.normal() * 0.12, prng.normal() * 0.08, prng.normal() * 0.20};
    for (int j : {static_cast<int>(kJointLeftElbow), static_cast<int>(kJointRightElbow)})
        id.base_pose[j] = {prng.normal() * 0.12, prng.normal() * 0.08, prng.normal() * 0.15};
    id.base_pose[kJointNeck] = {prng.normal() * 0.06, prng.normal() * 0.08, prng.normal() * 0.06};
    id.base_pose[kJointHead] = {prng.normal() * 0.06, prng.normal() * 0.10, prng.normal() * 0.06};
    return id;
}

SyntheticScene make_scene(const AvatarTemplate& tmpl, uint64_t seed, double duration_s, double fps,
                          int resolution) {
    SyntheticScene scene;
    scene.seed = seed;
    scene.fps = fps;
    scene.duration = duration_s;
    scene.resolution = resolution;
    scene.identity = make_identity(tmpl, seed);
    scene.camera = Camera::look_at(resolution, resolution, scene.identity.fov,
                                   {0, 1.3, scene.identity.camera_dist}, {0, 1.3, 0});

    // ---- audio: amplitude-modulated "phoneme" bursts ----
    Rng arng(seed * 31 + 5);
    const int n_samples = static_cast<int>(std::lround(duration_s * kAudioRate));
    scene.audio.sample_rate = kAudioRate;
    scene.audio.samples.assign(n_samples, 0.0);
    double t = arng.uniform(0.0, 0.25);
    while (t < duration_s) {
        const double burst_len = arng.uniform(0.08, 0.25);
        const double f0 = arng.uniform(150.0, 900.0);
        const double amp = arng.uniform(0.35, 1.0);
        const int i0 = static_cast<int>(t * kAudioRate);
        const int len = static_cast<int>(burst_len * kAudioRate);
        for (int i = 0; i < len && i0 + i < n_samples; ++i) {
            const double env = 0.5 * (1.0 - std::cos(2.0 * kPi * i / len));
            const double ph = 2.0 * kPi * f0 * i / kAudioRate;
            scene.audio.samples[i0 + i] +=
                amp * env * (std::sin(ph) + 0.35 * std::sin(2.0 * ph + 0.7));
        }
        t += burst_len + arng.uniform(0.03, 0.45);
    }
    double peak = 0;
    for (double s : scene.audio.samples) peak = std::max(peak, std::abs(s));
    if (peak > 0)
        for (auto& s : scene.audio.samples) s *= 0.95 / peak;

    // ---- motion ----
    const int n_frames = static_cast<int>(std::lround(duration_s * fps));
    const auto env = energy_envelope(scene.audio, fps);
    double env_peak = 1e-9;
    for (double e : env) env_peak = std::max(env_peak, e);

    scene.reference_params.shape = scene.identity.shape;
    scene.reference_params.pose = scene.identity.base_pose;
    scene.reference_params.expression.assign(kNumExpressions, 0.0);

    Rng mrng(seed * 131 + 7);
    SmoothWalk head_x(0.10, 0.05, mrng.fork(1));
    SmoothWalk head_y(0.10, 0.05, mrng.fork(2));
    SmoothWalk neck_z(0.05, 0.04, mrng.fork(3));
    SmoothWalk arm_gesture(0.18, 0.03, mrng.fork(4));
    SmoothWalk brow(0.20, 0.025, mrng.fork(5));
    SmoothWalk smile(0.25, 0.02, mrng.fork(6));
    SmoothWalk gaze_x(0.35, 0.025, mrng.fork(7));
    SmoothWalk gaze_y(0.25, 0.02, mrng.fork(8));
    Rng blink_rng = mrng.fork(9);
    Rng jaw_rng = mrng.fork(10);
    SmoothWalk mouth_wide(0.20, 0.02, mrng.fork(11));
    SmoothWalk cheek(0.15, 0.015, mrng.fork(12));

    // Blink onsets at Poisson times (0.3 Hz).
    std::vector<int> blink_frames;
    double bt = 0;
    while (true) {
        bt += -std::log(std::max(blink_rng.uniform(), 1e-12)) / 0.3;
        if (bt >= duration_s) break;
        blink_frames.push_back(static_cast<int>(bt * fps));
    }
    const int blink_len = std::max(2, static_cast<int>(fps * 0.15));

    for (int f = 0; f < n_frames; ++f) {
        AvatarParams p = scene.reference_params;
        const double env_norm = env[std::min<int>(f, env.size() - 1)] / env_peak;
        p.expression[kExprJaw] = std::clamp(0.8 * env_norm + 0.03 * jaw_rng.normal(), 0.0, 1.0);
        double eyelid = 0.0;
        for (int bf : blink_frames) {
            const int d = f - bf;
            if (d >= 0 && d < blink_len) eyelid = std::max(eyelid, 1.0 - std::abs(2.0 * d / blink_len - 1.0));
        }
        p.expression[kExprEyelids] = eyelid;
        p.expression[kExprBrow] = brow.step();
        p.expression[kExprSmile] = smile.step();
        p.expression[kExprGazeX] = gaze_x.step();
        p.expression[kExprGazeY] = gaze_y.step();
        p.expression[kExprMouthWide] = mouth_wide.step();
        p.expression[kExprCheekPuff] = cheek.step();

        p.pose[kJointHead] += Vec3{head_x.step(), head_y.step(), 0};
        p.pose[kJointNeck] += Vec3{0, 0, neck_z.step()};
        p.pose[kJointRightElbow] += Vec3{0, 0, arm_gesture.step()};
        scene.motion.push_back(std::move(p));
    }

    // ---- ground-truth frames ----
    for (int f = 0; f < n_frames; ++f) {
        scene.frames.push_back(render_colored(tmpl, pose_mesh(tmpl, scene.motion[f]),
                                              scene.identity.vertex_colors, scene.camera,
                                              scene.identity.background));
    }
    return scene;
}

void save_scene(const std::string& dir, const SyntheticScene& scene) {
    fs::create_directories(dir + "/frames");
    save_wav(dir + "/audio.wav", scene.audio);
    save_params_sequence(dir + "/motion.json", scene.motion);
    for (size_t f = 0; f < scene.frames.size(); ++f) {
        char name[64];
        std::snprintf(name, sizeof(name), "/frames/%04zu.png", f);
        save_png(dir + name, scene.frames[f]);
    }
    nlohmann::json meta;
    meta["seed"] = scene.seed;
    meta["fps"] = scene.fps;
    meta["duration"] = scene.duration;
    meta["resolution"] = scene.resolution;
    meta["fov"] = scene.identity.fov;
    meta["camera_dist"] = scene.identity.camera_dist;
    meta["reference_params"] =
        nlohmann::json::parse(params_sequence_to_json({scene.reference_params}));
    std::ofstream mf(dir + "/meta.json", std::ios::trunc);
    if (!mf) fail_data("cannot write " + dir + "/meta.json");
    mf << meta.dump(2) << "\n";
}

SyntheticScene load_scene(const AvatarTemplate& tmpl, const std::string& dir) {
    std::ifstream mf(dir + "/meta.json");
    if (!mf) fail_data("cannot open " + dir + "/meta.json");
    nlohmann::json meta = nlohmann::json::parse(mf, nullptr, false);
    if (meta.is_discarded()) fail_data("invalid meta.json in " + dir);

    SyntheticScene scene;
    scene.seed = meta.at("seed");
    scene.fps = meta.at("fps");
    scene.duration = meta.at("duration");
    scene.resolution = meta.at("resolution");
    scene.identity = make_identity(tmpl, scene.seed);
    scene.camera = Camera::look_at(scene.resolution, scene.resolution, scene.identity.fov,
                                   {0, 1.3, scene.identity.camera_dist}, {0, 1.3, 0});
    scene.audio = load_wav(dir + "/audio.wav");
    scene.motion = load_params_sequence(dir + "/motion.json");
    scene.reference_params =
        params_sequence_from_json(meta.at("reference_params").dump()).at(0);
    for (size_t f = 0; f < scene.motion.size(); ++f) {
        char name[64];
        std::snprintf(name, sizeof(name), "/frames/%04zu.png", f);
        scene.frames.push_back(load_png(dir + name));
    }
    return scene;
}

nlohmann::json DatasetManifest::to_json() const {
    return {{"train_seeds", train_seeds}, {"test_seeds", test_seeds}, {"duration", duration},
            {"fps", fps},                 {"resolution", resolution}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.train_seeds = j.at("train_seeds").get<std::vector<uint64_t>>();
    m.test_seeds = j.at("test_seeds").get<std::vector<uint64_t>>();
    m.duration = j.at("duration");
    m.fps = j.at("fps");
    m.resolution = j.at("resolution");
    return m;
}

std::string scene_dir(const std::string& data_dir, uint64_t seed) {
    return data_dir + "/scenes/" + std::to_string(seed);
}

DatasetManifest make_dataset(const AvatarTemplate& tmpl, const std::string& out_dir, int n_train,
                             int n_test, uint64_t seed, double duration_s, double fps,
                             int resolution) {
    if (n_train <= 0 || n_test <= 0)
        fail_data("make_dataset: train and test counts must be positive");
    DatasetManifest manifest;
    manifest.duration = duration_s;
    manifest.fps = fps;
    manifest.resolution = resolution;
    for (int i = 0; i < n_train; ++i) manifest.train_seeds.push_back(seed + i);
    for (int i = 0; i < n_test; ++i) manifest.test_seeds.push_back(seed + 1000000 + i);

    fs::create_directories(out_dir);
    auto emit = [&](uint64_t s) {
        SyntheticScene scene = make_scene(tmpl, s, duration_s, fps, resolution);
        save_scene(scene_dir(out_dir, s), scene);
    };
    for (uint64_t s : manifest.train_seeds) emit(s);
    for (uint64_t s : manifest.test_seeds) emit(s);

    std::ofstream mf(out_dir + "/manifest.json", std::ios::trunc);
    if (!mf) fail_data("cannot write " + out_dir + "/manifest.json");
    mf << manifest.to_json().dump(2) << "\n";
    return manifest;
}

DatasetManifest load_manifest(const std::string& data_dir) {
    std::ifstream mf(data_dir + "/manifest.json");
    if (!mf) fail_data("cannot open " + data_dir + "/manifest.json");
    nlohmann::json j = nlohmann::json::parse(mf, nullptr, false);
    if (j.is_discarded()) fail_data("invalid manifest in " + data_dir);
    return DatasetManifest::from_json(j);
}

MotionTrack scene_motion_track(const SyntheticScene& scene, int mel_bins) {
    MotionTrack track;
    track.frames = scene.frame_count();
    MelOptions mopts;
    mopts.mel_bins = mel_bins;
    const MelSpectrogram mel = mel_spectrogram(scene.audio, scene.fps, mopts);
    if (mel.rows < track.frames)
        fail_data("scene_motion_track: mel rows fall short of the motion frames");
    track.mel_cols = mel.cols;
    track.mel.assign(mel.data.begin(),
                     mel.data.begin() + static_cast<size_t>(track.frames) * mel.cols);
    for (int f = 0; f < track.frames; ++f) {
        const AvatarParams& p = scene.motion[f];
        for (double e : p.expression) track.expr.push_back(e);
        for (const auto& aa : p.pose) {
            track.pose_abs.push_back(aa.x);
            track.pose_abs.push_back(aa.y);
            track.pose_abs.push_back(aa.z);
        }
    }
    for (const auto& aa : scene.reference_params.pose) {
        track.ref_pose.push_back(aa.x);
        track.ref_pose.push_back(aa.y);
        track.ref_pose.push_back(aa.z);
    }
    return track;
}

}  // namespace vlogdesk
