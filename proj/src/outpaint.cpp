#include "vlogdesk/outpaint.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

namespace fs = std::filesystem;

Image VideoClip::frame_image(int f) const {
    Image img(h, w, 3);
    const double* src = data.data() + static_cast<size_t>(f) * frame_size();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) =
                    std::clamp((src[(static_cast<size_t>(c) * h + y) * w + x] + 1.0) / 2.0, 0.0, 1.0);
    return img;
}

void VideoClip::set_frame(int f, const Image& img) {
    double* dst = data.data() + static_cast<size_t>(f) * frame_size();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                dst[(static_cast<size_t>(c) * h + y) * w + x] = img.at(y, x, c) * 2.0 - 1.0;
}

VideoClip VideoClip::from_images(const std::vector<Image>& images, double fps_) {
    if (images.empty()) fail_data("VideoClip::from_images: no frames");
    VideoClip clip;
    clip.frames = static_cast<int>(images.size());
    clip.h = images[0].h;
    clip.w = images[0].w;
    clip.fps = fps_;
    clip.data.assign(static_cast<size_t>(clip.frames) * clip.frame_size(), 0.0);
    for (int f = 0; f < clip.frames; ++f) clip.set_frame(f, images[f]);
    return clip;
}

VideoClip VideoClip::slice_frames(int start, int count) const {
    if (start < 0 || count <= 0 || start + count > frames)
        fail_data("VideoClip::slice_frames: range out of bounds");
    VideoClip out;
    out.frames = count;
    out.h = h;
    out.w = w;
    out.fps = fps;
    out.data.assign(data.begin() + static_cast<size_t>(start) * frame_size(),
                    data.begin() + static_cast<size_t>(start + count) * frame_size());
    return out;
}

void save_video_png_dir(const std::string& dir, const VideoClip& clip,
                        const nlohmann::json& manifest_extra) {
    fs::create_directories(dir + "/frames");
    for (int f = 0; f < clip.frames; ++f) {
        char name[64];
        std::snprintf(name, sizeof(name), "/frames/%04d.png", f);
        save_png(dir + name, clip.frame_image(f));
    }
    nlohmann::json manifest = manifest_extra;
    manifest["frames"] = clip.frames;
    manifest["height"] = clip.h;
    manifest["width"] = clip.w;
    manifest["fps"] = clip.fps;
    std::ofstream mf(dir + "/manifest.json", std::ios::trunc);
    if (!mf) fail_data("cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
}

VideoClip load_video_png_dir(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) fail_data("cannot open " + dir + "/manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, false);
    if (manifest.is_discarded()) fail_data("invalid manifest in " + dir);
    const int n = manifest.at("frames");
    std::vector<Image> images;
    for (int f = 0; f < n; ++f) {
        char name[64];
        std::snprintf(name, sizeof(name), "/frames/%04d.png", f);
        images.push_back(load_png(dir + name));
    }
    return VideoClip::from_images(images, manifest.value("fps", 24.0));
}

OutpaintPlan OutpaintPlan::make(int clip_len, int overlap, int target_len) {
    if (clip_len <= 0 || target_len <= 0) fail_data("outpaint plan: lengths must be positive");
    if (overlap < 0 || overlap >= clip_len)
        fail_data("outpaint plan: overlap " + std::to_string(overlap) +
                  " must be in [0, clip_len)");
    return {clip_len, overlap, target_len};
}

int OutpaintPlan::calls() const {
    if (target_len <= clip_len) return 1;
    const int fresh = clip_len - overlap;
    return 1 + (target_len - clip_len + fresh - 1) / fresh;
}

int OutpaintPlan::frames_needed() const {
    return clip_len + (calls() - 1) * (clip_len - overlap);
}

namespace {

// Shared DDPM loop. `replace(t, x)` pins known content: called with the
// current step before each prediction and once with t = -1 on the final
// (already clamped) sample.
VideoClip ddpm_sample_impl(const VideoModel& model, const Tensor* controls, int n_frames,
                           const DiffusionSchedule& sched, const SampleOptions& opts,
                           const std::function<void(int, std::vector<double>&)>& replace) {
    NoGradGuard ng;
    const int res = model.config().resolution;
    const int64_t total = static_cast<int64_t>(n_frames) * 3 * res * res;
    Rng rng(opts.seed ^ 0x76696465ULL);
    std::vector<double> x(total);
    for (auto& v : x) v = rng.normal();

    const auto kept = sched.strided(opts.sample_steps);
    std::vector<int> tvec(n_frames);
    for (size_t k = 0; k < kept.size(); ++k) {
        const int t = kept[k];
        const int t_prev = k + 1 < kept.size() ? kept[k + 1] : -1;
        if (replace) replace(t, x);
        std::fill(tvec.begin(), tvec.end(), t);
        Tensor x_t = Tensor::from_data({n_frames, 3, res, res}, x);
        Tensor eps = model.forward(x_t, tvec, controls);
        const double sa = std::sqrt(sched.alpha_bar[t]);
        const double sn = std::sqrt(1.0 - sched.alpha_bar[t]);
        const auto post = sched.posterior(t, t_prev);
        for (int64_t i = 0; i < total; ++i) {
            double x0 = (x[i] - sn * eps.data()[i]) / sa;
            x0 = std::clamp(x0, -1.0, 1.0);
            double v = post.x0_coef * x0 + post.xt_coef * x[i];
            if (post.sigma > 0 && opts.noise_scale > 0)
                v += post.sigma * opts.noise_scale * rng.normal();
            if (!std::isfinite(v))
                fail_numeric("sample_clip: non-finite state at diffusion step " + std::to_string(t));
            x[i] = v;
        }
    }
    for (auto& v : x) v = std::clamp(v, -1.0, 1.0);
    if (replace) replace(-1, x);

    VideoClip clip;
    clip.frames = n_frames;
    clip.h = res;
    clip.w = res;
    clip.data = std::move(x);
    return clip;
}

}  // namespace

VideoClip sample_clip(const VideoModel& model, const Tensor& controls,
                      const DiffusionSchedule& sched, const SampleOptions& opts) {
    const int n = controls.defined() ? controls.dim(0) : 1;
    return ddpm_sample_impl(model, controls.defined() ? &controls : nullptr, n, sched, opts, {});
}

VideoClip outpaint_extend(const VideoModel& model, const VideoClip& prev_tail,
                          const Tensor& controls, const DiffusionSchedule& sched,
                          const SampleOptions& opts) {
    const int n = controls.dim(0);
    const int k = prev_tail.frames;
    if (k >= n)
        fail_data("outpaint_extend: overlap " + std::to_string(k) + " must be smaller than clip " +
                  std::to_string(n));
    if (k == 0) return sample_clip(model, controls, sched, opts);
    const int64_t known = static_cast<int64_t>(k) * prev_tail.frame_size();

    Rng noise_rng(opts.seed ^ 0x7461696cULL);
    auto replace = [&](int t, std::vector<double>& x) {
        if (t < 0) {
            std::copy(prev_tail.data.begin(), prev_tail.data.end(), x.begin());
            return;
        }
        std::vector<double> noise(known);
        for (auto& v : noise) v = noise_rng.normal();
        const auto noised = forward_diffuse(prev_tail.data, t, noise, sched);
        std::copy(noised.begin(), noised.end(), x.begin());
    };
    return ddpm_sample_impl(model, &controls, n, sched, opts, replace);
}

VideoClip generate_video(const VideoModel& model, const AvatarTemplate& tmpl,
                         const std::vector<AvatarParams>& motion, const Image& reference_image,
                         const AvatarParams& reference_params, const Camera& cam,
                         const DiffusionSchedule& sched, const GenerateOptions& opts) {
    const OutpaintPlan& plan = opts.plan;
    const int needed = plan.frames_needed();
    if (static_cast<int>(motion.size()) < needed)
        fail_data("generate_video: motion has " + std::to_string(motion.size()) +
                  " frames but the plan needs " + std::to_string(needed));

    const BakedColors baked = bake_vertex_colors(reference_image, tmpl, reference_params, cam);
    const ControlMode mode = model.config().mode;
    Rng master(opts.seed);

    auto window_controls = [&](int start, int count) {
        ControlClip clip;
        clip.reference_image = reference_image;
        clip.reference_params = reference_params;
        std::vector<Image> km;
        for (int f = start; f < start + count; ++f) {
            clip.frames.push_back(render_controls(tmpl, motion[f], cam, &baked));
            if (mode == ControlMode::Keypoints)
                km.push_back(render_keypoint_map(tmpl, motion[f], cam));
        }
        return make_control_stack(clip, mode, mode == ControlMode::Keypoints ? &km : nullptr);
    };

    VideoClip out;
    const int n = plan.clip_len, k = plan.overlap;
    for (int call = 0; call < plan.calls(); ++call) {
        SampleOptions sopts;
        sopts.sample_steps = opts.sample_steps;
        sopts.seed = master.fork(static_cast<uint64_t>(call)).next_u64();
        const int start = call == 0 ? 0 : out.frames - k;
        Tensor controls = window_controls(start, n);
        if (call == 0) {
            out = sample_clip(model, controls, sched, sopts);
            out.fps = 24.0;
        } else {
            VideoClip tail = out.slice_frames(out.frames - k, k);
            VideoClip next = outpaint_extend(model, tail, controls, sched, sopts);
            out.data.insert(out.data.end(),
                            next.data.begin() + static_cast<size_t>(k) * next.frame_size(),
                            next.data.end());
            out.frames += n - k;
        }
    }
    if (out.frames > plan.target_len) {
        out.data.resize(static_cast<size_t>(plan.target_len) * out.frame_size());
        out.frames = plan.target_len;
    }
    return out;
}

std::vector<std::vector<uint8_t>> edit_masks(const AvatarTemplate& tmpl,
                                             const std::vector<AvatarParams>& original,
                                             const std::vector<AvatarParams>& edited,
                                             const Camera& cam, int dilate) {
    if (original.size() != edited.size()) fail_data("edit_masks: sequence length mismatch");
    std::vector<std::vector<uint8_t>> masks;
    const int h = cam.height, w = cam.width;
    for (size_t f = 0; f < original.size(); ++f) {
        const ControlFrame a = render_controls(tmpl, original[f], cam);
        const ControlFrame b = render_controls(tmpl, edited[f], cam);
        std::vector<uint8_t> mask(static_cast<size_t>(h) * w, 0);
        for (int i = 0; i < h * w; ++i) {
            if (a.semantic[i] != b.semantic[i]) {
                mask[i] = 1;
                continue;
            }
            for (int c = 0; c < 3; ++c) {
                if (std::abs(a.dense.px[static_cast<size_t>(i) * 3 + c] -
                             b.dense.px[static_cast<size_t>(i) * 3 + c]) > 1e-9) {
                    mask[i] = 1;
                    break;
                }
            }
        }
        // Dilation covers rasterization boundary wobble.
        std::vector<uint8_t> dilated = mask;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (dilated[static_cast<size_t>(y) * w + x]) continue;
                bool near = false;
                for (int dy = -dilate; dy <= dilate && !near; ++dy)
                    for (int dx = -dilate; dx <= dilate && !near; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        near = mask[static_cast<size_t>(yy) * w + xx] != 0;
                    }
                if (near) dilated[static_cast<size_t>(y) * w + x] = 1;
            }
        masks.push_back(std::move(dilated));
    }
    return masks;
}

VideoClip edit_video(const VideoModel& model, const AvatarTemplate& tmpl, const VideoClip& source,
                     const std::vector<AvatarParams>& original,
                     const std::vector<AvatarParams>& edited, const Camera& cam,
                     const DiffusionSchedule& sched, const EditOptions& opts) {
    if (static_cast<int>(original.size()) != source.frames ||
        original.size() != edited.size())
        fail_data("edit_video: video and parameter sequence lengths disagree");

    const auto masks = edit_masks(tmpl, original, edited, cam, opts.dilate);
    bool any = false;
    for (const auto& m : masks)
        for (uint8_t v : m) any |= v != 0;
    if (!any) return source;  // nothing to regenerate

    const Image reference = source.frame_image(0);
    const BakedColors baked = bake_vertex_colors(reference, tmpl, original[0], cam);
    const ControlMode mode = model.config().mode;
    const int h = source.h, w = source.w;
    const int64_t fsz = source.frame_size();

    auto window_controls = [&](int start, int count) {
        ControlClip clip;
        clip.reference_image = reference;
        clip.reference_params = original[0];
        std::vector<Image> km;
        for (int f = start; f < start + count; ++f) {
            clip.frames.push_back(render_controls(tmpl, edited[f], cam, &baked));
            if (mode == ControlMode::Keypoints)
                km.push_back(render_keypoint_map(tmpl, edited[f], cam));
        }
        return make_control_stack(clip, mode, mode == ControlMode::Keypoints ? &km : nullptr);
    };

    const int n = std::min(opts.plan.clip_len, source.frames);
    const int k = source.frames > n ? std::min(opts.plan.overlap, n - 1) : 0;
    OutpaintPlan plan = OutpaintPlan::make(n, k, source.frames);

    VideoClip out;
    out.h = h;
    out.w = w;
    out.fps = source.fps;
    Rng master(opts.seed ^ 0x65646974ULL);
    for (int call = 0; call < plan.calls(); ++call) {
        const int start = call == 0 ? 0 : out.frames - k;
        const int count = std::min(n, source.frames - start);
        Tensor controls = window_controls(start, count);

        SampleOptions sopts;
        sopts.sample_steps = opts.sample_steps;
        sopts.seed = master.fork(static_cast<uint64_t>(call)).next_u64();

        // Clean targets for the held pixels of this window: the previous
        // output for overlap frames, the source elsewhere.
        std::vector<double> held(static_cast<size_t>(count) * fsz);
        for (int f = 0; f < count; ++f) {
            const int src_f = start + f;
            const bool is_overlap = call > 0 && f < k;
            const double* from = is_overlap
                                     ? out.data.data() + static_cast<size_t>(src_f) * fsz
                                     : source.data.data() + static_cast<size_t>(src_f) * fsz;
            std::copy(from, from + fsz, held.begin() + static_cast<size_t>(f) * fsz);
        }
        Rng noise_rng(sopts.seed ^ 0x686f6c64ULL);
        auto replace = [&](int t, std::vector<double>& x) {
            std::vector<double> noised;
            if (t >= 0) {
                std::vector<double> noise(held.size());
                for (auto& v : noise) v = noise_rng.normal();
                noised = forward_diffuse(held, t, noise, sched);
            }
            const std::vector<double>& ref = t >= 0 ? noised : held;
            for (int f = 0; f < count; ++f) {
                const int src_f = start + f;
                const bool is_overlap = call > 0 && f < k;
                const auto& mask = masks[src_f];
                for (int c = 0; c < 3; ++c)
                    for (int i = 0; i < h * w; ++i) {
                        const size_t idx =
                            static_cast<size_t>(f) * fsz + static_cast<size_t>(c) * h * w + i;
                        if (is_overlap || !mask[i]) x[idx] = ref[idx];
                    }
            }
        };
        VideoClip win = ddpm_sample_impl(model, &controls, count, sched, sopts, replace);

        if (call == 0) {
            out.data = win.data;
            out.frames = count;
        } else {
            out.data.insert(out.data.end(), win.data.begin() + static_cast<size_t>(k) * fsz,
                            win.data.end());
            out.frames += count - k;
        }
        if (out.frames >= source.frames) break;
    }
    out.data.resize(static_cast<size_t>(source.frames) * fsz);
    out.frames = source.frames;
    return out;
}

std::vector<AvatarParams> apply_edit_script(const AvatarTemplate& tmpl,
                                            const std::vector<AvatarParams>& params,
                                            const nlohmann::json& script) {
    if (!script.is_array()) fail_data("edit script must be a JSON array");
    std::vector<AvatarParams> out = params;
    for (const auto& entry : script) {
        const auto& range = entry.at("frames");
        int first = range.at(0).get<int>();
        int last = range.at(1).get<int>();
        first = std::max(0, first);
        last = std::min<int>(static_cast<int>(out.size()) - 1, last);
        for (const auto& [name, value] : entry.at("set").items()) {
            const auto it = std::find(tmpl.expression_names.begin(), tmpl.expression_names.end(), name);
            if (it == tmpl.expression_names.end())
                fail_data("edit script: unknown expression channel '" + name + "'");
            const int idx = static_cast<int>(it - tmpl.expression_names.begin());
            for (int f = first; f <= last; ++f) out[f].expression[idx] = value.get<double>();
        }
    }
    return out;
}

}  // namespace vlogdesk
