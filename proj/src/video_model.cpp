#include "vlogdesk/video_model.hpp"

#include <cmath>

#include "vlogdesk/checkpoint.hpp"
#include "vlogdesk/errors.hpp"

namespace vlogdesk {

std::string control_mode_name(ControlMode mode) {
    switch (mode) {
        case ControlMode::Keypoints: return "keypoints";
        case ControlMode::Dense: return "dense";
        case ControlMode::DenseWarp: return "dense_warp";
    }
    return "dense_warp";
}

ControlMode control_mode_from_name(const std::string& name) {
    if (name == "keypoints") return ControlMode::Keypoints;
    if (name == "dense") return ControlMode::Dense;
    if (name == "dense_warp") return ControlMode::DenseWarp;
    fail_data("unknown control mode '" + name + "'");
}

nlohmann::json VideoModelConfig::to_json() const {
    return {{"resolution", resolution}, {"base_channels", base_channels},
            {"temb_dim", temb_dim},     {"groups", groups},
            {"attn_heads", attn_heads}, {"temporal_kernel", temporal_kernel},
            {"n_classes", n_classes},   {"mode", control_mode_name(mode)}};
}

VideoModelConfig VideoModelConfig::from_json(const nlohmann::json& j) {
    VideoModelConfig c;
    c.resolution = j.at("resolution");
    c.base_channels = j.at("base_channels");
    c.temb_dim = j.at("temb_dim");
    c.groups = j.at("groups");
    c.attn_heads = j.at("attn_heads");
    c.temporal_kernel = j.at("temporal_kernel");
    c.n_classes = j.at("n_classes");
    c.mode = control_mode_from_name(j.at("mode"));
    return c;
}

Tensor make_control_stack(const ControlClip& clip, ControlMode mode,
                          const std::vector<Image>* keypoint_maps) {
    const int n = static_cast<int>(clip.frames.size());
    if (n == 0) fail_data("make_control_stack: empty clip");
    const int h = clip.frames[0].h, w = clip.frames[0].w;
    const int hw = h * w;
    int cc = 0;
    switch (mode) {
        case ControlMode::Keypoints: cc = 6; break;
        case ControlMode::Dense: cc = 3 + kNumClasses + 3; break;
        case ControlMode::DenseWarp: cc = 3 + kNumClasses + 3 + 1 + 3; break;
    }
    if (mode == ControlMode::Keypoints &&
        (!keypoint_maps || keypoint_maps->size() != clip.frames.size()))
        fail_data("make_control_stack: keypoints mode needs one keypoint map per frame");

    Tensor out = Tensor::zeros({n, cc, h, w});
    auto plane = [&](int f, int c) {
        return out.data().begin() + (static_cast<size_t>(f) * cc + c) * hw;
    };
    auto copy_image = [&](int f, int c0, const Image& img) {
        for (int ch = 0; ch < img.c && ch < 3; ++ch) {
            auto dst = plane(f, c0 + ch);
            for (int i = 0; i < hw; ++i) dst[i] = img.px[static_cast<size_t>(i) * img.c + ch];
        }
    };
    for (int f = 0; f < n; ++f) {
        const ControlFrame& fr = clip.frames[f];
        int c = 0;
        if (mode == ControlMode::Keypoints) {
            copy_image(f, c, (*keypoint_maps)[f]);
            c += 3;
        } else {
            copy_image(f, c, fr.dense);
            c += 3;
            for (int i = 0; i < hw; ++i) {
                const uint8_t cls = fr.semantic[i];
                if (cls != kClassBackground) plane(f, c + cls)[i] = 1.0;
            }
            c += kNumClasses;
            if (mode == ControlMode::DenseWarp) {
                copy_image(f, c, fr.warp);
                c += 3;
                auto dst = plane(f, c);
                for (int i = 0; i < hw; ++i) dst[i] = fr.warp_valid[i];
                c += 1;
            }
        }
        copy_image(f, c, clip.reference_image);
    }
    return out;
}

namespace {

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
    return Tensor::randn(std::move(shape), rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

}  // namespace

VideoModel::VideoModel(VideoModelConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    Rng rng(init_seed);
    const int c1 = cfg_.base_channels;
    const int c2 = 2 * c1;
    const int te = cfg_.temb_dim;

    auto conv = [&](const std::string& name, int oc, int ic, int k) {
        base_.add(name + ".w", he_init({oc, ic, k, k}, ic * k * k, rng));
        base_.add(name + ".b", Tensor::zeros({oc}));
    };
    auto gn = [&](const std::string& name, int c) {
        base_.add(name + ".g", Tensor::full({c}, 1.0));
        base_.add(name + ".b", Tensor::zeros({c}));
    };
    auto lin = [&](const std::string& name, int in, int out) {
        base_.add(name + ".w", he_init({in, out}, in, rng));
        base_.add(name + ".b", Tensor::zeros({out}));
    };

    lin("base.temb.l1", te, te);
    lin("base.temb.l2", te, te);
    conv("base.stem", c1, 3, 3);
    for (int blk = 1; blk <= 2; ++blk) {
        const int c = blk == 1 ? c1 : c2;
        const std::string p = "base.down" + std::to_string(blk);
        conv(p + ".conv_a", c, c, 3);
        gn(p + ".gn_a", c);
        lin(p + ".temb", te, c);
        conv(p + ".conv_b", c, c, 3);
        gn(p + ".gn_b", c);
        conv(p + ".down", c2, c, 3);
    }
    conv("base.mid.conv1", c2, c2, 3);
    gn("base.mid.gn1", c2);
    lin("base.mid.temb", te, c2);
    gn("base.mid.attn_gn", c2);
    base_.add("base.mid.attn_q.w", he_init({c2, c2}, c2, rng));
    base_.add("base.mid.attn_k.w", he_init({c2, c2}, c2, rng));
    base_.add("base.mid.attn_v.w", he_init({c2, c2}, c2, rng));
    base_.add("base.mid.attn_o.w", he_init({c2, c2}, c2, rng));
    base_.add("base.mid.attn_o.b", Tensor::zeros({c2}));
    conv("base.mid.conv2", c2, c2, 3);
    gn("base.mid.gn2", c2);

    // Decoder.
    base_.add("base.up2.convt.w", he_init({c2, c2, 4, 4}, c2 * 16, rng));
    base_.add("base.up2.convt.b", Tensor::zeros({c2}));
    conv("base.up2.conv_a", c2, 2 * c2, 3);
    gn("base.up2.gn_a", c2);
    lin("base.up2.temb", te, c2);
    conv("base.up2.conv_b", c2, c2, 3);
    gn("base.up2.gn_b", c2);
    base_.add("base.up1.convt.w", he_init({c2, c1, 4, 4}, c2 * 16, rng));
    base_.add("base.up1.convt.b", Tensor::zeros({c1}));
    conv("base.up1.conv_a", c1, 2 * c1, 3);
    gn("base.up1.gn_a", c1);
    lin("base.up1.temb", te, c1);
    conv("base.up1.conv_b", c1, c1, 3);
    gn("base.up1.gn_b", c1);
    gn("base.head.gn", c1);
    // Zero head: the initial prediction is zero noise.
    base_.add("base.head.w", Tensor::zeros({3, c1, 3, 3}));
    base_.add("base.head.b", Tensor::zeros({3}));
}

void VideoModel::attach_control_branch(uint64_t init_seed) {
    if (has_control_) fail_data("attach_control_branch: branch already attached");
    Rng rng(init_seed ^ 0xc0117101ULL);
    const int c1 = cfg_.base_channels;
    const int c2 = 2 * c1;
    const int cc = cfg_.control_channels();

    // Fresh stem for the control stack.
    control_.add("ctrl.stem.w", he_init({c1, cc, 3, 3}, cc * 9, rng));
    control_.add("ctrl.stem.b", Tensor::zeros({c1}));

    // Trainable copy of the encoder (stem + both downsampling blocks).
    auto copy_from_base = [&](const std::string& name) {
        const Tensor* src = find("base." + name);
        control_.add("ctrl.copy." + name, Tensor::from_data(src->shape(), src->data()));
    };
    copy_from_base("stem.w");
    copy_from_base("stem.b");
    for (int blk = 1; blk <= 2; ++blk) {
        const std::string p = "down" + std::to_string(blk);
        for (const char* leaf : {".conv_a.w", ".conv_a.b", ".gn_a.g", ".gn_a.b", ".temb.w",
                                 ".temb.b", ".conv_b.w", ".conv_b.b", ".gn_b.g", ".gn_b.b",
                                 ".down.w", ".down.b"})
            copy_from_base(p + leaf);
    }

    // Zero-initialized projections into the base encoder.
    control_.add("ctrl.zero1.w", Tensor::zeros({c1, c1, 1, 1}));
    control_.add("ctrl.zero1.b", Tensor::zeros({c1}));
    control_.add("ctrl.zero2.w", Tensor::zeros({c2, c2, 1, 1}));
    control_.add("ctrl.zero2.b", Tensor::zeros({c2}));
    control_.add("ctrl.zero3.w", Tensor::zeros({c2, c2, 1, 1}));
    control_.add("ctrl.zero3.b", Tensor::zeros({c2}));
    has_control_ = true;
}

void VideoModel::insert_temporal_layers() {
    if (has_temporal_) fail_data("insert_temporal_layers: already inserted");
    const int c1 = cfg_.base_channels;
    const int c2 = 2 * c1;
    const int k = cfg_.temporal_kernel;
    auto identity_kernel = [&](int c) {
        Tensor w = Tensor::zeros({c, c, k});
        for (int i = 0; i < c; ++i) w.data()[(static_cast<size_t>(i) * c + i) * k + k / 2] = 1.0;
        return w;
    };
    temporal_.add("temporal.base.down1.w", identity_kernel(c1));
    temporal_.add("temporal.base.down1.b", Tensor::zeros({c1}));
    temporal_.add("temporal.base.down2.w", identity_kernel(c2));
    temporal_.add("temporal.base.down2.b", Tensor::zeros({c2}));
    if (has_control_) {
        temporal_.add("temporal.ctrl.down1.w", identity_kernel(c1));
        temporal_.add("temporal.ctrl.down1.b", Tensor::zeros({c1}));
        temporal_.add("temporal.ctrl.down2.w", identity_kernel(c2));
        temporal_.add("temporal.ctrl.down2.b", Tensor::zeros({c2}));
    }
    has_temporal_ = true;
}

void VideoModel::freeze_base() {
    base_.set_requires_grad(false);
    base_frozen_ = true;
}

const Tensor* VideoModel::find(const std::string& name) const {
    for (const auto& [n, t] : base_.items)
        if (n == name) return &t;
    for (const auto& [n, t] : control_.items)
        if (n == name) return &t;
    for (const auto& [n, t] : temporal_.items)
        if (n == name) return &t;
    fail_data("video model: missing parameter " + name);
}

// One downsampling block up to (not including) its strided conv. The
// temporal convolution sits after the first conv+norm+act unit and before
// the second GroupNorm activation.
Tensor VideoModel::down_block(const std::string& prefix, const std::string& temporal_name,
                              Tensor h, const Tensor& temb) const {
    h = conv2d(h, *find(prefix + ".conv_a.w"), *find(prefix + ".conv_a.b"), 1, 1);
    h = silu(group_norm(h, cfg_.groups, *find(prefix + ".gn_a.g"), *find(prefix + ".gn_a.b")));
    Tensor tproj = linear(temb, *find(prefix + ".temb.w"), *find(prefix + ".temb.b"));
    h = add(h, spread(tproj, {h.dim(2), h.dim(3)}));
    if (has_temporal_)
        h = temporal_conv1d(h, *find(temporal_name + ".w"), *find(temporal_name + ".b"));
    h = conv2d(h, *find(prefix + ".conv_b.w"), *find(prefix + ".conv_b.b"), 1, 1);
    h = silu(group_norm(h, cfg_.groups, *find(prefix + ".gn_b.g"), *find(prefix + ".gn_b.b")));
    return h;
}

Tensor VideoModel::forward(const Tensor& x, const std::vector<int>& t,
                           const Tensor* controls) const {
    const int n = x.dim(0);
    if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.resolution || x.dim(3) != cfg_.resolution)
        fail_data("video forward: expected (N,3," + std::to_string(cfg_.resolution) + "," +
                  std::to_string(cfg_.resolution) + ") input");
    if (static_cast<int>(t.size()) != n) fail_data("video forward: one diffusion step per frame");
    if (controls) {
        if (!has_control_) fail_data("video forward: controls passed but no control branch");
        if (controls->dim(0) != n || controls->dim(1) != cfg_.control_channels())
            fail_data("video forward: control channel mismatch (" +
                      std::to_string(controls->dim(1)) + " vs " +
                      std::to_string(cfg_.control_channels()) + ")");
    }
    const int te = cfg_.temb_dim;

    Tensor temb = Tensor::zeros({n, te});
    for (int i = 0; i < n; ++i) {
        const auto e = sinusoidal_embedding(static_cast<double>(t[i]), te);
        std::copy(e.begin(), e.end(), temb.data().begin() + static_cast<size_t>(i) * te);
    }
    temb = linear(silu(linear(temb, *find("base.temb.l1.w"), *find("base.temb.l1.b"))),
                  *find("base.temb.l2.w"), *find("base.temb.l2.b"));

    // Control path: copy of the encoder fed by x plus the control stem.
    Tensor c1t, c2t, c3t;
    if (controls) {
        Tensor c = conv2d(x, *find("ctrl.copy.stem.w"), *find("ctrl.copy.stem.b"), 1, 1);
        c = add(c, conv2d(*controls, *find("ctrl.stem.w"), *find("ctrl.stem.b"), 1, 1));
        c = down_block("ctrl.copy.down1", "temporal.ctrl.down1", c, temb);
        c1t = conv2d(c, *find("ctrl.zero1.w"), *find("ctrl.zero1.b"));
        c = conv2d(c, *find("ctrl.copy.down1.down.w"), *find("ctrl.copy.down1.down.b"), 2, 1);
        c = down_block("ctrl.copy.down2", "temporal.ctrl.down2", c, temb);
        c2t = conv2d(c, *find("ctrl.zero2.w"), *find("ctrl.zero2.b"));
        c = conv2d(c, *find("ctrl.copy.down2.down.w"), *find("ctrl.copy.down2.down.b"), 2, 1);
        c3t = conv2d(c, *find("ctrl.zero3.w"), *find("ctrl.zero3.b"));
    }

    Tensor h = conv2d(x, *find("base.stem.w"), *find("base.stem.b"), 1, 1);
    Tensor skip1 = down_block("base.down1", "temporal.base.down1", h, temb);
    if (c1t.defined()) skip1 = add(skip1, c1t);
    h = conv2d(skip1, *find("base.down1.down.w"), *find("base.down1.down.b"), 2, 1);
    Tensor skip2 = down_block("base.down2", "temporal.base.down2", h, temb);
    if (c2t.defined()) skip2 = add(skip2, c2t);
    h = conv2d(skip2, *find("base.down2.down.w"), *find("base.down2.down.b"), 2, 1);
    if (c3t.defined()) h = add(h, c3t);

    // Bottleneck: conv + self-attention over the spatial tokens + conv.
    h = conv2d(h, *find("base.mid.conv1.w"), *find("base.mid.conv1.b"), 1, 1);
    h = silu(group_norm(h, cfg_.groups, *find("base.mid.gn1.g"), *find("base.mid.gn1.b")));
    Tensor tmid = linear(temb, *find("base.mid.temb.w"), *find("base.mid.temb.b"));
    h = add(h, spread(tmid, {h.dim(2), h.dim(3)}));
    {
        const int c = h.dim(1), hh = h.dim(2), ww = h.dim(3);
        Tensor a = group_norm(h, cfg_.groups, *find("base.mid.attn_gn.g"), *find("base.mid.attn_gn.b"));
        Tensor tokens = permute(reshape(a, {n, c, hh * ww}), {0, 2, 1});
        Tensor q = linear(tokens, *find("base.mid.attn_q.w"), Tensor());
        Tensor k = linear(tokens, *find("base.mid.attn_k.w"), Tensor());
        Tensor v = linear(tokens, *find("base.mid.attn_v.w"), Tensor());
        Tensor att = attention(q, k, v, Tensor(), cfg_.attn_heads);
        att = linear(att, *find("base.mid.attn_o.w"), *find("base.mid.attn_o.b"));
        h = add(h, reshape(permute(att, {0, 2, 1}), {n, c, hh, ww}));
    }
    h = conv2d(h, *find("base.mid.conv2.w"), *find("base.mid.conv2.b"), 1, 1);
    h = silu(group_norm(h, cfg_.groups, *find("base.mid.gn2.g"), *find("base.mid.gn2.b")));

    // Decoder.
    auto up_block = [&](const std::string& prefix, Tensor u, const Tensor& skip) {
        u = conv_transpose2d(u, *find(prefix + ".convt.w"), *find(prefix + ".convt.b"), 2, 1);
        u = concat({u, skip}, 1);
        u = conv2d(u, *find(prefix + ".conv_a.w"), *find(prefix + ".conv_a.b"), 1, 1);
        u = silu(group_norm(u, cfg_.groups, *find(prefix + ".gn_a.g"), *find(prefix + ".gn_a.b")));
        Tensor tp = linear(temb, *find(prefix + ".temb.w"), *find(prefix + ".temb.b"));
        u = add(u, spread(tp, {u.dim(2), u.dim(3)}));
        u = conv2d(u, *find(prefix + ".conv_b.w"), *find(prefix + ".conv_b.b"), 1, 1);
        u = silu(group_norm(u, cfg_.groups, *find(prefix + ".gn_b.g"), *find(prefix + ".gn_b.b")));
        return u;
    };
    h = up_block("base.up2", h, skip2);
    h = up_block("base.up1", h, skip1);
    h = silu(group_norm(h, cfg_.groups, *find("base.head.gn.g"), *find("base.head.gn.b")));
    return conv2d(h, *find("base.head.w"), *find("base.head.b"), 1, 1);
}

void VideoModel::save(const std::string& path, const nlohmann::json& extra_meta) const {
    ParamSet all;
    all.append(base_);
    all.append(control_);
    all.append(temporal_);
    nlohmann::json meta = extra_meta;
    meta["kind"] = "video";
    meta["config"] = cfg_.to_json();
    meta["has_control"] = has_control_;
    meta["has_temporal"] = has_temporal_;
    meta["base_frozen"] = base_frozen_;
    save_checkpoint(path, all, meta);
}

VideoModel VideoModel::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.meta.value("kind", "") != "video")
        fail_data("checkpoint '" + path + "' is not a video model");
    VideoModel model(VideoModelConfig::from_json(ck.meta.at("config")), 0);
    if (ck.meta.value("has_control", false)) model.attach_control_branch(0);
    if (ck.meta.value("has_temporal", false)) model.insert_temporal_layers();
    auto fill = [&](ParamSet& dst) {
        for (auto& [name, t] : dst.items) {
            Tensor* loaded = ck.params.find(name);
            if (!loaded) fail_data("checkpoint '" + path + "' lacks parameter " + name);
            if (loaded->shape() != t.shape()) fail_data("checkpoint shape mismatch for " + name);
            t.data() = loaded->data();
        }
    };
    fill(model.base_);
    fill(model.control_);
    fill(model.temporal_);
    if (ck.meta.value("base_frozen", false)) model.freeze_base();
    return model;
}

Tensor video_training_loss(const VideoModel& model, const std::vector<VideoClipItem>& batch,
                           const DiffusionSchedule& sched, Rng& rng) {
    if (batch.empty()) fail_data("video_training_loss: empty batch");
    const bool mergeable = !model.has_temporal();

    if (mergeable) {
        // Frames of all items are independent; run one batched forward with
        // a per-frame step index.
        std::vector<Tensor> xs, cs, noises;
        std::vector<int> ts;
        bool with_controls = batch[0].controls.defined();
        for (const auto& item : batch) {
            const int t = static_cast<int>(rng.uniform_int(0, sched.steps - 1));
            Tensor noise = Tensor::randn(item.clip.shape(), rng);
            xs.push_back(Tensor::from_data(item.clip.shape(),
                                           forward_diffuse(item.clip.data(), t, noise.data(), sched)));
            noises.push_back(std::move(noise));
            for (int f = 0; f < item.clip.dim(0); ++f) ts.push_back(t);
            if (item.controls.defined() != with_controls)
                fail_data("video_training_loss: mixed conditional/unconditional batch");
            if (with_controls) cs.push_back(item.controls);
        }
        Tensor x = xs.size() == 1 ? xs[0] : concat(xs, 0);
        Tensor target = noises.size() == 1 ? noises[0] : concat(noises, 0);
        Tensor ctrl;
        if (with_controls) ctrl = cs.size() == 1 ? cs[0] : concat(cs, 0);
        Tensor pred = model.forward(x, ts, with_controls ? &ctrl : nullptr);
        Tensor loss = mse(pred, target);
        if (!std::isfinite(loss.item())) fail_numeric("video_training_loss: non-finite loss");
        return loss;
    }

    Tensor total;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& item = batch[i];
        const int t = static_cast<int>(rng.uniform_int(0, sched.steps - 1));
        Tensor noise = Tensor::randn(item.clip.shape(), rng);
        Tensor x_t = Tensor::from_data(item.clip.shape(),
                                       forward_diffuse(item.clip.data(), t, noise.data(), sched));
        std::vector<int> ts(item.clip.dim(0), t);
        Tensor pred =
            model.forward(x_t, ts, item.controls.defined() ? &item.controls : nullptr);
        Tensor item_loss = mse(pred, noise);
        if (!std::isfinite(item_loss.item()))
            fail_numeric("video_training_loss: non-finite loss at item " + std::to_string(i));
        total = total.defined() ? add(total, item_loss) : item_loss;
    }
    return mul_scalar(total, 1.0 / static_cast<double>(batch.size()));
}

std::vector<VideoTrainLogEntry> train_video(
    VideoModel& model, const std::function<VideoClipItem(Rng&)>& draw, ParamSet& trainable,
    const DiffusionSchedule& sched, const VideoTrainOptions& opts,
    const std::function<bool(int, double)>& progress) {
    Adam adam(opts.lr);
    Rng rng(opts.seed);
    std::vector<VideoTrainLogEntry> log;
    for (int step = 0; step < opts.steps; ++step) {
        std::vector<VideoClipItem> batch;
        for (int i = 0; i < opts.items_per_step; ++i) batch.push_back(draw(rng));
        trainable.zero_grad();
        Tensor loss = video_training_loss(model, batch, sched, rng);
        backward(loss);
        adam.step(trainable);
        log.push_back({step, loss.item()});
        if (progress && !progress(step, loss.item())) break;
    }
    return log;
}

}  // namespace vlogdesk
