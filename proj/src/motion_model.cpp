#include "vlogdesk/motion_model.hpp"

#include <cmath>

#include "vlogdesk/checkpoint.hpp"
#include "vlogdesk/errors.hpp"

namespace vlogdesk {

nlohmann::json MotionModelConfig::to_json() const {
    return {{"expr_dims", expr_dims},
            {"pose_dims", pose_dims},
            {"width", width},
            {"heads", heads},
            {"layers", layers},
            {"mlp_mult", mlp_mult},
            {"mel_bins", mel_bins},
            {"max_frames", max_frames},
            {"lambda_temp_expr", lambda_temp_expr},
            {"lambda_temp_pose", lambda_temp_pose},
            {"p_drop", p_drop},
            {"predict_residual", predict_residual}};
}

MotionModelConfig MotionModelConfig::from_json(const nlohmann::json& j) {
    MotionModelConfig c;
    c.expr_dims = j.at("expr_dims");
    c.pose_dims = j.at("pose_dims");
    c.width = j.at("width");
    c.heads = j.at("heads");
    c.layers = j.at("layers");
    c.mlp_mult = j.at("mlp_mult");
    c.mel_bins = j.at("mel_bins");
    c.max_frames = j.at("max_frames");
    c.lambda_temp_expr = j.at("lambda_temp_expr");
    c.lambda_temp_pose = j.at("lambda_temp_pose");
    c.p_drop = j.at("p_drop");
    c.predict_residual = j.at("predict_residual");
    return c;
}

namespace {

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
    return Tensor::randn(std::move(shape), rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

}  // namespace

MotionModel::MotionModel(MotionModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
    Rng rng(init_seed);
    const int W = cfg_.width;
    const int D = cfg_.frame_dims();
    const int M = cfg_.mel_bins;

    params_.add("in_proj.w", he_init({D, W}, D, rng));
    params_.add("in_proj.b", Tensor::zeros({W}));
    params_.add("audio.l1.w", he_init({M, W}, M, rng));
    params_.add("audio.l1.b", Tensor::zeros({W}));
    params_.add("audio.l2.w", he_init({W, W}, W, rng));
    params_.add("audio.l2.b", Tensor::zeros({W}));
    params_.add("audio.null", Tensor::randn({1, W}, rng, 0.02));
    params_.add("step.l1.w", he_init({W, W}, W, rng));
    params_.add("step.l1.b", Tensor::zeros({W}));
    params_.add("step.l2.w", he_init({W, W}, W, rng));
    params_.add("step.l2.b", Tensor::zeros({W}));

    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        params_.add(p + "ln1.g", Tensor::full({W}, 1.0));
        params_.add(p + "ln1.b", Tensor::zeros({W}));
        params_.add(p + "q.w", he_init({W, W}, W, rng));
        params_.add(p + "k.w", he_init({W, W}, W, rng));
        params_.add(p + "v.w", he_init({W, W}, W, rng));
        params_.add(p + "o.w", he_init({W, W}, W, rng));
        params_.add(p + "o.b", Tensor::zeros({W}));
        params_.add(p + "ln2.g", Tensor::full({W}, 1.0));
        params_.add(p + "ln2.b", Tensor::zeros({W}));
        params_.add(p + "mlp.l1.w", he_init({W, W * cfg_.mlp_mult}, W, rng));
        params_.add(p + "mlp.l1.b", Tensor::zeros({W * cfg_.mlp_mult}));
        params_.add(p + "mlp.l2.w", he_init({W * cfg_.mlp_mult, W}, W * cfg_.mlp_mult, rng));
        params_.add(p + "mlp.l2.b", Tensor::zeros({W}));
    }
    params_.add("out.ln.g", Tensor::full({W}, 1.0));
    params_.add("out.ln.b", Tensor::zeros({W}));
    // Zero-init head so the initial prediction is the zero motion.
    params_.add("out.w", Tensor::zeros({W, D}));
    params_.add("out.b", Tensor::zeros({D}));
}

const Tensor* MotionModel::find(const std::string& name) const {
    for (const auto& [n, t] : params_.items)
        if (n == name) return &t;
    fail_data("motion model: missing parameter " + name);
}

Tensor MotionModel::forward(const Tensor& x_t, int t, const Tensor* mel) const {
    const int N = x_t.dim(0);
    if (x_t.dim(1) != cfg_.frame_dims())
        fail_data("motion forward: frame dims " + std::to_string(x_t.dim(1)) + " != " +
                  std::to_string(cfg_.frame_dims()));
    if (N > cfg_.max_frames)
        fail_data("motion forward: sequence length " + std::to_string(N) +
                  " exceeds max_frames " + std::to_string(cfg_.max_frames));
    if (mel && (mel->dim(0) != N || mel->dim(1) != cfg_.mel_bins))
        fail_data("motion forward: mel shape mismatch (" + std::to_string(mel->dim(0)) + "," +
                  std::to_string(mel->dim(1)) + ") for N=" + std::to_string(N));
    const int W = cfg_.width;

    Tensor h = linear(x_t, *find("in_proj.w"), *find("in_proj.b"));

    Tensor audio_emb;
    if (mel) {
        Tensor a = linear(*mel, *find("audio.l1.w"), *find("audio.l1.b"));
        audio_emb = linear(silu(a), *find("audio.l2.w"), *find("audio.l2.b"));
    } else {
        audio_emb = matmul(Tensor::full({N, 1}, 1.0), *find("audio.null"));
    }
    h = add(h, audio_emb);

    // Frame positional encoding.
    Tensor pos = Tensor::zeros({N, W});
    for (int i = 0; i < N; ++i) {
        const auto e = sinusoidal_embedding(static_cast<double>(i), W);
        std::copy(e.begin(), e.end(), pos.data().begin() + static_cast<size_t>(i) * W);
    }
    h = add(h, pos);

    // Diffusion-step embedding MLP on a sinusoidal encoding.
    Tensor temb = Tensor::from_data({1, W}, sinusoidal_embedding(static_cast<double>(t), W));
    temb = linear(silu(linear(temb, *find("step.l1.w"), *find("step.l1.b"))), *find("step.l2.w"),
                  *find("step.l2.b"));
    h = add(h, reshape(temb, {W}));

    const Tensor mask = causal_mask(N);
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        Tensor hn = layer_norm(h, *find(p + "ln1.g"), *find(p + "ln1.b"));
        Tensor q = matmul(hn, *find(p + "q.w"));
        Tensor k = matmul(hn, *find(p + "k.w"));
        Tensor v = matmul(hn, *find(p + "v.w"));
        Tensor att = attention(q, k, v, mask, cfg_.heads);
        h = add(h, linear(att, *find(p + "o.w"), *find(p + "o.b")));
        Tensor mn = layer_norm(h, *find(p + "ln2.g"), *find(p + "ln2.b"));
        Tensor m = linear(gelu(linear(mn, *find(p + "mlp.l1.w"), *find(p + "mlp.l1.b"))),
                          *find(p + "mlp.l2.w"), *find(p + "mlp.l2.b"));
        h = add(h, m);
    }
    Tensor out = layer_norm(h, *find("out.ln.g"), *find("out.ln.b"));
    return linear(out, *find("out.w"), *find("out.b"));
}

void MotionModel::save(const std::string& path, const nlohmann::json& extra_meta) const {
    nlohmann::json meta = extra_meta;
    meta["kind"] = "motion";
    meta["config"] = cfg_.to_json();
    save_checkpoint(path, params_, meta);
}

MotionModel MotionModel::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.meta.value("kind", "") != "motion")
        fail_data("checkpoint '" + path + "' is not a motion model");
    MotionModel model(MotionModelConfig::from_json(ck.meta.at("config")), 0);
    for (auto& [name, t] : model.params_.items) {
        Tensor* loaded = ck.params.find(name);
        if (!loaded) fail_data("checkpoint '" + path + "' lacks parameter " + name);
        if (loaded->shape() != t.shape()) fail_data("checkpoint shape mismatch for " + name);
        t.data() = loaded->data();
    }
    return model;
}

Tensor cfg_combine(const Tensor& cond_pred, const Tensor& uncond_pred, double scale) {
    if (cond_pred.shape() != uncond_pred.shape())
        fail_data("cfg_combine: prediction shape mismatch");
    // uncond + scale * (cond - uncond)
    return add(uncond_pred, mul_scalar(sub(cond_pred, uncond_pred), scale));
}

Tensor motion_training_loss(const MotionModel& model, const std::vector<MotionBatchItem>& batch,
                            const DiffusionSchedule& sched, Rng& rng) {
    if (batch.empty()) fail_data("motion_training_loss: empty batch");
    const auto& cfg = model.config();
    Tensor total;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& item = batch[i];
        const int N = item.x0.dim(0);
        const int t = static_cast<int>(rng.uniform_int(0, sched.steps - 1));
        Tensor noise = Tensor::randn(item.x0.shape(), rng);
        Tensor x_t = Tensor::from_data(item.x0.shape(),
                                       forward_diffuse(item.x0.data(), t, noise.data(), sched));
        const bool drop = rng.uniform() < cfg.p_drop;
        Tensor pred = model.forward(x_t, t, drop ? nullptr : &item.mel);
        Tensor item_loss = mse(pred, item.x0);
        if (N > 1) {
            Tensor diff = sub(slice(pred, 0, 1, N - 1), slice(pred, 0, 0, N - 1));
            Tensor expr_diff = slice(diff, 1, 0, cfg.expr_dims);
            Tensor pose_diff = slice(diff, 1, cfg.expr_dims, cfg.pose_dims);
            item_loss = add(item_loss, mul_scalar(mean(square(expr_diff)), cfg.lambda_temp_expr));
            item_loss = add(item_loss, mul_scalar(mean(square(pose_diff)), cfg.lambda_temp_pose));
        }
        if (!std::isfinite(item_loss.item()))
            fail_numeric("motion_training_loss: non-finite loss at batch item " + std::to_string(i));
        total = total.defined() ? add(total, item_loss) : item_loss;
    }
    return mul_scalar(total, 1.0 / static_cast<double>(batch.size()));
}

MotionSampleResult sample_motion(const MotionModel& model, const MelSpectrogram& mel,
                                 const AvatarParams& reference, const DiffusionSchedule& sched,
                                 const MotionSampleOptions& opts) {
    NoGradGuard ng;
    const auto& cfg = model.config();
    if (mel.cols != cfg.mel_bins) fail_data("sample_motion: mel bin mismatch");
    const int N = mel.rows;
    const int D = cfg.frame_dims();

    Tensor mel_t = Tensor::from_data({N, cfg.mel_bins}, mel.data);
    Rng rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<double> x(static_cast<size_t>(N) * D);
    for (auto& v : x) v = rng.normal();

    const auto kept = sched.strided(opts.sample_steps);
    for (size_t k = 0; k < kept.size(); ++k) {
        const int t = kept[k];
        const int t_prev = k + 1 < kept.size() ? kept[k + 1] : -1;
        Tensor x_t = Tensor::from_data({N, D}, x);
        Tensor cond = model.forward(x_t, t, &mel_t);
        Tensor uncond = model.forward(x_t, t, nullptr);
        Tensor x0_pred = cfg_combine(cond, uncond, opts.guidance);
        const auto post = sched.posterior(t, t_prev);
        for (size_t i = 0; i < x.size(); ++i) {
            double v = post.x0_coef * x0_pred.data()[i] + post.xt_coef * x[i];
            if (post.sigma > 0 && opts.noise_scale > 0)
                v += post.sigma * opts.noise_scale * rng.normal();
            if (!std::isfinite(v))
                fail_numeric("sample_motion: non-finite state at diffusion step " +
                             std::to_string(t));
            x[i] = v;
        }
    }

    MotionSampleResult result;
    result.sequence.frames = N;
    result.sequence.expr_dims = cfg.expr_dims;
    result.sequence.pose_dims = cfg.pose_dims;
    result.sequence.data = x;

    for (int f = 0; f < N; ++f) {
        AvatarParams p = reference;
        for (int e = 0; e < cfg.expr_dims; ++e) p.expression[e] = result.sequence.at(f, e);
        std::vector<Vec3> delta(cfg.pose_dims / 3);
        for (size_t j = 0; j < delta.size(); ++j)
            delta[j] = {result.sequence.at(f, cfg.expr_dims + 3 * static_cast<int>(j)),
                        result.sequence.at(f, cfg.expr_dims + 3 * static_cast<int>(j) + 1),
                        result.sequence.at(f, cfg.expr_dims + 3 * static_cast<int>(j) + 2)};
        if (cfg.predict_residual) {
            p.pose = apply_pose_residual(reference.pose, delta);
        } else {
            for (auto& aa : delta) aa = canonicalize_axis_angle(aa);
            p.pose = delta;
        }
        result.params.push_back(std::move(p));
    }
    return result;
}

std::vector<TrainLogEntry> train_motion_model(
    MotionModel& model, const std::vector<MotionTrack>& tracks, const DiffusionSchedule& sched,
    const MotionTrainOptions& opts, const std::function<bool(int, double)>& progress) {
    if (tracks.empty()) fail_data("train_motion_model: no tracks");
    const auto& cfg = model.config();
    for (const auto& tr : tracks) {
        if (tr.mel_cols != cfg.mel_bins) fail_data("train_motion_model: mel bin mismatch");
        if (tr.frames < opts.min_clip)
            fail_data("train_motion_model: track shorter than min_clip");
    }

    Adam adam(opts.lr);
    Rng rng(opts.seed);
    std::vector<TrainLogEntry> log;
    const int D = cfg.frame_dims();
    for (int step = 0; step < opts.steps; ++step) {
        // Variable-length windows: one length per step, clipped to the data.
        int max_len = opts.max_clip;
        for (const auto& tr : tracks) max_len = std::min(max_len, tr.frames);
        const int n = static_cast<int>(rng.uniform_int(opts.min_clip, max_len));

        std::vector<MotionBatchItem> batch;
        for (int b = 0; b < opts.batch; ++b) {
            const auto& tr = tracks[rng.uniform_int(0, static_cast<int64_t>(tracks.size()) - 1)];
            // Windows are anchored at the start of the track: generation
            // always begins at the reference frame, so the model should
            // learn that frame 0 sits at the reference pose.
            const int start = 0;
            std::vector<double> x0(static_cast<size_t>(n) * D);
            std::vector<double> melw(static_cast<size_t>(n) * cfg.mel_bins);
            for (int f = 0; f < n; ++f) {
                const int src = start + f;
                for (int e = 0; e < cfg.expr_dims; ++e)
                    x0[static_cast<size_t>(f) * D + e] =
                        tr.expr[static_cast<size_t>(src) * cfg.expr_dims + e];
                for (int d = 0; d < cfg.pose_dims; ++d) {
                    const double abs_pose = tr.pose_abs[static_cast<size_t>(src) * cfg.pose_dims + d];
                    x0[static_cast<size_t>(f) * D + cfg.expr_dims + d] =
                        cfg.predict_residual ? abs_pose - tr.ref_pose[d] : abs_pose;
                }
                std::copy(tr.mel.begin() + static_cast<size_t>(src) * cfg.mel_bins,
                          tr.mel.begin() + static_cast<size_t>(src + 1) * cfg.mel_bins,
                          melw.begin() + static_cast<size_t>(f) * cfg.mel_bins);
            }
            batch.push_back({Tensor::from_data({n, D}, std::move(x0)),
                             Tensor::from_data({n, cfg.mel_bins}, std::move(melw))});
        }

        model.params().zero_grad();
        Tensor loss = motion_training_loss(model, batch, sched, rng);
        backward(loss);
        adam.step(model.params());
        log.push_back({step, loss.item()});
        if (progress && !progress(step, loss.item())) break;
    }
    return log;
}

}  // namespace vlogdesk
