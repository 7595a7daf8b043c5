#include <cmath>

#include "vlogdesk/avatar.hpp"
#include "vlogdesk/errors.hpp"
#include "vlogdesk/optim.hpp"
#include "vlogdesk/tensor.hpp"

namespace vlogdesk {

namespace {

// Differentiable mirror of pose_vertices()+project_point() over the landmark
// subset, built from tensor ops so the fit can run on analytic gradients.
// A unit test pins it against the plain implementation.
struct DiffPoser {
    const AvatarTemplate& tmpl;
    const Camera& cam;
    std::vector<int> ids;
    int L;
    Tensor rest;        // (L,3) with shape offsets folded in
    Tensor expr_basis;  // (E, 3L)
    std::vector<Tensor> weight_cols;  // per joint (L,3), constant
    std::vector<Tensor> joint_rest;   // per joint (3,1), constant
    std::vector<int> active_joints;   // joints with any weight on the subset
    Tensor eye3;
    Tensor cam_rot_t;  // (3,3) = R^T
    Tensor cam_trans;  // (3)

    DiffPoser(const AvatarTemplate& t, const Camera& c, const std::vector<int>& vertex_ids,
              const std::vector<double>& shape)
        : tmpl(t), cam(c), ids(vertex_ids), L(static_cast<int>(vertex_ids.size())) {
        std::vector<double> rest_data(static_cast<size_t>(L) * 3);
        for (int k = 0; k < L; ++k) {
            Vec3 p = tmpl.vertices[ids[k]];
            for (size_t b = 0; b < shape.size(); ++b) p += tmpl.shape_basis[b][ids[k]] * shape[b];
            rest_data[3 * k] = p.x;
            rest_data[3 * k + 1] = p.y;
            rest_data[3 * k + 2] = p.z;
        }
        rest = Tensor::from_data({L, 3}, rest_data);

        const int E = static_cast<int>(tmpl.expression_basis.size());
        std::vector<double> eb(static_cast<size_t>(E) * L * 3);
        for (int e = 0; e < E; ++e)
            for (int k = 0; k < L; ++k) {
                const Vec3 d = tmpl.expression_basis[e][ids[k]];
                eb[(static_cast<size_t>(e) * L + k) * 3 + 0] = d.x;
                eb[(static_cast<size_t>(e) * L + k) * 3 + 1] = d.y;
                eb[(static_cast<size_t>(e) * L + k) * 3 + 2] = d.z;
            }
        expr_basis = Tensor::from_data({E, L * 3}, eb);

        const int J = static_cast<int>(tmpl.joint_rest.size());
        for (int j = 0; j < J; ++j) {
            std::vector<double> col(static_cast<size_t>(L) * 3);
            double any = 0.0;
            for (int k = 0; k < L; ++k) {
                const double w = tmpl.skin_weights[ids[k]][j];
                any += w;
                col[3 * k] = col[3 * k + 1] = col[3 * k + 2] = w;
            }
            weight_cols.push_back(Tensor::from_data({L, 3}, col));
            joint_rest.push_back(Tensor::from_data(
                {3, 1}, {tmpl.joint_rest[j].x, tmpl.joint_rest[j].y, tmpl.joint_rest[j].z}));
            if (any > 0.0) active_joints.push_back(j);
        }
        eye3 = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        const Mat3 rt = cam.rot.transposed();
        cam_rot_t = Tensor::from_data({3, 3}, {rt.m[0], rt.m[1], rt.m[2], rt.m[3], rt.m[4],
                                               rt.m[5], rt.m[6], rt.m[7], rt.m[8]});
        cam_trans = Tensor::from_data({3}, {cam.trans.x, cam.trans.y, cam.trans.z});
    }

    Tensor rodrigues(const Tensor& aa) const {
        Tensor sq = add_scalar(sum(square(aa)), 1e-24);
        Tensor angle = sqrt_op(sq);
        Tensor s = div(sin_op(angle), angle);                                // sin(a)/a
        Tensor c = div(sub(Tensor::scalar(1.0), cos_op(angle)), sq);         // (1-cos)/a^2
        Tensor x = slice(aa, 0, 0, 1), y = slice(aa, 0, 1, 1), z = slice(aa, 0, 2, 1);
        Tensor zero = Tensor::zeros({1});
        Tensor k = reshape(
            concat({zero, neg(z), y, z, zero, neg(x), neg(y), x, zero}, 0), {3, 3});
        Tensor k2 = matmul(k, k);
        Tensor s33 = reshape(spread(s, {3, 3}), {3, 3});
        Tensor c33 = reshape(spread(c, {3, 3}), {3, 3});
        return add(add(eye3, mul(k, s33)), mul(k2, c33));
    }

    // pose_flat: (J*3). Returns posed landmark positions (L,3).
    Tensor pose(const Tensor& pose_flat, const Tensor& expression, const Tensor& translation) const {
        Tensor disp = reshape(matmul(reshape(expression, {1, static_cast<int>(tmpl.expression_basis.size())}),
                                     expr_basis),
                              {L, 3});
        Tensor shaped = add(rest, disp);

        const int J = static_cast<int>(tmpl.joint_rest.size());
        std::vector<Tensor> W(J), tvec(J);
        for (int j = 0; j < J; ++j) {
            Tensor aa = slice(pose_flat, 0, 3 * j, 3);
            Tensor R = rodrigues(aa);
            Tensor local_t = sub(joint_rest[j], matmul(R, joint_rest[j]));  // (3,1)
            const int p = tmpl.joint_parent[j];
            if (p < 0) {
                W[j] = R;
                tvec[j] = local_t;
            } else {
                W[j] = matmul(W[p], R);
                tvec[j] = add(matmul(W[p], local_t), tvec[p]);
            }
        }

        Tensor acc;
        for (int j : active_joints) {
            Tensor xj = add(matmul(shaped, permute(W[j], {1, 0})), reshape(tvec[j], {3}));
            Tensor term = mul(xj, weight_cols[j]);
            acc = acc.defined() ? add(acc, term) : term;
        }
        return add(acc, translation);
    }

    // Returns (L,2) pixel coordinates.
    Tensor project(const Tensor& posed) const {
        Tensor pc = add(matmul(posed, cam_rot_t), cam_trans);
        Tensor x = slice(pc, 1, 0, 1), y = slice(pc, 1, 1, 1), z = slice(pc, 1, 2, 1);
        const double f = cam.focal();
        Tensor u = add_scalar(mul_scalar(div(x, z), f), cam.cx);
        Tensor v = add_scalar(mul_scalar(div(y, z), f), cam.cy);
        return concat({u, v}, 1);
    }
};

}  // namespace

FitResult fit_to_landmarks(const AvatarTemplate& tmpl,
                           const std::vector<std::vector<std::array<double, 2>>>& observed,
                           const Camera& cam, const AvatarParams& init, const FitOptions& opts,
                           const std::vector<int>& vertex_ids) {
    if (observed.empty()) fail_data("fit_to_landmarks: need at least one frame");
    const std::vector<int> ids = vertex_ids.empty() ? tmpl.all_landmarks() : vertex_ids;
    const int L = static_cast<int>(ids.size());
    const int F = static_cast<int>(observed.size());
    for (const auto& frame : observed) {
        if (static_cast<int>(frame.size()) != L)
            fail_data("fit_to_landmarks: observation count mismatch (" +
                      std::to_string(frame.size()) + " vs " + std::to_string(L) + ")");
        for (const auto& uv : frame)
            if (!std::isfinite(uv[0]) || !std::isfinite(uv[1]))
                fail_numeric("fit_to_landmarks: non-finite observation");
    }

    DiffPoser poser(tmpl, cam, ids, init.shape);
    const int J = static_cast<int>(tmpl.joint_rest.size());
    const int E = static_cast<int>(tmpl.expression_basis.size());

    ParamSet params;
    std::vector<Tensor> pose_t(F), expr_t(F), trans_t(F);
    for (int i = 0; i < F; ++i) {
        std::vector<double> pose_data(static_cast<size_t>(J) * 3);
        for (int j = 0; j < J; ++j) {
            pose_data[3 * j] = init.pose[j].x;
            pose_data[3 * j + 1] = init.pose[j].y;
            pose_data[3 * j + 2] = init.pose[j].z;
        }
        pose_t[i] = params.add("pose_" + std::to_string(i), Tensor::from_data({J * 3}, pose_data));
        expr_t[i] = params.add("expr_" + std::to_string(i),
                               Tensor::from_data({E}, init.expression));
        trans_t[i] = params.add("trans_" + std::to_string(i),
                                Tensor::from_data({3}, {init.translation.x, init.translation.y,
                                                        init.translation.z}));
    }

    std::vector<double> init_pose_data(static_cast<size_t>(J) * 3);
    for (int j = 0; j < J; ++j) {
        init_pose_data[3 * j] = init.pose[j].x;
        init_pose_data[3 * j + 1] = init.pose[j].y;
        init_pose_data[3 * j + 2] = init.pose[j].z;
    }
    Tensor pose_init = Tensor::from_data({J * 3}, init_pose_data);
    Tensor expr_init = Tensor::from_data({E}, init.expression);
    Tensor trans_init =
        Tensor::from_data({3}, {init.translation.x, init.translation.y, init.translation.z});

    std::vector<Tensor> obs(F);
    for (int i = 0; i < F; ++i) {
        std::vector<double> o(static_cast<size_t>(L) * 2);
        for (int k = 0; k < L; ++k) {
            o[2 * k] = observed[i][k][0];
            o[2 * k + 1] = observed[i][k][1];
        }
        obs[i] = Tensor::from_data({L, 2}, o);
    }

    auto make_loss = [&](double* proj_out) {
        Tensor total;
        double proj_value = 0.0;
        for (int i = 0; i < F; ++i) {
            Tensor uv = poser.project(poser.pose(pose_t[i], expr_t[i], trans_t[i]));
            Tensor term = sum(square(sub(uv, obs[i])));
            proj_value += term.item();
            total = total.defined() ? add(total, term) : term;
        }
        if (opts.lambda_temporal > 0.0) {
            for (int i = 0; i + 1 < F; ++i) {
                Tensor t = sum(square(sub(pose_t[i + 1], pose_t[i])));
                t = add(t, sum(square(sub(expr_t[i + 1], expr_t[i]))));
                t = add(t, sum(square(sub(trans_t[i + 1], trans_t[i]))));
                total = add(total, mul_scalar(t, opts.lambda_temporal));
            }
        }
        if (opts.lambda_prior > 0.0) {
            for (int i = 0; i < F; ++i) {
                Tensor t = sum(square(sub(pose_t[i], pose_init)));
                t = add(t, sum(square(sub(expr_t[i], expr_init))));
                t = add(t, sum(square(sub(trans_t[i], trans_init))));
                total = add(total, mul_scalar(t, opts.lambda_prior));
            }
        }
        if (proj_out) *proj_out = proj_value;
        return total;
    };

    Adam adam(opts.lr);
    double best_loss = 1e300;
    double best_proj = 0.0;
    double prev_loss = 1e300;
    std::vector<std::vector<double>> best_values;
    int rising = 0;
    int stalled = 0;
    int iter = 0;
    for (; iter < opts.max_iters; ++iter) {
        params.zero_grad();
        double proj = 0.0;
        Tensor loss = make_loss(&proj);
        const double lv = loss.item();
        if (!std::isfinite(lv)) fail_numeric("fit_to_landmarks: non-finite loss at iter " + std::to_string(iter));
        rising = lv > prev_loss ? rising + 1 : 0;
        prev_loss = lv;
        if (rising >= 50)
            fail_numeric("fit_to_landmarks: diverging (loss rose 50 consecutive steps); best residual " +
                         std::to_string(best_proj / (static_cast<double>(F) * L * 2)));
        if (lv < best_loss * (1.0 - 1e-12)) {
            best_loss = lv;
            best_proj = proj;
            stalled = 0;
            best_values.clear();
            for (auto& [n, t] : params.items) best_values.push_back(t.data());
        } else if (++stalled >= 300) {
            break;  // converged
        }
        if (lv < 1e-16) break;
        backward(loss);
        adam.step(params);
    }

    if (!best_values.empty()) {
        size_t k = 0;
        for (auto& [n, t] : params.items) t.data() = best_values[k++];
    }

    FitResult result;
    result.iters = iter;
    result.residual = best_proj / (static_cast<double>(F) * L * 2);
    for (int i = 0; i < F; ++i) {
        AvatarParams p;
        p.shape = init.shape;
        p.pose.resize(J);
        for (int j = 0; j < J; ++j)
            p.pose[j] = canonicalize_axis_angle({pose_t[i].data()[3 * j], pose_t[i].data()[3 * j + 1],
                                                 pose_t[i].data()[3 * j + 2]});
        p.expression = expr_t[i].data();
        p.translation = {trans_t[i].data()[0], trans_t[i].data()[1], trans_t[i].data()[2]};
        result.params.push_back(std::move(p));
    }
    return result;
}

}  // namespace vlogdesk
