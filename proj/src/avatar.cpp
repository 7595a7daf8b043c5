#include "vlogdesk/avatar.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

using nlohmann::json;

std::vector<int> AvatarTemplate::all_landmarks() const {
    std::vector<int> ids;
    ids.insert(ids.end(), landmarks.mouth.begin(), landmarks.mouth.end());
    ids.insert(ids.end(), landmarks.eyes.begin(), landmarks.eyes.end());
    ids.insert(ids.end(), landmarks.face_outline.begin(), landmarks.face_outline.end());
    ids.insert(ids.end(), landmarks.hands.begin(), landmarks.hands.end());
    return ids;
}

void AvatarTemplate::validate() const {
    const int V = vertex_count();
    const int J = static_cast<int>(joint_rest.size());
    if (static_cast<int>(skin_weights.size()) != V) fail_data("template: skin weight row count != V");
    for (int v = 0; v < V; ++v) {
        double sum = 0.0;
        for (double w : skin_weights[v]) {
            if (w < 0.0) fail_data("template: negative skin weight at vertex " + std::to_string(v));
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            fail_data("template: skin weights of vertex " + std::to_string(v) +
                      " sum to " + std::to_string(sum));
    }
    if (joint_parent.size() != joint_rest.size()) fail_data("template: joint arrays disagree");
    int roots = 0;
    for (int j = 0; j < J; ++j) {
        if (joint_parent[j] < 0) {
            ++roots;
        } else if (joint_parent[j] >= j) {
            // Parents must precede children; this also rules out cycles.
            fail_data("template: joint " + std::to_string(j) + " has parent " +
                      std::to_string(joint_parent[j]) + " not preceding it");
        }
    }
    if (roots != 1) fail_data("template: kinematic tree must have exactly one root");
    for (const auto& t : triangles)
        for (int idx : t)
            if (idx < 0 || idx >= V) fail_data("template: triangle index out of range");
    for (int id : const_cast<AvatarTemplate*>(this)->all_landmarks())
        if (id < 0 || id >= V) fail_data("template: landmark id out of range");
}

AvatarParams AvatarParams::rest() {
    AvatarParams p;
    p.shape.assign(kNumShapeCoeffs, 0.0);
    p.pose.assign(kNumJoints, Vec3{});
    p.expression.assign(kNumExpressions, 0.0);
    return p;
}

Vec3 canonicalize_axis_angle(const Vec3& aa) {
    const double angle = aa.norm();
    if (angle < 3.14159265358979323846) return aa;
    constexpr double kTwoPi = 6.28318530717958647692;
    constexpr double kPi = 3.14159265358979323846;
    // Wrap the magnitude into (-pi, pi] along the same axis.
    double wrapped = std::fmod(angle + kPi, kTwoPi);
    if (wrapped < 0) wrapped += kTwoPi;
    wrapped -= kPi;
    if (std::abs(wrapped) >= kPi) wrapped = std::nextafter(kPi, 0.0) * (wrapped < 0 ? -1.0 : 1.0);
    const double scale = wrapped / angle;
    return aa * scale;
}

namespace {

struct JointTransform {
    Mat3 rot;
    Vec3 trans;
};

std::vector<JointTransform> joint_world_transforms(const AvatarTemplate& tmpl,
                                                   const AvatarParams& params) {
    const int J = static_cast<int>(tmpl.joint_rest.size());
    std::vector<JointTransform> world(J);
    for (int j = 0; j < J; ++j) {
        const Mat3 r = rotation_from_axis_angle(params.pose[j]);
        const Vec3 jr = tmpl.joint_rest[j];
        // Local transform rotates about the rest joint position.
        JointTransform local{r, jr - r.apply(jr)};
        const int p = tmpl.joint_parent[j];
        if (p < 0) {
            world[j] = local;
        } else {
            world[j].rot = world[p].rot.mul(local.rot);
            world[j].trans = world[p].rot.apply(local.trans) + world[p].trans;
        }
    }
    return world;
}

Vec3 shaped_vertex(const AvatarTemplate& tmpl, const AvatarParams& params, int v) {
    Vec3 pos = tmpl.vertices[v];
    for (size_t b = 0; b < params.shape.size(); ++b)
        pos += tmpl.shape_basis[b][v] * params.shape[b];
    for (size_t e = 0; e < params.expression.size(); ++e)
        pos += tmpl.expression_basis[e][v] * params.expression[e];
    return pos;
}

void check_param_dims(const AvatarTemplate& tmpl, const AvatarParams& params) {
    if (params.shape.size() != tmpl.shape_basis.size())
        fail_data("pose_mesh: shape coefficient count " + std::to_string(params.shape.size()) +
                  " != basis size " + std::to_string(tmpl.shape_basis.size()));
    if (params.expression.size() != tmpl.expression_basis.size())
        fail_data("pose_mesh: expression coefficient count mismatch");
    if (params.pose.size() != tmpl.joint_rest.size())
        fail_data("pose_mesh: pose joint count mismatch");
}

}  // namespace

std::vector<Vec3> pose_vertices(const AvatarTemplate& tmpl, const AvatarParams& params,
                                const std::vector<int>& vertex_ids) {
    check_param_dims(tmpl, params);
    std::vector<Vec3> out(vertex_ids.size());

    bool zero_pose = true;
    for (const auto& aa : params.pose)
        if (aa.x != 0.0 || aa.y != 0.0 || aa.z != 0.0) {
            zero_pose = false;
            break;
        }
    if (zero_pose) {
        // All joint transforms are the identity; skip the weighted blend so a
        // rest pose reproduces the template bit-exactly.
        for (size_t k = 0; k < vertex_ids.size(); ++k)
            out[k] = shaped_vertex(tmpl, params, vertex_ids[k]) + params.translation;
        return out;
    }

    const auto world = joint_world_transforms(tmpl, params);
    for (size_t k = 0; k < vertex_ids.size(); ++k) {
        const int v = vertex_ids[k];
        const Vec3 shaped = shaped_vertex(tmpl, params, v);
        Vec3 acc{};
        for (size_t j = 0; j < world.size(); ++j) {
            const double w = tmpl.skin_weights[v][j];
            if (w == 0.0) continue;
            acc += (world[j].rot.apply(shaped) + world[j].trans) * w;
        }
        out[k] = acc + params.translation;
    }
    return out;
}

std::vector<Vec3> pose_mesh(const AvatarTemplate& tmpl, const AvatarParams& params) {
    std::vector<int> ids(tmpl.vertex_count());
    for (int i = 0; i < tmpl.vertex_count(); ++i) ids[i] = i;
    return pose_vertices(tmpl, params, ids);
}

std::vector<Vec3> apply_pose_residual(const std::vector<Vec3>& pose_ref,
                                      const std::vector<Vec3>& delta) {
    if (pose_ref.size() != delta.size()) fail_data("apply_pose_residual: joint count mismatch");
    std::vector<Vec3> out(pose_ref.size());
    for (size_t j = 0; j < out.size(); ++j)
        out[j] = canonicalize_axis_angle(pose_ref[j] + delta[j]);
    return out;
}

std::vector<ProjectedLandmark> project_landmarks(const AvatarTemplate& tmpl,
                                                 const AvatarParams& params, const Camera& cam,
                                                 const std::vector<int>& vertex_ids) {
    const auto posed = pose_vertices(tmpl, params, vertex_ids);
    std::vector<ProjectedLandmark> out(posed.size());
    for (size_t i = 0; i < posed.size(); ++i) {
        const Projected p = project_point(cam, posed[i]);
        out[i] = {p.u, p.v, p.valid};
    }
    return out;
}

// ---- serialization -----------------------------------------------------------

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec3_from_json(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }

json params_to_json_obj(const AvatarParams& p) {
    json jp;
    jp["shape"] = p.shape;
    jp["pose"] = json::array();
    for (const auto& aa : p.pose) jp["pose"].push_back(vec3_to_json(aa));
    jp["expression"] = p.expression;
    jp["translation"] = vec3_to_json(p.translation);
    return jp;
}

AvatarParams params_from_json_obj(const json& jp) {
    AvatarParams p;
    p.shape = jp.at("shape").get<std::vector<double>>();
    for (const auto& aa : jp.at("pose")) p.pose.push_back(vec3_from_json(aa));
    p.expression = jp.at("expression").get<std::vector<double>>();
    p.translation = vec3_from_json(jp.at("translation"));
    return p;
}

}  // namespace

std::string params_sequence_to_json(const std::vector<AvatarParams>& seq) {
    json arr = json::array();
    for (const auto& p : seq) arr.push_back(params_to_json_obj(p));
    return arr.dump();
}

std::vector<AvatarParams> params_sequence_from_json(const std::string& text) {
    json arr = json::parse(text, nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) fail_data("invalid params sequence JSON");
    std::vector<AvatarParams> seq;
    for (const auto& jp : arr) seq.push_back(params_from_json_obj(jp));
    return seq;
}

void save_params_sequence(const std::string& path, const std::vector<AvatarParams>& seq) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail_data("cannot open " + path);
    f << params_sequence_to_json(seq) << "\n";
}

std::vector<AvatarParams> load_params_sequence(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail_data("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return params_sequence_from_json(text);
}

namespace {

void blob_write(std::ofstream& f, const std::vector<double>& v) {
    const uint64_t n = v.size();
    f.write(reinterpret_cast<const char*>(&n), sizeof(n));
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * 8));
}

std::vector<double> blob_read(std::ifstream& f, const std::string& path) {
    uint64_t n = 0;
    if (!f.read(reinterpret_cast<char*>(&n), sizeof(n))) fail_data("template blob truncated: " + path);
    std::vector<double> v(n);
    if (!f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8)))
        fail_data("template blob truncated: " + path);
    return v;
}

std::vector<double> flatten_vecs(const std::vector<Vec3>& vs) {
    std::vector<double> out;
    out.reserve(vs.size() * 3);
    for (const auto& v : vs) {
        out.push_back(v.x);
        out.push_back(v.y);
        out.push_back(v.z);
    }
    return out;
}

std::vector<Vec3> unflatten_vecs(const std::vector<double>& d) {
    std::vector<Vec3> out(d.size() / 3);
    for (size_t i = 0; i < out.size(); ++i) out[i] = {d[3 * i], d[3 * i + 1], d[3 * i + 2]};
    return out;
}

}  // namespace

void save_template(const std::string& json_path, const std::string& blob_path,
                   const AvatarTemplate& tmpl) {
    json j;
    j["vertex_count"] = tmpl.vertex_count();
    j["triangles"] = json::array();
    for (const auto& t : tmpl.triangles) j["triangles"].push_back({t[0], t[1], t[2]});
    j["joint_parent"] = tmpl.joint_parent;
    j["joint_names"] = tmpl.joint_names;
    j["expression_names"] = tmpl.expression_names;
    j["semantic_label"] = tmpl.semantic_label;
    j["landmarks"] = {{"mouth", tmpl.landmarks.mouth},
                      {"eyes", tmpl.landmarks.eyes},
                      {"face_outline", tmpl.landmarks.face_outline},
                      {"hands", tmpl.landmarks.hands}};
    j["shape_count"] = tmpl.shape_basis.size();
    j["expression_count"] = tmpl.expression_basis.size();
    j["blob"] = blob_path;
    std::ofstream jf(json_path, std::ios::trunc);
    if (!jf) fail_data("cannot open " + json_path);
    jf << j.dump(2) << "\n";

    std::ofstream bf(blob_path, std::ios::binary | std::ios::trunc);
    if (!bf) fail_data("cannot open " + blob_path);
    blob_write(bf, flatten_vecs(tmpl.vertices));
    blob_write(bf, flatten_vecs(tmpl.joint_rest));
    std::vector<double> weights;
    for (const auto& row : tmpl.skin_weights)
        weights.insert(weights.end(), row.begin(), row.end());
    blob_write(bf, weights);
    for (const auto& basis : tmpl.shape_basis) blob_write(bf, flatten_vecs(basis));
    for (const auto& basis : tmpl.expression_basis) blob_write(bf, flatten_vecs(basis));
}

AvatarTemplate load_template(const std::string& json_path, const std::string& blob_path) {
    std::ifstream jf(json_path);
    if (!jf) fail_data("cannot open " + json_path);
    json j = json::parse(jf, nullptr, false);
    if (j.is_discarded()) fail_data("invalid template JSON: " + json_path);

    AvatarTemplate tmpl;
    for (const auto& t : j.at("triangles"))
        tmpl.triangles.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
    tmpl.joint_parent = j.at("joint_parent").get<std::vector<int>>();
    tmpl.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    tmpl.expression_names = j.at("expression_names").get<std::vector<std::string>>();
    tmpl.semantic_label = j.at("semantic_label").get<std::vector<int>>();
    tmpl.landmarks.mouth = j.at("landmarks").at("mouth").get<std::vector<int>>();
    tmpl.landmarks.eyes = j.at("landmarks").at("eyes").get<std::vector<int>>();
    tmpl.landmarks.face_outline = j.at("landmarks").at("face_outline").get<std::vector<int>>();
    tmpl.landmarks.hands = j.at("landmarks").at("hands").get<std::vector<int>>();

    std::ifstream bf(blob_path, std::ios::binary);
    if (!bf) fail_data("cannot open " + blob_path);
    tmpl.vertices = unflatten_vecs(blob_read(bf, blob_path));
    tmpl.joint_rest = unflatten_vecs(blob_read(bf, blob_path));
    const auto weights = blob_read(bf, blob_path);
    const int V = static_cast<int>(tmpl.vertices.size());
    const int J = static_cast<int>(tmpl.joint_rest.size());
    tmpl.skin_weights.assign(V, std::vector<double>(J));
    for (int v = 0; v < V; ++v)
        for (int jj = 0; jj < J; ++jj) tmpl.skin_weights[v][jj] = weights[static_cast<size_t>(v) * J + jj];
    const int B = j.at("shape_count").get<int>();
    const int E = j.at("expression_count").get<int>();
    for (int b = 0; b < B; ++b) tmpl.shape_basis.push_back(unflatten_vecs(blob_read(bf, blob_path)));
    for (int e = 0; e < E; ++e)
        tmpl.expression_basis.push_back(unflatten_vecs(blob_read(bf, blob_path)));

    tmpl.bbox_min = tmpl.bbox_max = tmpl.vertices.at(0);
    for (const auto& v : tmpl.vertices) {
        tmpl.bbox_min.x = std::min(tmpl.bbox_min.x, v.x);
        tmpl.bbox_min.y = std::min(tmpl.bbox_min.y, v.y);
        tmpl.bbox_min.z = std::min(tmpl.bbox_min.z, v.z);
        tmpl.bbox_max.x = std::max(tmpl.bbox_max.x, v.x);
        tmpl.bbox_max.y = std::max(tmpl.bbox_max.y, v.y);
        tmpl.bbox_max.z = std::max(tmpl.bbox_max.z, v.z);
    }
    tmpl.validate();
    return tmpl;
}

}  // namespace vlogdesk
