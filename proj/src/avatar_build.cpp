#include <algorithm>
#include <cmath>

#include "vlogdesk/avatar.hpp"
#include "vlogdesk/errors.hpp"

namespace vlogdesk {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

struct MeshBuilder {
    AvatarTemplate tmpl;

    int add_vertex(const Vec3& p, int label) {
        tmpl.vertices.push_back(p);
        tmpl.semantic_label.push_back(label);
        tmpl.skin_weights.emplace_back(kNumJoints, 0.0);
        return static_cast<int>(tmpl.vertices.size()) - 1;
    }

    void add_triangle(int a, int b, int c) { tmpl.triangles.push_back({a, b, c}); }

    // Lat-long sphere; returns the index range [first, first+count).
    std::pair<int, int> add_sphere(const Vec3& center, double rx, double ry, double rz, int lat,
                                   int lon, int label) {
        const int first = static_cast<int>(tmpl.vertices.size());
        const int top = add_vertex(center + Vec3{0, ry, 0}, label);
        std::vector<std::vector<int>> rings;
        for (int i = 1; i < lat; ++i) {
            const double phi = kPi * i / lat;  // from +y pole
            std::vector<int> ring;
            for (int j = 0; j < lon; ++j) {
                const double theta = 2.0 * kPi * j / lon;
                // theta 0 faces +z (the camera side).
                const Vec3 dir{std::sin(phi) * std::sin(theta), std::cos(phi),
                               std::sin(phi) * std::cos(theta)};
                ring.push_back(add_vertex(center + Vec3{dir.x * rx, dir.y * ry, dir.z * rz}, label));
            }
            rings.push_back(std::move(ring));
        }
        const int bottom = add_vertex(center + Vec3{0, -ry, 0}, label);
        for (int j = 0; j < lon; ++j) {
            const int jn = (j + 1) % lon;
            add_triangle(top, rings[0][j], rings[0][jn]);
            add_triangle(bottom, rings.back()[jn], rings.back()[j]);
        }
        for (size_t i = 0; i + 1 < rings.size(); ++i)
            for (int j = 0; j < lon; ++j) {
                const int jn = (j + 1) % lon;
                add_triangle(rings[i][j], rings[i + 1][j], rings[i + 1][jn]);
                add_triangle(rings[i][j], rings[i + 1][jn], rings[i][jn]);
            }
        return {first, static_cast<int>(tmpl.vertices.size()) - first};
    }

    // Elliptical tube from p0 to p1 (p1 above or below p0 along the segment),
    // radius interpolated between the ends, open at both ends unless capped.
    std::pair<int, int> add_tube(const Vec3& p0, const Vec3& p1, double r0x, double r0z, double r1x,
                                 double r1z, int rings, int seg, int label, bool caps) {
        const int first = static_cast<int>(tmpl.vertices.size());
        Vec3 axis = p1 - p0;
        const double len = axis.norm();
        axis = axis * (1.0 / len);
        // Build a frame around the axis.
        Vec3 ref = std::abs(axis.y) < 0.9 ? Vec3{0, 1, 0} : Vec3{0, 0, 1};
        Vec3 u = axis.cross(ref);
        u = u * (1.0 / u.norm());
        Vec3 w = axis.cross(u);
        std::vector<std::vector<int>> ring_ids;
        for (int i = 0; i <= rings; ++i) {
            const double t = static_cast<double>(i) / rings;
            const Vec3 c = p0 + (p1 - p0) * t;
            const double rx = r0x + (r1x - r0x) * t;
            const double rz = r0z + (r1z - r0z) * t;
            std::vector<int> ring;
            for (int j = 0; j < seg; ++j) {
                const double a = 2.0 * kPi * j / seg;
                ring.push_back(add_vertex(c + u * (std::cos(a) * rx) + w * (std::sin(a) * rz), label));
            }
            ring_ids.push_back(std::move(ring));
        }
        for (int i = 0; i < rings; ++i)
            for (int j = 0; j < seg; ++j) {
                const int jn = (j + 1) % seg;
                add_triangle(ring_ids[i][j], ring_ids[i + 1][j], ring_ids[i + 1][jn]);
                add_triangle(ring_ids[i][j], ring_ids[i + 1][jn], ring_ids[i][jn]);
            }
        if (caps) {
            const int c0 = add_vertex(p0, label);
            const int c1 = add_vertex(p1, label);
            for (int j = 0; j < seg; ++j) {
                const int jn = (j + 1) % seg;
                add_triangle(c0, ring_ids[0][jn], ring_ids[0][j]);
                add_triangle(c1, ring_ids.back()[j], ring_ids.back()[jn]);
            }
        }
        return {first, static_cast<int>(tmpl.vertices.size()) - first};
    }
};

int nearest_vertex(const AvatarTemplate& tmpl, int first, int count, const Vec3& target,
                   int required_class = -1) {
    int best = -1;
    double best_d = 1e30;
    for (int v = first; v < first + count; ++v) {
        if (required_class >= 0 && tmpl.semantic_label[v] != required_class) continue;
        const double d = (tmpl.vertices[v] - target).norm();
        if (d < best_d) {
            best_d = d;
            best = v;
        }
    }
    return best >= 0 ? best : first;
}

}  // namespace

AvatarTemplate build_desk_avatar() {
    MeshBuilder mb;
    auto& tmpl = mb.tmpl;

    // Kinematic tree. Parents precede children.
    tmpl.joint_names = {"root",       "spine",      "chest",      "neck",
                        "head",       "jaw",        "l_clavicle", "l_shoulder",
                        "l_elbow",    "l_wrist",    "l_hand",     "r_clavicle",
                        "r_shoulder", "r_elbow",    "r_wrist",    "r_hand"};
    tmpl.joint_parent = {-1, 0, 1, 2, 3, 4, 2, 6, 7, 8, 9, 2, 11, 12, 13, 14};
    const Vec3 head_center{0, 1.62, 0};
    const double head_r = 0.11;
    tmpl.joint_rest = {
        {0, 0.95, 0},          // root (pelvis)
        {0, 1.08, 0},          // spine
        {0, 1.25, 0},          // chest
        {0, 1.42, 0},          // neck
        {0, 1.50, 0},          // head
        {0, 1.57, 0.02},       // jaw hinge
        {0.06, 1.38, 0},       // l_clavicle
        {0.20, 1.38, 0},       // l_shoulder
        {0.26, 1.12, 0.04},    // l_elbow
        {0.25, 0.93, 0.10},    // l_wrist
        {0.24, 0.885, 0.12},   // l_hand
        {-0.06, 1.38, 0},      // r_clavicle
        {-0.20, 1.38, 0},      // r_shoulder
        {-0.26, 1.12, 0.04},   // r_elbow
        {-0.25, 0.93, 0.10},   // r_wrist
        {-0.24, 0.885, 0.12},  // r_hand
    };

    // ---- geometry ----
    auto [head_first, head_count] = mb.add_sphere(head_center, head_r * 0.92, head_r, head_r, 20, 30, kClassFace);
    auto [torso_first, torso_count] =
        mb.add_tube({0, 0.90, 0}, {0, 1.42, 0}, 0.17, 0.10, 0.185, 0.105, 15, 26, kClassTorso, true);
    auto [neck_first, neck_count] =
        mb.add_tube({0, 1.41, 0}, {0, 1.545, 0}, 0.05, 0.05, 0.045, 0.045, 6, 14, kClassTorso, false);

    struct ArmIds {
        int up_first, up_count, lo_first, lo_count, hand_first, hand_count;
    };
    auto add_arm = [&](int side /* +1 left, -1 right */, int label) {
        const double s = side;
        auto [uf, uc] = mb.add_tube({0.185 * s, 1.40, 0}, {0.26 * s, 1.12, 0.04}, 0.055, 0.055,
                                    0.042, 0.042, 8, 12, label, false);
        auto [lf, lc] = mb.add_tube({0.26 * s, 1.12, 0.04}, {0.25 * s, 0.94, 0.10}, 0.040, 0.040,
                                    0.030, 0.030, 8, 12, label, false);
        auto [hf, hc] = mb.add_sphere({0.24 * s, 0.885, 0.12}, 0.042, 0.052, 0.045, 12, 16, kClassHands);
        return ArmIds{uf, uc, lf, lc, hf, hc};
    };
    const ArmIds left = add_arm(+1, kClassLeftArm);
    const ArmIds right = add_arm(-1, kClassRightArm);

    const int V = tmpl.vertex_count();

    // ---- semantic relabeling on the head (eyes, mouth) ----
    const Vec3 eye_dir_l{0.38, 0.30, 0.87};
    const Vec3 eye_dir_r{-0.38, 0.30, 0.87};
    const Vec3 mouth_dir{0, -0.45, 0.89};
    auto dir_of = [&](int v) {
        Vec3 d = tmpl.vertices[v] - head_center;
        return d * (1.0 / std::max(d.norm(), 1e-12));
    };
    auto angle_to = [&](int v, Vec3 ref) {
        ref = ref * (1.0 / ref.norm());
        return std::acos(std::clamp(dir_of(v).dot(ref), -1.0, 1.0));
    };
    for (int v = head_first; v < head_first + head_count; ++v) {
        if (angle_to(v, eye_dir_l) < 0.20 || angle_to(v, eye_dir_r) < 0.20)
            tmpl.semantic_label[v] = kClassEyes;
        else if (angle_to(v, mouth_dir) < 0.26)
            tmpl.semantic_label[v] = kClassMouth;
    }

    // ---- skin weights ----
    auto set_w = [&](int v, int joint, double w) { tmpl.skin_weights[v][joint] = w; };
    for (int v = head_first; v < head_first + head_count; ++v) {
        // Lower-front of the head blends into the jaw joint.
        const Vec3 p = tmpl.vertices[v];
        const double jawness = clamp01((head_center.y - 0.025 - p.y) / 0.06) *
                               clamp01((p.z - head_center.z + 0.04) / 0.08);
        set_w(v, kJointJaw, 0.8 * jawness);
        set_w(v, kJointHead, 1.0 - 0.8 * jawness);
    }
    for (int v = torso_first; v < torso_first + torso_count; ++v) {
        const double y = tmpl.vertices[v].y;
        double w_root = 0, w_spine = 0, w_chest = 0;
        if (y <= 1.02) {
            w_root = 1;
        } else if (y <= 1.18) {
            w_spine = (y - 1.02) / 0.16;
            w_root = 1 - w_spine;
        } else if (y <= 1.33) {
            w_chest = (y - 1.18) / 0.15;
            w_spine = 1 - w_chest;
        } else {
            w_chest = 1;
        }
        // Shoulder shelf follows the clavicles a little.
        const double x = tmpl.vertices[v].x;
        if (y > 1.30 && std::abs(x) > 0.10) {
            const double wc = 0.3 * clamp01((std::abs(x) - 0.10) / 0.08);
            set_w(v, x > 0 ? kJointLeftClavicle : kJointRightClavicle, wc * w_chest);
            w_chest *= 1.0 - wc;
        }
        set_w(v, kJointRoot, w_root);
        set_w(v, kJointSpine, w_spine);
        set_w(v, kJointChest, w_chest);
    }
    for (int v = neck_first; v < neck_first + neck_count; ++v) {
        const double t = clamp01((tmpl.vertices[v].y - 1.41) / 0.135);
        set_w(v, kJointNeck, 1.0 - t * 0.6);
        set_w(v, kJointHead, t * 0.6);
    }
    auto weight_limb = [&](const ArmIds& arm, int shoulder, int elbow, int wrist, int hand,
                           double y_top, double y_elb, double y_wri) {
        for (int v = arm.up_first; v < arm.up_first + arm.up_count; ++v) {
            const double t = clamp01((y_top - tmpl.vertices[v].y) / (y_top - y_elb));
            const double we = 0.5 * clamp01((t - 0.75) / 0.25);
            set_w(v, shoulder, 1.0 - we);
            set_w(v, elbow, we);
        }
        for (int v = arm.lo_first; v < arm.lo_first + arm.lo_count; ++v) {
            const double t = clamp01((y_elb - tmpl.vertices[v].y) / (y_elb - y_wri));
            const double ww = 0.5 * clamp01((t - 0.75) / 0.25);
            set_w(v, elbow, 1.0 - ww);
            set_w(v, wrist, ww);
        }
        for (int v = arm.hand_first; v < arm.hand_first + arm.hand_count; ++v)
            set_w(v, hand, 1.0);
    };
    weight_limb(left, kJointLeftShoulder, kJointLeftElbow, kJointLeftWrist, kJointLeftHand, 1.40,
                1.12, 0.94);
    weight_limb(right, kJointRightShoulder, kJointRightElbow, kJointRightWrist, kJointRightHand,
                1.40, 1.12, 0.94);

    for (int v = 0; v < V; ++v) {
        double sum = 0;
        for (double w : tmpl.skin_weights[v]) sum += w;
        if (sum <= 0) {
            tmpl.skin_weights[v][kJointRoot] = 1.0;
        } else {
            for (auto& w : tmpl.skin_weights[v]) w /= sum;
        }
    }

    // ---- shape basis ----
    tmpl.shape_basis.assign(kNumShapeCoeffs, std::vector<Vec3>(V, Vec3{}));
    const Vec3 root = tmpl.joint_rest[kJointRoot];
    for (int v = 0; v < V; ++v) {
        const Vec3 p = tmpl.vertices[v];
        const bool on_head = tmpl.semantic_label[v] == kClassFace ||
                             tmpl.semantic_label[v] == kClassEyes ||
                             tmpl.semantic_label[v] == kClassMouth;
        tmpl.shape_basis[0][v] = (p - root) * 0.05;                       // overall size
        tmpl.shape_basis[1][v] = {0, (p.y - root.y) * 0.06, 0};           // height
        tmpl.shape_basis[2][v] = {p.x * (on_head ? 0.015 : 0.08), 0,     // width
                                  p.z * (on_head ? 0.015 : 0.08)};
        tmpl.shape_basis[3][v] = on_head ? (p - head_center) * 0.10 : Vec3{};  // head size
    }

    // ---- expression basis ----
    tmpl.expression_names = {"jaw",        "eyelids",   "brow",      "smile",  "mouth_wide",
                             "mouth_frown", "cheek_puff", "eye_wide", "gaze_x", "gaze_y"};
    tmpl.expression_basis.assign(kNumExpressions, std::vector<Vec3>(V, Vec3{}));
    const Vec3 eye_center_l = head_center + eye_dir_l * head_r;
    const Vec3 eye_center_r = head_center + eye_dir_r * head_r;
    const Vec3 mouth_center = head_center + mouth_dir * head_r;
    for (int v = head_first; v < head_first + head_count; ++v) {
        const Vec3 p = tmpl.vertices[v];
        const int label = tmpl.semantic_label[v];
        const Vec3 radial = dir_of(v);
        const double mouth_fall = clamp01(1.0 - (p - mouth_center).norm() / 0.075);
        const double jaw_fall = clamp01((head_center.y - 0.02 - p.y) / 0.05) *
                                clamp01((p.z - head_center.z + 0.02) / 0.07);
        tmpl.expression_basis[kExprJaw][v] = Vec3{0, -0.020, -0.002} * jaw_fall +
                                             Vec3{0, -0.010, 0.004} * mouth_fall;
        if (label == kClassEyes) {
            const bool is_left = p.x > 0;
            const Vec3 ec = is_left ? eye_center_l : eye_center_r;
            const double above = clamp01((p.y - ec.y + 0.012) / 0.024);
            tmpl.expression_basis[kExprEyelids][v] = {0, -0.016 * above, -0.002};
            tmpl.expression_basis[kExprEyeWide][v] = radial * 0.006;
            tmpl.expression_basis[kExprGazeX][v] = {0.008, 0, 0};
            tmpl.expression_basis[kExprGazeY][v] = {0, 0.008, 0};
        }
        const double brow_fall = clamp01(1.0 - (p.y - (head_center.y + 0.045)) * (p.y - (head_center.y + 0.045)) / 0.0016) *
                                 clamp01((p.z - head_center.z) / 0.05);
        if (p.y > head_center.y + 0.02 && p.z > head_center.z)
            tmpl.expression_basis[kExprBrow][v] = {0, 0.010 * brow_fall, 0.002 * brow_fall};
        if (label == kClassMouth) {
            const double corner = clamp01((std::abs(p.x) - 0.015) / 0.03);
            tmpl.expression_basis[kExprSmile][v] = {0, 0.012 * corner, 0};
            tmpl.expression_basis[kExprMouthFrown][v] = {0, -0.012 * corner, 0};
            tmpl.expression_basis[kExprMouthWide][v] = {0.014 * (p.x > 0 ? 1 : -1) * corner, 0, 0};
        }
        const double cheek = clamp01(1.0 - std::abs(p.y - (head_center.y - 0.03)) / 0.05) *
                             clamp01((std::abs(p.x) - 0.03) / 0.05) * clamp01((p.z - head_center.z) / 0.06);
        tmpl.expression_basis[kExprCheekPuff][v] = radial * (0.012 * cheek);
    }

    // ---- landmarks ----
    auto& lms = tmpl.landmarks;
    for (int k = 0; k < 8; ++k) {
        const double a = 2.0 * kPi * k / 8;
        const Vec3 target = mouth_center + Vec3{std::cos(a) * 0.022, std::sin(a) * 0.014, 0.01};
        lms.mouth.push_back(nearest_vertex(tmpl, head_first, head_count, target, kClassMouth));
    }
    for (const Vec3& ec : {eye_center_l, eye_center_r}) {
        for (const Vec3 off : {Vec3{0.018, 0, 0}, Vec3{-0.018, 0, 0}, Vec3{0, 0.014, 0}, Vec3{0, -0.014, 0}})
            lms.eyes.push_back(nearest_vertex(tmpl, head_first, head_count, ec + off, kClassEyes));
    }
    for (int k = 0; k < 10; ++k) {
        const double a = kPi * (0.15 + 0.7 * k / 9.0);  // arc over the face silhouette
        const Vec3 target = head_center + Vec3{std::cos(a) * head_r, std::sin(a - kPi / 2) * head_r * 0.4, head_r * 0.55};
        lms.face_outline.push_back(nearest_vertex(tmpl, head_first, head_count, target));
    }
    for (const ArmIds* arm : {&left, &right}) {
        const Vec3 hc = tmpl.vertices[arm->hand_first];  // top pole of the hand sphere
        lms.hands.push_back(nearest_vertex(tmpl, arm->hand_first, arm->hand_count, hc + Vec3{0, -0.09, 0}));
        lms.hands.push_back(nearest_vertex(tmpl, arm->hand_first, arm->hand_count, hc + Vec3{0.04, -0.05, 0.03}));
        lms.hands.push_back(nearest_vertex(tmpl, arm->hand_first, arm->hand_count, hc + Vec3{-0.04, -0.05, 0.03}));
        lms.hands.push_back(nearest_vertex(tmpl, arm->hand_first, arm->hand_count, hc + Vec3{0, -0.05, 0.05}));
        lms.hands.push_back(nearest_vertex(tmpl, arm->hand_first, arm->hand_count, hc + Vec3{0, -0.05, -0.05}));
    }
    // De-duplicate while keeping order stable.
    auto dedup = [](std::vector<int>& v) {
        std::vector<int> out;
        for (int id : v)
            if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
        v = out;
    };
    dedup(lms.mouth);
    dedup(lms.eyes);
    dedup(lms.face_outline);
    dedup(lms.hands);

    tmpl.bbox_min = tmpl.bbox_max = tmpl.vertices[0];
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
