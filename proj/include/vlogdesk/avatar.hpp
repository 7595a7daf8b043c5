#ifndef VLOGDESK_AVATAR_HPP
#define VLOGDESK_AVATAR_HPP

#include <array>
#include <string>
#include <vector>

#include "vlogdesk/camera.hpp"

namespace vlogdesk {

// Semantic classes rendered by the control pipeline.
enum SemanticClass : int {
    kClassBackground = 0,
    kClassFace = 1,
    kClassEyes = 2,
    kClassMouth = 3,
    kClassTorso = 4,
    kClassLeftArm = 5,
    kClassRightArm = 6,
    kClassHands = 7,
};
inline constexpr int kNumClasses = 8;

// Joint indices of the kinematic tree built by build_desk_avatar().
enum JointId : int {
    kJointRoot = 0,
    kJointSpine,
    kJointChest,
    kJointNeck,
    kJointHead,
    kJointJaw,
    kJointLeftClavicle,
    kJointLeftShoulder,
    kJointLeftElbow,
    kJointLeftWrist,
    kJointLeftHand,
    kJointRightClavicle,
    kJointRightShoulder,
    kJointRightElbow,
    kJointRightWrist,
    kJointRightHand,
};
inline constexpr int kNumJoints = 16;

// Expression channel indices; names are exposed for editing scripts.
enum ExpressionId : int {
    kExprJaw = 0,
    kExprEyelids,
    kExprBrow,
    kExprSmile,
    kExprMouthWide,
    kExprMouthFrown,
    kExprCheekPuff,
    kExprEyeWide,
    kExprGazeX,
    kExprGazeY,
};
inline constexpr int kNumExpressions = 10;
inline constexpr int kNumShapeCoeffs = 4;

struct AvatarTemplate {
    std::vector<Vec3> vertices;                  // rest positions, meters
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> joint_rest;                // size kNumJoints
    std::vector<int> joint_parent;               // -1 for the root
    std::vector<std::vector<double>> skin_weights;  // V x J, rows sum to 1
    std::vector<std::vector<Vec3>> shape_basis;      // B x V
    std::vector<std::vector<Vec3>> expression_basis; // E x V
    std::vector<int> semantic_label;             // per vertex
    std::vector<std::string> expression_names;
    std::vector<std::string> joint_names;

    struct LandmarkSets {
        std::vector<int> mouth, eyes, face_outline, hands;
    } landmarks;

    Vec3 bbox_min, bbox_max;  // rest-pose bounds, used by the dense render

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int triangle_count() const { return static_cast<int>(triangles.size()); }
    std::vector<int> all_landmarks() const;
    // Checks the structural invariants (weight rows, tree shape, index ranges).
    void validate() const;
};

// Procedural low-poly face+body template (head with articulated jaw and
// expression blendshapes, torso, two arms with hands).
AvatarTemplate build_desk_avatar();

struct AvatarParams {
    std::vector<double> shape;       // B
    std::vector<Vec3> pose;          // J axis-angle, |angle| < pi
    std::vector<double> expression;  // E
    Vec3 translation;

    static AvatarParams rest();
};

// Canonicalizes to magnitude < pi (maps angle into (-pi, pi] direction-wise).
Vec3 canonicalize_axis_angle(const Vec3& aa);

// LBS over the kinematic tree after shape/expression blendshape offsets.
std::vector<Vec3> pose_mesh(const AvatarTemplate& tmpl, const AvatarParams& params);
// Same, restricted to a vertex subset (used by fitting and landmarks).
std::vector<Vec3> pose_vertices(const AvatarTemplate& tmpl, const AvatarParams& params,
                                const std::vector<int>& vertex_ids);

// Componentwise residual application, then canonicalization.
std::vector<Vec3> apply_pose_residual(const std::vector<Vec3>& pose_ref,
                                      const std::vector<Vec3>& delta);

struct ProjectedLandmark {
    double u = 0, v = 0;
    bool valid = false;
};

std::vector<ProjectedLandmark> project_landmarks(const AvatarTemplate& tmpl,
                                                 const AvatarParams& params, const Camera& cam,
                                                 const std::vector<int>& vertex_ids);

struct FitOptions {
    int max_iters = 400;
    double lr = 0.02;
    double lambda_temporal = 0.1;
    // Small anchor toward the init values. The projection objective is rank
    // deficient along twist axes between consecutive joints (a rotation of a
    // joint about the axis to its child can be exactly undone by the child),
    // so a tie-breaker is needed for the parameters themselves to converge.
    // In pixel^2 units; ~1e-3 of the observed-direction curvature.
    double lambda_prior = 1.0;
};

struct FitResult {
    std::vector<AvatarParams> params;
    double residual = 0.0;  // final mean squared projection error (pixels^2)
    int iters = 0;
};

// Gradient-based minimization of projection error plus a temporal smoothness
// term between consecutive frames. `observed` is frames x points x 2 in
// pixels over `vertex_ids`; an empty id list means tmpl.all_landmarks().
// Passing a body-covering vertex sample mirrors fitting against full-body 2D
// joint estimates and makes per-joint recovery well posed. Throws a numeric
// error carrying the best-so-far residual in its message if the loss rises
// for 50 consecutive iterations.
FitResult fit_to_landmarks(const AvatarTemplate& tmpl,
                           const std::vector<std::vector<std::array<double, 2>>>& observed,
                           const Camera& cam, const AvatarParams& init, const FitOptions& opts = {},
                           const std::vector<int>& vertex_ids = {});

// Parameter sequence (de)serialization.
std::string params_sequence_to_json(const std::vector<AvatarParams>& seq);
std::vector<AvatarParams> params_sequence_from_json(const std::string& text);
void save_params_sequence(const std::string& path, const std::vector<AvatarParams>& seq);
std::vector<AvatarParams> load_params_sequence(const std::string& path);

// Template serialization: JSON for structure (indices, labels, names) plus a
// raw little-endian array blob.
void save_template(const std::string& json_path, const std::string& blob_path,
                   const AvatarTemplate& tmpl);
AvatarTemplate load_template(const std::string& json_path, const std::string& blob_path);

}  // namespace vlogdesk

#endif
