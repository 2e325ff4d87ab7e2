#pragma once

#include <cmath>
#include <vector>

namespace tbsim {

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi]. wrap(pi + eps) = -pi + eps.
inline double wrap_angle(double theta) {
  double w = std::fmod(theta + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

// SE(2) pose: position in meters, heading in radians.
struct Pose2D {
  double x{0.0};
  double y{0.0};
  double theta{0.0};
};

// Pose of token j expressed in the frame of token i.
struct RelativePose {
  double x{0.0};
  double y{0.0};
  double theta{0.0};
};

// Sinusoidal encoding config: per-component width (even) and base frequency.
struct RpeConfig {
  int dim{40};
  double omega{1000.0};
};

// Returns pose_j expressed in pose_i's frame. theta lands in (-pi, pi].
RelativePose relative_pose(const Pose2D& pose_i, const Pose2D& pose_j);

// Composition c = a * b (b expressed in a's frame, result in the world frame).
Pose2D pose_compose(const Pose2D& a, const Pose2D& b);
Pose2D pose_inverse(const Pose2D& a);

// Transforms a world point into the pose's local frame and back.
void world_to_local(const Pose2D& frame, double wx, double wy, double* lx, double* ly);
void local_to_world(const Pose2D& frame, double lx, double ly, double* wx, double* wy);

// PE_{2i}(x) = sin(x * omega^{2i/dim}), PE_{2i+1}(x) = cos(x * omega^{2i/dim}).
void pe_into(double value, const RpeConfig& cfg, double* out);
std::vector<double> pe(double value, const RpeConfig& cfg);

// AE_{2i}(theta) = sin(theta * (i+1)), AE_{2i+1}(theta) = cos(theta * (i+1)).
void ae_into(double theta, const RpeConfig& cfg, double* out);
std::vector<double> ae(double theta, const RpeConfig& cfg);

// concat(PE(x), PE(y), AE(theta)); length 3*dim.
std::vector<double> rpe(const RelativePose& r, const RpeConfig& cfg);

}  // namespace tbsim
