#include "tbsim/geometry.hpp"

#include "tbsim/common.hpp"

namespace tbsim {

RelativePose relative_pose(const Pose2D& pose_i, const Pose2D& pose_j) {
  TBSIM_CHECK(std::isfinite(pose_i.x) && std::isfinite(pose_i.y) && std::isfinite(pose_i.theta),
              "relative_pose: pose_i not finite");
  TBSIM_CHECK(std::isfinite(pose_j.x) && std::isfinite(pose_j.y) && std::isfinite(pose_j.theta),
              "relative_pose: pose_j not finite");
  const double c = std::cos(pose_i.theta);
  const double s = std::sin(pose_i.theta);
  const double dx = pose_j.x - pose_i.x;
  const double dy = pose_j.y - pose_i.y;
  RelativePose r;
  r.x = c * dx + s * dy;
  r.y = -s * dx + c * dy;
  r.theta = wrap_angle(pose_j.theta - pose_i.theta);
  return r;
}

Pose2D pose_compose(const Pose2D& a, const Pose2D& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  Pose2D out;
  out.x = a.x + c * b.x - s * b.y;
  out.y = a.y + s * b.x + c * b.y;
  out.theta = wrap_angle(a.theta + b.theta);
  return out;
}

Pose2D pose_inverse(const Pose2D& a) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  Pose2D inv;
  inv.x = -a.x * c - a.y * s;
  inv.y = a.x * s - a.y * c;
  inv.theta = wrap_angle(-a.theta);
  return inv;
}

void world_to_local(const Pose2D& frame, double wx, double wy, double* lx, double* ly) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  const double dx = wx - frame.x;
  const double dy = wy - frame.y;
  *lx = c * dx + s * dy;
  *ly = -s * dx + c * dy;
}

void local_to_world(const Pose2D& frame, double lx, double ly, double* wx, double* wy) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  *wx = frame.x + c * lx - s * ly;
  *wy = frame.y + s * lx + c * ly;
}

void pe_into(double value, const RpeConfig& cfg, double* out) {
  TBSIM_CHECK(cfg.dim > 0 && cfg.dim % 2 == 0, "pe: dim must be even and positive");
  TBSIM_CHECK(cfg.omega > 0.0, "pe: omega must be positive");
  TBSIM_CHECK(std::isfinite(value), "pe: value not finite");
  for (int i = 0; i < cfg.dim / 2; ++i) {
    const double freq = std::pow(cfg.omega, (2.0 * i) / cfg.dim);
    out[2 * i] = std::sin(value * freq);
    out[2 * i + 1] = std::cos(value * freq);
  }
}

std::vector<double> pe(double value, const RpeConfig& cfg) {
  std::vector<double> out(static_cast<size_t>(cfg.dim));
  pe_into(value, cfg, out.data());
  return out;
}

void ae_into(double theta, const RpeConfig& cfg, double* out) {
  TBSIM_CHECK(cfg.dim > 0 && cfg.dim % 2 == 0, "ae: dim must be even and positive");
  TBSIM_CHECK(std::isfinite(theta), "ae: theta not finite");
  for (int i = 0; i < cfg.dim / 2; ++i) {
    const double m = static_cast<double>(i + 1);
    out[2 * i] = std::sin(theta * m);
    out[2 * i + 1] = std::cos(theta * m);
  }
}

std::vector<double> ae(double theta, const RpeConfig& cfg) {
  std::vector<double> out(static_cast<size_t>(cfg.dim));
  ae_into(theta, cfg, out.data());
  return out;
}

std::vector<double> rpe(const RelativePose& r, const RpeConfig& cfg) {
  std::vector<double> out(static_cast<size_t>(3 * cfg.dim));
  pe_into(r.x, cfg, out.data());
  pe_into(r.y, cfg, out.data() + cfg.dim);
  ae_into(r.theta, cfg, out.data() + 2 * cfg.dim);
  return out;
}

}  // namespace tbsim
