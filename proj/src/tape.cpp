#include "tbsim/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "tbsim/common.hpp"

namespace tbsim {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapCM = Eigen::Map<const EMat>;

MapCM as_mat(const Tensor& t) {
  TBSIM_CHECK(t.rank() == 2, "expected rank-2 tensor, got " + t.shape_str());
  return MapCM(t.data(), t.dim(0), t.dim(1));
}

MapM as_mat(Tensor& t) { return MapM(t.data(), t.dim(0), t.dim(1)); }

}  // namespace

int Tape::add_node(Tensor data, bool needs_grad) {
  Node n;
  n.data = std::move(data);
  n.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::set_back(int id, std::function<void()> fn) {
  if (nodes_[static_cast<size_t>(id)].needs_grad) nodes_[static_cast<size_t>(id)].back = std::move(fn);
}

Tensor& Tape::gbuf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.data.shape());
  return n.grad;
}

void Tape::check_same_tape(const Value& v) const {
  TBSIM_CHECK(v.tape() == this, "value belongs to a different tape");
}

Value Tape::constant(Tensor t) { return Value(this, add_node(std::move(t), false)); }

Value Tape::param(Parameter& p) {
  int id = add_node(p.data, true);
  nodes_[static_cast<size_t>(id)].sink = &p;
  return Value(this, id);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Value Tape::add(const Value& a, const Value& b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& x = d(a);
  const Tensor& y = d(b);
  TBSIM_CHECK(x.same_shape(y), "add: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] + y[i];
  int id = add_node(std::move(out), ng(a) || ng(b));
  set_back(id, [this, id, ai = a.id(), bi = b.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    if (nodes_[static_cast<size_t>(ai)].needs_grad) {
      Tensor& ga = gbuf(ai);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (nodes_[static_cast<size_t>(bi)].needs_grad) {
      Tensor& gb = gbuf(bi);
      for (int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i];
    }
  });
  return Value(this, id);
}

Value Tape::sub(const Value& a, const Value& b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& x = d(a);
  const Tensor& y = d(b);
  TBSIM_CHECK(x.same_shape(y), "sub: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] - y[i];
  int id = add_node(std::move(out), ng(a) || ng(b));
  set_back(id, [this, id, ai = a.id(), bi = b.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    if (nodes_[static_cast<size_t>(ai)].needs_grad) {
      Tensor& ga = gbuf(ai);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (nodes_[static_cast<size_t>(bi)].needs_grad) {
      Tensor& gb = gbuf(bi);
      for (int64_t i = 0; i < go.numel(); ++i) gb[i] -= go[i];
    }
  });
  return Value(this, id);
}

Value Tape::mul(const Value& a, const Value& b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& x = d(a);
  const Tensor& y = d(b);
  TBSIM_CHECK(x.same_shape(y), "mul: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * y[i];
  int id = add_node(std::move(out), ng(a) || ng(b));
  set_back(id, [this, id, ai = a.id(), bi = b.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    const Tensor& y = nodes_[static_cast<size_t>(bi)].data;
    if (nodes_[static_cast<size_t>(ai)].needs_grad) {
      Tensor& ga = gbuf(ai);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * y[i];
    }
    if (nodes_[static_cast<size_t>(bi)].needs_grad) {
      Tensor& gb = gbuf(bi);
      for (int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * x[i];
    }
  });
  return Value(this, id);
}

Value Tape::scale(const Value& a, double c) {
  check_same_tape(a);
  const Tensor& x = d(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * c;
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id(), c] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * c;
  });
  return Value(this, id);
}

Value Tape::add_scalar(const Value& a, double c) {
  check_same_tape(a);
  const Tensor& x = d(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] + c;
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
  });
  return Value(this, id);
}

Value Tape::relu(const Value& a) {
  check_same_tape(a);
  const Tensor& x = d(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += x[i] > 0.0 ? go[i] : 0.0;
  });
  return Value(this, id);
}

Value Tape::sin(const Value& a) {
  check_same_tape(a);
  const Tensor& x = d(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::sin(x[i]);
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * std::cos(x[i]);
  });
  return Value(this, id);
}

Value Tape::cos(const Value& a) {
  check_same_tape(a);
  const Tensor& x = d(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::cos(x[i]);
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] -= go[i] * std::sin(x[i]);
  });
  return Value(this, id);
}

Value Tape::exp(const Value& a) {
  check_same_tape(a);
  const Tensor& x = d(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::exp(x[i]);
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& y = nodes_[static_cast<size_t>(id)].data;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * y[i];
  });
  return Value(this, id);
}

Value Tape::log(const Value& a) {
  check_same_tape(a);
  const Tensor& x = d(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::log(x[i]);
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] / x[i];
  });
  return Value(this, id);
}

Value Tape::clamp(const Value& a, double lo, double hi) {
  check_same_tape(a);
  const Tensor& x = d(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::min(std::max(x[i], lo), hi);
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id(), lo, hi] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) {
      if (x[i] >= lo && x[i] <= hi) ga[i] += go[i];
    }
  });
  return Value(this, id);
}

Value Tape::clamp(const Value& a, const Tensor& lo, const Tensor& hi) {
  check_same_tape(a);
  const Tensor& x = d(a);
  TBSIM_CHECK(x.same_shape(lo) && x.same_shape(hi),
              "clamp: bounds shape mismatch " + x.shape_str() + " vs " + lo.shape_str());
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::min(std::max(x[i], lo[i]), hi[i]);
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id(), lo, hi] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) {
      if (x[i] >= lo[i] && x[i] <= hi[i]) ga[i] += go[i];
    }
  });
  return Value(this, id);
}

Value Tape::wrap_angle(const Value& a) {
  check_same_tape(a);
  const Tensor& x = d(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = ::tbsim::wrap_angle(x[i]);
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
  });
  return Value(this, id);
}

Value Tape::mask_fill(const Value& a, const std::vector<uint8_t>& keep, double fill) {
  check_same_tape(a);
  const Tensor& x = d(a);
  TBSIM_CHECK(static_cast<int64_t>(keep.size()) == x.numel(),
              "mask_fill: mask size does not match tensor " + x.shape_str());
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = keep[static_cast<size_t>(i)] ? x[i] : fill;
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id(), keep] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) {
      if (keep[static_cast<size_t>(i)]) ga[i] += go[i];
    }
  });
  return Value(this, id);
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Value Tape::matmul(const Value& a, const Value& b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& x = d(a);
  const Tensor& y = d(b);
  TBSIM_CHECK(x.rank() == 2 && y.rank() == 2 && x.dim(1) == y.dim(0),
              "matmul: shape mismatch " + x.shape_str() + " x " + y.shape_str());
  Tensor out({x.dim(0), y.dim(1)});
  as_mat(out) = as_mat(x) * as_mat(y);
  int id = add_node(std::move(out), ng(a) || ng(b));
  set_back(id, [this, id, ai = a.id(), bi = b.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    const Tensor& y = nodes_[static_cast<size_t>(bi)].data;
    if (nodes_[static_cast<size_t>(ai)].needs_grad)
      as_mat(gbuf(ai)) += as_mat(go) * as_mat(y).transpose();
    if (nodes_[static_cast<size_t>(bi)].needs_grad)
      as_mat(gbuf(bi)) += as_mat(x).transpose() * as_mat(go);
  });
  return Value(this, id);
}

Value Tape::matmul_nt(const Value& a, const Value& b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& x = d(a);
  const Tensor& y = d(b);
  TBSIM_CHECK(x.rank() == 2 && y.rank() == 2 && x.dim(1) == y.dim(1),
              "matmul_nt: shape mismatch " + x.shape_str() + " x " + y.shape_str() + "^T");
  Tensor out({x.dim(0), y.dim(0)});
  as_mat(out) = as_mat(x) * as_mat(y).transpose();
  int id = add_node(std::move(out), ng(a) || ng(b));
  set_back(id, [this, id, ai = a.id(), bi = b.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    const Tensor& y = nodes_[static_cast<size_t>(bi)].data;
    if (nodes_[static_cast<size_t>(ai)].needs_grad)
      as_mat(gbuf(ai)) += as_mat(go) * as_mat(y);
    if (nodes_[static_cast<size_t>(bi)].needs_grad)
      as_mat(gbuf(bi)) += as_mat(go).transpose() * as_mat(x);
  });
  return Value(this, id);
}

Value Tape::add_rowwise(const Value& a, const Value& bias) {
  check_same_tape(a);
  check_same_tape(bias);
  const Tensor& x = d(a);
  const Tensor& b = d(bias);
  TBSIM_CHECK(x.rank() == 2 && b.rank() == 1 && x.dim(1) == b.dim(0),
              "add_rowwise: shape mismatch " + x.shape_str() + " + " + b.shape_str());
  Tensor out(x.shape());
  const int n = x.dim(0), m = x.dim(1);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c) out.at(r, c) = x.at(r, c) + b[c];
  int id = add_node(std::move(out), ng(a) || ng(bias));
  set_back(id, [this, id, ai = a.id(), bi = bias.id(), n, m] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    if (nodes_[static_cast<size_t>(ai)].needs_grad) {
      Tensor& ga = gbuf(ai);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (nodes_[static_cast<size_t>(bi)].needs_grad) {
      Tensor& gb = gbuf(bi);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) gb[c] += go.at(r, c);
    }
  });
  return Value(this, id);
}

Value Tape::layer_norm(const Value& x, const Value& gain, const Value& bias) {
  check_same_tape(x);
  check_same_tape(gain);
  check_same_tape(bias);
  const Tensor& xv = d(x);
  const Tensor& g = d(gain);
  const Tensor& b = d(bias);
  TBSIM_CHECK(xv.rank() == 2, "layer_norm: expected rank-2 input, got " + xv.shape_str());
  const int n = xv.dim(0), m = xv.dim(1);
  TBSIM_CHECK(g.rank() == 1 && g.dim(0) == m && b.rank() == 1 && b.dim(0) == m,
              "layer_norm: gain/bias width mismatch " + xv.shape_str());
  constexpr double kEps = 1e-5;
  Tensor out({n, m});
  Tensor xhat({n, m});
  Tensor inv_std({n});
  for (int r = 0; r < n; ++r) {
    double mean = 0.0;
    for (int c = 0; c < m; ++c) mean += xv.at(r, c);
    mean /= m;
    double var = 0.0;
    for (int c = 0; c < m; ++c) {
      const double dv = xv.at(r, c) - mean;
      var += dv * dv;
    }
    var /= m;
    const double is = 1.0 / std::sqrt(var + kEps);
    inv_std[r] = is;
    for (int c = 0; c < m; ++c) {
      const double xh = (xv.at(r, c) - mean) * is;
      xhat.at(r, c) = xh;
      out.at(r, c) = g[c] * xh + b[c];
    }
  }
  int id = add_node(std::move(out), ng(x) || ng(gain) || ng(bias));
  set_back(id, [this, id, xi = x.id(), gi = gain.id(), bi = bias.id(),
                xhat = std::move(xhat), inv_std = std::move(inv_std), n, m] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& g = nodes_[static_cast<size_t>(gi)].data;
    if (nodes_[static_cast<size_t>(gi)].needs_grad) {
      Tensor& gg = gbuf(gi);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) gg[c] += go.at(r, c) * xhat.at(r, c);
    }
    if (nodes_[static_cast<size_t>(bi)].needs_grad) {
      Tensor& gb = gbuf(bi);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) gb[c] += go.at(r, c);
    }
    if (nodes_[static_cast<size_t>(xi)].needs_grad) {
      Tensor& gx = gbuf(xi);
      for (int r = 0; r < n; ++r) {
        double mean_h = 0.0, mean_hx = 0.0;
        for (int c = 0; c < m; ++c) {
          const double h = g[c] * go.at(r, c);
          mean_h += h;
          mean_hx += h * xhat.at(r, c);
        }
        mean_h /= m;
        mean_hx /= m;
        for (int c = 0; c < m; ++c) {
          const double h = g[c] * go.at(r, c);
          gx.at(r, c) += inv_std[r] * (h - mean_h - xhat.at(r, c) * mean_hx);
        }
      }
    }
  });
  return Value(this, id);
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Value Tape::reshape(const Value& a, std::vector<int> shape) {
  check_same_tape(a);
  const Tensor& x = d(a);
  TBSIM_CHECK(shape_numel(shape) == x.numel(),
              "reshape: element count mismatch " + x.shape_str());
  Tensor out(std::move(shape));
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i];
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id()] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
  });
  return Value(this, id);
}

Value Tape::concat_rows(const std::vector<Value>& parts) {
  TBSIM_CHECK(!parts.empty(), "concat_rows: no inputs");
  int cols = d(parts[0]).dim(1);
  int rows = 0;
  bool needs = false;
  for (const Value& p : parts) {
    check_same_tape(p);
    const Tensor& t = d(p);
    TBSIM_CHECK(t.rank() == 2 && t.dim(1) == cols, "concat_rows: width mismatch " + t.shape_str());
    rows += t.dim(0);
    needs = needs || ng(p);
  }
  Tensor out({rows, cols});
  int64_t off = 0;
  for (const Value& p : parts) {
    const Tensor& t = d(p);
    for (int64_t i = 0; i < t.numel(); ++i) out[off + i] = t[i];
    off += t.numel();
  }
  std::vector<int> ids;
  for (const Value& p : parts) ids.push_back(p.id());
  int id = add_node(std::move(out), needs);
  set_back(id, [this, id, ids] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    int64_t off = 0;
    for (int pid : ids) {
      Node& pn = nodes_[static_cast<size_t>(pid)];
      const int64_t n = pn.data.numel();
      if (pn.needs_grad) {
        Tensor& gp = gbuf(pid);
        for (int64_t i = 0; i < n; ++i) gp[i] += go[off + i];
      }
      off += n;
    }
  });
  return Value(this, id);
}

Value Tape::concat_cols(const std::vector<Value>& parts) {
  TBSIM_CHECK(!parts.empty(), "concat_cols: no inputs");
  int rows = d(parts[0]).dim(0);
  int cols = 0;
  bool needs = false;
  for (const Value& p : parts) {
    check_same_tape(p);
    const Tensor& t = d(p);
    TBSIM_CHECK(t.rank() == 2 && t.dim(0) == rows, "concat_cols: height mismatch " + t.shape_str());
    cols += t.dim(1);
    needs = needs || ng(p);
  }
  Tensor out({rows, cols});
  int coff = 0;
  for (const Value& p : parts) {
    const Tensor& t = d(p);
    const int w = t.dim(1);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c) out.at(r, coff + c) = t.at(r, c);
    coff += w;
  }
  std::vector<int> ids;
  for (const Value& p : parts) ids.push_back(p.id());
  int id = add_node(std::move(out), needs);
  set_back(id, [this, id, ids, rows] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    int coff = 0;
    for (int pid : ids) {
      Node& pn = nodes_[static_cast<size_t>(pid)];
      const int w = pn.data.dim(1);
      if (pn.needs_grad) {
        Tensor& gp = gbuf(pid);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < w; ++c) gp.at(r, c) += go.at(r, coff + c);
      }
      coff += w;
    }
  });
  return Value(this, id);
}

Value Tape::slice_cols(const Value& a, int start, int len) {
  check_same_tape(a);
  const Tensor& x = d(a);
  TBSIM_CHECK(x.rank() == 2 && start >= 0 && len > 0 && start + len <= x.dim(1),
              "slice_cols: bad range on " + x.shape_str());
  const int n = x.dim(0);
  Tensor out({n, len});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < len; ++c) out.at(r, c) = x.at(r, start + c);
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id(), start, len, n] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = gbuf(ai);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < len; ++c) ga.at(r, start + c) += go.at(r, c);
  });
  return Value(this, id);
}

Value Tape::gather_rows(const Value& a, std::vector<int> idx) {
  check_same_tape(a);
  const Tensor& x = d(a);
  TBSIM_CHECK(x.rank() == 2, "gather_rows: expected rank-2, got " + x.shape_str());
  const int m = x.dim(1);
  Tensor out({static_cast<int>(idx.size()), m});
  for (size_t r = 0; r < idx.size(); ++r) {
    TBSIM_CHECK(idx[r] >= 0 && idx[r] < x.dim(0), "gather_rows: index out of range");
    for (int c = 0; c < m; ++c) out.at(static_cast<int>(r), c) = x.at(idx[r], c);
  }
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id(), idx = std::move(idx), m] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = gbuf(ai);
    for (size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < m; ++c) ga.at(idx[r], c) += go.at(static_cast<int>(r), c);
  });
  return Value(this, id);
}

Value Tape::interleave_rows(const std::vector<Value>& steps) {
  TBSIM_CHECK(!steps.empty(), "interleave_rows: no inputs");
  const int s_count = static_cast<int>(steps.size());
  const Tensor& first = d(steps[0]);
  TBSIM_CHECK(first.rank() == 2, "interleave_rows: expected rank-2 inputs");
  const int n = first.dim(0), m = first.dim(1);
  bool needs = false;
  for (const Value& v : steps) {
    check_same_tape(v);
    TBSIM_CHECK(d(v).same_shape(first), "interleave_rows: shape mismatch " + d(v).shape_str());
    needs = needs || ng(v);
  }
  Tensor out({n * s_count, m});
  for (int s = 0; s < s_count; ++s) {
    const Tensor& t = d(steps[static_cast<size_t>(s)]);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < m; ++c) out.at(r * s_count + s, c) = t.at(r, c);
  }
  std::vector<int> ids;
  for (const Value& v : steps) ids.push_back(v.id());
  int id = add_node(std::move(out), needs);
  set_back(id, [this, id, ids, n, m, s_count] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    for (int s = 0; s < s_count; ++s) {
      Node& pn = nodes_[static_cast<size_t>(ids[static_cast<size_t>(s)])];
      if (!pn.needs_grad) continue;
      Tensor& gp = gbuf(ids[static_cast<size_t>(s)]);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) gp.at(r, c) += go.at(r * s_count + s, c);
    }
  });
  return Value(this, id);
}

// ---------------------------------------------------------------------------
// grouped attention kernels
// ---------------------------------------------------------------------------

Value Tape::grouped_dot(const Value& a, const Value& b, int k) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& x = d(a);
  const Tensor& y = d(b);
  TBSIM_CHECK(x.rank() == 2 && y.rank() == 2 && x.dim(1) == y.dim(1) &&
                  y.dim(0) == x.dim(0) * k,
              "grouped_dot: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  const int n = x.dim(0), dh = x.dim(1);
  Tensor out({n, k});
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      const int p = r * k + j;
      for (int c = 0; c < dh; ++c) acc += x.at(r, c) * y.at(p, c);
      out.at(r, j) = acc;
    }
  }
  int id = add_node(std::move(out), ng(a) || ng(b));
  set_back(id, [this, id, ai = a.id(), bi = b.id(), n, k, dh] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& x = nodes_[static_cast<size_t>(ai)].data;
    const Tensor& y = nodes_[static_cast<size_t>(bi)].data;
    const bool na = nodes_[static_cast<size_t>(ai)].needs_grad;
    const bool nb = nodes_[static_cast<size_t>(bi)].needs_grad;
    Tensor* ga = na ? &gbuf(ai) : nullptr;
    Tensor* gb = nb ? &gbuf(bi) : nullptr;
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < k; ++j) {
        const double g = go.at(r, j);
        if (g == 0.0) continue;
        const int p = r * k + j;
        for (int c = 0; c < dh; ++c) {
          if (na) ga->at(r, c) += g * y.at(p, c);
          if (nb) gb->at(p, c) += g * x.at(r, c);
        }
      }
    }
  });
  return Value(this, id);
}

Value Tape::grouped_weighted_sum(const Value& w, const Value& v) {
  check_same_tape(w);
  check_same_tape(v);
  const Tensor& wv = d(w);
  const Tensor& x = d(v);
  TBSIM_CHECK(wv.rank() == 2 && x.rank() == 2 && x.dim(0) == wv.dim(0) * wv.dim(1),
              "grouped_weighted_sum: shape mismatch " + wv.shape_str() + " vs " + x.shape_str());
  const int n = wv.dim(0), k = wv.dim(1), dh = x.dim(1);
  Tensor out({n, dh});
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < k; ++j) {
      const double c0 = wv.at(r, j);
      if (c0 == 0.0) continue;
      const int p = r * k + j;
      for (int c = 0; c < dh; ++c) out.at(r, c) += c0 * x.at(p, c);
    }
  }
  int id = add_node(std::move(out), ng(w) || ng(v));
  set_back(id, [this, id, wi = w.id(), vi = v.id(), n, k, dh] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& wv = nodes_[static_cast<size_t>(wi)].data;
    const Tensor& x = nodes_[static_cast<size_t>(vi)].data;
    const bool nw = nodes_[static_cast<size_t>(wi)].needs_grad;
    const bool nv = nodes_[static_cast<size_t>(vi)].needs_grad;
    Tensor* gw = nw ? &gbuf(wi) : nullptr;
    Tensor* gv = nv ? &gbuf(vi) : nullptr;
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < k; ++j) {
        const int p = r * k + j;
        double acc = 0.0;
        for (int c = 0; c < dh; ++c) {
          const double g = go.at(r, c);
          acc += g * x.at(p, c);
          if (nv) gv->at(p, c) += wv.at(r, j) * g;
        }
        if (nw) gw->at(r, j) += acc;
      }
    }
  });
  return Value(this, id);
}

// ---------------------------------------------------------------------------
// reductions / losses
// ---------------------------------------------------------------------------

Value Tape::softmax(const Value& a) {
  check_same_tape(a);
  const Tensor& x = d(a);
  TBSIM_CHECK(x.rank() == 2, "softmax: expected rank-2, got " + x.shape_str());
  const int n = x.dim(0), m = x.dim(1);
  Tensor out({n, m});
  for (int r = 0; r < n; ++r) {
    double mx = x.at(r, 0);
    for (int c = 1; c < m; ++c) mx = std::max(mx, x.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < m; ++c) {
      const double e = std::exp(x.at(r, c) - mx);
      out.at(r, c) = e;
      sum += e;
    }
    for (int c = 0; c < m; ++c) out.at(r, c) /= sum;
  }
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id(), n, m] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& y = nodes_[static_cast<size_t>(id)].data;
    Tensor& ga = gbuf(ai);
    for (int r = 0; r < n; ++r) {
      double dot = 0.0;
      for (int c = 0; c < m; ++c) dot += go.at(r, c) * y.at(r, c);
      for (int c = 0; c < m; ++c) ga.at(r, c) += y.at(r, c) * (go.at(r, c) - dot);
    }
  });
  return Value(this, id);
}

Value Tape::masked_softmax(const Value& a, const std::vector<uint8_t>& valid) {
  check_same_tape(a);
  const Tensor& x = d(a);
  TBSIM_CHECK(x.rank() == 2, "masked_softmax: expected rank-2, got " + x.shape_str());
  TBSIM_CHECK(static_cast<int64_t>(valid.size()) == x.numel(), "masked_softmax: mask size mismatch");
  const int n = x.dim(0), m = x.dim(1);
  Tensor out({n, m});
  for (int r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < m; ++c)
      if (valid[static_cast<size_t>(r * m + c)]) mx = std::max(mx, x.at(r, c));
    if (!std::isfinite(mx)) continue;  // all-masked row stays zero
    double sum = 0.0;
    for (int c = 0; c < m; ++c) {
      if (!valid[static_cast<size_t>(r * m + c)]) continue;
      const double e = std::exp(x.at(r, c) - mx);
      out.at(r, c) = e;
      sum += e;
    }
    for (int c = 0; c < m; ++c) out.at(r, c) /= sum;
  }
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id(), valid, n, m] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& y = nodes_[static_cast<size_t>(id)].data;
    Tensor& ga = gbuf(ai);
    for (int r = 0; r < n; ++r) {
      double dot = 0.0;
      for (int c = 0; c < m; ++c) dot += go.at(r, c) * y.at(r, c);
      for (int c = 0; c < m; ++c) {
        if (!valid[static_cast<size_t>(r * m + c)]) continue;
        ga.at(r, c) += y.at(r, c) * (go.at(r, c) - dot);
      }
    }
  });
  return Value(this, id);
}

Value Tape::masked_max_rows(const Value& x, const std::vector<uint8_t>& valid, int m) {
  check_same_tape(x);
  const Tensor& xv = d(x);
  TBSIM_CHECK(xv.rank() == 2 && m > 0 && xv.dim(0) % m == 0,
              "masked_max_rows: bad group size for " + xv.shape_str());
  TBSIM_CHECK(static_cast<int>(valid.size()) == xv.dim(0), "masked_max_rows: mask size mismatch");
  const int n = xv.dim(0) / m, dcol = xv.dim(1);
  Tensor out({n, dcol});
  std::vector<int> argmax(static_cast<size_t>(n) * static_cast<size_t>(dcol), -1);
  for (int g = 0; g < n; ++g) {
    for (int c = 0; c < dcol; ++c) {
      double best = 0.0;
      int best_r = -1;
      for (int j = 0; j < m; ++j) {
        const int r = g * m + j;
        if (!valid[static_cast<size_t>(r)]) continue;
        const double v = xv.at(r, c);
        if (best_r < 0 || v > best) {
          best = v;
          best_r = r;
        }
      }
      if (best_r >= 0) {
        out.at(g, c) = best;
        argmax[static_cast<size_t>(g) * dcol + c] = best_r;
      }
    }
  }
  int id = add_node(std::move(out), ng(x));
  set_back(id, [this, id, xi = x.id(), argmax = std::move(argmax), n, dcol] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    Tensor& gx = gbuf(xi);
    for (int g = 0; g < n; ++g) {
      for (int c = 0; c < dcol; ++c) {
        const int r = argmax[static_cast<size_t>(g) * dcol + c];
        if (r >= 0) gx.at(r, c) += go.at(g, c);
      }
    }
  });
  return Value(this, id);
}

Value Tape::sum_cols(const Value& a) {
  check_same_tape(a);
  const Tensor& x = d(a);
  TBSIM_CHECK(x.rank() == 2, "sum_cols: expected rank-2, got " + x.shape_str());
  const int n = x.dim(0), m = x.dim(1);
  Tensor out({n});
  for (int r = 0; r < n; ++r) {
    double acc = 0.0;
    for (int c = 0; c < m; ++c) acc += x.at(r, c);
    out[r] = acc;
  }
  int id = add_node(std::move(out), ng(a));
  set_back(id, [this, id, ai = a.id(), n, m] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = gbuf(ai);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < m; ++c) ga.at(r, c) += go[r];
  });
  return Value(this, id);
}

Value Tape::sum_all(const Value& a) {
  check_same_tape(a);
  const Tensor& x = d(a);
  double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += x[i];
  int id = add_node(Tensor::scalar(acc), ng(a));
  set_back(id, [this, id, ai = a.id()] {
    const double g = nodes_[static_cast<size_t>(id)].grad[0];
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
  return Value(this, id);
}

Value Tape::masked_mean(const Value& a, const std::vector<uint8_t>& valid) {
  check_same_tape(a);
  const Tensor& x = d(a);
  TBSIM_CHECK(static_cast<int64_t>(valid.size()) == x.numel(), "masked_mean: mask size mismatch");
  int64_t count = 0;
  double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (valid[static_cast<size_t>(i)]) {
      acc += x[i];
      ++count;
    }
  }
  const double denom = count > 0 ? static_cast<double>(count) : 1.0;
  int id = add_node(Tensor::scalar(acc / denom), ng(a));
  set_back(id, [this, id, ai = a.id(), valid, denom] {
    const double g = nodes_[static_cast<size_t>(id)].grad[0] / denom;
    Tensor& ga = gbuf(ai);
    for (int64_t i = 0; i < ga.numel(); ++i) {
      if (valid[static_cast<size_t>(i)]) ga[i] += g;
    }
  });
  return Value(this, id);
}

Value Tape::smoothed_l1(const Value& pred, const Tensor& target,
                        const std::vector<uint8_t>& valid, double delta) {
  check_same_tape(pred);
  const Tensor& x = d(pred);
  TBSIM_CHECK(x.same_shape(target),
              "smoothed_l1: shape mismatch " + x.shape_str() + " vs " + target.shape_str());
  TBSIM_CHECK(static_cast<int64_t>(valid.size()) == x.numel(), "smoothed_l1: mask size mismatch");
  TBSIM_CHECK(delta > 0.0, "smoothed_l1: delta must be positive");
  int64_t count = 0;
  double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (!valid[static_cast<size_t>(i)]) continue;
    const double dv = x[i] - target[i];
    const double av = std::abs(dv);
    acc += av < delta ? 0.5 * dv * dv / delta : av - 0.5 * delta;
    ++count;
  }
  const double denom = count > 0 ? static_cast<double>(count) : 1.0;
  int id = add_node(Tensor::scalar(acc / denom), ng(pred));
  set_back(id, [this, id, pi = pred.id(), target, valid, delta, denom] {
    const double g = nodes_[static_cast<size_t>(id)].grad[0] / denom;
    const Tensor& x = nodes_[static_cast<size_t>(pi)].data;
    Tensor& gp = gbuf(pi);
    for (int64_t i = 0; i < x.numel(); ++i) {
      if (!valid[static_cast<size_t>(i)]) continue;
      const double dv = x[i] - target[i];
      gp[i] += g * (std::abs(dv) < delta ? dv / delta : (dv > 0.0 ? 1.0 : -1.0));
    }
  });
  return Value(this, id);
}

Value Tape::cross_entropy(const Value& logits, const std::vector<int>& labels,
                          const std::vector<uint8_t>& class_valid,
                          const std::vector<uint8_t>& row_valid) {
  check_same_tape(logits);
  const Tensor& x = d(logits);
  TBSIM_CHECK(x.rank() == 2, "cross_entropy: expected rank-2, got " + x.shape_str());
  const int n = x.dim(0), m = x.dim(1);
  TBSIM_CHECK(static_cast<int>(labels.size()) == n && static_cast<int>(row_valid.size()) == n &&
                  static_cast<int>(class_valid.size()) == m,
              "cross_entropy: label/mask sizes mismatch");
  int count = 0;
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    if (!row_valid[static_cast<size_t>(r)]) continue;
    TBSIM_CHECK(labels[static_cast<size_t>(r)] >= 0 && labels[static_cast<size_t>(r)] < m &&
                    class_valid[static_cast<size_t>(labels[static_cast<size_t>(r)])],
                "cross_entropy: label outside valid classes");
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < m; ++c)
      if (class_valid[static_cast<size_t>(c)]) mx = std::max(mx, x.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < m; ++c)
      if (class_valid[static_cast<size_t>(c)]) sum += std::exp(x.at(r, c) - mx);
    acc += mx + std::log(sum) - x.at(r, labels[static_cast<size_t>(r)]);
    ++count;
  }
  const double denom = count > 0 ? static_cast<double>(count) : 1.0;
  int id = add_node(Tensor::scalar(acc / denom), ng(logits));
  set_back(id, [this, id, li = logits.id(), labels, class_valid, row_valid, denom, n, m] {
    const double g = nodes_[static_cast<size_t>(id)].grad[0] / denom;
    const Tensor& x = nodes_[static_cast<size_t>(li)].data;
    Tensor& gl = gbuf(li);
    for (int r = 0; r < n; ++r) {
      if (!row_valid[static_cast<size_t>(r)]) continue;
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < m; ++c)
        if (class_valid[static_cast<size_t>(c)]) mx = std::max(mx, x.at(r, c));
      double sum = 0.0;
      for (int c = 0; c < m; ++c)
        if (class_valid[static_cast<size_t>(c)]) sum += std::exp(x.at(r, c) - mx);
      for (int c = 0; c < m; ++c) {
        if (!class_valid[static_cast<size_t>(c)]) continue;
        const double p = std::exp(x.at(r, c) - mx) / sum;
        const double ind = c == labels[static_cast<size_t>(r)] ? 1.0 : 0.0;
        gl.at(r, c) += g * (p - ind);
      }
    }
  });
  return Value(this, id);
}

// ---------------------------------------------------------------------------
// fused relative pose encoding over (query, neighbor) pairs
// ---------------------------------------------------------------------------

Value Tape::rpe_encode_pairs(const Value& query_xy, const Value& query_theta,
                             const Value& source_xy, const Value& source_theta,
                             int k, const RpeConfig& cfg) {
  check_same_tape(query_xy);
  check_same_tape(query_theta);
  check_same_tape(source_xy);
  check_same_tape(source_theta);
  const Tensor& qxy = d(query_xy);
  const Tensor& qth = d(query_theta);
  const Tensor& sxy = d(source_xy);
  const Tensor& sth = d(source_theta);
  TBSIM_CHECK(cfg.dim > 0 && cfg.dim % 2 == 0, "rpe_encode_pairs: dim must be even");
  const int n = qxy.dim(0);
  const int p = n * k;
  TBSIM_CHECK(qxy.rank() == 2 && qxy.dim(1) == 2 && qth.rank() == 1 && qth.dim(0) == n,
              "rpe_encode_pairs: bad query shapes");
  TBSIM_CHECK(sxy.rank() == 2 && sxy.dim(1) == 2 && sxy.dim(0) == p && sth.rank() == 1 &&
                  sth.dim(0) == p,
              "rpe_encode_pairs: bad source shapes");
  const int dim = cfg.dim;
  const int half = dim / 2;
  std::vector<double> freqs(static_cast<size_t>(half));
  for (int i = 0; i < half; ++i) freqs[static_cast<size_t>(i)] = std::pow(cfg.omega, (2.0 * i) / dim);

  Tensor out({p, 3 * dim});
  // Cache the relative pose per pair for the backward pass.
  Tensor rel({p, 3});
  for (int q = 0; q < n; ++q) {
    const double c = std::cos(qth[q]);
    const double s = std::sin(qth[q]);
    for (int j = 0; j < k; ++j) {
      const int pi = q * k + j;
      const double dx = sxy.at(pi, 0) - qxy.at(q, 0);
      const double dy = sxy.at(pi, 1) - qxy.at(q, 1);
      const double xij = c * dx + s * dy;
      const double yij = -s * dx + c * dy;
      const double tij = ::tbsim::wrap_angle(sth[pi] - qth[q]);
      rel.at(pi, 0) = xij;
      rel.at(pi, 1) = yij;
      rel.at(pi, 2) = tij;
      double* row = out.data() + static_cast<int64_t>(pi) * 3 * dim;
      for (int i = 0; i < half; ++i) {
        const double fx = xij * freqs[static_cast<size_t>(i)];
        row[2 * i] = std::sin(fx);
        row[2 * i + 1] = std::cos(fx);
        const double fy = yij * freqs[static_cast<size_t>(i)];
        row[dim + 2 * i] = std::sin(fy);
        row[dim + 2 * i + 1] = std::cos(fy);
        const double ft = tij * (i + 1);
        row[2 * dim + 2 * i] = std::sin(ft);
        row[2 * dim + 2 * i + 1] = std::cos(ft);
      }
    }
  }
  const bool needs = ng(query_xy) || ng(query_theta) || ng(source_xy) || ng(source_theta);
  int id = add_node(std::move(out), needs);
  set_back(id, [this, id, qxyi = query_xy.id(), qthi = query_theta.id(), sxyi = source_xy.id(),
                sthi = source_theta.id(), rel = std::move(rel), freqs = std::move(freqs), n, k, dim] {
    const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
    const Tensor& qth = nodes_[static_cast<size_t>(qthi)].data;
    const bool nqx = nodes_[static_cast<size_t>(qxyi)].needs_grad;
    const bool nqt = nodes_[static_cast<size_t>(qthi)].needs_grad;
    const bool nsx = nodes_[static_cast<size_t>(sxyi)].needs_grad;
    const bool nst = nodes_[static_cast<size_t>(sthi)].needs_grad;
    Tensor* gqx = nqx ? &gbuf(qxyi) : nullptr;
    Tensor* gqt = nqt ? &gbuf(qthi) : nullptr;
    Tensor* gsx = nsx ? &gbuf(sxyi) : nullptr;
    Tensor* gst = nst ? &gbuf(sthi) : nullptr;
    const int half = dim / 2;
    for (int q = 0; q < n; ++q) {
      const double c = std::cos(qth[q]);
      const double s = std::sin(qth[q]);
      for (int j = 0; j < k; ++j) {
        const int pi = q * k + j;
        const double* grow = go.data() + static_cast<int64_t>(pi) * 3 * dim;
        const double xij = rel.at(pi, 0);
        const double yij = rel.at(pi, 1);
        const double tij = rel.at(pi, 2);
        double ax = 0.0, ay = 0.0, at = 0.0;
        for (int i = 0; i < half; ++i) {
          const double f = freqs[static_cast<size_t>(i)];
          ax += f * (grow[2 * i] * std::cos(xij * f) - grow[2 * i + 1] * std::sin(xij * f));
          ay += f * (grow[dim + 2 * i] * std::cos(yij * f) -
                     grow[dim + 2 * i + 1] * std::sin(yij * f));
          const double mth = i + 1;
          at += mth * (grow[2 * dim + 2 * i] * std::cos(tij * mth) -
                       grow[2 * dim + 2 * i + 1] * std::sin(tij * mth));
        }
        if (nqx) {
          gqx->at(q, 0) += -c * ax + s * ay;
          gqx->at(q, 1) += -s * ax - c * ay;
        }
        if (nqt) (*gqt)[q] += yij * ax - xij * ay - at;
        if (nsx) {
          gsx->at(pi, 0) += c * ax - s * ay;
          gsx->at(pi, 1) += s * ax + c * ay;
        }
        if (nst) (*gst)[pi] += at;
      }
    }
  });
  return Value(this, id);
}

// ---------------------------------------------------------------------------
// driver
// ---------------------------------------------------------------------------

void Tape::backward(const Value& loss, bool free_buffers) {
  check_same_tape(loss);
  TBSIM_CHECK(record_, "backward on a non-recording tape");
  TBSIM_CHECK(d(loss).numel() == 1, "backward: loss must be scalar");
  TBSIM_CHECK(ng(loss), "backward: loss does not depend on any parameter");
  gbuf(loss.id()).fill(1.0);
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.back) n.back();
    if (n.sink) {
      Tensor& pg = n.sink->grad;
      for (int64_t j = 0; j < n.grad.numel(); ++j) pg[j] += n.grad[j];
    }
    if (free_buffers) {
      n.grad.release();
      if (!n.sink) n.data.release();
      n.back = nullptr;
    }
  }
}

void Tape::zero_node_grads() {
  for (Node& n : nodes_) {
    if (!n.grad.empty()) n.grad.fill(0.0);
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace tbsim
