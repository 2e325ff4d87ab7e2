#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tbsim/geometry.hpp"
#include "tbsim/tensor.hpp"

namespace tbsim {

class Tape;

// Persistent named tensor with gradient storage; owned by a ParamStore and
// referenced by tape leaves across many graphs.
struct Parameter {
  std::string name;
  Tensor data;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
};

// Handle into a Tape node. Cheap to copy; invalid after Tape::clear().
class Value {
 public:
  Value() = default;
  bool defined() const { return tape_ != nullptr; }
  const Tensor& val() const;
  const Tensor& grad() const;
  const std::vector<int>& shape() const { return val().shape(); }
  int dim(int axis) const { return val().dim(axis); }
  int64_t numel() const { return val().numel(); }
  double scalar() const { return val()[0]; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode autodiff over a dynamically recorded tape of dense tensor
// ops. One tape is confined to a single thread between construction and
// backward; independent tapes may run concurrently.
class Tape {
 public:
  explicit Tape(bool record_grad = true) : record_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- leaves -------------------------------------------------------------
  Value constant(Tensor t);
  Value scalar_value(double v) { return constant(Tensor::scalar(v)); }
  Value param(Parameter& p);

  // --- elementwise --------------------------------------------------------
  Value add(const Value& a, const Value& b);
  Value sub(const Value& a, const Value& b);
  Value mul(const Value& a, const Value& b);
  Value scale(const Value& a, double c);
  Value add_scalar(const Value& a, double c);
  Value relu(const Value& a);
  Value sin(const Value& a);
  Value cos(const Value& a);
  Value exp(const Value& a);
  Value log(const Value& a);
  Value clamp(const Value& a, double lo, double hi);
  Value clamp(const Value& a, const Tensor& lo, const Tensor& hi);
  Value wrap_angle(const Value& a);
  Value mask_fill(const Value& a, const std::vector<uint8_t>& keep, double fill);

  // --- linear algebra -----------------------------------------------------
  Value matmul(const Value& a, const Value& b);     // [N,K]x[K,M] -> [N,M]
  Value matmul_nt(const Value& a, const Value& b);  // [N,K]x[M,K] -> [N,M]
  Value add_rowwise(const Value& a, const Value& bias);  // [N,D]+[D]
  Value layer_norm(const Value& x, const Value& gain, const Value& bias);

  // --- shape --------------------------------------------------------------
  Value reshape(const Value& a, std::vector<int> shape);
  Value concat_rows(const std::vector<Value>& parts);
  Value concat_cols(const std::vector<Value>& parts);
  Value slice_cols(const Value& a, int start, int len);
  Value gather_rows(const Value& a, std::vector<int> idx);
  // S inputs of shape [N,D] -> [N*S, D], row n*S+s taken from input s.
  Value interleave_rows(const std::vector<Value>& steps);

  // --- grouped attention kernels -------------------------------------------
  // a: [N,D], b: [N*K,D] -> [N,K]; out[n,k] = dot(a[n], b[n*K+k]).
  Value grouped_dot(const Value& a, const Value& b, int k);
  // w: [N,K], v: [N*K,D] -> [N,D]; out[n] = sum_k w[n,k]*v[n*K+k].
  Value grouped_weighted_sum(const Value& w, const Value& v);

  // --- reductions / losses -------------------------------------------------
  Value softmax(const Value& a);  // rows of [N,D]
  // mask is flat over [N,K]; rows with no valid entry output all zeros.
  Value masked_softmax(const Value& a, const std::vector<uint8_t>& valid);
  // x: [N*M, D] grouped by M consecutive rows -> [N,D]; invalid rows are
  // skipped; groups with no valid row output zeros.
  Value masked_max_rows(const Value& x, const std::vector<uint8_t>& valid, int m);
  Value sum_cols(const Value& a);  // [N,D] -> [N]
  Value sum_all(const Value& a);   // -> scalar
  Value masked_mean(const Value& a, const std::vector<uint8_t>& valid);  // -> scalar
  Value smoothed_l1(const Value& pred, const Tensor& target,
                    const std::vector<uint8_t>& valid, double delta);  // -> scalar
  // logits [N,C]; mean of -log p(label) over rows with row_valid set;
  // classes with class_valid unset are excluded from the normalizer.
  Value cross_entropy(const Value& logits, const std::vector<int>& labels,
                      const std::vector<uint8_t>& class_valid,
                      const std::vector<uint8_t>& row_valid);

  // --- fused relative pose encoding ----------------------------------------
  // Query poses (xy [N,2], theta [N]) against per-pair source poses
  // (xy [N*K,2], theta [N*K]); returns concat(PE(x), PE(y), AE(theta)) per
  // pair, shape [N*K, 3*cfg.dim]. Pair p = n*K + j belongs to query n.
  Value rpe_encode_pairs(const Value& query_xy, const Value& query_theta,
                         const Value& source_xy, const Value& source_theta,
                         int k, const RpeConfig& cfg);

  // --- driver ---------------------------------------------------------------
  // Accumulates gradients of a scalar into every reachable parameter's grad.
  // With free_buffers the per-node activations and grads are released as the
  // sweep passes them; the tape is then only good for clear().
  void backward(const Value& loss, bool free_buffers = true);
  void zero_node_grads();
  void clear();
  size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

  const Tensor& data_of(int id) const { return nodes_[static_cast<size_t>(id)].data; }
  const Tensor& grad_of(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

 private:
  struct Node {
    Tensor data;
    Tensor grad;
    std::function<void()> back;
    Parameter* sink = nullptr;
    bool needs_grad = false;
  };

  int add_node(Tensor data, bool needs_grad);
  void set_back(int id, std::function<void()> fn);
  Tensor& gbuf(int id);
  bool ng(const Value& v) const { return nodes_[static_cast<size_t>(v.id_)].needs_grad; }
  const Tensor& d(const Value& v) const { return nodes_[static_cast<size_t>(v.id_)].data; }
  void check_same_tape(const Value& v) const;

  std::vector<Node> nodes_;
  bool record_;
};

inline const Tensor& Value::val() const { return tape_->data_of(id_); }
inline const Tensor& Value::grad() const { return tape_->grad_of(id_); }

inline Value operator+(const Value& a, const Value& b) { return a.tape()->add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return a.tape()->sub(a, b); }
inline Value operator*(const Value& a, const Value& b) { return a.tape()->mul(a, b); }

}  // namespace tbsim
