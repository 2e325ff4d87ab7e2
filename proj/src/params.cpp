#include "tbsim/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tbsim/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace tbsim {

Parameter* ParamStore::create(const std::string& name, std::vector<int> shape) {
  TBSIM_CHECK(index_.find(name) == index_.end(), "duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.data = Tensor::zeros(shape);
  p.grad = Tensor::zeros(shape);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return &params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

int64_t ParamStore::total_numel() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.data.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

double ParamStore::grad_norm() const {
  double acc = 0.0;
  for (const auto& p : params_)
    for (int64_t i = 0; i < p.grad.numel(); ++i) acc += p.grad[i] * p.grad[i];
  return std::sqrt(acc);
}

void init_xavier(Parameter& p, Rng& rng) {
  const auto& shape = p.data.shape();
  const double fan_in = shape.size() >= 2 ? shape[0] : p.data.numel();
  const double fan_out = shape.size() >= 2 ? shape[1] : p.data.numel();
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (int64_t i = 0; i < p.data.numel(); ++i) p.data[i] = rng.uniform(-bound, bound);
}

void init_uniform(Parameter& p, Rng& rng, double lo, double hi) {
  for (int64_t i = 0; i < p.data.numel(); ++i) p.data[i] = rng.uniform(lo, hi);
}

void init_constant(Parameter& p, double v) { p.data.fill(v); }

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {}

double Adam::step() {
  const double norm = store_.grad_norm();
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Parameter* p : store_.all()) {
    if (p->adam_m.empty()) {
      p->adam_m = Tensor::zeros(p->data.shape());
      p->adam_v = Tensor::zeros(p->data.shape());
    }
    for (int64_t i = 0; i < p->data.numel(); ++i) {
      const double g = p->grad[i] * scale;
      p->adam_m[i] = cfg_.beta1 * p->adam_m[i] + (1.0 - cfg_.beta1) * g;
      p->adam_v[i] = cfg_.beta2 * p->adam_v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = p->adam_m[i] / bc1;
      const double vhat = p->adam_v[i] / bc2;
      p->data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  store_.zero_grad();
  return norm;
}

namespace {

constexpr char kMagic[5] = {'T', 'B', 'V', '1', '5'};
constexpr uint32_t kFormatVersion = 1;

template <class T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("truncated checkpoint file: " + path);
  return v;
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kFormatVersion);
  for (const auto& [name, t] : tensors) {
    write_pod(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<uint32_t>(t->rank()));
    for (int d : t->shape()) write_pod(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t->data()),
             static_cast<std::streamsize>(t->numel() * sizeof(double)));
  }
  if (!os) throw DataError("write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[5];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, 5) != 0)
    throw DataError("bad checkpoint magic in " + path);
  const auto version = read_pod<uint32_t>(is, path);
  if (version != kFormatVersion)
    throw DataError("unsupported checkpoint format version in " + path);
  std::vector<std::pair<std::string, Tensor>> out;
  while (true) {
    uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (is.eof()) break;
    if (!is) throw DataError("truncated checkpoint file: " + path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = read_pod<uint32_t>(is, path);
    std::vector<int> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_pod<uint64_t>(is, path));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!is) throw DataError("truncated tensor payload for '" + name + "' in " + path);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void save_checkpoint(const std::string& path, const ParamStore& store, const Adam* opt) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const Parameter* p : store.all()) tensors.emplace_back(p->name, &p->data);
  Tensor step_t;
  if (opt) {
    step_t = Tensor::scalar(static_cast<double>(opt->step_count()));
    tensors.emplace_back("opt/step", &step_t);
    for (const Parameter* p : store.all()) {
      if (!p->adam_m.empty()) {
        tensors.emplace_back("opt/m/" + p->name, &p->adam_m);
        tensors.emplace_back("opt/v/" + p->name, &p->adam_v);
      }
    }
  }
  save_tensors(path, tensors);
}

int64_t load_checkpoint(const std::string& path, ParamStore& store, bool restore_opt) {
  auto tensors = load_tensors(path);
  std::map<std::string, Tensor*> by_name;
  for (auto& [name, t] : tensors) by_name[name] = &t;

  std::string missing;
  for (Parameter* p : store.all()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      missing += (missing.empty() ? "" : ", ") + p->name;
      continue;
    }
    if (!(it->second->shape() == p->data.shape()))
      throw DataError("checkpoint tensor '" + p->name + "' has shape " + it->second->shape_str() +
                      ", expected " + p->data.shape_str());
  }
  if (!missing.empty()) throw DataError("checkpoint " + path + " is missing tensors: " + missing);

  for (Parameter* p : store.all()) {
    p->data = std::move(*by_name[p->name]);
    if (restore_opt) {
      auto m = by_name.find("opt/m/" + p->name);
      auto v = by_name.find("opt/v/" + p->name);
      if (m != by_name.end() && v != by_name.end()) {
        p->adam_m = std::move(*m->second);
        p->adam_v = std::move(*v->second);
      }
    }
  }
  auto st = by_name.find("opt/step");
  return st != by_name.end() ? static_cast<int64_t>((*st->second)[0]) : 0;
}

}  // namespace tbsim
