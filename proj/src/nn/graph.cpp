#include "hsnorm/nn/graph.hpp"

namespace hsnorm::nn {

Parameter& ParameterStore::create(const std::string& name, Mat init) {
  if (index_.count(name)) fail(ErrorKind::config, "duplicate parameter name " + name);
  index_[name] = params_.size();
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Mat::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterStore::at(const std::string& name) {
  Parameter* p = find(name);
  if (!p) fail(ErrorKind::config, "unknown parameter " + name);
  return *p;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

void ParameterStore::round_to_float() {
  for (auto& p : params_) p->value = p->value.cast<float>().cast<double>();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Var Graph::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::input(Mat value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(Parameter& p) {
  Node n;
  n.ref = &p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::make(Mat value, std::initializer_list<Var> parents, Backward backward) {
  return make(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Graph::make(Mat value, const std::vector<Var>& parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (nodes_[p.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Mat& Graph::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

Mat& Graph::grad_acc(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Mat& v = value(id);
    n.grad = Mat::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

Mat Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Mat::Zero(v.rows(), v.cols());
  return n.grad;
}

void Graph::backward(Var scalar) {
  if (scalar.rows() != 1 || scalar.cols() != 1) fail(ErrorKind::shape, "backward() needs a scalar output");
  backward(scalar, Mat::Ones(1, 1));
}

void Graph::backward(Var out, const Mat& seed) {
  if (!grad_enabled_) fail(ErrorKind::unsupported, "graph was built without gradients");
  if (seed.rows() != out.rows() || seed.cols() != out.cols()) fail(ErrorKind::shape, "seed shape mismatch");
  grad_acc(out.id()) += seed;
  for (int id = out.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

void Graph::accumulate_param_grads(double scale) const {
  for (const Node& n : nodes_) {
    if (n.param && n.grad.size() != 0) n.param->grad += scale * n.grad;
  }
}

}  // namespace hsnorm::nn
