#pragma once

#include "hsnorm/common.hpp"

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace hsnorm::nn {

using Mat = MatX;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
};

// Owns named parameters in creation order; names are the checkpoint keys.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, Mat init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  // Rounds every value to single precision so checkpoints store them exactly.
  void round_to_float();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape over dense matrices. A graph is built by one thread for one
// forward pass; parameters are bound by reference and their gradients are
// collected into Parameter::grad only by accumulate_param_grads().
class Graph {
 public:
  using Backward = std::function<void(Graph&, int self)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  Var input(Mat value);  // differentiable leaf
  Var param(Parameter& p);

  // Used by op implementations.
  Var make(Mat value, std::initializer_list<Var> parents, Backward backward);
  Var make(Mat value, const std::vector<Var>& parents, Backward backward);
  const Mat& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  // Gradient buffer of `id`, allocated as zeros on first use.
  Mat& grad_acc(int id);
  bool grad_enabled() const { return grad_enabled_; }

  Mat grad(Var v) const;
  void backward(Var scalar);
  void backward(Var out, const Mat& seed);
  // Adds `scale` times each bound parameter's gradient into Parameter::grad.
  void accumulate_param_grads(double scale = 1.0) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Mat grad;
    Backward backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;  // stable references across growth
  bool grad_enabled_;
};

inline const Mat& Var::value() const { return graph_->value(id_); }

}  // namespace hsnorm::nn
