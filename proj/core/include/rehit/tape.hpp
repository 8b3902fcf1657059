#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rehit/tensor.hpp"

namespace rehit {

// Learnable tensor: value plus a persistent gradient accumulator owned by
// the training loop. Names are unique within a ParamStore.
template <typename S>
struct ParamTensor {
  std::string name;
  Tensor4<S> value;
  Tensor4<S> grad;

  std::int64_t numel() const { return value.numel(); }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), S(0)); }
};

// Owns parameters in registration order; order is the checkpoint and
// initialization order, so it must be deterministic.
template <typename S>
class ParamStore {
 public:
  ParamTensor<S>& create(const std::string& name, Dims dims);
  ParamTensor<S>* find(std::string_view name);
  const ParamTensor<S>* find(std::string_view name) const;

  std::vector<std::unique_ptr<ParamTensor<S>>>& params() { return params_; }
  const std::vector<std::unique_ptr<ParamTensor<S>>>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::int64_t total_elements() const;
  void zero_grads();

 private:
  std::vector<std::unique_ptr<ParamTensor<S>>> params_;
  std::unordered_map<std::string, ParamTensor<S>*> by_name_;
};

// Reverse-mode tape. Ops append value entries and a backward closure;
// backward() replays closures in reverse. One tape is single-writer.
template <typename S>
class Tape {
 public:
  using Id = std::int32_t;
  static constexpr Id kNoId = -1;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  // Leaves.
  Id input(Tensor4<S> v);
  Id param(ParamTensor<S>& p);

  // Access.
  const Tensor4<S>& val(Id id) const { return entries_[size_t(id)].value; }
  Tensor4<S>& grad(Id id);
  bool grad_enabled() const { return grad_enabled_; }

  // Seeds d(loss)=1 and runs all recorded closures in reverse. The loss
  // entry must be a (1,1,1,1) scalar.
  void backward(Id loss);

  // Adds tape gradients of parameter leaves into their ParamTensor.grad.
  void accumulate_param_grads();

  // Instrumentation.
  void note(std::string op) { op_log_.push_back(std::move(op)); }
  const std::vector<std::string>& op_log() const { return op_log_; }
  bool op_in_log(std::string_view name) const;
  void add_flops(std::int64_t f) { flops_ += f; }
  std::int64_t flops() const { return flops_; }
  std::size_t size() const { return entries_.size(); }

  // For op implementations. The closure receives the tape and the id of the
  // op's own output, whose grad it propagates to its inputs.
  using BackwardFn = std::function<void(Tape&, Id)>;
  Id emit(const char* name, Tensor4<S> out, BackwardFn backward);

 private:
  struct Entry {
    Tensor4<S> value;
    Tensor4<S> grad;  // allocated lazily during backward
    ParamTensor<S>* param = nullptr;
  };
  struct Node {
    Id out;
    BackwardFn backward;
  };

  Id push_entry(Tensor4<S> v, ParamTensor<S>* p);

  std::vector<Entry> entries_;
  std::vector<Node> nodes_;
  std::vector<std::string> op_log_;
  std::vector<Id> param_leaves_;
  std::int64_t flops_ = 0;
  bool grad_enabled_ = true;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace rehit
