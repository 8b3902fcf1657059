#include "rehit/tape.hpp"

#include <algorithm>

namespace rehit {

template <typename S>
ParamTensor<S>& ParamStore<S>::create(const std::string& name, Dims dims) {
  if (by_name_.count(name)) {
    throw Error("ParamStore: duplicate parameter name '" + name + "'");
  }
  auto p = std::make_unique<ParamTensor<S>>();
  p->name = name;
  p->value = Tensor4<S>::zeros(dims);
  p->grad = Tensor4<S>::zeros(dims);
  ParamTensor<S>* raw = p.get();
  params_.push_back(std::move(p));
  by_name_.emplace(name, raw);
  return *raw;
}

template <typename S>
ParamTensor<S>* ParamStore<S>::find(std::string_view name) {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : it->second;
}

template <typename S>
const ParamTensor<S>* ParamStore<S>::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : it->second;
}

template <typename S>
std::int64_t ParamStore<S>::total_elements() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += p->numel();
  return total;
}

template <typename S>
void ParamStore<S>::zero_grads() {
  for (auto& p : params_) p->zero_grad();
}

template <typename S>
typename Tape<S>::Id Tape<S>::push_entry(Tensor4<S> v, ParamTensor<S>* p) {
  entries_.push_back(Entry{std::move(v), Tensor4<S>(), p});
  return Id(entries_.size() - 1);
}

template <typename S>
typename Tape<S>::Id Tape<S>::input(Tensor4<S> v) {
  return push_entry(std::move(v), nullptr);
}

template <typename S>
typename Tape<S>::Id Tape<S>::param(ParamTensor<S>& p) {
  Id id = push_entry(p.value, &p);
  param_leaves_.push_back(id);
  return id;
}

template <typename S>
Tensor4<S>& Tape<S>::grad(Id id) {
  Entry& e = entries_[size_t(id)];
  if (e.grad.numel() == 0) e.grad = Tensor4<S>::zeros(e.value.dims);
  return e.grad;
}

template <typename S>
typename Tape<S>::Id Tape<S>::emit(const char* name, Tensor4<S> out, BackwardFn backward) {
  op_log_.emplace_back(name);
  Id id = push_entry(std::move(out), nullptr);
  if (grad_enabled_) nodes_.push_back(Node{id, std::move(backward)});
  return id;
}

template <typename S>
void Tape<S>::backward(Id loss) {
  if (!grad_enabled_) throw Error("Tape::backward called with gradients disabled");
  const Tensor4<S>& l = val(loss);
  if (l.numel() != 1) {
    throw ShapeError("Tape::backward: loss must be scalar, got " + to_string(l.dims));
  }
  grad(loss).data[0] = S(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward(*this, it->out);
  }
}

template <typename S>
void Tape<S>::accumulate_param_grads() {
  for (Id id : param_leaves_) {
    Entry& e = entries_[size_t(id)];
    if (e.grad.numel() == 0) continue;
    S* dst = e.param->grad.ptr();
    const S* src = e.grad.ptr();
    const std::int64_t n = e.param->grad.numel();
    for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
  }
}

template <typename S>
bool Tape<S>::op_in_log(std::string_view name) const {
  return std::any_of(op_log_.begin(), op_log_.end(),
                     [&](const std::string& s) { return s == name; });
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace rehit
