#include "mmgcn/optim.hpp"

#include <cmath>

namespace mmgcn {

const ParameterStore::Entry& ParameterStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParameterStore: unknown parameter \"" + name + "\"");
  return entries_[it->second];
}

Mat& ParameterStore::add(const std::string& name, Mat init, bool trainable) {
  if (index_.count(name)) throw Error("ParameterStore: duplicate parameter \"" + name + "\"");
  require_finite(init, "parameter " + name);
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, std::move(init), trainable});
  return entries_.back().value;
}

bool ParameterStore::has(const std::string& name) const { return index_.count(name) > 0; }

const Mat& ParameterStore::get(const std::string& name) const { return entry(name).value; }

Mat& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParameterStore: unknown parameter \"" + name + "\"");
  return entries_[it->second].value;
}

bool ParameterStore::trainable(const std::string& name) const { return entry(name).trainable; }

void adam_step(ParameterStore& params, const GradMap& grads, AdamState& state) {
  state.step_count += 1;
  const Scalar bc1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.step_count));
  const Scalar bc2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.step_count));
  for (auto& e : params.entries()) {
    auto it = grads.find(e.name);
    if (it == grads.end()) continue;
    if (!e.trainable) throw Error("adam_step: gradient supplied for frozen parameter " + e.name);
    const Mat& g = it->second;
    if (g.rows() != e.value.rows() || g.cols() != e.value.cols()) {
      throw ShapeError("adam_step: gradient shape " + shape_str(g) + " does not match parameter " +
                       e.name + " " + shape_str(e.value));
    }
    require_finite(g, "gradient of " + e.name);
    auto& mom = state.moments[e.name];
    if (mom.m.size() == 0) {
      mom.m = Mat::Zero(g.rows(), g.cols());
      mom.v = Mat::Zero(g.rows(), g.cols());
    }
    mom.m = state.beta1 * mom.m + (1.0 - state.beta1) * g;
    mom.v = state.beta2 * mom.v + (1.0 - state.beta2) * g.cwiseProduct(g);
    const Mat m_hat = mom.m / bc1;
    const Mat v_hat = mom.v / bc2;
    e.value.array() -= state.lr * m_hat.array() / (v_hat.array().sqrt() + state.eps);
  }
}

ParamBind::ParamBind(Tape& tape, const ParameterStore& store)
    : tape_(&tape), store_(&store) {}

Var ParamBind::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Mat& value = store_->get(name);
  Var v = tape_->leaf(value, store_->trainable(name));
  bound_[name] = v;
  return v;
}

GradMap ParamBind::grads() const {
  GradMap out;
  for (const auto& e : store_->entries()) {
    if (!e.trainable) continue;
    auto it = bound_.find(e.name);
    if (it != bound_.end()) {
      out[e.name] = tape_->grad_or_zero(it->second);
    } else {
      out[e.name] = Mat::Zero(e.value.rows(), e.value.cols());
    }
  }
  return out;
}

}  // namespace mmgcn
