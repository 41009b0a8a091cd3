#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mmgcn/tape.hpp"

namespace mmgcn {

// Named trainable matrices, iterated in registration order so that
// initialization draws and serialization are reproducible.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Mat value;
    bool trainable = true;
  };

  Mat& add(const std::string& name, Mat init, bool trainable = true);
  bool has(const std::string& name) const;
  const Mat& get(const std::string& name) const;
  Mat& get(const std::string& name);
  bool trainable(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;

  const Entry& entry(const std::string& name) const;
};

using GradMap = std::unordered_map<std::string, Mat>;

// Adam moments, keyed by parameter name, with one shared step counter.
struct AdamState {
  Scalar lr = 3e-4;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  long step_count = 0;

  struct Moments {
    Mat m;
    Mat v;
  };
  std::unordered_map<std::string, Moments> moments;
};

// One Adam update with bias correction over every gradient in grads.
// Parameters without a gradient entry are left untouched.
void adam_step(ParameterStore& params, const GradMap& grads, AdamState& state);

// Binds store parameters onto a tape as needs-grad leaves (constants when the
// entry is frozen). Each parameter is bound at most once per tape.
class ParamBind {
 public:
  ParamBind(Tape& tape, const ParameterStore& store);

  Var operator()(const std::string& name);

  // Gradients for every *trainable* entry of the store; zeros for parameters
  // the loss never reached (including ones never bound).
  GradMap grads() const;

 private:
  Tape* tape_;
  const ParameterStore* store_;
  std::unordered_map<std::string, Var> bound_;
};

}  // namespace mmgcn
