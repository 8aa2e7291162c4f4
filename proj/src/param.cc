// djtd/param.cc

#include "djtd/param.h"

#include <cmath>
#include <stdexcept>

namespace djtd {

const char* gate_name(Gate g) {
  switch (g) {
    case Gate::kFirstPass: return "first_pass";
    case Gate::kEncoderStack: return "encoder_stack";
    case Gate::kEncoderAttention: return "encoder_attention";
    case Gate::kHypothesisEncoder: return "hypothesis_encoder";
    case Gate::kHypothesisAttention: return "hypothesis_attention";
    case Gate::kFixedContextE: return "fixed_context_e";
    case Gate::kFixedContextB: return "fixed_context_b";
    case Gate::kSecondPassDecoder: return "second_pass_decoder";
  }
  throw std::invalid_argument("unknown gate code " + std::to_string(static_cast<int>(g)));
}

GradMask GradMask::for_kind(ExampleKind kind, const std::set<Gate>& extra_frozen) {
  GradMask m;
  m.example_kind = kind;
  m.frozen_gates = extra_frozen;
  if (kind == ExampleKind::kPaired) {
    m.frozen_gates.insert(Gate::kFixedContextE);
    m.frozen_gates.insert(Gate::kFixedContextB);
  } else {
    m.frozen_gates.insert(Gate::kEncoderStack);
    m.frozen_gates.insert(Gate::kEncoderAttention);
  }
  return m;
}

void GradMask::validate() const {
  if (example_kind == ExampleKind::kPaired) {
    if (!frozen(Gate::kFixedContextE) || !frozen(Gate::kFixedContextB))
      throw std::logic_error("paired mask must freeze both fixed context vectors");
  } else {
    if (!frozen(Gate::kEncoderStack) || !frozen(Gate::kEncoderAttention))
      throw std::logic_error("unpaired mask must freeze encoder stack and encoder attention");
  }
}

void Adam::ensure_slots(const std::vector<ParamGroup>& groups) {
  if (slots_.empty()) {
    slots_.resize(groups.size());
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      slots_[gi].resize(groups[gi].params.size());
      for (size_t ti = 0; ti < groups[gi].params.size(); ++ti) {
        const size_t n = static_cast<size_t>(groups[gi].params[ti].size());
        slots_[gi][ti].m.assign(n, 0.0);
        slots_[gi][ti].v.assign(n, 0.0);
      }
    }
    return;
  }
  if (slots_.size() != groups.size())
    throw std::invalid_argument("optimizer state holds " + std::to_string(slots_.size()) +
                                " groups, model has " + std::to_string(groups.size()));
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    if (slots_[gi].size() != groups[gi].params.size())
      throw std::invalid_argument("optimizer state mismatch in group '" + groups[gi].name + "'");
    for (size_t ti = 0; ti < groups[gi].params.size(); ++ti)
      if (slots_[gi][ti].m.size() != static_cast<size_t>(groups[gi].params[ti].size()))
        throw std::invalid_argument("optimizer state tensor size mismatch in group '" +
                                    groups[gi].name + "'");
  }
}

void Adam::apply_update(std::vector<ParamGroup>& groups, const GradMask& mask) {
  mask.validate();
  ensure_slots(groups);
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    ParamGroup& group = groups[gi];
    if (mask.frozen(group.gate)) continue;  // moments untouched too
    for (size_t ti = 0; ti < group.params.size(); ++ti) {
      Tensor& t = group.params[ti];
      Slot& slot = slots_[gi][ti];
      auto vals = t.raw_values();
      const bool has_grad = t.has_grad();
      auto g = t.grad();
      for (size_t i = 0; i < vals.size(); ++i) {
        const double gi_ = has_grad ? g[i] : 0.0;
        slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * gi_;
        slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * gi_ * gi_;
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        vals[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }
}

double clip_grad_norm(std::vector<ParamGroup>& groups, double max_norm) {
  double sq = 0.0;
  for (auto& group : groups)
    for (auto& t : group.params) {
      if (!t.has_grad()) continue;
      for (double g : t.grad()) sq += g * g;
    }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& group : groups)
      for (auto& t : group.params) {
        if (!t.has_grad()) continue;
        for (double& g : t.raw_grad()) g *= s;
      }
  }
  return norm;
}

void zero_grads(std::vector<ParamGroup>& groups) {
  for (auto& group : groups)
    for (auto& t : group.params) t.zero_grad();
}

Tensor init_param(Rng& rng, std::vector<int> shape, double range) {
  Tensor t(std::move(shape));
  for (double& v : t.raw_values()) v = rng.uniform(-range, range);
  t.set_requires_grad(true);
  return t;
}

int64_t param_count(const std::vector<ParamGroup>& groups) {
  int64_t n = 0;
  for (const auto& group : groups)
    for (const auto& t : group.params) n += t.size();
  return n;
}

}  // namespace djtd
