#include "gfn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gfn {

AdamState adam_init(const std::vector<Tensor*>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Tensor* p : params) {
    st.m.emplace_back(p->shape);
    st.v.emplace_back(p->shape);
  }
  return st;
}

void adam_step(AdamState& st, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, const AdamConfig& cfg,
               double lr_override) {
  if (params.size() != st.m.size() || params.size() != grads.size())
    throw std::invalid_argument("adam_step: state/params/grads mismatch");
  const double lr = lr_override >= 0.0 ? lr_override : cfg.lr;
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (!p.same_shape(g)) throw std::invalid_argument("adam_step: gradient shape mismatch");
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    for (int64_t j = 0; j < p.size(); ++j) {
      const double gj = g.data[j];
      m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * gj;
      v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m.data[j] / bc1;
      const double vhat = v.data[j] / bc2;
      p.data[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p.data[j]);
    }
  }
}

double schedule_value(const Schedule& s, int64_t step) {
  if (step < 0) throw std::invalid_argument("schedule_value: negative step");
  if (s.warmup > 0 && step < s.warmup)
    return s.start_value * static_cast<double>(step) / static_cast<double>(s.warmup);
  switch (s.kind) {
    case Schedule::Kind::kConstant:
      return s.start_value;
    case Schedule::Kind::kLinear: {
      if (s.horizon <= 0) return s.end_value;
      const double prog = std::min(1.0, static_cast<double>(step - s.warmup) /
                                            static_cast<double>(s.horizon));
      return s.start_value + (s.end_value - s.start_value) * prog;
    }
    case Schedule::Kind::kCosine: {
      if (s.horizon <= 0) return s.end_value;
      const double prog = std::min(1.0, static_cast<double>(step - s.warmup) /
                                            static_cast<double>(s.horizon));
      return s.end_value + 0.5 * (s.start_value - s.end_value) * (1.0 + std::cos(M_PI * prog));
    }
  }
  return s.start_value;
}

void ema_update(MlpParams& shadow, const MlpParams& live, double tau) {
  auto sp = shadow.tensors();
  auto lp = live.tensors();
  if (sp.size() != lp.size()) throw std::invalid_argument("ema_update: shape mismatch");
  auto blend = [tau](Tensor& s, const Tensor& l) {
    if (!s.same_shape(l)) throw std::invalid_argument("ema_update: shape mismatch");
    for (int64_t j = 0; j < s.size(); ++j)
      s.data[j] = (1.0 - tau) * s.data[j] + tau * l.data[j];
  };
  for (size_t i = 0; i < sp.size(); ++i) blend(*sp[i], *lp[i]);
  blend(shadow.log_z, live.log_z);
}

}  // namespace gfn
