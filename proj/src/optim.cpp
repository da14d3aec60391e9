#include "dpn/optim.hpp"

#include <cmath>
#include <string>

namespace dpn {

template <typename T>
void adam_step(std::span<BasicParam<T>* const> params, const AdamConfig& cfg, std::uint64_t t) {
  if (t < 1) throw std::invalid_argument("adam_step: step counter must start at 1");
  for (const BasicParam<T>* p : params) {
    if (p->grad.shape() != p->value.shape()) throw std::logic_error("adam_step: " + p->name + " has no gradient");
    for (T g : p->grad.data()) {
      if (!std::isfinite(g)) throw NonFiniteGradient("adam_step: non-finite gradient in " + p->name);
    }
  }
  const double td = static_cast<double>(t);
  const double correction1 = 1.0 - std::pow(cfg.beta1, td);
  const double correction2 = 1.0 - std::pow(cfg.beta2, td);
  for (BasicParam<T>* p : params) {
    if (p->m.shape() != p->value.shape()) p->m = BasicTensor<T>(p->value.shape());
    if (p->v.shape() != p->value.shape()) p->v = BasicTensor<T>(p->value.shape());
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = static_cast<double>(p->grad[i]) + cfg.weight_decay * static_cast<double>(p->value[i]);
      const double m = cfg.beta1 * static_cast<double>(p->m[i]) + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * static_cast<double>(p->v[i]) + (1.0 - cfg.beta2) * g * g;
      p->m[i] = static_cast<T>(m);
      p->v[i] = static_cast<T>(v);
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

template void adam_step<float>(std::span<BasicParam<float>* const>, const AdamConfig&, std::uint64_t);
template void adam_step<double>(std::span<BasicParam<double>* const>, const AdamConfig&, std::uint64_t);

}  // namespace dpn
