#include "rdist/nn/adam.hpp"

#include <cmath>

namespace rdist::nn {

void Adam::step(const std::vector<Param*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float step = static_cast<float>(lr_ / bc1);
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(eps_);
  for (Param* p : params) {
    auto& m = m_[p->name];
    auto& v = v_[p->name];
    if (m.size() != p->size()) {
      m.assign(p->size(), 0.0f);
      v.assign(p->size(), 0.0f);
    }
    for (std::size_t i = 0; i < p->size(); ++i) {
      const float g = p->grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      p->value[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

void Adam::save(Archive& ar) const {
  ar.header["adam"] = {{"t", t_}, {"lr", lr_}, {"beta1", beta1_}, {"beta2", beta2_}, {"eps", eps_}};
  for (const auto& [name, m] : m_) ar.put("adam.m." + name, {static_cast<int>(m.size())}, m);
  for (const auto& [name, v] : v_) ar.put("adam.v." + name, {static_cast<int>(v.size())}, v);
}

void Adam::load(const Archive& ar) {
  if (!ar.header.contains("adam")) return;
  t_ = ar.header["adam"].at("t").get<long long>();
  m_.clear();
  v_.clear();
  for (const auto& a : ar.arrays) {
    if (a.name.rfind("adam.m.", 0) == 0) m_[a.name.substr(7)] = a.values;
    if (a.name.rfind("adam.v.", 0) == 0) v_[a.name.substr(7)] = a.values;
  }
}

}  // namespace rdist::nn
