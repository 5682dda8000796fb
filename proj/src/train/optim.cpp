#include "vldac/train/optim.hpp"

#include <cmath>

#include "vldac/utils/serialize.hpp"

namespace vldac::train {

double Adam::step(NamedParams& params, double lr, double grad_scale, double max_grad_norm) {
  // Pass 1: global norm over scaled gradients.
  double sq = 0.0;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      const double sg = g * grad_scale;
      if (!std::isfinite(sg)) throw NumericsError("adam: non-finite gradient in " + name);
      sq += sg * sg;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip_coef = (max_grad_norm > 0 && norm > max_grad_norm) ? max_grad_norm / norm : 1.0;

  for (auto& [name, p] : params) {
    auto& slot = slots_[name];
    const size_t n = static_cast<size_t>(p.numel());
    if (slot.m.size() != n) {
      slot.m.assign(n, 0.0);
      slot.v.assign(n, 0.0);
      slot.t = 0;
    }
    slot.t += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.t));
    auto vals = p.raw_data();
    const bool has = p.has_grad();
    for (size_t i = 0; i < n; ++i) {
      const double g = has ? p.grad()[i] * grad_scale * clip_coef : 0.0;
      slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
      slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      vals[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  return norm;
}

void Adam::zero_grad(NamedParams& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

void Adam::save(std::ostream& os) const {
  ser::write_f64(os, cfg_.beta1);
  ser::write_f64(os, cfg_.beta2);
  ser::write_f64(os, cfg_.eps);
  ser::write_u64(os, slots_.size());
  for (const auto& [name, slot] : slots_) {
    ser::write_string(os, name);
    ser::write_i64(os, slot.t);
    ser::write_vec_f64(os, slot.m);
    ser::write_vec_f64(os, slot.v);
  }
}

void Adam::load(std::istream& is) {
  cfg_.beta1 = ser::read_f64(is);
  cfg_.beta2 = ser::read_f64(is);
  cfg_.eps = ser::read_f64(is);
  slots_.clear();
  const auto n = ser::read_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = ser::read_string(is);
    Slot slot;
    slot.t = ser::read_i64(is);
    slot.m = ser::read_vec_f64(is);
    slot.v = ser::read_vec_f64(is);
    slots_.emplace(std::move(name), std::move(slot));
  }
}

bool Adam::operator==(const Adam& other) const {
  if (slots_.size() != other.slots_.size()) return false;
  for (const auto& [name, slot] : slots_) {
    auto it = other.slots_.find(name);
    if (it == other.slots_.end()) return false;
    if (slot.t != it->second.t || slot.m != it->second.m || slot.v != it->second.v) return false;
  }
  return true;
}

void polyak_update(NamedParams& target, const NamedParams& source, double tau) {
  if (target.size() != source.size()) throw ShapeError("polyak_update: param group size mismatch");
  for (size_t i = 0; i < target.size(); ++i) {
    if (target[i].first != source[i].first)
      throw ShapeError("polyak_update: name mismatch " + target[i].first + " vs " + source[i].first);
    auto dst = target[i].second.raw_data();
    auto src = source[i].second.data();
    if (dst.size() != src.size()) throw ShapeError("polyak_update: size mismatch in " + target[i].first);
    for (size_t j = 0; j < dst.size(); ++j) dst[j] = tau * src[j] + (1.0 - tau) * dst[j];
  }
}

}  // namespace vldac::train
