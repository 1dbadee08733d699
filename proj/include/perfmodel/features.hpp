#pragma once

// Feature vectors, special (physical) terms and the monomial basis used by the
// layer-level polynomial models.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perfmodel/arch.hpp"
#include "perfmodel/error.hpp"

namespace perfmodel {

enum class Target { Runtime, Power };

inline constexpr Target kAllTargets[] = {Target::Runtime, Target::Power};

inline std::string_view to_string(Target target) {
  return target == Target::Runtime ? "runtime" : "power";
}

inline Target parse_target(std::string_view text) {
  if (text == "runtime") return Target::Runtime;
  if (text == "power") return Target::Power;
  throw SchemaError("unknown target '" + std::string(text) + "'");
}

struct FeatureVector {
  LayerKind layer_kind = LayerKind::Conv;
  Target target = Target::Runtime;
  std::vector<double> values;
  std::vector<std::string> names;
};

struct SpecialTerms {
  std::vector<double> values;
  std::vector<std::string> names;
};

inline std::vector<std::string> runtime_feature_names(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv:
      return {"batch",  "in_channels", "in_h",    "in_w",         "kernel",
              "stride", "padding",     "out_channels", "out_h", "out_w"};
    case LayerKind::FullyConnected:
      return {"batch", "in_size", "out_size"};
    case LayerKind::Pool:
      return {"batch", "channels", "in_h", "in_w", "kernel", "stride", "out_side"};
  }
  return {};
}

inline std::vector<std::string> special_term_names(LayerKind kind) {
  if (kind == LayerKind::Pool) return {"mem_in", "mem_out", "flops"};
  return {"mem_in", "mem_out", "mem_kernel", "flops"};
}

inline std::size_t runtime_feature_dimension(LayerKind kind) {
  return runtime_feature_names(kind).size();
}

inline std::size_t feature_dimension(LayerKind kind, Target target) {
  const std::size_t d = runtime_feature_dimension(kind);
  return target == Target::Runtime ? d : 2 * d;
}

inline std::vector<std::string> feature_names(LayerKind kind, Target target) {
  auto names = runtime_feature_names(kind);
  if (target == Target::Power) {
    const std::size_t d = names.size();
    for (std::size_t i = 0; i < d; ++i) names.push_back("log1p(" + names[i] + ")");
  }
  return names;
}

inline FeatureVector runtime_features(const LayerSpec& layer) {
  const DerivedQuantities q = derive_quantities(layer);
  FeatureVector fv;
  fv.layer_kind = kind_of(layer);
  fv.target = Target::Runtime;
  fv.names = runtime_feature_names(fv.layer_kind);
  auto d = [](Count v) { return static_cast<double>(v); };
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, ConvLayer>) {
          fv.values = {d(l.batch),  d(l.in_channels), d(l.in_h),         d(l.in_w),
                       d(l.kernel), d(l.stride),      d(l.padding),      d(l.out_channels),
                       d(q.out_shape.h), d(q.out_shape.w)};
        } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
          fv.values = {d(l.batch), d(l.in_size), d(l.out_size)};
        } else {
          fv.values = {d(l.batch),  d(l.channels), d(l.in_h),      d(l.in_w),
                       d(l.kernel), d(l.stride),   d(q.out_shape.h)};
        }
      },
      layer);
  return fv;
}

// Runtime features followed by log1p of each of them.
inline FeatureVector power_features(const LayerSpec& layer) {
  FeatureVector fv = runtime_features(layer);
  fv.target = Target::Power;
  const std::size_t d = fv.values.size();
  fv.values.reserve(2 * d);
  for (std::size_t i = 0; i < d; ++i) fv.values.push_back(std::log1p(fv.values[i]));
  fv.names = feature_names(fv.layer_kind, Target::Power);
  return fv;
}

inline FeatureVector features_for(const LayerSpec& layer, Target target) {
  return target == Target::Runtime ? runtime_features(layer) : power_features(layer);
}

inline SpecialTerms special_terms(const LayerSpec& layer) {
  const DerivedQuantities q = derive_quantities(layer);
  const LayerKind kind = kind_of(layer);
  SpecialTerms st;
  st.names = special_term_names(kind);
  auto d = [](Count v) { return static_cast<double>(v); };
  if (kind == LayerKind::Pool) {
    st.values = {d(q.mem_in), d(q.mem_out), d(q.flops)};
  } else {
    st.values = {d(q.mem_in), d(q.mem_out), d(q.mem_kernel), d(q.flops)};
  }
  return st;
}

// Monomial basis ------------------------------------------------------------

using Exponents = std::vector<int>;

// All exponent tuples of total degree <= degree, graded-lexicographic: by total
// degree, then ascending lexicographic on the tuple. Index 0 is the constant.
struct MonomialBasis {
  std::size_t dimension = 0;
  int degree = 0;
  std::vector<Exponents> exponents;

  std::size_t size() const { return exponents.size(); }
  friend bool operator==(const MonomialBasis&, const MonomialBasis&) = default;
};

namespace detail {

inline void enumerate_exact_degree(std::size_t pos, int remaining, Exponents& current,
                                   std::vector<Exponents>& out) {
  if (pos + 1 == current.size()) {
    current[pos] = remaining;
    out.push_back(current);
    return;
  }
  for (int e = 0; e <= remaining; ++e) {
    current[pos] = e;
    enumerate_exact_degree(pos + 1, remaining - e, current, out);
  }
  current[pos] = 0;
}

}  // namespace detail

inline MonomialBasis build_basis(std::size_t dimension, int degree) {
  if (dimension < 1) throw DataError("monomial basis needs dimension >= 1");
  if (degree < 0) throw DataError("monomial basis needs degree >= 0");
  MonomialBasis basis;
  basis.dimension = dimension;
  basis.degree = degree;
  Exponents current(dimension, 0);
  for (int d = 0; d <= degree; ++d) detail::enumerate_exact_degree(0, d, current, basis.exponents);
  return basis;
}

inline int total_degree(const Exponents& e) {
  int s = 0;
  for (int v : e) s += v;
  return s;
}

inline std::string monomial_name(const Exponents& e, std::span<const std::string> feature_names) {
  std::string out;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i] == 0) continue;
    if (!out.empty()) out += "*";
    out += feature_names[i];
    if (e[i] > 1) out += "^" + std::to_string(e[i]);
  }
  return out.empty() ? "1" : out;
}

// Writes the basis expansion of x into out (size basis.size()).
inline void expand_into(const MonomialBasis& basis, std::span<const double> x, std::span<double> out) {
  if (x.size() != basis.dimension) {
    throw DataError("feature vector has " + std::to_string(x.size()) + " entries, basis expects " +
                    std::to_string(basis.dimension));
  }
  if (out.size() != basis.size()) throw DataError("expansion buffer has the wrong size");
  const int k = basis.degree;
  // powers[i*(k+1)+e] = x_i^e
  std::vector<double> powers(basis.dimension * static_cast<std::size_t>(k + 1));
  for (std::size_t i = 0; i < basis.dimension; ++i) {
    double p = 1.0;
    for (int e = 0; e <= k; ++e) {
      powers[i * (k + 1) + e] = p;
      p *= x[i];
    }
  }
  for (std::size_t j = 0; j < basis.size(); ++j) {
    const Exponents& q = basis.exponents[j];
    double v = 1.0;
    for (std::size_t i = 0; i < basis.dimension; ++i) {
      if (q[i] != 0) v *= powers[i * (k + 1) + q[i]];
    }
    out[j] = v;
  }
}

inline std::vector<double> expand(const MonomialBasis& basis, std::span<const double> x) {
  std::vector<double> out(basis.size());
  expand_into(basis, x, out);
  return out;
}

}  // namespace perfmodel
