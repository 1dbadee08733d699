#pragma once

// Layer and network descriptions plus the shape, FLOP and memory-access
// arithmetic derived from them.

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "perfmodel/error.hpp"

namespace perfmodel {

using Count = std::int64_t;

enum class LayerKind { Conv, FullyConnected, Pool };

inline constexpr LayerKind kAllLayerKinds[] = {LayerKind::Conv, LayerKind::FullyConnected,
                                               LayerKind::Pool};

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Pool: return "pool";
  }
  return "?";
}

inline LayerKind parse_layer_kind(std::string_view text) {
  if (text == "conv") return LayerKind::Conv;
  if (text == "fc") return LayerKind::FullyConnected;
  if (text == "pool") return LayerKind::Pool;
  throw SchemaError("unknown layer type '" + std::string(text) + "'");
}

struct ConvLayer {
  Count batch = 1;
  Count in_channels = 1;
  Count in_h = 1;
  Count in_w = 1;
  Count out_channels = 1;
  Count kernel = 1;
  Count stride = 1;
  Count padding = 0;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct FullyConnectedLayer {
  Count batch = 1;
  Count in_size = 1;
  Count out_size = 1;

  friend bool operator==(const FullyConnectedLayer&, const FullyConnectedLayer&) = default;
};

// Pooling windows are square and the spatial input must be square too, so a
// single output side describes the result.
struct PoolLayer {
  Count batch = 1;
  Count channels = 1;
  Count in_h = 1;
  Count in_w = 1;
  Count kernel = 1;
  Count stride = 1;
  Count padding = 0;

  friend bool operator==(const PoolLayer&, const PoolLayer&) = default;
};

using LayerSpec = std::variant<ConvLayer, FullyConnectedLayer, PoolLayer>;

inline LayerKind kind_of(const LayerSpec& layer) {
  return static_cast<LayerKind>(layer.index());
}

inline Count batch_of(const LayerSpec& layer) {
  return std::visit([](const auto& l) { return l.batch; }, layer);
}

struct NetworkSpec {
  std::string name;
  std::vector<LayerSpec> layers;
};

struct TensorShape {
  Count batch = 1;
  Count channels = 1;
  Count h = 1;
  Count w = 1;

  Count element_count() const { return batch * channels * h * w; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

struct DerivedQuantities {
  TensorShape out_shape;
  Count flops = 0;
  Count mem_in = 0;
  Count mem_out = 0;
  Count mem_kernel = 0;

  friend bool operator==(const DerivedQuantities&, const DerivedQuantities&) = default;
};

namespace detail {

inline Count checked_mul(Count a, Count b) {
  Count out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw ShapeError("layer quantities overflow a 64-bit count");
  }
  return out;
}

template <typename... Ts>
Count product(Count first, Ts... rest) {
  Count acc = first;
  ((acc = checked_mul(acc, rest)), ...);
  return acc;
}

inline void require_positive(Count value, const char* field) {
  if (value < 1) throw ShapeError(std::string(field) + " must be positive");
}

}  // namespace detail

inline Count conv_output_side(Count in_side, Count kernel, Count stride, Count padding) {
  detail::require_positive(in_side, "input side");
  detail::require_positive(kernel, "kernel");
  detail::require_positive(stride, "stride");
  if (padding < 0) throw ShapeError("padding must be non-negative");
  const Count span = in_side + 2 * padding - kernel;
  if (span < 0) {
    throw ShapeError("kernel " + std::to_string(kernel) + " does not fit input side " +
                     std::to_string(in_side) + " with padding " + std::to_string(padding));
  }
  return span / stride + 1;
}

inline void validate(const ConvLayer& l) {
  detail::require_positive(l.batch, "batch");
  detail::require_positive(l.in_channels, "in_channels");
  detail::require_positive(l.in_h, "in_h");
  detail::require_positive(l.in_w, "in_w");
  detail::require_positive(l.out_channels, "out_channels");
  detail::require_positive(l.kernel, "kernel");
  detail::require_positive(l.stride, "stride");
  if (l.padding < 0) throw ShapeError("padding must be non-negative");
  conv_output_side(l.in_h, l.kernel, l.stride, l.padding);
  conv_output_side(l.in_w, l.kernel, l.stride, l.padding);
}

inline void validate(const FullyConnectedLayer& l) {
  detail::require_positive(l.batch, "batch");
  detail::require_positive(l.in_size, "in_size");
  detail::require_positive(l.out_size, "out_size");
}

inline void validate(const PoolLayer& l) {
  detail::require_positive(l.batch, "batch");
  detail::require_positive(l.channels, "channels");
  detail::require_positive(l.in_h, "in_h");
  detail::require_positive(l.in_w, "in_w");
  detail::require_positive(l.kernel, "kernel");
  detail::require_positive(l.stride, "stride");
  if (l.padding < 0) throw ShapeError("padding must be non-negative");
  if (l.in_h != l.in_w) throw ShapeError("pool input must be square (in_h == in_w)");
  conv_output_side(l.in_h, l.kernel, l.stride, l.padding);
}

inline void validate(const LayerSpec& layer) {
  std::visit([](const auto& l) { validate(l); }, layer);
}

inline DerivedQuantities derive_quantities(const ConvLayer& l) {
  validate(l);
  DerivedQuantities q;
  q.out_shape = {l.batch, l.out_channels, conv_output_side(l.in_h, l.kernel, l.stride, l.padding),
                 conv_output_side(l.in_w, l.kernel, l.stride, l.padding)};
  q.mem_in = detail::product(l.batch, l.in_channels, l.in_h, l.in_w);
  q.mem_out = detail::product(q.out_shape.batch, q.out_shape.channels, q.out_shape.h, q.out_shape.w);
  q.mem_kernel = detail::product(l.out_channels, l.in_channels, l.kernel, l.kernel);
  // One multiply-add per kernel tap per output element, counted as 2 FLOPs.
  q.flops = detail::product(2, q.mem_out, l.kernel, l.kernel, l.in_channels);
  return q;
}

inline DerivedQuantities derive_quantities(const FullyConnectedLayer& l) {
  validate(l);
  DerivedQuantities q;
  q.out_shape = {l.batch, l.out_size, 1, 1};
  q.mem_in = detail::product(l.batch, l.in_size);
  q.mem_out = detail::product(l.batch, l.out_size);
  q.mem_kernel = detail::product(l.in_size, l.out_size);
  q.flops = detail::product(2, l.batch, l.in_size, l.out_size);
  return q;
}

inline DerivedQuantities derive_quantities(const PoolLayer& l) {
  validate(l);
  DerivedQuantities q;
  const Count side = conv_output_side(l.in_h, l.kernel, l.stride, l.padding);
  q.out_shape = {l.batch, l.channels, side, side};
  q.mem_in = detail::product(l.batch, l.channels, l.in_h, l.in_w);
  q.mem_out = detail::product(l.batch, l.channels, side, side);
  q.mem_kernel = 0;
  q.flops = detail::product(q.mem_out, l.kernel, l.kernel);
  return q;
}

inline DerivedQuantities derive_quantities(const LayerSpec& layer) {
  return std::visit([](const auto& l) { return derive_quantities(l); }, layer);
}

// JSON network documents ---------------------------------------------------

namespace detail {

inline Count read_count(const nlohmann::json& obj, const char* key, bool required = true,
                        Count fallback = 0) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (!required) return fallback;
    throw SchemaError(std::string("missing field '") + key + "'");
  }
  if (!it->is_number_integer()) {
    throw SchemaError(std::string("field '") + key + "' must be an integer");
  }
  return it->get<Count>();
}

}  // namespace detail

inline LayerSpec layer_from_json(const nlohmann::json& obj) {
  if (!obj.is_object()) throw SchemaError("layer must be an object");
  auto type = obj.find("type");
  if (type == obj.end() || !type->is_string()) throw SchemaError("missing string field 'type'");
  LayerSpec layer;
  switch (parse_layer_kind(type->get<std::string>())) {
    case LayerKind::Conv:
      layer = ConvLayer{detail::read_count(obj, "batch"),  detail::read_count(obj, "in_channels"),
                        detail::read_count(obj, "in_h"),   detail::read_count(obj, "in_w"),
                        detail::read_count(obj, "out_channels"), detail::read_count(obj, "kernel"),
                        detail::read_count(obj, "stride"), detail::read_count(obj, "padding")};
      break;
    case LayerKind::FullyConnected:
      layer = FullyConnectedLayer{detail::read_count(obj, "batch"), detail::read_count(obj, "in_size"),
                                  detail::read_count(obj, "out_size")};
      break;
    case LayerKind::Pool:
      layer = PoolLayer{detail::read_count(obj, "batch"),  detail::read_count(obj, "channels"),
                        detail::read_count(obj, "in_h"),   detail::read_count(obj, "in_w"),
                        detail::read_count(obj, "kernel"), detail::read_count(obj, "stride"),
                        detail::read_count(obj, "padding", false, 0)};
      break;
  }
  validate(layer);
  return layer;
}

inline nlohmann::json layer_to_json(const LayerSpec& layer) {
  return std::visit(
      [](const auto& l) -> nlohmann::json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, ConvLayer>) {
          return {{"type", "conv"},        {"batch", l.batch},   {"in_channels", l.in_channels},
                  {"in_h", l.in_h},        {"in_w", l.in_w},     {"out_channels", l.out_channels},
                  {"kernel", l.kernel},    {"stride", l.stride}, {"padding", l.padding}};
        } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
          return {{"type", "fc"}, {"batch", l.batch}, {"in_size", l.in_size}, {"out_size", l.out_size}};
        } else {
          return {{"type", "pool"},     {"batch", l.batch},   {"channels", l.channels},
                  {"in_h", l.in_h},     {"in_w", l.in_w},     {"kernel", l.kernel},
                  {"stride", l.stride}, {"padding", l.padding}};
        }
      },
      layer);
}

inline NetworkSpec network_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("network document must be a JSON object");
  NetworkSpec net;
  auto name = doc.find("name");
  if (name == doc.end() || !name->is_string()) throw SchemaError("missing string field 'name'");
  net.name = name->get<std::string>();
  auto layers = doc.find("layers");
  if (layers == doc.end() || !layers->is_array()) throw SchemaError("missing array field 'layers'");
  if (layers->empty()) throw SchemaError("network '" + net.name + "' has no layers");
  for (std::size_t i = 0; i < layers->size(); ++i) {
    try {
      net.layers.push_back(layer_from_json((*layers)[i]));
    } catch (const Error& e) {
      const std::string msg = "layer " + std::to_string(i + 1) + ": " + e.what();
      if (dynamic_cast<const ShapeError*>(&e)) throw ShapeError(msg);
      throw SchemaError(msg);
    }
  }
  return net;
}

inline NetworkSpec parse_network(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("network document is not valid JSON: ") + e.what());
  }
  return network_from_json(doc);
}

inline nlohmann::json network_to_json(const NetworkSpec& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers) layers.push_back(layer_to_json(layer));
  return {{"name", net.name}, {"layers", std::move(layers)}};
}

}  // namespace perfmodel
