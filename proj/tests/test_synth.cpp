#include <cmath>

#include <gtest/gtest.h>

#include "perfmodel/dataset.hpp"
#include "perfmodel/synth.hpp"
#include "test_support.hpp"

namespace perfmodel {
namespace {

TEST(Synth, DefaultConfigRowCounts) {
  const SynthDataset ds = synthesize(SynthConfig{});
  ASSERT_EQ(ds.samples.size(), 1190u);
  EXPECT_EQ(samples_of_kind(ds.samples, LayerKind::Conv).size(), 858u);
  EXPECT_EQ(samples_of_kind(ds.samples, LayerKind::FullyConnected).size(), 116u);
  EXPECT_EQ(samples_of_kind(ds.samples, LayerKind::Pool).size(), 216u);
  EXPECT_EQ(kind_of(ds.samples.front().layer), LayerKind::Conv);
  EXPECT_EQ(kind_of(ds.samples.back().layer), LayerKind::Pool);
  EXPECT_TRUE(ds.truth.complete());
}

TEST(Synth, SameSeedIsByteIdentical) {
  SynthConfig a;
  a.seed = 12;
  const std::string first = write_measurements_csv(synthesize(a).samples);
  const std::string second = write_measurements_csv(synthesize(a).samples);
  EXPECT_EQ(first, second);
  EXPECT_EQ(dump_model_set(synthesize(a).truth), dump_model_set(synthesize(a).truth));
  SynthConfig b = a;
  b.seed = 13;
  EXPECT_NE(first, write_measurements_csv(synthesize(b).samples));
}

TEST(Synth, HiddenModelsMatchTheirSpecs) {
  const SynthConfig config;
  const ModelSet truth = make_truth(config);
  for (const auto& [key, spec] : config.truth) {
    const PolynomialModel& m = truth.at(key.first, key.second);
    EXPECT_EQ(m.degree, spec.degree);
    EXPECT_GT(m.intercept(), 0.0);
    int top_terms = 0;
    for (const auto& [j, c] : m.coefficients) {
      EXPECT_GT(c, 0.0);
      if (j < m.basis.size() && total_degree(m.basis.exponents[j]) == spec.degree) ++top_terms;
    }
    EXPECT_GE(top_terms, 1) << to_string(key.first) << " " << to_string(key.second);
  }
}

TEST(Synth, HiddenTargetsArePositive) {
  const ModelSet truth = make_truth(SynthConfig{});
  testing::Gen gen(6);
  for (int i = 0; i < 300; ++i) {
    const LayerSpec layer = gen.layer();
    for (Target t : kAllTargets) EXPECT_GT(evaluate_raw(truth.at(kind_of(layer), t), layer), 0.0);
  }
}

TEST(Synth, NoiselessLabelsEqualTheTruth) {
  SynthConfig config;
  config.noise_pct = 0.0;
  const SynthDataset ds = synthesize(config);
  for (const auto& s : ds.samples) {
    EXPECT_EQ(s.runtime_ms, evaluate_raw(ds.truth.at(kind_of(s.layer), Target::Runtime), s.layer));
    EXPECT_EQ(s.power_w, evaluate_raw(ds.truth.at(kind_of(s.layer), Target::Power), s.layer));
  }
}

TEST(Synth, NoiseIsMultiplicativeWithRequestedSpread) {
  const SynthDataset ds = synthesize(SynthConfig{});
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& s : ds.samples) {
    const double ratio = s.runtime_ms / evaluate_raw(ds.truth.at(kind_of(s.layer), Target::Runtime), s.layer);
    sum += ratio;
    sum_sq += ratio * ratio;
  }
  const double n = static_cast<double>(ds.samples.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sum_sq / n - mean * mean);
  EXPECT_NEAR(mean, 1.0, 0.005);
  EXPECT_NEAR(sd, 0.03, 0.004);
}

TEST(Synth, LayersRespectRanges) {
  const SynthConfig config;
  for (const auto& s : synthesize(config).samples) {
    EXPECT_NO_THROW(validate(s.layer));
    if (const auto* c = std::get_if<ConvLayer>(&s.layer)) {
      EXPECT_GE(c->in_h, config.conv.in_side.lo);
      EXPECT_LE(c->in_h, config.conv.in_side.hi);
      EXPECT_LE(c->padding, c->kernel / 2);
    } else if (const auto* f = std::get_if<FullyConnectedLayer>(&s.layer)) {
      EXPECT_LE(f->in_size, config.fc.in_size.hi);
    } else {
      EXPECT_EQ(std::get<PoolLayer>(s.layer).in_h, std::get<PoolLayer>(s.layer).in_w);
    }
  }
}

TEST(Synth, NetworkShape) {
  const NetworkSpec net = synth_network(SynthConfig{}, 10, 0, "net");
  ASSERT_EQ(net.layers.size(), 10u);
  EXPECT_EQ(net.name, "net");
  const std::vector<LayerKind> expected{LayerKind::Conv, LayerKind::Conv, LayerKind::Pool, LayerKind::Conv,
                                        LayerKind::Conv, LayerKind::Pool, LayerKind::Conv, LayerKind::Conv,
                                        LayerKind::FullyConnected, LayerKind::FullyConnected};
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(kind_of(net.layers[i]), expected[i]) << i;
  EXPECT_EQ(network_to_json(net), network_to_json(synth_network(SynthConfig{}, 10, 0, "net")));
}

TEST(SynthConfigFile, ParsesAllSections) {
  const auto doc = nlohmann::json::parse(R"({
    "seed": 5, "noise_pct": 1.5, "platform_tag": "lab",
    "counts": {"conv": 30, "fc": 25, "pool": 21},
    "ranges": {"conv": {"batch": [1, 4], "kernels": [1, 3]}, "pool": {"in_side": [4, 16]}},
    "truth": {"fc_runtime": {"degree": 1, "coefficients": [[0, 2.0], [2, 0.5]]},
              "pool_power": {"degree": 3, "terms": 4}}
  })");
  const SynthConfig c = synth_config_from_json(doc);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.noise_pct, 1.5);
  EXPECT_EQ(c.platform_tag, "lab");
  EXPECT_EQ(c.conv_count, 30u);
  EXPECT_EQ(c.conv.batch.hi, 4);
  EXPECT_EQ(c.conv.kernels, (std::vector<Count>{1, 3}));
  EXPECT_EQ(c.pool.in_side.lo, 4);
  const auto& fc = c.truth.at({LayerKind::FullyConnected, Target::Runtime});
  ASSERT_TRUE(fc.coefficients.has_value());
  EXPECT_EQ(fc.coefficients->at(2), 0.5);
  EXPECT_EQ(c.truth.at({LayerKind::Pool, Target::Power}).degree, 3);

  const SynthDataset ds = synthesize(c);
  EXPECT_EQ(ds.samples.size(), 76u);
  EXPECT_EQ(ds.truth.at(LayerKind::FullyConnected, Target::Runtime).coefficients.size(), 2u);
}

TEST(SynthConfigFile, RejectsBadValues) {
  using nlohmann::json;
  EXPECT_THROW(synth_config_from_json(json::parse(R"([1])")), SchemaError);
  EXPECT_THROW(synth_config_from_json(json::parse(R"({"seed": -1})")), SchemaError);
  EXPECT_THROW(synth_config_from_json(json::parse(R"({"ranges": {"fc": {"batch": [4]}}})")), SchemaError);
  EXPECT_THROW(synth_config_from_json(json::parse(R"({"ranges": {"fc": {"batch": [4, 1]}}})")), DataError);
  EXPECT_THROW(synth_config_from_json(json::parse(R"({"noise_pct": -2})")), DataError);
  EXPECT_THROW(synth_config_from_json(json::parse(R"({"ranges": {"conv": {"kernels": [9]}}})")), DataError);
  SynthConfig c;
  c.truth[{LayerKind::Pool, Target::Runtime}] = TruthSpec{1, 0, std::map<std::size_t, double>{{500, 1.0}}};
  EXPECT_THROW(make_truth(c), DataError);
}

}  // namespace
}  // namespace perfmodel
