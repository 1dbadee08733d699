#include <cmath>

#include <gtest/gtest.h>

#include "perfmodel/dataset.hpp"
#include "perfmodel/layer_model.hpp"
#include "perfmodel/synth.hpp"
#include "test_support.hpp"

namespace perfmodel {
namespace {

PolynomialModel constant_model(LayerKind kind, Target target, double intercept) {
  PolynomialModel m;
  m.layer_kind = kind;
  m.target = target;
  m.degree = 0;
  m.basis = build_basis(feature_dimension(kind, target), 0);
  const std::size_t cols = m.column_count();
  m.scaler = Scaler{std::vector<double>(cols, 0.0), std::vector<double>(cols, 1.0), std::vector<bool>(cols, false)};
  m.coefficients[0] = intercept;
  return m;
}

std::vector<MeasurementSample> samples_from(const SynthConfig& config, LayerKind kind) {
  std::vector<MeasurementSample> out;
  for (const auto& s : synthesize(config).samples) {
    if (kind_of(s.layer) == kind) out.push_back(s);
  }
  return out;
}

TEST(DesignRow, MonomialsThenSpecialTerms) {
  const FullyConnectedLayer l{2, 3, 5};
  const MonomialBasis basis = build_basis(3, 2);
  std::vector<double> row(basis.size() + 4);
  design_row(basis, l, Target::Runtime, row);
  const double x[3] = {2, 3, 5};
  for (std::size_t j = 0; j < basis.size(); ++j) {
    double expected = 1.0;
    for (int i = 0; i < 3; ++i) expected *= std::pow(x[i], basis.exponents[j][static_cast<std::size_t>(i)]);
    EXPECT_EQ(row[j], expected);
  }
  const double tail[4] = {6, 10, 15, 60};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(row[basis.size() + i], tail[i]) << i;
}

TEST(Predict, InterceptOnlyModel) {
  const PolynomialModel m = constant_model(LayerKind::Conv, Target::Runtime, 4.25);
  testing::Gen gen(1);
  for (int i = 0; i < 20; ++i) {
    const LayerPrediction p = predict_layer(m, gen.conv());
    EXPECT_EQ(p.value, 4.25);
    EXPECT_FALSE(p.clamped);
  }
}

TEST(Predict, NonPositiveValuesAreClampedAndFlagged) {
  const ConvLayer layer{1, 3, 8, 8, 4, 3, 1, 0};
  const LayerPrediction rt = predict_layer(constant_model(LayerKind::Conv, Target::Runtime, -3.0), layer);
  EXPECT_EQ(rt.value, 0.001);
  EXPECT_EQ(rt.raw, -3.0);
  EXPECT_TRUE(rt.clamped);
  const LayerPrediction pw = predict_layer(constant_model(LayerKind::Conv, Target::Power, 0.0), layer);
  EXPECT_EQ(pw.value, 15.0);
  EXPECT_TRUE(pw.clamped);
}

TEST(Predict, KindMismatchIsAnError) {
  const PolynomialModel m = constant_model(LayerKind::Pool, Target::Power, 90.0);
  EXPECT_THROW(predict_layer(m, FullyConnectedLayer{1, 2, 3}), DataError);
}

TEST(Train, TooFewSamples) {
  SynthConfig config;
  config.conv_count = 5;
  config.fc_count = 0;
  config.pool_count = 0;
  const auto samples = samples_from(config, LayerKind::Conv);
  try {
    train_layer_model(samples, Target::Runtime);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient data"), std::string::npos) << e.what();
  }
}

TEST(Train, MixedKindsRejected) {
  SynthConfig config;
  config.conv_count = 15;
  config.fc_count = 15;
  config.pool_count = 0;
  EXPECT_THROW(train_layer_model(synthesize(config).samples, Target::Runtime), DataError);
}

// With noiseless labels, zero penalty and the true degree, a degree-1 model is
// recovered coefficient by coefficient. Synthetic pool inputs are square, so
// the pool in_w and in_h columns (4 and 5) are judged by their sum.
TEST(Train, RecoversNoiselessLinearTruth) {
  const std::map<LayerKind, std::map<std::size_t, double>> truths{
      {LayerKind::Conv, {{0, 2.0}, {1, 0.3}, {5, 0.8}, {8, 0.05}, {14, 2e-8}}},
      {LayerKind::FullyConnected, {{0, 3.0}, {2, 1e-3}, {7, 4e-9}}},
      {LayerKind::Pool, {{0, 2.5}, {4, 0.02}, {9, 1e-6}, {10, 3e-7}}},
  };
  for (const auto& [kind, coefficients] : truths) {
    SynthConfig config;
    config.noise_pct = 0.0;
    config.truth[{kind, Target::Runtime}] = TruthSpec{1, 0, coefficients};
    const auto samples = samples_from(config, kind);
    TrainOptions opts;
    opts.degrees = {1};
    opts.fixed_lambda = 0.0;
    const PolynomialModel m = train_layer_model(samples, Target::Runtime, opts);
    const PolynomialModel truth = make_truth(config).at(kind, Target::Runtime);
    // Columns absent from the truth are judged by their mean contribution
    // relative to the mean response, since their units differ widely.
    std::vector<double> column_mean(m.column_count(), 0.0);
    double response_mean = 0.0;
    std::vector<double> row(m.column_count());
    for (const auto& s : samples) {
      design_row(m.basis, s.layer, Target::Runtime, row);
      for (std::size_t j = 0; j < row.size(); ++j) column_mean[j] += row[j] / static_cast<double>(samples.size());
      response_mean += s.runtime_ms / static_cast<double>(samples.size());
    }
    auto fitted = [&](std::size_t j) { return m.coefficients.contains(j) ? m.coefficients.at(j) : 0.0; };
    for (std::size_t j = 0; j < m.column_count(); ++j) {
      double got = fitted(j);
      if (kind == LayerKind::Pool && j == 4) got += fitted(5) * column_mean[5] / column_mean[4];
      if (kind == LayerKind::Pool && j == 5) continue;
      if (truth.coefficients.contains(j)) {
        const double want = truth.coefficients.at(j);
        EXPECT_LE(std::abs(got - want), 1e-4 * std::abs(want)) << to_string(kind) << " column " << j;
      } else {
        EXPECT_LE(std::abs(got) * column_mean[j], 1e-4 * response_mean) << to_string(kind) << " column " << j;
      }
    }
  }
}

// At higher degree some monomials coincide with special terms (batch*in_size
// is mem_in for fc layers), so only the fitted function is identifiable.
TEST(Train, ReproducesNoiselessQuadraticTruth) {
  for (LayerKind kind : kAllLayerKinds) {
    SynthConfig config;
    config.noise_pct = 0.0;
    const auto samples = samples_from(config, kind);
    const PolynomialModel truth = make_truth(config).at(kind, Target::Power);
    TrainOptions opts;
    opts.degrees = {truth.degree};
    opts.fixed_lambda = 0.0;
    const PolynomialModel m = train_layer_model(samples, Target::Power, opts);
    for (const auto& s : samples) {
      const double want = evaluate_raw(truth, s.layer);
      EXPECT_NEAR(evaluate_raw(m, s.layer), want, 1e-6 * want) << to_string(kind);
    }
  }
}

TEST(Train, FixedLambdaNeedsOneDegree) {
  const auto samples = samples_from(SynthConfig{}, LayerKind::FullyConnected);
  TrainOptions opts;
  opts.degrees = {1, 2};
  opts.fixed_lambda = 0.1;
  EXPECT_THROW(train_layer_model(samples, Target::Runtime, opts), DataError);
}

TEST(Train, SameSeedSameModel) {
  const auto samples = samples_from(SynthConfig{}, LayerKind::FullyConnected);
  TrainOptions opts;
  opts.seed = 7;
  const PolynomialModel a = train_layer_model(samples, Target::Runtime, opts);
  const PolynomialModel b = train_layer_model(samples, Target::Runtime, opts);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.cv_report.fold_seed, 7u);
  EXPECT_EQ(a.cv_report.grid.size(), 3u * 50u);
}

class ModelFileTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const SynthDataset ds = synthesize(SynthConfig{});
    set_ = new ModelSet;
    set_->platform_tag = "test-gpu";
    set_->created_at = "2020-01-01T00:00:00Z";
    TrainOptions opts;
    opts.lambda_count = 10;
    opts.degrees = {1, 2};
    for (LayerKind kind : kAllLayerKinds) {
      const auto samples = samples_of_kind(ds.samples, kind);
      for (Target target : kAllTargets) set_->insert(train_layer_model(samples, target, opts));
    }
  }
  static void TearDownTestSuite() { delete set_; }

  static ModelSet* set_;
};

ModelSet* ModelFileTest::set_ = nullptr;

TEST_F(ModelFileTest, SaveLoadPreservesPredictionsExactly) {
  const auto dir = testing::scratch_dir("model_file");
  const std::string path = (dir / "models.json").string();
  save_model_set(*set_, path);
  const ModelSet back = load_model_set(path);
  EXPECT_TRUE(back.complete());
  EXPECT_EQ(back.platform_tag, "test-gpu");
  testing::Gen gen(99);
  for (int i = 0; i < 100; ++i) {
    const LayerSpec layer = gen.layer();
    for (Target target : kAllTargets) {
      const double a = evaluate_raw(set_->at(kind_of(layer), target), layer);
      const double b = evaluate_raw(back.at(kind_of(layer), target), layer);
      EXPECT_EQ(a, b);
    }
  }
  EXPECT_EQ(dump_model_set(back), dump_model_set(*set_));
  for (const auto& [key, m] : set_->models) EXPECT_TRUE(back.at(key.first, key.second) == m);
}

TEST_F(ModelFileTest, UnknownVersionIsRejected) {
  auto doc = nlohmann::json::parse(dump_model_set(*set_));
  doc["format"] = 99;
  EXPECT_THROW(parse_model_set(doc.dump()), VersionError);
}

TEST_F(ModelFileTest, TruncatedFileNamesThePosition) {
  const std::string text = dump_model_set(*set_);
  const std::string cut = text.substr(0, text.size() / 2);
  try {
    parse_model_set(cut);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
}

TEST_F(ModelFileTest, DamagedFieldNamesItsPath) {
  auto doc = nlohmann::json::parse(dump_model_set(*set_));
  doc["models"][2].erase("basis");
  try {
    parse_model_set(doc.dump());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("models[2]"), std::string::npos) << e.what();
  }
}

TEST_F(ModelFileTest, MissingModelIsReported) {
  ModelSet partial = *set_;
  partial.models.erase({LayerKind::Pool, Target::Power});
  EXPECT_FALSE(partial.complete());
  const ModelSet back = parse_model_set(dump_model_set(partial));
  EXPECT_EQ(back.find(LayerKind::Pool, Target::Power), nullptr);
  EXPECT_THROW(back.at(LayerKind::Pool, Target::Power), DataError);
}

}  // namespace
}  // namespace perfmodel
