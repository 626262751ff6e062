#include <gtest/gtest.h>

#include "support.hpp"

using namespace printmlp;
using namespace testsupport;

namespace {

MLPModel tiny_model() {
  MLPModel m = init_model({2, 2, 2}, 0);
  m.layers[0].weights.data() = {0.5, -0.25, 0.75, 0.125};
  m.layers[0].biases = {0.25, -0.5};
  m.layers[1].weights.data() = {1.0, -0.5, -0.75, 0.5};
  m.layers[1].biases = {0.0, 0.25};
  return m;
}

Dataset unit_rows(std::size_t n, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.n_classes = 2;
  d.features = Matrix<double>(0, cols);
  std::vector<double> row(cols);
  for (std::size_t r = 0; r < n; ++r) {
    for (auto& v : row) v = rng.uniform();
    d.features.append_row(row);
    d.labels.push_back(static_cast<int>(r % 2));
  }
  return d;
}

}  // namespace

TEST(FixedPoint, FormatRanges) {
  auto q = FixedPointFormat::signed_q(4, 6);
  EXPECT_EQ(q.total_bits, 11);
  EXPECT_EQ(q.frac_bits(), 6);
  EXPECT_EQ(q.min_value(), -16.0);
  EXPECT_EQ(q.max_value(), 16.0 - 1.0 / 64);
  EXPECT_EQ(q.name(), "Q4.6");
  auto u = FixedPointFormat::unsigned_q(1, 3);
  EXPECT_EQ(u.total_bits, 4);
  EXPECT_EQ(u.min_value(), 0.0);
  EXPECT_EQ(u.max_value(), 1.875);
  EXPECT_EQ(u.step(), 0.125);
  EXPECT_EQ(u.name(), "UQ1.3");
}

TEST(FixedPoint, QuantizeZero) {
  Rng rng(1);
  for (auto f : {FixedPointFormat::signed_q(1, 2), FixedPointFormat::unsigned_q(0, 4), FixedPointFormat::signed_q(3, 4)})
    for (auto mode : {Rounding::stochastic, Rounding::nearest, Rounding::truncate})
      EXPECT_EQ(quantize_value(0.0, f, mode, rng).code, 0);
}

TEST(FixedPoint, SaturatesToMaxCode) {
  auto u = FixedPointFormat::unsigned_q(1, 3);
  auto r = quantize_value(5.0, u, Rounding::nearest);
  EXPECT_EQ(r.code, 15);
  EXPECT_EQ(r.value, 1.875);
  EXPECT_EQ(quantize_value(-3.0, u, Rounding::nearest).code, 0);
  EXPECT_EQ(quantize_value(-9.0, FixedPointFormat::signed_q(1, 2), Rounding::nearest).code, -8);
}

TEST(FixedPoint, Truncate) {
  EXPECT_EQ(quantize_value(0.33, FixedPointFormat::unsigned_q(1, 3), Rounding::truncate).value, 0.25);
}

TEST(FixedPoint, StochasticRoundingIsUnbiased) {
  Rng rng(2024);
  const auto u = FixedPointFormat::unsigned_q(1, 3);
  const int n = 10000;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const double v = quantize_value(0.3, u, Rounding::stochastic, rng).value;
    ASSERT_TRUE(v == 0.25 || v == 0.375);
    sum += v;
  }
  // Bernoulli(0.4) scaled by the 0.125 step: sigma of the mean is 0.125*sqrt(0.24/n)
  EXPECT_NEAR(sum / n, 0.3, 0.01);
  EXPECT_NEAR(sum / n, 0.3, 3 * 0.125 * std::sqrt(0.24 / n));
}

TEST(FixedPoint, StochasticNeedsRng) {
  EXPECT_THROW(quantize_value(0.3, FixedPointFormat::unsigned_q(1, 3), Rounding::stochastic), std::invalid_argument);
}

TEST(Qrelu, NegativeIsZero) {
  const auto in = FixedPointFormat::signed_q(4, 6);
  const auto out = FixedPointFormat::unsigned_q(1, 3);
  EXPECT_EQ(qrelu(-17, in, out), 0);
  EXPECT_EQ(qrelu(in.min_code(), in, out), 0);
}

TEST(Qrelu, TruncatesLowBits) {
  const auto in = FixedPointFormat::signed_q(4, 6);
  const auto out = FixedPointFormat::unsigned_q(1, 3);
  const auto code = quantize_value(0.40625, in, Rounding::nearest).code;
  EXPECT_EQ(code, 26);
  EXPECT_EQ(out.value(qrelu(code, in, out)), 0.375);
}

TEST(Qrelu, SaturatesHighBits) {
  const auto in = FixedPointFormat::signed_q(4, 6);
  const auto out = FixedPointFormat::unsigned_q(1, 3);
  EXPECT_EQ(out.value(qrelu(quantize_value(7.5, in, Rounding::nearest).code, in, out)), 1.875);
  EXPECT_EQ(out.value(qrelu(quantize_value(1.875, in, Rounding::nearest).code, in, out)), 1.875);
  EXPECT_EQ(out.value(qrelu(quantize_value(2.0, in, Rounding::nearest).code, in, out)), 1.875);
}

TEST(Qrelu, RejectsWiderOutput) {
  EXPECT_THROW(qrelu(1, FixedPointFormat::signed_q(1, 2), FixedPointFormat::unsigned_q(1, 3)), std::invalid_argument);
  EXPECT_THROW(qrelu(1, FixedPointFormat::signed_q(1, 4), FixedPointFormat::unsigned_q(2, 2)), std::invalid_argument);
  EXPECT_THROW(qrelu(1, FixedPointFormat::unsigned_q(1, 4), FixedPointFormat::unsigned_q(1, 2)), std::invalid_argument);
}

TEST(Qrelu, MonotoneBoundedAndMatchesRealDefinition) {
  for (int pi = 2; pi <= 11; ++pi)
    for (int ii = 0; ii < pi; ++ii) {
      const FixedPointFormat in{pi, ii, true};
      for (int pr = 1; pr <= 8; ++pr)
        for (int ir = 0; ir <= std::min(pr, ii); ++ir) {
          const FixedPointFormat out{pr, ir, false};
          if (out.frac_bits() > in.frac_bits()) continue;
          std::int64_t prev = 0;
          for (auto a = in.min_code(); a <= in.max_code(); ++a) {
            const auto y = qrelu(a, in, out);
            ASSERT_GE(y, prev);
            ASSERT_LE(y, out.max_code());
            const double x = in.value(a);
            const double expect = x <= 0 ? 0.0 : std::min(std::floor(x / out.step()) * out.step(), out.max_value());
            ASSERT_EQ(out.value(y), expect) << in.name() << " -> " << out.name() << " at " << a;
            prev = y;
          }
        }
    }
}

TEST(Genes, Validation) {
  QuantGenes g;
  EXPECT_NO_THROW(g.validate());
  g.input = {5, 0, false};
  EXPECT_THROW(g.validate(), InputError);
  g = {};
  g.weight = {9, 0, true};
  EXPECT_THROW(g.validate(), InputError);
  g = {};
  g.sparsity_tenths = 6;
  EXPECT_THROW(g.validate(), InputError);
  g = {};
  g.activation = {4, 1, true};
  EXPECT_THROW(g.validate(), InputError);
}

TEST(QuantizeModel, RepresentableWeightsAreExact) {
  auto m = tiny_model();
  QuantGenes g;
  g.weight = FixedPointFormat::signed_q(1, 3);
  g.bias = FixedPointFormat::signed_q(1, 3);
  g.activation = FixedPointFormat::unsigned_q(2, 3);
  g.input = FixedPointFormat::unsigned_q(0, 4);
  auto d = unit_rows(20, 2, 1);
  for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    auto q = quantize_model(m, g, full_mask(m), d, seed);
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t i = 0; i < q.layers[l].weights.size(); ++i)
        EXPECT_EQ(g.weight.value(q.layers[l].weights.data()[i]), m.layers[l].weights.data()[i]);
  }
}

TEST(QuantizeModel, PrunedPositionsAreZeroAndDeterministic) {
  auto m = tiny_model();
  auto mask = full_mask(m);
  mask[0](1, 0) = 0;
  mask[1](0, 1) = 0;
  QuantGenes g;
  g.weight = FixedPointFormat::signed_q(1, 6);
  g.bias = FixedPointFormat::signed_q(1, 6);
  g.activation = FixedPointFormat::unsigned_q(2, 6);
  auto d = unit_rows(20, 2, 2);
  auto a = quantize_model(m, g, mask, d, 7);
  EXPECT_EQ(a.layers[0].weights(1, 0), 0);
  EXPECT_EQ(a.layers[1].weights(0, 1), 0);
  EXPECT_EQ(a, quantize_model(m, g, mask, d, 7));
}

TEST(QuantizeModel, AccumulatorsNeverOverflowOnProfilingRows) {
  Rng rng(31);
  for (int t = 0; t < 40; ++t) {
    auto d = make_blobs(3, 4, 60, 2.0, rng.next());
    auto nd = normalize(d, d);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = rng.next();
    auto m = train(nd, {4, static_cast<std::size_t>(rng.uniform_int(1, 6)), 3}, cfg);
    auto g = random_genes(rng);
    auto q = quantize_model(m, g, full_mask(m), nd, rng.next());
    for (std::size_t r = 0; r < nd.rows(); ++r)
      ASSERT_NO_THROW(fixed_point_inference(q, quantize_inputs(nd.features.row(r), q.genes.input)));
    for (const auto& layer : q.layers)
      for (std::size_t n = 0; n < layer.acc_bits.size(); ++n) ASSERT_GE(layer.acc_bits[n], 2);
  }
}

TEST(Inference, ZeroWeightsPickLargestBias) {
  auto q = reference_net();
  for (auto& l : q.layers) l.weights.fill(0);
  q.layers[1].biases = {-1, 3};
  size_accumulators(q, exhaustive_inputs(2, q.genes.input));
  auto r = fixed_point_inference(q, std::vector<std::int64_t>{15, 7});
  EXPECT_EQ(r.class_id, 1);
  EXPECT_EQ(r.accumulators[1][0], -1 << q.bias_shift(1));
  EXPECT_EQ(r.accumulators[1][1], 3 << q.bias_shift(1));
}

TEST(Inference, SingleNeuronHandArithmetic) {
  QuantizedMLP q;
  q.input_dim = q.hidden_dim = 1;
  q.output_dim = 2;
  q.genes.input = FixedPointFormat::unsigned_q(1, 3);     // max code 15 = 1.875
  q.genes.weight = FixedPointFormat::signed_q(1, 2);      // +1.0 = code 4
  q.genes.bias = FixedPointFormat::signed_q(1, 2);        // 0.25 = code 1
  q.genes.activation = FixedPointFormat::unsigned_q(2, 3);
  for (std::size_t l = 0; l < 2; ++l) {
    auto& L = q.layers[l];
    L.weights = Matrix<std::int64_t>(l == 0 ? 1 : 2, 1, 4);
    L.mask = Matrix<std::uint8_t>(L.weights.rows(), 1, 1);
    L.cluster = Matrix<int>(L.weights.rows(), 1, -1);
    L.biases.assign(L.weights.rows(), l == 0 ? 1 : 0);
    L.acc_frac_bits = accumulator_frac_bits(q.genes, l);
  }
  q.layers[1].weights(0, 0) = -4;
  size_accumulators(q, exhaustive_inputs(1, q.genes.input));
  auto r = fixed_point_inference(q, std::vector<std::int64_t>{15});
  // 15 * 4 on a 5-bit grid is 1.875; plus bias 0.25 is 2.125 = 68 / 32
  EXPECT_EQ(q.layers[0].acc_frac_bits, 5);
  EXPECT_EQ(r.accumulators[0][0], 68);
  EXPECT_EQ(r.hidden_codes[0], 17);  // 2.125 in UQ2.3
  EXPECT_EQ(r.class_id, 1);
}

TEST(Inference, RejectsInvalidInputCodes) {
  auto q = reference_net();
  EXPECT_THROW(fixed_point_inference(q, std::vector<std::int64_t>{16, 0}), InputError);
  EXPECT_THROW(fixed_point_inference(q, std::vector<std::int64_t>{1}), InputError);
}

TEST(Inference, OverflowPolicies) {
  auto q = reference_net();
  q.layers[0].acc_bits[1] = 4;
  const std::vector<std::int64_t> codes{15, 15};
  EXPECT_THROW(fixed_point_inference(q, codes, OverflowPolicy::error), OverflowError);
  auto wrapped = fixed_point_inference(q, codes, OverflowPolicy::wrap);
  EXPECT_EQ(wrapped.accumulators[0][1], wrap_signed(73, 4));
  EXPECT_EQ(fixed_point_inference(q, codes, OverflowPolicy::unbounded).accumulators[0][1], 73);
}

TEST(Inference, ReferenceNetMatchesGolden) {
  auto q = reference_net();
  std::ifstream in(std::string(PRINTMLP_GOLDEN_DIR) + "/reference_net_inference.txt");
  ASSERT_TRUE(in);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::istringstream meta(line.substr(line.find("acc_bits") + 8));
  std::array<int, 4> bits{};
  int f0 = 0, f1 = 0;
  std::string word;
  meta >> bits[0] >> bits[1] >> bits[2] >> bits[3] >> word >> f0 >> f1;
  EXPECT_EQ(q.layers[0].acc_bits, (std::vector<int>{bits[0], bits[1]}));
  EXPECT_EQ(q.layers[1].acc_bits, (std::vector<int>{bits[2], bits[3]}));
  EXPECT_EQ(q.layers[0].acc_frac_bits, f0);
  EXPECT_EQ(q.layers[1].acc_frac_bits, f1);
  std::size_t n = 0;
  while (std::getline(in, line)) {
    std::istringstream s(line);
    std::array<std::int64_t, 9> v{};
    for (auto& x : v) s >> x;
    auto r = fixed_point_inference(q, std::vector<std::int64_t>{v[0], v[1]});
    ASSERT_EQ(r.accumulators[0], (std::vector<std::int64_t>{v[2], v[3]})) << line;
    ASSERT_EQ(r.hidden_codes, (std::vector<std::int64_t>{v[4], v[5]})) << line;
    ASSERT_EQ(r.accumulators[1], (std::vector<std::int64_t>{v[6], v[7]})) << line;
    ASSERT_EQ(r.class_id, v[8]) << line;
    ++n;
  }
  EXPECT_EQ(n, 256u);
}

TEST(Inference, AgreesWithRealArithmetic) {
  Rng rng(17);
  RandomNetSpec spec;
  spec.min_in = 3;
  spec.max_in = 3;
  spec.min_hidden = spec.max_hidden = 4;
  spec.min_out = spec.max_out = 2;
  for (int t = 0; t < 200; ++t) {
    auto q = random_quantized_mlp(rng, spec);
    for (int r = 0; r < 50; ++r) {
      auto codes = random_input_codes(q, rng);
      const auto res = fixed_point_inference(q, codes, OverflowPolicy::unbounded);
      ASSERT_EQ(res.class_id, real_valued_inference(q, codes));
    }
  }
}

TEST(Inference, AgreesWithRealArithmeticOnRandomShapes) {
  Rng rng(18);
  for (int t = 0; t < 300; ++t) {
    auto q = random_quantized_mlp(rng);
    for (int r = 0; r < 20; ++r) {
      auto codes = random_input_codes(q, rng);
      ASSERT_EQ(fixed_point_inference(q, codes, OverflowPolicy::unbounded).class_id, real_valued_inference(q, codes));
    }
  }
}

TEST(Qat, WideFormatsTrackFloatAccuracy) {
  // 300 test rows, so one point is three samples
  auto blobs = blob_fixture(1, 3.0, 1000);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.seed = 3;
  auto m = train(blobs.train, {4, 5, 3}, cfg);
  const double float_acc = accuracy(m, blobs.test);
  QuantGenes g;
  g.weight = FixedPointFormat::signed_q(3, 4);
  g.bias = FixedPointFormat::signed_q(3, 4);
  g.activation = FixedPointFormat::unsigned_q(4, 4);
  g.input = FixedPointFormat::unsigned_q(0, 4);
  TrainConfig qcfg = cfg;
  qcfg.epochs = 20;
  qcfg.learning_rate = 0.005;
  auto r = qat_retrain(m, blobs.train, g, qcfg, full_mask(m));
  auto q = quantize_model(r, g, full_mask(r), blobs.train, 5);
  EXPECT_GE(accuracy(q, blobs.test), float_acc - 0.01);
}

TEST(Qat, EverythingPrunedGivesMajorityRate) {
  auto blobs = blob_fixture(2, 3.0, 200, 2, 2);
  // skew the class balance so the majority rate is not 0.5
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < blobs.train.rows(); ++r)
    if (blobs.train.labels[r] == 0 || r % 3 == 0) keep.push_back(r);
  auto train_set = blobs.train.subset(keep);
  auto m = train(train_set, {2, 3, 2}, {});
  WeightMask none{Matrix<std::uint8_t>(3, 2, 0), Matrix<std::uint8_t>(2, 3, 0)};
  QuantGenes g;
  g.weight = g.bias = FixedPointFormat::signed_q(2, 5);
  TrainConfig cfg;
  cfg.epochs = 30;
  auto r = qat_retrain(m, train_set, g, cfg, none);
  for (const auto& l : r.layers)
    for (double w : l.weights.data()) EXPECT_EQ(w, 0.0);
  auto q = quantize_model(r, g, none, train_set, 1);
  const auto zeros = std::count(train_set.labels.begin(), train_set.labels.end(), 0);
  const double majority = static_cast<double>(std::max<long>(zeros, static_cast<long>(train_set.rows()) - zeros)) /
                          static_cast<double>(train_set.rows());
  EXPECT_EQ(accuracy(q, train_set), majority);
}

TEST(Qat, FrozenWeightsStayFixed) {
  auto blobs = blob_fixture(3);
  auto m = train(blobs.train, {4, 3, 3}, {});
  FrozenWeights frozen{Matrix<double>(3, 4, std::nan("")), Matrix<double>(3, 3, std::nan(""))};
  frozen[0](1, 2) = 0.5;
  frozen[1](2, 0) = -0.25;
  QuantGenes g;
  g.weight = FixedPointFormat::signed_q(1, 6);
  for (int epochs : {1, 7, 25}) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    auto r = qat_retrain(m, blobs.train, g, cfg, full_mask(m), &frozen);
    EXPECT_EQ(r.layers[0].weights(1, 2), 0.5);
    EXPECT_EQ(r.layers[1].weights(2, 0), -0.25);
  }
}

TEST(Qat, Deterministic) {
  auto blobs = blob_fixture(4);
  auto m = train(blobs.train, {4, 3, 3}, {});
  QuantGenes g;
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 8;
  EXPECT_EQ(qat_retrain(m, blobs.train, g, cfg, full_mask(m)), qat_retrain(m, blobs.train, g, cfg, full_mask(m)));
}

TEST(QuantizedMlp, JsonRoundTrip) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto q = random_quantized_mlp(rng);
    nlohmann::json j = q;
    auto back = nlohmann::json::parse(j.dump()).get<QuantizedMLP>();
    EXPECT_EQ(back, q);
  }
}

TEST(ReferenceGenes, EightBitWithFourBitInputs) {
  auto blobs = blob_fixture(1);
  auto m = train(blobs.train, {4, 4, 3}, {});
  auto g = reference_genes(m, blobs.train);
  EXPECT_EQ(g.weight.total_bits, 8);
  EXPECT_EQ(g.bias.total_bits, 8);
  EXPECT_EQ(g.activation.total_bits, 8);
  EXPECT_EQ(g.input, FixedPointFormat::unsigned_q(0, 4));
  EXPECT_NO_THROW(g.validate());
  double wmax = 0;
  for (const auto& l : m.layers)
    for (double w : l.weights.data()) wmax = std::max(wmax, std::abs(w));
  EXPECT_GE(std::ldexp(1.0, g.weight.integer_bits), std::min(wmax, 128.0));
}
