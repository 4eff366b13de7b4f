/*
 * Copyright 2026 The cowbif Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cowbif/error.hpp"
#include "cowbif/nn/checkpoint.hpp"
#include "cowbif/nn/layers.hpp"
#include "cowbif/nn/losses.hpp"
#include "cowbif/nn/optim.hpp"
#include "oracles.hpp"

using namespace cowbif;
using namespace cowbif::nn;
using cowbif::testing::check_loss_gradient;
using cowbif::testing::check_module_gradients;

namespace {

constexpr double kGradTol = 1e-4;

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0, double shift = 0.0) {
  std::normal_distribution<double> g(shift, scale);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(g(rng));
  return t;
}

template <typename T>
void randomize_params(Module<T>& m, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.5);
  for (auto* p : m.parameters())
    for (auto& v : p->value.values()) v = static_cast<T>(g(rng));
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cowbif_nn_" + name);
}

template <typename T>
std::unique_ptr<Sequential<T>> small_net(int width = 4) {
  auto net = std::make_unique<Sequential<T>>("net");
  net->add(std::make_unique<Conv3d<T>>("conv", 1, width, 3));
  net->add(std::make_unique<BatchNorm3d<T>>("bn", width));
  net->add(std::make_unique<ReLU<T>>("relu"));
  net->add(std::make_unique<MaxPool3d<T>>("pool"));
  net->add(std::make_unique<Flatten<T>>("flat"));
  net->add(std::make_unique<Dense<T>>("fc", width * 8, 5));
  net->add(std::make_unique<Softmax<T>>("softmax"));
  return net;
}

}  // namespace

// --- convolution -----------------------------------------------------------

TEST(Conv3d, PointKernelIsIdentity) {
  std::mt19937_64 rng(1);
  Conv3d<double> conv("c", 1, 1, 1);
  conv.weight().value.fill(1.0);
  conv.bias().value.fill(0.0);
  const auto x = random_tensor<double>({2, 1, 4, 5, 6}, rng);
  EXPECT_EQ(conv.forward(x, Mode::kEval), x);
}

TEST(Conv3d, OnesKernelCountsNeighbourhood) {
  Conv3d<double> conv("c", 1, 1, 3);
  conv.weight().value.fill(1.0);
  conv.bias().value.fill(0.0);
  const Tensor<double> y = conv.forward(Tensor<double>({1, 1, 4, 4, 4}, 1.0), Mode::kEval);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4, 4}));
  auto at = [&](int d, int h, int w) { return y[static_cast<std::size_t>((d * 4 + h) * 4 + w)]; };
  EXPECT_DOUBLE_EQ(at(1, 1, 1), 27.0);
  EXPECT_DOUBLE_EQ(at(2, 2, 1), 27.0);
  EXPECT_DOUBLE_EQ(at(0, 0, 0), 8.0);
  EXPECT_DOUBLE_EQ(at(0, 1, 1), 18.0);
}

TEST(Conv3d, StrideTwoHalvesExtent) {
  Conv3d<double> conv("c", 2, 3, 3, 2, 1);
  EXPECT_EQ(conv.forward(Tensor<double>({1, 2, 8, 6, 4}), Mode::kEval).shape(), (Shape{1, 3, 4, 3, 2}));
}

TEST(Conv3d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  Conv3d<double> conv("c", 3, 4, 3);
  randomize_params(conv, rng);
  const auto r = check_module_gradients(conv, random_tensor<double>({2, 3, 6, 6, 6}, rng), Mode::kTrain, rng);
  EXPECT_LT(r.worst(), kGradTol);
}

TEST(Conv3d, StridedGradient) {
  std::mt19937_64 rng(3);
  Conv3d<double> conv("c", 2, 2, 3, 2, 1);
  randomize_params(conv, rng);
  EXPECT_LT(check_module_gradients(conv, random_tensor<double>({1, 2, 6, 4, 6}, rng), Mode::kTrain, rng).worst(),
            kGradTol);
}

TEST(Conv3d, Linearity) {
  std::mt19937_64 rng(4);
  Conv3d<double> conv("c", 2, 3, 3);
  randomize_params(conv, rng);
  conv.bias().value.fill(0.0);
  const auto x = random_tensor<double>({1, 2, 5, 5, 5}, rng);
  const auto y = random_tensor<double>({1, 2, 5, 5, 5}, rng);
  const double a = 0.7, b = -1.3;
  Tensor<double> mix(x.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const auto cm = conv.forward(mix, Mode::kEval);
  const auto cx = conv.forward(x, Mode::kEval);
  const auto cy = conv.forward(y, Mode::kEval);
  for (std::size_t i = 0; i < cm.size(); ++i) EXPECT_NEAR(cm[i], a * cx[i] + b * cy[i], 1e-5);
}

TEST(Conv3d, ChannelMismatchNamesDimensions) {
  Conv3d<double> conv("c", 3, 2, 3);
  try {
    conv.forward(Tensor<double>({1, 2, 4, 4, 4}), Mode::kEval);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

// --- batch normalisation ---------------------------------------------------

TEST(BatchNorm, TrainOutputIsStandardised) {
  std::mt19937_64 rng(5);
  BatchNorm3d<double> bn("bn", 3);
  const auto x = random_tensor<double>({4, 3, 4, 4, 4}, rng, 2.0, 1.5);
  const auto y = bn.forward(x, Mode::kTrain);
  const std::size_t spatial = 64;
  for (int c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    int n = 0;
    for (int b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < spatial; ++i) {
        const double v = y[(static_cast<std::size_t>(b) * 3 + static_cast<std::size_t>(c)) * spatial + i];
        s += v;
        s2 += v * v;
        ++n;
      }
    const double mean = s / n;
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(s2 / n - mean * mean, 1.0, 1e-5);
  }
}

TEST(BatchNorm, RunningStatisticsUpdate) {
  BatchNorm3d<double> bn("bn", 1);
  Tensor<double> x({2, 1, 1, 1, 2}, std::vector<double>{1.0, 3.0, 5.0, 7.0});
  bn.forward(x, Mode::kTrain);
  EXPECT_NEAR(bn.running_mean()[0], 0.1 * 4.0, 1e-12);
  EXPECT_NEAR(bn.running_var()[0], 0.9 * 1.0 + 0.1 * 5.0, 1e-12);
}

TEST(BatchNorm, EvalBeforeTrainingUsesInitialStatistics) {
  std::mt19937_64 rng(6);
  BatchNorm3d<double> bn("bn", 2);
  const auto x = random_tensor<double>({1, 2, 3, 3, 3}, rng);
  const auto y = bn.forward(x, Mode::kEval);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i] / std::sqrt(1.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, StandardisedInputPassesThrough) {
  std::mt19937_64 rng(7);
  auto x = random_tensor<double>({2, 1, 4, 4, 4}, rng);
  double s = 0, s2 = 0;
  for (double v : x.values()) s += v;
  const double mean = s / x.size();
  for (double& v : x.values()) s2 += (v - mean) * (v - mean);
  const double sd = std::sqrt(s2 / x.size());
  for (double& v : x.values()) v = (v - mean) / sd;
  BatchNorm3d<double> bn("bn", 1);
  const auto y = bn.forward(x, Mode::kTrain);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-4);
}

TEST(BatchNorm, Gradient) {
  std::mt19937_64 rng(8);
  BatchNorm3d<double> bn("bn", 3);
  randomize_params(bn, rng);
  EXPECT_LT(check_module_gradients(bn, random_tensor<double>({2, 3, 3, 3, 3}, rng), Mode::kTrain, rng).worst(),
            kGradTol);
}

TEST(BatchNorm, BackwardNeedsTrainingForward) {
  BatchNorm3d<double> bn("bn", 1);
  const Tensor<double> x({1, 1, 2, 2, 2}, 1.0);
  bn.forward(x, Mode::kEval);
  EXPECT_THROW(bn.backward(x), ShapeError);
}

// --- activations, pooling, dense, dropout ----------------------------------

TEST(Activations, ReluExamples) {
  ReLU<double> relu("r");
  const Tensor<double> x({4}, std::vector<double>{-2.0, -0.5, 0.0, 3.0});
  EXPECT_EQ(relu.forward(x, Mode::kEval), (Tensor<double>({4}, std::vector<double>{0.0, 0.0, 0.0, 3.0})));
}

TEST(Activations, SoftmaxUniformAndNormalised) {
  Softmax<double> sm("s");
  const auto y = sm.forward(Tensor<double>({1, 14}, 0.3), Mode::kEval);
  for (double p : y.values()) EXPECT_NEAR(p, 1.0 / 14.0, 1e-12);
  std::mt19937_64 rng(9);
  const auto z = sm.forward(random_tensor<double>({5, 14}, rng, 30.0), Mode::kEval);
  for (int r = 0; r < 5; ++r) {
    double sum = 0;
    for (int k = 0; k < 14; ++k) {
      const double p = z[static_cast<std::size_t>(r * 14 + k)];
      EXPECT_GE(p, 0.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Activations, PoolThenUpsampleConstant) {
  MaxPool3d<double> pool("p");
  Upsample3d<double> up("u");
  const Tensor<double> x({1, 2, 4, 4, 4}, 2.5);
  EXPECT_EQ(up.forward(pool.forward(x, Mode::kEval), Mode::kEval), x);
}

TEST(Activations, OddPoolExtentIsShapeError) {
  MaxPool3d<double> pool("p");
  EXPECT_THROW(pool.forward(Tensor<double>({1, 1, 4, 3, 4}), Mode::kEval), ShapeError);
}

TEST(Activations, Gradients) {
  std::mt19937_64 rng(10);
  ReLU<double> relu("r");
  Sigmoid<double> sig("s");
  Softmax<double> sm("sm");
  MaxPool3d<double> pool("p");
  Upsample3d<double> up("u");
  Flatten<double> flat("f");
  Dense<double> dense("d", 6, 4);
  randomize_params(dense, rng);
  EXPECT_LT(check_module_gradients(relu, random_tensor<double>({2, 3, 2, 2, 2}, rng), Mode::kTrain, rng).worst(), kGradTol);
  EXPECT_LT(check_module_gradients(sig, random_tensor<double>({2, 3, 2, 2, 2}, rng), Mode::kTrain, rng).worst(), kGradTol);
  EXPECT_LT(check_module_gradients(sm, random_tensor<double>({3, 14}, rng), Mode::kTrain, rng).worst(), kGradTol);
  EXPECT_LT(check_module_gradients(pool, random_tensor<double>({1, 2, 4, 4, 2}, rng), Mode::kTrain, rng).worst(), kGradTol);
  EXPECT_LT(check_module_gradients(up, random_tensor<double>({1, 2, 2, 3, 2}, rng), Mode::kTrain, rng).worst(), kGradTol);
  EXPECT_LT(check_module_gradients(flat, random_tensor<double>({2, 3, 2, 1, 2}, rng), Mode::kTrain, rng).worst(), kGradTol);
  EXPECT_LT(check_module_gradients(dense, random_tensor<double>({3, 6}, rng), Mode::kTrain, rng).worst(), kGradTol);
}

TEST(Dropout, EvalIsIdentity) {
  std::mt19937_64 rng(11);
  Dropout<double> d("d", 0.5, 3);
  const auto x = random_tensor<double>({4, 10}, rng);
  EXPECT_EQ(d.forward(x, Mode::kEval), x);
}

TEST(Dropout, TrainExpectationMatchesInput) {
  Dropout<double> d("d", 0.5, 4);
  const auto y = d.forward(Tensor<double>({1, 200000}, 1.0), Mode::kTrain);
  double s = 0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    s += v;
  }
  EXPECT_NEAR(s / y.size(), 1.0, 0.01);
}

TEST(Dropout, GradientWithFrozenMask) {
  std::mt19937_64 rng(12);
  Dropout<double> d("d", 0.3, 5);
  const auto x = random_tensor<double>({2, 8}, rng);
  d.forward(x, Mode::kTrain);
  d.freeze_mask(true);
  EXPECT_LT(check_module_gradients(d, x, Mode::kTrain, rng).worst(), kGradTol);
}

TEST(Composite, SmallNetworkGradient) {
  std::mt19937_64 rng(13);
  auto net = small_net<double>(2);
  initialize(*net, 99);
  randomize_params(*net, rng);
  const auto r = check_module_gradients(*net, random_tensor<double>({2, 1, 4, 4, 4}, rng), Mode::kTrain, rng);
  EXPECT_LT(r.input_error, kGradTol);
  EXPECT_LT(r.param_error, kGradTol);
}

// --- losses ----------------------------------------------------------------

TEST(Losses, CrossEntropyExamples) {
  Tensor<double> onehot({2, 14}, 0.0);
  onehot[3] = 1.0;
  onehot[14 + 13] = 1.0;
  EXPECT_NEAR(cross_entropy(onehot, onehot).value, 0.0, 1e-9);
  EXPECT_NEAR(cross_entropy(Tensor<double>({2, 14}, 1.0 / 14.0), onehot).value, std::log(14.0), 1e-12);
  EXPECT_THROW(cross_entropy(Tensor<double>({2, 13}, 0.1), onehot), ShapeError);
}

TEST(Losses, DiceExamples) {
  Tensor<double> t({1, 1, 4, 4, 4}, 0.0);
  for (std::size_t i = 0; i < 20; ++i) t[i * 3] = 1.0;
  EXPECT_LE(dice_loss(t, t).value, 1.0 / (2 * 20 + 1.0));
  EXPECT_NEAR(dice_loss(Tensor<double>(t.shape(), 0.0), t).value, 1.0 - 1.0 / 21.0, 1e-12);
  EXPECT_THROW(dice_loss(Tensor<double>({1, 1, 4, 4, 2}), t), ShapeError);
}

TEST(Losses, Gradients) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Tensor<double> probs({3, 5});
  for (auto& v : probs.values()) v = u(rng);
  Tensor<double> onehot({3, 5}, 0.0);
  onehot[1] = onehot[5 + 4] = onehot[10] = 1.0;
  EXPECT_LT(check_loss_gradient([&](const Tensor<double>& p) { return cross_entropy(p, onehot); }, probs), kGradTol);

  Tensor<double> pred({1, 1, 3, 3, 3});
  Tensor<double> target({1, 1, 3, 3, 3});
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = u(rng);
    target[i] = (i % 3 == 0) ? 1.0 : 0.0;
  }
  EXPECT_LT(check_loss_gradient([&](const Tensor<double>& p) { return dice_loss(p, target); }, pred), kGradTol);
}

// --- initialisation and optimisation ---------------------------------------

TEST(Xavier, Fans) {
  EXPECT_EQ(compute_fans({512, 1024}).fan_in, 1024);
  EXPECT_EQ(compute_fans({512, 1024}).fan_out, 512);
  EXPECT_EQ(compute_fans({16, 8, 3, 3, 3}).fan_in, 8 * 27);
  EXPECT_EQ(compute_fans({16, 8, 3, 3, 3}).fan_out, 16 * 27);
}

TEST(Xavier, BoundsVarianceAndDeterminism) {
  const Shape shape{1000, 1000};
  const auto w = xavier_init<double>(shape, 17);
  const double limit = std::sqrt(6.0 / 2000.0);
  double s = 0, s2 = 0;
  for (double v : w.values()) {
    ASSERT_LE(std::fabs(v), limit);
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var, 2.0 / 2000.0, 0.05 * 2.0 / 2000.0);
  EXPECT_EQ(xavier_init<double>(shape, 17), w);
  EXPECT_NE(xavier_init<double>(shape, 18), w);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  for (double g : {0.37, -2.5, 1e-3}) {
    Param<double> p{"w", Tensor<double>({1}, 1.0), Tensor<double>({1}, g)};
    Adam<double> adam;
    adam.step({&p});
    const double step = p.value[0] - 1.0;
    EXPECT_LE(std::fabs(step), 1e-4);
    EXPECT_GE(std::fabs(step), 0.99e-4);
    EXPECT_EQ(std::signbit(step), !std::signbit(g));
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Param<double> p{"w", Tensor<double>({3}, 0.5), Tensor<double>({3}, 0.0)};
  Adam<double> adam;
  for (int i = 0; i < 5; ++i) adam.step({&p});
  EXPECT_EQ(p.value, Tensor<double>({3}, 0.5));
  EXPECT_EQ(adam.steps(), 5);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Param<double> a{"good", Tensor<double>({2}, 1.0), Tensor<double>({2}, 0.5)};
  Param<double> b{"conv3.weight", Tensor<double>({2}, 1.0), Tensor<double>({2}, 0.5)};
  b.grad[1] = std::nan("");
  Adam<double> adam;
  try {
    adam.step({&a, &b});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("conv3.weight"), std::string::npos);
  }
  EXPECT_EQ(a.value, Tensor<double>({2}, 1.0));
}

TEST(Adam, DeterministicTraining) {
  auto run = [] {
    auto net = small_net<double>(2);
    initialize(*net, 5);
    Adam<double> adam;
    std::mt19937_64 rng(6);
    for (int step = 0; step < 10; ++step) {
      const auto x = random_tensor<double>({2, 1, 4, 4, 4}, rng);
      Tensor<double> target({2, 5}, 0.0);
      target[static_cast<std::size_t>(step % 5)] = 1.0;
      target[5 + static_cast<std::size_t>((step + 2) % 5)] = 1.0;
      net->zero_grad();
      const auto loss = cross_entropy(net->forward(x, Mode::kTrain), target);
      net->backward(loss.grad);
      adam.step(net->parameters());
    }
    std::vector<double> flat;
    for (auto* p : net->parameters()) flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());
    return flat;
  };
  EXPECT_EQ(run(), run());
}

// --- checkpoints -----------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto path = temp_file("roundtrip.ckpt");
  auto a = small_net<float>();
  initialize(*a, 1);
  std::mt19937_64 rng(2);
  a->forward(random_tensor<float>({3, 1, 4, 4, 4}, rng), Mode::kTrain);  // move running stats
  save_checkpoint(path, *a, {"{\"net\":\"small\"}", 7, 42});

  auto b = small_net<float>();
  initialize(*b, 9);
  const CheckpointMeta meta = load_checkpoint(path, *b);
  EXPECT_EQ(meta.epoch, 7u);
  EXPECT_EQ(meta.seed, 42u);
  EXPECT_EQ(meta.architecture, "{\"net\":\"small\"}");
  EXPECT_EQ(read_checkpoint_meta(path).epoch, 7u);

  const auto pa = a->parameters(), pb = b->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  const auto x = random_tensor<float>({1, 1, 4, 4, 4}, rng);
  EXPECT_EQ(a->forward(x, Mode::kEval), b->forward(x, Mode::kEval));
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptMagicVersionAndTruncation) {
  const auto path = temp_file("corrupt.ckpt");
  auto net = small_net<float>();
  initialize(*net, 3);
  save_checkpoint(path, *net, {"{}", 0, 0});
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  auto expect_format_error = [&](const std::string& b, const char* why) {
    write(b);
    auto fresh = small_net<float>();
    EXPECT_THROW(load_checkpoint(path, *fresh), FormatError) << why;
  };
  std::string bad = bytes;
  bad[0] = 'X';
  expect_format_error(bad, "magic");
  bad = bytes;
  bad[8] = 2;
  expect_format_error(bad, "version");
  expect_format_error(bytes.substr(0, bytes.size() - 10), "truncated");
  std::filesystem::remove(path);
}

TEST(Checkpoint, MismatchedArchitectureNamesLayer) {
  const auto path = temp_file("mismatch.ckpt");
  auto net = small_net<float>(4);
  initialize(*net, 3);
  save_checkpoint(path, *net, {"{}", 0, 0});
  auto other = small_net<float>(2);
  try {
    load_checkpoint(path, *other);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("conv"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}
