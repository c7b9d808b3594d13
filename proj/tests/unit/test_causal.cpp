#include <gtest/gtest.h>

#include <cmath>

#include "capri/causal/engine.hpp"
#include "capri/train/samples.hpp"
#include "test_support.hpp"

namespace capri::causal {
namespace {

using capri::testing::error_code_of;
using data::Field;

class Causal : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto& cat = capri::testing::synth_catalog();
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < 30; ++i) ids.push_back(i * 3);
    samples_ = new train::SampleSet(train::load_samples(cat, ids, 16));
  }
  static void TearDownTestSuite() { delete samples_; }

  static const train::TrainedModel& model() { return capri::testing::tiny_trained_model(); }
  static const data::Vocab& vocab() { return model().vocab; }

  static std::vector<std::vector<DoAssignment>> all_single_assignments() {
    std::vector<std::vector<DoAssignment>> out;
    for (Field f : {Field::Voltage, Field::Current, Field::Agent})
      for (int i = 0; i < static_cast<int>(vocab().size(f)); ++i) out.push_back({{f, i}});
    return out;
  }

  static inline train::SampleSet* samples_ = nullptr;
};

TEST_F(Causal, NullInterventionIsObservationalBitwise) {
  const auto& net = model().net;
  for (const auto& s : *samples_) {
    const double obs = predict_observational(net, s.image, s.params);
    EXPECT_EQ(obs, net.forward(s.image, s.params, model::ForwardMode::Deterministic).snr_hat);
    EXPECT_EQ(intervene(net, s.image, s.params, {}), obs);
    EXPECT_EQ(counterfactual(net, s.image, s.params, {}), obs);
    const std::vector<DoAssignment> factual{{Field::Voltage, s.params.voltage},
                                            {Field::Current, s.params.current},
                                            {Field::Agent, s.params.agent}};
    EXPECT_EQ(intervene(net, s.image, s.params, factual), obs);
    EXPECT_EQ(counterfactual(net, s.image, s.params, factual), obs);
    const auto r = what_if(net, vocab(), s.image, s.params, {});
    EXPECT_EQ(r.snr_obs, obs);
    EXPECT_EQ(r.snr_i, obs);
    EXPECT_EQ(r.snr_cf, obs);
    EXPECT_FALSE(r.uncertainty.has_value());
  }
}

TEST_F(Causal, OrderIndependenceAndComposition) {
  const auto& net = model().net;
  const std::vector<DoAssignment> vt{{Field::Voltage, 3}, {Field::Current, 1}, {Field::Agent, 0}};
  const std::vector<DoAssignment> tv{{Field::Agent, 0}, {Field::Current, 1}, {Field::Voltage, 3}};
  for (const auto& s : *samples_) {
    EXPECT_EQ(intervene(net, s.image, s.params, vt), intervene(net, s.image, s.params, tv));
    EXPECT_EQ(counterfactual(net, s.image, s.params, vt), counterfactual(net, s.image, s.params, tv));
    // Applying do(v) then do(t) to the params equals the joint query.
    const std::vector<DoAssignment> v_only{vt[0]}, t_only{vt[1]}, both{vt[0], vt[1]};
    const auto stepwise = causal::apply(causal::apply(s.params, v_only), t_only);
    EXPECT_EQ(stepwise, causal::apply(s.params, both));
    EXPECT_EQ(predict_observational(net, s.image, stepwise), intervene(net, s.image, s.params, both));
  }
  const auto a = what_if(net, vocab(), (*samples_)[0].image, (*samples_)[0].params, tv);
  EXPECT_EQ(a.assignments, vt);
  EXPECT_EQ(describe(tv, vocab()), "do(v=140, t=430, a=BiNPs 100nm)");
  EXPECT_EQ(describe({}, vocab()), "none");
}

TEST_F(Causal, CounterfactualHoldsFactualLatent) {
  const auto& net = model().net;
  for (const auto& s : *samples_) {
    const auto mu = net.encode(s.image, s.params).mu;
    EXPECT_EQ(abduce(net, s.image, s.params), mu);
    for (const auto& as : all_single_assignments()) {
      const double cf = counterfactual(net, s.image, s.params, as);
      EXPECT_EQ(cf, net.decode(mu, causal::apply(s.params, as)));
      EXPECT_EQ(intervene(net, s.image, s.params, as),
                predict_observational(net, s.image, causal::apply(s.params, as)));
    }
  }
}

TEST_F(Causal, SampledAbductionIsSeeded) {
  const auto& net = model().net;
  const auto& s = (*samples_)[1];
  const Abduction a{true, 99};
  const auto z1 = abduce(net, s.image, s.params, a);
  EXPECT_EQ(z1, abduce(net, s.image, s.params, a));
  EXPECT_NE(z1, abduce(net, s.image, s.params, Abduction{true, 100}));
  EXPECT_NE(z1, abduce(net, s.image, s.params));
  const std::vector<DoAssignment> as{{Field::Agent, 2}};
  EXPECT_EQ(counterfactual(net, s.image, s.params, as, a), net.decode(z1, causal::apply(s.params, as)));
}

TEST_F(Causal, ParamBlindDecoderMakesCounterfactualFactual) {
  train::TrainedModel m = model();
  const auto& cfg = m.net.config();
  const int in = cfg.latent_dim + cfg.embed_dim();
  for (auto& p : m.net.parameters()) {
    if (p.name != "dec1.weight") continue;
    for (int row = 0; row < cfg.decoder_hidden[0]; ++row)
      for (int col = cfg.latent_dim; col < in; ++col) p.value[static_cast<std::size_t>(row) * in + col] = 0.0f;
  }
  for (const auto& s : *samples_) {
    const double obs = predict_observational(m.net, s.image, s.params);
    for (const auto& as : all_single_assignments()) {
      EXPECT_EQ(counterfactual(m.net, s.image, s.params, as), obs);
    }
  }
}

TEST_F(Causal, AssignmentValidation) {
  EXPECT_EQ(make_assignment(vocab(), Field::Agent, "Iodine"), (DoAssignment{Field::Agent, 2}));
  EXPECT_EQ(make_assignment(vocab(), Field::Voltage, "120kVp"), (DoAssignment{Field::Voltage, 2}));
  try {
    make_assignment(vocab(), Field::Agent, "Gold");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownLevel);
    EXPECT_NE(std::string(e.what()).find("Gold"), std::string::npos);
  }
  const std::vector<DoAssignment> dup{{Field::Voltage, 0}, {Field::Voltage, 1}};
  EXPECT_EQ(error_code_of([&] { validate_assignments(dup, vocab()); }), ErrorCode::InvalidArgument);
  const std::vector<DoAssignment> out_of_range{{Field::Current, 2}};
  EXPECT_EQ(error_code_of([&] { validate_assignments(out_of_range, vocab()); }), ErrorCode::UnknownLevel);
  const auto& s = (*samples_)[0];
  EXPECT_EQ(error_code_of([&] { what_if(model().net, vocab(), s.image, s.params, dup); }),
            ErrorCode::InvalidArgument);
}

TEST_F(Causal, EnsembleModes) {
  const auto& members = capri::testing::tiny_members();
  train::Ensemble ens{members, 1};
  const auto& s = (*samples_)[2];
  const std::vector<DoAssignment> as{{Field::Agent, 0}, {Field::Voltage, 1}};

  const auto best = what_if(ens, EnsembleMode::BestMember, s.image, s.params, as);
  const auto direct = what_if(members[1].net, members[1].vocab, s.image, s.params, as);
  EXPECT_EQ(best.snr_obs, direct.snr_obs);
  EXPECT_EQ(best.snr_i, direct.snr_i);
  EXPECT_EQ(best.snr_cf, direct.snr_cf);
  EXPECT_FALSE(best.uncertainty.has_value());

  const auto mean = what_if(ens, EnsembleMode::Ensemble, s.image, s.params, as);
  ASSERT_TRUE(mean.uncertainty.has_value());
  const auto r0 = what_if(members[0].net, members[0].vocab, s.image, s.params, as);
  EXPECT_NEAR(mean.snr_obs, (r0.snr_obs + direct.snr_obs) / 2, 1e-9);
  EXPECT_NEAR(mean.snr_i, (r0.snr_i + direct.snr_i) / 2, 1e-9);
  EXPECT_NEAR(mean.snr_cf, (r0.snr_cf + direct.snr_cf) / 2, 1e-9);
  EXPECT_NEAR(mean.uncertainty->std_i, std::abs(r0.snr_i - direct.snr_i) / 2, 1e-9);
  EXPECT_NEAR(mean.uncertainty->std_cf, std::abs(r0.snr_cf - direct.snr_cf) / 2, 1e-9);

  const auto null = what_if(ens, EnsembleMode::Ensemble, s.image, s.params, {});
  EXPECT_EQ(null.snr_i, null.snr_obs);
  EXPECT_EQ(null.snr_cf, null.snr_obs);
  EXPECT_EQ(null.uncertainty->std_i, null.uncertainty->std_obs);
}

}  // namespace
}  // namespace capri::causal
