#include <gtest/gtest.h>

#include "dexsim.hpp"
#include "support.hpp"

using namespace dexsim;
namespace dt = dexsim::testing;

TEST(Seqlang, PumpOneLiner) {
  const auto ps = parse_sequence(
      "pulse pump { t0 = 0 ns; duration = 60 ns; shape = square; transition = VAC_DE; polarization = H; area = pi }");
  ASSERT_EQ(ps.seq.pulses.size(), 1u);
  const auto& p = ps.seq.pulses[0];
  EXPECT_EQ(p.duration, 60.0);
  EXPECT_EQ(p.transition, Transition::kVacDe);
  EXPECT_EQ(*p.area, kPi);
  EXPECT_EQ(ps.seq.t_end, 60.0);
}

TEST(Seqlang, EmptyDocument) {
  const auto ps = parse_sequence("");
  EXPECT_TRUE(ps.seq.pulses.empty());
  EXPECT_EQ(ps.params, default_params());
}

TEST(Seqlang, UnitsExact) {
  const auto a = parse_sequence("rep_rate = 1 MHz\n");
  EXPECT_EQ(a.seq.rep_period, 1000.0);
  const auto b = parse_sequence("rep_rate = 76 MHz\n");
  EXPECT_EQ(b.seq.rep_period, 1000.0 / 76.0);
  const auto c = parse_sequence("t2_star = 2 us\ntau_hh = 20 ps\n");
  EXPECT_EQ(c.params.t2_star, 2000.0);
  EXPECT_EQ(c.params.tau_hh, 20.0 / 1000.0);
}

TEST(Seqlang, SechControlSerialization) {
  PulseSequence s;
  s.pulses.push_back(make_shaped_pulse("control", PulseShape::kSech, 62.0, Transition::kDeXx, Jones::sigma_plus(),
                                       2 * kPi, 70.0, 100.0));
  s.t_end = 63.0;
  const std::string text = serialize(document_of(s, default_params()));
  EXPECT_NE(text.find("area = 2pi"), std::string::npos);
  EXPECT_NE(text.find("detuning = 70 ueV"), std::string::npos);
  EXPECT_NE(text.find("bandwidth = 100 ueV"), std::string::npos);
}

TEST(Seqlang, ErrorsCarryLines) {
  struct Case {
    const char* text;
    int line;
  };
  const Case cases[] = {
      {"format = 1\nbogus_key = 3\n", 2},
      {"pulse a { t0 = 0 ns; duration = 1 ns; shape = square; transition = DE_XX; polarization = H; area = pi }\n"
       "pulse a { t0 = 2 ns; duration = 1 ns; shape = square; transition = DE_XX; polarization = H; area = pi }\n",
       2},
      {"\n\ntau_de = 5 MHz\n", 3},
      {"pulse a {\n  t0 = 0 ns\n  shape = square\n}\n", 4},
      {"delta_de = 1.4 ueV\n", 1},
      {"pulse a {\n t0 = 1 ns\n duration = 1 ns\n shape = square\n transition = DE_XX\n polarization = Q\n area = pi\n}\n",
       6},
  };
  for (const auto& c : cases) {
    const auto r = try_parse_sequence(c.text);
    ASSERT_FALSE(r.ok()) << c.text;
    EXPECT_EQ(r.error->line(), c.line) << c.text << " -> " << r.error->what();
    EXPECT_FALSE(r.error->message().empty());
  }
}

TEST(Seqlang, RandomRoundTrip) {
  Rng r(2024);
  for (int i = 0; i < 1000; ++i) {
    const SeqDocument d = dt::random_document(r);
    const std::string text = serialize(d);
    const auto back = try_parse_sequence(text);
    ASSERT_TRUE(back.ok()) << text << "\n" << back.error->what();
    EXPECT_TRUE(back.value->doc == d) << text;
    EXPECT_EQ(serialize(back.value->doc), text);
  }
}

TEST(Seqlang, FuzzedDocumentsFailCleanly) {
  Rng r(77);
  int invalid = 0, attempts = 0;
  while (invalid < 1000 && attempts < 20000) {
    ++attempts;
    const std::string text = dt::mutate(serialize(dt::random_document(r)), r);
    const auto out = try_parse_sequence(text);
    if (out.ok()) continue;
    ++invalid;
    EXPECT_GE(out.error->line(), 1);
    EXPECT_LE(out.error->line(), dt::line_count(text));
    EXPECT_FALSE(out.error->message().empty());
  }
  EXPECT_EQ(invalid, 1000);
}
