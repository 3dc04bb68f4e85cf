#include <gtest/gtest.h>

#include <sstream>

#include "sdha/tableau_io.hpp"

using namespace sdha;

namespace {

std::string parse_error(const std::string& text, bool weak = false) {
  std::istringstream in(text);
  try {
    if (weak)
      parse_wrk_tableau(in, "t.wrk");
    else
      parse_sprk_tableau(in, "t.sprk");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

const char* kMidpoint =
    "# one stage\n"
    "s = 1\n"
    "a\n0.5\nabar\n0.5\nahat\n0.5\nb\n0.5\nbbar\n0.5\nbhat\n0.5\n"
    "alpha\n1\nalphahat\n1\nbeta\n1\nbetahat\n1\n";

}  // namespace

TEST(TableauIo, RoundTripSprk) {
  for (const auto& t : {midpoint_tableau(), stormer_verlet_tableau(), dirk_tableau(0.3)}) {
    std::ostringstream o;
    write_tableau(o, t);
    std::istringstream in(o.str());
    const auto u = parse_sprk_tableau(in);
    EXPECT_EQ(u.s, t.s);
    EXPECT_EQ(u.name, t.name);
    EXPECT_EQ(u.a, t.a);
    EXPECT_EQ(u.abar, t.abar);
    EXPECT_EQ(u.bhat, t.bhat);
    EXPECT_EQ(u.alpha, t.alpha);
    EXPECT_EQ(u.betahat, t.betahat);
  }
}

TEST(TableauIo, RoundTripWrk) {
  for (const auto& t : {srkw1_tableau(0), srkw2_tableau()}) {
    std::ostringstream o;
    write_tableau(o, t);
    std::istringstream in(o.str());
    const auto u = parse_wrk_tableau(in);
    EXPECT_EQ(u.single_noise, t.single_noise);
    EXPECT_EQ(u.a0, t.a0);
    EXPECT_EQ(u.b0, t.b0);
    EXPECT_EQ(u.a1, t.a1);
    EXPECT_EQ(u.b1, t.b1);
    EXPECT_EQ(u.alpha, t.alpha);
    EXPECT_EQ(u.beta, t.beta);
  }
}

TEST(TableauIo, HandWrittenFile) {
  std::istringstream in(kMidpoint);
  const auto t = parse_sprk_tableau(in, "mid");
  EXPECT_EQ(t.name, "mid");
  EXPECT_TRUE(check_sprk_symplectic_conditions(t, 1e-15).pass);
}

TEST(TableauIo, ShippedFilesMatchBuiltins) {
  const std::string dir = SDHA_DATA_DIR "/tableaus/";
  EXPECT_EQ(load_sprk_tableau(dir + "midpoint.sprk").a, midpoint_tableau().a);
  EXPECT_EQ(load_sprk_tableau(dir + "stormer_verlet.sprk").abar, stormer_verlet_tableau().abar);
  EXPECT_EQ(load_sprk_tableau(dir + "dirk_0.5.sprk").a, dirk_tableau(0.5).a);
  EXPECT_EQ(load_wrk_tableau(dir + "srkw1_0.wrk").a1, srkw1_tableau(0).a1);
  const auto w2 = load_wrk_tableau(dir + "srkw2.wrk");
  EXPECT_TRUE(w2.single_noise);
  EXPECT_EQ(w2.b0, srkw2_tableau().b0);
  EXPECT_THROW(load_sprk_tableau(dir + "missing.sprk"), ParseError);
}

TEST(TableauIo, ErrorsCarryLineNumbers) {
  EXPECT_NE(parse_error("s = 1\na\n0.5 0.5\n").find("t.sprk:3:"), std::string::npos);
  EXPECT_NE(parse_error("s = x\n").find("t.sprk:1:"), std::string::npos);
  EXPECT_NE(parse_error("a\n0.5\n").find("t.sprk:1:"), std::string::npos);
  EXPECT_NE(parse_error("s = 1\nfoo = 2\n").find("t.sprk:2: unknown header key"), std::string::npos);
  EXPECT_NE(parse_error("s = 1\na\n0.5\na\n").find("t.sprk:4: duplicate"), std::string::npos);
  EXPECT_NE(parse_error("s = 1\n0.5\n").find("t.sprk:2:"), std::string::npos);
  EXPECT_NE(parse_error("s = 1\na\n0.5q\n").find("bad number"), std::string::npos);
  EXPECT_NE(parse_error("s = 1\na\n0.5\n").find("missing block 'abar'"), std::string::npos);
  EXPECT_NE(parse_error("").find("missing 's"), std::string::npos);
}

TEST(TableauIo, NoiseHeader) {
  EXPECT_NE(parse_error("s = 1\nnoise = many\n", true).find("t.wrk:2:"), std::string::npos);
  EXPECT_NE(parse_error(std::string("noise = single\n") + kMidpoint).find("only valid for weak"), std::string::npos);
  std::ostringstream o;
  write_tableau(o, srkw1_tableau(0));
  const std::string text = "noise = any\n" + o.str();
  std::istringstream in(text);
  EXPECT_FALSE(parse_wrk_tableau(in).single_noise);
}
