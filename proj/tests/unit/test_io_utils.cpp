#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "moralprobe/csv.hpp"
#include "moralprobe/digest.hpp"
#include "moralprobe/error.hpp"
#include "moralprobe/rng.hpp"

using namespace moralprobe;

TEST(Csv, QuotedFieldsAndBom) {
  const auto t = csv::Table::parse("\xEF\xBB\xBF" "a,b\n\"x, y\",\"he said \"\"hi\"\"\"\n\n3,4\n");
  ASSERT_EQ(t.header(), (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.rows().size(), 2u);
  EXPECT_EQ(t.rows()[0].fields[0], "x, y");
  EXPECT_EQ(t.rows()[0].fields[1], "he said \"hi\"");
  EXPECT_EQ(t.rows()[1].line, 4u);
}

TEST(Csv, EmbeddedNewlineKeepsStartLine) {
  const auto t = csv::Table::parse("a,b\n\"multi\nline\",1\n2,3\n");
  ASSERT_EQ(t.rows().size(), 2u);
  EXPECT_EQ(t.rows()[0].fields[0], "multi\nline");
  EXPECT_EQ(t.rows()[0].line, 2u);
  EXPECT_EQ(t.rows()[1].line, 4u);
}

TEST(Csv, FieldCountMismatchCitesLine) {
  try {
    csv::Table::parse("a,b\n1,2\n3\n", "f.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Csv, EscapeRoundTrip) {
  std::ostringstream os;
  csv::write_row(os, {"h1", "h2", "h3"});
  csv::write_row(os, {"plain", "with,comma", "quote\"d"});
  const auto t = csv::Table::parse(os.str());
  EXPECT_EQ(t.rows()[0].fields, (std::vector<std::string>{"plain", "with,comma", "quote\"d"}));
}

TEST(Csv, NumericConversionRejectsTrailingText) {
  const auto t = csv::Table::parse("v\n1.5\n2x\n");
  EXPECT_DOUBLE_EQ(csv::to_double(t, t.rows()[0], 0), 1.5);
  EXPECT_THROW(csv::to_double(t, t.rows()[1], 0), ParseError);
  EXPECT_THROW(csv::to_integer(t, t.rows()[0], 0), ParseError);
}

TEST(Rng, SameSeedSameStream) {
  CounterRng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
}

TEST(Rng, SplitDoesNotAdvanceParent) {
  CounterRng a(7), b(7);
  (void)a.split("x").next();
  (void)a.split(3).next();
  EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(a.split("x").next(), a.split("y").next());
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  CounterRng r(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, UniformAndNormalMoments) {
  CounterRng r(5);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.01);
  EXPECT_NEAR(sn / n, 0.0, 0.03);
  EXPECT_NEAR(sn2 / n, 1.0, 0.05);
}

TEST(Rng, SampleIndicesDistinct) {
  CounterRng r(9);
  const auto idx = r.sample_indices(50, 20);
  EXPECT_EQ(idx.size(), 20u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 20u);
  for (auto i : idx) EXPECT_LT(i, 50u);
  EXPECT_EQ(r.sample_indices(3, 10).size(), 3u);
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Digest, IncrementalMatchesOneShot) {
  Sha256 h;
  h.update("a").update("b").update("c");
  EXPECT_EQ(h.hex(), sha256_hex("abc"));
}

TEST(Errors, ExitCodesSeparateClasses) {
  const int validation = exit_code_for(ErrorClass::kValidation);
  const int transport = exit_code_for(ErrorClass::kTransport);
  const int degeneracy = exit_code_for(ErrorClass::kDegeneracy);
  EXPECT_NE(validation, 0);
  EXPECT_NE(transport, 0);
  EXPECT_NE(degeneracy, 0);
  EXPECT_NE(validation, transport);
  EXPECT_NE(validation, degeneracy);
  EXPECT_NE(transport, degeneracy);
  EXPECT_EQ(ValidationError("x").error_class(), ErrorClass::kValidation);
}
