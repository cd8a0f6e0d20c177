#include <doctest.h>

#include <sstream>

#include "stopclock/csv.hpp"
#include "stopclock/errors.hpp"

using namespace stopclock;

TEST_CASE("reader handles quotes, doubled quotes and embedded newlines") {
  std::istringstream in("a,b,c\n1,\"x,y\",\"he said \"\"hi\"\"\"\n2,\"two\nlines\",\n");
  csv::Reader r(in);
  std::vector<std::string> f;
  REQUIRE(r.next(f));
  CHECK(f == std::vector<std::string>{"a", "b", "c"});
  CHECK(r.line() == 1);
  REQUIRE(r.next(f));
  CHECK(f == std::vector<std::string>{"1", "x,y", "he said \"hi\""});
  CHECK(r.line() == 2);
  REQUIRE(r.next(f));
  CHECK(f == std::vector<std::string>{"2", "two\nlines", ""});
  CHECK(r.line() == 3);
  CHECK_FALSE(r.next(f));
}

TEST_CASE("reader accepts CRLF line endings") {
  std::istringstream in("a,b\r\n1,2\r\n");
  csv::Reader r(in);
  std::vector<std::string> f;
  REQUIRE(r.next(f));
  REQUIRE(r.next(f));
  CHECK(f == std::vector<std::string>{"1", "2"});
}

TEST_CASE("write_row quotes only when needed and round-trips") {
  const std::vector<std::string> row{"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  std::ostringstream out;
  csv::write_row(out, row);
  CHECK(out.str() == "plain,\"with,comma\",\"with \"\"quote\"\"\",\"multi\nline\",\n");
  std::istringstream in(out.str());
  csv::Reader r(in);
  std::vector<std::string> back;
  REQUIRE(r.next(back));
  CHECK(back == row);
}

TEST_CASE("header lookup and missing columns") {
  const csv::Header h({"x", "y", "z"}, {"z", "x"});
  CHECK(h["x"] == 0);
  CHECK(h["z"] == 2);
  try {
    csv::Header bad({"x", "y"}, {"x", "clock_remaining_s"});
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("clock_remaining_s") != std::string::npos);
  }
}

TEST_CASE("numeric parsing") {
  CHECK(csv::parse_int("42") == 42);
  CHECK(csv::parse_int(" -7 ") == -7);
  CHECK(csv::parse_int("+3") == 3);
  CHECK_FALSE(csv::parse_int("4.5"));
  CHECK_FALSE(csv::parse_int(""));
  CHECK_FALSE(csv::parse_int("abc"));
  CHECK(csv::parse_double("12.5") == 12.5);
  CHECK(csv::parse_double("1e2") == 100.0);
  CHECK_FALSE(csv::parse_double("nan"));
  CHECK_FALSE(csv::parse_double("inf"));
  CHECK_FALSE(csv::parse_double("1.2.3"));
}

TEST_CASE("format_double is shortest round-trip") {
  CHECK(csv::format_double(0.0) == "0");
  CHECK(csv::format_double(-0.0) == "0");
  CHECK(csv::format_double(16.9) == "16.9");
  CHECK(csv::format_double(720.0) == "720");
  for (double v : {0.1, 1.0 / 3.0, 123.456789, 1e-9, 2.5e10}) {
    CHECK(csv::parse_double(csv::format_double(v)) == v);
  }
}
