#include "mswitch/error.hpp"
#include "mswitch/expr.hpp"

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

using mswitch::Error;
using mswitch::ErrorKind;
using mswitch::Expression;
using mswitch::VariableSpace;

namespace {

double eval(const std::string& src, std::vector<double> x = {}, std::vector<double> y = {},
            std::vector<double> z = {}) {
    const auto e = Expression::parse(src, {static_cast<int>(x.size()), static_cast<int>(y.size()),
                                           static_cast<int>(z.size())});
    return e.eval(x, y, z);
}

ErrorKind parse_error(const std::string& src, const VariableSpace& vars = {1, 2, 1}) {
    try {
        Expression::parse(src, vars);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Io;
}

} // namespace

TEST_CASE("arithmetic precedence and associativity") {
    CHECK(eval("1 + 2 * 3") == 7.0);
    CHECK(eval("(1 + 2) * 3") == 9.0);
    CHECK(eval("2 ^ 3 ^ 2") == 512.0);
    CHECK(eval("-2 ^ 2") == -4.0);
    CHECK(eval("8 / 4 / 2") == 1.0);
    CHECK(eval("1 - 2 - 3") == -4.0);
    CHECK(eval("2 ^ -1") == 0.5);
    CHECK(eval("1.5e2 + .5") == 150.5);
}

TEST_CASE("variables and functions") {
    CHECK(eval("x1 + 2*x2", {1.0, 3.0}) == 7.0);
    CHECK(eval("y1 - y2 + z1", {0.0}, {5.0, 2.0}, {0.25}) == 3.25);
    CHECK(eval("max(x1, 0)", {-2.0}) == 0.0);
    CHECK(eval("min(3, x1, 1)", {2.0}) == 1.0);
    CHECK(eval("exp(log(x1))", {7.0}) == doctest::Approx(7.0));
}

TEST_CASE("read sets drive coupling inference") {
    const auto e = Expression::parse("x1 + 0*y2", {1, 3, 1});
    CHECK(e.reads_value(1));
    CHECK_FALSE(e.reads_value(0));
    CHECK(e.reads_any_value());
    CHECK_FALSE(e.reads_noise());
    CHECK(e.reads_state());
    CHECK(Expression::parse("3", {1, 1, 1}).is_constant());
    CHECK(Expression::parse("z1", {1, 1, 1}).reads_noise());
}

TEST_CASE("malformed input is rejected with the column") {
    CHECK(parse_error("1 +") == ErrorKind::Parse);
    CHECK(parse_error("x3") == ErrorKind::Parse);
    CHECK(parse_error("y3") == ErrorKind::Parse);
    CHECK(parse_error("sin(x1)") == ErrorKind::Parse);
    CHECK(parse_error("exp(1, 2)") == ErrorKind::Parse);
    CHECK(parse_error("max(1)") == ErrorKind::Parse);
    CHECK(parse_error("(1 + 2") == ErrorKind::Parse);
    CHECK(parse_error("1 2") == ErrorKind::Parse);
    CHECK(parse_error("") == ErrorKind::Parse);
    try {
        Expression::parse("x1 + $", {1, 0, 0});
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("column 6") != std::string::npos);
    }
}
