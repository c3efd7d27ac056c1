#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mswitch {

/// Names available to an expression: x1..x{state}, y1..y{values}, z1..z{noise}.
struct VariableSpace {
    int state = 0;
    int values = 0;
    int noise = 0;
};

/// A compiled function spec.
///
/// Grammar (whitespace insignificant):
///
///     expr    := term (('+' | '-') term)*
///     term    := unary (('*' | '/') unary)*
///     unary   := ('-' | '+') unary | power
///     power   := primary ('^' unary)?
///     primary := number | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
///     func    := exp | log | min | max
///
/// `^` is right-associative and binds tighter than unary minus, so `-x1^2`
/// is `-(x1^2)`. exp/log take one argument, min/max two or more. Anything
/// else is rejected with a ParseError naming the 1-based column.
class Expression {
public:
    Expression() = default;

    static Expression parse(std::string_view source, const VariableSpace& vars);
    static Expression constant(double value);

    double eval(std::span<const double> x, std::span<const double> y = {},
                std::span<const double> z = {}) const;

    const std::string& source() const noexcept { return source_; }
    bool empty() const noexcept { return code_.empty(); }

    bool reads_value(int j) const noexcept;  // 0-based
    bool reads_any_value() const noexcept;
    bool reads_noise() const noexcept { return reads_noise_; }
    bool reads_state() const noexcept { return reads_state_; }

    /// True when the expression is a literal constant (no variables).
    bool is_constant() const noexcept;

private:
    enum class Op : std::uint8_t {
        Const, VarX, VarY, VarZ, Add, Sub, Mul, Div, Pow, Neg, Exp, Log, Min, Max
    };
    struct Instr {
        Op op;
        std::uint16_t arg = 0;
        double value = 0.0;
    };
    friend class ExpressionParser;

    std::string source_;
    std::vector<Instr> code_;
    std::vector<bool> value_reads_;
    bool reads_noise_ = false;
    bool reads_state_ = false;
    int max_depth_ = 0;
};

} // namespace mswitch
