#include "mswitch/expr.hpp"

#include "mswitch/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

namespace mswitch {

namespace {
constexpr int kMaxStack = 64;
}

class ExpressionParser {
public:
    ExpressionParser(std::string_view src, const VariableSpace& vars, Expression& out)
        : src_(src), vars_(vars), out_(out) {}

    void run() {
        skip_ws();
        if (pos_ >= src_.size()) fail("empty expression");
        parse_expr();
        skip_ws();
        if (pos_ < src_.size()) fail(fmt::format("unexpected '{}'", src_[pos_]));
        if (out_.max_depth_ > kMaxStack) fail("expression nests too deeply");
    }

private:
    using Op = Expression::Op;

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::Parse,
                    fmt::format("column {}: {} in \"{}\"", pos_ + 1, what, src_));
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            if (pos_ >= src_.size()) fail(fmt::format("expected '{}' before end of input", c));
            fail(fmt::format("expected '{}'", c));
        }
    }

    void emit(Op op, std::uint16_t arg = 0, double value = 0.0) {
        out_.code_.push_back({op, arg, value});
        switch (op) {
        case Op::Const: case Op::VarX: case Op::VarY: case Op::VarZ:
            ++depth_;
            break;
        case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: case Op::Pow:
            --depth_;
            break;
        case Op::Min: case Op::Max:
            depth_ -= arg - 1;
            break;
        default:
            break;
        }
        out_.max_depth_ = std::max(out_.max_depth_, depth_);
    }

    void parse_expr() {
        parse_term();
        for (;;) {
            if (accept('+')) {
                parse_term();
                emit(Op::Add);
            } else if (accept('-')) {
                parse_term();
                emit(Op::Sub);
            } else {
                return;
            }
        }
    }

    void parse_term() {
        parse_unary();
        for (;;) {
            if (accept('*')) {
                parse_unary();
                emit(Op::Mul);
            } else if (accept('/')) {
                parse_unary();
                emit(Op::Div);
            } else {
                return;
            }
        }
    }

    void parse_unary() {
        if (accept('-')) {
            parse_unary();
            emit(Op::Neg);
        } else if (accept('+')) {
            parse_unary();
        } else {
            parse_power();
        }
    }

    void parse_power() {
        parse_primary();
        if (accept('^')) {
            parse_unary();
            emit(Op::Pow);
        }
    }

    void parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            parse_number();
        } else if (std::isalpha(static_cast<unsigned char>(c))) {
            parse_identifier();
        } else if (accept('(')) {
            parse_expr();
            expect(')');
        } else {
            fail(fmt::format("unexpected '{}'", c));
        }
    }

    void parse_number() {
        const std::size_t start = pos_;
        auto is_digit = [&](std::size_t p) {
            return p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]));
        };
        while (is_digit(pos_)) ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (is_digit(pos_)) ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
            if (is_digit(p)) {
                pos_ = p;
                while (is_digit(pos_)) ++pos_;
            }
        }
        const std::string_view text = src_.substr(start, pos_ - start);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc() || ptr != text.data() + text.size()) {
            pos_ = start;
            fail(fmt::format("malformed number '{}'", text));
        }
        emit(Op::Const, 0, value);
    }

    void parse_identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        const std::string_view name = src_.substr(start, pos_ - start);

        if (name == "exp" || name == "log" || name == "min" || name == "max") {
            const std::size_t name_pos = start;
            expect('(');
            int arity = 1;
            parse_expr();
            while (accept(',')) {
                parse_expr();
                ++arity;
            }
            expect(')');
            const bool unary = name == "exp" || name == "log";
            if (unary && arity != 1) {
                pos_ = name_pos;
                fail(fmt::format("{} takes exactly one argument", name));
            }
            if (!unary && arity < 2) {
                pos_ = name_pos;
                fail(fmt::format("{} takes at least two arguments", name));
            }
            if (name == "exp") emit(Op::Exp);
            else if (name == "log") emit(Op::Log);
            else emit(name == "min" ? Op::Min : Op::Max, static_cast<std::uint16_t>(arity));
            return;
        }

        const char kind = name.empty() ? '\0' : name.front();
        const std::string_view digits = name.size() > 1 ? name.substr(1) : std::string_view{};
        const bool numeric = !digits.empty() &&
            std::all_of(digits.begin(), digits.end(),
                        [](char d) { return std::isdigit(static_cast<unsigned char>(d)); });
        if ((kind == 'x' || kind == 'y' || kind == 'z') && numeric) {
            int index = 0;
            std::from_chars(digits.data(), digits.data() + digits.size(), index);
            const int limit = kind == 'x' ? vars_.state : kind == 'y' ? vars_.values : vars_.noise;
            if (index < 1 || index > limit) {
                pos_ = start;
                if (limit == 0) fail(fmt::format("variable '{}' is not available here", name));
                fail(fmt::format("variable '{}' out of range ({}1..{}{})", name, kind, kind, limit));
            }
            const auto slot = static_cast<std::uint16_t>(index - 1);
            if (kind == 'x') {
                emit(Op::VarX, slot);
                out_.reads_state_ = true;
            } else if (kind == 'y') {
                emit(Op::VarY, slot);
                out_.value_reads_[slot] = true;
            } else {
                emit(Op::VarZ, slot);
                out_.reads_noise_ = true;
            }
            return;
        }
        pos_ = start;
        fail(fmt::format("unknown identifier '{}'", name));
    }

    std::string_view src_;
    VariableSpace vars_;
    Expression& out_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

Expression Expression::parse(std::string_view source, const VariableSpace& vars) {
    Expression e;
    e.source_ = std::string(source);
    e.value_reads_.assign(static_cast<std::size_t>(std::max(vars.values, 0)), false);
    ExpressionParser(e.source_, vars, e).run();
    return e;
}

Expression Expression::constant(double value) {
    Expression e;
    e.source_ = fmt::format("{}", value);
    e.code_.push_back({Op::Const, 0, value});
    e.max_depth_ = 1;
    return e;
}

bool Expression::reads_value(int j) const noexcept {
    return j >= 0 && static_cast<std::size_t>(j) < value_reads_.size() && value_reads_[j];
}

bool Expression::reads_any_value() const noexcept {
    return std::find(value_reads_.begin(), value_reads_.end(), true) != value_reads_.end();
}

bool Expression::is_constant() const noexcept {
    return !reads_state_ && !reads_noise_ && !reads_any_value();
}

double Expression::eval(std::span<const double> x, std::span<const double> y,
                        std::span<const double> z) const {
    std::array<double, kMaxStack> stack;
    int top = -1;
    for (const Instr& ins : code_) {
        switch (ins.op) {
        case Op::Const: stack[++top] = ins.value; break;
        case Op::VarX: stack[++top] = x[ins.arg]; break;
        case Op::VarY: stack[++top] = y[ins.arg]; break;
        case Op::VarZ: stack[++top] = z[ins.arg]; break;
        case Op::Add: --top; stack[top] += stack[top + 1]; break;
        case Op::Sub: --top; stack[top] -= stack[top + 1]; break;
        case Op::Mul: --top; stack[top] *= stack[top + 1]; break;
        case Op::Div: --top; stack[top] /= stack[top + 1]; break;
        case Op::Pow: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
        case Op::Neg: stack[top] = -stack[top]; break;
        case Op::Exp: stack[top] = std::exp(stack[top]); break;
        case Op::Log: stack[top] = std::log(stack[top]); break;
        case Op::Min:
            for (int k = 1; k < ins.arg; ++k, --top) stack[top - 1] = std::min(stack[top - 1], stack[top]);
            break;
        case Op::Max:
            for (int k = 1; k < ins.arg; ++k, --top) stack[top - 1] = std::max(stack[top - 1], stack[top]);
            break;
        }
    }
    return top == 0 ? stack[0] : 0.0;
}

} // namespace mswitch
