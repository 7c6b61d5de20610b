#include "acip/expr.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <type_traits>
#include <vector>

#include "acip/error.hpp"

namespace acip {

struct Expression::Node {
    enum class Kind { Const, Var, Neg, Add, Sub, Mul, Div, Pow, Call1, Call2 };
    Kind kind = Kind::Const;
    double value = 0.0;
    std::string fn;
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        NodePtr n = sum();
        skip();
        if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorCode::ExpressionError, "map1d", msg + " at offset " + std::to_string(pos_));
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr sum() {
        NodePtr n = product();
        for (;;) {
            if (accept('+')) n = make(Kind::Add, n, product());
            else if (accept('-')) n = make(Kind::Sub, n, product());
            else return n;
        }
    }
    NodePtr product() {
        NodePtr n = unary();
        for (;;) {
            if (accept('*')) n = make(Kind::Mul, n, unary());
            else if (accept('/')) n = make(Kind::Div, n, unary());
            else return n;
        }
    }
    NodePtr unary() {
        if (accept('-')) return make(Kind::Neg, unary());
        if (accept('+')) return unary();
        return power();
    }
    NodePtr power() {
        NodePtr base = atom();
        if (accept('^')) return make(Kind::Pow, base, unary());
        return base;
    }
    NodePtr atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        char c = s_[pos_];
        if (accept('(')) {
            NodePtr n = sum();
            expect(')');
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s_.substr(pos_), &used);
            } catch (const std::exception&) {
                fail("malformed number");
            }
            pos_ += used;
            auto n = std::make_shared<Expression::Node>();
            n->kind = Kind::Const;
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            std::string id = s_.substr(start, pos_ - start);
            if (id == "x") return make(Kind::Var);
            if (id == "pi" || id == "e") {
                auto n = std::make_shared<Expression::Node>();
                n->kind = Kind::Const;
                n->value = id == "pi" ? std::numbers::pi : std::numbers::e;
                return n;
            }
            static const std::vector<std::string> unary_fns = {"sin", "cos", "exp", "log", "sqrt", "abs", "floor", "tanh"};
            static const std::vector<std::string> binary_fns = {"min", "max", "pow"};
            for (const auto& f : unary_fns) {
                if (f == id) {
                    expect('(');
                    NodePtr arg = sum();
                    expect(')');
                    auto n = std::make_shared<Expression::Node>();
                    n->kind = Kind::Call1;
                    n->fn = id;
                    n->a = arg;
                    return n;
                }
            }
            for (const auto& f : binary_fns) {
                if (f == id) {
                    expect('(');
                    NodePtr a1 = sum();
                    expect(',');
                    NodePtr a2 = sum();
                    expect(')');
                    auto n = std::make_shared<Expression::Node>();
                    n->kind = Kind::Call2;
                    n->fn = id;
                    n->a = a1;
                    n->b = a2;
                    return n;
                }
            }
            pos_ = start;
            fail("unknown identifier '" + id + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

double apply1(const std::string& f, double v) {
    if (f == "sin") return std::sin(v);
    if (f == "cos") return std::cos(v);
    if (f == "exp") return std::exp(v);
    if (f == "log") return std::log(v);
    if (f == "sqrt") return std::sqrt(v);
    if (f == "abs") return std::fabs(v);
    if (f == "floor") return std::floor(v);
    return std::tanh(v);
}
Jet apply1(const std::string& f, const Jet& v) {
    if (f == "sin") return sin(v);
    if (f == "cos") return cos(v);
    if (f == "exp") return exp(v);
    if (f == "log") return log(v);
    if (f == "sqrt") return sqrt(v);
    if (f == "abs") return fabs(v);
    if (f == "floor") return floor(v);
    return tanh(v);
}
double apply2(const std::string& f, double a, double b) {
    if (f == "min") return b < a ? b : a;
    if (f == "max") return b > a ? b : a;
    return std::pow(a, b);
}
Jet apply2(const std::string& f, const Jet& a, const Jet& b) {
    if (f == "min") return fmin(a, b);
    if (f == "max") return fmax(a, b);
    return pow(a, b);
}

bool is_constant(const Expression::Node& n) {
    switch (n.kind) {
        case Kind::Const: return true;
        case Kind::Var: return false;
        default:
            return (!n.a || is_constant(*n.a)) && (!n.b || is_constant(*n.b));
    }
}

double lift_const(double v, double) { return v; }
Jet lift_const(double v, const Jet& x) { return Jet(v, x.order()); }

template <class T>
T eval_node(const Expression::Node& n, const T& x) {
    switch (n.kind) {
        case Kind::Const: return lift_const(n.value, x);
        case Kind::Var: return x;
        case Kind::Neg: return -eval_node(*n.a, x);
        case Kind::Add: return eval_node(*n.a, x) + eval_node(*n.b, x);
        case Kind::Sub: return eval_node(*n.a, x) - eval_node(*n.b, x);
        case Kind::Mul: return eval_node(*n.a, x) * eval_node(*n.b, x);
        case Kind::Div: return eval_node(*n.a, x) / eval_node(*n.b, x);
        case Kind::Pow: {
            T base = eval_node(*n.a, x);
            if (is_constant(*n.b)) {
                double e = eval_node(*n.b, 0.0);
                if constexpr (std::is_same_v<T, double>) return std::pow(base, e);
                else return pow(base, e);
            }
            return apply2("pow", base, eval_node(*n.b, x));
        }
        case Kind::Call1: return apply1(n.fn, eval_node(*n.a, x));
        case Kind::Call2: return apply2(n.fn, eval_node(*n.a, x), eval_node(*n.b, x));
    }
    return x;
}

}  // namespace

Expression Expression::parse(const std::string& text) {
    Expression e;
    e.text_ = text;
    e.root_ = Parser(text).parse();
    return e;
}

double Expression::eval(double x) const { return eval_node<double>(*root_, x); }
Jet Expression::eval(const Jet& x) const { return eval_node<Jet>(*root_, x); }

}  // namespace acip
