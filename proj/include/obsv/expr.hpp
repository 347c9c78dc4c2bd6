#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "obsv/errors.hpp"

namespace obsv {

// Scalar arithmetic expressions over the variables t, y, x1..xn, u1..um with
// a closed function whitelist. Systems are declared as data in scenario files
// and parsed into these trees once; evaluation is pure.
//
// Grammar (documented in docs/expression-grammar.md):
//   expr   := term   { ('+'|'-') term }          left associative
//   term   := factor { ('*'|'/') factor }        left associative
//   factor := '-' factor | power                 unary minus binds below '^'
//   power  := atom [ '^' factor ]                right associative
//   atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

enum class ExprFn { Sin, Cos, Exp, Tanh, Abs, Sat };

/// Evaluation environment. Unset slots (y_set=false, null spans) make any
/// reference to the corresponding variable an EvalError rather than a NaN.
struct EvalEnv {
    double t = 0.0;
    bool t_set = true;
    double y = 0.0;
    bool y_set = false;
    const double* x = nullptr;
    int nx = 0;
    const double* u = nullptr;
    int nu = 0;
};

class Expr {
public:
    struct Node {
        enum class Kind { Num, VarT, VarY, VarX, VarU, Neg, Add, Sub, Mul, Div, Pow, Call } kind;
        double num = 0.0;   // Num
        int index = 0;      // VarX / VarU: one-based channel
        ExprFn fn = ExprFn::Sin;
        int a = -1, b = -1; // child slots in the arena
    };

    Expr() = default;

    bool empty() const { return nodes_.empty(); }

    double eval(const EvalEnv& env) const {
        double v = eval_node(root_, env);
        if (!std::isfinite(v))
            throw EvalError("expression produced a non-finite value");
        return v;
    }

    /// Variables referenced by the tree, spelled as in the source ("t", "y", "x2", "u1").
    std::set<std::string> variables() const {
        std::set<std::string> out;
        for (const Node& n : nodes_) {
            switch (n.kind) {
                case Node::Kind::VarT: out.insert("t"); break;
                case Node::Kind::VarY: out.insert("y"); break;
                case Node::Kind::VarX: out.insert("x" + std::to_string(n.index)); break;
                case Node::Kind::VarU: out.insert("u" + std::to_string(n.index)); break;
                default: break;
            }
        }
        return out;
    }

    int max_x_index() const {
        int m = 0;
        for (const Node& n : nodes_)
            if (n.kind == Node::Kind::VarX) m = std::max(m, n.index);
        return m;
    }
    int max_u_index() const {
        int m = 0;
        for (const Node& n : nodes_)
            if (n.kind == Node::Kind::VarU) m = std::max(m, n.index);
        return m;
    }
    bool uses_y() const {
        for (const Node& n : nodes_)
            if (n.kind == Node::Kind::VarY) return true;
        return false;
    }
    bool uses_x(int index) const {
        for (const Node& n : nodes_)
            if (n.kind == Node::Kind::VarX && n.index == index) return true;
        return false;
    }

    std::string to_string() const { return print_node(root_, 0); }

    bool same_structure(const Expr& o) const { return same_node(*this, root_, o, o.root_); }

    static Expr parse(std::string_view src);

private:
    std::vector<Node> nodes_;
    int root_ = -1;

    int add(Node n) {
        nodes_.push_back(n);
        return static_cast<int>(nodes_.size()) - 1;
    }

    double eval_node(int id, const EvalEnv& env) const {
        const Node& n = nodes_[id];
        switch (n.kind) {
            case Node::Kind::Num: return n.num;
            case Node::Kind::VarT:
                if (!env.t_set) throw EvalError("unbound variable t");
                return env.t;
            case Node::Kind::VarY:
                if (!env.y_set) throw EvalError("unbound variable y");
                return env.y;
            case Node::Kind::VarX:
                if (n.index > env.nx) throw EvalError("unbound variable x" + std::to_string(n.index));
                return env.x[n.index - 1];
            case Node::Kind::VarU:
                if (n.index > env.nu) throw EvalError("unbound variable u" + std::to_string(n.index));
                return env.u[n.index - 1];
            case Node::Kind::Neg: return -eval_node(n.a, env);
            case Node::Kind::Add: return eval_node(n.a, env) + eval_node(n.b, env);
            case Node::Kind::Sub: return eval_node(n.a, env) - eval_node(n.b, env);
            case Node::Kind::Mul: return eval_node(n.a, env) * eval_node(n.b, env);
            case Node::Kind::Div: {
                double den = eval_node(n.b, env);
                if (den == 0.0) throw EvalError("division by zero");
                return eval_node(n.a, env) / den;
            }
            case Node::Kind::Pow: {
                double base = eval_node(n.a, env);
                double ex = eval_node(n.b, env);
                if (base < 0.0 && ex != std::rint(ex))
                    throw EvalError("negative base with non-integer exponent");
                double v = std::pow(base, ex);
                if (!std::isfinite(v)) throw EvalError("power out of range");
                return v;
            }
            case Node::Kind::Call: {
                double a = eval_node(n.a, env);
                switch (n.fn) {
                    case ExprFn::Sin: return std::sin(a);
                    case ExprFn::Cos: return std::cos(a);
                    case ExprFn::Exp: {
                        double v = std::exp(a);
                        if (!std::isfinite(v)) throw EvalError("exp overflow");
                        return v;
                    }
                    case ExprFn::Tanh: return std::tanh(a);
                    case ExprFn::Abs: return std::abs(a);
                    case ExprFn::Sat: return a < -1.0 ? -1.0 : (a > 1.0 ? 1.0 : a);
                }
                throw EvalError("unknown function");
            }
        }
        throw EvalError("corrupt expression tree");
    }

    // Precedence levels for printing: 0 add, 1 mul, 2 unary, 3 pow, 4 atom.
    static int prec(const Node& n) {
        switch (n.kind) {
            case Node::Kind::Add:
            case Node::Kind::Sub: return 0;
            case Node::Kind::Mul:
            case Node::Kind::Div: return 1;
            case Node::Kind::Neg: return 2;
            case Node::Kind::Pow: return 3;
            default: return 4;
        }
    }

    std::string print_node(int id, int parent_prec) const {
        const Node& n = nodes_[id];
        std::string s;
        switch (n.kind) {
            case Node::Kind::Num: {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.17g", n.num);
                s = buf;
                break;
            }
            case Node::Kind::VarT: s = "t"; break;
            case Node::Kind::VarY: s = "y"; break;
            case Node::Kind::VarX: s = "x" + std::to_string(n.index); break;
            case Node::Kind::VarU: s = "u" + std::to_string(n.index); break;
            case Node::Kind::Neg: s = "-" + print_node(n.a, 2); break;
            case Node::Kind::Add: s = print_node(n.a, 0) + " + " + print_node(n.b, 1); break;
            case Node::Kind::Sub: s = print_node(n.a, 0) + " - " + print_node(n.b, 1); break;
            case Node::Kind::Mul: s = print_node(n.a, 1) + "*" + print_node(n.b, 2); break;
            case Node::Kind::Div: s = print_node(n.a, 1) + "/" + print_node(n.b, 2); break;
            case Node::Kind::Pow: s = print_node(n.a, 4) + "^" + print_node(n.b, 3); break;
            case Node::Kind::Call: {
                const char* name = "";
                switch (n.fn) {
                    case ExprFn::Sin: name = "sin"; break;
                    case ExprFn::Cos: name = "cos"; break;
                    case ExprFn::Exp: name = "exp"; break;
                    case ExprFn::Tanh: name = "tanh"; break;
                    case ExprFn::Abs: name = "abs"; break;
                    case ExprFn::Sat: name = "sat"; break;
                }
                return std::string(name) + "(" + print_node(n.a, 0) + ")";
            }
        }
        if (prec(n) < parent_prec) return "(" + s + ")";
        return s;
    }

    static bool same_node(const Expr& ea, int a, const Expr& eb, int b) {
        const Node& na = ea.nodes_[a];
        const Node& nb = eb.nodes_[b];
        if (na.kind != nb.kind) return false;
        switch (na.kind) {
            case Node::Kind::Num: return na.num == nb.num;
            case Node::Kind::VarT:
            case Node::Kind::VarY: return true;
            case Node::Kind::VarX:
            case Node::Kind::VarU: return na.index == nb.index;
            case Node::Kind::Neg:
            case Node::Kind::Call:
                return (na.kind != Node::Kind::Call || na.fn == nb.fn) &&
                       same_node(ea, na.a, eb, nb.a);
            default:
                return same_node(ea, na.a, eb, nb.a) && same_node(ea, na.b, eb, nb.b);
        }
    }

    friend class ExprParser;
};

class ExprParser {
public:
    explicit ExprParser(std::string_view src) : src_(src) {}

    Expr run() {
        Expr e;
        skip_ws();
        if (pos_ >= src_.size())
            throw ParseError(pos_, "empty expression");
        e.root_ = parse_expr(e);
        skip_ws();
        if (pos_ < src_.size())
            throw ParseError(pos_, std::string("unexpected character '") + src_[pos_] + "'");
        return e;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    bool peek_is(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }
    bool consume(char c) {
        if (peek_is(c)) { ++pos_; return true; }
        return false;
    }

    int parse_expr(Expr& e) {
        int lhs = parse_term(e);
        for (;;) {
            if (consume('+')) {
                int rhs = parse_term(e);
                lhs = e.add({Expr::Node::Kind::Add, 0, 0, ExprFn::Sin, lhs, rhs});
            } else if (consume('-')) {
                int rhs = parse_term(e);
                lhs = e.add({Expr::Node::Kind::Sub, 0, 0, ExprFn::Sin, lhs, rhs});
            } else {
                return lhs;
            }
        }
    }

    int parse_term(Expr& e) {
        int lhs = parse_factor(e);
        for (;;) {
            if (consume('*')) {
                int rhs = parse_factor(e);
                lhs = e.add({Expr::Node::Kind::Mul, 0, 0, ExprFn::Sin, lhs, rhs});
            } else if (consume('/')) {
                int rhs = parse_factor(e);
                lhs = e.add({Expr::Node::Kind::Div, 0, 0, ExprFn::Sin, lhs, rhs});
            } else {
                return lhs;
            }
        }
    }

    int parse_factor(Expr& e) {
        if (consume('-')) {
            int a = parse_factor(e);
            return e.add({Expr::Node::Kind::Neg, 0, 0, ExprFn::Sin, a, -1});
        }
        return parse_power(e);
    }

    int parse_power(Expr& e) {
        int base = parse_atom(e);
        if (consume('^')) {
            int ex = parse_factor(e);  // right associative; allows 2^-3
            return e.add({Expr::Node::Kind::Pow, 0, 0, ExprFn::Sin, base, ex});
        }
        return base;
    }

    int parse_atom(Expr& e) {
        skip_ws();
        if (pos_ >= src_.size())
            throw ParseError(pos_, "unexpected end of expression");
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            int inner = parse_expr(e);
            if (!consume(')'))
                throw ParseError(pos_, "expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return parse_number(e);
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
            return parse_ident(e);
        throw ParseError(pos_, std::string("unexpected character '") + c + "'");
    }

    int parse_number(Expr& e) {
        const char* begin = src_.data() + pos_;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin)
            throw ParseError(pos_, "malformed number");
        pos_ += static_cast<std::size_t>(end - begin);
        if (!std::isfinite(v))
            throw ParseError(pos_, "number literal out of range");
        return e.add({Expr::Node::Kind::Num, v, 0, ExprFn::Sin, -1, -1});
    }

    int parse_ident(Expr& e) {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string name(src_.substr(start, pos_ - start));

        if (peek_is('(')) {
            ExprFn fn;
            if (name == "sin") fn = ExprFn::Sin;
            else if (name == "cos") fn = ExprFn::Cos;
            else if (name == "exp") fn = ExprFn::Exp;
            else if (name == "tanh") fn = ExprFn::Tanh;
            else if (name == "abs") fn = ExprFn::Abs;
            else if (name == "sat") fn = ExprFn::Sat;
            else throw ParseError(start, "unknown function '" + name + "'");
            ++pos_;  // '('
            int arg = parse_expr(e);
            if (!consume(')'))
                throw ParseError(pos_, "expected ')' after function argument");
            return e.add({Expr::Node::Kind::Call, 0, 0, fn, arg, -1});
        }

        if (name == "t") return e.add({Expr::Node::Kind::VarT, 0, 0, ExprFn::Sin, -1, -1});
        if (name == "y") return e.add({Expr::Node::Kind::VarY, 0, 0, ExprFn::Sin, -1, -1});
        if ((name[0] == 'x' || name[0] == 'u') && name.size() > 1) {
            bool digits = true;
            for (std::size_t i = 1; i < name.size(); ++i)
                if (!std::isdigit(static_cast<unsigned char>(name[i]))) { digits = false; break; }
            if (digits) {
                int idx = std::atoi(name.c_str() + 1);
                if (idx >= 1) {
                    auto kind = name[0] == 'x' ? Expr::Node::Kind::VarX : Expr::Node::Kind::VarU;
                    return e.add({kind, 0, idx, ExprFn::Sin, -1, -1});
                }
            }
        }
        throw ParseError(start, "unknown identifier '" + name + "'");
    }
};

inline Expr Expr::parse(std::string_view src) { return ExprParser(src).run(); }

}  // namespace obsv
