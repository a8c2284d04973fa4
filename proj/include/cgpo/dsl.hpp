#pragma once

#include <cctype>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgpo/domain.hpp"
#include "cgpo/expr.hpp"

namespace cgpo {

struct ParseError : std::runtime_error {
    int line, col;
    ParseError(const std::string& msg, int line_, int col_)
        : std::runtime_error(msg + " at line " + std::to_string(line_) + ", col " +
                             std::to_string(col_)),
          line(line_), col(col_) {}
};

// ---- printing ---------------------------------------------------------

inline std::string format_number(double v) {
    if (v == 0.0) v = 0.0;  // drop the sign of negative zero
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // prefer the short form when it round-trips
    char shortbuf[40];
    std::snprintf(shortbuf, sizeof(shortbuf), "%g", v);
    double back;
    std::sscanf(shortbuf, "%lf", &back);
    return back == v ? std::string(shortbuf) : std::string(buf);
}

namespace detail {

inline int precedence_of(const Expr& e) {
    switch (e.kind) {
        case ExprKind::Or: return 1;
        case ExprKind::And: return 2;
        case ExprKind::Not: return 3;
        case ExprKind::Cmp: return 4;
        case ExprKind::Add: case ExprKind::Sub: return 5;
        case ExprKind::Mul: case ExprKind::Div: return 6;
        case ExprKind::Neg: return 7;
        case ExprKind::Pow: return 8;
        default: return 9;  // atoms and function calls
    }
}

inline void print_expr_rec(const Expr& e, std::ostream& os, int parent_prec) {
    int prec = precedence_of(e);
    bool paren = prec < parent_prec;
    if (paren) os << "(";
    auto binop = [&](const char* op, int p) {
        print_expr_rec(*e.kids[0], os, p);
        os << " " << op << " ";
        print_expr_rec(*e.kids[1], os, p + 1);
    };
    auto call = [&](const char* fn) {
        os << fn << "(";
        for (size_t i = 0; i < e.kids.size(); ++i) {
            if (i) os << ", ";
            print_expr_rec(*e.kids[i], os, 0);
        }
        os << ")";
    };
    switch (e.kind) {
        case ExprKind::Const: os << format_number(e.value); break;
        case ExprKind::Var: os << e.name; break;
        case ExprKind::Add: binop("+", prec); break;
        case ExprKind::Sub: binop("-", prec); break;
        case ExprKind::Mul: binop("*", prec); break;
        case ExprKind::Div: binop("/", prec); break;
        case ExprKind::Neg:
            os << "-";
            print_expr_rec(*e.kids[0], os, prec + 1);
            break;
        case ExprKind::Min: call("min"); break;
        case ExprKind::Max: call("max"); break;
        case ExprKind::Abs: call("abs"); break;
        case ExprKind::Clip:
            os << "clip(";
            print_expr_rec(*e.kids[0], os, 0);
            os << ", " << format_number(e.clip_lo) << ", " << format_number(e.clip_hi) << ")";
            break;
        case ExprKind::IfThenElse: call("if"); break;
        case ExprKind::Cmp: {
            const char* op = "<=";
            switch (e.cmp) {
                case CmpOp::Le: op = "<="; break;
                case CmpOp::Lt: op = "<"; break;
                case CmpOp::Ge: op = ">="; break;
                case CmpOp::Gt: op = ">"; break;
                case CmpOp::Eq: op = "=="; break;
                case CmpOp::Ne: op = "!="; break;
            }
            print_expr_rec(*e.kids[0], os, prec + 1);
            os << " " << op << " ";
            print_expr_rec(*e.kids[1], os, prec + 1);
            break;
        }
        case ExprKind::And: binop("and", prec); break;
        case ExprKind::Or: binop("or", prec); break;
        case ExprKind::Not:
            os << "not ";
            print_expr_rec(*e.kids[0], os, prec);
            break;
        case ExprKind::Pow:
            print_expr_rec(*e.kids[0], os, prec + 1);
            os << " ^ " << e.exponent;
            break;
        case ExprKind::Cos: call("cos"); break;
        case ExprKind::Sin: call("sin"); break;
        case ExprKind::Exp: call("exp"); break;
    }
    if (paren) os << ")";
}

}  // namespace detail

inline std::string print_expr(const Expr& e) {
    std::ostringstream os;
    detail::print_expr_rec(e, os, 0);
    return os.str();
}
inline std::string print_expr(const ExprPtr& e) { return print_expr(*e); }

inline std::string print_domain(const DcMdp& m) {
    std::ostringstream os;
    os << "domain " << m.name << " {\n";
    os << "  horizon " << m.horizon << ";\n";
    auto kind_name = [](VarKind k) {
        return k == VarKind::Real ? "real" : k == VarKind::Int ? "int" : "bool";
    };
    for (const auto& v : m.states)
        os << "  state " << v.name << ": " << kind_name(v.kind) << " in ["
           << format_number(v.bounds.lo) << ", " << format_number(v.bounds.hi) << "];\n";
    for (const auto& v : m.actions)
        os << "  action " << v.name << ": " << kind_name(v.kind) << " in ["
           << format_number(v.bounds.lo) << ", " << format_number(v.bounds.hi) << "];\n";
    for (const auto& [n, dist] : m.noises) {
        os << "  noise " << n << " ~ ";
        switch (dist.kind) {
            case NoiseDist::Kind::DiscreteUniform:
                os << "uniform_int(" << dist.lo << ", " << dist.hi << ")";
                break;
            case NoiseDist::Kind::Normal:
                os << "normal(" << format_number(dist.mean) << ", "
                   << format_number(dist.variance) << ")";
                break;
            case NoiseDist::Kind::Degenerate:
                os << "const(" << format_number(dist.value) << ")";
                break;
        }
        os << ";\n";
    }
    for (const auto& v : m.states) {
        const Interval& iv = m.init.at(v.name);
        os << "  init " << v.name << " in [" << format_number(iv.lo) << ", "
           << format_number(iv.hi) << "];\n";
    }
    for (const auto& v : m.states)
        os << "  next(" << v.name << ") = " << print_expr(m.transitions.at(v.name)) << ";\n";
    os << "  reward = " << print_expr(m.reward) << ";\n";
    os << "}\n";
    return os.str();
}

// ---- lexing / parsing -------------------------------------------------

namespace detail {

struct Token {
    enum class Type { Ident, Number, Punct, End };
    Type type = Type::End;
    std::string text;
    double number = 0.0;
    int line = 1, col = 1;
};

class Lexer {
  public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

  private:
    void advance() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '\n') { ++line_; col_ = 1; ++pos_; }
            else if (std::isspace(static_cast<unsigned char>(c))) { ++col_; ++pos_; }
            else if (c == '#') { while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_; }
            else break;
        }
        tok_ = Token{};
        tok_.line = line_;
        tok_.col = col_;
        if (pos_ >= src_.size()) { tok_.type = Token::Type::End; return; }
        char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            if (pos_ < src_.size() && src_[pos_] == '\'') ++pos_;  // next-state marker
            tok_.type = Token::Type::Ident;
            tok_.text = src_.substr(start, pos_ - start);
            col_ += static_cast<int>(pos_ - start);
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
                    src_[pos_] == 'e' || src_[pos_] == 'E' ||
                    ((src_[pos_] == '+' || src_[pos_] == '-') &&
                     (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E'))))
                ++pos_;
            tok_.type = Token::Type::Number;
            tok_.text = src_.substr(start, pos_ - start);
            tok_.number = std::stod(tok_.text);
            col_ += static_cast<int>(pos_ - start);
            return;
        }
        // punctuation, two-char operators first
        static const char* two[] = {"<=", ">=", "==", "!="};
        for (const char* op : two) {
            if (src_.compare(pos_, 2, op) == 0) {
                tok_.type = Token::Type::Punct;
                tok_.text = op;
                pos_ += 2;
                col_ += 2;
                return;
            }
        }
        tok_.type = Token::Type::Punct;
        tok_.text = std::string(1, c);
        ++pos_;
        ++col_;
    }

    const std::string& src_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;
    Token tok_;
};

/// Recursive-descent expression parser over a role-resolving scope.
class ExprParser {
  public:
    using Scope = std::function<ExprPtr(const std::string&, int line, int col)>;

    ExprParser(Lexer& lex, Scope scope) : lex_(lex), scope_(std::move(scope)) {}

    ExprPtr parse() { return parse_or(); }

  private:
    [[noreturn]] void fail(const std::string& msg) {
        throw ParseError(msg, lex_.peek().line, lex_.peek().col);
    }
    bool at_punct(const char* p) {
        return lex_.peek().type == Token::Type::Punct && lex_.peek().text == p;
    }
    bool at_ident(const char* s) {
        return lex_.peek().type == Token::Type::Ident && lex_.peek().text == s;
    }
    void expect(const char* p) {
        if (!at_punct(p)) fail(std::string("expected '") + p + "'");
        lex_.next();
    }

    ExprPtr parse_or() {
        ExprPtr e = parse_and();
        while (at_ident("or")) {
            lex_.next();
            e = lor(e, parse_and());
        }
        return e;
    }
    ExprPtr parse_and() {
        ExprPtr e = parse_not();
        while (at_ident("and")) {
            lex_.next();
            e = land(e, parse_not());
        }
        return e;
    }
    ExprPtr parse_not() {
        if (at_ident("not")) {
            lex_.next();
            return lnot(parse_not());
        }
        return parse_cmp();
    }
    ExprPtr parse_cmp() {
        ExprPtr e = parse_additive();
        static const std::pair<const char*, CmpOp> ops[] = {
            {"<=", CmpOp::Le}, {"<", CmpOp::Lt}, {">=", CmpOp::Ge},
            {">", CmpOp::Gt}, {"==", CmpOp::Eq}, {"!=", CmpOp::Ne}};
        for (const auto& [p, op] : ops) {
            if (at_punct(p)) {
                lex_.next();
                return cmp(op, e, parse_additive());
            }
        }
        return e;
    }
    ExprPtr parse_additive() {
        ExprPtr e = parse_multiplicative();
        while (at_punct("+") || at_punct("-")) {
            bool plus = at_punct("+");
            lex_.next();
            ExprPtr rhs = parse_multiplicative();
            e = plus ? add(e, rhs) : sub(e, rhs);
        }
        return e;
    }
    ExprPtr parse_multiplicative() {
        ExprPtr e = parse_unary();
        while (at_punct("*") || at_punct("/")) {
            bool times = at_punct("*");
            lex_.next();
            ExprPtr rhs = parse_unary();
            e = times ? mul(e, rhs) : div(e, rhs);
        }
        return e;
    }
    ExprPtr parse_unary() {
        if (at_punct("-")) {
            lex_.next();
            ExprPtr e = parse_unary();
            // fold negated literals so "-0.5" round-trips as a constant
            if (e->kind == ExprKind::Const) return constant(-e->value);
            return neg(e);
        }
        return parse_power();
    }
    ExprPtr parse_power() {
        ExprPtr e = parse_primary();
        if (at_punct("^")) {
            lex_.next();
            if (lex_.peek().type != Token::Type::Number) fail("expected integer exponent");
            Token t = lex_.next();
            double n = t.number;
            if (n < 0 || n != std::floor(n)) throw ParseError("exponent must be a nonnegative integer", t.line, t.col);
            return pow_int(e, static_cast<int>(n));
        }
        return e;
    }
    ExprPtr parse_primary() {
        const Token& t = lex_.peek();
        if (t.type == Token::Type::Number) return constant(lex_.next().number);
        if (at_punct("(")) {
            lex_.next();
            ExprPtr e = parse_or();
            expect(")");
            return e;
        }
        if (t.type == Token::Type::Ident) {
            Token id = lex_.next();
            if (at_punct("(")) {
                lex_.next();
                std::vector<ExprPtr> args;
                if (!at_punct(")")) {
                    args.push_back(parse_or());
                    while (at_punct(",")) {
                        lex_.next();
                        args.push_back(parse_or());
                    }
                }
                expect(")");
                auto need = [&](size_t n) {
                    if (args.size() != n)
                        throw ParseError(id.text + " expects " + std::to_string(n) + " arguments",
                                         id.line, id.col);
                };
                if (id.text == "min") { need(2); return emin(args[0], args[1]); }
                if (id.text == "max") { need(2); return emax(args[0], args[1]); }
                if (id.text == "abs") { need(1); return eabs(args[0]); }
                if (id.text == "cos") { need(1); return ecos(args[0]); }
                if (id.text == "sin") { need(1); return esin(args[0]); }
                if (id.text == "exp") { need(1); return eexp(args[0]); }
                if (id.text == "if") { need(3); return ite(args[0], args[1], args[2]); }
                if (id.text == "clip") {
                    need(3);
                    auto bound = [&](const ExprPtr& e) {
                        if (e->kind != ExprKind::Const)
                            throw ParseError("clip bounds must be constants", id.line, id.col);
                        return e->value;
                    };
                    return clip(args[0], bound(args[1]), bound(args[2]));
                }
                throw ParseError("unknown function " + id.text, id.line, id.col);
            }
            return scope_(id.text, id.line, id.col);
        }
        fail("expected expression");
    }

    Lexer& lex_;
    Scope scope_;
};

}  // namespace detail

/// Parse a standalone expression; `scope` resolves identifiers to variables.
inline ExprPtr parse_expr(const std::string& text, detail::ExprParser::Scope scope) {
    detail::Lexer lex(text);
    detail::ExprParser p(lex, std::move(scope));
    ExprPtr e = p.parse();
    if (lex.peek().type != detail::Token::Type::End)
        throw ParseError("trailing input after expression", lex.peek().line, lex.peek().col);
    return e;
}

/// Resolve identifiers against a domain's declarations (primed = next-state).
inline detail::ExprParser::Scope domain_scope(const DcMdp& m, bool allow_primed) {
    return [&m, allow_primed](const std::string& name, int line, int col) -> ExprPtr {
        bool is_primed = !name.empty() && name.back() == '\'';
        std::string base = is_primed ? name.substr(0, name.size() - 1) : name;
        if (is_primed) {
            if (!allow_primed || !m.find_state(base))
                throw ParseError("next-state variable " + name + " not allowed here", line, col);
            return var(name, VarRole::State);
        }
        if (m.find_state(base)) return var(base, VarRole::State);
        if (m.find_action(base)) return var(base, VarRole::Action);
        if (m.find_noise(base)) return var(base, VarRole::Noise);
        throw ParseError("unbound identifier " + name, line, col);
    };
}

inline DcMdp parse_domain(const std::string& text) {
    using detail::Token;
    detail::Lexer lex(text);
    auto expect_punct = [&](const char* p) {
        if (lex.peek().type != Token::Type::Punct || lex.peek().text != p)
            throw ParseError(std::string("expected '") + p + "'", lex.peek().line, lex.peek().col);
        lex.next();
    };
    auto expect_ident = [&](const char* kw) {
        if (lex.peek().type != Token::Type::Ident || lex.peek().text != kw)
            throw ParseError(std::string("expected '") + kw + "'", lex.peek().line, lex.peek().col);
        lex.next();
    };
    auto take_ident = [&]() {
        if (lex.peek().type != Token::Type::Ident)
            throw ParseError("expected identifier", lex.peek().line, lex.peek().col);
        return lex.next().text;
    };
    auto take_number = [&]() {
        bool negate = false;
        if (lex.peek().type == Token::Type::Punct && lex.peek().text == "-") {
            lex.next();
            negate = true;
        }
        if (lex.peek().type != Token::Type::Number)
            throw ParseError("expected number", lex.peek().line, lex.peek().col);
        double v = lex.next().number;
        return negate ? -v : v;
    };
    auto take_interval = [&]() {
        expect_punct("[");
        double lo = take_number();
        expect_punct(",");
        double hi = take_number();
        expect_punct("]");
        if (lo > hi)
            throw ParseError("interval lo > hi", lex.peek().line, lex.peek().col);
        return Interval(lo, hi);
    };

    DcMdp m;
    expect_ident("domain");
    m.name = take_ident();
    expect_punct("{");

    // two passes over declarations are avoided by deferring expression
    // bodies until all variables are known
    std::vector<std::pair<std::string, std::string>> deferred_next;
    std::string deferred_reward;
    auto capture_body = [&](const Token& start) {
        // consume raw tokens up to ';' and re-lex later with full scope
        (void)start;
        std::string body;
        int depth = 0;
        while (true) {
            const Token& t = lex.peek();
            if (t.type == Token::Type::End)
                throw ParseError("unterminated expression", t.line, t.col);
            if (t.type == Token::Type::Punct && t.text == ";" && depth == 0) break;
            if (t.type == Token::Type::Punct && t.text == "(") ++depth;
            if (t.type == Token::Type::Punct && t.text == ")") --depth;
            if (!body.empty()) body += " ";
            body += lex.next().text;
        }
        return body;
    };

    while (!(lex.peek().type == Token::Type::Punct && lex.peek().text == "}")) {
        const Token& t = lex.peek();
        if (t.type != Token::Type::Ident)
            throw ParseError("expected declaration", t.line, t.col);
        std::string kw = lex.next().text;
        if (kw == "horizon") {
            m.horizon = static_cast<int>(take_number());
        } else if (kw == "state" || kw == "action") {
            std::string vname = take_ident();
            expect_punct(":");
            std::string kind = take_ident();
            VarKind k = kind == "real" ? VarKind::Real
                        : kind == "int" ? VarKind::Int
                        : kind == "bool" ? VarKind::Bool
                        : throw ParseError("expected real|int|bool", t.line, t.col);
            Interval bounds = Interval(0, 1);
            if (lex.peek().type == Token::Type::Ident && lex.peek().text == "in") {
                lex.next();
                bounds = take_interval();
            } else if (k != VarKind::Bool) {
                throw ParseError("non-bool variable needs bounds", t.line, t.col);
            }
            VarDecl d{vname, k, bounds};
            (kw == "state" ? m.states : m.actions).push_back(d);
        } else if (kw == "noise") {
            std::string vname = take_ident();
            expect_punct("~");
            std::string dist = take_ident();
            expect_punct("(");
            if (dist == "uniform_int") {
                double l = take_number();
                expect_punct(",");
                double u = take_number();
                m.noises.emplace_back(vname, NoiseDist::discrete_uniform(
                                                 static_cast<long long>(l),
                                                 static_cast<long long>(u)));
            } else if (dist == "normal") {
                double mean = take_number();
                expect_punct(",");
                double varc = take_number();
                m.noises.emplace_back(vname, NoiseDist::normal(mean, varc));
            } else if (dist == "const") {
                m.noises.emplace_back(vname, NoiseDist::degenerate(take_number()));
            } else {
                throw ParseError("unknown distribution " + dist, t.line, t.col);
            }
            expect_punct(")");
        } else if (kw == "init") {
            std::string vname = take_ident();
            expect_ident("in");
            m.init[vname] = take_interval();
        } else if (kw == "next") {
            expect_punct("(");
            std::string vname = take_ident();
            expect_punct(")");
            expect_punct("=");
            deferred_next.emplace_back(vname, capture_body(t));
        } else if (kw == "reward") {
            expect_punct("=");
            deferred_reward = capture_body(t);
        } else {
            throw ParseError("unknown declaration '" + kw + "'", t.line, t.col);
        }
        expect_punct(";");
    }
    expect_punct("}");

    for (const auto& [vname, body] : deferred_next) {
        if (!m.find_state(vname))
            throw ParseError("next() for undeclared state " + vname, 0, 0);
        m.transitions[vname] = parse_expr(body, domain_scope(m, false));
    }
    if (deferred_reward.empty()) throw ParseError("missing reward", 0, 0);
    m.reward = parse_expr(deferred_reward, domain_scope(m, true));
    for (const auto& s : m.states)
        if (!m.init.count(s.name))
            throw ParseError("missing init for state " + s.name, 0, 0);
    try {
        m.validate();
    } catch (const DomainError& e) {
        throw ParseError(e.what(), 0, 0);
    }
    return m;
}

}  // namespace cgpo
