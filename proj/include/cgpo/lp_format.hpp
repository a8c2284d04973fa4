#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cgpo/dsl.hpp"  // format_number, ParseError
#include "cgpo/mip.hpp"

namespace cgpo {

/// Deterministic LP-format text for a model. Indicator constraints are
/// lowered to big-M rows and SOS2 groups to their binary formulation, so any
/// LP-format-reading solver can consume the file. Variables are exported as
/// x<id> in declaration order.
inline std::string export_lp(const MipModel& model) {
    if (!model.products.empty())
        throw ModelError("bilinear product constraints cannot be written in LP format");
    MipModel m = model;  // lower on a copy
    lower_indicators(m);
    lower_sos2(m);

    std::ostringstream os;
    auto vname = [](int id) { return "x" + std::to_string(id); };
    auto emit_terms = [&](const std::map<int, double>& coef, double constant) {
        bool first = true;
        for (const auto& [v, c] : coef) {
            if (first) {
                os << (c < 0 ? "- " : "");
                first = false;
            } else {
                os << (c < 0 ? " - " : " + ");
            }
            os << format_number(std::abs(c)) << " " << vname(v);
        }
        if (constant != 0.0 || first) {
            if (!first) os << (constant < 0 ? " - " : " + ");
            else if (constant < 0) os << "- ";
            os << format_number(std::abs(constant));
        }
    };

    os << (m.obj_sense == ObjSense::Min ? "Minimize" : "Maximize") << "\n obj: ";
    emit_terms(m.objective.coef, m.objective.constant);
    os << "\nSubject To\n";
    for (size_t i = 0; i < m.cons.size(); ++i) {
        const LinCon& c = m.cons[i];
        os << " c" << i << ": ";
        emit_terms(c.coef, 0.0);
        os << (c.sense == Sense::Le ? " <= " : c.sense == Sense::Ge ? " >= " : " = ")
           << format_number(c.rhs) << "\n";
    }
    os << "Bounds\n";
    for (size_t v = 0; v < m.vars.size(); ++v) {
        if (m.vars[v].type == VarType::Bin) continue;
        const Interval& b = m.vars[v].bounds;
        if (b.is_point())
            os << " " << vname(static_cast<int>(v)) << " = " << format_number(b.lo) << "\n";
        else
            os << " " << format_number(b.lo) << " <= " << vname(static_cast<int>(v))
               << " <= " << format_number(b.hi) << "\n";
    }
    bool any = false;
    for (size_t v = 0; v < m.vars.size(); ++v)
        if (m.vars[v].type == VarType::Int) {
            if (!any) { os << "Generals\n"; any = true; }
            os << " " << vname(static_cast<int>(v)) << "\n";
        }
    any = false;
    for (size_t v = 0; v < m.vars.size(); ++v)
        if (m.vars[v].type == VarType::Bin) {
            if (!any) { os << "Binaries\n"; any = true; }
            os << " " << vname(static_cast<int>(v)) << "\n";
        }
    os << "End\n";
    return os.str();
}

namespace detail {

struct LpLexer {
    std::string src;
    size_t pos = 0;
    int line = 1, col = 1;

    void skip_space() {
        while (pos < src.size()) {
            char c = src[pos];
            if (c == '\\') {  // comment to end of line
                while (pos < src.size() && src[pos] != '\n') ++pos;
            } else if (c == '\n') {
                ++line; col = 1; ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++col; ++pos;
            } else {
                break;
            }
        }
    }

    bool eof() { skip_space(); return pos >= src.size(); }

    char peek_char() { skip_space(); return pos < src.size() ? src[pos] : '\0'; }

    std::string next_word() {
        skip_space();
        size_t start = pos;
        while (pos < src.size() && !std::isspace(static_cast<unsigned char>(src[pos])) &&
               src[pos] != ':' && src[pos] != '+' && src[pos] != '-' && src[pos] != '<' &&
               src[pos] != '>' && src[pos] != '=' && src[pos] != '\\')
            ++pos;
        col += static_cast<int>(pos - start);
        return src.substr(start, pos - start);
    }

    char next_char() {
        skip_space();
        char c = pos < src.size() ? src[pos++] : '\0';
        ++col;
        return c;
    }
};

inline bool lp_is_number(const std::string& w) {
    if (w.empty()) return false;
    char c = w[0];
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.';
}

inline std::string lp_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace detail

/// Parse the documented LP subset (as produced by export_lp, plus common
/// keyword spellings). Variables appearing without explicit bounds default
/// to [0, 1e30].
inline MipModel parse_lp(const std::string& text) {
    detail::LpLexer lex{text};
    MipModel m;
    std::map<std::string, int> ids;
    const double kInf = 1e30;
    auto var_of = [&](const std::string& name) {
        auto it = ids.find(name);
        if (it != ids.end()) return it->second;
        int id = m.add_var(name, VarType::Cont, Interval(0.0, kInf));
        ids[name] = id;
        return id;
    };

    auto read_number = [&]() {
        double sign = 1.0;
        while (true) {
            char c = lex.peek_char();
            if (c == '+') { lex.next_char(); }
            else if (c == '-') { lex.next_char(); sign = -sign; }
            else break;
        }
        std::string w = lex.next_word();
        if (!detail::lp_is_number(w))
            throw ParseError("expected number, got '" + w + "'", lex.line, lex.col);
        return sign * std::stod(w);
    };

    // expression: signed terms until a sense token or section keyword
    auto read_expr = [&](LinExpr& e, std::string& stop) {
        stop.clear();
        double pending_sign = 1.0;
        bool have_sign = false;
        while (!lex.eof()) {
            char c = lex.peek_char();
            if (c == '+') { lex.next_char(); pending_sign = have_sign ? pending_sign : 1.0; have_sign = true; continue; }
            if (c == '-') { lex.next_char(); pending_sign = have_sign ? -pending_sign : -1.0; have_sign = true; continue; }
            if (c == '<' || c == '>' || c == '=') {
                stop = lex.next_char() == '<' ? "<=" : (c == '>' ? ">=" : "=");
                if (lex.peek_char() == '=') lex.next_char();
                return;
            }
            std::string w = lex.next_word();
            if (w.empty()) throw ParseError("unexpected character in expression", lex.line, lex.col);
            std::string lw = detail::lp_lower(w);
            if (lw == "subject" || lw == "st" || lw == "s.t." || lw == "bounds" ||
                lw == "generals" || lw == "general" || lw == "gen" || lw == "binaries" ||
                lw == "binary" || lw == "bin" || lw == "end" || lw == "minimize" ||
                lw == "maximize" || lw == "min" || lw == "max") {
                stop = lw;
                return;
            }
            double coef = have_sign ? pending_sign : 1.0;
            if (detail::lp_is_number(w)) {
                double num = std::stod(w) * coef;
                // a number may be a coefficient of the next variable or a constant
                char nc = lex.peek_char();
                if (std::isalpha(static_cast<unsigned char>(nc)) || nc == '_') {
                    std::string vn = lex.next_word();
                    std::string lv = detail::lp_lower(vn);
                    if (lv == "subject" || lv == "end") {  // "… + 5 End" edge
                        e.constant += num;
                        stop = lv;
                        return;
                    }
                    e.add(var_of(vn), num);
                } else {
                    e.constant += num;
                }
            } else {
                e.add(var_of(w), coef);
            }
            pending_sign = 1.0;
            have_sign = false;
        }
    };

    // objective
    std::string w = detail::lp_lower(lex.next_word());
    ObjSense sense;
    if (w == "minimize" || w == "min") sense = ObjSense::Min;
    else if (w == "maximize" || w == "max") sense = ObjSense::Max;
    else throw ParseError("expected Minimize/Maximize", lex.line, lex.col);
    // optional label
    {
        size_t save = lex.pos;
        std::string lbl = lex.next_word();
        if (lex.peek_char() == ':') lex.next_char();
        else { lex.pos = save; (void)lbl; }
    }
    LinExpr obj;
    std::string stop;
    read_expr(obj, stop);
    m.set_objective(sense, obj);
    if (stop != "subject" && stop != "st" && stop != "s.t.")
        throw ParseError("expected Subject To after objective", lex.line, lex.col);
    if (stop == "subject") {
        std::string to = detail::lp_lower(lex.next_word());
        if (to != "to") throw ParseError("expected 'To'", lex.line, lex.col);
    }

    // constraints
    std::string section = "cons";
    while (section == "cons") {
        if (lex.eof()) throw ParseError("unterminated LP file", lex.line, lex.col);
        // optional "name:"
        size_t save = lex.pos;
        int sl = lex.line, sc = lex.col;
        std::string maybe = lex.next_word();
        std::string name;
        if (lex.peek_char() == ':') { lex.next_char(); name = maybe; }
        else { lex.pos = save; lex.line = sl; lex.col = sc; }
        LinExpr e;
        read_expr(e, stop);
        if (stop == "<=" || stop == ">=" || stop == "=") {
            double rhs = read_number();
            m.add_con(e, stop == "<=" ? Sense::Le : stop == ">=" ? Sense::Ge : Sense::Eq,
                      rhs, name);
        } else if (!e.coef.empty() || e.constant != 0.0) {
            throw ParseError("constraint without relation", lex.line, lex.col);
        } else {
            section = stop;
        }
    }

    // bounds / integrality sections
    while (section != "end") {
        if (section == "bounds") {
            while (true) {
                if (lex.eof()) throw ParseError("unterminated Bounds", lex.line, lex.col);
                size_t save = lex.pos;
                int sl = lex.line, sc = lex.col;
                char c = lex.peek_char();
                if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                    std::string first = lex.next_word();
                    std::string lw = detail::lp_lower(first);
                    if (lw == "generals" || lw == "general" || lw == "gen" ||
                        lw == "binaries" || lw == "binary" || lw == "bin" || lw == "end") {
                        section = lw;
                        break;
                    }
                    // "x = v" or "x <= v" or "x free"
                    int id = var_of(first);
                    char n = lex.peek_char();
                    if (n == '=' || n == '<' || n == '>') {
                        std::string op;
                        op += lex.next_char();
                        if (lex.peek_char() == '=') lex.next_char();
                        std::string fw = lex.next_word();
                        if (detail::lp_lower(fw) == "free") {
                            m.vars[id].bounds = Interval(-kInf, kInf);
                        } else {
                            lex.pos -= fw.size();
                            double v = read_number();
                            Interval b = m.vars[id].bounds;
                            if (op[0] == '=') b = Interval(v);
                            else if (op[0] == '<') b = Interval(std::min(b.lo, v), v);
                            else b = Interval(v, std::max(b.hi, v));
                            m.vars[id].bounds = b;
                        }
                    } else {
                        std::string fw = lex.next_word();
                        if (detail::lp_lower(fw) != "free")
                            throw ParseError("bad bounds line", lex.line, lex.col);
                        m.vars[id].bounds = Interval(-kInf, kInf);
                    }
                } else {
                    // "lo <= x <= hi"
                    (void)save; (void)sl; (void)sc;
                    double lo = read_number();
                    char n = lex.next_char();
                    if (n != '<') throw ParseError("expected <= in bounds", lex.line, lex.col);
                    if (lex.peek_char() == '=') lex.next_char();
                    int id = var_of(lex.next_word());
                    n = lex.next_char();
                    if (n != '<') throw ParseError("expected <= in bounds", lex.line, lex.col);
                    if (lex.peek_char() == '=') lex.next_char();
                    double hi = read_number();
                    m.vars[id].bounds = Interval(lo, hi);
                }
            }
        } else if (section == "generals" || section == "general" || section == "gen" ||
                   section == "binaries" || section == "binary" || section == "bin") {
            bool binary = section[0] == 'b';
            while (true) {
                if (lex.eof()) throw ParseError("unterminated section", lex.line, lex.col);
                std::string nm = lex.next_word();
                std::string lw = detail::lp_lower(nm);
                if (lw == "bounds" || lw == "generals" || lw == "general" || lw == "gen" ||
                    lw == "binaries" || lw == "binary" || lw == "bin" || lw == "end") {
                    section = lw;
                    break;
                }
                int id = var_of(nm);
                if (binary) {
                    m.vars[id].type = VarType::Bin;
                    m.vars[id].bounds = intersect(m.vars[id].bounds, Interval(0, 1));
                } else {
                    m.vars[id].type = VarType::Int;
                }
            }
        } else {
            throw ParseError("unknown section '" + section + "'", lex.line, lex.col);
        }
    }
    return m;
}

}  // namespace cgpo
