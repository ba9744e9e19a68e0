#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "thermocrn/format.hpp"
#include "thermocrn/network.hpp"

namespace thermocrn {

struct ParseError : std::runtime_error {
    int line;
    int col;
    ParseError(int l, int c, const std::string& msg)
        : std::runtime_error("line " + std::to_string(l) + ", col " + std::to_string(c) + ": " + msg),
          line(l),
          col(c) {}
};

namespace detail {

/// Tokenizing cursor over one logical line.
struct Cursor {
    std::string_view s;
    size_t pos = 0;
    int line = 0;

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\r')) ++pos;
    }
    int col() const { return static_cast<int>(pos) + 1; }
    bool at_end() {
        skip_ws();
        return pos >= s.size();
    }
    char peek() {
        skip_ws();
        return pos < s.size() ? s[pos] : '\0';
    }
    bool try_eat(std::string_view tok) {
        skip_ws();
        if (s.substr(pos, tok.size()) == tok) {
            // directives must end at a word boundary
            if (tok.front() == '@' && pos + tok.size() < s.size()) {
                const char next = s[pos + tok.size()];
                if (std::isalnum(static_cast<unsigned char>(next)) || next == '_') return false;
            }
            pos += tok.size();
            return true;
        }
        return false;
    }
    void expect(std::string_view tok) {
        if (!try_eat(tok)) fail("expected '" + std::string(tok) + "'");
    }
    [[noreturn]] void fail(const std::string& msg) { throw ParseError(line, col(), msg); }

    bool ident_start(char c) const { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }

    std::string ident() {
        skip_ws();
        if (pos >= s.size() || !ident_start(s[pos])) fail("expected identifier");
        size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        return std::string(s.substr(start, pos - start));
    }

    double number() {
        skip_ws();
        const char* begin = s.data() + pos;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) fail("expected number");
        pos += static_cast<size_t>(end - begin);
        return v;
    }

    long long integer() {
        skip_ws();
        const char* begin = s.data() + pos;
        char* end = nullptr;
        const long long v = std::strtoll(begin, &end, 10);
        if (end == begin) fail("expected integer");
        pos += static_cast<size_t>(end - begin);
        return v;
    }
};

struct PendingIo {
    int line = 0;
    int col = 0;
    double k = 0.0;
    bool present = false;
};

/// Key = value list between braces, e.g. { kf = 2, kb = 1, gas = (0,0,0) }.
struct KvList {
    std::map<std::string, double> scalars;
    std::map<std::string, ActivationModel> tuples;
    int line = 0;

    double need(Cursor& cur, const std::string& key) const {
        auto it = scalars.find(key);
        if (it == scalars.end()) cur.fail("missing key '" + key + "'");
        return it->second;
    }
    double need_positive(Cursor& cur, const std::string& key) const {
        const double v = need(cur, key);
        if (!(v > 0.0)) cur.fail("nonpositive parameter '" + key + "'");
        return v;
    }
};

inline KvList parse_kv(Cursor& cur) {
    KvList kv;
    kv.line = cur.line;
    cur.expect("{");
    if (!cur.try_eat("}")) {
        while (true) {
            const std::string key = cur.ident();
            cur.expect("=");
            if (cur.peek() == '(') {
                cur.expect("(");
                ActivationModel m;
                m.a = cur.number();
                cur.expect(",");
                m.b = cur.number();
                cur.expect(",");
                m.c = cur.number();
                cur.expect(")");
                kv.tuples[key] = m;
            } else {
                kv.scalars[key] = cur.number();
            }
            if (cur.try_eat("}")) break;
            cur.expect(",");
        }
    }
    if (!cur.at_end()) cur.fail("trailing input after '}'");
    return kv;
}

inline Complex parse_complex(Cursor& cur, const NetworkSpec& spec) {
    Complex c;
    cur.skip_ws();
    // A lone "0" is the zero complex.
    if (cur.pos < cur.s.size() && cur.s[cur.pos] == '0') {
        size_t save = cur.pos;
        ++cur.pos;
        cur.skip_ws();
        if (cur.pos >= cur.s.size() || !cur.ident_start(cur.s[cur.pos])) return c;
        cur.pos = save;
    }
    while (true) {
        long long coeff = 1;
        cur.skip_ws();
        if (cur.pos < cur.s.size() && std::isdigit(static_cast<unsigned char>(cur.s[cur.pos]))) {
            coeff = cur.integer();
            if (coeff <= 0) cur.fail("stoichiometric coefficient must be positive");
        }
        const int id_col = cur.col();
        const std::string name = cur.ident();
        const int idx = spec.species_index(name);
        if (idx < 0) throw ParseError(cur.line, id_col, "unknown species '" + name + "'");
        c.add(idx, static_cast<int>(coeff));
        if (!cur.try_eat("+")) break;
    }
    return c;
}

}  // namespace detail

/// Parses the network input language. Reactions are normalized to the
/// chemical / mass-flux / heat-exchange block order with reversible pairs
/// adjacent, forward member first.
inline NetworkSpec parse_network(std::string_view text) {
    NetworkSpec spec;

    struct RawCr {
        Reaction fwd;
        Reaction bwd;
        bool paired = false;
    };
    std::vector<RawCr> crs;
    std::vector<detail::PendingIo> ins, outs;
    std::vector<Reaction> heats;
    std::vector<int> io_species_order;

    enum class Section { None, Constants, Species, Reactions } section = Section::None;

    int line_no = 0;
    size_t start = 0;
    while (start <= text.size()) {
        size_t eol = text.find('\n', start);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view raw = text.substr(start, eol - start);
        start = eol + 1;
        ++line_no;

        std::string_view body = raw.substr(0, std::min(raw.size(), raw.find('#')));
        detail::Cursor cur{body, 0, line_no};
        if (cur.at_end()) {
            if (eol == text.size()) break;
            continue;
        }

        if (cur.peek() == '[') {
            if (cur.try_eat("[constants]"))
                section = Section::Constants;
            else if (cur.try_eat("[species]"))
                section = Section::Species;
            else if (cur.try_eat("[reactions]"))
                section = Section::Reactions;
            else
                cur.fail("unknown section header");
            if (!cur.at_end()) cur.fail("trailing input after section header");
            if (eol == text.size()) break;
            continue;
        }

        switch (section) {
            case Section::None: cur.fail("declaration before any section header");
            case Section::Constants: {
                const std::string key = cur.ident();
                cur.expect("=");
                if (key == "kappa") {
                    spec.constants.kappa = cur.number();
                    if (!(spec.constants.kappa > 0.0)) cur.fail("nonpositive parameter 'kappa'");
                } else if (key == "T_env") {
                    const double v = cur.number();
                    if (!(v > 0.0)) cur.fail("nonpositive parameter 'T_env'");
                    spec.T_env = v;
                } else if (key == "energy_mode") {
                    const std::string mode = cur.ident();
                    if (mode == "isolated")
                        spec.energy_mode = EnergyMode::Isolated;
                    else if (mode == "isothermal")
                        spec.energy_mode = EnergyMode::Isothermal;
                    else
                        cur.fail("energy_mode must be isolated or isothermal");
                } else {
                    cur.fail("unknown constant '" + key + "'");
                }
                if (!cur.at_end()) cur.fail("trailing input");
                break;
            }
            case Section::Species: {
                SpeciesThermo sp;
                sp.name = cur.ident();
                if (spec.species_index(sp.name) >= 0) cur.fail("duplicate species '" + sp.name + "'");
                const detail::KvList kv = detail::parse_kv(cur);
                sp.z = kv.need_positive(cur, "z");
                sp.p = kv.need_positive(cur, "p");
                sp.e = kv.need(cur, "e");
                if (sp.e < 0.0) cur.fail("negative parameter 'e'");
                spec.species.push_back(std::move(sp));
                break;
            }
            case Section::Reactions: {
                bool is_in = false;
                bool is_out = false;
                if (cur.try_eat("@out"))
                    is_out = true;
                else if (cur.try_eat("@in"))
                    is_in = true;
                if (is_in || is_out) {
                    const int id_col = cur.col();
                    const std::string name = cur.ident();
                    const int idx = spec.species_index(name);
                    if (idx < 0) throw ParseError(line_no, id_col, "unknown species '" + name + "'");
                    auto& slot = (is_in ? ins : outs);
                    slot.resize(spec.species.size());
                    if (slot[static_cast<size_t>(idx)].present)
                        cur.fail(std::string("duplicate ") + (is_in ? "@in" : "@out") + " for species '" + name + "'");
                    const detail::KvList kv = detail::parse_kv(cur);
                    slot[static_cast<size_t>(idx)] = {line_no, id_col, kv.need_positive(cur, "k"), true};
                    bool seen = false;
                    for (int s : io_species_order) seen |= (s == idx);
                    if (!seen) io_species_order.push_back(idx);
                } else if (cur.try_eat("@heat")) {
                    const detail::KvList kv = detail::parse_kv(cur);
                    Reaction rx;
                    rx.kind = ReactionKind::HE;
                    rx.k = kv.need_positive(cur, "k");
                    rx.line = line_no;
                    heats.push_back(std::move(rx));
                } else {
                    const Complex lhs = detail::parse_complex(cur, spec);
                    const bool rev = cur.try_eat("<->");
                    if (!rev && !cur.try_eat("->")) cur.fail("expected '->' or '<->'");
                    const Complex rhs = detail::parse_complex(cur, spec);
                    if (lhs.is_zero() || rhs.is_zero())
                        throw ParseError(line_no, 1, "zero complex in a chemical reaction; use @in/@out/@heat");
                    if (lhs == rhs) throw ParseError(line_no, 1, "substrate and product complexes coincide");
                    const detail::KvList kv = detail::parse_kv(cur);
                    auto gas_it = kv.tuples.find("gas");
                    if (gas_it == kv.tuples.end()) cur.fail("missing key 'gas'");
                    RawCr rc;
                    rc.paired = rev;
                    rc.fwd.kind = ReactionKind::CR;
                    rc.fwd.substrate = lhs;
                    rc.fwd.product = rhs;
                    rc.fwd.gas = gas_it->second;
                    rc.fwd.line = line_no;
                    if (rev) {
                        rc.fwd.k = kv.need_positive(cur, "kf");
                        rc.bwd.kind = ReactionKind::CR;
                        rc.bwd.substrate = rhs;
                        rc.bwd.product = lhs;
                        rc.bwd.k = kv.need_positive(cur, "kb");
                        auto gb = kv.tuples.find("gasb");
                        rc.bwd.gas = gb == kv.tuples.end() ? gas_it->second : gb->second;
                        rc.bwd.line = line_no;
                    } else {
                        rc.fwd.k = kv.need_positive(cur, "k");
                    }
                    crs.push_back(std::move(rc));
                }
                break;
            }
        }
        if (eol == text.size()) break;
    }

    // Assemble in normalized order: paired CR, unpaired CR, paired IO,
    // unpaired IO, HE.
    for (const auto& rc : crs)
        if (rc.paired) {
            const int f = spec.r();
            spec.reactions.push_back(rc.fwd);
            spec.reactions.push_back(rc.bwd);
            spec.reactions[static_cast<size_t>(f)].pair = f + 1;
            spec.reactions[static_cast<size_t>(f) + 1].pair = f;
        }
    for (const auto& rc : crs)
        if (!rc.paired) spec.reactions.push_back(rc.fwd);

    ins.resize(spec.species.size());
    outs.resize(spec.species.size());
    auto make_io = [&](int idx, bool is_in, double k) {
        Reaction rx;
        rx.kind = is_in ? ReactionKind::IO_IN : ReactionKind::IO_OUT;
        Complex single;
        single.add(idx, 1);
        (is_in ? rx.product : rx.substrate) = single;
        rx.k = k;
        rx.gas = detail::expected_gas(spec, rx);
        return rx;
    };
    for (int pass = 0; pass < 2; ++pass)
        for (int idx : io_species_order) {
            const auto& in = ins[static_cast<size_t>(idx)];
            const auto& out = outs[static_cast<size_t>(idx)];
            const bool paired = in.present && out.present;
            if ((pass == 0) != paired) continue;
            if (paired) {
                const int f = spec.r();
                spec.reactions.push_back(make_io(idx, true, in.k));
                spec.reactions.push_back(make_io(idx, false, out.k));
                spec.reactions[static_cast<size_t>(f)].pair = f + 1;
                spec.reactions[static_cast<size_t>(f) + 1].pair = f;
            } else if (in.present) {
                spec.reactions.push_back(make_io(idx, true, in.k));
            } else {
                spec.reactions.push_back(make_io(idx, false, out.k));
            }
        }
    for (Reaction& rx : heats) {
        rx.gas = detail::expected_gas(spec, rx);
        const int j = spec.r();
        rx.pair = j;  // heat exchange reverses itself
        spec.reactions.push_back(rx);
    }

    if (spec.energy_mode == EnergyMode::Isothermal && (spec.r_io() > 0 || spec.r_he() > 0)) {
        int bad_line = 0;
        for (const auto& rx : spec.reactions)
            if (rx.kind != ReactionKind::CR) bad_line = std::max(bad_line, rx.line);
        throw ParseError(bad_line ? bad_line : line_no, 1, "IO/HE reactions are not allowed in isothermal mode");
    }
    if ((spec.energy_mode == EnergyMode::Isothermal || spec.r_io() > 0 || spec.r_he() > 0) && !spec.T_env)
        throw ParseError(line_no, 1, "T_env required");

    return spec;
}

inline NetworkSpec parse_network_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_network(ss.str());
}

namespace detail {

inline std::string complex_text(const Complex& c, const NetworkSpec& spec) {
    if (c.is_zero()) return "0";
    std::string out;
    for (size_t t = 0; t < c.terms.size(); ++t) {
        if (t) out += " + ";
        if (c.terms[t].second != 1) out += std::to_string(c.terms[t].second) + " ";
        out += spec.species[static_cast<size_t>(c.terms[t].first)].name;
    }
    return out;
}

inline std::string gas_text(const ActivationModel& g) {
    return "(" + format_g17(g.a) + ", " + format_g17(g.b) + ", " + format_g17(g.c) + ")";
}

}  // namespace detail

/// Renders a spec back into the input language; parse(to_text(s)) == s.
inline std::string to_text(const NetworkSpec& spec) {
    std::string out = "[constants]\n";
    out += "kappa = " + format_g17(spec.constants.kappa) + "\n";
    if (spec.T_env) out += "T_env = " + format_g17(*spec.T_env) + "\n";
    out += std::string("energy_mode = ") + (spec.energy_mode == EnergyMode::Isolated ? "isolated" : "isothermal") +
           "\n\n[species]\n";
    for (const auto& sp : spec.species)
        out += sp.name + " { z = " + format_g17(sp.z) + ", p = " + format_g17(sp.p) + ", e = " + format_g17(sp.e) +
               " }\n";
    out += "\n[reactions]\n";
    for (int j = 0; j < spec.r(); ++j) {
        const Reaction& rx = spec.reactions[static_cast<size_t>(j)];
        switch (rx.kind) {
            case ReactionKind::CR:
                if (rx.pair > j) {
                    const Reaction& back = spec.reactions[static_cast<size_t>(rx.pair)];
                    out += detail::complex_text(rx.substrate, spec) + " <-> " +
                           detail::complex_text(rx.product, spec) + " { kf = " + format_g17(rx.k) +
                           ", kb = " + format_g17(back.k) + ", gas = " + detail::gas_text(rx.gas);
                    if (!(back.gas == rx.gas)) out += ", gasb = " + detail::gas_text(back.gas);
                    out += " }\n";
                } else if (rx.pair < 0) {
                    out += detail::complex_text(rx.substrate, spec) + " -> " + detail::complex_text(rx.product, spec) +
                           " { k = " + format_g17(rx.k) + ", gas = " + detail::gas_text(rx.gas) + " }\n";
                }
                break;
            case ReactionKind::IO_IN:
                out += "@in " + spec.species[static_cast<size_t>(rx.product.terms[0].first)].name +
                       " { k = " + format_g17(rx.k) + " }\n";
                break;
            case ReactionKind::IO_OUT:
                out += "@out " + spec.species[static_cast<size_t>(rx.substrate.terms[0].first)].name +
                       " { k = " + format_g17(rx.k) + " }\n";
                break;
            case ReactionKind::HE: out += "@heat { k = " + format_g17(rx.k) + " }\n"; break;
        }
    }
    return out;
}

}  // namespace thermocrn
