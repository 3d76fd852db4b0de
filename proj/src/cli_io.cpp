#include "siad/cli_io.hpp"

#include "siad/errors.hpp"
#include "siad/signal_gen.hpp"

#include "CLI11.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace siad {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Token {
    std::string text;
    int column = 0;
};

/// Whitespace split with 1-based columns; '#' starts a comment.
std::vector<Token> tokenize(const std::string& line) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (line[i] == '#') break;
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != '#' && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
    }
    return out;
}

double parse_number(const Token& t, int line) {
    const char* s = t.text.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || !std::isfinite(v)) {
        throw ParseError(line, t.column, "expected a number, got '" + t.text + "'");
    }
    return v;
}

double parse_positive(const Token& t, int line, const std::string& what) {
    const double v = parse_number(t, line);
    if (!(v > 0.0)) throw ParseError(line, t.column, what + " must be positive, got '" + t.text + "'");
    return v;
}

/// `mag@angle` or `mag∠angle`, angle in radians.
std::pair<double, double> parse_polar(const Token& t, int line) {
    static const std::string angle_sign = "\xE2\x88\xA0";
    std::size_t pos = t.text.find('@');
    std::size_t sep = 1;
    if (pos == std::string::npos) {
        pos = t.text.find(angle_sign);
        sep = angle_sign.size();
    }
    if (pos == std::string::npos) {
        throw ParseError(line, t.column, "expected a phasor 'magnitude@angle', got '" + t.text + "'");
    }
    const Token m{t.text.substr(0, pos), t.column};
    const Token a{t.text.substr(pos + sep), t.column + static_cast<int>(pos + sep)};
    const double mag = parse_number(m, line);
    if (mag < 0.0) throw ParseError(line, m.column, "phasor magnitude must be non-negative");
    return {mag, parse_number(a, line)};
}

void expect_count(const std::vector<Token>& tk, std::size_t n, int line, const std::string& usage) {
    if (tk.size() != n) {
        const int col = tk.size() > n ? tk[n].column : (tk.empty() ? 1 : tk.back().column);
        throw ParseError(line, col, "expected " + std::to_string(n) + " fields: " + usage);
    }
}

constexpr const char* kSourceUsage =
    "VSRC3|ISRC3 <name> <a> <b> <c> balanced <Vpeak> <f0> <phiA> <phiB> <phiC> | "
    "unbalanced <V0@th0> <Vp@thp> <Vn@thn> [f0] | dq0 <Vd> <Vq> <V0> <f0> <theta0>, "
    "optionally followed by step <t> <factor>";

FundamentalSourceSpec parse_source(const std::vector<Token>& tk, int line) {
    if (tk.size() < 6) throw ParseError(line, tk.back().column, std::string("expected ") + kSourceUsage);
    const std::string form = lower(tk[5].text);
    std::size_t used = 0;
    FundamentalSourceSpec s;
    if (form == "balanced") {
        if (tk.size() < 11) throw ParseError(line, tk.back().column, std::string("expected ") + kSourceUsage);
        const double peak = parse_number(tk[6], line);
        if (peak < 0.0) throw ParseError(line, tk[6].column, "peak must be non-negative");
        s = FundamentalSourceSpec::balanced(peak, parse_positive(tk[7], line, "f0"), parse_number(tk[8], line),
                                            parse_number(tk[9], line), parse_number(tk[10], line));
        used = 11;
    } else if (form == "unbalanced") {
        if (tk.size() < 9) throw ParseError(line, tk.back().column, std::string("expected ") + kSourceUsage);
        SequencePhasorSet set;
        for (int k = 0; k < 3; ++k) {
            const auto [m, a] = parse_polar(tk[6 + static_cast<std::size_t>(k)], line);
            set.magnitude[k] = m;
            set.angle[k] = a;
        }
        used = 9;
        double f0 = 50.0;
        if (tk.size() > 9 && lower(tk[9].text) != "step") {
            f0 = parse_positive(tk[9], line, "f0");
            used = 10;
        }
        s = FundamentalSourceSpec::unbalanced(set, f0);
    } else if (form == "dq0") {
        if (tk.size() < 11) throw ParseError(line, tk.back().column, std::string("expected ") + kSourceUsage);
        s = FundamentalSourceSpec::dq0_form(parse_number(tk[6], line), parse_number(tk[7], line),
                                            parse_number(tk[8], line), parse_positive(tk[9], line, "f0"),
                                            parse_number(tk[10], line));
        used = 11;
    } else {
        throw ParseError(line, tk[5].column, "unknown source form '" + tk[5].text + "' (balanced, unbalanced, dq0)");
    }
    if (tk.size() > used) {
        if (lower(tk[used].text) != "step" || tk.size() != used + 3) {
            throw ParseError(line, tk[used].column, std::string("unexpected field; ") + kSourceUsage);
        }
        s.step_time = parse_number(tk[used + 1], line);
        s.step_factor = parse_number(tk[used + 2], line);
    }
    return s;
}

std::string print_source(const FundamentalSourceSpec& s) {
    std::string out;
    using Form = FundamentalSourceSpec::Form;
    const bool equal_peaks = s.peak[0] == s.peak[1] && s.peak[1] == s.peak[2];
    if (s.form == Form::Balanced && equal_peaks) {
        out = "balanced " + num(s.peak[0]) + " " + num(s.f0) + " " + num(s.phase[0]) + " " + num(s.phase[1]) +
              " " + num(s.phase[2]);
    } else if (s.form == Form::Dq0) {
        out = "dq0 " + num(s.dq0.d) + " " + num(s.dq0.q) + " " + num(s.dq0.zero) + " " + num(s.ref.f0) + " " +
              num(s.ref.theta0);
    } else {
        SequencePhasorSet set = s.sequence;
        double f0 = s.f0;
        if (s.form == Form::Balanced) {
            const SequenceSample q = fortescue_forward(s.phasor());
            const cplx v[3] = {q.zero, q.pos, q.neg};
            for (int k = 0; k < 3; ++k) {
                set.magnitude[k] = std::abs(v[k]);
                set.angle[k] = std::arg(v[k]);
            }
        }
        out = "unbalanced";
        for (int k = 0; k < 3; ++k) out += " " + num(set.magnitude[k]) + "@" + num(set.angle[k]);
        out += " " + num(f0);
    }
    if (std::isfinite(s.step_time)) out += " step " + num(s.step_time) + " " + num(s.step_factor);
    return out;
}

const std::array<std::string, 4> kEntryNames = {"dd", "dq", "qd", "qq"};

}  // namespace

// =============================================================================
// Netlists and device files
// =============================================================================

Circuit parse_netlist(const std::string& text, const fs::path& base_dir) {
    Circuit c;
    std::set<std::string> names;
    std::set<std::string> nodes;
    int pos_line = 0;
    std::array<int, 3> pos_cols{};
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        const auto tk = tokenize(raw);
        if (tk.empty()) continue;
        const std::string kw = lower(tk[0].text);
        auto claim_name = [&](const Token& t) {
            if (!names.insert(t.text).second) throw ParseError(line, t.column, "duplicate element name '" + t.text + "'");
        };
        if (kw == "r" || kw == "l" || kw == "c") {
            expect_count(tk, 5, line, tk[0].text + " <name> <nodeA> <nodeB> <value>");
            claim_name(tk[1]);
            const std::string what = kw == "r" ? "resistance" : kw == "l" ? "inductance" : "capacitance";
            const double v = parse_positive(tk[4], line, what);
            if (tk[2].text == tk[3].text) throw ParseError(line, tk[3].column, "element terminals must differ");
            if (kw == "r") c.add_resistor(tk[1].text, tk[2].text, tk[3].text, v);
            if (kw == "l") c.add_inductor(tk[1].text, tk[2].text, tk[3].text, v);
            if (kw == "c") c.add_capacitor(tk[1].text, tk[2].text, tk[3].text, v);
            nodes.insert(tk[2].text);
            nodes.insert(tk[3].text);
        } else if (kw == "sw") {
            expect_count(tk, 5, line, "SW <name> <nodeA> <nodeB> <open|closed>");
            claim_name(tk[1]);
            const std::string st = lower(tk[4].text);
            if (st != "open" && st != "closed") throw ParseError(line, tk[4].column, "switch state must be open or closed");
            if (tk[2].text == tk[3].text) throw ParseError(line, tk[3].column, "element terminals must differ");
            c.add_switch(tk[1].text, tk[2].text, tk[3].text, st == "closed");
            nodes.insert(tk[2].text);
            nodes.insert(tk[3].text);
        } else if (kw == "vsrc3" || kw == "isrc3") {
            if (tk.size() < 5) throw ParseError(line, tk.back().column, std::string("expected ") + kSourceUsage);
            claim_name(tk[1]);
            const std::array<std::string, 3> n{tk[2].text, tk[3].text, tk[4].text};
            const auto spec = parse_source(tk, line);
            if (kw == "vsrc3") c.add_vsource(tk[1].text, n, spec);
            else c.add_isource(tk[1].text, n, spec);
            nodes.insert(n.begin(), n.end());
        } else if (kw == "dev") {
            expect_count(tk, 6, line, "DEV <name> <a> <b> <c> <transfer-function file>");
            claim_name(tk[1]);
            const fs::path file = base_dir.empty() ? fs::path(tk[5].text) : base_dir / tk[5].text;
            std::shared_ptr<const SyntheticDevice> dev;
            try {
                dev = std::make_shared<const SyntheticDevice>(parse_device(read_text_file(file)));
            } catch (const SiadError& e) {
                throw ParseError(line, tk[5].column, "device file '" + tk[5].text + "': " + e.what());
            }
            c.add_device(tk[1].text, {tk[2].text, tk[3].text, tk[4].text}, dev);
            c.elements.back().device_file = tk[5].text;
            nodes.insert({tk[2].text, tk[3].text, tk[4].text});
        } else if (kw == "pos") {
            expect_count(tk, 4, line, "POS <a> <b> <c>");
            if (pos_line) throw ParseError(line, tk[0].column, "duplicate POS (first on line " + std::to_string(pos_line) + ")");
            pos_line = line;
            pos_cols = {tk[1].column, tk[2].column, tk[3].column};
            c.set_pos({tk[1].text, tk[2].text, tk[3].text});
        } else {
            throw ParseError(line, tk[0].column, "unknown keyword '" + tk[0].text + "'");
        }
    }
    if (c.pos) {
        for (int k = 0; k < 3; ++k) {
            const std::string& n = (*c.pos)[static_cast<std::size_t>(k)];
            if (!nodes.count(n)) throw ParseError(pos_line, pos_cols[static_cast<std::size_t>(k)], "POS node '" + n + "' is not connected to any element");
        }
    }
    c.validate();
    return c;
}

Circuit load_netlist(const fs::path& path) {
    return parse_netlist(read_text_file(path), path.parent_path());
}

std::string print_netlist(const Circuit& c) {
    std::string out;
    for (const auto& e : c.elements) {
        switch (e.kind) {
            case ElementKind::Resistor:
            case ElementKind::Inductor:
            case ElementKind::Capacitor: {
                const char* kw = e.kind == ElementKind::Resistor ? "R" : e.kind == ElementKind::Inductor ? "L" : "C";
                out += std::string(kw) + " " + e.name + " " + e.nodes[0] + " " + e.nodes[1] + " " + num(e.value) + "\n";
                break;
            }
            case ElementKind::Switch:
                out += "SW " + e.name + " " + e.nodes[0] + " " + e.nodes[1] + (e.closed ? " closed\n" : " open\n");
                break;
            case ElementKind::VoltageSource3:
            case ElementKind::CurrentSource3:
                out += std::string(e.kind == ElementKind::VoltageSource3 ? "VSRC3 " : "ISRC3 ") + e.name + " " +
                       e.nodes[0] + " " + e.nodes[1] + " " + e.nodes[2] + " " + print_source(e.source) + "\n";
                break;
            case ElementKind::Device:
                out += "DEV " + e.name + " " + e.nodes[0] + " " + e.nodes[1] + " " + e.nodes[2] + " " +
                       (e.device_file.empty() ? e.name + ".dev" : e.device_file) + "\n";
                break;
        }
    }
    if (c.pos) out += "POS " + (*c.pos)[0] + " " + (*c.pos)[1] + " " + (*c.pos)[2] + "\n";
    return out;
}

SyntheticDevice parse_device(const std::string& text) {
    SyntheticDevice d;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        const auto tk = tokenize(raw);
        if (tk.empty()) continue;
        const std::string kw = lower(tk[0].text);
        if (kw == "f0") {
            expect_count(tk, 2, line, "f0 <Hz>");
            d.ref.f0 = parse_positive(tk[1], line, "f0");
        } else if (kw == "theta0") {
            expect_count(tk, 2, line, "theta0 <rad>");
            d.ref.theta0 = parse_number(tk[1], line);
        } else if (kw == "entry") {
            if (tk.size() < 5) throw ParseError(line, tk.back().column, "expected entry <dd|dq|qd|qq> num <c...> den <c...>");
            const auto it = std::find(kEntryNames.begin(), kEntryNames.end(), lower(tk[1].text));
            if (it == kEntryNames.end()) throw ParseError(line, tk[1].column, "unknown entry '" + tk[1].text + "'");
            const auto idx = static_cast<std::size_t>(it - kEntryNames.begin());
            if (lower(tk[2].text) != "num") throw ParseError(line, tk[2].column, "expected 'num'");
            RationalTF tf;
            tf.num.clear();
            tf.den.clear();
            std::size_t k = 3;
            for (; k < tk.size() && lower(tk[k].text) != "den"; ++k) tf.num.push_back(parse_number(tk[k], line));
            if (k == tk.size()) throw ParseError(line, tk.back().column, "expected 'den'");
            const int den_col = tk[k].column;
            for (++k; k < tk.size(); ++k) tf.den.push_back(parse_number(tk[k], line));
            if (tf.num.empty()) throw ParseError(line, tk[2].column, "numerator has no coefficients");
            if (tf.den.empty()) throw ParseError(line, den_col, "denominator has no coefficients");
            try {
                tf.validate();
            } catch (const SiadError& e) {
                throw ParseError(line, tk[1].column, e.what());
            }
            d.y[idx / 2][idx % 2] = tf;
        } else {
            throw ParseError(line, tk[0].column, "unknown keyword '" + tk[0].text + "'");
        }
    }
    d.validate();
    return d;
}

std::string print_device(const SyntheticDevice& d) {
    std::string out = "f0 " + num(d.ref.f0) + "\ntheta0 " + num(d.ref.theta0) + "\n";
    for (std::size_t k = 0; k < 4; ++k) {
        const RationalTF& tf = d.y[k / 2][k % 2];
        out += "entry " + kEntryNames[k] + " num";
        for (double v : tf.num) out += " " + num(v);
        out += " den";
        for (double v : tf.den) out += " " + num(v);
        out += "\n";
    }
    return out;
}

// =============================================================================
// Configs
// =============================================================================

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <class T>
void maybe(const json& j, const std::string& key, T& dst, const std::string& where) {
    if (j.contains(key)) dst = get<T>(j, key, where);
}

std::string zero_sequence_string(ZeroSequence z) {
    return z == ZeroSequence::On ? "on" : z == ZeroSequence::Off ? "off" : "auto";
}

ZeroSequence zero_sequence_from_string(const std::string& s) {
    const auto l = lower(s);
    if (l == "auto") return ZeroSequence::Auto;
    if (l == "on") return ZeroSequence::On;
    if (l == "off") return ZeroSequence::Off;
    throw ConfigError("unknown zero_sequence '" + s + "' (auto, on, off)");
}

LogGrid log_grid_from_json(const json& j, const std::string& where) {
    reject_unknown(j, {"f_min", "f_max", "points"}, where);
    LogGrid g;
    maybe(j, "f_min", g.f_min, where);
    maybe(j, "f_max", g.f_max, where);
    maybe(j, "points", g.points, where);
    if (!(g.f_min > 0.0) || !(g.f_max >= g.f_min) || g.points < 1) throw ConfigError(where + ": invalid log grid");
    return g;
}

std::vector<double> plain_log_grid(const LogGrid& g) {
    std::vector<double> f(static_cast<std::size_t>(g.points));
    for (int k = 0; k < g.points; ++k) {
        const double u = g.points == 1 ? 0.0 : static_cast<double>(k) / (g.points - 1);
        f[static_cast<std::size_t>(k)] = g.f_min * std::pow(g.f_max / g.f_min, u);
    }
    return f;
}

}  // namespace

ScanConfig scan_config_from_json(const json& j) {
    const std::string w = "scan config";
    reject_unknown(j, {"frame", "strategy", "signal", "amplitude_fraction", "amplitude", "frequencies", "log_grid",
                       "settle_time", "window", "dt", "side", "zero_sequence", "prbs", "seed", "overflow_bound",
                       "steady_state_tolerance", "phasor_init", "baseline"},
                   w);
    ScanConfig c;
    if (j.contains("frame")) c.frame = frame_from_string(get<std::string>(j, "frame", w));
    if (j.contains("strategy")) c.strategy = strategy_from_string(get<std::string>(j, "strategy", w));
    if (j.contains("signal")) c.signal = signal_family_from_string(get<std::string>(j, "signal", w));
    maybe(j, "amplitude_fraction", c.amplitude_fraction, w);
    if (j.contains("amplitude")) c.amplitude = get<double>(j, "amplitude", w);
    maybe(j, "frequencies", c.frequencies, w);
    if (j.contains("log_grid")) c.log_grid = log_grid_from_json(j.at("log_grid"), w + ".log_grid");
    maybe(j, "settle_time", c.settle_time, w);
    if (j.contains("window")) {
        const json& win = j.at("window");
        reject_unknown(win, {"t_start", "t_end"}, w + ".window");
        c.window.t_start = get<double>(win, "t_start", w + ".window");
        c.window.t_end = get<double>(win, "t_end", w + ".window");
    }
    maybe(j, "dt", c.dt, w);
    if (j.contains("side")) c.side = side_from_string(get<std::string>(j, "side", w));
    if (j.contains("zero_sequence")) c.zero_sequence = zero_sequence_from_string(get<std::string>(j, "zero_sequence", w));
    if (j.contains("prbs")) {
        const json& p = j.at("prbs");
        reject_unknown(p, {"register_length", "chip_samples"}, w + ".prbs");
        maybe(p, "register_length", c.prbs_register_length, w + ".prbs");
        maybe(p, "chip_samples", c.prbs_chip_samples, w + ".prbs");
    }
    maybe(j, "seed", c.seed, w);
    maybe(j, "overflow_bound", c.overflow_bound, w);
    maybe(j, "steady_state_tolerance", c.steady_state_tolerance, w);
    maybe(j, "phasor_init", c.phasor_init, w);
    if (j.contains("baseline")) {
        const auto b = lower(get<std::string>(j, "baseline", w));
        if (b != "rebuilt" && b != "coupled") throw ConfigError(w + ": baseline must be rebuilt or coupled");
        c.baseline = b == "rebuilt" ? Baseline::Rebuilt : Baseline::Coupled;
    }
    c.validate();
    return c;
}

json to_json(const ScanConfig& c) {
    json j;
    j["frame"] = to_string(c.frame);
    j["strategy"] = to_string(c.strategy);
    j["signal"] = to_string(c.signal);
    j["amplitude_fraction"] = c.amplitude_fraction;
    if (c.amplitude) j["amplitude"] = *c.amplitude;
    if (!c.frequencies.empty()) j["frequencies"] = c.frequencies;
    if (c.log_grid) j["log_grid"] = {{"f_min", c.log_grid->f_min}, {"f_max", c.log_grid->f_max}, {"points", c.log_grid->points}};
    j["settle_time"] = c.settle_time;
    j["window"] = {{"t_start", c.window.t_start}, {"t_end", c.window.t_end}};
    j["dt"] = c.dt;
    j["side"] = c.side == Side::Left ? "left" : "right";
    j["zero_sequence"] = zero_sequence_string(c.zero_sequence);
    j["prbs"] = {{"register_length", c.prbs_register_length}, {"chip_samples", c.prbs_chip_samples}};
    j["seed"] = c.seed;
    j["overflow_bound"] = c.overflow_bound;
    j["steady_state_tolerance"] = c.steady_state_tolerance;
    j["phasor_init"] = c.phasor_init;
    j["baseline"] = c.baseline == Baseline::Rebuilt ? "rebuilt" : "coupled";
    return j;
}

OracleSpec oracle_spec_from_json(const json& j, const fs::path& base_dir, std::vector<double>* freqs) {
    const std::string w = "oracle config";
    reject_unknown(j, {"kind", "r", "l", "c", "r_load", "f0", "response", "frame", "device", "frequencies",
                       "log_grid", "compare"},
                   w);
    OracleSpec s;
    s.kind = oracle_kind_from_string(get<std::string>(j, "kind", w));
    maybe(j, "r", s.r, w);
    maybe(j, "l", s.l, w);
    maybe(j, "c", s.c, w);
    maybe(j, "r_load", s.r_load, w);
    maybe(j, "f0", s.f0, w);
    if (j.contains("response")) s.response = response_kind_from_string(get<std::string>(j, "response", w));
    if (j.contains("frame")) s.frame = frame_from_string(get<std::string>(j, "frame", w));
    if (j.contains("device")) {
        const fs::path p = base_dir / get<std::string>(j, "device", w);
        s.device = std::make_shared<const SyntheticDevice>(parse_device(read_text_file(p)));
    }
    if (freqs) {
        freqs->clear();
        if (j.contains("frequencies")) *freqs = get<std::vector<double>>(j, "frequencies", w);
        else if (j.contains("log_grid")) *freqs = plain_log_grid(log_grid_from_json(j.at("log_grid"), w + ".log_grid"));
    }
    s.validate();
    return s;
}

json read_json_file(const fs::path& p) {
    const std::string text = read_text_file(p);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

// =============================================================================
// Manifest and CSV
// =============================================================================

json RunManifest::to_json() const {
    json in = json::array();
    for (const auto& [path, sha] : inputs) in.push_back({{"path", path}, {"sha256", sha}});
    return {{"tool", kToolName}, {"version", version}, {"command", command},     {"netlist", netlist},
            {"netlist_sha256", netlist_sha256},        {"config", config},       {"config_sha256", config_sha256},
            {"inputs", in},                            {"out", out},             {"jobs", jobs},
            {"seed", seed}};
}

std::string RunManifest::hash() const { return sha256_hex(to_json().dump()); }

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw NumericalError("sha256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int k = 0; k < len; ++k) {
        out += hex[md[k] >> 4];
        out += hex[md[k] & 15];
    }
    return out;
}

std::string read_text_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + p.string() + "'");
    out << text;
    if (!out) throw ConfigError("write failed for '" + p.string() + "'");
}

namespace {

std::string manifest_lines(const RunManifest* m) {
    if (!m) return {};
    return "# manifest_hash=" + m->hash() + "\n# manifest=" + m->to_json().dump() + "\n";
}

}  // namespace

std::string response_to_csv(const FrequencyResponse& r, const RunManifest* m) {
    std::string out = manifest_lines(m);
    out += "frame,kind,f_hz,row,col,re,im\n";
    const std::string head = to_string(r.frame) + "," + to_string(r.kind) + ",";
    for (std::size_t k = 0; k < r.size(); ++k) {
        const auto& mat = r.matrices[k];
        for (long i = 0; i < mat.rows(); ++i) {
            for (long c = 0; c < mat.cols(); ++c) {
                const cplx v = mat(i, c);
                out += head + num(r.freqs[k]) + "," + r.labels[static_cast<std::size_t>(i)] + "," +
                       r.labels[static_cast<std::size_t>(c)] + "," + num(v.real()) + "," + num(v.imag()) + "\n";
            }
        }
        if (!r.zero_sequence.empty()) {
            out += head + num(r.freqs[k]) + ",0,0," + num(r.zero_sequence[k].real()) + "," +
                   num(r.zero_sequence[k].imag()) + "\n";
        }
    }
    return out;
}

FrequencyResponse response_from_csv(const std::string& text) {
    FrequencyResponse r;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    bool header = false;
    bool any = false;
    std::vector<double> freqs;
    std::vector<std::map<std::pair<std::string, std::string>, cplx>> cells;
    std::vector<std::string> labels;
    auto col_of = [](const std::vector<std::string>& f, std::size_t k) {
        int col = 1;
        for (std::size_t i = 0; i < k; ++i) col += static_cast<int>(f[i].size()) + 1;
        return col;
    };
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (raw.empty() || raw[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ss(raw);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (!header) {
            if (raw != "frame,kind,f_hz,row,col,re,im") throw ParseError(line, 1, "expected header frame,kind,f_hz,row,col,re,im");
            header = true;
            continue;
        }
        if (f.size() != 7) throw ParseError(line, 1, "expected 7 fields");
        const Frame fr = frame_from_string(f[0]);
        const ResponseKind kind = response_kind_from_string(f[1]);
        if (!any) {
            r.frame = fr;
            r.kind = kind;
            any = true;
        } else if (fr != r.frame || kind != r.kind) {
            throw ParseError(line, 1, "frame/kind changes within the file");
        }
        auto number = [&](std::size_t k) { return parse_number({f[k], col_of(f, k)}, line); };
        const double hz = number(2);
        if (freqs.empty() || freqs.back() != hz) {
            if (!freqs.empty() && !(hz > freqs.back())) throw ParseError(line, col_of(f, 2), "frequencies must increase");
            freqs.push_back(hz);
            cells.emplace_back();
        }
        const bool zero_cell = r.frame == Frame::Seq0pn && f[3] == "0" && f[4] == "0";
        if (!zero_cell && freqs.size() == 1 && std::find(labels.begin(), labels.end(), f[3]) == labels.end()) {
            labels.push_back(f[3]);
        }
        cells.back()[{f[3], f[4]}] = cplx(number(5), number(6));
    }
    if (!header) throw ConfigError("response CSV has no header");
    if (freqs.empty()) throw ConfigError("response CSV has no data rows");
    r.freqs = freqs;
    r.labels = labels;
    const long n = static_cast<long>(labels.size());
    bool has_zero = r.frame == Frame::Seq0pn && cells[0].count({"0", "0"});
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        Eigen::MatrixXcd m(n, n);
        for (long i = 0; i < n; ++i) {
            for (long c = 0; c < n; ++c) {
                const auto it = cells[k].find({labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(c)]});
                if (it == cells[k].end()) {
                    throw ConfigError("response CSV: missing entry (" + labels[static_cast<std::size_t>(i)] + "," +
                                      labels[static_cast<std::size_t>(c)] + ") at " + num(freqs[k]) + " Hz");
                }
                m(i, c) = it->second;
            }
        }
        r.matrices.push_back(m);
        if (has_zero) {
            const auto it = cells[k].find({"0", "0"});
            if (it == cells[k].end()) throw ConfigError("response CSV: zero-sequence entry missing at " + num(freqs[k]) + " Hz");
            r.zero_sequence.push_back(it->second);
        }
    }
    r.validate();
    return r;
}

// =============================================================================
// Reports
// =============================================================================

json scan_report(const FrequencyResponse& r, const ScanConfig& cfg, const RunManifest& m) {
    return {{"manifest", m.to_json()},
            {"manifest_hash", m.hash()},
            {"config", to_json(cfg)},
            {"frame", to_string(r.frame)},
            {"kind", to_string(r.kind)},
            {"labels", r.labels},
            {"frequencies_hz", r.freqs},
            {"zero_sequence", r.zero_sequence.empty() ? "absent" : "present"},
            {"notices", r.notices}};
}

namespace {

json passivity_json(const PassivityResult& p) {
    json iv = json::array();
    for (const auto& [a, b] : p.intervals) iv.push_back({a, b});
    const double mn = p.min_eig.empty() ? 0.0 : *std::min_element(p.min_eig.begin(), p.min_eig.end());
    return {{"strictly_passive", p.strictly_passive}, {"boundary", p.boundary}, {"non_passive_intervals_hz", iv},
            {"min_eigenvalue", mn}};
}

}  // namespace

json stability_report(const SystemPair& p, const GncResult& g, const ModalResult& mo, const PhaseMarginResult& pm,
                      const PassivityResult& py1, const std::optional<PassivityResult>& pz2_inv,
                      const RunManifest& m) {
    json gj = {{"stable", g.stable},
               {"total_encirclements", g.total_encirclements},
               {"encirclements", g.encirclements},
               {"uncertain", g.uncertain},
               {"nsm", g.nsm},
               {"nsm_hz", g.nsm_hz},
               {"crossing", g.crossing},
               {"grid_truncated", g.grid_truncated},
               {"notices", g.notices}};
    std::size_t degenerate = 0;
    for (const auto& pt : mo.points) degenerate += pt.degenerate ? 1 : 0;
    json mj = {{"peak_modal_impedance", mo.peak_zm},
               {"peak_hz", mo.peak_hz},
               {"peak_mode", mo.peak_mode},
               {"degenerate_points", degenerate}};
    json ch = json::array();
    for (const auto& c : pm.channels) {
        json cr = json::array();
        for (const auto& x : c.crossings) cr.push_back({{"f_hz", x.f_hz}, {"pm_deg", x.pm_deg}, {"verdict", to_string(x.verdict)}});
        ch.push_back({{"entry", c.label}, {"row", c.row}, {"col", c.col}, {"crossings", cr}});
    }
    json pj = {{"threshold_deg", pm.threshold_deg}, {"channels", ch}, {"notices", pm.notices}};
    json pas = {{"subsystem1_admittance", passivity_json(py1)}};
    if (pz2_inv) pas["subsystem2_admittance"] = passivity_json(*pz2_inv);
    return {{"manifest", m.to_json()},
            {"manifest_hash", m.hash()},
            {"frame", to_string(p.frame)},
            {"frequency_range_hz", {p.freqs.front(), p.freqs.back()}},
            {"points", p.size()},
            {"gnc", gj},
            {"modal", mj},
            {"phase_margin", pj},
            {"passivity", pas}};
}

std::string nyquist_csv(const GncResult& g) {
    std::string out = "f_hz,locus,re,im\n";
    for (std::size_t i = 0; i < g.eigenloci.size(); ++i) {
        for (std::size_t k = 0; k < g.contour_hz.size(); ++k) {
            out += num(g.contour_hz[k]) + "," + std::to_string(i) + "," + num(g.eigenloci[i][k].real()) + "," +
                   num(g.eigenloci[i][k].imag()) + "\n";
        }
    }
    for (std::size_t k = 0; k < g.det_locus.size(); ++k) {
        out += num(g.contour_hz[k]) + ",det," + num(g.det_locus[k].real()) + "," + num(g.det_locus[k].imag()) + "\n";
    }
    return out;
}

std::string bode_csv(const SystemPair& p) {
    std::string out = "f_hz,row,col,y1inv_mag,y1inv_phase_deg,z2_mag,z2_phase_deg\n";
    constexpr double kDeg = 180.0 / 3.14159265358979323846;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const Eigen::MatrixXcd yi = p.y_sys1[k].inverse();
        const auto& z = p.z_sys2[k];
        for (long i = 0; i < z.rows(); ++i) {
            for (long c = 0; c < z.cols(); ++c) {
                out += num(p.freqs[k]) + "," + std::to_string(i) + "," + std::to_string(c) + "," + num(std::abs(yi(i, c))) +
                       "," + num(std::arg(yi(i, c)) * kDeg) + "," + num(std::abs(z(i, c))) + "," +
                       num(std::arg(z(i, c)) * kDeg) + "\n";
            }
        }
    }
    return out;
}

std::string modal_csv(const ModalResult& m) {
    std::string out = "f_hz,mode,lambda_re,lambda_im,zm_abs,dominant_input,participation,degenerate\n";
    for (const auto& pt : m.points) {
        for (long i = 0; i < pt.lambda.size(); ++i) {
            std::string part;
            for (long k = 0; k < pt.participation.rows(); ++k) part += (k ? ";" : "") + num(pt.participation(k, i));
            out += num(pt.f_hz) + "," + std::to_string(i) + "," + num(pt.lambda(i).real()) + "," + num(pt.lambda(i).imag()) +
                   "," + num(std::abs(pt.z_m(i))) + "," + std::to_string(pt.dominant_input[static_cast<std::size_t>(i)]) +
                   "," + part + "," + (pt.degenerate ? "1" : "0") + "\n";
        }
    }
    return out;
}

std::string compare_csv(const CompareResult& c) {
    std::string out = "f_hz,row,col,mag_err,phase_err_deg,floor_only,pass\n";
    for (const auto& r : c.rows) {
        out += num(r.f_hz) + "," + std::to_string(r.row) + "," + std::to_string(r.col) + "," + num(r.mag_err) + "," +
               num(r.phase_err) + "," + (r.floor_only ? "1" : "0") + "," + (r.pass ? "pass" : "fail") + "\n";
    }
    return out;
}

int exit_code_for(const std::exception& e) {
    if (const auto* s = dynamic_cast<const SiadError*>(&e)) {
        switch (s->kind()) {
            case ErrorKind::Config: return 2;
            case ErrorKind::Divergence: return 3;
            case ErrorKind::Numerical: return 4;
        }
    }
    return 4;
}

json error_json(const std::exception& e) {
    std::string kind = "internal";
    if (const auto* s = dynamic_cast<const SiadError*>(&e)) {
        kind = s->kind() == ErrorKind::Config ? "config" : s->kind() == ErrorKind::Divergence ? "divergence" : "numerical";
    }
    json j = {{"error", kind}, {"message", e.what()}, {"exit_code", exit_code_for(e)}};
    if (const auto* p = dynamic_cast<const ParseError*>(&e)) {
        j["line"] = p->line();
        j["column"] = p->column();
    }
    if (const auto* d = dynamic_cast<const DivergenceError*>(&e)) j["time_s"] = d->time();
    return j;
}

// =============================================================================
// Subcommands
// =============================================================================

namespace {

fs::path prepare_out(const std::string& out) {
    const fs::path p(out);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (!fs::is_directory(p)) throw ConfigError("output directory '" + out + "' cannot be created");
    const fs::path probe = p / ".siad_write_probe";
    {
        std::ofstream t(probe);
        if (!t) throw ConfigError("output directory '" + out + "' is not writable");
    }
    fs::remove(probe, ec);
    return p;
}

void require_file(const std::string& path, const std::string& flag) {
    if (path.empty()) throw ConfigError(flag + " is required");
    if (!fs::is_regular_file(path)) throw ConfigError(flag + ": file '" + path + "' not found");
}

RunManifest base_manifest(const std::string& command, const CliOptions& o) {
    RunManifest m;
    m.command = command;
    m.out = o.out;
    m.jobs = o.jobs;
    if (!o.netlist.empty()) {
        m.netlist = o.netlist;
        m.netlist_sha256 = sha256_hex(read_text_file(o.netlist));
    }
    if (!o.config.empty()) {
        m.config = o.config;
        m.config_sha256 = sha256_hex(read_text_file(o.config));
    }
    return m;
}

std::string passivity_csv(const PassivityResult& a, const std::optional<PassivityResult>& b) {
    std::string out = b ? "f_hz,min_eig_y1,min_eig_z2inv\n" : "f_hz,min_eig_y1\n";
    for (std::size_t k = 0; k < a.freqs.size(); ++k) {
        out += num(a.freqs[k]) + "," + num(a.min_eig[k]);
        if (b) out += "," + num(b->min_eig[k]);
        out += "\n";
    }
    return out;
}

}  // namespace

int cmd_scan(const CliOptions& o, std::ostream& log) {
    require_file(o.netlist, "--netlist");
    require_file(o.config, "--config");
    if (o.jobs < 1) throw ConfigError("--jobs must be at least 1");
    const Circuit c = load_netlist(o.netlist);
    ScanConfig cfg = scan_config_from_json(read_json_file(o.config));
    if (o.seed) cfg.seed = *o.seed;
    const fs::path out = prepare_out(o.out);
    RunManifest m = base_manifest("scan", o);
    m.seed = cfg.seed;
    ScanTiming t;
    const FrequencyResponse r = scan(c, cfg, o.jobs, &t);
    write_text_file(out / "response.csv", response_to_csv(r, &m));
    write_text_file(out / "scan_report.json", scan_report(r, cfg, m).dump(2) + "\n");
    for (const auto& n : r.notices) log << "notice: " << n << "\n";
    log << "scan: " << r.size() << " frequencies, " << t.runs << " injection runs, steady state "
        << t.steady_state_s << " s, injections " << t.injection_s << " s\n";
    return 0;
}

int cmd_analyze(const CliOptions& o, std::ostream& log) {
    require_file(o.y_csv, "--y");
    require_file(o.z_csv, "--z");
    double threshold = o.pm_threshold;
    if (!o.config.empty()) {
        require_file(o.config, "--config");
        const json j = read_json_file(o.config);
        reject_unknown(j, {"pm_threshold_deg"}, "analyze config");
        maybe(j, "pm_threshold_deg", threshold, "analyze config");
    }
    const fs::path out = prepare_out(o.out);
    RunManifest m = base_manifest("analyze", o);
    const std::string ytext = read_text_file(o.y_csv);
    const std::string ztext = read_text_file(o.z_csv);
    m.inputs = {{o.y_csv, sha256_hex(ytext)}, {o.z_csv, sha256_hex(ztext)}};
    FrequencyResponse y = response_from_csv(ytext);
    FrequencyResponse z = response_from_csv(ztext);
    if (y.kind == ResponseKind::Impedance) {
        y = invert(y);
        log << "notice: --y holds an impedance; inverted to an admittance\n";
    }
    if (z.kind == ResponseKind::Admittance) {
        z = invert(z);
        log << "notice: --z holds an admittance; inverted to an impedance\n";
    }
    const SystemPair p = make_system_pair(y, z);
    const GncResult g = gnc(p);
    const ModalResult mo = modal(p);
    const PhaseMarginResult pm = phase_margin(p, threshold);
    const PassivityResult py = passivity(p.freqs, p.y_sys1);
    std::vector<Eigen::MatrixXcd> z2inv;
    for (const auto& zz : p.z_sys2) z2inv.push_back(zz.inverse());
    const std::optional<PassivityResult> pz = passivity(p.freqs, z2inv);
    write_text_file(out / "stability_report.json", stability_report(p, g, mo, pm, py, pz, m).dump(2) + "\n");
    const std::string tag = "# manifest_hash=" + m.hash() + "\n";
    write_text_file(out / "nyquist.csv", tag + nyquist_csv(g));
    write_text_file(out / "bode.csv", tag + bode_csv(p));
    write_text_file(out / "modal.csv", tag + modal_csv(mo));
    write_text_file(out / "passivity.csv", tag + passivity_csv(py, pz));
    log << "analyze: " << (g.stable ? "stable" : "unstable") << ", encirclements " << g.total_encirclements
        << ", NSM " << g.nsm << " at " << g.nsm_hz << " Hz\n";
    return g.stable ? 0 : 1;
}

int cmd_oracle(const CliOptions& o, std::ostream& log) {
    require_file(o.config, "--config");
    const json j = read_json_file(o.config);
    std::vector<double> freqs;
    OracleSpec spec = oracle_spec_from_json(j, fs::path(o.config).parent_path(), &freqs);
    const fs::path out = prepare_out(o.out);
    RunManifest m = base_manifest("oracle", o);
    std::optional<FrequencyResponse> measured;
    if (!o.compare_csv.empty()) {
        require_file(o.compare_csv, "--compare");
        const std::string text = read_text_file(o.compare_csv);
        m.inputs = {{o.compare_csv, sha256_hex(text)}};
        measured = response_from_csv(text);
        freqs = measured->freqs;
        if (measured->kind != spec.response) {
            log << "notice: oracle response kind set to " << to_string(measured->kind) << " to match --compare\n";
            spec.response = measured->kind;
        }
    }
    if (freqs.empty()) throw ConfigError("oracle config: frequencies or log_grid required");
    const FrequencyResponse ref = oracle_response(spec, freqs);
    write_text_file(out / "oracle.csv", response_to_csv(ref, &m));
    log << "oracle: " << to_string(spec.kind) << ", " << ref.size() << " frequencies\n";
    if (!measured) return 0;
    CompareOptions co;
    if (j.contains("compare")) {
        const json& cj = j.at("compare");
        reject_unknown(cj, {"tol_mag", "tol_phase_deg", "noise_floor", "diagonal_only"}, "oracle config.compare");
        maybe(cj, "tol_mag", co.tol_mag, "oracle config.compare");
        maybe(cj, "tol_phase_deg", co.tol_phase_deg, "oracle config.compare");
        maybe(cj, "noise_floor", co.noise_floor, "oracle config.compare");
        maybe(cj, "diagonal_only", co.diagonal_only, "oracle config.compare");
    }
    const CompareResult cr = compare(*measured, ref, co);
    write_text_file(out / "compare.csv", "# manifest_hash=" + m.hash() + "\n" + compare_csv(cr));
    log << "compare: " << (cr.all_pass ? "pass" : "fail") << ", " << cr.failures << " failing of "
        << cr.rows.size() << ", max magnitude error " << cr.max_mag_err << ", max phase error "
        << cr.max_phase_err << " deg\n";
    return cr.all_pass ? 0 : 1;
}

int cmd_signal(const CliOptions& o, std::ostream& log) {
    require_file(o.config, "--config");
    const json j = read_json_file(o.config);
    const std::string w = "signal config";
    reject_unknown(j, {"signal", "dt", "n_samples", "amplitude", "frequency", "phase", "frequencies",
                       "register_length", "chip_samples", "seed"},
                   w);
    TimeGrid grid;
    grid.dt = get<double>(j, "dt", w);
    grid.n_samples = get<std::size_t>(j, "n_samples", w);
    grid.validate();
    const SignalFamily fam = signal_family_from_string(j.value("signal", std::string("single-tone")));
    const double amp = j.value("amplitude", 1.0);
    std::uint32_t seed = j.value("seed", std::uint32_t{1});
    if (o.seed) seed = *o.seed;
    WaveformRecord rec;
    if (fam == SignalFamily::SingleTone) {
        rec = gen_single_tone({amp, get<double>(j, "frequency", w), j.value("phase", 0.0)}, grid);
    } else if (fam == SignalFamily::MultiTone) {
        rec = gen_multi_tone(schroeder_multitone(get<std::vector<double>>(j, "frequencies", w), amp), grid);
    } else {
        PrbsSpec p;
        p.register_length = j.value("register_length", 10);
        p.taps = prbs_taps(p.register_length);
        p.chip_interval = j.value("chip_samples", 1) * grid.dt;
        p.amplitude = amp;
        rec = gen_prbs(p, grid, seed);
    }
    const fs::path out = prepare_out(o.out);
    RunManifest m = base_manifest("signal", o);
    m.seed = seed;
    std::string text = "# manifest_hash=" + m.hash() + "\n# manifest=" + m.to_json().dump() + "\nt,value\n";
    for (std::size_t k = 0; k < rec.size(); ++k) text += num(rec.time(k)) + "," + num(rec.channels[0][k]) + "\n";
    write_text_file(out / "signal.csv", text);
    log << "signal: " << to_string(fam) << ", " << rec.size() << " samples, crest factor " << crest_factor(rec) << "\n";
    return 0;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Small-signal impedance scanning and stability analysis", kToolName};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    CliOptions o;

    auto common = [&](CLI::App* s) {
        s->add_option("--out", o.out, "output directory")->capture_default_str();
        s->add_option("--config", o.config, "JSON configuration file");
    };
    auto* scan_cmd = app.add_subcommand("scan", "identify the frequency response at the PoS");
    scan_cmd->add_option("--netlist", o.netlist, "netlist file")->required();
    common(scan_cmd);
    scan_cmd->add_option("--jobs", o.jobs, "parallel injection runs")->check(CLI::PositiveNumber);
    scan_cmd->add_option("--seed", o.seed, "PRBS seed override");

    auto* an_cmd = app.add_subcommand("analyze", "stability assessment of two scanned subsystems");
    an_cmd->add_option("--y", o.y_csv, "subsystem 1 admittance CSV")->required();
    an_cmd->add_option("--z", o.z_csv, "subsystem 2 impedance CSV")->required();
    an_cmd->add_option("--pm-threshold", o.pm_threshold, "phase-margin threshold in degrees");
    common(an_cmd);

    auto* or_cmd = app.add_subcommand("oracle", "closed-form reference responses");
    common(or_cmd);
    or_cmd->add_option("--compare", o.compare_csv, "scanned response CSV to check against the oracle");

    auto* sig_cmd = app.add_subcommand("signal", "emit a perturbation waveform CSV");
    common(sig_cmd);
    sig_cmd->add_option("--seed", o.seed, "PRBS seed override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (scan_cmd->parsed()) return cmd_scan(o, std::cerr);
        if (an_cmd->parsed()) return cmd_analyze(o, std::cerr);
        if (or_cmd->parsed()) return cmd_oracle(o, std::cerr);
        if (sig_cmd->parsed()) return cmd_signal(o, std::cerr);
    } catch (const std::exception& e) {
        json ej = error_json(e);
        std::cerr << ej.dump() << "\n";
        std::error_code ec;
        if (fs::is_directory(o.out, ec)) {
            std::ofstream f(fs::path(o.out) / "error.json");
            if (f) f << ej.dump(2) << "\n";
        }
        return exit_code_for(e);
    }
    return 2;
}

}  // namespace siad
