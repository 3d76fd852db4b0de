#include "siad/emt_sim.hpp"

#include "siad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace siad {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
constexpr double third = 2.0 * std::numbers::pi / 3.0;

std::vector<double> trim_leading_zeros(const std::vector<double>& p) {
    std::size_t i = 0;
    while (i + 1 < p.size() && p[i] == 0.0) ++i;
    return {p.begin() + static_cast<long>(i), p.end()};
}

cplx poly_eval(const std::vector<double>& p, cplx s) {
    cplx acc{0.0, 0.0};
    for (double c : p) acc = acc * s + c;
    return acc;
}

// Rows d, q of the forward Park matrix.
Eigen::Matrix<double, 2, 3> park_rows(double theta) {
    Eigen::Matrix<double, 2, 3> p;
    p << std::cos(theta), std::cos(theta - third), std::cos(theta + third), std::sin(theta),
        std::sin(theta - third), std::sin(theta + third);
    return p * (2.0 / 3.0);
}

// Columns d, q of the inverse Park matrix.
Eigen::Matrix<double, 3, 2> park_cols(double theta) {
    Eigen::Matrix<double, 3, 2> p;
    p << std::cos(theta), std::sin(theta), std::cos(theta - third), std::sin(theta - third),
        std::cos(theta + third), std::sin(theta + third);
    return p;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += v[i];
    }
    return out;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

}  // namespace

// =============================================================================
// Synthetic device
// =============================================================================

cplx RationalTF::eval(cplx s) const { return poly_eval(num, s) / poly_eval(den, s); }

bool RationalTF::is_zero() const {
    return std::all_of(num.begin(), num.end(), [](double c) { return c == 0.0; });
}

void RationalTF::validate() const {
    const auto n = trim_leading_zeros(num);
    const auto d = trim_leading_zeros(den);
    if (d.empty() || (d.size() == 1 && d[0] == 0.0)) throw ConfigError("transfer function: zero denominator");
    if (!is_zero() && n.size() > d.size()) {
        throw ConfigError("transfer function is improper (numerator degree exceeds denominator)");
    }
    if (d.back() == 0.0) throw ConfigError("transfer function: denominator vanishes at s = 0");
}

Eigen::Matrix2cd SyntheticDevice::eval(cplx s) const {
    Eigen::Matrix2cd m;
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) m(r, c) = y[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].eval(s);
    }
    return m;
}

void SyntheticDevice::validate() const {
    for (const auto& row : y) {
        for (const auto& e : row) e.validate();
    }
    if (!(ref.f0 > 0.0)) throw ConfigError("device: fundamental frequency must be positive");
}

// =============================================================================
// Sources and circuit
// =============================================================================

ThreePhaseSample FundamentalSourceSpec::value(double t) const {
    const double scale = t >= step_time ? step_factor : 1.0;
    ThreePhaseSample v;
    switch (form) {
        case Form::Balanced: {
            const double w = two_pi * f0 * t;
            v = {peak[0] * std::cos(w + phase[0]), peak[1] * std::cos(w + phase[1]),
                 peak[2] * std::cos(w + phase[2])};
            break;
        }
        case Form::Unbalanced: {
            const auto p = fortescue_inverse(sequence);
            const cplx rot = std::polar(1.0, two_pi * f0 * t);
            v = {(p.a * rot).real(), (p.b * rot).real(), (p.c * rot).real()};
            break;
        }
        case Form::Dq0:
            v = park_inverse(dq0, reference_angle(ref, t));
            break;
    }
    v.a *= scale;
    v.b *= scale;
    v.c *= scale;
    return v;
}

ThreePhasePhasor FundamentalSourceSpec::phasor() const {
    switch (form) {
        case Form::Balanced:
            return {std::polar(peak[0], phase[0]), std::polar(peak[1], phase[1]), std::polar(peak[2], phase[2])};
        case Form::Unbalanced:
            return fortescue_inverse(sequence);
        case Form::Dq0: {
            // d cos(th) + q sin(th) = Re{(d - j q) e^{j th}}
            const cplx z = cplx(dq0.d, -dq0.q) * std::polar(1.0, ref.theta0);
            return fortescue_inverse(SequenceSample{0.0, z, 0.0});
        }
    }
    return {};
}

FundamentalSourceSpec FundamentalSourceSpec::balanced(double pk, double f, double pa, double pb, double pc) {
    FundamentalSourceSpec s;
    s.form = Form::Balanced;
    s.f0 = f;
    s.peak = {pk, pk, pk};
    s.phase = {pa, pb, pc};
    return s;
}

FundamentalSourceSpec FundamentalSourceSpec::unbalanced(const SequencePhasorSet& seq, double f) {
    FundamentalSourceSpec s;
    s.form = Form::Unbalanced;
    s.f0 = f;
    s.sequence = seq;
    return s;
}

FundamentalSourceSpec FundamentalSourceSpec::dq0_form(double vd, double vq, double v0, double f, double th0) {
    FundamentalSourceSpec s;
    s.form = Form::Dq0;
    s.f0 = f;
    s.dq0 = {vd, vq, v0};
    s.ref = {f, th0};
    return s;
}

bool is_ground(const std::string& node) {
    if (node == "0") return true;
    std::string l = node;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return l == "gnd";
}

namespace {

Element two_terminal(ElementKind k, const std::string& name, const std::string& a, const std::string& b,
                     double v) {
    Element e;
    e.kind = k;
    e.name = name;
    e.nodes = {a, b};
    e.value = v;
    return e;
}

}  // namespace

Circuit& Circuit::add_resistor(const std::string& n, const std::string& a, const std::string& b, double v) {
    elements.push_back(two_terminal(ElementKind::Resistor, n, a, b, v));
    return *this;
}
Circuit& Circuit::add_inductor(const std::string& n, const std::string& a, const std::string& b, double v) {
    elements.push_back(two_terminal(ElementKind::Inductor, n, a, b, v));
    return *this;
}
Circuit& Circuit::add_capacitor(const std::string& n, const std::string& a, const std::string& b, double v) {
    elements.push_back(two_terminal(ElementKind::Capacitor, n, a, b, v));
    return *this;
}
Circuit& Circuit::add_switch(const std::string& n, const std::string& a, const std::string& b, bool closed) {
    auto e = two_terminal(ElementKind::Switch, n, a, b, 0.0);
    e.closed = closed;
    elements.push_back(e);
    return *this;
}
Circuit& Circuit::add_vsource(const std::string& n, const std::array<std::string, 3>& nodes,
                              const FundamentalSourceSpec& spec) {
    Element e;
    e.kind = ElementKind::VoltageSource3;
    e.name = n;
    e.nodes = {nodes[0], nodes[1], nodes[2]};
    e.source = spec;
    elements.push_back(e);
    return *this;
}
Circuit& Circuit::add_isource(const std::string& n, const std::array<std::string, 3>& nodes,
                              const FundamentalSourceSpec& spec) {
    Element e;
    e.kind = ElementKind::CurrentSource3;
    e.name = n;
    e.nodes = {nodes[0], nodes[1], nodes[2]};
    e.source = spec;
    elements.push_back(e);
    return *this;
}
Circuit& Circuit::add_device(const std::string& n, const std::array<std::string, 3>& nodes,
                             std::shared_ptr<const SyntheticDevice> dev) {
    Element e;
    e.kind = ElementKind::Device;
    e.name = n;
    e.nodes = {nodes[0], nodes[1], nodes[2]};
    e.device = std::move(dev);
    elements.push_back(e);
    return *this;
}
Circuit& Circuit::set_pos(const std::array<std::string, 3>& nodes) {
    pos = nodes;
    return *this;
}

const Element* Circuit::find(const std::string& name) const {
    for (const auto& e : elements) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

Element* Circuit::find(const std::string& name) {
    for (auto& e : elements) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

void Circuit::validate() const {
    std::set<std::string> names;
    std::set<std::string> nodes;
    for (const auto& e : elements) {
        if (!names.insert(e.name).second) throw ConfigError("duplicate element name '" + e.name + "'");
        const bool three = e.kind == ElementKind::VoltageSource3 || e.kind == ElementKind::CurrentSource3 ||
                           e.kind == ElementKind::Device;
        if (e.nodes.size() != (three ? 3u : 2u)) throw ConfigError("element '" + e.name + "': wrong node count");
        for (const auto& n : e.nodes) nodes.insert(n);
        switch (e.kind) {
            case ElementKind::Resistor:
            case ElementKind::Inductor:
            case ElementKind::Capacitor:
                if (!(e.value > 0.0) || !std::isfinite(e.value)) {
                    throw ConfigError("element '" + e.name + "': value must be finite and positive");
                }
                break;
            case ElementKind::Device:
                if (!e.device) throw ConfigError("device '" + e.name + "' has no transfer-function matrix");
                e.device->validate();
                break;
            default:
                break;
        }
    }
    if (pos) {
        for (const auto& n : *pos) {
            if (is_ground(n) || !nodes.count(n)) throw ConfigError("PoS node '" + n + "' is not connected to any element");
        }
    }
}

std::optional<double> Circuit::fundamental_hz() const {
    std::optional<double> f;
    auto merge = [&](double v, const std::string& who) {
        if (!f) {
            f = v;
        } else if (std::abs(*f - v) > 1e-12 * std::abs(v)) {
            throw ConfigError("element '" + who + "' has a different fundamental frequency");
        }
    };
    for (const auto& e : elements) {
        if (e.kind == ElementKind::VoltageSource3 || e.kind == ElementKind::CurrentSource3) merge(e.source.f0, e.name);
        if (e.kind == ElementKind::Device && e.device) merge(e.device->ref.f0, e.name);
    }
    return f;
}

// =============================================================================
// Solver
// =============================================================================

Solver::Solver(const Circuit& c, SolverOptions opt) : circuit_(c), opt_(opt) {
    if (!(opt_.dt > 0.0)) throw ConfigError("solver: dt must be positive");
    circuit_.validate();
    auto node_id = [&](const std::string& n) -> int {
        if (is_ground(n)) return -1;
        auto it = node_ids_.find(n);
        if (it != node_ids_.end()) return it->second;
        const int id = static_cast<int>(node_names_.size());
        node_ids_[n] = id;
        node_names_.push_back(n);
        return id;
    };
    for (const auto& e : circuit_.elements) {
        for (const auto& n : e.nodes) node_id(n);
    }
    n_nodes_ = static_cast<int>(node_names_.size());

    const std::size_t ne = circuit_.elements.size();
    branch_of_element_.assign(ne, -1);
    source_of_element_.assign(ne, -1);
    device_of_element_.assign(ne, -1);
    int vs_rows = 0;
    for (std::size_t k = 0; k < ne; ++k) {
        const auto& e = circuit_.elements[k];
        element_ids_[e.name] = static_cast<int>(k);
        switch (e.kind) {
            case ElementKind::Resistor:
            case ElementKind::Inductor:
            case ElementKind::Capacitor:
            case ElementKind::Switch: {
                Branch b;
                b.element = static_cast<int>(k);
                b.a = node_id(e.nodes[0]);
                b.b = node_id(e.nodes[1]);
                b.kind = e.kind;
                if (e.kind == ElementKind::Resistor) b.g = 1.0 / e.value;
                if (e.kind == ElementKind::Inductor) b.g = opt_.dt / (2.0 * e.value);
                if (e.kind == ElementKind::Capacitor) b.g = 2.0 * e.value / opt_.dt;
                if (e.kind == ElementKind::Switch) b.g = e.closed ? 1e6 : 1e-9;
                branch_of_element_[k] = static_cast<int>(branches_.size());
                branches_.push_back(b);
                break;
            }
            case ElementKind::VoltageSource3:
            case ElementKind::CurrentSource3: {
                Source3 s;
                s.element = static_cast<int>(k);
                for (int p = 0; p < 3; ++p) s.node[static_cast<std::size_t>(p)] = node_id(e.nodes[static_cast<std::size_t>(p)]);
                s.voltage = e.kind == ElementKind::VoltageSource3;
                if (s.voltage) {
                    for (int p = 0; p < 3; ++p) {
                        if (s.node[static_cast<std::size_t>(p)] < 0) {
                            throw ConfigError("voltage source '" + e.name + "' has a grounded terminal");
                        }
                    }
                    s.first_row = vs_rows;
                    vs_rows += 3;
                }
                source_of_element_[k] = static_cast<int>(sources_.size());
                sources_.push_back(std::move(s));
                break;
            }
            case ElementKind::Device: {
                Device3 d;
                d.element = static_cast<int>(k);
                for (int p = 0; p < 3; ++p) d.node[static_cast<std::size_t>(p)] = node_id(e.nodes[static_cast<std::size_t>(p)]);
                d.ref = e.device->ref;
                const double h = 0.5 * opt_.dt;
                for (int r = 0; r < 2; ++r) {
                    for (int col = 0; col < 2; ++col) {
                        const auto& tf = e.device->y[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)];
                        auto& en = d.entry[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)];
                        if (tf.is_zero()) {
                            en.deff = 0.0;
                            continue;
                        }
                        auto den = trim_leading_zeros(tf.den);
                        auto num = trim_leading_zeros(tf.num);
                        const double lead = den[0];
                        for (auto& v : den) v /= lead;
                        for (auto& v : num) v /= lead;
                        const int n = static_cast<int>(den.size()) - 1;
                        std::vector<double> b(static_cast<std::size_t>(n + 1), 0.0);
                        std::copy(num.begin(), num.end(), b.begin() + static_cast<long>(b.size() - num.size()));
                        const double dfeed = b[0];
                        if (n == 0) {
                            en.deff = dfeed;
                            continue;
                        }
                        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
                        for (int i = 0; i < n; ++i) A(0, i) = -den[static_cast<std::size_t>(i + 1)];
                        for (int i = 1; i < n; ++i) A(i, i - 1) = 1.0;
                        Eigen::VectorXd B = Eigen::VectorXd::Zero(n);
                        B(0) = 1.0;
                        Eigen::VectorXd C(n);
                        for (int i = 0; i < n; ++i) {
                            C(i) = b[static_cast<std::size_t>(i + 1)] - dfeed * den[static_cast<std::size_t>(i + 1)];
                        }
                        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
                        const Eigen::PartialPivLU<Eigen::MatrixXd> m(I - h * A);
                        en.F = m.solve(I + h * A);
                        en.G = m.solve(h * B);
                        en.C = C;
                        en.x = Eigen::VectorXd::Zero(n);
                        en.deff = C.dot(en.G) + dfeed;
                        d.has_states = true;
                    }
                }
                for (int r = 0; r < 2; ++r) {
                    for (int col = 0; col < 2; ++col) d.deff(r, col) = d.entry[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)].deff;
                }
                const double scale = std::max(1.0, d.deff.cwiseAbs().maxCoeff());
                d.time_varying = std::abs(d.deff(0, 0) - d.deff(1, 1)) > 1e-14 * scale ||
                                 std::abs(d.deff(0, 1) + d.deff(1, 0)) > 1e-14 * scale;
                device_of_element_[k] = static_cast<int>(devices_.size());
                devices_.push_back(std::move(d));
                break;
            }
        }
    }
    n_ = n_nodes_ + vs_rows;
    check_connectivity();

    a0_ = Eigen::MatrixXd::Zero(n_, n_);
    for (const auto& b : branches_) {
        if (b.a >= 0) a0_(b.a, b.a) += b.g;
        if (b.b >= 0) a0_(b.b, b.b) += b.g;
        if (b.a >= 0 && b.b >= 0) {
            a0_(b.a, b.b) -= b.g;
            a0_(b.b, b.a) -= b.g;
        }
    }
    for (const auto& s : sources_) {
        if (!s.voltage) continue;
        for (int p = 0; p < 3; ++p) {
            const int row = n_nodes_ + s.first_row + p;
            a0_(s.node[static_cast<std::size_t>(p)], row) += 1.0;
            a0_(row, s.node[static_cast<std::size_t>(p)]) += 1.0;
        }
    }
    for (const auto& d : devices_) {
        if (d.time_varying) {
            refactor_each_step_ = true;
            continue;
        }
        const Eigen::Matrix3d g = device_conductance(d, 0.0);
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) {
                const int nr = d.node[static_cast<std::size_t>(r)], nc = d.node[static_cast<std::size_t>(col)];
                if (nr >= 0 && nc >= 0) a0_(nr, nc) += g(r, col);
            }
        }
    }

    if (n_ > 0) {
        Eigen::MatrixXd probe = a0_;
        if (refactor_each_step_) {
            for (const auto& d : devices_) {
                if (!d.time_varying) continue;
                const Eigen::Matrix3d g = device_conductance(d, 0.0);
                for (int r = 0; r < 3; ++r) {
                    for (int col = 0; col < 3; ++col) {
                        const int nr = d.node[static_cast<std::size_t>(r)], nc = d.node[static_cast<std::size_t>(col)];
                        if (nr >= 0 && nc >= 0) probe(nr, nc) += g(r, col);
                    }
                }
            }
        }
        Eigen::FullPivLU<Eigen::MatrixXd> full(probe);
        full.setThreshold(1e-13);
        if (full.rank() < n_) {
            const Eigen::MatrixXd ker = full.kernel();
            const Eigen::VectorXd v = ker.col(0);
            const double vmax = v.cwiseAbs().maxCoeff();
            std::vector<std::string> floating;
            for (int i = 0; i < n_nodes_; ++i) {
                if (std::abs(v(i)) > 1e-6 * vmax) floating.push_back(node_names_[static_cast<std::size_t>(i)]);
            }
            throw NumericalError("singular conductance matrix; floating node set {" + join(floating) + "}");
        }
        factor(a0_);
    }
    x_ = Eigen::VectorXd::Zero(n_);
    rhs_ = Eigen::VectorXd::Zero(n_);
    a_work_ = a0_;
    if (opt_.phasor_init) phasor_initialize();
}

void Solver::check_connectivity() const {
    UnionFind uf(n_nodes_ + 1);
    const int gnd = n_nodes_;
    auto id = [&](int n) { return n < 0 ? gnd : n; };
    for (const auto& b : branches_) {
        if (b.kind == ElementKind::Switch && !circuit_.elements[static_cast<std::size_t>(b.element)].closed) continue;
        uf.unite(id(b.a), id(b.b));
    }
    for (const auto& s : sources_) {
        if (!s.voltage) continue;
        for (int n : s.node) uf.unite(id(n), gnd);
    }
    for (const auto& d : devices_) {
        for (int n : d.node) uf.unite(id(n), gnd);
    }
    std::vector<std::string> floating;
    for (int i = 0; i < n_nodes_; ++i) {
        if (uf.find(i) != uf.find(gnd)) floating.push_back(node_names_[static_cast<std::size_t>(i)]);
    }
    if (!floating.empty()) {
        throw ConfigError("floating subnetwork: nodes {" + join(floating) + "} have no path to ground");
    }
}

void Solver::factor(const Eigen::MatrixXd& a) { lu_.compute(a); }

Eigen::Matrix3d Solver::device_conductance(const Device3& d, double theta) const {
    return park_cols(theta) * d.deff * park_rows(theta);
}

void Solver::phasor_initialize() {
    std::optional<double> f0;
    try {
        f0 = circuit_.fundamental_hz();
    } catch (const ConfigError&) {
        return;
    }
    if (!f0 || n_ == 0) return;
    const double w = two_pi * *f0;
    const cplx z = std::polar(1.0, w * opt_.dt);
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n_, n_);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n_);
    std::vector<cplx> yb(branches_.size());
    for (std::size_t k = 0; k < branches_.size(); ++k) {
        const auto& b = branches_[k];
        const auto& e = circuit_.elements[static_cast<std::size_t>(b.element)];
        cplx y = b.g;
        if (b.kind == ElementKind::Inductor) y = opt_.dt / (2.0 * e.value) * (z + 1.0) / (z - 1.0);
        if (b.kind == ElementKind::Capacitor) y = 2.0 * e.value / opt_.dt * (z - 1.0) / (z + 1.0);
        yb[k] = y;
        if (b.a >= 0) Y(b.a, b.a) += y;
        if (b.b >= 0) Y(b.b, b.b) += y;
        if (b.a >= 0 && b.b >= 0) {
            Y(b.a, b.b) -= y;
            Y(b.b, b.a) -= y;
        }
    }
    for (const auto& s : sources_) {
        const auto& spec = circuit_.elements[static_cast<std::size_t>(s.element)].source;
        const auto ph = spec.phasor();
        const cplx v[3] = {ph.a, ph.b, ph.c};
        for (int p = 0; p < 3; ++p) {
            const int n = s.node[static_cast<std::size_t>(p)];
            if (s.voltage) {
                const int row = n_nodes_ + s.first_row + p;
                Y(n, row) += 1.0;
                Y(row, n) += 1.0;
                rhs(row) = v[p];
            } else if (n >= 0) {
                rhs(n) += v[p];
            }
        }
    }
    std::vector<bool> dev_included(devices_.size(), false);
    for (std::size_t k = 0; k < devices_.size(); ++k) {
        const auto& d = devices_[k];
        if (d.time_varying || d.has_states) continue;
        const Eigen::Matrix3d g = device_conductance(d, 0.0);
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) {
                const int nr = d.node[static_cast<std::size_t>(r)], nc = d.node[static_cast<std::size_t>(col)];
                if (nr >= 0 && nc >= 0) Y(nr, nc) += g(r, col);
            }
        }
        dev_included[k] = true;
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(Y);
    if (!lu.isInvertible()) return;
    const Eigen::VectorXcd X = lu.solve(rhs);
    if (!X.allFinite()) return;
    for (int i = 0; i < n_; ++i) x_(i) = X(i).real();
    for (std::size_t k = 0; k < branches_.size(); ++k) {
        auto& b = branches_[k];
        const cplx va = b.a >= 0 ? X(b.a) : cplx{};
        const cplx vb = b.b >= 0 ? X(b.b) : cplx{};
        b.vab = (va - vb).real();
        b.i = (yb[k] * (va - vb)).real();
    }
    for (auto& s : sources_) {
        const auto v = circuit_.elements[static_cast<std::size_t>(s.element)].source.value(0.0);
        s.value = {v.a, v.b, v.c};
    }
    const double theta = 0.0;
    for (std::size_t k = 0; k < devices_.size(); ++k) {
        auto& d = devices_[k];
        Eigen::Vector3d v;
        for (int p = 0; p < 3; ++p) v(p) = node_voltage(d.node[static_cast<std::size_t>(p)]);
        const double th = reference_angle(d.ref, theta);
        d.u_prev = park_rows(th) * v;
        if (dev_included[k]) d.i_abc = device_conductance(d, th) * v;
    }
}

int Solver::node_index(const std::string& name) const {
    if (is_ground(name)) return -1;
    auto it = node_ids_.find(name);
    if (it == node_ids_.end()) throw ConfigError("unknown node '" + name + "'");
    return it->second;
}

int Solver::element_index(const std::string& name) const {
    auto it = element_ids_.find(name);
    if (it == element_ids_.end()) throw ConfigError("unknown element '" + name + "'");
    return it->second;
}

void Solver::set_perturbation(const std::string& source_name, Perturbation p) {
    const int e = element_index(source_name);
    const int s = source_of_element_[static_cast<std::size_t>(e)];
    if (s < 0) throw ConfigError("element '" + source_name + "' is not a source");
    sources_[static_cast<std::size_t>(s)].perturbation = std::move(p);
}

void Solver::step() {
    const double t1 = static_cast<double>(step_ + 1) * opt_.dt;
    double* rhs = rhs_.data();
    rhs_.setZero();
    for (auto& b : branches_) {
        double hist = 0.0;
        if (b.kind == ElementKind::Inductor) hist = b.i + b.g * b.vab;
        else if (b.kind == ElementKind::Capacitor) hist = -b.g * b.vab - b.i;
        else continue;
        if (b.a >= 0) rhs[b.a] -= hist;
        if (b.b >= 0) rhs[b.b] += hist;
        b.i = hist;  // holds the history term until the update below
    }
    for (auto& s : sources_) {
        ThreePhaseSample v = circuit_.elements[static_cast<std::size_t>(s.element)].source.value(t1);
        if (s.perturbation) {
            const auto dv = s.perturbation(t1);
            v.a += dv.a;
            v.b += dv.b;
            v.c += dv.c;
        }
        s.value = {v.a, v.b, v.c};
        for (int p = 0; p < 3; ++p) {
            if (s.voltage) {
                rhs[n_nodes_ + s.first_row + p] = s.value[static_cast<std::size_t>(p)];
            } else if (s.node[static_cast<std::size_t>(p)] >= 0) {
                rhs[s.node[static_cast<std::size_t>(p)]] += s.value[static_cast<std::size_t>(p)];
            }
        }
    }
    if (refactor_each_step_) a_work_ = a0_;
    std::vector<Eigen::Vector2d> hist_dq(devices_.size());
    for (std::size_t k = 0; k < devices_.size(); ++k) {
        auto& d = devices_[k];
        const double th = reference_angle(d.ref, t1);
        Eigen::Vector2d h = Eigen::Vector2d::Zero();
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
                const auto& en = d.entry[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
                if (en.x.size() == 0) continue;
                h(r) += en.C.dot(en.F * en.x) + en.C.dot(en.G) * d.u_prev(c);
            }
        }
        hist_dq[k] = h;
        const Eigen::Vector3d h_abc = park_cols(th) * h;
        for (int p = 0; p < 3; ++p) {
            const int n = d.node[static_cast<std::size_t>(p)];
            if (n >= 0) rhs[n] -= h_abc(p);
        }
        if (d.time_varying) {
            const Eigen::Matrix3d g = device_conductance(d, th);
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    const int nr = d.node[static_cast<std::size_t>(r)], nc = d.node[static_cast<std::size_t>(c)];
                    if (nr >= 0 && nc >= 0) a_work_(nr, nc) += g(r, c);
                }
            }
        }
    }
    if (refactor_each_step_) lu_.compute(a_work_);
    if (n_ > 0) x_ = lu_.solve(rhs_);
    const double* x = x_.data();
    for (auto& b : branches_) {
        const double va = b.a >= 0 ? x[b.a] : 0.0;
        const double vb = b.b >= 0 ? x[b.b] : 0.0;
        b.vab = va - vb;
        if (b.kind == ElementKind::Inductor || b.kind == ElementKind::Capacitor) {
            b.i = b.g * b.vab + b.i;
        } else {
            b.i = b.g * b.vab;
        }
    }
    for (std::size_t k = 0; k < devices_.size(); ++k) {
        auto& d = devices_[k];
        const double th = reference_angle(d.ref, t1);
        Eigen::Vector3d v;
        for (int p = 0; p < 3; ++p) v(p) = node_voltage(d.node[static_cast<std::size_t>(p)]);
        const Eigen::Vector2d u = park_rows(th) * v;
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
                auto& en = d.entry[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
                if (en.x.size() == 0) continue;
                en.x = en.F * en.x + en.G * (d.u_prev(c) + u(c));
            }
        }
        const Eigen::Vector2d i_dq = d.deff * u + hist_dq[k];
        d.i_abc = park_cols(th) * i_dq;
        d.u_prev = u;
    }
    for (int i = 0; i < n_; ++i) {
        if (!std::isfinite(x[i]) || std::abs(x[i]) > opt_.overflow_bound) {
            const std::string what = i < n_nodes_ ? "node '" + node_names_[static_cast<std::size_t>(i)] + "'"
                                                  : std::string("a voltage-source current");
            std::ostringstream os;
            os << "simulation diverged at t = " << t1 << " s: " << what << " exceeds " << opt_.overflow_bound;
            throw DivergenceError(t1, os.str());
        }
    }
    ++step_;
}

void Solver::run_steps(std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) step();
}

double Solver::current_into(int element, const std::string& node_name) const {
    const auto& e = circuit_.elements[static_cast<std::size_t>(element)];
    double total = 0.0;
    if (const int b = branch_of_element_[static_cast<std::size_t>(element)]; b >= 0) {
        const auto& br = branches_[static_cast<std::size_t>(b)];
        if (e.nodes[0] == node_name) total += br.i;
        if (e.nodes[1] == node_name) total -= br.i;
        return total;
    }
    if (const int s = source_of_element_[static_cast<std::size_t>(element)]; s >= 0) {
        const auto& src = sources_[static_cast<std::size_t>(s)];
        for (int p = 0; p < 3; ++p) {
            if (e.nodes[static_cast<std::size_t>(p)] != node_name) continue;
            total += src.voltage ? x_(n_nodes_ + src.first_row + p) : -src.value[static_cast<std::size_t>(p)];
        }
        return total;
    }
    if (const int d = device_of_element_[static_cast<std::size_t>(element)]; d >= 0) {
        for (int p = 0; p < 3; ++p) {
            if (e.nodes[static_cast<std::size_t>(p)] == node_name) total += devices_[static_cast<std::size_t>(d)].i_abc(p);
        }
    }
    return total;
}

std::pair<double, double> Solver::kcl_residual() const {
    std::vector<double> sum(static_cast<std::size_t>(n_nodes_), 0.0);
    double imax = 0.0;
    for (std::size_t k = 0; k < circuit_.elements.size(); ++k) {
        const auto& e = circuit_.elements[k];
        std::set<std::string> seen;
        for (const auto& n : e.nodes) {
            if (is_ground(n) || !seen.insert(n).second) continue;
            const double i = current_into(static_cast<int>(k), n);
            sum[static_cast<std::size_t>(node_index(n))] += i;
            imax = std::max(imax, std::abs(i));
        }
    }
    double worst = 0.0;
    for (double s : sum) worst = std::max(worst, std::abs(s));
    return {worst, imax};
}

double Solver::stored_energy() const {
    double w = 0.0;
    for (const auto& b : branches_) {
        const auto& e = circuit_.elements[static_cast<std::size_t>(b.element)];
        if (b.kind == ElementKind::Inductor) w += 0.5 * e.value * b.i * b.i;
        if (b.kind == ElementKind::Capacitor) w += 0.5 * e.value * b.vab * b.vab;
    }
    return w;
}

Snapshot Solver::snapshot() const {
    Snapshot s;
    s.step = step_;
    for (int i = 0; i < n_nodes_; ++i) s.node_voltage[node_names_[static_cast<std::size_t>(i)]] = x_(i);
    for (const auto& b : branches_) {
        s.branch_state[circuit_.elements[static_cast<std::size_t>(b.element)].name] = {b.i, b.vab};
    }
    for (const auto& d : devices_) {
        std::vector<double> st;
        for (const auto& row : d.entry) {
            for (const auto& en : row) {
                for (int i = 0; i < en.x.size(); ++i) st.push_back(en.x(i));
            }
        }
        st.push_back(d.u_prev(0));
        st.push_back(d.u_prev(1));
        for (int p = 0; p < 3; ++p) st.push_back(d.i_abc(p));
        s.device_state[circuit_.elements[static_cast<std::size_t>(d.element)].name] = st;
    }
    return s;
}

void Solver::restore(const Snapshot& s) {
    step_ = s.step;
    for (int i = 0; i < n_nodes_; ++i) {
        auto it = s.node_voltage.find(node_names_[static_cast<std::size_t>(i)]);
        x_(i) = it != s.node_voltage.end() ? it->second : 0.0;
    }
    for (auto& b : branches_) {
        const auto& name = circuit_.elements[static_cast<std::size_t>(b.element)].name;
        auto it = s.branch_state.find(name);
        if (it != s.branch_state.end()) {
            b.i = it->second[0];
            b.vab = it->second[1];
        } else {
            b.vab = node_voltage(b.a) - node_voltage(b.b);
            b.i = (b.kind == ElementKind::Resistor || b.kind == ElementKind::Switch) ? b.g * b.vab : 0.0;
        }
    }
    for (auto& d : devices_) {
        auto it = s.device_state.find(circuit_.elements[static_cast<std::size_t>(d.element)].name);
        if (it == s.device_state.end()) continue;
        std::size_t k = 0;
        const auto& st = it->second;
        for (auto& row : d.entry) {
            for (auto& en : row) {
                for (int i = 0; i < en.x.size(); ++i) en.x(i) = st.at(k++);
            }
        }
        d.u_prev(0) = st.at(k++);
        d.u_prev(1) = st.at(k++);
        for (int p = 0; p < 3; ++p) d.i_abc(p) = st.at(k++);
    }
    const double t = time();
    for (auto& src : sources_) {
        const auto v = circuit_.elements[static_cast<std::size_t>(src.element)].source.value(t);
        src.value = {v.a, v.b, v.c};
    }
}

// =============================================================================
// Recording
// =============================================================================

namespace {

struct ResolvedProbe {
    std::array<int, 3> node{};
    std::array<std::vector<int>, 3> elements;
};

ResolvedProbe resolve(const Solver& s, const PosProbe& p) {
    ResolvedProbe r;
    for (int k = 0; k < 3; ++k) {
        r.node[static_cast<std::size_t>(k)] = s.node_index(p.nodes[static_cast<std::size_t>(k)]);
        for (const auto& name : p.elements) {
            const int e = s.element_index(name);
            const auto& nodes = s.circuit().elements[static_cast<std::size_t>(e)].nodes;
            if (std::find(nodes.begin(), nodes.end(), p.nodes[static_cast<std::size_t>(k)]) != nodes.end()) {
                r.elements[static_cast<std::size_t>(k)].push_back(e);
            }
        }
    }
    return r;
}

void sample(const Solver& s, const ResolvedProbe& r, const PosProbe& p, std::array<double, 6>& out) {
    for (int k = 0; k < 3; ++k) {
        out[static_cast<std::size_t>(k)] = s.node_voltage(r.node[static_cast<std::size_t>(k)]);
        double i = 0.0;
        for (int e : r.elements[static_cast<std::size_t>(k)]) i += s.current_into(e, p.nodes[static_cast<std::size_t>(k)]);
        out[static_cast<std::size_t>(3 + k)] = i;
    }
}

WaveformRecord empty_pos_record(double dt) {
    WaveformRecord w;
    w.dt = dt;
    w.names = {"va", "vb", "vc", "ia", "ib", "ic"};
    w.channels.assign(6, {});
    return w;
}

}  // namespace

WaveformRecord run(Solver& s, double duration, const PosProbe& probe, double record_from) {
    const auto r = resolve(s, probe);
    const auto n = static_cast<std::size_t>(std::llround(duration / s.dt()));
    const auto first = static_cast<std::size_t>(std::max(0LL, std::llround(record_from / s.dt())));
    auto w = empty_pos_record(s.dt());
    bool started = false;
    std::array<double, 6> buf{};
    // The starting state counts as a sample when it already lies in the recorded range.
    if (s.step_index() >= first) {
        w.t0 = s.time();
        started = true;
        sample(s, r, probe, buf);
        for (int c = 0; c < 6; ++c) w.channels[static_cast<std::size_t>(c)].push_back(buf[static_cast<std::size_t>(c)]);
    }
    for (std::size_t k = 0; k < n; ++k) {
        s.step();
        if (s.step_index() < first) continue;
        if (!started) {
            w.t0 = s.time();
            started = true;
        }
        sample(s, r, probe, buf);
        for (int c = 0; c < 6; ++c) w.channels[static_cast<std::size_t>(c)].push_back(buf[static_cast<std::size_t>(c)]);
    }
    return w;
}

WaveformRecord run(const Circuit& c, const SolverOptions& opt, double duration, const PosProbe& probe,
                   double record_from) {
    Solver s(c, opt);
    return run(s, duration, probe, record_from);
}

// =============================================================================
// Two-stage choreography
// =============================================================================

std::string to_string(Frame f) {
    switch (f) {
        case Frame::Abc: return "abc";
        case Frame::Seq0pn: return "0pn";
        case Frame::Dq0: return "dq0";
    }
    return "?";
}

std::string to_string(Strategy s) {
    return s == Strategy::SeriesVoltage ? "series-voltage" : "parallel-current";
}

namespace {
std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
}
}  // namespace

Frame frame_from_string(const std::string& s) {
    const auto l = lower(s);
    if (l == "abc") return Frame::Abc;
    if (l == "0pn" || l == "pn") return Frame::Seq0pn;
    if (l == "dq0" || l == "dq") return Frame::Dq0;
    throw ConfigError("unknown frame '" + s + "' (expected abc, 0pn or dq0)");
}

Strategy strategy_from_string(const std::string& s) {
    const auto l = lower(s);
    if (l == "series-voltage" || l == "voltage") return Strategy::SeriesVoltage;
    if (l == "parallel-current" || l == "current") return Strategy::ParallelCurrent;
    throw ConfigError("unknown strategy '" + s + "' (expected series-voltage or parallel-current)");
}

Side side_from_string(const std::string& s) {
    const auto l = lower(s);
    if (l == "left") return Side::Left;
    if (l == "right") return Side::Right;
    throw ConfigError("unknown side '" + s + "' (expected left or right)");
}

std::vector<std::string> side_elements(const Circuit& c, Side side) {
    if (!c.pos) throw ConfigError("circuit has no PoS");
    const std::set<std::string> pos_nodes(c.pos->begin(), c.pos->end());
    std::map<std::string, int> ids;
    for (const auto& e : c.elements) {
        for (const auto& n : e.nodes) {
            if (!is_ground(n) && !pos_nodes.count(n) && !ids.count(n)) {
                const int id = static_cast<int>(ids.size());
                ids[n] = id;
            }
        }
    }
    const int ne = static_cast<int>(c.elements.size());
    const int nn = static_cast<int>(ids.size());
    UnionFind uf(nn + ne);
    for (int k = 0; k < ne; ++k) {
        for (const auto& n : c.elements[static_cast<std::size_t>(k)].nodes) {
            auto it = ids.find(n);
            if (it != ids.end()) uf.unite(nn + k, it->second);
        }
    }
    std::set<int> source_groups;
    for (int k = 0; k < ne; ++k) {
        const auto kind = c.elements[static_cast<std::size_t>(k)].kind;
        if (kind == ElementKind::VoltageSource3 || kind == ElementKind::CurrentSource3) source_groups.insert(uf.find(nn + k));
    }
    std::vector<std::string> out;
    for (int k = 0; k < ne; ++k) {
        const bool left = source_groups.count(uf.find(nn + k)) > 0;
        if (left == (side == Side::Left)) out.push_back(c.elements[static_cast<std::size_t>(k)].name);
    }
    return out;
}

cplx fundamental_phasor(const std::vector<double>& x, double dt, double f0, std::size_t end,
                        std::size_t n_periods) {
    const auto per = static_cast<std::size_t>(std::llround(1.0 / (f0 * dt)));
    const std::size_t n = per * n_periods;
    if (n == 0 || n > end) throw NumericalError("fundamental_phasor: record shorter than the requested periods");
    const std::size_t first = end - n;
    cplx acc{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(first + k) * dt;
        acc += x[first + k] * std::polar(1.0, -two_pi * f0 * t);
    }
    return acc * (2.0 / static_cast<double>(n));
}

SteadyStateRecord capture_steady_state(const Circuit& c, const CaptureOptions& opt) {
    if (!c.pos) throw ConfigError("circuit has no PoS");
    const auto f0 = opt.f0 ? opt.f0 : c.fundamental_hz();
    if (!f0) throw ConfigError("no fundamental frequency: circuit has no sources and none was configured");
    const double dt = opt.solver.dt;
    const double period = 1.0 / *f0;
    const auto per = static_cast<std::size_t>(std::llround(period / dt));
    if (std::abs(static_cast<double>(per) * dt - period) > 1e-9 * period) {
        throw ConfigError("dt must divide the fundamental period into a whole number of steps");
    }
    const auto k_ss = static_cast<std::size_t>(std::llround(opt.settle_time / dt));
    if (k_ss < 2 * per) throw ConfigError("settle_time must span at least two fundamental periods");
    if (opt.window.t_start < opt.settle_time - 0.5 * dt) {
        throw ConfigError("analysis window must start at or after the decoupling time");
    }
    const std::size_t n_periods = std::min<std::size_t>(5, k_ss / per);
    const std::size_t pre_first = k_ss - n_periods * per + 1;  // step index of first pre-sample

    Solver s(c, opt.solver);
    PosProbe probe{*c.pos, side_elements(c, opt.side)};
    const auto r = resolve(s, probe);
    const auto win = window_slice(0.0, dt, std::numeric_limits<std::size_t>::max() / 2, opt.window);
    const std::size_t k_win0 = win.first;
    const std::size_t k_end = win.first + win.count;

    SteadyStateRecord ss;
    ss.f0 = *f0;
    ss.t_decouple = static_cast<double>(k_ss) * dt;
    std::vector<std::vector<double>> pre(6);
    ss.abc = empty_pos_record(dt);
    ss.abc.t0 = static_cast<double>(k_win0) * dt;
    std::array<double, 6> buf{};
    // Step index k holds the state at t = k dt; index 0 is the initial state.
    auto record = [&](std::size_t k) {
        const bool in_pre = k >= pre_first - 1 && k < k_ss;
        const bool in_win = k >= k_win0 && k < k_end;
        if (!in_pre && !in_win) return;
        sample(s, r, probe, buf);
        for (int ch = 0; ch < 6; ++ch) {
            if (in_pre) pre[static_cast<std::size_t>(ch)].push_back(buf[static_cast<std::size_t>(ch)]);
            if (in_win) ss.abc.channels[static_cast<std::size_t>(ch)].push_back(buf[static_cast<std::size_t>(ch)]);
        }
    };
    record(0);
    for (std::size_t k = 1; k < k_end; ++k) {
        if (k - 1 == k_ss) ss.at_decoupling = s.snapshot();
        s.step();
        record(k);
    }
    if (k_end - 1 == k_ss) ss.at_decoupling = s.snapshot();

    // Pre-decoupling samples cover step indices [k_ss - n_periods*per, k_ss).
    const std::size_t npre = pre[0].size();
    double worst = 0.0;
    for (int group = 0; group < 2; ++group) {
        double nominal = 0.0;
        double delta = 0.0;
        for (int ch = 3 * group; ch < 3 * group + 3; ++ch) {
            const auto& x = pre[static_cast<std::size_t>(ch)];
            double sq = 0.0, dq = 0.0;
            for (std::size_t k = npre - per; k < npre; ++k) {
                sq += x[k] * x[k];
                const double d = x[k] - x[k - per];
                dq += d * d;
            }
            nominal = std::max(nominal, std::sqrt(sq / static_cast<double>(per)));
            delta = std::max(delta, std::sqrt(dq / static_cast<double>(per)));
        }
        if (nominal > 0.0) worst = std::max(worst, delta / nominal);
    }
    ss.convergence_delta = worst;
    if (worst > opt.tolerance) {
        std::ostringstream os;
        os << "not at steady state at t = " << ss.t_decouple << " s: period-to-period RMS delta " << worst
           << " of nominal exceeds " << opt.tolerance;
        throw NumericalError(os.str());
    }
    // Phasors referenced to absolute time: sample j of pre sits at step index (k_ss - npre + j).
    const std::size_t k_first = k_ss - npre;
    auto phasor = [&](int ch) {
        cplx acc{0.0, 0.0};
        const std::size_t n = n_periods * per;
        for (std::size_t j = npre - n; j < npre; ++j) {
            const double t = static_cast<double>(k_first + j) * dt;
            acc += pre[static_cast<std::size_t>(ch)][j] * std::polar(1.0, -two_pi * *f0 * t);
        }
        return acc * (2.0 / static_cast<double>(n));
    };
    ss.v_phasor = {phasor(0), phasor(1), phasor(2)};
    ss.i_phasor = {phasor(3), phasor(4), phasor(5)};
    const cplx vp = fortescue_forward(ss.v_phasor).pos;
    ss.theta0 = std::abs(vp) > 0.0 ? std::arg(vp) : 0.0;
    return ss;
}

FundamentalSourceSpec rebuild_source(const SteadyStateRecord& ss, Strategy strategy, Frame frame) {
    const auto& x = strategy == Strategy::SeriesVoltage ? ss.v_phasor : ss.i_phasor;
    switch (frame) {
        case Frame::Abc: {
            FundamentalSourceSpec s;
            s.form = FundamentalSourceSpec::Form::Balanced;
            s.f0 = ss.f0;
            s.peak = {std::abs(x.a), std::abs(x.b), std::abs(x.c)};
            s.phase = {std::arg(x.a), std::arg(x.b), std::arg(x.c)};
            return s;
        }
        case Frame::Seq0pn: {
            const auto q = fortescue_forward(x);
            SequencePhasorSet set;
            const cplx v[3] = {q.zero, q.pos, q.neg};
            for (int k = 0; k < 3; ++k) {
                set.magnitude[k] = std::abs(v[k]);
                set.angle[k] = std::arg(v[k]);
            }
            return FundamentalSourceSpec::unbalanced(set, ss.f0);
        }
        case Frame::Dq0: {
            const cplx z = fortescue_forward(x).pos * std::polar(1.0, -ss.theta0);
            return FundamentalSourceSpec::dq0_form(z.real(), -z.imag(), 0.0, ss.f0, ss.theta0);
        }
    }
    return {};
}

Circuit decouple_and_rebuild(const Circuit& c, const SteadyStateRecord& ss, Side side, Strategy strategy,
                             const FundamentalSourceSpec& source) {
    (void)ss;
    if (!c.pos) throw ConfigError("circuit has no PoS");
    const auto keep = side_elements(c, side);
    if (keep.empty()) {
        throw ConfigError(std::string("side selection leaves the scanned subsystem empty (side ") +
                          (side == Side::Left ? "left" : "right") + ")");
    }
    bool any_branch = false;
    Circuit out;
    for (const auto& name : keep) {
        const auto* e = c.find(name);
        out.elements.push_back(*e);
        any_branch = any_branch || e->kind != ElementKind::CurrentSource3;
    }
    if (!any_branch) {
        throw ConfigError("scanned subsystem holds only current sources and no device or passive path");
    }
    if (strategy == Strategy::SeriesVoltage) out.add_vsource(kScanSourceName, *c.pos, source);
    else out.add_isource(kScanSourceName, *c.pos, source);
    out.set_pos(*c.pos);
    return out;
}

std::array<std::string, 3> axis_names(Frame f) {
    switch (f) {
        case Frame::Abc: return {"a", "b", "c"};
        case Frame::Seq0pn: return {"0", "p", "n"};
        case Frame::Dq0: return {"d", "q", "0"};
    }
    return {};
}

int axis_from_string(Frame f, const std::string& s) {
    const auto names = axis_names(f);
    const auto l = lower(s);
    for (int k = 0; k < 3; ++k) {
        if (names[static_cast<std::size_t>(k)] == l) return k;
    }
    throw ConfigError("axis '" + s + "' is not valid in the " + to_string(f) + " frame");
}

Perturbation make_injection(Frame frame, int axis, const Excitation& ex, double t_on, const ReferenceAngle& ref) {
    if (axis < 0 || axis > 2) throw ConfigError("injection axis out of range");
    switch (frame) {
        case Frame::Abc:
            return [ex, axis, t_on](double t) {
                ThreePhaseSample v;
                if (t < t_on) return v;
                const double x = ex.real(t - t_on);
                (axis == 0 ? v.a : axis == 1 ? v.b : v.c) = x;
                return v;
            };
        case Frame::Seq0pn:
            return [ex, axis, t_on](double t) {
                if (t < t_on) return ThreePhaseSample{};
                const cplx z = ex.analytic(t - t_on);
                SequenceSample s{};
                (axis == 0 ? s.zero : axis == 1 ? s.pos : s.neg) = z;
                const auto p = fortescue_inverse(s);
                return ThreePhaseSample{p.a.real(), p.b.real(), p.c.real()};
            };
        case Frame::Dq0:
            return [ex, axis, t_on, ref](double t) {
                if (t < t_on) return ThreePhaseSample{};
                Dq0Sample s;
                const double x = ex.real(t - t_on);
                (axis == 0 ? s.d : axis == 1 ? s.q : s.zero) = x;
                return park_inverse(s, reference_angle(ref, t));
            };
    }
    return {};
}

}  // namespace siad
