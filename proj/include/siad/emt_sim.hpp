#pragma once

#include "siad/frames.hpp"
#include "siad/record.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace siad {

// =============================================================================
// Synthetic dq-frame device
// =============================================================================

/// Real-coefficient rational function, coefficients in descending powers of s.
struct RationalTF {
    std::vector<double> num{0.0};
    std::vector<double> den{1.0};

    [[nodiscard]] cplx eval(cplx s) const;
    [[nodiscard]] bool is_zero() const;
    /// Throws unless deg num <= deg den and den(0) != 0.
    void validate() const;
};

/// 2x2 dq admittance i_dq = Y(s) v_dq, realized as a controlled current at its terminals.
struct SyntheticDevice {
    std::array<std::array<RationalTF, 2>, 2> y;  ///< y[row][col], 0 = d, 1 = q
    ReferenceAngle ref;

    [[nodiscard]] Eigen::Matrix2cd eval(cplx s) const;
    void validate() const;
};

// =============================================================================
// Circuit description
// =============================================================================

struct FundamentalSourceSpec {
    enum class Form { Balanced, Unbalanced, Dq0 };
    Form form = Form::Balanced;

    double f0 = 50.0;
    std::array<double, 3> peak{0.0, 0.0, 0.0};  ///< balanced form; per-phase for rebuilt sources
    std::array<double, 3> phase{0.0, 0.0, 0.0};
    SequencePhasorSet sequence;                  ///< unbalanced form
    Dq0Sample dq0;                               ///< dq0 form, angle from ref
    ReferenceAngle ref;

    /// Amplitude scaling by step_factor from step_time onward.
    double step_time = std::numeric_limits<double>::infinity();
    double step_factor = 1.0;

    [[nodiscard]] ThreePhaseSample value(double t) const;
    /// Complex amplitude per phase at f0 (value = Re{phasor * exp(j w0 t)}); dq0 zero axis ignored.
    [[nodiscard]] ThreePhasePhasor phasor() const;

    static FundamentalSourceSpec balanced(double peak, double f0, double phi_a, double phi_b,
                                          double phi_c);
    static FundamentalSourceSpec unbalanced(const SequencePhasorSet& s, double f0);
    static FundamentalSourceSpec dq0_form(double vd, double vq, double v0, double f0, double theta0);
};

enum class ElementKind { Resistor, Inductor, Capacitor, Switch, VoltageSource3, CurrentSource3, Device };

struct Element {
    ElementKind kind = ElementKind::Resistor;
    std::string name;
    std::vector<std::string> nodes;  ///< 2 for R/L/C/SW, 3 for sources and devices
    double value = 0.0;              ///< ohms, henries, farads
    bool closed = true;              ///< switches
    FundamentalSourceSpec source;
    std::shared_ptr<const SyntheticDevice> device;
    std::string device_file;  ///< netlist reference, kept for printing
};

struct Circuit {
    std::vector<Element> elements;
    std::optional<std::array<std::string, 3>> pos;

    Circuit& add_resistor(const std::string& name, const std::string& a, const std::string& b, double ohms);
    Circuit& add_inductor(const std::string& name, const std::string& a, const std::string& b, double henries);
    Circuit& add_capacitor(const std::string& name, const std::string& a, const std::string& b, double farads);
    Circuit& add_switch(const std::string& name, const std::string& a, const std::string& b, bool closed);
    Circuit& add_vsource(const std::string& name, const std::array<std::string, 3>& nodes,
                         const FundamentalSourceSpec& spec);
    Circuit& add_isource(const std::string& name, const std::array<std::string, 3>& nodes,
                         const FundamentalSourceSpec& spec);
    Circuit& add_device(const std::string& name, const std::array<std::string, 3>& nodes,
                        std::shared_ptr<const SyntheticDevice> dev);
    Circuit& set_pos(const std::array<std::string, 3>& nodes);

    [[nodiscard]] const Element* find(const std::string& name) const;
    [[nodiscard]] Element* find(const std::string& name);
    /// Duplicate names, non-positive values, missing PoS nodes.
    void validate() const;
    /// Fundamental frequency shared by all sources and devices, if any.
    [[nodiscard]] std::optional<double> fundamental_hz() const;
};

[[nodiscard]] bool is_ground(const std::string& node);

// =============================================================================
// Solver
// =============================================================================

struct SolverOptions {
    double dt = 10e-6;
    double overflow_bound = 1e9;
    /// Start from the discrete sinusoidal steady state at the source frequency.
    bool phasor_init = true;
};

/// Extra three-phase waveform added to a source element; called with the step time.
using Perturbation = std::function<ThreePhaseSample(double t)>;

/// State carried across decoupling, keyed by node and element names.
struct Snapshot {
    std::size_t step = 0;
    std::map<std::string, double> node_voltage;
    std::map<std::string, std::array<double, 2>> branch_state;  ///< L/C: {current, voltage}
    std::map<std::string, std::vector<double>> device_state;
};

class Solver {
public:
    /// Assembles and factors the companion-model nodal matrix.
    Solver(const Circuit& c, SolverOptions opt);

    void set_perturbation(const std::string& source_name, Perturbation p);
    void step();
    void run_steps(std::size_t n);

    [[nodiscard]] double time() const { return static_cast<double>(step_) * opt_.dt; }
    [[nodiscard]] std::size_t step_index() const { return step_; }
    [[nodiscard]] double dt() const { return opt_.dt; }

    [[nodiscard]] int node_index(const std::string& name) const;  ///< -1 for ground
    [[nodiscard]] double node_voltage(int idx) const { return idx < 0 ? 0.0 : x_[idx]; }
    [[nodiscard]] double node_voltage(const std::string& name) const { return node_voltage(node_index(name)); }
    [[nodiscard]] int element_index(const std::string& name) const;
    /// Current flowing from the element's terminal on node_name into the element.
    [[nodiscard]] double current_into(int element, const std::string& node_name) const;
    /// Largest |sum of currents leaving a node| over all non-ground nodes, and the largest branch current.
    [[nodiscard]] std::pair<double, double> kcl_residual() const;
    /// Stored energy in inductors and capacitors.
    [[nodiscard]] double stored_energy() const;

    [[nodiscard]] Snapshot snapshot() const;
    /// Copies matching node and element states; sets the step counter.
    void restore(const Snapshot& s);

    [[nodiscard]] const Circuit& circuit() const { return circuit_; }

private:
    struct Branch {
        int element = -1;
        int a = -1, b = -1;
        ElementKind kind;
        double g = 0.0;
        double i = 0.0;    // current a -> b at the last step
        double vab = 0.0;  // voltage a - b at the last step
    };
    struct Source3 {
        int element = -1;
        std::array<int, 3> node{};
        bool voltage = true;
        int first_row = 0;  // MNA rows (voltage sources)
        Perturbation perturbation;
        std::array<double, 3> value{};  // last applied
    };
    struct DeviceEntry {
        Eigen::MatrixXd F;
        Eigen::VectorXd G, C;
        Eigen::VectorXd x;
        double deff = 0.0;
    };
    struct Device3 {
        int element = -1;
        std::array<int, 3> node{};
        ReferenceAngle ref;
        std::array<std::array<DeviceEntry, 2>, 2> entry;
        Eigen::Matrix2d deff = Eigen::Matrix2d::Zero();
        bool time_varying = false;
        bool has_states = false;
        Eigen::Vector2d u_prev = Eigen::Vector2d::Zero();
        Eigen::Vector3d i_abc = Eigen::Vector3d::Zero();
    };

    Circuit circuit_;
    SolverOptions opt_;
    std::map<std::string, int> node_ids_;
    std::vector<std::string> node_names_;
    std::map<std::string, int> element_ids_;
    std::vector<Branch> branches_;
    std::vector<int> branch_of_element_;
    std::vector<Source3> sources_;
    std::vector<int> source_of_element_;
    std::vector<Device3> devices_;
    std::vector<int> device_of_element_;
    int n_nodes_ = 0;
    int n_ = 0;
    Eigen::MatrixXd a0_;
    Eigen::MatrixXd a_work_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    bool refactor_each_step_ = false;
    Eigen::VectorXd x_;
    Eigen::VectorXd rhs_;
    std::size_t step_ = 0;

    void check_connectivity() const;
    void factor(const Eigen::MatrixXd& a);
    [[nodiscard]] Eigen::Matrix3d device_conductance(const Device3& d, double theta) const;
    void phasor_initialize();
};

/// PoS probe: three node voltages and the current drawn at those nodes by a set of elements.
struct PosProbe {
    std::array<std::string, 3> nodes;
    std::vector<std::string> elements;
};

/// Fixed-step march of duration seconds recording the probe from record_from onward; the starting
/// state is included when it already lies in that range.
/// Channels: va, vb, vc, ia, ib, ic.
[[nodiscard]] WaveformRecord run(Solver& s, double duration, const PosProbe& probe,
                                 double record_from = 0.0);
[[nodiscard]] WaveformRecord run(const Circuit& c, const SolverOptions& opt, double duration,
                                 const PosProbe& probe, double record_from = 0.0);

// =============================================================================
// Two-stage scan choreography
// =============================================================================

enum class Frame { Abc, Seq0pn, Dq0 };
enum class Strategy { SeriesVoltage, ParallelCurrent };
/// Left: elements grouped with independent sources; right: the rest.
enum class Side { Left, Right };

[[nodiscard]] std::string to_string(Frame f);
[[nodiscard]] std::string to_string(Strategy s);
[[nodiscard]] Frame frame_from_string(const std::string& s);
[[nodiscard]] Strategy strategy_from_string(const std::string& s);
[[nodiscard]] Side side_from_string(const std::string& s);

/// Element names on each side of the PoS cut.
[[nodiscard]] std::vector<std::string> side_elements(const Circuit& c, Side side);

struct SteadyStateRecord {
    WaveformRecord abc;           ///< va..ic over the analysis window (absolute times)
    ThreePhasePhasor v_phasor;    ///< per-phase fundamental phasors
    ThreePhasePhasor i_phasor;
    double f0 = 50.0;
    double theta0 = 0.0;          ///< angle of the positive-sequence voltage
    Snapshot at_decoupling;
    double t_decouple = 0.0;
    double convergence_delta = 0.0;  ///< period-to-period RMS delta relative to nominal
};

struct CaptureOptions {
    SolverOptions solver;
    double settle_time = 0.1;   ///< decoupling instant t_ss
    WindowSpec window;          ///< analysis window, t_start >= settle_time
    Side side = Side::Right;
    double tolerance = 1e-6;
    std::optional<double> f0;
};

/// Stage 1: runs the coupled circuit, checks convergence at settle_time, stores the window record.
[[nodiscard]] SteadyStateRecord capture_steady_state(const Circuit& c, const CaptureOptions& opt);

/// Fundamental phasor of a record channel over its last n_periods whole periods ending at index end.
[[nodiscard]] cplx fundamental_phasor(const std::vector<double>& x, double dt, double f0,
                                      std::size_t end, std::size_t n_periods);

/// Ideal source replicating the steady state at the PoS in the requested frame's form.
[[nodiscard]] FundamentalSourceSpec rebuild_source(const SteadyStateRecord& ss, Strategy strategy,
                                                   Frame frame);

/// Name of the ideal source inserted by decouple_and_rebuild.
inline constexpr const char* kScanSourceName = "__scan_source";

/// Stage 2 circuit: scanned side plus an ideal source at the PoS.
[[nodiscard]] Circuit decouple_and_rebuild(const Circuit& c, const SteadyStateRecord& ss, Side side,
                                           Strategy strategy, const FundamentalSourceSpec& source);

/// Axis selector within a frame: abc {a,b,c}, 0pn {0,p,n}, dq0 {d,q,0}.
[[nodiscard]] std::array<std::string, 3> axis_names(Frame f);
[[nodiscard]] int axis_from_string(Frame f, const std::string& s);

/// Real- or analytic-valued excitation sample source, indexed by time since onset.
struct Excitation {
    std::function<double(double tau)> real;
    std::function<cplx(double tau)> analytic;
};

/// Perturbation added to the scan source from t_on: abc directly, 0pn via Re{T^-1 eta x},
/// dq0 via the inverse Park transform with the running reference angle.
[[nodiscard]] Perturbation make_injection(Frame frame, int axis, const Excitation& ex, double t_on,
                                          const ReferenceAngle& ref);

}  // namespace siad
