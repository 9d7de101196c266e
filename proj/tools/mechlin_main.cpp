// mechlin: decide mechanical feedback linearizability, synthesize the
// transformation, and validate it by simulation.
//
//   mechlin check     <system.json>              run the structural conditions
//   mechlin linearize <system.json>              build diffeomorphism + feedback
//   mechlin simulate  <system.json> <artifact>   integrate both sides, compare

#include "CLI11.hpp"
#include "mechlin/checker.hpp"
#include "mechlin/parse.hpp"
#include "mechlin/simulate.hpp"
#include "mechlin/synthesis.hpp"
#include "mechlin/systemio.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace mechlin;

namespace exit_code {
constexpr int ok = 0;
constexpr int input_error = 1;
constexpr int not_linearizable = 2;
constexpr int inconclusive = 3;
constexpr int output_not_found = 4;
constexpr int synthesis_failed = 5;
constexpr int artifact_mismatch = 6;
constexpr int integration_failed = 7;
}  // namespace exit_code

std::string format_vector(const Eigen::VectorXd& v) {
    std::ostringstream out;
    out.precision(12);
    out << "(";
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v(i);
    out << ")";
    return std::move(out).str();
}

std::string format_witness(const Point& w) {
    if (w.x.size() == 0) return "";
    std::string s = " at x = " + format_vector(w.x);
    if (w.y) s += ", y = " + format_vector(*w.y);
    return s;
}

int overall_exit(Overall o) {
    switch (o) {
        case Overall::Linearizable: return exit_code::ok;
        case Overall::NotLinearizable: return exit_code::not_linearizable;
        case Overall::Inconclusive: return exit_code::inconclusive;
    }
    return exit_code::input_error;
}

struct CheckFlags {
    int samples = SamplingPlan{}.sample_count;
    double tol = SamplingPlan{}.membership_tol;
    unsigned seed = SamplingPlan{}.rng_seed;
    std::string format = "text";
};

void add_check_flags(CLI::App& cmd, CheckFlags& flags) {
    cmd.add_option("--samples", flags.samples, "Sample points drawn from the domain box")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd.add_option("--tol", flags.tol,
                   "Numerical tolerance for rank decisions and membership residuals")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd.add_option("--seed", flags.seed, "Sampling seed (env MECHLIN_SEED overrides the default)")
        ->envname("MECHLIN_SEED")
        ->capture_default_str();
}

SamplingPlan make_plan(const CheckFlags& flags) {
    SamplingPlan plan;
    plan.sample_count = flags.samples;
    plan.rng_seed = flags.seed;
    plan.rank_tol = flags.tol;
    plan.membership_tol = flags.tol;
    plan.validate();
    return plan;
}

void print_model_summary(const Linearization& lin, std::ostream& os) {
    const auto n = lin.model.E.rows();
    os << "output h = " << to_string(lin.output.h) << "\n";
    os << "  annihilation residual " << lin.output.annihilation_residual
       << ", transversality margin " << lin.output.transversality_margin << "\n";
    os << "diffeomorphism:\n";
    for (std::size_t j = 0; j < lin.diffeo.phi.size(); ++j)
        os << "  phi" << j + 1 << " = " << to_string(lin.diffeo.phi[j]) << "\n";
    os << "feedback:\n";
    os << "  alpha = " << to_string(lin.feedback.alpha) << "\n";
    os << "  beta  = " << to_string(lin.feedback.beta) << "\n";
    for (int j = 1; j <= static_cast<int>(n); ++j)
        for (int k = j; k <= static_cast<int>(n); ++k)
            if (!is_zero(lin.feedback.gamma.at(j, k)))
                os << "  gamma[" << j << "," << k
                   << "] = " << to_string(lin.feedback.gamma.at(j, k)) << "\n";
    os << "linear model (controllable " << n << "-chain):\n";
    for (Eigen::Index i = 0; i < n; ++i) {
        os << (i == 0 ? "  E = [" : "      [");
        for (Eigen::Index j = 0; j < n; ++j) os << (j ? ", " : "") << lin.model.E(i, j);
        os << "]\n";
    }
    os << "  b = " << format_vector(lin.model.b) << ", offset = "
       << format_vector(lin.model.offset) << "\n";
    os << "  fit residual " << lin.model.fit_residual << "\n";
    if (lin.lambda != nullptr)
        os << "curvature correction engaged: lambda = " << to_string(lin.lambda) << "\n";
}

std::vector<double> parse_numbers(const std::string& text) {
    std::string cleaned = text;
    for (auto& c : cleaned)
        if (c == ',') c = ' ';
    std::istringstream in(cleaned);
    std::vector<double> out;
    double v = 0.0;
    while (in >> v) out.push_back(v);
    if (!in.eof()) throw std::runtime_error("non-numeric entry in \"" + text + "\"");
    return out;
}

ControlSignal parse_utilde(const std::string& spec, double T) {
    if (spec == "zero") return ControlSignal::zero();
    if (spec.rfind("sin:", 0) == 0) {
        const auto nums = parse_numbers(spec.substr(4));
        if (nums.size() != 2)
            throw std::runtime_error("--utilde sin form needs \"sin:amplitude,angular-frequency\"");
        return ControlSignal::sine(nums[0], nums[1]);
    }
    // Otherwise a table file: two columns per line (time, value), uniform time
    // grid, '#' comments allowed.
    std::ifstream in(spec);
    if (!in) throw std::runtime_error("cannot open input table " + spec);
    std::vector<double> times;
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto nums = parse_numbers(line);
        if (nums.size() != 2)
            throw std::runtime_error("input table " + spec +
                                     ": each line needs two columns (time, value)");
        times.push_back(nums[0]);
        values.push_back(nums[1]);
    }
    if (times.size() < 2) throw std::runtime_error("input table " + spec + " needs >= 2 rows");
    const double dt = times[1] - times[0];
    if (dt <= 0.0) throw std::runtime_error("input table " + spec + ": times must increase");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (std::abs(times[k] - times[0] - static_cast<double>(k) * dt) > 1e-9 * (1.0 + T))
            throw std::runtime_error("input table " + spec + ": time grid must be uniform");
    return ControlSignal::table(times[0], dt, std::move(values));
}

std::string linear_csv_path(const std::string& out) {
    const auto dot = out.find_last_of('.');
    const auto slash = out.find_last_of("/\\");
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return out + ".linear";
    return out.substr(0, dot) + ".linear" + out.substr(dot);
}

int run_check(const std::string& path, const CheckFlags& flags) {
    const auto sys = load_system(path);
    const auto report = check_all(sys, make_plan(flags));
    if (flags.format == "json")
        std::cout << report_to_json(report);
    else
        std::cout << report_to_text(report);
    return overall_exit(report.overall);
}

int run_linearize(const std::string& path, const CheckFlags& flags,
                  const std::optional<std::string>& output_expr,
                  const std::optional<std::string>& emit_path) {
    const auto sys = load_system(path);
    ExprPtr h;
    if (output_expr) {
        try {
            h = parse_expr(*output_expr);
        } catch (const ParseError& err) {
            std::cerr << "mechlin: --output: " << err.what() << " at offset " << err.position
                      << "\n";
            return exit_code::input_error;
        }
    }

    Linearization lin;
    try {
        lin = linearize_pipeline(sys, make_plan(flags), h);
    } catch (const OutputNotFound& err) {
        std::cerr << "mechlin: " << err.what() << "\n"
                  << "mechlin: supply a candidate output explicitly with --output \"<expr>\"\n";
        return exit_code::output_not_found;
    } catch (const SynthesisError& err) {
        std::cerr << "mechlin: synthesis failed: " << err.what() << format_witness(err.witness)
                  << "\n";
        return exit_code::synthesis_failed;
    }

    print_model_summary(lin, std::cout);
    if (emit_path) {
        save_artifact(lin, sys, *emit_path);
        std::cout << "artifact written to " << *emit_path << "\n";
    }
    return exit_code::ok;
}

int run_simulate(const std::string& path, const std::string& artifact_path, const std::string& z0_text,
                 const std::string& utilde_spec, double T, double dt, const std::string& out_path) {
    const auto sys = load_system(path);
    Linearization lin;
    try {
        lin = load_artifact(artifact_path, sys);
    } catch (const ArtifactMismatch& err) {
        std::cerr << "mechlin: " << err.what() << "\n";
        return exit_code::artifact_mismatch;
    }

    if (!(dt > 0.0)) {
        std::cerr << "mechlin: --dt must be positive\n";
        return exit_code::input_error;
    }
    if (!(T >= dt)) {
        std::cerr << "mechlin: --T must be at least --dt\n";
        return exit_code::input_error;
    }

    const int n = sys.dim();
    Point z0;
    z0.x = Eigen::VectorXd::Zero(n);
    z0.y = Eigen::VectorXd::Zero(n);
    if (!z0_text.empty()) {
        const auto nums = parse_numbers(z0_text);
        if (static_cast<int>(nums.size()) != 2 * n) {
            std::cerr << "mechlin: --z0 needs " << 2 * n << " numbers (x then y), got "
                      << nums.size() << "\n";
            return exit_code::input_error;
        }
        for (int i = 0; i < n; ++i) {
            z0.x(i) = nums[static_cast<std::size_t>(i)];
            (*z0.y)(i) = nums[static_cast<std::size_t>(n + i)];
        }
    }
    if (!box_contains(sys.domain(), z0.x)) {
        std::cerr << "mechlin: --z0 configuration lies outside the system's domain box\n";
        return exit_code::input_error;
    }

    ControlSignal utilde;
    try {
        utilde = parse_utilde(utilde_spec, T);
    } catch (const std::exception& err) {
        std::cerr << "mechlin: " << err.what() << "\n";
        return exit_code::input_error;
    }

    try {
        const DiffeoTransformer lift(sys, lin.diffeo);
        const auto start = lift.at(z0.x);
        Point lz0;
        lz0.x = start.z;
        lz0.y = start.jacobian * *z0.y;

        const auto traj = integrate(sys, z0, closed_loop(lin.feedback, utilde, sys.params()), T, dt);
        const auto ltraj = integrate(lin.model, lz0, utilde, T, dt);

        double err = 0.0;
        for (std::size_t k = 0; k < traj.size(); ++k) {
            const auto tp = lift.at(traj.positions[k]);
            err = std::max(err, (tp.z - ltraj.positions[k]).cwiseAbs().maxCoeff());
            err = std::max(err, (tp.jacobian * traj.velocities[k] - ltraj.velocities[k])
                                    .cwiseAbs()
                                    .maxCoeff());
        }

        write_csv(traj, out_path);
        const std::string lpath = linear_csv_path(out_path);
        write_csv(ltraj, lpath);
        std::cout << "trajectory written to " << out_path << " (original) and " << lpath
                  << " (linear model)\n";
        std::printf("correspondence_error = %.17g\n", err);
    } catch (const SimulationError& err) {
        std::cerr << "mechlin: integration failed: " << err.what() << "\n";
        return exit_code::integration_failed;
    } catch (const SynthesisError& err) {
        std::cerr << "mechlin: transformation broke down along the trajectory: " << err.what()
                  << format_witness(err.witness) << "\n";
        return exit_code::integration_failed;
    }
    return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mechanical feedback linearization toolkit"};
    app.require_subcommand(1);

    std::string system_path;
    CheckFlags flags;

    auto* check = app.add_subcommand("check", "Decide mechanical feedback linearizability");
    check->add_option("system", system_path, "System definition JSON")->required();
    add_check_flags(*check, flags);
    check->add_option("--format", flags.format, "Report format")
        ->check(CLI::IsMember({"text", "json"}))
        ->capture_default_str();

    std::optional<std::string> output_expr;
    std::optional<std::string> emit_path;
    auto* linearize =
        app.add_subcommand("linearize", "Synthesize the linearizing transformation");
    linearize->add_option("system", system_path, "System definition JSON")->required();
    add_check_flags(*linearize, flags);
    linearize->add_option("--output", output_expr,
                          "Candidate linearizing output h(x) (default: search)");
    linearize->add_option("--emit", emit_path, "Write the transformation artifact to this path");

    std::string artifact_path;
    std::string z0_text;
    std::string utilde_spec = "zero";
    double T = 2.0;
    double dt = 1e-3;
    std::string out_path = "trajectory.csv";
    auto* simulate =
        app.add_subcommand("simulate", "Integrate both sides and measure their correspondence");
    simulate->add_option("system", system_path, "System definition JSON")->required();
    simulate->add_option("artifact", artifact_path, "Transformation artifact from linearize --emit")
        ->required();
    simulate->add_option("--z0", z0_text,
                         "Start state: comma-separated x1..xn,y1..yn (default: origin, zero velocity)");
    simulate->add_option("--utilde", utilde_spec,
                         "New input: \"zero\", \"sin:a,w\", or a two-column (time, value) table file")
        ->capture_default_str();
    simulate->add_option("--T", T, "Horizon")->capture_default_str();
    simulate->add_option("--dt", dt, "Fixed integration step")->capture_default_str();
    simulate->add_option("--out", out_path,
                         "Trajectory CSV path; the linear model's trajectory goes to a "
                         "\".linear\" sibling")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_code::input_error;
    }

    try {
        if (check->parsed()) return run_check(system_path, flags);
        if (linearize->parsed()) return run_linearize(system_path, flags, output_expr, emit_path);
        return run_simulate(system_path, artifact_path, z0_text, utilde_spec, T, dt, out_path);
    } catch (const FileFormatError& err) {
        std::cerr << "mechlin: " << err.what() << "\n";
        return exit_code::input_error;
    } catch (const std::exception& err) {
        std::cerr << "mechlin: " << err.what() << "\n";
        return exit_code::input_error;
    }
}
