#pragma once

// Subcommand dispatch for the hodi executable. Kept in a header so tests can call run()
// without spawning processes.

#include "hodi/case_io.hpp"
#include "hodi/frequency.hpp"
#include "hodi/market.hpp"
#include "hodi/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hodi::cli {

namespace fs = std::filesystem;

enum ExitCode {
    kOk = 0,
    kOther = 1,
    kUsage = 2,
    kInvalidInput = 3,
    kNetwork = 4,
    kInfeasible = 5,
    kNumerical = 6,
    kDegenerate = 7,
};

inline int exit_code(ErrorKind k)
{
    switch (k) {
    case ErrorKind::InvalidInput: return kInvalidInput;
    case ErrorKind::Network: return kNetwork;
    case ErrorKind::Infeasible: return kInfeasible;
    case ErrorKind::Numerical: return kNumerical;
    case ErrorKind::Degenerate: return kDegenerate;
    }
    return kOther;
}

struct Options {
    std::string command;
    std::string case_path;
    std::string out_dir = ".";
    std::string variant = "standard";
    std::string allocation;
    std::string bids;
    std::optional<unsigned> seed;
    bool solver_log = false;
    bool dump_problem = false;
    bool dump_jacobian = false;
    bool dump_reduced = false;
    std::optional<double> rocof_window;
    std::optional<double> dt;
    std::optional<double> horizon;
};

// ---- small CSV helpers ------------------------------------------------------------------------

using Row = std::vector<std::string>;

struct Table {
    Row header;
    std::vector<Row> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t k = 0; k < header.size(); ++k) {
            if (header[k] == name) {
                return k;
            }
        }
        throw Error(ErrorKind::InvalidInput, "missing column " + name);
    }
    /// Value of a key,value table.
    std::string value(const std::string& key) const
    {
        for (const auto& r : rows) {
            if (!r.empty() && r[0] == key) {
                return r.size() > 1 ? r[1] : "";
            }
        }
        throw Error(ErrorKind::InvalidInput, "missing key " + key);
    }
};

inline Table read_table(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::InvalidInput, "cannot open " + path.string());
    }
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto cells = detail::split_csv_line(line);
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    if (first) {
        throw Error(ErrorKind::InvalidInput, path.string() + " is empty");
    }
    return t;
}

inline double to_number(const std::string& s, const std::string& where)
{
    return detail::csv_number(s, where);
}

class CsvWriter {
public:
    CsvWriter(const fs::path& path, const Row& header) : os_(path), path_(path)
    {
        if (!os_) {
            throw Error(ErrorKind::InvalidInput, "cannot write " + path.string());
        }
        row(header);
    }
    void row(const Row& cells)
    {
        for (std::size_t k = 0; k < cells.size(); ++k) {
            os_ << (k ? "," : "") << cells[k];
        }
        os_ << '\n';
    }
    template <typename T>
    void kv(const std::string& key, const T& value)
    {
        if constexpr (std::is_same_v<T, double>) {
            row({key, format_double(value)});
        } else if constexpr (std::is_same_v<T, bool>) {
            row({key, value ? "true" : "false"});
        } else if constexpr (std::is_arithmetic_v<T>) {
            row({key, std::to_string(value)});
        } else {
            row({key, std::string(value)});
        }
    }

private:
    std::ofstream os_;
    fs::path path_;
};

inline void write_matrix_csv(const fs::path& path, const Matrix& m, const std::vector<int>& row_ids, const std::vector<int>& col_ids)
{
    Row header{"bus"};
    for (int id : col_ids) {
        header.push_back(std::to_string(id));
    }
    CsvWriter w(path, header);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Row r{std::to_string(row_ids[static_cast<std::size_t>(i)])};
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            r.push_back(format_double(m(i, j)));
        }
        w.row(r);
    }
}

// ---- shared steps -----------------------------------------------------------------------------

struct Context {
    Options opt;
    SystemCase system;
    std::vector<std::string> provenance;
    fs::path out;
    std::ostream* log = &std::cout;
};

inline Context load(const Options& opt, std::ostream& log)
{
    if (opt.case_path.empty()) {
        throw Error(ErrorKind::InvalidInput, "--case is required");
    }
    Context ctx;
    ctx.opt = opt;
    ctx.log = &log;
    ParsedCase pc = parse_case(opt.case_path);
    ctx.system = std::move(pc.system);
    ctx.provenance.push_back("case: " + fs::path(opt.case_path).filename().string());
    for (auto& d : pc.defaults_applied) {
        ctx.provenance.push_back(d);
    }
    auto& sim = ctx.system.simulation;
    if (opt.rocof_window) {
        sim.rocof_window = *opt.rocof_window;
        ctx.provenance.push_back("simulation.rocof_window = " + format_double(*opt.rocof_window) + " (flag)");
    }
    if (opt.dt) {
        sim.dt = *opt.dt;
        ctx.provenance.push_back("simulation.dt = " + format_double(*opt.dt) + " (flag)");
    }
    if (opt.horizon) {
        sim.horizon = *opt.horizon;
        ctx.provenance.push_back("simulation.horizon = " + format_double(*opt.horizon) + " (flag)");
    }
    if (opt.seed) {
        ctx.provenance.push_back("market.seed = " + std::to_string(*opt.seed) + " (flag)");
    }
    ctx.out = opt.out_dir;
    fs::create_directories(ctx.out);
    std::ofstream prov(ctx.out / "provenance.txt");
    for (const auto& p : ctx.provenance) {
        prov << p << '\n';
    }
    return ctx;
}

inline Variant parse_variant(const std::string& v)
{
    if (v == "standard") {
        return Variant::Standard;
    }
    if (v == "robust") {
        return Variant::Robust;
    }
    throw Error(ErrorKind::InvalidInput, "--variant must be standard or robust");
}

inline ReducedNetwork reduce_and_dump(const Context& ctx)
{
    const Jacobian jac = build_jacobian(ctx.system);
    for (const auto& w : jac.warnings) {
        *ctx.log << "warning: " << w << '\n';
    }
    const ReducedNetwork r = kron_reduce(jac, ctx.system.generator_bus_ids());
    if (ctx.opt.dump_jacobian) {
        write_matrix_csv(ctx.out / "jacobian.csv", jac.H, jac.bus_ids, jac.bus_ids);
    }
    if (ctx.opt.dump_reduced) {
        write_matrix_csv(ctx.out / "reduced.csv", r.L, r.gen_bus_index, r.gen_bus_index);
    }
    return r;
}

inline void write_allocation(const fs::path& path, const Allocation& a, const ConstraintParams& p, double reserve_duration)
{
    CsvWriter w(path, {"unit", "bus", "kind", "m", "d", "cost", "reserve_power_m1", "reserve_power_m2", "reserve_energy_m3"});
    for (const auto& u : a.units) {
        const ReserveEstimate re = reserve_estimates(u.m, u.d, p.rocof_limit, p.sync_limit, reserve_duration);
        w.row({u.id, std::to_string(u.bus), to_string(u.kind), format_double(u.m), format_double(u.d), format_double(u.cost),
               format_double(re.power_m1), format_double(re.power_m2), format_double(re.energy_m3)});
    }
}

/// Allocation rows back from allocation.csv (only unit, bus, kind, m, d, cost are read).
inline std::vector<UnitAllocation> read_allocation(const fs::path& path)
{
    const Table t = read_table(path);
    const std::size_t cu = t.column("unit"), cb = t.column("bus"), cm = t.column("m"), cd = t.column("d"), ck = t.column("kind");
    std::vector<UnitAllocation> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        const std::string where = path.string() + ":" + std::to_string(i + 2);
        if (r.size() != t.header.size()) {
            throw Error(ErrorKind::InvalidInput, where + ": wrong column count");
        }
        UnitAllocation u;
        u.id = r[cu];
        u.bus = static_cast<int>(to_number(r[cb], where));
        u.kind = r[ck] == "SG" ? UnitKind::SG : r[ck] == "GFL" ? UnitKind::GFL : UnitKind::GFM;
        u.m = to_number(r[cm], where);
        u.d = to_number(r[cd], where);
        if (u.m < 0.0 || u.d < 0.0) {
            throw Error(ErrorKind::InvalidInput, where + ": m and d must be non-negative");
        }
        out.push_back(u);
    }
    return out;
}

/// COI-level metrics of nodal totals (model values, not simulated).
struct CoiSummary {
    double rocof = 0.0;
    double steady_state = 0.0;
    double nadir = 0.0;
    std::string regime;
};

inline CoiSummary coi_summary(const SystemCase& c, double total_m, double total_d)
{
    const ConstraintParams p = case_params(c);
    const TurbineAggregate t = aggregate_turbines(c.units, p.aggregation);
    CoiModel model{total_m, total_d, t.r_inv, t.tau, p.disturbance_magnitude};
    const CoiMetrics cm = coi_metrics(model);
    const NadirIntermediates n = nadir(model);
    return {cm.max_rocof, cm.steady_state_dev, n.nadir, to_string(n.regime)};
}

// ---- subcommands ------------------------------------------------------------------------------

inline int cmd_analyze(const Context& ctx)
{
    Context c = ctx;
    c.opt.dump_jacobian = c.opt.dump_reduced = true;
    const ReducedNetwork r = reduce_and_dump(c);
    const ReductionCheck chk = check_reduction(r);
    Vector pu = Vector::Zero(r.size());
    if (!ctx.system.disturbances.empty()) {
        pu = case_disturbance(ctx.system, r);
    }
    CsvWriter w(ctx.out / "disturbance.csv", {"bus", "p_u"});
    for (std::size_t i = 0; i < r.gen_bus_index.size(); ++i) {
        w.row({std::to_string(r.gen_bus_index[i]), format_double(pu(static_cast<Eigen::Index>(i)))});
    }
    CsvWriter s(ctx.out / "analysis_summary.csv", {"key", "value"});
    s.kv("generator_buses", static_cast<long>(r.size()));
    s.kv("load_buses", static_cast<long>(r.load_bus_index.size()));
    s.kv("asymmetry", chk.asymmetry);
    s.kv("max_row_sum", chk.max_row_sum);
    s.kv("near_zero_eigenvalues", static_cast<long>(chk.near_zero_eigenvalues));
    s.kv("total_disturbance", pu.sum());
    *ctx.log << "reduced network: " << r.size() << " generator buses, " << r.load_bus_index.size() << " load buses eliminated\n";
    return kOk;
}

inline int cmd_allocate(const Context& ctx, Variant variant)
{
    const SystemCase c = with_costs(ctx.system, ctx.opt.seed);
    if (!c.params) {
        throw Error(ErrorKind::InvalidInput, "allocate needs a constraints section");
    }
    const ReducedNetwork r = reduce_and_dump(ctx);
    const AllocationModel am = build_model(c, r, variant);
    if (ctx.opt.dump_problem) {
        std::ofstream os(ctx.out / "problem.txt");
        write_problem(os, am.problem);
    }
    SolverConfig cfg;
    cfg.keep_log = ctx.opt.solver_log;
    Solution sol = solve(am.problem, cfg);
    if (ctx.opt.solver_log) {
        std::ofstream os(ctx.out / "solver_log.csv");
        write_solver_log(os, sol.log);
    }
    if (sol.status == SolveStatus::Infeasible) {
        throw Error(ErrorKind::Infeasible, "allocation problem is infeasible: " + sol.message);
    }
    if (sol.status != SolveStatus::Optimal) {
        throw Error(ErrorKind::Numerical, std::string("allocation solve failed (") + to_string(sol.status) + "): " + sol.message);
    }
    Allocation a = decode(am, c, sol.values);
    const ConstraintParams p = *c.params;
    write_allocation(ctx.out / "allocation.csv", a, p, c.simulation.reserve_duration);

    const ConstraintReport cons = check_constraints(am.problem, sol.values);
    {
        CsvWriter w(ctx.out / "constraints.csv", {"constraint", "margin", "holds"});
        for (const auto& it : cons.items) {
            w.row({it.name, format_double(it.margin), it.holds ? "true" : "false"});
        }
    }
    const Certificate cert = certificate_check(a.node_m, a.node_d, r.L, p.beta, p.cos_zeta, a.v,
                                               1e-6 * std::max(1.0, r.L.cwiseAbs().maxCoeff()));
    const CoiSummary coi = coi_summary(c, a.node_m.sum(), a.node_d.sum());
    CsvWriter s(ctx.out / "allocation_summary.csv", {"key", "value"});
    s.kv("variant", variant == Variant::Robust ? "robust" : "standard");
    s.kv("status", to_string(sol.status));
    s.kv("objective", a.objective);
    s.kv("iterations", sol.iterations);
    s.kv("v", a.v);
    s.kv("total_m", a.node_m.sum());
    s.kv("total_d", a.node_d.sum());
    s.kv("decay_block", cert.decay_block);
    s.kv("shift_block", cert.shift_block);
    s.kv("cone_block", cert.cone_block);
    s.kv("certificate_holds", cert.holds);
    s.kv("constraints_hold", cons.all_hold);
    s.kv("coi_rocof", coi.rocof);
    s.kv("coi_steady_state", coi.steady_state);
    s.kv("coi_nadir", coi.nadir);
    s.kv("nadir_regime", coi.regime);
    s.kv("nadir_linear_g", am.nadir_model.g0 + am.nadir_model.grad_m * (a.node_m.sum() - am.nadir_model.m0)
                               + am.nadir_model.grad_d * (a.node_d.sum() - am.nadir_model.d0));
    *ctx.log << "objective " << format_double(a.objective) << ", certificate " << (cert.holds ? "holds" : "FAILS") << '\n';
    return kOk;
}

inline std::vector<UnitAllocation> allocation_input(const Context& ctx)
{
    const fs::path path = ctx.opt.allocation.empty() ? ctx.out / "allocation.csv" : fs::path(ctx.opt.allocation);
    return read_allocation(path);
}

inline int cmd_verify(const Context& ctx)
{
    const ReducedNetwork r = reduce_and_dump(ctx);
    const auto units = allocation_input(ctx);
    const auto [m, d] = nodal_totals(units, r);
    const ConstraintParams p = case_params(ctx.system);
    const Verification v = verify_nodal(m, d, r.L, p);
    {
        CsvWriter w(ctx.out / "modes.csv",
                    {"index", "real", "imag", "in_region", "decay_margin", "cone_residual", "boundary_distance", "zero_mode"});
        for (std::size_t k = 0; k < v.modes.eigenvalues.size(); ++k) {
            const Complex z = v.modes.eigenvalues[k];
            w.row({std::to_string(k), format_double(z.real()), format_double(z.imag()), v.region.in_region[k] ? "true" : "false",
                   format_double(v.region.decay_margin[k]), format_double(v.region.cone_residual[k]), format_double(v.distance[k]),
                   static_cast<int>(k) == v.modes.zero_mode_index ? "true" : "false"});
        }
    }
    CsvWriter s(ctx.out / "verify_summary.csv", {"key", "value"});
    s.kv("all_in_region", v.region.all_in_region);
    s.kv("closest_complex_distance", v.closest_complex_distance());
    s.kv("infinite_modes", v.modes.infinite_count);
    s.kv("certificate_v", v.v);
    s.kv("decay_block", v.certificate.decay_block);
    s.kv("shift_block", v.certificate.shift_block);
    s.kv("cone_block", v.certificate.cone_block);
    s.kv("certificate_holds", v.certificate.holds);
    if (m.sum() > 0.0) {
        const CoiSummary coi = coi_summary(ctx.system, m.sum(), d.sum());
        s.kv("coi_rocof", coi.rocof);
        s.kv("coi_steady_state", coi.steady_state);
        s.kv("coi_nadir", coi.nadir);
        s.kv("rocof_ok", coi.rocof <= p.rocof_limit * (1 + 1e-6));
        s.kv("steady_state_ok", coi.steady_state <= p.sync_limit * (1 + 1e-6));
        s.kv("nadir_ok", coi.nadir <= p.nadir_limit * (1 + 1e-6));
    }
    *ctx.log << "all modes in region: " << (v.region.all_in_region ? "yes" : "no") << '\n';
    return kOk;
}

inline int cmd_simulate(const Context& ctx)
{
    const ReducedNetwork r = reduce_and_dump(ctx);
    const auto units = allocation_input(ctx);
    const SimulationOptions so = case_simulation_options(ctx.system);
    const TrajectorySet tr = simulate_allocation(ctx.system, r, units, so);
    {
        Row header{"time", "omega_coi", "rocof_coi"};
        for (int b : r.gen_bus_index) {
            header.push_back("omega_bus" + std::to_string(b));
        }
        for (const auto& n : tr.unit_names) {
            header.push_back("power_" + n);
        }
        for (const auto& n : tr.unit_names) {
            header.push_back("energy_" + n);
        }
        CsvWriter w(ctx.out / "trajectory.csv", header);
        // Rows every 10 ms (or every step when the step is coarser).
        const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.01 / tr.dt_used)));
        for (std::size_t k = 0; k < tr.time.size(); k += stride) {
            const auto i = static_cast<Eigen::Index>(k);
            Row row{format_double(tr.time[k]), format_double(tr.omega_coi(i)), format_double(tr.rocof_coi(i))};
            for (Eigen::Index j = 0; j < tr.omega.cols(); ++j) {
                row.push_back(format_double(tr.omega(i, j)));
            }
            for (Eigen::Index j = 0; j < tr.unit_power.cols(); ++j) {
                row.push_back(format_double(tr.unit_power(i, j)));
            }
            for (Eigen::Index j = 0; j < tr.unit_energy.cols(); ++j) {
                row.push_back(format_double(tr.unit_energy(i, j)));
            }
            w.row(row);
        }
    }
    const ConstraintParams p = case_params(ctx.system);
    CsvWriter s(ctx.out / "simulation_summary.csv", {"key", "value"});
    s.kv("dt_used", tr.dt_used);
    s.kv("retries", tr.retries);
    s.kv("max_abs_omega_coi", tr.max_abs_coi());
    s.kv("max_abs_rocof_coi", tr.max_abs_rocof_coi());
    s.kv("max_abs_rocof_node", tr.max_abs_rocof());
    s.kv("final_abs_omega_coi", tr.final_abs_coi());
    s.kv("nadir_limit", p.nadir_limit);
    s.kv("rocof_limit", p.rocof_limit);
    s.kv("sync_limit", p.sync_limit);
    s.kv("nadir_ok", tr.max_abs_coi() <= p.nadir_limit * (1 + 1e-6));
    s.kv("rocof_ok", tr.max_abs_rocof_coi() <= p.rocof_limit * (1 + 1e-6));
    s.kv("steady_state_ok", tr.final_abs_coi() <= p.sync_limit * (1 + 1e-6));
    *ctx.log << "max |omega_COI| " << format_double(tr.max_abs_coi()) << " rad/s\n";
    return kOk;
}

inline int cmd_market(const Context& ctx)
{
    std::ifstream in(ctx.opt.bids);
    if (!in) {
        throw Error(ErrorKind::InvalidInput, "cannot open bids file " + ctx.opt.bids);
    }
    const auto bids = parse_bids_csv(in, ctx.opt.bids);
    const ConstraintParams p = case_params(ctx.system);
    ClearingOptions co;
    co.variant = parse_variant(ctx.opt.variant) == Variant::Robust ? MarketVariant::Robust : MarketVariant::Standard;
    const Clearing cl = clear(ctx.system, bids, p, co);
    std::optional<double> cap;
    if (ctx.system.market) {
        cap = ctx.system.market->payment_cap;
    }
    const MarketOutcome mo = vcg_payments(cl, p, co, cap);
    {
        CsvWriter w(ctx.out / "market.csv", {"unit", "m", "d", "cost", "payment", "status"});
        for (const auto& u : mo.units) {
            w.row({u.unit, format_double(u.m), format_double(u.d), format_double(u.cost), format_double(u.payment), u.status});
        }
    }
    CsvWriter s(ctx.out / "market_summary.csv", {"key", "value"});
    s.kv("objective", mo.objective_with);
    s.kv("total_cost", mo.total_cost);
    s.kv("total_payment", mo.total_payment);
    *ctx.log << "total payment " << format_double(mo.total_payment) << ", total cost " << format_double(mo.total_cost) << '\n';
    return kOk;
}

/// Summary text built only from the artifacts already in the output directory.
inline std::string build_report(const fs::path& dir)
{
    std::ostringstream os;
    os << "hodi report\n";
    auto section_kv = [&](const std::string& title, const std::string& file) {
        const fs::path p = dir / file;
        if (!fs::exists(p)) {
            return;
        }
        os << "\n[" << title << "]\n";
        for (const auto& r : read_table(p).rows) {
            os << "  " << r[0] << " = " << (r.size() > 1 ? r[1] : "") << '\n';
        }
    };
    if (fs::exists(dir / "provenance.txt")) {
        os << "\n[provenance]\n";
        std::ifstream in(dir / "provenance.txt");
        std::string line;
        while (std::getline(in, line)) {
            os << "  " << line << '\n';
        }
    }
    if (fs::exists(dir / "allocation.csv")) {
        const Table t = read_table(dir / "allocation.csv");
        os << "\n[allocation]\n  unit bus kind m d cost\n";
        for (const auto& r : t.rows) {
            os << "  " << r[t.column("unit")] << ' ' << r[t.column("bus")] << ' ' << r[t.column("kind")] << ' ' << r[t.column("m")]
               << ' ' << r[t.column("d")] << ' ' << r[t.column("cost")] << '\n';
        }
    }
    section_kv("allocation summary", "allocation_summary.csv");
    if (fs::exists(dir / "modes.csv")) {
        const Table t = read_table(dir / "modes.csv");
        os << "\n[modes: boundary distances]\n";
        for (const auto& r : t.rows) {
            os << "  " << r[t.column("real")] << (r[t.column("imag")].starts_with('-') ? " " : " +") << r[t.column("imag")]
               << "i  distance " << r[t.column("boundary_distance")] << (r[t.column("in_region")] == "true" ? "" : "  OUTSIDE")
               << '\n';
        }
    }
    section_kv("verification", "verify_summary.csv");
    section_kv("simulation", "simulation_summary.csv");
    if (fs::exists(dir / "market.csv")) {
        const Table t = read_table(dir / "market.csv");
        os << "\n[market payments]\n  unit m d cost payment status\n";
        for (const auto& r : t.rows) {
            os << "  ";
            for (std::size_t k = 0; k < r.size(); ++k) {
                os << (k ? " " : "") << r[k];
            }
            os << '\n';
        }
    }
    section_kv("market summary", "market_summary.csv");
    return os.str();
}

inline int cmd_report(const Options& opt, std::ostream& log)
{
    const fs::path dir = opt.out_dir;
    if (!fs::is_directory(dir)) {
        throw Error(ErrorKind::InvalidInput, "no artifact directory " + dir.string());
    }
    const std::string text = build_report(dir);
    std::ofstream(dir / "report.txt") << text;
    log << text;
    return kOk;
}

// ---- entry point ------------------------------------------------------------------------------

inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Virtual inertia and damping allocation for DERs", "hodi"};
    app.require_subcommand(1, 1);
    Options opt;
    double rocof_window = 0.0, dt = 0.0, horizon = 0.0;
    unsigned seed = 0;
    struct Spec {
        const char* name;
        const char* help;
    };
    const Spec specs[] = {
        {"analyze", "Build the Jacobian and the Kron-reduced network"},
        {"allocate", "Solve the allocation program"},
        {"robust-allocate", "Solve the robust allocation program"},
        {"verify", "Place the modes of an allocation and check the certificate"},
        {"simulate", "Simulate a step disturbance under an allocation"},
        {"market", "Clear the market and compute VCG payments"},
        {"report", "Summarize the artifacts in the output directory"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& s : specs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        subs[s.name] = sub;
        sub->add_option("--out-dir", opt.out_dir, "Directory for artifacts");
        if (std::string(s.name) == "report") {
            continue;
        }
        sub->add_option("--case", opt.case_path, "Case file (JSON)")->required();
        sub->add_option("--seed", seed, "Seed of the price recipe");
        sub->add_option("--rocof-window", rocof_window, "RoCoF window in s");
        sub->add_option("--dt", dt, "Integration step in s");
        sub->add_option("--horizon", horizon, "Simulation horizon in s");
        sub->add_flag("--solver-log", opt.solver_log, "Write solver_log.csv");
        sub->add_flag("--dump-problem", opt.dump_problem, "Write the conic program to problem.txt");
        sub->add_flag("--dump-jacobian", opt.dump_jacobian, "Write jacobian.csv");
        sub->add_flag("--dump-reduced", opt.dump_reduced, "Write reduced.csv");
        if (std::string(s.name) == "allocate" || std::string(s.name) == "market") {
            sub->add_option("--variant", opt.variant, "standard or robust")->check(CLI::IsMember({"standard", "robust"}));
        }
        if (std::string(s.name) == "verify" || std::string(s.name) == "simulate") {
            sub->add_option("--allocation", opt.allocation, "allocation.csv to use (default: <out-dir>/allocation.csv)");
        }
        if (std::string(s.name) == "market") {
            sub->add_option("--bids", opt.bids, "Bids CSV")->required();
        }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    }
    for (const auto& [name, sub] : subs) {
        if (sub->parsed()) {
            opt.command = name;
            if (name == "report") {
                continue;
            }
            if (sub->count("--seed")) {
                opt.seed = seed;
            }
            if (sub->count("--rocof-window")) {
                opt.rocof_window = rocof_window;
            }
            if (sub->count("--dt")) {
                opt.dt = dt;
            }
            if (sub->count("--horizon")) {
                opt.horizon = horizon;
            }
        }
    }
    try {
        if (opt.command == "report") {
            return cmd_report(opt, out);
        }
        const Context ctx = load(opt, out);
        for (const auto& p : ctx.provenance) {
            out << "# " << p << '\n';
        }
        if (opt.command == "analyze") {
            return cmd_analyze(ctx);
        }
        if (opt.command == "allocate") {
            return cmd_allocate(ctx, parse_variant(opt.variant));
        }
        if (opt.command == "robust-allocate") {
            return cmd_allocate(ctx, Variant::Robust);
        }
        if (opt.command == "verify") {
            return cmd_verify(ctx);
        }
        if (opt.command == "simulate") {
            return cmd_simulate(ctx);
        }
        if (opt.command == "market") {
            return cmd_market(ctx);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kOther;
    }
    return kOther;
}

} // namespace hodi::cli
