#include "ppde/experiment.hpp"

#include "ppde/frozen_pde.hpp"
#include "ppde/perron.hpp"
#include "ppde/uvm.hpp"
#include "ppde/viscosity_audit.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ppde {

namespace {

using nlohmann::json;

const std::set<std::string> kKinds = {"exit-time",     "frechet",        "price-uvm",
                                      "perron-sweep",  "modulus-probe",  "viscosity-audit",
                                      "assumptions-check"};

const std::set<std::string> kStochastic = {"exit-time", "price-uvm", "modulus-probe",
                                           "assumptions-check"};

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config error at " + where + ": " + what);
}

const json& need(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) fail(where, "missing key '" + key + "'");
    return j.at(key);
}

double need_num(const json& j, const std::string& key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_number()) fail(where + "." + key, "expected a number");
    return v.get<double>();
}

double opt_num(const json& j, const std::string& key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw NumericalError("cannot write " + p.string());
    os << text;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    ExperimentConfig c;
    c.raw = j;
    if (!j.contains("experiment") || !j.at("experiment").is_string()) {
        fail(origin, "missing string key 'experiment'");
    }
    c.kind = j.at("experiment").get<std::string>();
    if (!kKinds.count(c.kind)) fail(origin + ".experiment", "unknown kind '" + c.kind + "'");
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) {
            fail(origin + ".seed", "seed must be an integer");
        }
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (kStochastic.count(c.kind) && !c.seed) {
        fail(origin, "experiment '" + c.kind + "' requires a seed");
    }
    return c;
}

ExperimentConfig ExperimentConfig::parse_file(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw ConfigError("cannot read config file " + file.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse(buf.str(), file.string());
}

std::uint64_t ExperimentConfig::config_hash() const { return fnv1a(raw.dump()); }

ConvexDomain domain_from_config(const json& block) { return ConvexDomain::from_json(block.dump()); }

GeneratorSpec generator_from_config(const json& block) {
    const std::string name = need(block, "name", "generator").get<std::string>();
    if (name == "uvm") {
        return uvm_generator(need_num(block, "r", "generator"), opt_num(block, "a", 0.0),
                             need_num(block, "sigma_lo", "generator"),
                             need_num(block, "sigma_hi", "generator"));
    }
    if (name == "g_upper") {
        return make_g_upper(1, need_num(block, "L0", "generator"), need_num(block, "C0", "generator"));
    }
    if (name == "g_lower") {
        return make_g_lower(1, need_num(block, "L0", "generator"), need_num(block, "C0", "generator"));
    }
    if (name == "linear") {
        return linear_generator(1, opt_num(block, "decay", 0.0), opt_num(block, "drift", 0.0),
                                need_num(block, "vol_sq", "generator"));
    }
    fail("generator.name", "unknown generator '" + name + "'");
}

ReducedPayoff payoff_from_config(const json& block) {
    const std::string kind = need(block, "kind", "payoff").get<std::string>();
    if (kind == "constant") return ReducedPayoff::constant(need_num(block, "value", "payoff"));
    if (kind == "affine") {
        const double a = opt_num(block, "a", 1.0);
        const double b = opt_num(block, "b", 0.0);
        return ReducedPayoff::markovian1d([a, b](double x) { return a * x + b; });
    }
    if (kind == "step") {
        const double at = opt_num(block, "at", 0.0);
        const double lo = opt_num(block, "lo", 0.0);
        const double hi = opt_num(block, "hi", 1.0);
        return ReducedPayoff::markovian1d([at, lo, hi](double x) { return x < at ? lo : hi; });
    }
    if (kind == "abs") return ReducedPayoff::markovian1d([](double x) { return std::abs(x); });
    if (kind == "running-max-abs") {
        const double scale = opt_num(block, "scale", 1.0);
        return ReducedPayoff::running_max_abs([scale](double m) { return scale * m; });
    }
    fail("payoff.kind", "unknown payoff '" + kind + "'");
}

PiecewisePath history_from_config(const json& block) { return path_from_json(block.dump()); }

namespace {

struct Ctx {
    const ExperimentConfig& config;
    std::filesystem::path out;
    std::uint64_t seed = 0;
    int jobs = 1;
    RunOutcome outcome;

    const json& params() const { return need(config.raw, "params", "$"); }
    void artifact(const std::string& name, const std::string& text) {
        write_file(out / name, text);
        outcome.artifacts.push_back(name);
    }
};

void run_exit_time(Ctx& ctx) {
    const json& p = ctx.params();
    const double L = need_num(p, "L", "params");
    const double radius = need_num(p, "radius", "params");
    const double h = need_num(p, "h", "params");
    const int n_paths = static_cast<int>(opt_num(p, "n_paths", 100000));
    const double mc_dt = opt_num(p, "mc_dt", 1e-3);
    const int n_profile = static_cast<int>(opt_num(p, "profile_points", 21));

    const ConvexDomain D = ConvexDomain::interval(-radius, radius);
    ControlBounds b;
    b.drift_bound = L;
    b.vol_sq_lo = 2.0 / L;
    b.vol_sq_hi = 2.0 * L;
    LatticeModel model(D, h, b, ControlLattice::from_bounds(b));
    const PiecewisePath origin(1);
    LatticeField field = sup_expectation(model, ReducedPayoff::constant(0.0), D, 1.0, origin);

    std::ostringstream csv;
    csv.precision(17);
    csv << "x,dp_value,closed_form,abs_gap\n";
    double max_gap = 0.0;
    for (int k = 0; k < n_profile; ++k) {
        const double x = -radius + 2.0 * radius * k / (n_profile - 1);
        const double dp = field.eval(x);
        const double cf = exit_time_closed_form(L, radius, x);
        max_gap = std::max(max_gap, std::abs(dp - cf));
        csv << x << "," << dp << "," << cf << "," << std::abs(dp - cf) << "\n";
    }
    ctx.artifact("exit_time_profile.csv", csv.str());
    ctx.artifact("value_field.csv", field.to_csv());

    LatticePolicy policy = policy_from_field(field, model.controls());
    McResult mc = mc_lower_bound(b, policy, ReducedPayoff::constant(0.0), D, 1.0, origin, n_paths,
                                 mc_dt, ctx.seed, ctx.jobs);

    std::ostringstream mc_csv;
    mc_csv.precision(17);
    mc_csv << "x,dp_value,closed_form,mc_estimate,mc_std_error\n";
    mc_csv << 0.0 << "," << field.eval(0.0) << "," << exit_time_closed_form(L, radius, 0.0) << ","
           << mc.estimate << "," << mc.std_error << "\n";
    ctx.artifact("exit_time_mc.csv", mc_csv.str());

    ctx.outcome.key_values["dp_value_at_0"] = field.eval(0.0);
    ctx.outcome.key_values["closed_form_at_0"] = exit_time_closed_form(L, radius, 0.0);
    ctx.outcome.key_values["max_profile_gap"] = max_gap;
    ctx.outcome.key_values["mc_estimate"] = mc.estimate;
    ctx.outcome.key_values["mc_estimate_se"] = mc.std_error;
}

void run_frechet(Ctx& ctx) {
    const json& p = ctx.params();
    const PiecewisePath a = history_from_config(need(ctx.config.raw, "path_a", "$"));
    const PiecewisePath b = history_from_config(need(ctx.config.raw, "path_b", "$"));
    const double mesh = opt_num(p, "mesh", 1e-3);
    const double d = de_distance(a, b, mesh);
    json j;
    j["distance"] = d;
    j["mesh"] = mesh;
    ctx.artifact("frechet.json", j.dump(2));
    ctx.outcome.key_values["distance"] = d;
}

UvmSpec uvm_spec_from(const Ctx& ctx) {
    const json& p = ctx.params();
    UvmSpec spec;
    spec.r = need_num(p, "r", "params");
    spec.sigma_lo = need_num(p, "sigma_lo", "params");
    spec.sigma_hi = need_num(p, "sigma_hi", "params");
    spec.drift_bound = opt_num(p, "a", 0.0);
    spec.Q = domain_from_config(need(ctx.config.raw, "domain", "$"));
    spec.payoff = payoff_from_config(need(ctx.config.raw, "payoff", "$"));
    if (spec.r <= 0.0) fail("params.r", "the discount rate must be positive");
    return spec;
}

void run_price_uvm(Ctx& ctx) {
    const json& p = ctx.params();
    UvmSpec spec = uvm_spec_from(ctx);
    const double h = need_num(p, "h", "params");
    const double eps = opt_num(p, "eps", 0.1);
    const int m = static_cast<int>(opt_num(p, "m", 4));
    const int n_paths = static_cast<int>(opt_num(p, "n_paths", 50000));
    const double mc_dt = opt_num(p, "mc_dt", 1e-3);
    const PiecewisePath history = ctx.config.raw.contains("history")
                                      ? history_from_config(ctx.config.raw.at("history"))
                                      : PiecewisePath(1);

    UvmPrice priced = price_direct(spec, history, h);
    UvmBracket bracket = price_perron(spec, history, eps, m, h, ctx.jobs);
    WorstCase wc = extract_worst_case(spec, priced, history, std::min(n_paths, 20000), mc_dt, ctx.seed);
    McResult mc = mc_superhedge_lb(spec, history, wc.policy, n_paths, mc_dt, ctx.seed, ctx.jobs);

    ctx.artifact("policy.csv", priced.field.to_csv());
    ctx.artifact("perron_report.json", bracket.detail.report_json());
    ctx.outcome.key_values["dp_price"] = priced.price;
    ctx.outcome.key_values["bracket_lo"] = bracket.lo;
    ctx.outcome.key_values["bracket_hi"] = bracket.hi;
    ctx.outcome.key_values["mc_lower_bound"] = mc.estimate;
    ctx.outcome.key_values["mc_lower_bound_se"] = mc.std_error;
    ctx.outcome.key_values["martingale_residual_se_units"] = wc.martingale_residual;
}

void run_perron_sweep(Ctx& ctx) {
    const json& p = ctx.params();
    PerronParams params;
    params.h = need_num(p, "h", "params");
    params.jobs = ctx.jobs;
    params.m_list.clear();
    for (const auto& m : need(p, "m_list", "params")) params.m_list.push_back(m.get<int>());
    const std::string mode = p.value("closure_mode", "canonical");
    if (mode == "canonical") params.closure_mode = ClosureMode::Canonical;
    else if (mode == "exact") params.closure_mode = ClosureMode::Exact;
    else fail("params.closure_mode", "expected 'canonical' or 'exact'");
    const double eps = need_num(p, "eps", "params");

    const ConvexDomain Q = domain_from_config(need(ctx.config.raw, "domain", "$"));
    const GeneratorSpec G = generator_from_config(need(ctx.config.raw, "generator", "$"));
    const ReducedPayoff xi = payoff_from_config(need(ctx.config.raw, "payoff", "$"));
    const PiecewisePath history = ctx.config.raw.contains("history")
                                      ? history_from_config(ctx.config.raw.at("history"))
                                      : PiecewisePath(1);

    const PerronResult res = sweep(history, eps, Q, G, xi, params);
    ctx.artifact("perron_report.json", res.report_json());
    ctx.artifact("perron_nodes.csv", res.nodes_csv());
    ctx.outcome.key_values["u_estimate"] = res.u_estimate;
    for (std::size_t i = 0; i < res.m_list.size(); ++i) {
        ctx.outcome.key_values["gap_m" + std::to_string(res.m_list[i])] = res.gap[i];
        ctx.outcome.key_values["capacity_m" + std::to_string(res.m_list[i])] = res.capacity[i];
    }
}

void run_modulus_probe(Ctx& ctx) {
    const json& p = ctx.params();
    PerronParams params;
    params.h = need_num(p, "h", "params");
    params.jobs = ctx.jobs;
    const double eps = need_num(p, "eps", "params");
    const int m = static_cast<int>(opt_num(p, "m", 3));

    const ConvexDomain Q = domain_from_config(need(ctx.config.raw, "domain", "$"));
    const GeneratorSpec G = generator_from_config(need(ctx.config.raw, "generator", "$"));
    const ReducedPayoff xi = payoff_from_config(need(ctx.config.raw, "payoff", "$"));

    std::vector<std::pair<double, double>> samples;
    std::ostringstream csv;
    csv.precision(17);
    csv << "pair,de,value_gap\n";
    int idx = 0;
    for (const auto& pair : need(ctx.config.raw, "pairs", "$")) {
        if (!pair.is_array() || pair.size() != 2) fail("pairs", "each entry must be [pathA, pathB]");
        const PiecewisePath h1 = history_from_config(pair[0]);
        const PiecewisePath h2 = history_from_config(pair[1]);
        const ModulusProbe probe = modulus_probe(h1, h2, eps, Q, G, xi, m, params);
        samples.emplace_back(probe.de, probe.value_gap);
        csv << idx++ << "," << probe.de << "," << probe.value_gap << "\n";
    }
    ctx.artifact("modulus_probe.csv", csv.str());

    const ModulusFit fit = fit_modulus(samples);
    json knots = json::array();
    for (const auto& [x, y] : fit.knots()) knots.push_back({x, y});
    json j;
    j["knots"] = knots;
    j["dominates"] = fit.dominates(samples, 1e-12);
    ctx.artifact("modulus_fit.json", j.dump(2));
    ctx.outcome.key_values["max_gap"] = samples.empty() ? 0.0 : std::max_element(
        samples.begin(), samples.end(), [](auto& a, auto& b) { return a.second < b.second; })->second;
}

void run_viscosity_audit(Ctx& ctx) {
    const json& p = ctx.params();
    UvmSpec spec = uvm_spec_from(ctx);
    const double h = need_num(p, "h", "params");
    const double eps = opt_num(p, "eps", 0.2);
    const int n_alpha = static_cast<int>(opt_num(p, "n_alpha", 11));
    const int n_beta = static_cast<int>(opt_num(p, "n_beta", 11));
    const double level = opt_num(p, "level", spec.generator().lip_const);

    const PiecewisePath origin(1);
    UvmPrice priced = price_direct(spec, origin, h);
    PathValueFn u = [field = priced.field, payoff = spec.payoff](const PiecewisePath& path) {
        return field.eval(path.final_value()[0], payoff.reduced_state(path));
    };
    const GeneratorSpec G = spec.generator();

    JetParams jp;
    jp.h = h;
    json reports = json::array();
    int total_violations = 0;
    for (const auto& hist : need(ctx.config.raw, "histories", "$")) {
        const PiecewisePath history = history_from_config(hist);
        const AuditReport rep = audit_point(u, history, G, level, eps, n_alpha, n_beta, jp);
        total_violations += static_cast<int>(rep.violations.size());
        reports.push_back(json::parse(rep.to_json()));
    }
    json j;
    j["reports"] = reports;
    ctx.artifact("audit_report.json", j.dump(2));
    ctx.outcome.key_values["total_violations"] = total_violations;
}

void run_assumptions_check(Ctx& ctx) {
    const json& p = ctx.params();
    const GeneratorSpec G = generator_from_config(need(ctx.config.raw, "generator", "$"));
    const int samples = static_cast<int>(opt_num(p, "samples", 512));
    const AssumptionReport rep = check_assumptions(G, samples, ctx.seed);
    json j;
    j["samples"] = rep.samples;
    j["seed"] = rep.seed;
    json v = json::array();
    for (const auto& viol : rep.violations) {
        v.push_back({{"check", viol.check}, {"detail", viol.detail}, {"margin", viol.margin}});
    }
    j["violations"] = v;
    ctx.artifact("assumptions_report.json", j.dump(2));
    ctx.outcome.key_values["violations"] = rep.violations.size();
}

json column_schema(const std::string& kind) {
    json s;
    s["experiment"] = kind;
    if (kind == "exit-time") {
        s["exit_time_profile.csv"] = {"x", "dp_value", "closed_form", "abs_gap"};
        s["exit_time_mc.csv"] = {"x", "dp_value", "closed_form", "mc_estimate", "mc_std_error"};
        s["value_field.csv"] = {"x", "aux", "value", "control_index"};
    } else if (kind == "price-uvm") {
        s["policy.csv"] = {"x", "aux", "value", "control_index"};
    } else if (kind == "perron-sweep") {
        s["perron_nodes.csv"] = {"m", "node", "level", "end_offset", "theta_upper", "theta_lower"};
    } else if (kind == "modulus-probe") {
        s["modulus_probe.csv"] = {"pair", "de", "value_gap"};
    }
    return s;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                          std::optional<std::uint64_t> seed_override, int jobs) {
    std::filesystem::create_directories(out_dir);
    Ctx ctx{config, out_dir, seed_override.value_or(config.seed.value_or(0)), std::max(1, jobs), {}};

    if (config.kind == "exit-time") run_exit_time(ctx);
    else if (config.kind == "frechet") run_frechet(ctx);
    else if (config.kind == "price-uvm") run_price_uvm(ctx);
    else if (config.kind == "perron-sweep") run_perron_sweep(ctx);
    else if (config.kind == "modulus-probe") run_modulus_probe(ctx);
    else if (config.kind == "viscosity-audit") run_viscosity_audit(ctx);
    else if (config.kind == "assumptions-check") run_assumptions_check(ctx);
    else throw ConfigError("unknown experiment kind: " + config.kind);

    ctx.artifact("schema.json", column_schema(config.kind).dump(2));

    json manifest;
    manifest["experiment"] = config.kind;
    {
        std::ostringstream hs;
        hs << std::hex << config.config_hash();
        manifest["config_hash"] = hs.str();
    }
    manifest["seed"] = ctx.seed;
    manifest["version"] = "0.1.0";
    manifest["artifacts"] = ctx.outcome.artifacts;
    manifest["key_values"] = ctx.outcome.key_values;
    write_file(out_dir / "manifest.json", manifest.dump(2));
    ctx.outcome.artifacts.push_back("manifest.json");
    ctx.outcome.key_values["manifest"] = (out_dir / "manifest.json").string();
    return ctx.outcome;
}

nlohmann::json compare_runs(const std::filesystem::path& manifest_a,
                            const std::filesystem::path& manifest_b) {
    auto load = [](const std::filesystem::path& p) {
        std::ifstream is(p, std::ios::binary);
        if (!is) throw ConfigError("cannot read manifest " + p.string());
        json j;
        try {
            is >> j;
        } catch (const json::parse_error& e) {
            throw ConfigError(p.string() + ": " + e.what());
        }
        return j;
    };
    const json a = load(manifest_a);
    const json b = load(manifest_b);
    if (a.value("experiment", "") != b.value("experiment", "")) {
        throw ConfigError("compare-runs: experiment kinds differ");
    }

    json diff;
    diff["experiment"] = a.value("experiment", "");
    json rows = json::array();
    bool all_within = true;
    const json& ka = a.value("key_values", json::object());
    const json& kb = b.value("key_values", json::object());
    for (auto it = ka.begin(); it != ka.end(); ++it) {
        if (!it.value().is_number() || !kb.contains(it.key()) || !kb.at(it.key()).is_number()) continue;
        const std::string key = it.key();
        if (key.size() > 3 && key.substr(key.size() - 3) == "_se") continue;
        const double va = it.value().get<double>();
        const double vb = kb.at(key).get<double>();
        double tol = 0.0;
        if (key.rfind("mc_", 0) == 0) {
            const double sa = ka.value(key + "_se", 0.0);
            const double sb = kb.value(key + "_se", 0.0);
            tol = 3.0 * (sa + sb);
        }
        const bool within = std::abs(va - vb) <= tol;
        all_within = all_within && within;
        rows.push_back({{"key", key}, {"a", va}, {"b", vb}, {"delta", vb - va}, {"within_tol", within}});
    }
    diff["rows"] = rows;
    diff["all_within_tolerance"] = all_within;
    return diff;
}

}  // namespace ppde
