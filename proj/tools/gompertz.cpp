// Command-line front end: simulate, fit, test, cascade, replicate-study, report.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gompertz/gompertz.hpp"
#include "gompertz/io.hpp"

namespace fs = std::filesystem;
using namespace gompertz;
using io::KeyValues;
using io::Provenance;
using io::format_double;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::optional<std::string> ordering;
    std::optional<std::size_t> bootstrap_m;
    std::optional<double> level;
    std::optional<double> loess_span;
    std::optional<int> loess_degree;
    std::optional<std::string> scheme;
    std::optional<std::string> relation_form;
    std::optional<std::string> bandwidth;
    std::optional<std::size_t> replications;
    std::string target = "V1";
    std::optional<double> h;
};

io::RunConfig effective_config(const Options& o) {
    io::RunConfig c = io::load_run_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.ordering) c.fit.ordering = io::parse_ordering(*o.ordering);
    if (o.bootstrap_m) c.bootstrap_m = *o.bootstrap_m;
    if (o.level) c.level = *o.level;
    if (o.loess_span) {
        for (SeriesSmoothing* s : {&c.fit.smoothing.rate, &c.fit.smoothing.variance}) {
            s->loess.span = *o.loess_span;
            s->gcv_span = false;
        }
    }
    if (o.loess_degree) {
        c.fit.smoothing.rate.loess.degree = *o.loess_degree;
        c.fit.smoothing.variance.loess.degree = *o.loess_degree;
    }
    if (o.scheme) c.scheme = io::parse_scheme(*o.scheme);
    if (o.relation_form) c.fit.relation.form = io::parse_relation_form(*o.relation_form);
    if (o.bandwidth) c.bandwidth = io::parse_bandwidth(*o.bandwidth);
    if (o.replications) c.replications = *o.replications;
    if (c.bootstrap_m < 1) throw ValidationError("--bootstrap-m must be positive");
    if (!(c.level > 0.0 && c.level < 1.0)) throw ValidationError("--level must lie in (0, 1)");
    return c;
}

Provenance provenance(const io::RunConfig& c) { return {c.seed, io::to_json(c).dump()}; }

struct Panels {
    PathPanel control, g1, g2;
};

Panels load_panels(const io::RunConfig& c, std::uint64_t seed) {
    return {io::group_panel(c, 0, seed), io::group_panel(c, 1, seed), io::group_panel(c, 2, seed)};
}

std::string join_indices(const PointwiseEstimate& e) {
    std::string s;
    for (std::size_t j = 0; j < e.flagged.size(); ++j)
        if (e.flagged[j]) s += (s.empty() ? "" : " ") + std::to_string(j);
    return s.empty() ? "none" : s;
}

KeyValues fit_fields(const FitResult& f) {
    KeyValues kv{{"alpha", format_double(f.params.alpha)},
                 {"beta", format_double(f.params.beta)},
                 {"sigma", format_double(f.params.sigma)},
                 {"control_log_likelihood", format_double(f.control.log_likelihood)},
                 {"control_equation_evaluations", std::to_string(f.control.iterations)},
                 {"ordering", to_string(f.options.ordering)}};
    auto series = [&](const char* name, const SmoothedSeries& s) {
        kv.emplace_back(std::string(name) + ".loess_span", format_double(s.span));
        kv.emplace_back(std::string(name) + ".flagged_points", join_indices(s.raw));
        kv.emplace_back(std::string(name) + ".missing_points", std::to_string(s.raw.missing()));
    };
    series("C", f.series(Role::C));
    series("D", f.series(Role::D));
    series("V1", f.g1.variance);
    series("V2", f.g2.variance);
    return kv;
}

void write_profile_table(const fs::path& path, const std::vector<double>& grid, const SmoothedSeries& s,
                         const Provenance& prov) {
    io::Table t;
    t.columns = {"time", "pointwise", "fitted", "flagged"};
    for (std::size_t j = 0; j < grid.size(); ++j)
        t.rows.push_back({grid[j], s.raw.values[j], s.smoothed[j], s.raw.flagged[j] ? 1.0 : 0.0});
    io::write_file(path, [&](std::ostream& os) { io::write_table(os, t, &prov); });
}

void write_fit_artifacts(const fs::path& out, const FitResult& f, const Provenance& prov) {
    io::write_file(out / "params.txt", [&](std::ostream& os) { io::write_key_values(os, fit_fields(f), &prov); });
    write_profile_table(out / "profiles" / "C.csv", f.grid, f.series(Role::C), prov);
    write_profile_table(out / "profiles" / "D.csv", f.grid, f.series(Role::D), prov);
    write_profile_table(out / "profiles" / "V1.csv", f.grid, f.g1.variance, prov);
    write_profile_table(out / "profiles" / "V2.csv", f.grid, f.g2.variance, prov);
}

void write_moment_plotdata(const fs::path& path, const io::RunConfig& c, const PathPanel& panel,
                           const ModelSpec& fitted, int group, const Provenance& prov) {
    const MomentCurves sc = sample_moment_curves(panel);
    const auto [fe, fv] = mean_variance_X(theoretical_moments(fitted, c.design));
    io::Table t;
    t.columns = {"time", "sample_mean", "sample_variance", "fitted_mean", "fitted_variance"};
    const bool truth = !c.group(group).panel;
    std::vector<double> te, tv;
    if (truth) {
        std::tie(te, tv) = mean_variance_X(theoretical_moments(io::group_truth(c, group), c.design));
        t.columns.push_back("true_mean");
        t.columns.push_back("true_variance");
    }
    for (std::size_t j = 0; j < panel.times(); ++j) {
        double mean = 0.0;
        for (const auto& row : panel.values) mean += row[j];
        mean /= static_cast<double>(panel.subjects());
        double var = 0.0;
        for (const auto& row : panel.values) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(panel.subjects() - 1);
        std::vector<double> r{sc.grid[j], mean, var, fe[j], fv[j]};
        if (truth) {
            r.push_back(te[j]);
            r.push_back(tv[j]);
        }
        t.rows.push_back(std::move(r));
    }
    io::write_file(path, [&](std::ostream& os) { io::write_table(os, t, &prov); });
}

void write_kde(const fs::path& path, const TestResult& t, numeric::BandwidthRule rule, const Provenance& prov) {
    io::Table tab;
    tab.columns = {"statistic", "density"};
    try {
        const auto curve = kde_null(t.replicates, rule, t.level);
        for (std::size_t k = 0; k < curve.x.size(); ++k) tab.rows.push_back({curve.x[k], curve.density[k]});
    } catch (const std::exception& e) {
        std::cerr << "note: no density for " << path.filename().string() << ": " << e.what() << '\n';
        return;
    }
    io::write_file(path, [&](std::ostream& os) { io::write_table(os, tab, &prov); });
}

void write_test(const fs::path& out, const std::string& stem, const TestResult& t, numeric::BandwidthRule rule,
                const Provenance& prov) {
    io::write_file(out / "tests" / (stem + ".txt"),
                   [&](std::ostream& os) { io::write_key_values(os, io::test_result_fields(t), &prov); });
    write_kde(out / "plotdata" / ("kde_" + stem + ".csv"), t, rule, prov);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Options& o) {
    const io::RunConfig c = effective_config(o);
    const Provenance prov = provenance(c);
    const Panels p = load_panels(c, c.seed);
    const fs::path out = o.out;
    for (const PathPanel* panel : {&p.control, &p.g1, &p.g2})
        io::write_file(out / "panels" / (panel->label + ".csv"),
                       [&](std::ostream& os) { io::write_panel_csv(os, *panel, &prov); });
    std::cout << "wrote 3 panels to " << (out / "panels").string() << '\n';
    return 0;
}

int cmd_fit(const Options& o) {
    const io::RunConfig c = effective_config(o);
    const Provenance prov = provenance(c);
    const Panels p = load_panels(c, c.seed);
    const FitResult f = stepwise_fit(p.control, p.g1, p.g2, c.fit);
    const fs::path out = o.out;
    write_fit_artifacts(out, f, prov);
    write_moment_plotdata(out / "plotdata" / "moments_g1.csv", c, p.g1, f.group_model(1), 1, prov);
    write_moment_plotdata(out / "plotdata" / "moments_g2.csv", c, p.g2, f.group_model(2), 2, prov);
    if (c.simulated()) {
        const auto v = io::fit_mse(c, f);
        KeyValues kv;
        for (std::size_t k = 0; k < v.size(); ++k) kv.emplace_back(io::kMseNames[k], format_double(v[k]));
        io::write_file(out / "mse.txt", [&](std::ostream& os) { io::write_key_values(os, kv, &prov); });
    }
    std::cout << "alpha = " << f.params.alpha << ", beta = " << f.params.beta << ", sigma = " << f.params.sigma << '\n';
    return 0;
}

Target parse_target(const std::string& s) {
    if (s == "C") return Target::C;
    if (s == "D") return Target::D;
    if (s == "V1") return Target::V1;
    if (s == "V2") return Target::V2;
    throw ValidationError("--target must be one of C, D, V1, V2");
}

int cmd_test(const Options& o) {
    const io::RunConfig c = effective_config(o);
    const Provenance prov = provenance(c);
    const Panels p = load_panels(c, c.seed);
    const FitResult f = stepwise_fit(p.control, p.g1, p.g2, c.fit);
    const Target target = parse_target(o.target);
    const bool apf = c.fit.ordering == Ordering::AntiProliferativeFirst;
    const int group = target == Target::V1 ? 1
                      : target == Target::V2 ? 2
                      : ((target == Target::C) == apf ? 1 : 2);
    const PathPanel& panel = group == 1 ? p.g1 : p.g2;
    const GroupFit& gf = group == 1 ? f.g1 : f.g2;
    const auto data = to_series(panel);
    ModelSpec null_model = f.group_model(group);

    double h = 0.0;
    Role role = Role::V;
    if (target == Target::V1 || target == Target::V2) {
        h = o.h ? *o.h : ml_constant_variance_scale(data, f.params, null_model.C, null_model.D);
        null_model.V = TherapyProfile::constant(Role::V, h);
    } else if (target == Target::C) {
        role = Role::C;
        h = o.h ? *o.h : ml_constant_growth_shift(data, f.params, null_model.D, null_model.V);
        null_model.C = TherapyProfile::constant(Role::C, h);
    } else {
        role = Role::D;
        h = o.h ? *o.h : ml_constant_death_shift(data, f.params, null_model.C, null_model.V);
        null_model.D = TherapyProfile::constant(Role::D, h);
    }
    Hypothesis hyp;
    hyp.target = target;
    hyp.group = group;
    hyp.h = TherapyProfile::constant(role, h);
    hyp.null_model = null_model;
    hyp.pipeline = gf.spec;
    hyp.subjects = panel.subjects();
    hyp.design = f.design();
    const TestResult t = b_test(hyp, target_values(gf, target), f.params, c.fit, c.bootstrap_m,
                                derive_seed(c.seed, {100, 0}), c.level);
    const fs::path out = o.out;
    write_fit_artifacts(out, f, prov);
    write_test(out, o.target, t, c.bandwidth, prov);
    std::cout << "H0: " << o.target << " = " << h << "  D = " << t.statistic << "  p = " << t.p_value << '\n';
    return 0;
}

void run_protocol(const io::RunConfig& c, const fs::path& out, const Provenance& prov, bool quiet) {
    const Panels p = load_panels(c, c.seed);
    ProtocolOptions po;
    po.fit = c.fit;
    po.m = c.bootstrap_m;
    po.level = c.level;
    po.seed = derive_seed(c.seed, {100});
    const ProtocolResult r = concatenated_protocol(p.control, p.g1, p.g2, po);
    write_fit_artifacts(out, r.fit, prov);
    KeyValues log;
    for (std::size_t k = 0; k < r.tests.size(); ++k) {
        const std::string stem = std::to_string(k + 1) + "_" + to_string(r.tests[k].hypothesis.target);
        write_test(out, stem, r.tests[k], c.bandwidth, prov);
    }
    for (std::size_t k = 0; k < r.log.size(); ++k) log.emplace_back("step_" + std::to_string(k + 1), r.log[k]);
    log.emplace_back("final_g1", "C=" + r.final_g1.C.describe() + " D=" + r.final_g1.D.describe() +
                                     " V=" + r.final_g1.V.describe());
    log.emplace_back("final_g2", "C=" + r.final_g2.C.describe() + " D=" + r.final_g2.D.describe() +
                                     " V=" + r.final_g2.V.describe());
    io::write_file(out / "tests" / "protocol.txt", [&](std::ostream& os) { io::write_key_values(os, log, &prov); });
    if (!quiet)
        for (const auto& line : r.log) std::cout << line << '\n';
}

int cmd_cascade(const Options& o) {
    const io::RunConfig c = effective_config(o);
    run_protocol(c, o.out, provenance(c), false);
    return 0;
}

int cmd_replicate_study(const Options& o) {
    const io::RunConfig c = effective_config(o);
    if (!c.simulated()) throw ValidationError("replicate-study needs a simulated design (no panel files)");
    if (c.replications < 1) throw ValidationError("--replications must be positive");
    const Provenance prov = provenance(c);
    std::vector<std::vector<double>> rows(c.replications);
    for (std::size_t r = 0; r < c.replications; ++r) {
        const Panels p = load_panels(c, derive_seed(c.seed, {200, r}));
        const FitResult f = stepwise_fit(p.control, p.g1, p.g2, c.fit);
        rows[r] = io::fit_mse(c, f);
    }
    KeyValues kv;
    for (std::size_t k = 0; k < io::kMseNames.size(); ++k) {
        std::vector<double> col;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            kv.emplace_back(io::kMseNames[k] + "[" + std::to_string(r + 1) + "]", format_double(rows[r][k]));
            col.push_back(rows[r][k]);
        }
        kv.emplace_back(io::kMseNames[k] + "[median]", format_double(numeric::quantile(col, 0.5)));
    }
    io::write_file(fs::path(o.out) / "mse.txt", [&](std::ostream& os) { io::write_key_values(os, kv, &prov); });
    for (std::size_t k = 0; k < io::kMseNames.size(); ++k)
        std::cout << "median MSE(" << io::kMseNames[k] << ") = " << *io::lookup(kv, io::kMseNames[k] + "[median]") << '\n';
    return 0;
}

int cmd_report(const Options& o) {
    const io::RunConfig c = effective_config(o);
    const Provenance prov = provenance(c);
    const Panels p = load_panels(c, c.seed);
    const FitResult f = stepwise_fit(p.control, p.g1, p.g2, c.fit);
    const fs::path out = o.out;
    write_fit_artifacts(out, f, prov);
    write_moment_plotdata(out / "plotdata" / "moments_g1.csv", c, p.g1, f.group_model(1), 1, prov);
    write_moment_plotdata(out / "plotdata" / "moments_g2.csv", c, p.g2, f.group_model(2), 2, prov);

    // Fitted curves on a fine grid, with the configured truth when simulated.
    io::Table t;
    t.columns = {"time", "C", "D", "V1", "V2"};
    const bool apf = c.fit.ordering == Ordering::AntiProliferativeFirst;
    if (c.simulated()) t.columns.insert(t.columns.end(), {"true_C", "true_D", "true_V1", "true_V2"});
    const double t0 = c.design.t0(), T = c.design.T();
    const int fine = 10 * static_cast<int>(c.design.size() - 1);
    for (int k = 0; k <= fine; ++k) {
        const double x = t0 + (T - t0) * k / fine;
        std::vector<double> r{x, f.C()(x), f.D()(x), f.V1()(x), f.V2()(x)};
        if (c.simulated()) {
            r.push_back((apf ? c.g1.C : c.g2.C)(x));
            r.push_back((apf ? c.g2.D : c.g1.D)(x));
            r.push_back(c.g1.V(x));
            r.push_back(c.g2.V(x));
        }
        t.rows.push_back(std::move(r));
    }
    io::write_file(out / "plotdata" / "profiles.csv", [&](std::ostream& os) { io::write_table(os, t, &prov); });

    // Density data for every stored test result.
    std::size_t densities = 0;
    if (fs::exists(out / "tests")) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(out / "tests"))
            if (e.path().extension() == ".txt" && e.path().stem() != "protocol") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& path : files) {
            const KeyValues kv = io::read_file(path, [](std::istream& is, const std::string& s) {
                return io::read_key_values(is, s);
            });
            const auto reps = io::parse_replicates(kv);
            const auto curve = kde_null(reps, c.bandwidth, c.level);
            io::Table d;
            d.columns = {"statistic", "density"};
            for (std::size_t k = 0; k < curve.x.size(); ++k) d.rows.push_back({curve.x[k], curve.density[k]});
            io::write_file(out / "plotdata" / ("kde_" + path.stem().string() + ".csv"),
                           [&](std::ostream& os) { io::write_table(os, d, &prov); });
            ++densities;
        }
    }
    std::cout << "report written to " << out.string() << " (" << densities << " density files)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gompertz therapy diffusion: simulation, estimation and bootstrap tests"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "master RNG seed (overrides the config)");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--ordering", o.ordering, "therapy ordering")->check(CLI::IsMember({"apf", "dif"}));
        sub->add_option("--bootstrap-m", o.bootstrap_m, "bootstrap replicates per test");
        sub->add_option("--level", o.level, "test level");
        sub->add_option("--loess-span", o.loess_span, "fixed LOESS span for every series")
            ->check(CLI::Range(0.0, 1.0));
        sub->add_option("--loess-degree", o.loess_degree, "LOESS degree")->check(CLI::IsMember({1, 2}));
        sub->add_option("--scheme", o.scheme, "simulation scheme")->check(CLI::IsMember({"exact", "euler"}));
        sub->add_option("--relation-form", o.relation_form, "moment relation form")
            ->check(CLI::IsMember({"m2", "m1u"}));
        sub->add_option("--bandwidth", o.bandwidth, "KDE bandwidth rule")
            ->check(CLI::IsMember({"silverman", "sheather-jones"}));
    };

    auto* sim = app.add_subcommand("simulate", "simulate the three group panels");
    auto* fit = app.add_subcommand("fit", "stepwise estimation on the three panels");
    auto* test = app.add_subcommand("test", "single bootstrap constancy test");
    auto* cascade = app.add_subcommand("cascade", "concatenated constancy test protocol");
    auto* study = app.add_subcommand("replicate-study", "repeat simulation and estimation, tabulate MSEs");
    auto* report = app.add_subcommand("report", "plot-ready curves, moment overlays and null densities");
    for (auto* s : {sim, fit, test, cascade, study, report}) common(s);
    test->add_option("--target", o.target, "tested function")->check(CLI::IsMember({"C", "D", "V1", "V2"}));
    test->add_option("--null-value", o.h, "constant under H0 (default: ML constant)");
    study->add_option("--replications", o.replications, "number of replications");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        if (*sim) return cmd_simulate(o);
        if (*fit) return cmd_fit(o);
        if (*test) return cmd_test(o);
        if (*cascade) return cmd_cascade(o);
        if (*study) return cmd_replicate_study(o);
        if (*report) return cmd_report(o);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
