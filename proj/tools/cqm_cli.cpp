// JSON front end for the measurement library: validate, refine, dilate,
// compose, complete, simulate, verify. Exit 0 on success, 1 on a failed
// check, 2 on a parse or schema error.

#include <CLI11.hpp>

#include "cqm/dilation.hpp"
#include "cqm/json_io.hpp"
#include "cqm/montecarlo.hpp"
#include "cqm/sequential.hpp"

#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

using cqm::Json;

struct Options {
    double tol = cqm::kDefaultTol;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::int64_t trials = 0;  // 0 keeps the chain file's value
    bool json = false;
    std::string out;
};

void emit(const Options& opt, const Json& report) {
    if (opt.json) {
        std::cout << report.dump(2) << '\n';
        return;
    }
    std::cout << report["command"].get<std::string>() << ": "
              << (report.value("pass", true) ? "ok" : "FAILED") << '\n';
    for (const auto& line : report["lines"])
        std::cout << "  " << line.get<std::string>() << '\n';
}

Json base_report(const std::string& command) {
    return Json{{"command", command}, {"pass", true}, {"lines", Json::array()}};
}

void add_line(Json& report, const std::string& line) { report["lines"].push_back(line); }

cqm::Instrument load_instrument(const std::string& kind, const Json& j, double tol) {
    if (kind != "instrument")
        throw cqm::ParseError("expected an instrument manifest, got kind '" + kind + "'");
    const auto parsed = cqm::instrument_from_json(j);
    std::vector<cqm::InstrumentOutcome> outcomes(parsed.outcomes.begin(), parsed.outcomes.end());
    return cqm::instrument_from_kraus(parsed.dim, std::move(outcomes), std::max(tol, 1e-8));
}

// Analytic sequence distribution of a chain by branch enumeration,
// marginalized per stage. Desk-scale chains only.
std::vector<std::map<std::string, double>> analytic_stage_tables(const cqm::ChainSpec& spec) {
    std::vector<std::map<std::string, double>> tables(spec.stages.size());
    struct Branch {
        cqm::Matrix rho;
        double p;
    };
    std::vector<Branch> branches{{spec.initial, 1.0}};
    for (std::size_t s = 0; s < spec.stages.size(); ++s) {
        std::vector<Branch> next;
        for (const auto& branch : branches) {
            for (const auto& o : spec.stages[s].outcomes) {
                const cqm::Matrix unnormalized = cqm::schrodinger_apply(o, branch.rho);
                const double p = unnormalized.trace().real();
                const double joint = branch.p * std::max(p, 0.0);
                tables[s][o.label] += joint;
                if (joint > cqm::kProbabilityFloor)
                    next.push_back({unnormalized / p, joint});
            }
        }
        branches = std::move(next);
    }
    return tables;
}

int cmd_validate(const std::string& path, const Options& opt) {
    const auto [kind, j] = cqm::read_manifest(path);
    Json report = base_report("validate");
    report["kind"] = kind;
    if (kind == "povm") {
        const auto povm = cqm::povm_from_json(j);
        cqm::validate_povm(povm.outcomes, opt.tol);
        const auto desc = cqm::describe_povm(povm.outcomes);
        add_line(report, "normalization residual " + std::to_string(desc.normalization_residual));
        add_line(report, std::to_string(povm.outcomes.size()) + " outcomes, dim " +
                             std::to_string(povm.dim));
    } else if (kind == "refined_povm") {
        const auto refined = cqm::refined_povm_from_json(j);
        cqm::validate_povm(cqm::relabel(refined).outcomes, std::max(opt.tol, 1e-8));
        add_line(report, std::to_string(refined.entries.size()) + " rank-1 entries, dim " +
                             std::to_string(refined.dim));
    } else if (kind == "instrument") {
        const auto inst = load_instrument(kind, j, opt.tol);
        add_line(report, std::to_string(inst.outcomes.size()) + " outcomes, dim " +
                             std::to_string(inst.dim) + ", trace preserving");
    } else if (kind == "model") {
        const auto model = cqm::model_from_json(j);
        cqm::validate_model(model, std::max(opt.tol, 1e-8));
        add_line(report, "system dim " + std::to_string(model.system_dim) + ", ancilla dim " +
                             std::to_string(model.ancilla_dim));
    } else if (kind == "joint") {
        const auto joint = cqm::joint_from_json(j);
        const auto desc = cqm::describe_povm(cqm::joint_povm(joint).outcomes);
        if (desc.normalization_residual > std::max(opt.tol, 1e-8))
            throw cqm::Error("NotNormalized", "joint effects sum residual " +
                                                  std::to_string(desc.normalization_residual));
        add_line(report, "normalization residual " + std::to_string(desc.normalization_residual));
    } else if (kind == "chain") {
        const auto spec = cqm::chain_from_json(j);
        cqm::validate_density(spec.initial, std::max(opt.tol, 1e-8));
        for (const auto& stage : spec.stages)
            if (stage.dim != spec.initial.rows())
                throw cqm::Error("DimMismatch", "stage dimension mismatch");
        add_line(report, std::to_string(spec.stages.size()) + " stages, " +
                             std::to_string(spec.trials) + " trials");
    } else {
        throw cqm::ParseError("unknown manifest kind '" + kind + "'");
    }
    emit(opt, report);
    return 0;
}

int cmd_refine(const std::string& path, const Options& opt) {
    const auto [kind, j] = cqm::read_manifest(path);
    if (kind != "povm")
        throw cqm::ParseError("refine expects a povm manifest, got '" + kind + "'");
    const auto povm = cqm::validate_povm(cqm::povm_from_json(j).outcomes, opt.tol);
    const auto refined = cqm::refine(povm, opt.tol);
    if (!opt.out.empty())
        cqm::write_manifest(opt.out, cqm::wrap_manifest("refined_povm", cqm::to_json(refined)));
    Json report = base_report("refine");
    add_line(report, std::to_string(refined.entries.size()) + " rank-1 entries");
    emit(opt, report);
    return 0;
}

int cmd_dilate(const std::string& path, const Options& opt) {
    const auto [kind, j] = cqm::read_manifest(path);
    const auto inst = load_instrument(kind, j, opt.tol);
    const auto model = cqm::minimal_dilation(inst);
    if (!opt.out.empty())
        cqm::write_manifest(opt.out, cqm::wrap_manifest("model", cqm::to_json(model)));
    Json report = base_report("dilate");
    add_line(report, "ancilla dim " + std::to_string(model.ancilla_dim));
    emit(opt, report);
    return 0;
}

int cmd_compose(const std::string& first_path, const std::string& second_path,
                const Options& opt) {
    const auto [kind1, j1] = cqm::read_manifest(first_path);
    const auto [kind2, j2] = cqm::read_manifest(second_path);
    const auto joint = cqm::compose_sequential(load_instrument(kind1, j1, opt.tol),
                                               load_instrument(kind2, j2, opt.tol));
    if (!opt.out.empty())
        cqm::write_manifest(opt.out, cqm::wrap_manifest("joint", cqm::to_json(joint)));
    Json report = base_report("compose");
    add_line(report, std::to_string(joint.outcomes.size()) + " joint outcomes");
    emit(opt, report);
    return 0;
}

int cmd_complete(const std::string& povm_path, const std::string& pvm_path,
                 const Options& opt) {
    const auto [kind1, j1] = cqm::read_manifest(povm_path);
    if (kind1 != "povm")
        throw cqm::ParseError("complete expects a povm manifest first, got '" + kind1 + "'");
    const auto [kind2, j2] = cqm::read_manifest(pvm_path);
    if (kind2 != "multiplicity")
        throw cqm::ParseError("complete expects a multiplicity manifest second, got '" + kind2 +
                              "'");
    const auto povm = cqm::validate_povm(cqm::povm_from_json(j1).outcomes, opt.tol);
    const auto refined = cqm::refine(povm, opt.tol);
    const auto mult = cqm::multiplicity_from_json(j2);
    const auto cm = cqm::complete_measurement(refined, mult.pvm, mult.phis, opt.tol);
    if (!opt.out.empty())
        cqm::write_manifest(opt.out, cqm::wrap_manifest("joint", cqm::to_json(cm.joint)));
    const auto check = cqm::verify_refinement_condition(cm.first, mult.pvm, refined, opt.tol);
    Json report = base_report("complete");
    report["pass"] = check.max_residual <= std::max(opt.tol, 1e-8);
    report["residual"] = check.max_residual;
    add_line(report, "refinement condition residual " + std::to_string(check.max_residual));
    emit(opt, report);
    return report["pass"].get<bool>() ? 0 : 1;
}

int cmd_simulate(const std::string& path, const Options& opt) {
    const auto [kind, j] = cqm::read_manifest(path);
    if (kind != "chain")
        throw cqm::ParseError("simulate expects a chain manifest, got '" + kind + "'");
    auto spec = cqm::chain_from_json(j);
    if (opt.trials > 0) spec.trials = opt.trials;
    if (opt.seed_set) spec.seed = opt.seed;
    const auto record = cqm::run_chain(spec);
    const auto tables = analytic_stage_tables(spec);
    Json report = base_report("simulate");
    report["trials"] = record.trials;
    bool pass = true;
    double worst = 0;
    for (std::size_t s = 0; s < tables.size(); ++s) {
        const auto cmp = cqm::empirical_vs_analytic(record.stage_counts[s], record.trials,
                                                    tables[s]);
        pass = pass && cmp.pass;
        worst = std::max(worst, cmp.max_z);
        for (const auto& e : cmp.entries)
            add_line(report, "stage " + std::to_string(s) + " '" + e.label + "' frequency " +
                                 std::to_string(e.frequency) + " expected " +
                                 std::to_string(e.expected) + " z " + std::to_string(e.z));
    }
    report["pass"] = pass;
    report["max_z"] = worst;
    if (!opt.out.empty()) {
        const std::string csv = cqm::frequency_csv(record);
        const std::string tmp = opt.out + ".tmp";
        {
            std::ofstream f(tmp);
            if (!f) throw cqm::Error("IoError", "cannot write " + tmp);
            f << csv;
        }
        if (std::rename(tmp.c_str(), opt.out.c_str()) != 0)
            throw cqm::Error("IoError", "cannot rename " + tmp);
    }
    emit(opt, report);
    return pass ? 0 : 1;
}

int cmd_verify(const std::string& path, const Options& opt) {
    const auto [kind, j] = cqm::read_manifest(path);
    const double tol = std::max(opt.tol, 1e-8);
    Json report = base_report("verify");
    report["kind"] = kind;
    if (kind == "model") {
        const auto model = cqm::model_from_json(j);
        cqm::validate_model(model, tol);
        if (!model.source)
            throw cqm::Error("NoSource", "model carries no instrument to verify against");
        double residual = 0;
        for (const auto& o : model.source->outcomes) {
            for (int r = 0; r < model.system_dim; ++r) {
                for (int c = 0; c < model.system_dim; ++c) {
                    cqm::Matrix unit = cqm::Matrix::Zero(model.system_dim, model.system_dim);
                    unit(r, c) = 1.0;
                    residual = std::max(residual,
                                        (cqm::realized_apply(model, o.label, unit) -
                                         cqm::schrodinger_apply(o, unit))
                                            .norm());
                }
            }
        }
        report["residual"] = residual;
        report["pass"] = residual <= tol;
        add_line(report, "reproducibility residual " + std::to_string(residual));
        emit(opt, report);
        if (residual > tol) {
            std::cerr << "Reproducibility: residual " << residual << " exceeds " << tol << '\n';
            return 1;
        }
        return 0;
    }
    if (kind == "joint") {
        const auto joint = cqm::joint_from_json(j);
        const auto desc = cqm::describe_povm(cqm::joint_povm(joint).outcomes);
        report["residual"] = desc.normalization_residual;
        report["pass"] = desc.normalization_residual <= tol;
        add_line(report,
                 "normalization residual " + std::to_string(desc.normalization_residual));
        emit(opt, report);
        if (desc.normalization_residual > tol) {
            std::cerr << "NotNormalized: residual " << desc.normalization_residual << '\n';
            return 1;
        }
        return 0;
    }
    throw cqm::ParseError("verify expects a model or joint manifest, got '" + kind + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-dimensional quantum measurement toolkit"};
    app.require_subcommand(1);
    Options opt;
    app.add_option("--tol", opt.tol, "numeric tolerance");
    auto* seed_opt = app.add_option("--seed", opt.seed, "simulation seed");
    app.add_option("--trials", opt.trials, "simulation trial count override");
    app.add_flag("--json", opt.json, "machine-readable report");
    app.add_option("--out", opt.out, "output file path");

    std::string path, path2;
    auto* validate = app.add_subcommand("validate", "check a manifest's invariants");
    validate->add_option("file", path)->required();
    auto* refine = app.add_subcommand("refine", "maximal rank-1 refinement of a POVM");
    refine->add_option("file", path)->required();
    auto* dilate = app.add_subcommand("dilate", "minimal unitary measurement model");
    dilate->add_option("file", path)->required();
    auto* compose = app.add_subcommand("compose", "sequential composition of two instruments");
    compose->add_option("first", path)->required();
    compose->add_option("second", path2)->required();
    auto* complete = app.add_subcommand("complete", "complete-measurement scheme");
    complete->add_option("povm", path)->required();
    complete->add_option("pvm", path2)->required();
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo chain sampling");
    simulate->add_option("chain", path)->required();
    auto* verify = app.add_subcommand("verify", "reproducibility and normalization checks");
    verify->add_option("file", path)->required();
    for (auto* sub : app.get_subcommands({}))
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    opt.seed_set = seed_opt->count() > 0;

    try {
        if (validate->parsed()) return cmd_validate(path, opt);
        if (refine->parsed()) return cmd_refine(path, opt);
        if (dilate->parsed()) return cmd_dilate(path, opt);
        if (compose->parsed()) return cmd_compose(path, path2, opt);
        if (complete->parsed()) return cmd_complete(path, path2, opt);
        if (simulate->parsed()) return cmd_simulate(path, opt);
        if (verify->parsed()) return cmd_verify(path, opt);
    } catch (const cqm::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const cqm::Error& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
    return 2;
}
