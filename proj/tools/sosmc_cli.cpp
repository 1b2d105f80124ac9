// Command-line front end: datagen, pretrain, tune, evaluate, check.
//
// Options may also come from a flat TOML/INI file given with --config; keys
// live under a section named after the subcommand ([tune], [pretrain], ...).
// Flags on the command line win over the file. SOSMC_OUTPUT_ROOT sets the
// default output directory.

#include "sosmc/sosmc.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sosmc;

namespace {

std::string default_output_root() {
    const char* env = std::getenv("SOSMC_OUTPUT_ROOT");
    return env && *env ? env : "runs";
}

/// Command, resolved configuration and the files it produced.
struct Manifest {
    std::string command;
    std::string config_path;
    json config = json::object();
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    fs::path output_dir;

    void write() const {
        std::string input_bytes = config.dump();
        for (const auto& in : inputs) input_bytes += read_text(in);
        json j{{"command", command},
               {"config_path", config_path},
               {"config", config},
               {"seeds", seeds},
               {"inputs", inputs},
               {"input_hash", content_hash(input_bytes)},
               {"output_dir", output_dir.string()},
               {"outputs", outputs}};
        for (const auto& o : outputs)
            if (!fs::exists(o)) throw IoError("manifest refers to missing output " + o);
        write_text(output_dir / ("manifest_" + command + ".json"), j.dump(2) + "\n");
    }
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + tok + "'");
        }
    }
    if (out.empty()) throw ConfigError("no seeds given");
    return out;
}

json kernel_json(const UlaKernel& k) { return {{"gamma", k.gamma}, {"sigma_noise", k.sigma_noise}}; }

json optimizer_json(const OptimizerSpec& o) {
    json j{{"method", to_string(o.method)},
           {"learning_rate", o.learning_rate},
           {"beta1", o.beta1},
           {"beta2", o.beta2},
           {"epsilon", o.epsilon}};
    j["grad_clip_norm"] = o.grad_clip_norm ? json(*o.grad_clip_norm) : json(nullptr);
    return j;
}

json tuning_json(const TuningConfig& c) {
    return {{"objective", to_string(c.objective)},
            {"beta_kl", c.beta_kl},
            {"n_particles", c.n_particles},
            {"k_outer", c.k_outer},
            {"k_inner", c.k_inner},
            {"kernel", kernel_json(c.kernel)},
            {"optimizer", optimizer_json(c.optimizer)},
            {"tau_resample", c.tau_resample},
            {"adapt_step", c.adapt_step},
            {"tau_adapt", c.tau_adapt},
            {"adapt_factor", c.adapt_factor},
            {"reference_batch", c.reference_batch},
            {"eval_every", c.eval_every}};
}

json pcd_json(const PcdConfig& c, const MlpArchitecture& a) {
    return {{"architecture", {{"input_dim", a.input_dim}, {"hidden_width", a.hidden_width}, {"hidden_layers", a.hidden_layers}}},
            {"buffer_size", c.buffer_size},
            {"batch_size", c.batch_size},
            {"reinject", c.reinject},
            {"k_steps", c.k_steps},
            {"gamma", c.gamma},
            {"clamp_min", c.clamp_min},
            {"clamp_max", c.clamp_max},
            {"lambda_e", c.lambda_e},
            {"lambda_gp", c.lambda_gp},
            {"optimizer", optimizer_json(c.optimizer)},
            {"steps", c.steps},
            {"seed", c.seed}};
}

json fresh_json(const FreshEvalConfig& f) {
    return {{"m_eval", f.m_eval}, {"b_eval", f.b_eval}, {"t_eval", f.t_eval}, {"box", {f.box_lower, f.box_upper}}};
}

// --- datagen ---------------------------------------------------------------------

struct DatagenArgs {
    std::string kind = "blobs";
    long n = 20000;
    std::uint64_t seed = 0;
    std::string out;
    std::string output;
};

void cmd_datagen(const DatagenArgs& a, const std::string& config_path) {
    if (a.n < 2) throw ConfigError("--n must be at least 2");
    const DatasetKind kind = dataset_kind_from_string(a.kind);
    const Dataset2D d = generate_dataset(kind, a.n, a.seed);
    const fs::path dir = a.out;
    const fs::path file = a.output.empty() ? dir / ("dataset_" + a.kind + "_" + std::to_string(a.seed) + ".csv")
                                           : fs::path(a.output);
    write_text(file, positions_to_csv(d.samples));
    const DatasetParams p;
    Manifest m{"datagen", config_path,
               {{"kind", a.kind},
                {"n", a.n},
                {"seed", a.seed},
                {"s_scale", p.s_scale},
                {"raw_mean", to_json(d.raw_mean)},
                {"raw_std", to_json(d.raw_std)}},
               {a.seed}, {}, {file.string()}, dir};
    m.write();
    std::cout << file.string() << "\n";
}

// --- pretrain --------------------------------------------------------------------

struct PretrainArgs {
    std::string data;
    std::string out;
    std::string output;
    long width = 32;
    long layers = 4;
    std::optional<long> steps;
    std::optional<long> epochs;
    bool paper_scale = false;
    std::optional<double> lr;
    long batch = 512;
    long buffer = 20000;
    long k_steps = 80;
    double gamma = 5e-3;
    double reinject = 0.05;
    double init_std = 0.02;
    std::uint64_t seed = 0;
};

void cmd_pretrain(const PretrainArgs& a, const std::string& config_path) {
    const Positions data = positions_from_csv(read_text(a.data));
    MlpArchitecture arch{data.cols(), a.paper_scale ? 128 : a.width, a.layers};
    PcdConfig cfg;
    cfg.batch_size = a.batch;
    cfg.buffer_size = a.buffer;
    cfg.k_steps = a.k_steps;
    cfg.gamma = a.gamma;
    cfg.reinject = a.reinject;
    cfg.seed = a.seed;
    if (a.lr) cfg.optimizer.learning_rate = *a.lr;
    if (a.steps && a.epochs) throw ConfigError("give --steps or --epochs, not both");
    if (a.epochs)
        cfg.steps = PcdConfig::steps_for_epochs(*a.epochs, data.rows(), cfg.batch_size);
    else if (a.steps)
        cfg.steps = *a.steps;
    else if (a.paper_scale)
        cfg.steps = PcdConfig::steps_for_epochs(500, data.rows(), cfg.batch_size);

    Rng init = make_stream(a.seed, "mlp_init");
    const MlpEnergy model0 = MlpEnergy::initialised(arch, init, a.init_std);
    const PcdResult res = pcd_train(data, model0, cfg);

    const fs::path dir = a.out;
    const fs::path model_file = a.output.empty() ? dir / "model.json" : fs::path(a.output);
    const fs::path loss_file = model_file.parent_path() / (model_file.stem().string() + "_loss.csv");
    const fs::path buffer_file = model_file.parent_path() / (model_file.stem().string() + "_buffer.csv");
    save_model(model_file, res.model);
    std::string loss = "step,total,contrastive,energy_reg,grad_penalty\n";
    for (std::size_t i = 0; i < res.history.size(); ++i) {
        const auto& l = res.history[i];
        loss += std::to_string(i) + ',' + format_double(l.total) + ',' + format_double(l.contrastive) + ',' +
                format_double(l.energy_reg) + ',' + format_double(l.grad_penalty) + '\n';
    }
    write_text(loss_file, loss);
    write_text(buffer_file, positions_to_csv(res.buffer.states));

    json config = pcd_json(cfg, arch);
    config["paper_scale"] = a.paper_scale;
    config["init_std"] = a.init_std;
    config["data"] = a.data;
    config["reinjected_fraction"] = res.reinjected_fraction;
    Manifest m{"pretrain", config_path, config, {a.seed}, {a.data},
               {model_file.string(), loss_file.string(), buffer_file.string()}, dir};
    m.write();
    std::cout << model_file.string() << "\n";
}

// --- tune ------------------------------------------------------------------------

struct TuneArgs {
    std::string method = "sosmc";
    std::string objective = "reverse_kl";
    std::string model = "builtin:mixture_sparse";
    std::optional<std::string> reward;
    std::optional<double> beta;
    std::optional<long> n;
    std::optional<long> k;
    std::optional<long> k_inner;
    std::optional<double> gamma;
    std::optional<double> sigma;
    std::optional<std::string> opt;
    std::optional<double> lr;
    std::optional<double> tau_resample;
    bool adapt = false;
    std::optional<double> tau_adapt;
    std::optional<double> adapt_factor;
    std::optional<long> ref_batch;
    std::optional<long> eval_every;
    long m_eval = 50;
    long b_eval = 2000;
    long t_eval = 2000;
    long grid = 256;
    std::string seeds = "0";
    bool wallclock = false;
    std::string out;
};

TuningConfig apply_overrides(TuningConfig c, const TuneArgs& a) {
    c.objective = objective_from_string(a.objective);
    if (a.beta) c.beta_kl = *a.beta;
    if (a.n) c.n_particles = *a.n;
    if (a.k) c.k_outer = *a.k;
    if (a.k_inner) c.k_inner = *a.k_inner;
    if (a.gamma) c.kernel.gamma = *a.gamma;
    if (a.sigma) c.kernel.sigma_noise = *a.sigma;
    if (a.opt) c.optimizer.method = opt_method_from_string(*a.opt);
    if (a.lr) c.optimizer.learning_rate = *a.lr;
    if (a.tau_resample) c.tau_resample = *a.tau_resample;
    c.adapt_step = c.adapt_step || a.adapt;
    if (a.tau_adapt) c.tau_adapt = *a.tau_adapt;
    if (a.adapt_factor) c.adapt_factor = *a.adapt_factor;
    if (a.ref_batch) c.reference_batch = *a.ref_batch;
    if (a.eval_every) c.eval_every = *a.eval_every;
    c.record_wall_clock = a.wallclock;
    return c;
}

struct TuneOutcome {
    json summary;
    std::string trace_csv;
};

template <GibbsModel M>
TuneOutcome run_one(Method method, const TuningConfig& cfg, TuningProblem<M> problem) {
    TuneOutcome o;
    try {
        const TuningResult<M> r = run_method(method, cfg, std::move(problem));
        o.trace_csv = trace_to_csv(r.trace);
        o.summary["status"] = "ok";
        o.summary["theta_digest"] = digest(r.theta);
        o.summary["theta_size"] = r.theta.size();
        if (r.theta.size() <= 16) o.summary["theta"] = to_json(r.theta);
        if (!r.trace.rows.empty()) {
            const TraceRow& last = r.trace.rows.back();
            o.summary["terminal"] = {{"k", last.k},
                                     {"particle_reward", format_double(last.particle_reward)},
                                     {"ess", last.ess},
                                     {"gamma", last.gamma},
                                     {"grad_norm", last.grad_norm}};
            for (auto it = r.trace.rows.rbegin(); it != r.trace.rows.rend(); ++it)
                if (it->fresh_reward) {
                    o.summary["terminal"]["fresh_reward"] = *it->fresh_reward;
                    o.summary["terminal"]["fresh_reward_k"] = it->k;
                    if (it->kl_quadrature) o.summary["terminal"]["kl_quadrature"] = *it->kl_quadrature;
                    break;
                }
        }
    } catch (const TuningAborted& e) {
        o.trace_csv = trace_to_csv(e.trace);
        o.summary["status"] = "aborted";
        o.summary["error"] = e.what();
    }
    return o;
}

Reward reward_from_name(const std::string& name, const Reward& base) {
    Reward r = base;
    r.kind = reward_kind_from_string(name);
    return r;
}

void cmd_tune(const TuneArgs& a, const std::string& config_path) {
    const Method method = method_from_string(a.method);
    if (objective_from_string(a.objective) == Objective::generic)
        throw ConfigError("the generic objective needs a programmatic H and is not available from the command line");
    const std::vector<std::uint64_t> seeds = parse_seeds(a.seeds);
    const fs::path dir = a.out;
    FreshEvalConfig fresh;
    fresh.m_eval = a.m_eval;
    fresh.b_eval = a.b_eval;
    fresh.t_eval = a.t_eval;

    json config{{"method", a.method}, {"model", a.model}, {"fresh_eval", fresh_json(fresh)}, {"grid", a.grid}};
    json diagnostics = json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    int aborted = 0;

    const auto finish = [&](const TuningConfig& cfg, auto&& run) {
        cfg.validate(method);
        config["tuning"] = tuning_json(cfg);
        for (std::uint64_t seed : seeds) {
            TuningConfig c = cfg;
            c.seed = seed;
            TuneOutcome o = run(c);
            const std::string tag = "seed" + std::to_string(seed);
            const fs::path trace_file = dir / ("trace_" + tag + ".csv");
            const fs::path summary_file = dir / ("summary_" + tag + ".json");
            write_text(trace_file, o.trace_csv);
            o.summary["seed"] = seed;
            o.summary["config"] = config;
            o.summary["diagnostics"] = diagnostics;
            write_text(summary_file, o.summary.dump(2) + "\n");
            outputs.push_back(trace_file.string());
            outputs.push_back(summary_file.string());
            if (o.summary["status"] != "ok") ++aborted;
            std::cout << trace_file.string() << "\n";
        }
    };

    if (a.model.rfind("builtin:", 0) == 0) {
        const std::string name = a.model.substr(8);
        if (name == "mixture_sparse" || name == "mixture_dual") {
            const MixtureLayout layout = name == "mixture_sparse" ? MixtureLayout::sparse : MixtureLayout::dual;
            const Reward reward = reward_from_name(a.reward.value_or("hard_gated"), mixture_reward());
            config["reward"] = to_string(reward.kind);
            const TuningConfig cfg = apply_overrides(mixture_config(method), a);
            finish(cfg, [&](const TuningConfig& c) { return run_one(method, c, mixture_problem(layout, reward)); });
        } else if (name == "gaussian") {
            const Reward reward = reward_from_name(a.reward.value_or("half_plane_left"), Reward{});
            config["reward"] = to_string(reward.kind);
            TuningConfig base;
            base.n_particles = 1000;
            base.k_outer = 200;
            base.kernel = UlaKernel{0.1, 1.0};
            base.beta_kl = 0.25;
            base.optimizer = OptimizerSpec{OptMethod::adam, 0.02};
            base.reference_batch = 1000;
            const TuningConfig cfg = apply_overrides(base, a);
            diagnostics["pi0_reward_mass"] =
                quadrature_expectation(GaussianLocation(Vector::Zero(1)), QuadratureGrid::box(1, -10.0, 10.0, 4000), reward);
            finish(cfg, [&](const TuningConfig& c) { return run_one(method, c, gaussian_problem(reward)); });
        } else {
            throw ConfigError("unknown builtin model: " + name);
        }
    } else {
        inputs.push_back(a.model);
        const AnyModel any = load_model(a.model);
        if (const auto* mlp = std::get_if<MlpEnergy>(&any)) {
            const Reward reward = reward_from_name(a.reward.value_or("half_plane_lower"), Reward{});
            config["reward"] = to_string(reward.kind);
            TuningConfig base = ebm_config();
            base.eval_every = 0;
            const TuningConfig cfg = apply_overrides(base, a);
            if (mlp->dim() == 2) {
                const double mass = quadrature_expectation(*mlp, QuadratureGrid::box(2, -6.0, 6.0, a.grid), reward);
                diagnostics["pi0_reward_mass"] = mass;
                if (mass > 0.0 && mass < 1.0 && cfg.beta_kl > 0.0)
                    diagnostics["tilted_optimum"] = tilted_optimum(mass, cfg.beta_kl);
            }
            finish(cfg, [&](const TuningConfig& c) {
                TuningProblem<MlpEnergy> p = ebm_problem(*mlp, reward);
                if (c.eval_every > 0 && mlp->dim() == 2)
                    p.evaluator = ebm_evaluator(*mlp, reward, fresh, c.kernel, c.seed, a.grid);
                return run_one(method, c, p);
            });
        } else {
            throw ConfigError("tune from a model file expects an mlp_energy model; use builtin:* for analytic models");
        }
    }
    Manifest m{"tune", config_path, config, seeds, inputs, outputs, dir};
    m.write();
    if (aborted > 0) throw Error(std::to_string(aborted) + " run(s) aborted; see summaries");
}

// --- evaluate ----------------------------------------------------------------------

struct EvaluateArgs {
    std::vector<std::string> models;
    std::string reference;
    std::string reward = "half_plane_lower";
    double beta = 0.25;
    long m_eval = 50;
    long b_eval = 2000;
    long t_eval = 2000;
    double gamma = 5e-3;
    long grid = 256;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_evaluate(const EvaluateArgs& a, const std::string& config_path) {
    FreshEvalConfig fresh;
    fresh.m_eval = a.m_eval;
    fresh.b_eval = a.b_eval;
    fresh.t_eval = a.t_eval;
    const Reward reward = reward_from_name(a.reward, Reward{});
    const UlaKernel kernel{a.gamma, 1.0};
    std::optional<MlpEnergy> reference;
    std::vector<std::string> inputs = a.models;
    if (!a.reference.empty()) {
        const AnyModel ref = load_model(a.reference);
        const auto* ref_mlp = std::get_if<MlpEnergy>(&ref);
        if (!ref_mlp) throw ConfigError("--reference must be an mlp_energy model");
        reference = *ref_mlp;
        inputs.push_back(a.reference);
    }
    json rows = json::array();
    for (const auto& path : a.models) {
        const AnyModel any = load_model(path);
        const auto* mlp = std::get_if<MlpEnergy>(&any);
        if (!mlp || mlp->dim() != 2) throw ConfigError("evaluate expects 2-d mlp_energy models: " + path);
        const QuadratureGrid grid = QuadratureGrid::box(2, fresh.box_lower, fresh.box_upper, a.grid);
        json r{{"model", path},
               {"fresh_reward", fresh_reward(*mlp, reward, fresh, kernel, a.seed)},
               {"reward_mass_quadrature", quadrature_expectation(*mlp, grid, reward)}};
        if (reference) {
            r["kl_quadrature"] = kl_quadrature(*mlp, *reference, grid);
            const double mass0 = quadrature_expectation(*reference, grid, reward);
            r["reference_reward_mass"] = mass0;
            if (mass0 > 0.0 && mass0 < 1.0) r["tilted_optimum"] = tilted_optimum(mass0, a.beta);
        }
        rows.push_back(r);
    }
    const fs::path dir = a.out;
    const fs::path file = dir / "evaluate.json";
    json config{{"reward", a.reward}, {"beta", a.beta}, {"fresh_eval", fresh_json(fresh)},
                {"kernel", kernel_json(kernel)}, {"grid", a.grid}, {"seed", a.seed}};
    write_text(file, json{{"config", config}, {"results", rows}}.dump(2) + "\n");
    Manifest m{"evaluate", config_path, config, {a.seed}, inputs, {file.string()}, dir};
    m.write();
    std::cout << rows.dump(2) << "\n";
}

// --- check -------------------------------------------------------------------------

struct CheckArgs {
    std::vector<std::string> only;
    std::string report;
};

int cmd_check(const CheckArgs& a) {
    std::vector<checks::NamedCheck> suite = checks::default_suite();
    if (!a.only.empty()) {
        std::vector<checks::NamedCheck> picked;
        for (const auto& name : a.only) {
            bool found = false;
            for (const auto& c : suite)
                if (c.name == name) {
                    picked.push_back(c);
                    found = true;
                }
            if (!found) throw ConfigError("unknown check: " + name);
        }
        suite = std::move(picked);
    }
    json report{{"schema", "sosmc-check/1"}, {"checks", json::array()}};
    bool all = true;
    for (const auto& c : suite) {
        const CheckResult r = checks::timed(c);
        all = all && r.passed;
        report["checks"].push_back(checks::to_json(r));
        std::cerr << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.message << "\n";
    }
    report["passed"] = all;
    const std::string text = report.dump(2) + "\n";
    if (a.report.empty())
        std::cout << text;
    else
        write_text(a.report, text);
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SOSMC: stochastic optimisation of Gibbs models with sequential Monte Carlo"};
    app.require_subcommand(1);
    CLI::Option* config_opt =
        app.set_config("--config", "", "flat TOML/INI file; sections named after subcommands; flags win");
    const std::string out_root = default_output_root();

    DatagenArgs dg;
    dg.out = out_root;
    auto* datagen = app.add_subcommand("datagen", "generate a standardised 2-d dataset CSV");
    datagen->add_option("--kind", dg.kind, "two_moons | circles | blobs")->capture_default_str();
    datagen->add_option("--n", dg.n, "number of samples")->capture_default_str()->check(CLI::Range(2L, 100000000L));
    datagen->add_option("--seed", dg.seed)->capture_default_str();
    datagen->add_option("--out", dg.out, "output directory")->capture_default_str();
    datagen->add_option("--output", dg.output, "explicit CSV path");

    PretrainArgs pt;
    pt.out = out_root;
    auto* pretrain = app.add_subcommand("pretrain", "PCD pretraining of a 2-d MLP energy");
    pretrain->add_option("--data", pt.data, "dataset CSV")->required()->check(CLI::ExistingFile);
    pretrain->add_option("--out", pt.out, "output directory")->capture_default_str();
    pretrain->add_option("--output", pt.output, "model JSON path");
    pretrain->add_option("--width", pt.width)->capture_default_str();
    pretrain->add_option("--layers", pt.layers)->capture_default_str();
    pretrain->add_option("--steps", pt.steps, "optimisation steps (desk default 2000)");
    pretrain->add_option("--epochs", pt.epochs, "epochs of ceil(n/B) steps");
    pretrain->add_flag("--paper-scale", pt.paper_scale, "width 128, 500 epochs");
    pretrain->add_option("--lr", pt.lr, "Adam learning rate (default 2e-4)");
    pretrain->add_option("--batch", pt.batch)->capture_default_str();
    pretrain->add_option("--buffer", pt.buffer)->capture_default_str();
    pretrain->add_option("--k-steps", pt.k_steps)->capture_default_str();
    pretrain->add_option("--gamma", pt.gamma)->capture_default_str();
    pretrain->add_option("--reinject", pt.reinject)->capture_default_str();
    pretrain->add_option("--init-std", pt.init_std)->capture_default_str();
    pretrain->add_option("--seed", pt.seed)->capture_default_str();

    TuneArgs tu;
    tu.out = out_root;
    auto* tune = app.add_subcommand("tune", "reward tuning with sosmc, impdiff or soul");
    tune->add_option("--method", tu.method, "sosmc | impdiff | soul")->capture_default_str();
    tune->add_option("--objective", tu.objective, "forward_kl | reverse_kl")->capture_default_str();
    tune->add_option("--model", tu.model, "model JSON or builtin:mixture_sparse|mixture_dual|gaussian")
        ->capture_default_str();
    tune->add_option("--reward", tu.reward, "reward kind");
    tune->add_option("--beta", tu.beta, "KL weight");
    tune->add_option("--n", tu.n, "particles (chain length for soul)");
    tune->add_option("--k", tu.k, "outer iterations");
    tune->add_option("--k-inner", tu.k_inner, "kernel steps per iteration");
    tune->add_option("--gamma", tu.gamma, "ULA step size");
    tune->add_option("--sigma", tu.sigma, "ULA noise scale");
    tune->add_option("--opt", tu.opt, "sgd | adam");
    tune->add_option("--lr", tu.lr, "learning rate");
    tune->add_option("--tau-resample", tu.tau_resample);
    tune->add_flag("--adapt", tu.adapt, "ESS-driven step-size adaptation");
    tune->add_option("--tau-adapt", tu.tau_adapt);
    tune->add_option("--adapt-factor", tu.adapt_factor);
    tune->add_option("--ref-batch", tu.ref_batch, "forward-KL reference batch size");
    tune->add_option("--eval-every", tu.eval_every, "fresh-reward checkpoint period (0 = off)");
    tune->add_option("--m-eval", tu.m_eval)->capture_default_str();
    tune->add_option("--b-eval", tu.b_eval)->capture_default_str();
    tune->add_option("--t-eval", tu.t_eval)->capture_default_str();
    tune->add_option("--grid", tu.grid, "quadrature points per dimension")->capture_default_str();
    tune->add_option("--seeds", tu.seeds, "comma-separated seeds, one trace per seed")->capture_default_str();
    tune->add_flag("--wallclock", tu.wallclock, "record wall_clock_s (breaks byte-identical traces)");
    tune->add_option("--out", tu.out, "output directory")->capture_default_str();

    EvaluateArgs ev;
    ev.out = out_root;
    auto* evaluate = app.add_subcommand("evaluate", "fresh-reward and quadrature evaluation of saved models");
    evaluate->add_option("--model", ev.models, "model JSON (repeatable)")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--reference", ev.reference, "reference model for KL and tilted optimum")
        ->check(CLI::ExistingFile);
    evaluate->add_option("--reward", ev.reward)->capture_default_str();
    evaluate->add_option("--beta", ev.beta)->capture_default_str();
    evaluate->add_option("--m-eval", ev.m_eval)->capture_default_str();
    evaluate->add_option("--b-eval", ev.b_eval)->capture_default_str();
    evaluate->add_option("--t-eval", ev.t_eval)->capture_default_str();
    evaluate->add_option("--gamma", ev.gamma)->capture_default_str();
    evaluate->add_option("--grid", ev.grid)->capture_default_str();
    evaluate->add_option("--seed", ev.seed)->capture_default_str();
    evaluate->add_option("--out", ev.out, "output directory")->capture_default_str();

    CheckArgs ck;
    auto* check = app.add_subcommand("check", "run the oracle and theory check suite");
    check->add_option("--only", ck.only, "check name (repeatable)");
    check->add_option("--report", ck.report, "write the JSON report here instead of stdout");

    CLI11_PARSE(app, argc, argv);
    const std::string config_path = config_opt->count() > 0 ? config_opt->as<std::string>() : std::string();

    try {
        if (*datagen) cmd_datagen(dg, config_path);
        if (*pretrain) cmd_pretrain(pt, config_path);
        if (*tune) cmd_tune(tu, config_path);
        if (*evaluate) cmd_evaluate(ev, config_path);
        if (*check) return cmd_check(ck);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
