#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "gcttt/errors.hpp"
#include "gcttt/runtime.hpp"
#include "svg.hpp"

#ifndef GCTTT_BUILD_ID
#define GCTTT_BUILD_ID "unknown"
#endif

namespace gcttt::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void write_manifest(const RunConfig& cfg, const Invocation& inv, const std::string& out) {
    const json resolved = config_to_json(cfg);
    json m{{"command", inv.command},
           {"seed", cfg.seed},
           {"config_hash", config_hash(resolved)},
           {"build_id", GCTTT_BUILD_ID},
           {"config", resolved}};
    std::string name = "manifest_" + inv.command;
    if (inv.command == "eval") {
        m["mode"] = inv.mode;
        name += "_" + inv.mode;
    }
    if (inv.command == "freq-sweep") m["ks"] = inv.ks.empty() ? cfg.sweep_ks : inv.ks;
    write_file(join(out, name + ".json"), m.dump(2) + "\n");
}

void cmd_gen_data(const RunConfig& cfg, const std::string& out) {
    const env::MazeEnv env = make_env(cfg);
    const data::OfflineDataset ds = make_dataset(cfg, env);
    data::save_dataset(ds, dataset_path(out));
    std::size_t max_len = 0;
    for (const auto& t : ds.trajectories) max_len = std::max(max_len, t.length());
    std::ostringstream csv;
    csv << "layout,regime,n_traj,n_transitions,n_states,max_length,seed\n"
        << ds.meta.layout_name << ',' << cfg.dataset.regime << ',' << ds.trajectories.size() << ','
        << ds.num_transitions() << ',' << ds.num_states() << ',' << max_len << ',' << ds.meta.seed << '\n';
    write_file(join(out, "dataset_stats.csv"), csv.str());
    std::fprintf(stderr, "gen-data: %zu trajectories, %zu transitions -> %s\n", ds.trajectories.size(),
                 ds.num_transitions(), dataset_path(out).c_str());
}

void check_dataset_matches(const RunConfig& cfg, const env::MazeEnv& env, const data::OfflineDataset& ds) {
    const data::DatasetMeta& m = ds.meta;
    if (m.regime != data::parse_regime(cfg.dataset.regime) || m.layout_name != env.layout().name ||
        m.env_kind != cfg.env.kind || m.seed != dataset_seed(cfg) || ds.trajectories.size() != cfg.dataset.n_traj) {
        throw ConfigError("dataset in the output directory was generated from a different config; re-run gen-data");
    }
}

void cmd_pretrain(const RunConfig& cfg, const std::string& out) {
    const env::MazeEnv env = make_env(cfg);
    const data::OfflineDataset ds = data::load_dataset(dataset_path(out));
    check_dataset_matches(cfg, env, ds);
    const auto& seeds = cfg.protocol.seeds;
    std::vector<rl::PretrainResult> results(seeds.size());
    std::vector<std::exception_ptr> errors(seeds.size());
    const std::size_t workers = std::min(worker_count(), seeds.size());
    auto work = [&](std::size_t w) {
        for (std::size_t i = w; i < seeds.size(); i += workers) {
            try {
                results[i] = rl::pretrain(ds, env.eps(), cfg.backbone, cfg.sampler, pretrain_seed(cfg, seeds[i]));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        for (const auto& ck : results[i].checkpoints) rl::save_checkpoint(ck, checkpoint_path(out, seeds[i], ck.step));
        write_file(join(out, "train_log_seed" + std::to_string(seeds[i]) + ".csv"), rl::format_log_csv(results[i].log));
        std::fprintf(stderr, "pretrain: seed %llu, %zu checkpoints\n", static_cast<unsigned long long>(seeds[i]),
                     results[i].checkpoints.size());
    }
}

struct SelectionLog {
    std::mutex mu;
    std::string text;
};

std::vector<ttt::ResultRow> run_eval(const RunConfig& cfg, const Workspace& ws, ttt::Protocol protocol,
                                     ttt::EvalMode mode, const std::string& out) {
    protocol.mode = mode;
    ttt::EpisodeContext ctx = ws.context(cfg);
    SelectionLog log;
    if (cfg.log_selections) {
        protocol.workers = 1;  // keeps the log in row order
        ctx.debug_sink = [&log](const std::string& line) {
            std::lock_guard lock(log.mu);
            log.text += line;
            log.text += '\n';
        };
    }
    std::vector<ttt::ResultRow> rows = ttt::evaluate(ctx, ws.ttt_config(cfg), protocol);
    if (cfg.log_selections) {
        write_file(join(out, "selections_" + std::string(ttt::to_string(mode)) + ".jsonl"), log.text);
    }
    return rows;
}

void cmd_eval(const RunConfig& cfg, const Invocation& inv, const std::string& out) {
    const Workspace ws(cfg, out);
    const ttt::EvalMode mode = ttt::parse_eval_mode(inv.mode);
    const std::string name(ttt::to_string(mode));
    const auto rows = run_eval(cfg, ws, ws.protocol, mode, out);
    write_file(join(out, "results_" + name + ".csv"), ttt::format_results_csv(rows));
    const ttt::Summary s = ttt::summarize(rows);
    write_file(join(out, "summary_" + name + ".csv"),
               format_summary_csv(ws.protocol.backbone, ws.protocol.regime, {{name, s}}));
    std::fprintf(stderr, "eval %s: success %.3f +- %.3f over %zu episodes\n", name.c_str(), s.mean, s.stderr_,
                 rows.size());
}

void cmd_ablate(const RunConfig& cfg, const std::string& out) {
    const Workspace ws(cfg, out);
    std::vector<ttt::ResultRow> all;
    std::vector<std::pair<std::string, ttt::Summary>> table;
    svg::Series series;
    for (const auto& m : cfg.ablate_modes) {
        const ttt::EvalMode mode = ttt::parse_eval_mode(m);
        const auto rows = run_eval(cfg, ws, ws.protocol, mode, out);
        all.insert(all.end(), rows.begin(), rows.end());
        const ttt::Summary s = ttt::summarize(rows);
        table.emplace_back(std::string(ttt::to_string(mode)), s);
        series.labels.push_back(table.back().first);
        series.y.push_back(s.mean);
        series.err.push_back(s.stderr_);
        std::fprintf(stderr, "ablate %s: %.3f +- %.3f\n", table.back().first.c_str(), s.mean, s.stderr_);
    }
    write_file(join(out, "ablation_results.csv"), ttt::format_results_csv(all));
    write_file(join(out, "ablation.csv"), format_summary_csv(ws.protocol.backbone, ws.protocol.regime, table));
    write_file(join(out, "ablation.svg"),
               svg::bar_chart("Data selection ablation (" + ws.protocol.backbone + ", " + ws.protocol.regime + ")",
                              "success rate", series));
}

void cmd_freq_sweep(const RunConfig& cfg, const Invocation& inv, const std::string& out) {
    const Workspace ws(cfg, out);
    const std::vector<std::size_t> ks = inv.ks.empty() ? cfg.sweep_ks : inv.ks;
    if (ks.empty()) throw ConfigError("freq-sweep: no K values");
    ttt::Protocol protocol = ws.protocol;
    protocol.mode = ttt::EvalMode::full;
    std::vector<ttt::ResultRow> all;
    const auto sweep = ttt::freq_sweep(ws.context(cfg), ws.ttt_config(cfg), protocol, ks, &all);
    std::ostringstream csv;
    csv << "K,mean,stderr,mean_flops\n";
    svg::Series series;
    for (const auto& r : sweep) {
        csv << r.K << ',' << fmt("%.6f", r.summary.mean) << ',' << fmt("%.6f", r.summary.stderr_) << ','
            << fmt("%.1f", r.summary.mean_flops) << '\n';
        series.labels.push_back("K=" + std::to_string(r.K));
        series.x.push_back(r.summary.mean_flops);
        series.y.push_back(r.summary.mean);
        series.err.push_back(r.summary.stderr_);
        std::fprintf(stderr, "freq-sweep K=%zu: %.3f +- %.3f, %.4g FLOPs/episode\n", r.K, r.summary.mean,
                     r.summary.stderr_, r.summary.mean_flops);
    }
    write_file(join(out, "freq_sweep_results.csv"), ttt::format_results_csv(all));
    write_file(join(out, "freq_sweep.csv"), csv.str());
    write_file(join(out, "freq_sweep.svg"),
               svg::line_chart("TTT frequency sweep", "mean FLOPs per episode", "success rate", series));
}

void cmd_flops(const RunConfig& cfg, const std::string& out) {
    const FlopsConfig& f = cfg.flops;
    std::ostringstream csv;
    csv << "configuration,width,hidden_layers,episode_len,grad_steps,frequency,flops,matched_width\n";
    flops::FlopModel base;
    base.hidden_layers = f.hidden_layers;
    base.episode_len = f.episode_len;
    base.grad_steps = f.grad_steps;
    for (std::uint64_t w : f.widths) {
        flops::FlopModel m = base;
        m.width = w;
        csv << "frozen," << w << ',' << m.hidden_layers << ',' << m.episode_len << ",0,0," << flops::episode_cost_frozen(m)
            << ',' << flops::matched_width(flops::episode_cost_frozen(m), m) << '\n';
        for (std::uint64_t p : f.periods) {
            m.freq = flops::Frequency::every(p);
            const std::uint64_t c = flops::episode_cost_ttt(m);
            csv << "ttt," << w << ',' << m.hidden_layers << ',' << m.episode_len << ',' << m.grad_steps << ",1/" << p
                << ',' << c << ',' << flops::matched_width(c, m) << '\n';
        }
    }
    for (double t : f.rounded_targets) {
        if (!(t >= 0.0) || t > 1.8e19) throw ConfigError("flops.rounded_targets must be in [0, 1.8e19]");
        const auto target = static_cast<std::uint64_t>(std::llround(t));
        csv << "rounded_target,,"<< base.hidden_layers << ',' << base.episode_len << ",,," << target << ','
            << flops::matched_width(target, base) << '\n';
    }
    write_file(join(out, "flops.csv"), csv.str());
    std::fputs(csv.str().c_str(), stdout);
}

}  // namespace

env::MazeEnv make_env(const RunConfig& cfg) { return env::MazeEnv(env::resolve_layout(cfg.layout), cfg.env); }

std::uint64_t dataset_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "dataset"); }

std::uint64_t pretrain_seed(const RunConfig& cfg, std::uint64_t protocol_seed) {
    return derive_seed(cfg.seed, "pretrain", protocol_seed);
}

data::OfflineDataset make_dataset(const RunConfig& cfg, const env::MazeEnv& env) {
    const DatasetConfig& d = cfg.dataset;
    if (data::parse_regime(d.regime) == data::Regime::expert) {
        return data::generate_expert(env, d.n_traj, d.noise, dataset_seed(cfg));
    }
    return data::generate_play(env, d.n_traj, d.n_waypoints, dataset_seed(cfg), {d.leg_cap, d.noise});
}

double selection_eps(const RunConfig& cfg, const env::MazeEnv& env) {
    return cfg.selection_eps < 0.0 ? env.eps() : cfg.selection_eps;
}

std::vector<env::State> eval_goals(const RunConfig& cfg, const env::MazeEnv& env) {
    if (!cfg.protocol.goals.empty()) return cfg.protocol.goals;
    std::vector<env::State> g;
    for (const auto& spec : env.eval_goals()) g.push_back(spec.goal);
    return g;
}

std::string dataset_path(const std::string& out) { return join(out, "dataset.bin"); }

std::string checkpoint_path(const std::string& out, std::uint64_t protocol_seed, std::size_t step) {
    return join(out, "ckpt_seed" + std::to_string(protocol_seed) + "_step" + std::to_string(step) + ".bin");
}

Workspace::Workspace(const RunConfig& cfg, const std::string& out)
    : env(make_env(cfg)), dataset(data::load_dataset(dataset_path(out))), index(dataset, selection_eps(cfg, env)) {
    check_dataset_matches(cfg, env, dataset);
    protocol.backbone = std::string(rl::to_string(cfg.backbone.algo));
    protocol.regime = cfg.dataset.regime;
    protocol.goals = eval_goals(cfg, env);
    protocol.workers = worker_count();
    for (std::uint64_t s : cfg.protocol.seeds) {
        ttt::SeedRun run{pretrain_seed(cfg, s), {}};
        for (std::size_t step : cfg.backbone.checkpoint_steps) {
            run.checkpoints.push_back(rl::load_checkpoint(checkpoint_path(out, s, step), step));
        }
        protocol.runs.push_back(std::move(run));
    }
}

ttt::EpisodeContext Workspace::context(const RunConfig& cfg) const {
    return {&env, &dataset, &index, nullptr, rl::policy_loss_of(cfg.backbone.algo), {}};
}

ttt::TTTConfig Workspace::ttt_config(const RunConfig& cfg) const {
    ttt::TTTConfig t = cfg.ttt;
    t.selection.eps = selection_eps(cfg, env);
    t.hyper = cfg.backbone.hyper;
    return t;
}

std::string format_summary_csv(const std::string& backbone, const std::string& regime,
                               const std::vector<std::pair<std::string, ttt::Summary>>& rows) {
    std::ostringstream csv;
    csv << "backbone,dataset_regime,mode,mean,stderr,table_cell,per_seed,mean_flops\n";
    for (const auto& [mode, s] : rows) {
        std::string per_seed;
        for (std::size_t i = 0; i < s.per_seed.size(); ++i) per_seed += (i ? ";" : "") + fmt("%.4f", s.per_seed[i]);
        csv << backbone << ',' << regime << ',' << mode << ',' << fmt("%.6f", s.mean) << ',' << fmt("%.6f", s.stderr_)
            << ',' << fmt("%.2f", s.mean) << " +- " << fmt("%.2f", s.stderr_) << ',' << per_seed << ','
            << fmt("%.1f", s.mean_flops) << '\n';
    }
    return csv.str();
}

void run(const RunConfig& cfg, Invocation inv) {
    cfg.validate();
    if (inv.command == "eval") inv.mode = std::string(ttt::to_string(ttt::parse_eval_mode(inv.mode)));
    const std::string out = inv.out.empty() ? cfg.out : inv.out;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
    if (inv.command == "gen-data") {
        cmd_gen_data(cfg, out);
    } else if (inv.command == "pretrain") {
        cmd_pretrain(cfg, out);
    } else if (inv.command == "eval") {
        cmd_eval(cfg, inv, out);
    } else if (inv.command == "ablate") {
        cmd_ablate(cfg, out);
    } else if (inv.command == "freq-sweep") {
        cmd_freq_sweep(cfg, inv, out);
    } else if (inv.command == "flops") {
        cmd_flops(cfg, out);
    } else {
        throw ConfigError("unknown command '" + inv.command + "'");
    }
    write_manifest(cfg, inv, out);
}

void rerun(const std::string& manifest_path, const std::string& out) {
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw ConfigError("manifest " + manifest_path + ": " + e.what());
    }
    if (!m.is_object() || !m.contains("command") || !m.contains("config")) {
        throw ConfigError("manifest " + manifest_path + " lacks command or config");
    }
    const RunConfig cfg = config_from_json(m["config"]);
    if (m.contains("config_hash") && m["config_hash"] != config_hash(config_to_json(cfg))) {
        throw IntegrityError("manifest " + manifest_path + ": config hash does not match its config");
    }
    Invocation inv;
    try {
        inv.command = m["command"].get<std::string>();
        if (m.contains("mode")) inv.mode = m["mode"].get<std::string>();
        if (m.contains("ks")) inv.ks = m["ks"].get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw ConfigError("manifest " + manifest_path + ": " + e.what());
    }
    inv.out = out;
    run(cfg, inv);
}

int exit_code_of(const std::exception& e) {
    if (const auto* g = dynamic_cast<const Error*>(&e)) {
        static const char* names[] = {"", "shape", "config", "io", "integrity", "numeric"};
        const int code = static_cast<int>(g->kind());
        std::fprintf(stderr, "gcttt: %s error: %s\n", names[code], e.what());
        return code;
    }
    std::fprintf(stderr, "gcttt: error: %s\n", e.what());
    return 1;
}

int main(int argc, char** argv) {
    CLI::App app{"Goal-conditioned test-time training on maze navigation"};
    app.require_subcommand(1);
    std::string config_path, out, mode = "full", manifest;
    std::vector<std::size_t> ks;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run config (defaults for every missing key)");
        sub->add_option("--out", out, "output directory (overrides the config)");
    };
    CLI::App* gen = app.add_subcommand("gen-data", "generate the offline dataset");
    CLI::App* pre = app.add_subcommand("pretrain", "pre-train the backbone for every protocol seed");
    CLI::App* ev = app.add_subcommand("eval", "evaluate checkpoints, frozen or with TTT");
    CLI::App* abl = app.add_subcommand("ablate", "compare data-selection modes");
    CLI::App* fq = app.add_subcommand("freq-sweep", "sweep the TTT horizon K");
    CLI::App* fl = app.add_subcommand("flops", "analytic inference-compute table");
    CLI::App* re = app.add_subcommand("rerun", "re-run a command from its manifest");
    for (CLI::App* s : {gen, pre, ev, abl, fq, fl}) add_common(s);
    ev->add_option("--mode", mode, "frozen|ttt|full|critic_free|relevant_only|optimal_only|random");
    fq->add_option("--ks", ks, "K values (comma separated)")->delimiter(',');
    re->add_option("manifest", manifest, "manifest JSON written by an earlier run")->required();
    re->add_option("--out", out, "output directory (default: the manifest's)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::config);
    }
    try {
        if (re->parsed()) {
            rerun(manifest, out);
            return 0;
        }
        const RunConfig cfg = config_path.empty() ? config_from_json(json::object()) : load_config(config_path);
        Invocation inv;
        inv.command = app.get_subcommands().front()->get_name();
        inv.mode = mode;
        inv.ks = ks;
        inv.out = out;
        run(cfg, inv);
    } catch (const std::exception& e) {
        return exit_code_of(e);
    }
    return 0;
}

}  // namespace gcttt::cli
