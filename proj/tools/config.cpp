#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "gcttt/errors.hpp"
#include "gcttt/rng.hpp"

namespace gcttt::cli {

using nlohmann::json;

namespace {

/// One JSON object; every key read is remembered so leftovers can be rejected.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    const json* raw(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void get(const char* key, double& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number()) fail(key, "a number");
            out = v->get<double>();
        }
    }
    void get(const char* key, bool& out) {
        if (const json* v = raw(key)) {
            if (!v->is_boolean()) fail(key, "a boolean");
            out = v->get<bool>();
        }
    }
    void get(const char* key, std::string& out) {
        if (const json* v = raw(key)) {
            if (!v->is_string()) fail(key, "a string");
            out = v->get<std::string>();
        }
    }
    template <class U>
        requires std::is_unsigned_v<U>
    void get(const char* key, U& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
                fail(key, "a non-negative integer");
            }
            out = static_cast<U>(v->get<std::uint64_t>());
        }
    }
    void get(const char* key, int& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number_integer()) fail(key, "an integer");
            out = v->get<int>();
        }
    }
    template <class T>
    void get(const char* key, std::vector<T>& out) {
        if (const json* v = raw(key)) {
            if (!v->is_array()) fail(key, "an array");
            std::vector<T> tmp;
            for (std::size_t i = 0; i < v->size(); ++i) {
                const json wrap{{"x", (*v)[i]}};
                Section s(wrap, path_ + "." + key + "[" + std::to_string(i) + "]");
                T item{};
                s.get("x", item);
                tmp.push_back(item);
            }
            out = std::move(tmp);
        }
    }
    void get(const char* key, std::vector<env::State>& out) {
        if (const json* v = raw(key)) {
            if (!v->is_array()) fail(key, "an array of [x, y] pairs");
            std::vector<env::State> tmp;
            for (const json& p : *v) {
                if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
                    fail(key, "an array of [x, y] pairs");
                }
                tmp.push_back({p[0].get<double>(), p[1].get<double>()});
            }
            out = std::move(tmp);
        }
    }

    Section sub(const char* key) {
        static const json empty = json::object();
        const json* v = raw(key);
        return Section(v ? *v : empty, path_ + "." + key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown config key " + where() + "." + it.key());
        }
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }
    [[noreturn]] void fail(const char* key, const char* what) const {
        throw ConfigError("config key " + path_ + "." + key + " must be " + what);
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

void RunConfig::validate() const {
    env::resolve_layout(layout);
    if (env.a_max <= 0.0 || env.episode_cap < 1) throw ConfigError("env: a_max must be > 0 and episode_cap >= 1");
    data::parse_regime(dataset.regime);
    if (dataset.n_traj < 1) throw ConfigError("dataset.n_traj must be >= 1");
    if (!(dataset.noise >= 0.0 && dataset.noise <= 1.0)) throw ConfigError("dataset.noise must be in [0, 1]");
    backbone.validate();
    sampler.validate();
    ttt.validate();
    if (protocol.seeds.empty()) throw ConfigError("protocol.seeds must not be empty");
    if (std::set<std::uint64_t>(protocol.seeds.begin(), protocol.seeds.end()).size() != protocol.seeds.size()) {
        throw ConfigError("protocol.seeds must be distinct");
    }
    for (const auto& m : ablate_modes) ttt::parse_eval_mode(m);
    for (std::size_t k : sweep_ks) {
        if (k < 1) throw ConfigError("sweep_ks entries must be >= 1");
    }
    for (std::uint64_t p : flops.periods) {
        if (p < 1) throw ConfigError("flops.periods entries must be >= 1");
    }
    for (std::uint64_t w : flops.widths) {
        if (w < 1) throw ConfigError("flops.widths entries must be >= 1");
    }
    if (flops.hidden_layers < 1 || flops.episode_len < 1) throw ConfigError("flops: hidden_layers and episode_len must be >= 1");
    if (out.empty()) throw ConfigError("out must not be empty");
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    Section root(j, "");
    root.get("layout", c.layout);
    root.get("out", c.out);
    root.get("seed", c.seed);
    root.get("log_selections", c.log_selections);
    root.get("ablate_modes", c.ablate_modes);
    root.get("sweep_ks", c.sweep_ks);

    Section e = root.sub("env");
    std::string kind(env::to_string(c.env.kind));
    e.get("kind", kind);
    c.env.kind = env::parse_env_kind(kind);
    e.get("a_max", c.env.a_max);
    e.get("contact_margin", c.env.contact_margin);
    e.get("start_jitter", c.env.start_jitter);
    e.get("episode_cap", c.env.episode_cap);
    e.finish();

    Section d = root.sub("dataset");
    d.get("regime", c.dataset.regime);
    d.get("n_traj", c.dataset.n_traj);
    d.get("n_waypoints", c.dataset.n_waypoints);
    d.get("leg_cap", c.dataset.leg_cap);
    d.get("noise", c.dataset.noise);
    d.finish();

    Section b = root.sub("backbone");
    std::string algo(rl::to_string(c.backbone.algo));
    b.get("algo", algo);
    c.backbone.algo = rl::parse_algo(algo);
    b.get("lr", c.backbone.lr);
    b.get("tau", c.backbone.tau);
    b.get("batch_size", c.backbone.batch_size);
    b.get("pretrain_steps", c.backbone.pretrain_steps);
    b.get("checkpoint_steps", c.backbone.checkpoint_steps);
    b.get("hidden", c.backbone.hidden);
    b.get("init_log_std", c.backbone.init_log_std);
    b.get("selection_critic", c.backbone.selection_critic);
    b.get("log_every", c.backbone.log_every);
    b.get("record_wall_time", c.backbone.record_wall_time);
    Section h = b.sub("hyper");
    h.get("gamma", c.backbone.hyper.gamma);
    h.get("expectile", c.backbone.hyper.expectile);
    h.get("awr_beta", c.backbone.hyper.awr_beta);
    h.get("awr_w_max", c.backbone.hyper.awr_w_max);
    h.get("ddpg_beta", c.backbone.hyper.ddpg_beta);
    h.get("use_target_networks", c.backbone.hyper.use_target_networks);
    h.finish();
    b.finish();
    c.ttt.hyper = c.backbone.hyper;

    Section s = root.sub("sampler");
    s.get("p_future", c.sampler.p_future);
    s.get("p_random", c.sampler.p_random);
    s.get("p_current", c.sampler.p_current);
    s.get("future_discount", c.sampler.future_discount);
    s.finish();

    Section sl = root.sub("selection");
    auto& sc = c.ttt.selection;
    sl.get("eps", c.selection_eps);
    sl.get("horizon", sc.horizon);
    sl.get("q", sc.q);
    std::string mode(sel::to_string(sc.mode)), rel(sel::to_string(sc.relevance));
    sl.get("mode", mode);
    sl.get("relevance", rel);
    sc.mode = sel::parse_mode(mode);
    sc.relevance = sel::parse_relevance(rel);
    if (const json* v = sl.raw("c_rel")) {
        if (v->is_null()) {
            sc.c_rel = -INFINITY;
        } else if (v->is_number()) {
            sc.c_rel = v->get<double>();
        } else {
            throw ConfigError("config key .selection.c_rel must be a number or null");
        }
    }
    sl.get("gamma", sc.gamma);
    sl.get("keep_top_fraction", sc.keep_top_fraction);
    sl.get("critic_free_extent", sc.critic_free_extent);
    sl.get("critic_free_absorbing", sc.critic_free_absorbing);
    sl.finish();

    Section t = root.sub("ttt");
    t.get("K", c.ttt.K);
    t.get("N", c.ttt.N);
    t.get("lr", c.ttt.lr);
    t.get("minibatch", c.ttt.minibatch);
    t.get("reset_each_cycle", c.ttt.reset_each_cycle);
    if (const json* v = t.raw("finetune_loss")) {
        if (v->is_null()) {
            c.ttt.finetune_loss.reset();
        } else if (v->is_string()) {
            c.ttt.finetune_loss = rl::parse_loss_id(v->get<std::string>());
        } else {
            throw ConfigError("config key .ttt.finetune_loss must be a string or null");
        }
    }
    t.finish();

    Section p = root.sub("protocol");
    p.get("seeds", c.protocol.seeds);
    p.get("goals", c.protocol.goals);
    p.finish();

    Section f = root.sub("flops");
    f.get("widths", c.flops.widths);
    f.get("hidden_layers", c.flops.hidden_layers);
    f.get("episode_len", c.flops.episode_len);
    f.get("grad_steps", c.flops.grad_steps);
    f.get("periods", c.flops.periods);
    f.get("rounded_targets", c.flops.rounded_targets);
    f.finish();

    root.finish();
    c.validate();
    return c;
}

json config_to_json(const RunConfig& c) {
    const auto& sc = c.ttt.selection;
    const auto& hp = c.backbone.hyper;
    json goals = json::array();
    for (const auto& g : c.protocol.goals) goals.push_back({g.x, g.y});
    return {
        {"layout", c.layout},
        {"out", c.out},
        {"seed", c.seed},
        {"log_selections", c.log_selections},
        {"ablate_modes", c.ablate_modes},
        {"sweep_ks", c.sweep_ks},
        {"env",
         {{"kind", env::to_string(c.env.kind)},
          {"a_max", c.env.a_max},
          {"contact_margin", c.env.contact_margin},
          {"start_jitter", c.env.start_jitter},
          {"episode_cap", c.env.episode_cap}}},
        {"dataset",
         {{"regime", c.dataset.regime},
          {"n_traj", c.dataset.n_traj},
          {"n_waypoints", c.dataset.n_waypoints},
          {"leg_cap", c.dataset.leg_cap},
          {"noise", c.dataset.noise}}},
        {"backbone",
         {{"algo", rl::to_string(c.backbone.algo)},
          {"lr", c.backbone.lr},
          {"tau", c.backbone.tau},
          {"batch_size", c.backbone.batch_size},
          {"pretrain_steps", c.backbone.pretrain_steps},
          {"checkpoint_steps", c.backbone.checkpoint_steps},
          {"hidden", c.backbone.hidden},
          {"init_log_std", c.backbone.init_log_std},
          {"selection_critic", c.backbone.selection_critic},
          {"log_every", c.backbone.log_every},
          {"record_wall_time", c.backbone.record_wall_time},
          {"hyper",
           {{"gamma", hp.gamma},
            {"expectile", hp.expectile},
            {"awr_beta", hp.awr_beta},
            {"awr_w_max", hp.awr_w_max},
            {"ddpg_beta", hp.ddpg_beta},
            {"use_target_networks", hp.use_target_networks}}}}},
        {"sampler",
         {{"p_future", c.sampler.p_future},
          {"p_random", c.sampler.p_random},
          {"p_current", c.sampler.p_current},
          {"future_discount", c.sampler.future_discount}}},
        {"selection",
         {{"eps", c.selection_eps},
          {"horizon", sc.horizon},
          {"q", sc.q},
          {"mode", sel::to_string(sc.mode)},
          {"relevance", sel::to_string(sc.relevance)},
          {"c_rel", std::isfinite(sc.c_rel) ? json(sc.c_rel) : json(nullptr)},
          {"gamma", sc.gamma},
          {"keep_top_fraction", sc.keep_top_fraction},
          {"critic_free_extent", sc.critic_free_extent},
          {"critic_free_absorbing", sc.critic_free_absorbing}}},
        {"ttt",
         {{"K", c.ttt.K},
          {"N", c.ttt.N},
          {"lr", c.ttt.lr},
          {"minibatch", c.ttt.minibatch},
          {"reset_each_cycle", c.ttt.reset_each_cycle},
          {"finetune_loss", c.ttt.finetune_loss ? json(rl::to_string(*c.ttt.finetune_loss)) : json(nullptr)}}},
        {"protocol", {{"seeds", c.protocol.seeds}, {"goals", goals}}},
        {"flops",
         {{"widths", c.flops.widths},
          {"hidden_layers", c.flops.hidden_layers},
          {"episode_len", c.flops.episode_len},
          {"grad_steps", c.flops.grad_steps},
          {"periods", c.flops.periods},
          {"rounded_targets", c.flops.rounded_targets}}},
    };
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const json& resolved) {
    const std::string text = resolved.dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_role(text)));
    return buf;
}

}  // namespace gcttt::cli
