#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpo/errors.hpp"
#include "rpo/mlp.hpp"
#include "rpo/rng.hpp"
#include "rpo/trading_env.hpp"

namespace rpo {

/// Gaussian MLP policy (tanh bodies, linear heads) plus a state-independent
/// log-std vector. All parameters live in one flat vector laid out as
/// [actor | log_std | critic] so Adam, checkpoints and gradient checks are
/// uniform.
struct PolicyParams {
    Eigen::Index obs_dim = 0;
    Eigen::Index n_assets = 0;
    Eigen::Index hidden = 64;
    MlpSpec actor;
    MlpSpec critic;
    Eigen::VectorXd flat;

    static constexpr double kLogStdMin = -20.0;
    static constexpr double kLogStdMax = 2.0;

    static PolicyParams init(Eigen::Index obs_dim, Eigen::Index n_assets, std::uint64_t seed,
                             Eigen::Index hidden = 64) {
        PolicyParams p;
        p.obs_dim = obs_dim;
        p.n_assets = n_assets;
        p.hidden = hidden;
        p.actor.dims = {obs_dim, hidden, hidden, n_assets};
        p.critic.dims = {obs_dim, hidden, hidden, 1};
        p.flat = Eigen::VectorXd::Zero(p.param_count());
        std::mt19937_64 rng(seed);
        mlp_init(p.actor, p.flat.data() + p.actor_offset(), rng, std::sqrt(2.0), 0.01);
        p.flat.segment(p.log_std_offset(), n_assets).setZero();
        mlp_init(p.critic, p.flat.data() + p.critic_offset(), rng, std::sqrt(2.0), 1.0);
        return p;
    }

    Eigen::Index actor_offset() const { return 0; }
    Eigen::Index log_std_offset() const { return actor.param_count(); }
    Eigen::Index critic_offset() const { return actor.param_count() + n_assets; }
    Eigen::Index param_count() const { return actor.param_count() + n_assets + critic.param_count(); }

    Eigen::VectorXd actor_mean(const Eigen::VectorXd& obs, MlpCache* cache = nullptr) const {
        return mlp_forward(actor, flat.data() + actor_offset(), obs, cache);
    }

    double value(const Eigen::VectorXd& obs, MlpCache* cache = nullptr) const {
        return mlp_forward(critic, flat.data() + critic_offset(), obs, cache)[0];
    }

    Eigen::VectorXd clamped_log_std() const {
        return flat.segment(log_std_offset(), n_assets).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    }

    /// Project stored log-std back into bounds and verify finiteness.
    void enforce_invariants() {
        auto ls = flat.segment(log_std_offset(), n_assets);
        ls = ls.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
        if (!flat.allFinite()) throw SolverError("policy parameters became non-finite");
    }

    double log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& action) const {
        const Eigen::VectorXd ls = clamped_log_std();
        const Eigen::VectorXd sigma = ls.array().exp();
        const Eigen::VectorXd z = (action - mean).cwiseQuotient(sigma);
        constexpr double kLog2Pi = 1.8378770664093454836;
        return -0.5 * z.squaredNorm() - ls.sum() - 0.5 * kLog2Pi * double(n_assets);
    }

    /// Differential entropy of the Gaussian head (state independent).
    double entropy() const {
        constexpr double kLog2PiE = 2.8378770664093454836;
        return clamped_log_std().sum() + 0.5 * kLog2PiE * double(n_assets);
    }
};

/// Raw action from the policy: the actor mean, or mean plus Gaussian noise
/// drawn from `rng` when sampling stochastically.
inline Eigen::VectorXd act(const PolicyParams& params, const Eigen::VectorXd& obs, bool deterministic,
                           std::mt19937_64* rng = nullptr) {
    if (obs.size() != params.obs_dim) throw Error("observation dimension mismatch");
    Eigen::VectorXd mean = params.actor_mean(obs);
    if (deterministic) return mean;
    if (!rng) throw Error("stochastic action requires a generator");
    const Eigen::VectorXd sigma = params.clamped_log_std().array().exp();
    for (Eigen::Index i = 0; i < mean.size(); ++i) mean[i] += sigma[i] * normal_sample(*rng);
    return mean;
}

/// One rollout of aligned transition sequences.
struct RolloutBuffer {
    Eigen::MatrixXd observations;  // n_steps x obs_dim
    Eigen::MatrixXd actions;       // n_steps x n_assets
    Eigen::VectorXd log_probs;
    Eigen::VectorXd rewards;
    Eigen::VectorXd values;
    std::vector<std::uint8_t> dones;  // episode ended after step t
    Eigen::VectorXd advantages;
    Eigen::VectorXd returns_to_go;

    Eigen::Index size() const { return rewards.size(); }

    void allocate(Eigen::Index n_steps, Eigen::Index obs_dim, Eigen::Index n_assets) {
        observations.resize(n_steps, obs_dim);
        actions.resize(n_steps, n_assets);
        log_probs.resize(n_steps);
        rewards.resize(n_steps);
        values.resize(n_steps);
        dones.assign(std::size_t(n_steps), 0);
        advantages = Eigen::VectorXd::Zero(n_steps);
        returns_to_go = Eigen::VectorXd::Zero(n_steps);
    }
};

struct PpoConfig {
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip_eps = 0.2;
    double learn_rate = 3e-4;
    Eigen::Index n_steps = 2048;
    Eigen::Index minibatch = 64;
    int epochs_per_update = 10;
    double value_coef = 0.5;
    double entropy_coef = 0.0;
    long total_steps = 500000;
    std::uint64_t seed = 0;
    Eigen::Index episode_len = 252;  // rollout episodes truncate after one trading year
    bool debug_checks = false;       // assert the clipped-surrogate lower bound per minibatch

    void validate() const {
        if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must lie in (0,1)");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0,1]");
        if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in (0,1]");
        if (n_steps < 1 || minibatch < 1 || minibatch > n_steps) throw ConfigError("invalid batch sizes");
        if (epochs_per_update < 1) throw ConfigError("epochs_per_update must be >= 1");
        if (!(learn_rate > 0.0)) throw ConfigError("learn_rate must be positive");
        if (episode_len < 1) throw ConfigError("episode_len must be >= 1");
        if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    }
};

/// GAE(gamma, lambda): delta_t = r_t + gamma V_{t+1} (1-done_t) - V_t and
/// A_t = delta_t + gamma lambda (1-done_t) A_{t+1}, bootstrapping the final
/// transition with `bootstrap_value`. Raw advantages and returns-to-go are
/// written into the buffer; normalization happens once per PPO update.
inline void gae_advantages(RolloutBuffer& buffer, double gamma, double lam, double bootstrap_value) {
    const Eigen::Index n = buffer.size();
    if (n == 0) throw Error("empty rollout buffer");
    double next_adv = 0.0;
    for (Eigen::Index t = n - 1; t >= 0; --t) {
        const double not_done = buffer.dones[std::size_t(t)] ? 0.0 : 1.0;
        const double next_value = (t + 1 < n) ? buffer.values[t + 1] : bootstrap_value;
        const double delta = buffer.rewards[t] + gamma * next_value * not_done - buffer.values[t];
        next_adv = delta + gamma * lam * not_done * next_adv;
        buffer.advantages[t] = next_adv;
    }
    buffer.returns_to_go = buffer.advantages + buffer.values;
}

struct PpoLossDiag {
    double total = 0.0;
    double policy = 0.0;
    double value = 0.0;
    double entropy = 0.0;
    double clipped_surrogate = 0.0;    // mean of min(rho*A, clip(rho)*A)
    double unclipped_surrogate = 0.0;  // mean of rho*A
    double clip_fraction = 0.0;
    bool finite = true;
};

/// Full PPO loss over the index set `idx`, and (when `grad` is non-null) its
/// exact gradient with respect to every parameter. The objective minimized:
///   -E[min(rho A, clip(rho) A)] + value_coef E[(V - ret)^2] - entropy_coef H
inline PpoLossDiag ppo_loss_and_grad(const PolicyParams& params, const RolloutBuffer& buffer,
                                     const std::vector<Eigen::Index>& idx, const PpoConfig& cfg,
                                     Eigen::VectorXd* grad) {
    PpoLossDiag diag;
    const double k = double(idx.size());
    if (idx.empty()) throw Error("empty minibatch");
    if (grad) grad->setZero();

    const Eigen::VectorXd ls = params.clamped_log_std();
    const Eigen::VectorXd sigma = ls.array().exp();
    const Eigen::VectorXd raw_ls = params.flat.segment(params.log_std_offset(), params.n_assets);

    MlpCache actor_cache, critic_cache;
    long clipped_count = 0;

    for (const Eigen::Index t : idx) {
        const Eigen::VectorXd obs = buffer.observations.row(t);
        const Eigen::VectorXd action = buffer.actions.row(t);
        const double adv = buffer.advantages[t];

        const Eigen::VectorXd mean = params.actor_mean(obs, grad ? &actor_cache : nullptr);
        const double logp = params.log_prob(mean, action);
        const double rho = std::exp(logp - buffer.log_probs[t]);
        const double unclipped = rho * adv;
        const double clipped = std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
        const bool take_unclipped = unclipped <= clipped;
        diag.unclipped_surrogate += unclipped / k;
        diag.clipped_surrogate += std::min(unclipped, clipped) / k;
        diag.policy -= std::min(unclipped, clipped) / k;
        if (std::abs(rho - 1.0) > cfg.clip_eps) ++clipped_count;

        MlpCache* vc = grad ? &critic_cache : nullptr;
        const double v = params.value(obs, vc);
        const double v_err = v - buffer.returns_to_go[t];
        diag.value += cfg.value_coef * v_err * v_err / k;

        if (grad) {
            // d(-surrogate)/d logp: zero when the clipped branch is active.
            const double d_logp = take_unclipped ? -(adv * rho) / k : 0.0;
            const Eigen::VectorXd z = (action - mean).cwiseQuotient(sigma);
            const Eigen::VectorXd d_mean = d_logp * z.cwiseQuotient(sigma);
            mlp_backward(params.actor, params.flat.data() + params.actor_offset(), actor_cache, d_mean,
                         grad->data() + params.actor_offset());
            for (Eigen::Index i = 0; i < params.n_assets; ++i) {
                // Through the clamp: gradient flows only at interior values.
                if (raw_ls[i] > PolicyParams::kLogStdMin && raw_ls[i] < PolicyParams::kLogStdMax)
                    (*grad)[params.log_std_offset() + i] += d_logp * (z[i] * z[i] - 1.0);
            }
            const Eigen::VectorXd d_v = Eigen::VectorXd::Constant(1, cfg.value_coef * 2.0 * v_err / k);
            mlp_backward(params.critic, params.flat.data() + params.critic_offset(), critic_cache, d_v,
                         grad->data() + params.critic_offset());
        }
    }

    diag.entropy = params.entropy();
    if (grad && cfg.entropy_coef != 0.0) {
        for (Eigen::Index i = 0; i < params.n_assets; ++i)
            if (raw_ls[i] > PolicyParams::kLogStdMin && raw_ls[i] < PolicyParams::kLogStdMax)
                (*grad)[params.log_std_offset() + i] -= cfg.entropy_coef;
    }

    diag.clip_fraction = double(clipped_count) / k;
    diag.total = diag.policy + diag.value - cfg.entropy_coef * diag.entropy;
    diag.finite = std::isfinite(diag.total) && (!grad || grad->allFinite());
    return diag;
}

namespace ppo_detail {

// Fisher-Yates with an explicit uniform draw; std::shuffle is
// implementation-defined and would break cross-platform determinism.
inline void shuffle_indices(std::vector<Eigen::Index>& idx, std::mt19937_64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = std::size_t(uniform01(rng) * double(i));
        std::swap(idx[i - 1], idx[j < i ? j : i - 1]);
    }
}

}  // namespace ppo_detail

struct UpdateDiag {
    bool aborted = false;
    std::string message;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    long lower_bound_violations = 0;  // clipped surrogate above unclipped
    int minibatches = 0;
};

/// One PPO update phase: normalize advantages (zero mean, unit std, floored),
/// then run shuffled minibatch Adam steps for the configured epochs. A
/// non-finite loss aborts the phase and restores the previous parameters.
inline UpdateDiag ppo_update(PolicyParams& params, RolloutBuffer& buffer, const PpoConfig& cfg, AdamOptimizer& adam,
                             std::mt19937_64& rng) {
    cfg.validate();
    const Eigen::Index n = buffer.size();
    if (n == 0) throw Error("empty rollout buffer");

    const double mean = buffer.advantages.mean();
    const double std_dev =
        std::sqrt(std::max(0.0, (buffer.advantages.array() - mean).square().sum() / double(n)));
    buffer.advantages = (buffer.advantages.array() - mean) / std::max(std_dev, 1e-8);

    const Eigen::VectorXd snapshot = params.flat;
    UpdateDiag out;
    Eigen::VectorXd grad(params.param_count());
    std::vector<Eigen::Index> order(std::size_t(n));
    for (Eigen::Index i = 0; i < n; ++i) order[std::size_t(i)] = i;

    for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
        ppo_detail::shuffle_indices(order, rng);
        for (Eigen::Index start = 0; start < n; start += cfg.minibatch) {
            const Eigen::Index stop = std::min(n, start + cfg.minibatch);
            const std::vector<Eigen::Index> mb(order.begin() + start, order.begin() + stop);
            const PpoLossDiag diag = ppo_loss_and_grad(params, buffer, mb, cfg, &grad);
            if (!diag.finite) {
                params.flat = snapshot;
                out.aborted = true;
                out.message = "non-finite loss; update rolled back";
                return out;
            }
            if (diag.clipped_surrogate > diag.unclipped_surrogate + 1e-10) ++out.lower_bound_violations;
            if (cfg.debug_checks && diag.clipped_surrogate > diag.unclipped_surrogate + 1e-10)
                throw SolverError("clipped surrogate exceeded unclipped surrogate");
            adam.step(params.flat, grad);
            params.enforce_invariants();
            out.policy_loss += diag.policy;
            out.value_loss += diag.value;
            out.entropy = diag.entropy;
            out.clip_fraction += diag.clip_fraction;
            ++out.minibatches;
        }
    }
    if (out.minibatches > 0) {
        out.policy_loss /= out.minibatches;
        out.value_loss /= out.minibatches;
        out.clip_fraction /= out.minibatches;
    }
    return out;
}

struct TrainingLog {
    struct Row {
        int update = 0;
        long steps = 0;
        double mean_step_reward = 0.0;
        double mean_episode_reward = 0.0;
        double policy_loss = 0.0;
        double value_loss = 0.0;
        double entropy = 0.0;
        double clip_fraction = 0.0;
    };
    std::vector<Row> rows;
};

/// Train a policy on the trading MDP with PPO. Episodes restart at random
/// valid days inside the environment's range and truncate after
/// `episode_len` steps. Fully deterministic for a fixed config (parameter
/// init, action noise, episode starts and shuffling all derive from
/// config.seed).
inline PolicyParams train(TradingEnv& env, const PpoConfig& cfg, TrainingLog* log = nullptr) {
    cfg.validate();
    std::mt19937_64 rng_init(substream_seed(cfg.seed, 0));
    std::mt19937_64 rng_action(substream_seed(cfg.seed, 1));
    std::mt19937_64 rng_start(substream_seed(cfg.seed, 2));
    std::mt19937_64 rng_shuffle(substream_seed(cfg.seed, 3));

    PolicyParams params = PolicyParams::init(env.obs_dim(), env.n_assets(), rng_init());
    if (cfg.total_steps == 0) return params;

    AdamOptimizer adam(cfg.learn_rate);
    RolloutBuffer buffer;
    buffer.allocate(cfg.n_steps, env.obs_dim(), env.n_assets());

    const auto random_start = [&]() {
        const Eigen::Index lo = env.min_start_index();
        const Eigen::Index hi = env.end_index() - 1;  // leave one step
        const Eigen::Index span = hi - lo + 1;
        return lo + Eigen::Index(uniform01(rng_start) * double(span)) % span;
    };

    Eigen::VectorXd obs = env.reset_at(random_start());
    Eigen::Index episode_steps = 0;
    double episode_reward = 0.0;
    double last_mean_episode_reward = 0.0;

    long steps_done = 0;
    int update_idx = 0;
    while (steps_done < cfg.total_steps) {
        double completed_sum = 0.0;
        long completed = 0;
        bool last_done = false;
        for (Eigen::Index t = 0; t < cfg.n_steps; ++t) {
            const Eigen::VectorXd mean = params.actor_mean(obs);
            const Eigen::VectorXd sigma = params.clamped_log_std().array().exp();
            Eigen::VectorXd action = mean;
            for (Eigen::Index i = 0; i < action.size(); ++i) action[i] += sigma[i] * normal_sample(rng_action);

            buffer.observations.row(t) = obs;
            buffer.actions.row(t) = action;
            buffer.log_probs[t] = params.log_prob(mean, action);
            buffer.values[t] = params.value(obs);

            const TradingEnv::StepResult res = env.step(action);
            buffer.rewards[t] = res.reward;
            episode_reward += res.reward;
            ++episode_steps;
            const bool truncated = episode_steps >= cfg.episode_len;
            const bool done = res.done || truncated;
            buffer.dones[std::size_t(t)] = done ? 1 : 0;
            last_done = done;
            if (done) {
                completed_sum += episode_reward;
                ++completed;
                episode_reward = 0.0;
                episode_steps = 0;
                obs = env.reset_at(random_start());
            } else {
                obs = res.obs;
            }
        }
        const double bootstrap = last_done ? 0.0 : params.value(obs);
        gae_advantages(buffer, cfg.gamma, cfg.gae_lambda, bootstrap);
        const UpdateDiag diag = ppo_update(params, buffer, cfg, adam, rng_shuffle);

        steps_done += cfg.n_steps;
        ++update_idx;
        if (completed > 0) last_mean_episode_reward = completed_sum / double(completed);
        if (log) {
            TrainingLog::Row row;
            row.update = update_idx;
            row.steps = steps_done;
            row.mean_step_reward = buffer.rewards.mean();
            row.mean_episode_reward = last_mean_episode_reward;
            row.policy_loss = diag.policy_loss;
            row.value_loss = diag.value_loss;
            row.entropy = diag.entropy;
            row.clip_fraction = diag.clip_fraction;
            log->rows.push_back(row);
        }
    }
    return params;
}

// ---------------------------------------------------------------------------
// Checkpoint format: versioned JSON dump of every parameter tensor with its
// shape plus the PpoConfig and observation geometry used for training.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const PpoConfig& cfg) {
    return nlohmann::json{{"gamma", cfg.gamma},
                          {"gae_lambda", cfg.gae_lambda},
                          {"clip_eps", cfg.clip_eps},
                          {"learn_rate", cfg.learn_rate},
                          {"n_steps", cfg.n_steps},
                          {"minibatch", cfg.minibatch},
                          {"epochs_per_update", cfg.epochs_per_update},
                          {"value_coef", cfg.value_coef},
                          {"entropy_coef", cfg.entropy_coef},
                          {"total_steps", cfg.total_steps},
                          {"seed", cfg.seed},
                          {"episode_len", cfg.episode_len},
                          {"debug_checks", cfg.debug_checks}};
}

inline PpoConfig ppo_config_from_json(const nlohmann::json& j) {
    PpoConfig cfg;
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.gae_lambda = j.value("gae_lambda", cfg.gae_lambda);
    cfg.clip_eps = j.value("clip_eps", cfg.clip_eps);
    cfg.learn_rate = j.value("learn_rate", cfg.learn_rate);
    cfg.n_steps = j.value("n_steps", cfg.n_steps);
    cfg.minibatch = j.value("minibatch", cfg.minibatch);
    cfg.epochs_per_update = j.value("epochs_per_update", cfg.epochs_per_update);
    cfg.value_coef = j.value("value_coef", cfg.value_coef);
    cfg.entropy_coef = j.value("entropy_coef", cfg.entropy_coef);
    cfg.total_steps = j.value("total_steps", cfg.total_steps);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.episode_len = j.value("episode_len", cfg.episode_len);
    cfg.debug_checks = j.value("debug_checks", cfg.debug_checks);
    cfg.validate();
    return cfg;
}

struct Checkpoint {
    PolicyParams params;
    PpoConfig config;
    Eigen::Index lookback = 60;  // observation lookback the policy was trained with
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json j;
    j["version"] = 1;
    j["obs_dim"] = ckpt.params.obs_dim;
    j["n_assets"] = ckpt.params.n_assets;
    j["hidden"] = ckpt.params.hidden;
    j["lookback"] = ckpt.lookback;
    j["ppo"] = to_json(ckpt.config);
    j["actor_dims"] = ckpt.params.actor.dims;
    j["critic_dims"] = ckpt.params.critic.dims;
    j["flat"] = std::vector<double>(ckpt.params.flat.data(), ckpt.params.flat.data() + ckpt.params.flat.size());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint '" + path + "'");
    out << j.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    in >> j;
    if (j.value("version", 0) != 1) throw ParseError("unsupported checkpoint version");
    Checkpoint ckpt;
    ckpt.params.obs_dim = j.at("obs_dim").get<Eigen::Index>();
    ckpt.params.n_assets = j.at("n_assets").get<Eigen::Index>();
    ckpt.params.hidden = j.value("hidden", Eigen::Index(64));
    ckpt.params.actor.dims = j.at("actor_dims").get<std::vector<Eigen::Index>>();
    ckpt.params.critic.dims = j.at("critic_dims").get<std::vector<Eigen::Index>>();
    const auto flat = j.at("flat").get<std::vector<double>>();
    if (Eigen::Index(flat.size()) != ckpt.params.param_count())
        throw ParseError("checkpoint parameter count mismatch");
    ckpt.params.flat = Eigen::Map<const Eigen::VectorXd>(flat.data(), Eigen::Index(flat.size()));
    ckpt.config = ppo_config_from_json(j.at("ppo"));
    ckpt.lookback = j.value("lookback", Eigen::Index(60));
    return ckpt;
}

}  // namespace rpo
