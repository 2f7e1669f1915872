#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>

#include "rpo/dates.hpp"
#include "rpo/errors.hpp"
#include "rpo/indicators.hpp"
#include "rpo/market_data.hpp"
#include "rpo/portfolio.hpp"
#include "rpo/reward.hpp"

namespace rpo {

/// What the agent sees on one trading day. All fields are functions of data
/// up to and including that day; nothing leaks from the future.
struct Observation {
    Eigen::VectorXd mu;               // N, natural units
    Eigen::VectorXd sigma_flat;       // N(N+1)/2 upper triangle, scaled by 1e4
    Eigen::MatrixXd return_lookback;  // N x T_lb trailing daily returns
    Eigen::VectorXd indicators;       // 7N, z-scored with frozen statistics
    Eigen::VectorXd scores;           // 4N, divided by day-one cross-sectional mean

    Eigen::VectorXd flatten() const {
        Eigen::VectorXd out(dimension());
        Eigen::Index at = 0;
        out.segment(at, mu.size()) = mu;
        at += mu.size();
        out.segment(at, sigma_flat.size()) = sigma_flat;
        at += sigma_flat.size();
        out.segment(at, return_lookback.size()) =
            Eigen::Map<const Eigen::VectorXd>(return_lookback.data(), return_lookback.size());
        at += return_lookback.size();
        out.segment(at, indicators.size()) = indicators;
        at += indicators.size();
        out.segment(at, scores.size()) = scores;
        return out;
    }

    Eigen::Index dimension() const {
        return mu.size() + sigma_flat.size() + return_lookback.size() + indicators.size() + scores.size();
    }

    static Eigen::Index dimension_for(Eigen::Index n, Eigen::Index lookback) {
        return n + n * (n + 1) / 2 + n * lookback + 7 * n + 4 * n;
    }
};

/// Feature normalization frozen at episode start so that later observations
/// never depend on later data.
struct ObsNormalization {
    Eigen::VectorXd ind_mean;  // 7N
    Eigen::VectorXd ind_std;   // 7N, floored at 1e-8
    std::array<double, 4> score_mean{1.0, 1.0, 1.0, 1.0};
};

struct EnvConfig {
    UtilityConfig utility;
    RatioKind ratio_kind = RatioKind::sharpe;
    double eta = 1.0 / 252.0;
    double r_f = 0.0;
    Eigen::Index lookback = 60;  // trailing-return window T_lb
    Date episode_start;
    Date episode_end;
};

/// Indicator statistics over [warm-up, stats_day] and day-one score means.
inline ObsNormalization freeze_normalization(const MarketFrame& frame, Eigen::Index stats_day) {
    if (stats_day < kIndicatorWarmupDays) throw WarmupError("normalization day inside indicator warm-up");
    const Eigen::Index n = frame.n_assets();
    const Eigen::Index dim = IndicatorSet::kCount * n;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(dim);
    const Eigen::Index count = stats_day - kIndicatorWarmupDays + 1;
    for (Eigen::Index d = kIndicatorWarmupDays; d <= stats_day; ++d) {
        const Eigen::VectorXd v = compute_indicators(frame, d).flatten();
        sum += v;
        sum_sq += v.cwiseProduct(v);
    }
    ObsNormalization norm;
    norm.ind_mean = sum / double(count);
    norm.ind_std = (sum_sq / double(count) - norm.ind_mean.cwiseProduct(norm.ind_mean))
                       .cwiseMax(0.0)
                       .cwiseSqrt()
                       .cwiseMax(1e-8);
    for (std::size_t k = 0; k < 4; ++k) {
        const double m = frame.scores[k].col(stats_day).mean();
        norm.score_mean[k] = m > 0.0 ? m : 1.0;
    }
    return norm;
}

/// Observation at `day` from data up to and including `day` only.
inline Observation build_observation(const MarketFrame& frame, Eigen::Index day, Eigen::Index lookback,
                                     const ObsNormalization& norm) {
    const Eigen::Index n = frame.n_assets();
    if (day < kIndicatorWarmupDays || day < lookback)
        throw WarmupError("observation day inside warm-up horizon");

    Observation obs;

    // Trailing returns end with the move into `day`; moments come from the
    // same window.
    Eigen::MatrixXd rets(n, lookback);
    for (Eigen::Index j = 0; j < lookback; ++j) {
        const Eigen::Index t = day - lookback + j;
        rets.col(j) = frame.prices.col(t + 1).cwiseQuotient(frame.prices.col(t)).array() - 1.0;
    }
    obs.return_lookback = rets;
    obs.mu = rets.rowwise().mean();
    const Eigen::MatrixXd centered = rets.colwise() - obs.mu;
    const Eigen::MatrixXd sigma = (centered * centered.transpose()) / double(lookback - 1);
    obs.sigma_flat.resize(n * (n + 1) / 2);
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) obs.sigma_flat[at++] = sigma(i, j) * 1e4;

    const Eigen::VectorXd ind = compute_indicators(frame, day).flatten();
    obs.indicators = (ind - norm.ind_mean).cwiseQuotient(norm.ind_std);

    obs.scores.resize(4 * n);
    for (std::size_t k = 0; k < 4; ++k)
        obs.scores.segment(Eigen::Index(k) * n, n) = frame.scores[k].col(day) / norm.score_mean[k];
    return obs;
}

/// Daily-rebalancing portfolio MDP: actions map onto the simplex through a
/// softmax, the realized return uses next-day prices, and the reward is the
/// differential ratio composed with the configured responsibility utility.
class TradingEnv {
  public:
    struct StepInfo {
        Date date;                    // decision day
        Eigen::VectorXd weights;
        double portfolio_return = 0.0;
        double reward = 0.0;
        std::array<double, 4> p_r{};  // per ScoreKind
    };

    struct StepResult {
        Eigen::VectorXd obs;
        double reward = 0.0;
        bool done = false;
        StepInfo info;
    };

    TradingEnv(const MarketFrame& frame, EnvConfig config) : frame_(&frame), config_(config) {
        // Snap to trading days: first day >= start, last day <= end.
        const auto lo = std::lower_bound(frame.dates.begin(), frame.dates.end(), config.episode_start);
        const auto hi = std::upper_bound(frame.dates.begin(), frame.dates.end(), config.episode_end);
        if (lo == frame.dates.end() || hi == frame.dates.begin())
            throw ConfigError("episode range does not overlap the frame");
        range_begin_ = Eigen::Index(lo - frame.dates.begin());
        range_end_ = Eigen::Index(hi - frame.dates.begin()) - 1;
        min_start_ = std::max<Eigen::Index>(range_begin_, std::max(kIndicatorWarmupDays, config.lookback));
        if (min_start_ >= range_end_)
            throw ConfigError("episode range too short for warm-up plus one step");
        norm_ = freeze_normalization(frame, std::max<Eigen::Index>(range_begin_, kIndicatorWarmupDays));
    }

    Eigen::Index n_assets() const { return frame_->n_assets(); }
    Eigen::Index obs_dim() const { return Observation::dimension_for(n_assets(), config_.lookback); }
    Eigen::Index min_start_index() const { return min_start_; }
    Eigen::Index end_index() const { return range_end_; }
    const ObsNormalization& normalization() const { return norm_; }
    const EnvConfig& config() const { return config_; }

    /// Start an episode at the first day with full warm-up inside the range.
    Eigen::VectorXd reset() { return reset_at(min_start_); }

    Eigen::VectorXd reset_at(Eigen::Index start_day) {
        if (start_day < min_start_) throw WarmupError("episode start inside warm-up horizon");
        if (start_day >= range_end_) throw ConfigError("episode start leaves no step before range end");
        day_ = start_day;
        done_ = false;
        ratio_state_ = DifferentialRatioState::make(config_.ratio_kind, config_.eta, config_.r_f);
        weights_ = PortfolioWeights::uniform(n_assets());
        return build_observation(*frame_, day_, config_.lookback, norm_).flatten();
    }

    StepResult step(const Eigen::VectorXd& action) {
        if (done_) throw Error("episode already finished");
        if (day_ < 0) throw Error("step before reset");
        weights_ = softmax_weights(action);

        const Eigen::VectorXd next_ret =
            frame_->prices.col(day_ + 1).cwiseQuotient(frame_->prices.col(day_)).array() - 1.0;
        const double portfolio_return = weights_.w.dot(next_ret);

        const auto [d_t, next_state] = differential_update(ratio_state_, portfolio_return);
        ratio_state_ = next_state;
        const Eigen::VectorXd scores_today = frame_->scores_on_day(config_.utility.score_kind, day_);
        const double reward = compose_reward(d_t, weights_, scores_today, config_.utility);

        StepResult out;
        out.info.date = frame_->dates[std::size_t(day_)];
        out.info.weights = weights_.w;
        out.info.portfolio_return = portfolio_return;
        out.info.reward = reward;
        for (std::size_t k = 0; k < 4; ++k)
            out.info.p_r[k] = performance_ratio(weights_, frame_->scores[k].col(day_));

        ++day_;
        done_ = day_ >= range_end_;
        out.reward = reward;
        out.done = done_;
        out.obs = build_observation(*frame_, day_, config_.lookback, norm_).flatten();
        return out;
    }

  private:
    const MarketFrame* frame_;
    EnvConfig config_;
    ObsNormalization norm_;
    Eigen::Index range_begin_ = 0;
    Eigen::Index range_end_ = 0;
    Eigen::Index min_start_ = 0;
    Eigen::Index day_ = -1;
    bool done_ = false;
    DifferentialRatioState ratio_state_;
    PortfolioWeights weights_ = PortfolioWeights{Eigen::VectorXd::Ones(1)};
};

}  // namespace rpo
