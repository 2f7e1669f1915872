#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rpo/csv.hpp"
#include "rpo/dates.hpp"
#include "rpo/errors.hpp"
#include "rpo/market_data.hpp"
#include "rpo/mvo.hpp"
#include "rpo/portfolio.hpp"
#include "rpo/ppo.hpp"
#include "rpo/reward.hpp"
#include "rpo/trading_env.hpp"

namespace rpo {

/// A daily-rebalancing strategy: given the frame and a decision day, produce
/// weights using data up to and including that day only.
class Strategy {
  public:
    virtual ~Strategy() = default;
    virtual std::string name() const = 0;
    virtual Eigen::Index warmup_days() const = 0;
    virtual PortfolioWeights decide(const MarketFrame& frame, Eigen::Index day) = 0;
};

class UniformStrategy final : public Strategy {
  public:
    std::string name() const override { return "uniform"; }
    Eigen::Index warmup_days() const override { return 0; }
    PortfolioWeights decide(const MarketFrame& frame, Eigen::Index) override {
        return PortfolioWeights::uniform(frame.n_assets());
    }
};

namespace backtest_detail {

inline MomentEstimates trailing_moments(const MarketFrame& frame, Eigen::Index day, Eigen::Index lookback,
                                        double r_f) {
    if (day < lookback) throw InsufficientDataError("not enough history for the moment lookback");
    Eigen::MatrixXd rets(frame.n_assets(), lookback);
    for (Eigen::Index j = 0; j < lookback; ++j) {
        const Eigen::Index t = day - lookback + j;
        rets.col(j) = frame.prices.col(t + 1).cwiseQuotient(frame.prices.col(t)).array() - 1.0;
    }
    return estimate_moments(rets, lookback, r_f);
}

}  // namespace backtest_detail

/// Daily re-solved exact (transformed max-Sharpe) optimizer, Eq.-style
/// additive responsibility term controlled by alpha.
class MvoExactStrategy final : public Strategy {
  public:
    MvoExactStrategy(Eigen::Index lookback, double r_f, ScoreKind kind, double alpha, bool use_semi)
        : lookback_(lookback), r_f_(r_f), kind_(kind), alpha_(alpha), use_semi_(use_semi) {}

    std::string name() const override {
        return std::string("mvo-exact-") + (use_semi_ ? "sortino" : "sharpe") +
               (alpha_ != 0.0 ? std::string("-") + to_string(kind_) : "");
    }
    Eigen::Index warmup_days() const override { return lookback_; }

    PortfolioWeights decide(const MarketFrame& frame, Eigen::Index day) override {
        const MomentEstimates m = backtest_detail::trailing_moments(frame, day, lookback_, r_f_);
        const auto resp = ResponsibilityConfig::make(kind_, alpha_, frame.n_assets());
        return tangency_exact(m, r_f_, resp, frame.scores_on_day(kind_, day), use_semi_);
    }

  private:
    Eigen::Index lookback_;
    double r_f_;
    ScoreKind kind_;
    double alpha_;
    bool use_semi_;
};

/// Daily re-solved risk-aversion relaxation (Eq.-style additive term).
class MvoRelaxedStrategy final : public Strategy {
  public:
    MvoRelaxedStrategy(Eigen::Index lookback, double r_f, double lambda, ScoreKind kind, double alpha, bool use_semi)
        : lookback_(lookback), r_f_(r_f), lambda_(lambda), kind_(kind), alpha_(alpha), use_semi_(use_semi) {}

    std::string name() const override {
        return std::string("mvo-relaxed-") + (use_semi_ ? "sortino" : "sharpe") +
               (alpha_ != 0.0 ? std::string("-") + to_string(kind_) : "");
    }
    Eigen::Index warmup_days() const override { return lookback_; }

    PortfolioWeights decide(const MarketFrame& frame, Eigen::Index day) override {
        const MomentEstimates m = backtest_detail::trailing_moments(frame, day, lookback_, r_f_);
        const auto resp = ResponsibilityConfig::make(kind_, alpha_, frame.n_assets());
        return tangency_relaxed(m, lambda_, resp, frame.scores_on_day(kind_, day), use_semi_);
    }

  private:
    Eigen::Index lookback_;
    double r_f_;
    double lambda_;
    ScoreKind kind_;
    double alpha_;
    bool use_semi_;
};

/// Rolls a trained policy with deterministic (actor-mean) actions. The
/// observation normalization freezes at the first decision day.
class RlPolicyStrategy final : public Strategy {
  public:
    RlPolicyStrategy(PolicyParams params, Eigen::Index lookback, std::string label = "rl")
        : params_(std::move(params)), lookback_(lookback), label_(std::move(label)) {}

    std::string name() const override { return label_; }
    Eigen::Index warmup_days() const override { return std::max(kIndicatorWarmupDays, lookback_); }

    PortfolioWeights decide(const MarketFrame& frame, Eigen::Index day) override {
        if (!norm_) norm_ = freeze_normalization(frame, day);
        const Observation obs = build_observation(frame, day, lookback_, *norm_);
        const Eigen::VectorXd action = act(params_, obs.flatten(), /*deterministic=*/true);
        return softmax_weights(action);
    }

  private:
    PolicyParams params_;
    Eigen::Index lookback_;
    std::string label_;
    std::optional<ObsNormalization> norm_;
};

/// Geometric annualization: (prod(1+R))^(252/T) - 1.
inline double annualized_return(const Eigen::VectorXd& daily_returns) {
    if (daily_returns.size() == 0) throw InsufficientDataError("empty return series");
    double growth = 1.0;
    for (Eigen::Index t = 0; t < daily_returns.size(); ++t) {
        if (daily_returns[t] <= -1.0) throw Error("total loss: daily return at or below -100%");
        growth *= 1.0 + daily_returns[t];
    }
    return std::pow(growth, 252.0 / double(daily_returns.size())) - 1.0;
}

/// Largest peak-to-trough equity decline (non-positive).
inline double max_drawdown(const Eigen::VectorXd& cumulative) {
    if (cumulative.size() == 0) throw InsufficientDataError("empty cumulative series");
    double peak = 1.0;
    double worst = 0.0;
    for (Eigen::Index t = 0; t < cumulative.size(); ++t) {
        const double equity = 1.0 + cumulative[t];
        peak = std::max(peak, equity);
        worst = std::min(worst, equity / peak - 1.0);
    }
    return worst;
}

/// Everything one strategy run produces over an evaluation range.
struct BacktestReport {
    std::string strategy_name;
    std::vector<std::string> tickers;
    std::vector<Date> dates;        // decision days
    Eigen::MatrixXd weights;        // T_eval x N
    Eigen::VectorXd daily_returns;  // realized over day -> day+1
    Eigen::MatrixXd p_r;            // T_eval x 4, per ScoreKind
    Eigen::VectorXd cumulative;     // prod(1+R) - 1 up to each day
    double annualized = 0.0;
    double mdd = 0.0;
    std::array<double, 4> mean_p_r{};
    std::vector<std::pair<Date, std::string>> fallback_events;

    Eigen::Index n_days() const { return daily_returns.size(); }
};

struct BacktestRange {
    Date start;
    Date end;
};

/// Walk the strategy through [range.start, range.end]: weights decided at the
/// close of day t apply to the t -> t+1 return. A strategy failure on a day
/// is recorded and replaced by the uniform portfolio; the run continues.
inline BacktestReport run_backtest(Strategy& strategy, const MarketFrame& frame, const BacktestRange& range) {
    const auto lo = std::lower_bound(frame.dates.begin(), frame.dates.end(), range.start);
    const auto hi = std::upper_bound(frame.dates.begin(), frame.dates.end(), range.end);
    if (lo == frame.dates.end() || hi == frame.dates.begin())
        throw ConfigError("backtest range does not overlap the frame");
    const Eigen::Index i0 = Eigen::Index(lo - frame.dates.begin());
    const Eigen::Index i1 = Eigen::Index(hi - frame.dates.begin()) - 1;
    if (i0 < strategy.warmup_days())
        throw WarmupError("backtest range start does not leave room for strategy warm-up");
    if (i0 >= i1) throw ConfigError("backtest range has no tradable day pair");

    const Eigen::Index n = frame.n_assets();
    const Eigen::Index steps = i1 - i0;
    BacktestReport rep;
    rep.strategy_name = strategy.name();
    rep.tickers = frame.tickers;
    rep.weights.resize(steps, n);
    rep.daily_returns.resize(steps);
    rep.p_r.resize(steps, 4);
    rep.cumulative.resize(steps);

    double growth = 1.0;
    for (Eigen::Index k = 0; k < steps; ++k) {
        const Eigen::Index day = i0 + k;
        PortfolioWeights w = PortfolioWeights::uniform(n);
        try {
            w = strategy.decide(frame, day);
        } catch (const Error& e) {
            rep.fallback_events.emplace_back(frame.dates[std::size_t(day)], e.what());
        }
        rep.dates.push_back(frame.dates[std::size_t(day)]);
        rep.weights.row(k) = w.w;
        const Eigen::VectorXd next_ret =
            frame.prices.col(day + 1).cwiseQuotient(frame.prices.col(day)).array() - 1.0;
        rep.daily_returns[k] = w.w.dot(next_ret);
        growth *= 1.0 + rep.daily_returns[k];
        rep.cumulative[k] = growth - 1.0;
        for (std::size_t kind = 0; kind < 4; ++kind)
            rep.p_r(k, Eigen::Index(kind)) = performance_ratio(w, frame.scores[kind].col(day));
    }
    rep.annualized = annualized_return(rep.daily_returns);
    rep.mdd = max_drawdown(rep.cumulative);
    for (std::size_t kind = 0; kind < 4; ++kind) rep.mean_p_r[kind] = rep.p_r.col(Eigen::Index(kind)).mean();
    return rep;
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

/// `date,R_t,cum_return,p_r_esg,p_r_e,p_r_s,p_r_g,w_<ticker>...`
inline void write_report_csv(const std::string& path, const BacktestReport& rep) {
    CsvWriter out(path);
    std::vector<std::string> header{"date", "R_t", "cum_return", "p_r_esg", "p_r_e", "p_r_s", "p_r_g"};
    for (const auto& t : rep.tickers) header.push_back("w_" + t);
    out.write_row(header);
    for (Eigen::Index k = 0; k < rep.n_days(); ++k) {
        std::vector<std::string> row{rep.dates[std::size_t(k)].to_string(), format_double(rep.daily_returns[k]),
                                     format_double(rep.cumulative[k])};
        for (Eigen::Index kind = 0; kind < 4; ++kind) row.push_back(format_double(rep.p_r(k, kind)));
        for (Eigen::Index i = 0; i < rep.weights.cols(); ++i) row.push_back(format_double(rep.weights(k, i)));
        out.write_row(row);
    }
}

/// Parse a report written by write_report_csv (used by the compare command).
inline BacktestReport read_report_csv(const std::string& path, const std::string& name) {
    const CsvTable tab = read_csv(path);
    if (tab.header.size() < 8 || tab.header[0] != "date" || tab.header[1] != "R_t")
        throw ParseError("not a backtest report CSV: '" + path + "'");
    BacktestReport rep;
    rep.strategy_name = name;
    for (std::size_t c = 7; c < tab.header.size(); ++c) {
        if (tab.header[c].rfind("w_", 0) != 0) throw ParseError("unexpected report column " + tab.header[c]);
        rep.tickers.push_back(tab.header[c].substr(2));
    }
    const Eigen::Index steps = Eigen::Index(tab.rows.size());
    const Eigen::Index n = Eigen::Index(rep.tickers.size());
    if (steps == 0) throw ParseError("report has no rows: '" + path + "'");
    rep.weights.resize(steps, n);
    rep.daily_returns.resize(steps);
    rep.p_r.resize(steps, 4);
    rep.cumulative.resize(steps);
    for (Eigen::Index k = 0; k < steps; ++k) {
        const auto& row = tab.rows[std::size_t(k)];
        const long line = tab.line_numbers[std::size_t(k)];
        rep.dates.push_back(Date::parse(row[0], line));
        rep.daily_returns[k] = parse_double(row[1], line);
        rep.cumulative[k] = parse_double(row[2], line);
        for (Eigen::Index kind = 0; kind < 4; ++kind) rep.p_r(k, kind) = parse_double(row[std::size_t(3 + kind)], line);
        for (Eigen::Index i = 0; i < n; ++i) rep.weights(k, i) = parse_double(row[std::size_t(7 + i)], line);
    }
    rep.annualized = annualized_return(rep.daily_returns);
    rep.mdd = max_drawdown(rep.cumulative);
    for (std::size_t kind = 0; kind < 4; ++kind) rep.mean_p_r[kind] = rep.p_r.col(Eigen::Index(kind)).mean();
    return rep;
}

inline void require_shared_range(const std::vector<BacktestReport>& reports) {
    if (reports.empty()) throw ConfigError("no reports to compare");
    for (const auto& r : reports)
        if (r.dates != reports.front().dates) throw ConfigError("reports do not share a date range");
}

/// Summary table: one row per strategy, the columns behind the paper-style
/// comparison (annualized return, mean p_r per score kind, max drawdown).
inline void write_summary_csv(const std::string& path, const std::vector<BacktestReport>& reports) {
    require_shared_range(reports);
    CsvWriter out(path);
    out.write_row({"strategy", "annualized_return", "mean_p_r_esg", "mean_p_r_e", "mean_p_r_s", "mean_p_r_g",
                   "max_drawdown"});
    for (const auto& r : reports) {
        out.write_row({r.strategy_name, format_double(r.annualized), format_double(r.mean_p_r[0]),
                       format_double(r.mean_p_r[1]), format_double(r.mean_p_r[2]), format_double(r.mean_p_r[3]),
                       format_double(r.mdd)});
    }
}

/// Per-day series for every strategy: cumulative return and ESG p_r.
inline void write_series_csv(const std::string& path, const std::vector<BacktestReport>& reports) {
    require_shared_range(reports);
    CsvWriter out(path);
    std::vector<std::string> header{"date"};
    for (const auto& r : reports) header.push_back("cum_" + r.strategy_name);
    for (const auto& r : reports) header.push_back("p_r_esg_" + r.strategy_name);
    out.write_row(header);
    for (Eigen::Index k = 0; k < reports.front().n_days(); ++k) {
        std::vector<std::string> row{reports.front().dates[std::size_t(k)].to_string()};
        for (const auto& r : reports) row.push_back(format_double(r.cumulative[k]));
        for (const auto& r : reports) row.push_back(format_double(r.p_r(k, 0)));
        out.write_row(row);
    }
}

struct HistogramSpec {
    ScoreKind kind = ScoreKind::esg;
    int bins = 30;
};

/// Shared-bin histogram of daily p_r values per strategy.
inline void write_histogram_csv(const std::string& path, const std::vector<BacktestReport>& reports,
                                const HistogramSpec& spec = {}) {
    require_shared_range(reports);
    const Eigen::Index col = Eigen::Index(spec.kind);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : reports) {
        lo = std::min(lo, r.p_r.col(col).minCoeff());
        hi = std::max(hi, r.p_r.col(col).maxCoeff());
    }
    if (!(hi > lo)) hi = lo + 1e-12;
    const double width = (hi - lo) / spec.bins;

    CsvWriter out(path);
    std::vector<std::string> header{"bin_lo", "bin_hi"};
    for (const auto& r : reports) header.push_back("count_" + r.strategy_name);
    out.write_row(header);
    for (int b = 0; b < spec.bins; ++b) {
        const double b_lo = lo + b * width;
        const double b_hi = b == spec.bins - 1 ? hi : b_lo + width;
        std::vector<std::string> row{format_double(b_lo), format_double(b_hi)};
        for (const auto& r : reports) {
            long count = 0;
            for (Eigen::Index k = 0; k < r.n_days(); ++k) {
                const double v = r.p_r(k, col);
                if ((v >= b_lo && v < b_lo + width) || (b == spec.bins - 1 && v == hi)) ++count;
            }
            row.push_back(std::to_string(count));
        }
        out.write_row(row);
    }
}

}  // namespace rpo
