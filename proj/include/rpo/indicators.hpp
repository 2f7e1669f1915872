#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "rpo/errors.hpp"
#include "rpo/market_data.hpp"

namespace rpo {

/// One trading day of technical-indicator values, one entry per asset.
/// Windows are fixed: SMA(20), MACD(12,26,9), RSI(14, Wilder), Bollinger(20,
/// +/-2 stdev), CCI(20), ADX(14). Only closing prices are available, so CCI
/// uses the close as typical price and ADX uses close-to-close moves.
struct IndicatorSet {
    Eigen::VectorXd sma;
    Eigen::VectorXd macd;
    Eigen::VectorXd rsi;
    Eigen::VectorXd bollinger_upper;
    Eigen::VectorXd bollinger_lower;
    Eigen::VectorXd cci;
    Eigen::VectorXd adx;

    static constexpr int kCount = 7;

    /// Flatten to a 7N vector in a fixed field order.
    Eigen::VectorXd flatten() const {
        const Eigen::Index n = sma.size();
        Eigen::VectorXd out(kCount * n);
        out.segment(0 * n, n) = sma;
        out.segment(1 * n, n) = macd;
        out.segment(2 * n, n) = rsi;
        out.segment(3 * n, n) = bollinger_upper;
        out.segment(4 * n, n) = bollinger_lower;
        out.segment(5 * n, n) = cci;
        out.segment(6 * n, n) = adx;
        return out;
    }
};

/// Trading days of history an indicator evaluation needs: the MACD slow EMA.
constexpr Eigen::Index kIndicatorWarmupDays = 26;

namespace detail {

inline double ema(const Eigen::Ref<const Eigen::RowVectorXd>& px, Eigen::Index day, int span) {
    const double alpha = 2.0 / (span + 1.0);
    double v = px[0];
    for (Eigen::Index t = 1; t <= day; ++t) v += alpha * (px[t] - v);
    return v;
}

// Wilder recursive smoothing (alpha = 1/period) seeded with the first sample.
struct WilderSmoother {
    explicit WilderSmoother(int period) : inv_period_(1.0 / period) {}
    double push(double x) {
        if (!seeded_) {
            value_ = x;
            seeded_ = true;
        } else {
            value_ += (x - value_) * inv_period_;
        }
        return value_;
    }
    bool seeded_ = false;
    double value_ = 0.0;
    double inv_period_;
};

}  // namespace detail

/// Indicator values for every asset at trading day `day` (0-based index into
/// the frame). Uses prices up to and including `day` only.
inline IndicatorSet compute_indicators(const MarketFrame& frame, Eigen::Index day) {
    const Eigen::Index n = frame.n_assets();
    if (day < kIndicatorWarmupDays)
        throw WarmupError("indicator warm-up needs day >= " + std::to_string(kIndicatorWarmupDays));
    if (day >= frame.n_days()) throw InsufficientDataError("day beyond frame");

    IndicatorSet ind;
    ind.sma.resize(n);
    ind.macd.resize(n);
    ind.rsi.resize(n);
    ind.bollinger_upper.resize(n);
    ind.bollinger_lower.resize(n);
    ind.cci.resize(n);
    ind.adx.resize(n);

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto px = frame.prices.row(i);

        const Eigen::Index w20 = 20;
        const auto win = px.segment(day - w20 + 1, w20);
        const double sma = win.mean();
        const double var = (win.array() - sma).square().mean();  // population variance
        const double sd = std::sqrt(var);
        ind.sma[i] = sma;
        ind.bollinger_upper[i] = sma + 2.0 * sd;
        ind.bollinger_lower[i] = sma - 2.0 * sd;

        const double mean_dev = (win.array() - sma).abs().mean();
        ind.cci[i] = mean_dev > 0.0 ? (px[day] - sma) / (0.015 * mean_dev) : 0.0;

        ind.macd[i] = detail::ema(px, day, 12) - detail::ema(px, day, 26);

        detail::WilderSmoother gain(14), loss(14), tr(14), dm_up(14), dm_dn(14), adx(14);
        double avg_gain = 0.0, avg_loss = 0.0, adx_val = 0.0;
        bool have_dx = false;
        for (Eigen::Index t = 1; t <= day; ++t) {
            const double diff = px[t] - px[t - 1];
            avg_gain = gain.push(std::max(diff, 0.0));
            avg_loss = loss.push(std::max(-diff, 0.0));

            const double s_tr = tr.push(std::abs(diff));
            const double s_up = dm_up.push(std::max(diff, 0.0));
            const double s_dn = dm_dn.push(std::max(-diff, 0.0));
            if (t >= 14) {  // directional index needs a seasoned smoother
                const double di_up = s_tr > 0.0 ? 100.0 * s_up / s_tr : 0.0;
                const double di_dn = s_tr > 0.0 ? 100.0 * s_dn / s_tr : 0.0;
                const double di_sum = di_up + di_dn;
                const double dx = di_sum > 0.0 ? 100.0 * std::abs(di_up - di_dn) / di_sum : 0.0;
                adx_val = adx.push(dx);
                have_dx = true;
            }
        }
        if (avg_loss == 0.0 && avg_gain == 0.0) {
            ind.rsi[i] = 50.0;
        } else if (avg_loss == 0.0) {
            ind.rsi[i] = 100.0;
        } else {
            const double rs = avg_gain / avg_loss;
            ind.rsi[i] = 100.0 - 100.0 / (1.0 + rs);
        }
        ind.adx[i] = have_dx ? adx_val : 0.0;
    }
    return ind;
}

}  // namespace rpo
