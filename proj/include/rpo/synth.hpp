#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "rpo/csv.hpp"
#include "rpo/dates.hpp"
#include "rpo/errors.hpp"
#include "rpo/market_data.hpp"
#include "rpo/rng.hpp"

namespace rpo {

/// Deterministic synthetic market: correlated geometric-Brownian-style daily
/// prices plus mean-reverting monthly responsibility scores. The calendar is
/// consecutive days starting at `start_date`.
struct SynthConfig {
    std::uint64_t seed = 0;
    int n_assets = 4;
    int n_days = 756;
    Date start_date{2014, 1, 1};
    double equicorrelation = 0.3;
    // Overrides for controlled experiments; defaults draw per-asset values.
    std::optional<Eigen::VectorXd> drifts;  // daily log drift
    std::optional<Eigen::VectorXd> vols;    // daily log volatility

    void validate() const {
        if (n_assets < 2) throw ConfigError("synthetic market needs at least 2 assets");
        if (n_days < 120) throw ConfigError("synthetic market needs at least 120 days");
        if (!(equicorrelation >= 0.0 && equicorrelation < 1.0)) throw ConfigError("correlation must be in [0,1)");
        if (drifts && drifts->size() != n_assets) throw ConfigError("drift override size mismatch");
        if (vols && vols->size() != n_assets) throw ConfigError("vol override size mismatch");
    }
};

namespace synth_detail {

struct Series {
    std::vector<Date> dates;
    std::vector<std::string> tickers;
    Eigen::MatrixXd prices;  // N x T
    // Monthly score rows per ticker: (date, esg, e, s, g), already sorted.
    std::vector<std::vector<std::pair<Date, std::array<double, 4>>>> monthly;
};

inline Series generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(substream_seed(cfg.seed, 7001));
    const Eigen::Index n = cfg.n_assets;

    Series out;
    out.dates.reserve(std::size_t(cfg.n_days));
    Date d = cfg.start_date;
    for (int t = 0; t < cfg.n_days; ++t, d = d.next_day()) out.dates.push_back(d);

    for (Eigen::Index i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "AST%02ld", long(i + 1));
        out.tickers.emplace_back(buf);
    }

    Eigen::VectorXd drift(n), vol(n);
    for (Eigen::Index i = 0; i < n; ++i) drift[i] = -2e-4 + 8e-4 * uniform01(rng);
    for (Eigen::Index i = 0; i < n; ++i) vol[i] = 0.008 + 0.012 * uniform01(rng);
    if (cfg.drifts) drift = *cfg.drifts;
    if (cfg.vols) vol = *cfg.vols;

    // Equicorrelated shocks via Cholesky of (1-rho)I + rho 11'.
    Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(n, n, cfg.equicorrelation);
    corr.diagonal().setOnes();
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(corr).matrixL();

    Eigen::VectorXd log_px(n);
    for (Eigen::Index i = 0; i < n; ++i) log_px[i] = std::log(40.0 + 80.0 * uniform01(rng));
    out.prices.resize(n, cfg.n_days);
    Eigen::VectorXd eps(n);
    for (int t = 0; t < cfg.n_days; ++t) {
        out.prices.col(t) = log_px.array().exp();
        for (Eigen::Index i = 0; i < n; ++i) eps[i] = normal_sample(rng);
        log_px += drift + vol.cwiseProduct(chol * eps);
    }

    // Scores observed on the first trading day of each month (and on the very
    // first day, so forward-fill covers the whole range).
    out.monthly.resize(std::size_t(n));
    Eigen::MatrixXd base(n, 4), level(n, 4);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int k = 0; k < 4; ++k) base(i, k) = 15.0 + 70.0 * uniform01(rng);
    level = base;
    for (std::size_t t = 0; t < out.dates.size(); ++t) {
        const bool month_start = t == 0 || !same_month(out.dates[t - 1], out.dates[t]);
        if (!month_start) continue;
        for (Eigen::Index i = 0; i < n; ++i) {
            std::array<double, 4> row{};
            for (int k = 0; k < 4; ++k) {
                level(i, k) += 0.3 * (base(i, k) - level(i, k)) + 2.0 * normal_sample(rng);
                level(i, k) = std::max(level(i, k), 1.0);
                row[std::size_t(k)] = level(i, k);
            }
            out.monthly[std::size_t(i)].emplace_back(out.dates[t], row);
        }
    }
    return out;
}

}  // namespace synth_detail

/// Build the synthetic market directly as an aligned MarketFrame.
inline MarketFrame make_synthetic_frame(const SynthConfig& cfg) {
    const synth_detail::Series s = synth_detail::generate(cfg);
    MarketFrame frame;
    frame.dates = s.dates;
    frame.tickers = s.tickers;
    frame.prices = s.prices;
    const Eigen::Index n = s.prices.rows(), t = s.prices.cols();
    for (auto& m : frame.scores) m.resize(n, t);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& rows = s.monthly[std::size_t(i)];
        for (std::size_t k = 0; k < 4; ++k) {
            std::size_t next = 0;
            double cur = rows.front().second[k];
            for (Eigen::Index j = 0; j < t; ++j) {
                while (next < rows.size() && rows[next].first <= frame.dates[std::size_t(j)]) {
                    cur = rows[next].second[k];
                    ++next;
                }
                frame.scores[k](i, j) = cur;
            }
        }
    }
    frame.validate();
    return frame;
}

/// Emit the price and score CSV files; byte-identical for identical configs.
inline void write_synthetic_csv(const SynthConfig& cfg, const std::string& prices_path,
                                const std::string& scores_path) {
    const synth_detail::Series s = synth_detail::generate(cfg);

    CsvWriter prices(prices_path);
    std::vector<std::string> header{"date"};
    header.insert(header.end(), s.tickers.begin(), s.tickers.end());
    prices.write_row(header);
    for (std::size_t t = 0; t < s.dates.size(); ++t) {
        std::vector<std::string> row{s.dates[t].to_string()};
        for (Eigen::Index i = 0; i < s.prices.rows(); ++i) row.push_back(format_double(s.prices(i, Eigen::Index(t))));
        prices.write_row(row);
    }

    CsvWriter scores(scores_path);
    scores.write_row({"date", "ticker", "esg", "e", "s", "g"});
    // One block per month in date order, tickers alphabetical inside a block.
    for (std::size_t m = 0; m < s.monthly.front().size(); ++m) {
        for (std::size_t i = 0; i < s.monthly.size(); ++i) {
            const auto& [date, vals] = s.monthly[i][m];
            scores.write_row({date.to_string(), s.tickers[i], format_double(vals[0]), format_double(vals[1]),
                              format_double(vals[2]), format_double(vals[3])});
        }
    }
}

}  // namespace rpo
