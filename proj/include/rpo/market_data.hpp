#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rpo/csv.hpp"
#include "rpo/dates.hpp"
#include "rpo/errors.hpp"

namespace rpo {

enum class ScoreKind { esg = 0, e = 1, s = 2, g = 3 };

inline const char* to_string(ScoreKind k) {
    switch (k) {
        case ScoreKind::esg: return "esg";
        case ScoreKind::e: return "e";
        case ScoreKind::s: return "s";
        case ScoreKind::g: return "g";
    }
    return "?";
}

inline ScoreKind score_kind_from_string(const std::string& name) {
    if (name == "esg" || name == "ESG") return ScoreKind::esg;
    if (name == "e" || name == "E") return ScoreKind::e;
    if (name == "s" || name == "S") return ScoreKind::s;
    if (name == "g" || name == "G") return ScoreKind::g;
    throw ConfigError("unknown score kind '" + name + "'");
}

constexpr std::array<ScoreKind, 4> kAllScoreKinds{ScoreKind::esg, ScoreKind::e, ScoreKind::s, ScoreKind::g};

/// Aligned daily panel: adjusted close prices for N assets over T trading
/// days, plus four responsibility-score matrices forward-filled from monthly
/// observations to every trading day.
struct MarketFrame {
    std::vector<Date> dates;            // strictly increasing, length T
    std::vector<std::string> tickers;   // length N
    Eigen::MatrixXd prices;             // N x T, strictly positive
    std::array<Eigen::MatrixXd, 4> scores;  // each N x T, indexed by ScoreKind

    Eigen::Index n_assets() const { return prices.rows(); }
    Eigen::Index n_days() const { return prices.cols(); }

    const Eigen::MatrixXd& score_matrix(ScoreKind k) const { return scores[std::size_t(k)]; }

    /// Score column for one trading day (length N).
    Eigen::VectorXd scores_on_day(ScoreKind k, Eigen::Index day) const { return score_matrix(k).col(day); }

    /// Index of the first date >= d, or none.
    std::optional<Eigen::Index> index_of(const Date& d) const {
        const auto it = std::lower_bound(dates.begin(), dates.end(), d);
        if (it == dates.end()) return std::nullopt;
        return Eigen::Index(it - dates.begin());
    }

    void validate() const {
        const Eigen::Index n = n_assets(), t = n_days();
        if (n == 0 || t == 0) throw AlignmentError("empty market frame");
        if (Eigen::Index(dates.size()) != t || Eigen::Index(tickers.size()) != n)
            throw Error("frame dimension mismatch");
        for (Eigen::Index i = 1; i < t; ++i)
            if (!(dates[i - 1] < dates[i])) throw Error("dates not strictly increasing");
        if (!(prices.minCoeff() > 0.0) || !prices.allFinite()) throw Error("prices must be strictly positive");
        for (const auto& m : scores) {
            if (m.rows() != n || m.cols() != t) throw Error("score matrix shape mismatch");
            if (!m.allFinite()) throw Error("score matrix has missing cells");
        }
    }
};

/// Rolling moment estimates used by the optimizers and the RL state.
struct MomentEstimates {
    Eigen::VectorXd mu;         // expected daily simple return, length N
    Eigen::MatrixXd sigma;      // sample covariance, divisor window-1
    Eigen::MatrixXd sigma_semi; // downside semicovariance, divisor window
    Eigen::Index window = 0;

    static constexpr double kPsdTol = 1e-10;

    void validate() const {
        if (window < 2) throw Error("moment window must be >= 2");
        auto check_sym_psd = [](const Eigen::MatrixXd& m, const char* name) {
            if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
                throw Error(std::string(name) + " not symmetric");
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -kPsdTol)
                throw Error(std::string(name) + " not positive semidefinite");
        };
        check_sym_psd(sigma, "sigma");
        check_sym_psd(sigma_semi, "sigma_semi");
    }
};

/// r[i][t] = prices[i][t+1] / prices[i][t] - 1, an N x (T-1) matrix.
inline Eigen::MatrixXd simple_returns(const MarketFrame& frame) {
    const Eigen::Index n = frame.n_assets(), t = frame.n_days();
    if (t < 2) throw InsufficientDataError("need at least 2 days of prices for returns");
    Eigen::MatrixXd r(n, t - 1);
    for (Eigen::Index j = 0; j + 1 < t; ++j)
        r.col(j) = frame.prices.col(j + 1).cwiseQuotient(frame.prices.col(j)).array() - 1.0;
    return r;
}

/// Trailing-window moments over the last `window` columns of `returns`.
///
/// mu and sigma are the sample mean and covariance (covariance divisor
/// window-1). sigma_semi follows Estrada's time-series estimator with the
/// risk-free rate as benchmark:
///   semi[i][j] = (1/window) * sum_t min(r_it - r_f, 0) * min(r_jt - r_f, 0)
inline MomentEstimates estimate_moments(const Eigen::MatrixXd& returns, Eigen::Index window, double r_f = 0.0) {
    const Eigen::Index n = returns.rows(), t = returns.cols();
    if (window < 2) throw InsufficientDataError("moment window must be >= 2");
    if (window > t) throw InsufficientDataError("moment window exceeds available returns");
    const Eigen::MatrixXd r = returns.rightCols(window);

    MomentEstimates out;
    out.window = window;
    out.mu = r.rowwise().mean();
    const Eigen::MatrixXd centered = r.colwise() - out.mu;
    out.sigma = (centered * centered.transpose()) / double(window - 1);
    const Eigen::MatrixXd downside = (r.array() - r_f).min(0.0).matrix();
    out.sigma_semi = (downside * downside.transpose()) / double(window);
    // Exact symmetry despite floating-point accumulation order.
    out.sigma = ((out.sigma + out.sigma.transpose()) * 0.5).eval();
    out.sigma_semi = ((out.sigma_semi + out.sigma_semi.transpose()) * 0.5).eval();
    (void)n;
    return out;
}

namespace detail {

struct ScoreRow {
    Date date;
    std::array<double, 4> values;
};

// Forward-fill per-ticker monthly observations onto the trading-day grid.
// Returns false when the ticker has no observation at or before dates.front().
inline bool forward_fill(const std::vector<ScoreRow>& rows, const std::vector<Date>& dates, std::size_t kind,
                         Eigen::Ref<Eigen::RowVectorXd> out) {
    std::size_t next = 0;
    bool seeded = false;
    double current = 0.0;
    for (std::size_t t = 0; t < dates.size(); ++t) {
        while (next < rows.size() && rows[next].date <= dates[t]) {
            current = rows[next].values[kind];
            seeded = true;
            ++next;
        }
        if (!seeded) return false;
        out[Eigen::Index(t)] = current;
    }
    return true;
}

}  // namespace detail

/// Load the price panel (`date,<ticker>,...`) and monthly score file
/// (`date,ticker,esg,e,s,g`), align them on trading days, and forward-fill
/// scores to daily frequency.
///
/// Assets with no usable score history are dropped with a warning on
/// `warn_stream`. Missing price cells are forward-filled up to 5 consecutive
/// days; assets with longer gaps (or a missing first price) are dropped too.
/// The frame starts at the first trading day on which every retained asset
/// has a score observation at or before it.
inline MarketFrame ingest_csv(const std::string& prices_path, const std::string& scores_path,
                              std::ostream& warn_stream = std::clog) {
    const CsvTable ptab = read_csv(prices_path);
    if (ptab.header.size() < 2 || ptab.header[0] != "date")
        throw ParseError("prices header must be 'date,<ticker>,...'", 1);
    if (ptab.rows.empty()) throw ParseError("prices file has no data rows");

    std::vector<std::string> tickers(ptab.header.begin() + 1, ptab.header.end());
    const std::size_t n_raw = tickers.size();

    std::vector<Date> dates;
    dates.reserve(ptab.rows.size());
    // NaN marks a missing cell until imputation.
    Eigen::MatrixXd raw_prices(Eigen::Index(n_raw), Eigen::Index(ptab.rows.size()));
    for (std::size_t r = 0; r < ptab.rows.size(); ++r) {
        const long line = ptab.line_numbers[r];
        const Date d = Date::parse(ptab.rows[r][0], line);
        if (!dates.empty() && !(dates.back() < d)) throw ParseError("price dates must be strictly increasing", line);
        dates.push_back(d);
        for (std::size_t i = 0; i < n_raw; ++i) {
            const std::string& cell = ptab.rows[r][i + 1];
            if (cell.empty()) {
                raw_prices(Eigen::Index(i), Eigen::Index(r)) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const double v = parse_double(cell, line);
            if (!(v > 0.0)) throw ParseError("price must be strictly positive", line);
            raw_prices(Eigen::Index(i), Eigen::Index(r)) = v;
        }
    }

    const CsvTable stab = read_csv(scores_path);
    const std::vector<std::string> want{"date", "ticker", "esg", "e", "s", "g"};
    if (stab.header != want) throw ParseError("scores header must be 'date,ticker,esg,e,s,g'", 1);

    std::map<std::string, std::vector<detail::ScoreRow>> score_rows;
    for (std::size_t r = 0; r < stab.rows.size(); ++r) {
        const long line = stab.line_numbers[r];
        detail::ScoreRow row;
        row.date = Date::parse(stab.rows[r][0], line);
        for (std::size_t k = 0; k < 4; ++k) {
            row.values[k] = parse_double(stab.rows[r][k + 2], line);
            if (row.values[k] < 0.0) throw ParseError("scores must be non-negative", line);
        }
        score_rows[stab.rows[r][1]].push_back(row);
    }
    for (auto& [ticker, rows] : score_rows)
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.date < b.date; });

    // Impute small price gaps; drop assets that cannot be repaired.
    constexpr int kMaxFfillDays = 5;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n_raw; ++i) {
        bool ok = true;
        int gap = 0;
        for (Eigen::Index t = 0; t < raw_prices.cols(); ++t) {
            if (std::isnan(raw_prices(Eigen::Index(i), t))) {
                if (t == 0 || ++gap > kMaxFfillDays) {
                    ok = false;
                    break;
                }
                raw_prices(Eigen::Index(i), t) = raw_prices(Eigen::Index(i), t - 1);
            } else {
                gap = 0;
            }
        }
        if (!ok) {
            warn_stream << "warning: dropping " << tickers[i] << " (price gap beyond " << kMaxFfillDays << " days)\n";
            continue;
        }
        if (score_rows.find(tickers[i]) == score_rows.end() || score_rows[tickers[i]].empty()) {
            warn_stream << "warning: dropping " << tickers[i] << " (no responsibility scores)\n";
            continue;
        }
        keep.push_back(i);
    }
    if (keep.empty()) throw AlignmentError("no asset has both prices and scores");

    // The aligned range starts once every retained asset has a score.
    Date first_scored = score_rows[tickers[keep[0]]].front().date;
    for (const std::size_t i : keep) first_scored = std::max(first_scored, score_rows[tickers[i]].front().date);
    std::size_t start = 0;
    while (start < dates.size() && dates[start] < first_scored) ++start;
    if (start == dates.size()) throw AlignmentError("no trading day overlaps the score history");

    MarketFrame frame;
    frame.dates.assign(dates.begin() + long(start), dates.end());
    const Eigen::Index n = Eigen::Index(keep.size());
    const Eigen::Index t_out = Eigen::Index(frame.dates.size());
    frame.prices.resize(n, t_out);
    for (auto& m : frame.scores) m.resize(n, t_out);
    for (Eigen::Index row = 0; row < n; ++row) {
        const std::size_t src = keep[std::size_t(row)];
        frame.tickers.push_back(tickers[src]);
        frame.prices.row(row) = raw_prices.row(Eigen::Index(src)).rightCols(t_out);
        for (std::size_t k = 0; k < 4; ++k) {
            if (!detail::forward_fill(score_rows[tickers[src]], frame.dates, k, frame.scores[k].row(row)))
                throw AlignmentError("internal: score fill failed for " + tickers[src]);
        }
    }
    frame.validate();
    return frame;
}

}  // namespace rpo
