#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "envlink/channel.hpp"
#include "envlink/wei.hpp"

// Channel prediction tiers: the offline statistical baseline, a
// distance-only regression, and the environment-feature regressor, plus
// pilot-based CFR reconstruction and the NMSE/CDF metrics.

namespace envlink::predict {

enum class PredictorTier { StatModel, SimpleFeature, WeiRegressor };

inline const char* tier_name(PredictorTier t) {
    switch (t) {
        case PredictorTier::StatModel: return "stat";
        case PredictorTier::SimpleFeature: return "simple";
        case PredictorTier::WeiRegressor: return "wei";
    }
    return "?";
}

struct PlRow {
    wei::WeiFeatureVector feature;
    double path_loss_db = 0.0;
};

// Train/test rows come from disjoint Rx points (enforced by the split, not here).
struct Dataset {
    std::vector<PlRow> train;
    std::vector<PlRow> test;
};

struct FitHyper {
    int knn_k = 5;
    double fc_ghz = 6.775;
    double h_ut_m = 2.0;
};

// Fitted path-loss predictor. StatModel is closed-form and ignores the data;
// SimpleFeature is least-squares pl ~ a + b*log10(d3d); WeiRegressor is
// k-nearest-neighbour over standardized features with inverse-distance weights.
class PathLossModel {
public:
    PathLossModel(PredictorTier tier, FitHyper hyper) : tier_(tier), hyper_(hyper) {}

    PredictorTier tier() const { return tier_; }

    double predict(const wei::WeiFeatureVector& f) const {
        switch (tier_) {
            case PredictorTier::StatModel:
                return channel::stat_path_loss(f.d2d, std::max(f.d3d, 1.0), hyper_.fc_ghz,
                                               hyper_.h_ut_m, f.los_blocked == 0, nullptr);
            case PredictorTier::SimpleFeature:
                return a_ + b_ * std::log10(std::max(f.d3d, 1e-6));
            case PredictorTier::WeiRegressor: return knn_predict(f);
        }
        return 0.0;
    }

private:
    friend PathLossModel fit(PredictorTier, const std::vector<PlRow>&, FitHyper);

    double knn_predict(const wei::WeiFeatureVector& f) const {
        const auto q = standardize(f.as_array());
        std::vector<std::pair<double, std::size_t>> dist(train_.size());
        for (std::size_t i = 0; i < train_.size(); ++i) {
            double d2 = 0.0;
            for (int j = 0; j < wei::WeiFeatureVector::kDims; ++j) {
                const double diff = q[j] - train_[i][j];
                d2 += diff * diff;
            }
            dist[i] = {std::sqrt(d2), i};
        }
        const auto k = static_cast<std::size_t>(hyper_.knn_k);
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

        // A zero-distance neighbour dominates; average in case of duplicates.
        constexpr double kZero = 1e-12;
        if (dist[0].first < kZero) {
            double sum = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < k && dist[i].first < kZero; ++i) {
                sum += targets_[dist[i].second];
                ++n;
            }
            return sum / n;
        }
        double wsum = 0.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double w = 1.0 / dist[i].first;
            wsum += w;
            acc += w * targets_[dist[i].second];
        }
        return acc / wsum;
    }

    std::array<double, wei::WeiFeatureVector::kDims> standardize(
        const std::array<double, wei::WeiFeatureVector::kDims>& raw) const {
        std::array<double, wei::WeiFeatureVector::kDims> out{};
        for (int j = 0; j < wei::WeiFeatureVector::kDims; ++j)
            out[j] = stds_[j] > 0 ? (raw[j] - means_[j]) / stds_[j] : 0.0;
        return out;
    }

    PredictorTier tier_;
    FitHyper hyper_;
    // SimpleFeature coefficients
    double a_ = 0.0;
    double b_ = 0.0;
    // WeiRegressor state
    std::array<double, wei::WeiFeatureVector::kDims> means_{};
    std::array<double, wei::WeiFeatureVector::kDims> stds_{};
    std::vector<std::array<double, wei::WeiFeatureVector::kDims>> train_;
    std::vector<double> targets_;
};

inline PathLossModel fit(PredictorTier tier, const std::vector<PlRow>& train, FitHyper hyper = {}) {
    if (train.empty()) throw std::invalid_argument("fit: empty training set");
    PathLossModel m(tier, hyper);
    switch (tier) {
        case PredictorTier::StatModel: break;
        case PredictorTier::SimpleFeature: {
            // Normal equations for pl ~ a + b*x with x = log10(d3d).
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            const auto n = static_cast<double>(train.size());
            for (const auto& r : train) {
                const double x = std::log10(std::max(r.feature.d3d, 1e-6));
                sx += x;
                sy += r.path_loss_db;
                sxx += x * x;
                sxy += x * r.path_loss_db;
            }
            const double det = n * sxx - sx * sx;
            if (std::abs(det) < 1e-12) {
                m.a_ = sy / n;  // all distances equal; fall back to the mean
                m.b_ = 0.0;
            } else {
                m.b_ = (n * sxy - sx * sy) / det;
                m.a_ = (sy - m.b_ * sx) / n;
            }
            break;
        }
        case PredictorTier::WeiRegressor: {
            if (hyper.knn_k < 1 || static_cast<std::size_t>(hyper.knn_k) > train.size())
                throw std::invalid_argument("fit: knn_k must be in [1, train size]");
            const int dims = wei::WeiFeatureVector::kDims;
            m.train_.reserve(train.size());
            m.targets_.reserve(train.size());
            for (const auto& r : train) {
                m.train_.push_back(r.feature.as_array());
                m.targets_.push_back(r.path_loss_db);
            }
            for (int j = 0; j < dims; ++j) {
                double mean = 0.0;
                for (const auto& row : m.train_) mean += row[j];
                mean /= static_cast<double>(m.train_.size());
                double var = 0.0;
                for (const auto& row : m.train_) var += (row[j] - mean) * (row[j] - mean);
                var /= static_cast<double>(m.train_.size());
                m.means_[j] = mean;
                m.stds_[j] = std::sqrt(var);
            }
            for (auto& row : m.train_) row = m.standardize(row);
            break;
        }
    }
    return m;
}

inline double predict_path_loss(const PathLossModel& model, const wei::WeiFeatureVector& f) {
    return model.predict(f);
}

// ---- metrics ----

inline double nmse(std::span<const cplx> truth, std::span<const cplx> pred) {
    if (truth.size() != pred.size()) throw std::invalid_argument("nmse: shape mismatch");
    double err = 0.0;
    double energy = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        err += std::norm(pred[i] - truth[i]);
        energy += std::norm(truth[i]);
    }
    if (energy <= 0.0) throw std::invalid_argument("nmse: zero-energy reference");
    return err / energy;
}

inline double nmse(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size()) throw std::invalid_argument("nmse: shape mismatch");
    double err = 0.0;
    double energy = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = pred[i] - truth[i];
        err += d * d;
        energy += truth[i] * truth[i];
    }
    if (energy <= 0.0) throw std::invalid_argument("nmse: zero-energy reference");
    return err / energy;
}

inline double nmse(const channel::Cfr& truth, const channel::Cfr& pred) {
    if (truth.h.size() != pred.h.size()) throw std::invalid_argument("nmse: shape mismatch");
    return nmse(std::span<const cplx>(truth.h), std::span<const cplx>(pred.h));
}

inline std::vector<std::pair<double, double>> cdf_points(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("cdf_points: empty input");
    std::sort(values.begin(), values.end());
    std::vector<std::pair<double, double>> out;
    out.reserve(values.size());
    const auto n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out.emplace_back(values[i], static_cast<double>(i + 1) / n);
    return out;
}

// ---- pilot-based CFR reconstruction (one antenna) ----

// Pilot observations: values at every 8th subcarrier, one row per OFDM symbol.
struct PilotObservations {
    std::vector<int> subcarrier_indices;
    std::vector<std::vector<cplx>> values;  // [symbol][pilot]
};

inline PilotObservations sample_pilots(const channel::Cfr& cfr, int stride = 8, int antenna = 0) {
    PilotObservations obs;
    for (int k = 0; k < cfr.n_subcarriers; k += stride) obs.subcarrier_indices.push_back(k);
    obs.values.resize(static_cast<std::size_t>(cfr.n_symbols));
    for (int s = 0; s < cfr.n_symbols; ++s)
        for (int k : obs.subcarrier_indices)
            obs.values[static_cast<std::size_t>(s)].push_back(cfr.at(k, s, antenna));
    return obs;
}

namespace detail {

// Solves the square hermitian-ish system in place by Gaussian elimination with
// partial pivoting; sizes here never exceed the pilot count (9).
inline std::vector<cplx> solve_dense(std::vector<std::vector<cplx>> a, std::vector<cplx> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        if (std::abs(a[col][col]) < 1e-300)
            throw std::runtime_error("pilot fit: singular normal equations");
        for (std::size_t r = col + 1; r < n; ++r) {
            const cplx f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<cplx> x(n);
    for (std::size_t i = n; i-- > 0;) {
        cplx acc = b[i];
        for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
        x[i] = acc / a[i][i];
    }
    return x;
}

}  // namespace detail

// Least-squares fit of complex path amplitudes over the delay basis
// exp(-j2pi f_k tau_p) at the pilot subcarriers, then full-band rebuild.
// Duplicate delays (within 1e-12 s) are merged before solving.
inline channel::Cfr reconstruct_cfr_from_pilots(const PilotObservations& obs,
                                                std::vector<double> predicted_delays,
                                                const channel::OfdmConfig& ofdm) {
    if (obs.subcarrier_indices.empty() || obs.values.empty())
        throw std::invalid_argument("pilot fit: empty observations");
    for (std::size_t i = 0; i < obs.subcarrier_indices.size(); ++i)
        if (obs.subcarrier_indices[i] != static_cast<int>(i) * 8)
            throw std::invalid_argument("pilot fit: pilots must sit on every 8th subcarrier");

    std::sort(predicted_delays.begin(), predicted_delays.end());
    std::vector<double> delays;
    for (double d : predicted_delays)
        if (delays.empty() || d - delays.back() > 1e-12) delays.push_back(d);
    if (delays.empty()) throw std::invalid_argument("pilot fit: no delays");
    if (delays.size() > obs.subcarrier_indices.size())
        throw std::invalid_argument("pilot fit: more delays than pilots");

    const std::size_t np = obs.subcarrier_indices.size();
    const std::size_t nb = delays.size();
    std::vector<std::vector<cplx>> basis(np, std::vector<cplx>(nb));
    for (std::size_t i = 0; i < np; ++i) {
        const double fk = ofdm.subcarrier_freq(obs.subcarrier_indices[i]);
        for (std::size_t p = 0; p < nb; ++p)
            basis[i][p] = std::polar(1.0, -2.0 * kPi * fk * delays[p]);
    }
    // Normal equations G a = r with G = B^H B, r = B^H y.
    std::vector<std::vector<cplx>> gram(nb, std::vector<cplx>(nb));
    for (std::size_t p = 0; p < nb; ++p)
        for (std::size_t q = 0; q < nb; ++q) {
            cplx acc = 0.0;
            for (std::size_t i = 0; i < np; ++i) acc += std::conj(basis[i][p]) * basis[i][q];
            gram[p][q] = acc;
        }

    const int ns = static_cast<int>(obs.values.size());
    channel::Cfr out(ofdm.n_subcarriers(), ns, 1);
    for (int s = 0; s < ns; ++s) {
        const auto& y = obs.values[static_cast<std::size_t>(s)];
        if (y.size() != np) throw std::invalid_argument("pilot fit: ragged observation rows");
        std::vector<cplx> rhs(nb);
        for (std::size_t p = 0; p < nb; ++p) {
            cplx acc = 0.0;
            for (std::size_t i = 0; i < np; ++i) acc += std::conj(basis[i][p]) * y[i];
            rhs[p] = acc;
        }
        const auto amps = detail::solve_dense(gram, rhs);
        for (int k = 0; k < out.n_subcarriers; ++k) {
            const double fk = ofdm.subcarrier_freq(k);
            cplx h = 0.0;
            for (std::size_t p = 0; p < nb; ++p)
                h += amps[p] * std::polar(1.0, -2.0 * kPi * fk * delays[p]);
            out.at(k, s, 0) = h;
        }
    }
    return out;
}

// No-WEI comparator: complex linear interpolation of pilot values over the
// subcarrier index, extrapolating past the last pilot.
inline channel::Cfr interpolate_pilots(const PilotObservations& obs,
                                       const channel::OfdmConfig& ofdm) {
    if (obs.subcarrier_indices.size() < 2)
        throw std::invalid_argument("pilot interpolation: need at least two pilots");
    const int ns = static_cast<int>(obs.values.size());
    channel::Cfr out(ofdm.n_subcarriers(), ns, 1);
    const auto& idx = obs.subcarrier_indices;
    for (int s = 0; s < ns; ++s) {
        const auto& y = obs.values[static_cast<std::size_t>(s)];
        for (int k = 0; k < out.n_subcarriers; ++k) {
            std::size_t seg = 0;
            while (seg + 2 < idx.size() && k >= idx[seg + 1]) ++seg;
            const double x0 = idx[seg];
            const double x1 = idx[seg + 1];
            const double t = (k - x0) / (x1 - x0);
            out.at(k, s, 0) = y[seg] * (1.0 - t) + y[seg + 1] * t;
        }
    }
    return out;
}

}  // namespace envlink::predict
