#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "envlink/channel.hpp"
#include "envlink/wei.hpp"

// DFT-style transmit codebook over the linear array, ground-truth beam search
// and the geometric (environment-aided vs. blind) beam predictors.

namespace envlink::beam {

struct BeamCodebook {
    int n_beams = 0;
    int n_elements = 0;
    std::vector<cplx> weights;       // row-major [beam][element]
    std::vector<double> beam_sin;    // sin(azimuth) per beam

    std::span<const cplx> row(int m) const {
        return {weights.data() + static_cast<std::size_t>(m) * n_elements,
                static_cast<std::size_t>(n_elements)};
    }
};

// w_m[n] = exp(j*pi*n*sin(theta_m)) / sqrt(N), sin(theta_m) = (m - 16)/16.
inline BeamCodebook build_codebook(int n_beams = 32, int n_elements = 128) {
    if (n_beams < 1 || n_elements < 1 || n_beams > 2 * n_elements)
        throw std::invalid_argument("build_codebook: invalid sizes");
    BeamCodebook cb;
    cb.n_beams = n_beams;
    cb.n_elements = n_elements;
    cb.weights.resize(static_cast<std::size_t>(n_beams) * n_elements);
    cb.beam_sin.resize(static_cast<std::size_t>(n_beams));
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_elements));
    for (int m = 0; m < n_beams; ++m) {
        const double sin_theta = (m - n_beams / 2) / static_cast<double>(n_beams / 2);
        cb.beam_sin[static_cast<std::size_t>(m)] = sin_theta;
        for (int n = 0; n < n_elements; ++n)
            cb.weights[static_cast<std::size_t>(m) * n_elements + n] =
                std::polar(scale, kPi * n * sin_theta);
    }
    return cb;
}

// Exhaustive search for the beam maximizing wideband received power.
// Ties break toward the lower index.
inline std::pair<int, double> best_beam(const channel::Cfr& cfr, const BeamCodebook& cb,
                                        double per_element_power_dbm) {
    if (cfr.n_tx != cb.n_elements) throw std::invalid_argument("best_beam: shape mismatch");
    int best = 0;
    double best_power = -std::numeric_limits<double>::infinity();
    for (int m = 0; m < cb.n_beams; ++m) {
        const double p = channel::received_power(cfr, cb.row(m), per_element_power_dbm);
        if (p > best_power) {
            best_power = p;
            best = m;
        }
    }
    return {best, best_power};
}

// Geometric beam predictor. With environment knowledge the bearing comes from
// the strongest wall reflector when the direct ray is blocked; the blind
// baseline always steers at the receiver. Nearest beam in sin-space, ties to
// the lower index.
inline int predict_beam(const wei::WeiFeatureVector& f, const BeamCodebook& cb, bool use_wei) {
    const double bearing =
        (use_wei && f.los_blocked) ? f.strongest_reflector_bearing : f.rx_bearing;
    const double target = std::sin(bearing);
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int m = 0; m < cb.n_beams; ++m) {
        const double d = std::abs(cb.beam_sin[static_cast<std::size_t>(m)] - target);
        if (d < best_dist - 1e-15) {
            best_dist = d;
            best = m;
        }
    }
    return best;
}

// Fraction of samples whose prediction lands among the k strongest truth
// beams (truth ranking ties break toward the lower index).
inline double topk_accuracy(const std::vector<int>& predicted,
                            const std::vector<std::vector<double>>& truth_powers, int k) {
    if (predicted.size() != truth_powers.size())
        throw std::invalid_argument("topk_accuracy: length mismatch");
    if (predicted.empty()) throw std::invalid_argument("topk_accuracy: empty sample set");
    const int n_beams = static_cast<int>(truth_powers.front().size());
    if (k < 1 || k > n_beams) throw std::invalid_argument("topk_accuracy: k out of range");

    int hits = 0;
    std::vector<int> order(static_cast<std::size_t>(n_beams));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const auto& powers = truth_powers[i];
        if (static_cast<int>(powers.size()) != n_beams)
            throw std::invalid_argument("topk_accuracy: ragged truth powers");
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (powers[static_cast<std::size_t>(a)] != powers[static_cast<std::size_t>(b)])
                return powers[static_cast<std::size_t>(a)] > powers[static_cast<std::size_t>(b)];
            return a < b;
        });
        for (int j = 0; j < k; ++j)
            if (order[static_cast<std::size_t>(j)] == predicted[i]) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

// 1-based position of the predicted beam in the truth ranking (for reporting).
inline int rank_in_truth(int predicted, const std::vector<double>& powers) {
    int rank = 1;
    for (int m = 0; m < static_cast<int>(powers.size()); ++m) {
        if (m == predicted) continue;
        const double pm = powers[static_cast<std::size_t>(m)];
        const double pp = powers[static_cast<std::size_t>(predicted)];
        if (pm > pp || (pm == pp && m < predicted)) ++rank;
    }
    return rank;
}

}  // namespace envlink::beam
