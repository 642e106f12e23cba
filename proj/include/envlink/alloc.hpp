#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "envlink/channel.hpp"

// Max-min fair resource-block allocation: Shannon-rate tensor from CSI, an
// exact oracle for small instances, and the greedy + leximin local-search
// heuristic used at full scale.

namespace envlink::alloc {

// d[u][t][r] >= 0; u indexes users, t OFDM symbols, r resource blocks.
struct RateTensor {
    int n_users = 0;
    int n_t = 0;
    int n_r = 0;
    std::vector<double> d;

    RateTensor() = default;
    RateTensor(int users, int t, int r)
        : n_users(users), n_t(t), n_r(r), d(static_cast<std::size_t>(users) * t * r) {}

    double& at(int u, int t, int r) {
        return d[(static_cast<std::size_t>(u) * n_t + t) * n_r + r];
    }
    double at(int u, int t, int r) const {
        return d[(static_cast<std::size_t>(u) * n_t + t) * n_r + r];
    }
    int n_blocks() const { return n_t * n_r; }
};

// owner[t*R + r] holds the 0-based owning user; exactly one owner per block
// encodes the partition constraint sum_u X_u = 1.
struct AllocationMatrix {
    int n_t = 0;
    int n_r = 0;
    std::vector<int> owner;

    AllocationMatrix() = default;
    AllocationMatrix(int t, int r) : n_t(t), n_r(r), owner(static_cast<std::size_t>(t) * r, 0) {}

    int& at(int t, int r) { return owner[static_cast<std::size_t>(t) * n_r + r]; }
    int at(int t, int r) const { return owner[static_cast<std::size_t>(t) * n_r + r]; }
};

struct FairnessReport {
    std::vector<double> per_user_throughput;
    double t_min = 0.0;
    double gap = 0.0;       // max - min
    double variance = 0.0;  // population variance over users
    double total = 0.0;
};

struct NoiseConfig {
    double noise_figure_db = 7.0;
    double thermal_dbm_per_hz = -174.0;

    double rb_noise_dbm(double rb_bandwidth_hz) const {
        return thermal_dbm_per_hz + 10.0 * std::log10(rb_bandwidth_hz) + noise_figure_db;
    }
};

inline constexpr int kSubcarriersPerRb = 12;

// Shannon rates per (user, symbol, RB) from beamformed CFRs:
//   d = B_RB * log2(1 + SNR), SNR from the mean |w^H h|^2 over the RB.
inline RateTensor compute_rates(const std::vector<channel::Cfr>& cfr_per_user,
                                const std::vector<std::vector<cplx>>& beam_per_user,
                                const channel::OfdmConfig& ofdm, const NoiseConfig& noise,
                                double per_element_power_dbm) {
    const int n_users = static_cast<int>(cfr_per_user.size());
    if (n_users == 0) throw std::invalid_argument("compute_rates: no users");
    if (beam_per_user.size() != cfr_per_user.size())
        throw std::invalid_argument("compute_rates: beams/users mismatch");
    const int nk = ofdm.n_subcarriers();
    if (nk < kSubcarriersPerRb)
        throw std::invalid_argument("compute_rates: need at least one full resource block");
    const int n_r = nk / kSubcarriersPerRb;
    const int n_t = ofdm.n_symbols;
    const double rb_bw = kSubcarriersPerRb * ofdm.scs_hz;
    const double noise_mw = db_to_linear(noise.rb_noise_dbm(rb_bw));

    RateTensor rates(n_users, n_t, n_r);
    for (int u = 0; u < n_users; ++u) {
        const auto& cfr = cfr_per_user[static_cast<std::size_t>(u)];
        const auto& w = beam_per_user[static_cast<std::size_t>(u)];
        if (static_cast<int>(w.size()) != cfr.n_tx)
            throw std::invalid_argument("compute_rates: beam length != n_tx");
        if (cfr.n_symbols != n_t || cfr.n_subcarriers != nk)
            throw std::invalid_argument("compute_rates: cfr grid mismatch");
        const double tx_mw =
            db_to_linear(per_element_power_dbm + linear_to_db(static_cast<double>(cfr.n_tx)));
        for (int t = 0; t < n_t; ++t) {
            for (int r = 0; r < n_r; ++r) {
                double acc = 0.0;
                for (int k = r * kSubcarriersPerRb; k < (r + 1) * kSubcarriersPerRb; ++k) {
                    cplx e = 0.0;
                    for (int n = 0; n < cfr.n_tx; ++n) e += std::conj(w[static_cast<std::size_t>(n)]) * cfr.at(k, t, n);
                    acc += std::norm(e);
                }
                const double snr = tx_mw * (acc / kSubcarriersPerRb) / noise_mw;
                rates.at(u, t, r) = rb_bw * std::log2(1.0 + snr);
            }
        }
    }
    return rates;
}

inline std::vector<double> throughputs(const AllocationMatrix& x, const RateTensor& d) {
    std::vector<double> t_u(static_cast<std::size_t>(d.n_users), 0.0);
    for (int t = 0; t < d.n_t; ++t)
        for (int r = 0; r < d.n_r; ++r) {
            const int u = x.at(t, r);
            if (u < 0 || u >= d.n_users)
                throw std::invalid_argument("allocation: block (" + std::to_string(t) + "," +
                                            std::to_string(r) + ") has no valid owner");
            t_u[static_cast<std::size_t>(u)] += d.at(u, t, r);
        }
    return t_u;
}

inline FairnessReport evaluate(const AllocationMatrix& x, const RateTensor& d) {
    if (x.n_t != d.n_t || x.n_r != d.n_r)
        throw std::invalid_argument("evaluate: allocation/rate shape mismatch");
    FairnessReport rep;
    rep.per_user_throughput = throughputs(x, d);
    const auto& tu = rep.per_user_throughput;
    rep.t_min = *std::min_element(tu.begin(), tu.end());
    rep.gap = *std::max_element(tu.begin(), tu.end()) - rep.t_min;
    rep.total = std::accumulate(tu.begin(), tu.end(), 0.0);
    const double mean = rep.total / static_cast<double>(tu.size());
    double var = 0.0;
    for (double v : tu) var += (v - mean) * (v - mean);
    rep.variance = var / static_cast<double>(tu.size());
    return rep;
}

namespace detail {

// true when sorted(a) >lex sorted(b): the leximin ordering. Comparison is
// exact so that rescaling all rates by a power of two cannot flip any move.
inline bool leximin_greater(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return true;
        if (a[i] < b[i]) return false;
    }
    return false;
}

}  // namespace detail

// Globally optimal T_min by depth-first enumeration in lexicographic owner
// order with a per-user suffix-sum bound. The first optimum encountered is
// kept, which is exactly the lexicographically-smallest optimal owner array.
inline std::pair<AllocationMatrix, double> solve_exact(const RateTensor& d) {
    const int n_blocks = d.n_blocks();
    const double leaves = std::pow(static_cast<double>(d.n_users), n_blocks);
    if (leaves > 1e7)
        throw std::invalid_argument("solve_exact: instance too large (N^(T*R) > 1e7)");

    // suffix[b][u]: total rate user u could still gain from blocks b..end.
    std::vector<std::vector<double>> suffix(static_cast<std::size_t>(n_blocks) + 1,
                                            std::vector<double>(static_cast<std::size_t>(d.n_users), 0.0));
    for (int b = n_blocks - 1; b >= 0; --b)
        for (int u = 0; u < d.n_users; ++u)
            suffix[static_cast<std::size_t>(b)][static_cast<std::size_t>(u)] =
                suffix[static_cast<std::size_t>(b) + 1][static_cast<std::size_t>(u)] +
                d.at(u, b / d.n_r, b % d.n_r);

    std::vector<int> owner(static_cast<std::size_t>(n_blocks), 0);
    std::vector<int> best_owner;
    std::vector<double> t_u(static_cast<std::size_t>(d.n_users), 0.0);
    double best = -std::numeric_limits<double>::infinity();

    auto dfs = [&](auto&& self, int b) -> void {
        if (b == n_blocks) {
            const double t_min = *std::min_element(t_u.begin(), t_u.end());
            if (t_min > best) {
                best = t_min;
                best_owner = owner;
            }
            return;
        }
        // Bound: no user can end above current + its remaining suffix. A hair
        // of slack keeps float non-associativity from pruning a true optimum.
        double ub = std::numeric_limits<double>::infinity();
        for (int u = 0; u < d.n_users; ++u)
            ub = std::min(ub, t_u[static_cast<std::size_t>(u)] +
                                  suffix[static_cast<std::size_t>(b)][static_cast<std::size_t>(u)]);
        if (!best_owner.empty() && ub + 1e-9 * std::max(1.0, std::abs(ub)) <= best) return;
        for (int u = 0; u < d.n_users; ++u) {
            owner[static_cast<std::size_t>(b)] = u;
            const double prev = t_u[static_cast<std::size_t>(u)];
            t_u[static_cast<std::size_t>(u)] = prev + d.at(u, b / d.n_r, b % d.n_r);
            self(self, b + 1);
            t_u[static_cast<std::size_t>(u)] = prev;
        }
    };
    dfs(dfs, 0);

    AllocationMatrix x(d.n_t, d.n_r);
    x.owner = best_owner;
    return {x, best};
}

namespace detail {

// Greedy phase: hand the neediest user its best remaining block.
inline AllocationMatrix greedy_needy(const RateTensor& d) {
    const int n_blocks = d.n_blocks();
    AllocationMatrix x(d.n_t, d.n_r);
    std::vector<double> t_u(static_cast<std::size_t>(d.n_users), 0.0);
    std::vector<bool> taken(static_cast<std::size_t>(n_blocks), false);
    for (int step = 0; step < n_blocks; ++step) {
        int needy = 0;
        for (int u = 1; u < d.n_users; ++u)
            if (t_u[static_cast<std::size_t>(u)] < t_u[static_cast<std::size_t>(needy)]) needy = u;
        int pick = -1;
        double pick_rate = -1.0;
        for (int b = 0; b < n_blocks; ++b) {
            if (taken[static_cast<std::size_t>(b)]) continue;
            const double rate = d.at(needy, b / d.n_r, b % d.n_r);
            if (rate > pick_rate) {
                pick_rate = rate;
                pick = b;
            }
        }
        taken[static_cast<std::size_t>(pick)] = true;
        x.owner[static_cast<std::size_t>(pick)] = needy;
        t_u[static_cast<std::size_t>(needy)] += pick_rate;
    }
    return x;
}

inline AllocationMatrix local_search(const RateTensor& d, AllocationMatrix x) {
    const int n_blocks = d.n_blocks();
    // Local search under the leximin objective; first improving move wins and
    // the scan order is fixed. Candidate throughputs are recomputed from
    // scratch so every comparison is an exact function of the allocation
    // (termination and scale invariance follow). Neighborhoods: 1-move,
    // 1-swap, an exhaustive re-split of the blocks jointly owned by a user
    // pair (bounded to 2^14 subsets), and 3-block owner rotations.
    auto eval = [&](const AllocationMatrix& alloc) { return throughputs(alloc, d); };
    std::vector<double> current = eval(x);
    bool improved = true;
    while (improved) {
        improved = false;
        // 1-move: reassign block b to user u.
        for (int b = 0; b < n_blocks && !improved; ++b) {
            const int from = x.owner[static_cast<std::size_t>(b)];
            for (int u = 0; u < d.n_users && !improved; ++u) {
                if (u == from) continue;
                x.owner[static_cast<std::size_t>(b)] = u;
                auto cand = eval(x);
                if (detail::leximin_greater(cand, current)) {
                    current = std::move(cand);
                    improved = true;
                } else {
                    x.owner[static_cast<std::size_t>(b)] = from;
                }
            }
        }
        // 2-move: reassign blocks a and b jointly to users (ua, ub).
        for (int a = 0; a < n_blocks && !improved; ++a) {
            for (int b = a + 1; b < n_blocks && !improved; ++b) {
                const int oa = x.owner[static_cast<std::size_t>(a)];
                const int ob = x.owner[static_cast<std::size_t>(b)];
                for (int ua = 0; ua < d.n_users && !improved; ++ua) {
                    for (int ub = 0; ub < d.n_users && !improved; ++ub) {
                        if (ua == oa && ub == ob) continue;
                        x.owner[static_cast<std::size_t>(a)] = ua;
                        x.owner[static_cast<std::size_t>(b)] = ub;
                        auto cand = eval(x);
                        if (detail::leximin_greater(cand, current)) {
                            current = std::move(cand);
                            improved = true;
                        } else {
                            x.owner[static_cast<std::size_t>(a)] = oa;
                            x.owner[static_cast<std::size_t>(b)] = ob;
                        }
                    }
                }
            }
        }
        // Pair re-split: exhaustively repartition the blocks owned by (a, b).
        for (int ua = 0; ua < d.n_users && !improved; ++ua) {
            for (int ub = ua + 1; ub < d.n_users && !improved; ++ub) {
                std::vector<int> pool;
                for (int b = 0; b < n_blocks; ++b)
                    if (x.owner[static_cast<std::size_t>(b)] == ua ||
                        x.owner[static_cast<std::size_t>(b)] == ub)
                        pool.push_back(b);
                if (pool.empty() || pool.size() > 14) continue;
                const auto subsets = 1u << pool.size();
                std::uint32_t best_mask = 0;
                bool found = false;
                auto best_vec = current;
                for (std::uint32_t mask = 0; mask < subsets; ++mask) {
                    double ta = 0.0;
                    double tb = 0.0;
                    for (std::size_t i = 0; i < pool.size(); ++i) {
                        const int b = pool[i];
                        if (mask & (1u << i))
                            ta += d.at(ua, b / d.n_r, b % d.n_r);
                        else
                            tb += d.at(ub, b / d.n_r, b % d.n_r);
                    }
                    auto cand = current;
                    cand[static_cast<std::size_t>(ua)] = ta;
                    cand[static_cast<std::size_t>(ub)] = tb;
                    if (detail::leximin_greater(cand, best_vec)) {
                        best_vec = std::move(cand);
                        best_mask = mask;
                        found = true;
                    }
                }
                if (found) {
                    for (std::size_t i = 0; i < pool.size(); ++i)
                        x.owner[static_cast<std::size_t>(pool[i])] =
                            (best_mask & (1u << i)) ? ua : ub;
                    current = eval(x);
                    improved = true;
                }
            }
        }
        // 3-rotation: cycle the owners of three blocks with distinct owners.
        for (int a = 0; a < n_blocks && !improved; ++a) {
            for (int b = a + 1; b < n_blocks && !improved; ++b) {
                for (int c = b + 1; c < n_blocks && !improved; ++c) {
                    const int oa = x.owner[static_cast<std::size_t>(a)];
                    const int ob = x.owner[static_cast<std::size_t>(b)];
                    const int oc = x.owner[static_cast<std::size_t>(c)];
                    if (oa == ob || ob == oc || oa == oc) continue;
                    const int rot[2][3] = {{oc, oa, ob}, {ob, oc, oa}};
                    for (const auto& r : rot) {
                        x.owner[static_cast<std::size_t>(a)] = r[0];
                        x.owner[static_cast<std::size_t>(b)] = r[1];
                        x.owner[static_cast<std::size_t>(c)] = r[2];
                        auto cand = eval(x);
                        if (detail::leximin_greater(cand, current)) {
                            current = std::move(cand);
                            improved = true;
                            break;
                        }
                        x.owner[static_cast<std::size_t>(a)] = oa;
                        x.owner[static_cast<std::size_t>(b)] = ob;
                        x.owner[static_cast<std::size_t>(c)] = oc;
                    }
                }
            }
        }
    }
    return x;
}

}  // namespace detail

// Max-min heuristic: needy-user greedy plus leximin local search, restarted
// from three deterministic initial allocations (needy greedy, per-block
// argmax, round robin); the leximin-best fixed point wins. Deterministic for
// a given rate tensor. Plain 1-move/1-swap descent from a single start can
// land 15%+ below the optimum on small instances, which is why the restarts
// and the pair re-split neighborhood are part of the algorithm.
inline std::pair<AllocationMatrix, double> solve_heuristic(const RateTensor& d) {
    std::vector<AllocationMatrix> starts;
    starts.push_back(detail::greedy_needy(d));
    {
        AllocationMatrix argmax(d.n_t, d.n_r);
        for (int t = 0; t < d.n_t; ++t)
            for (int r = 0; r < d.n_r; ++r) {
                int best = 0;
                for (int u = 1; u < d.n_users; ++u)
                    if (d.at(u, t, r) > d.at(best, t, r)) best = u;
                argmax.at(t, r) = best;
            }
        starts.push_back(std::move(argmax));
    }
    {
        AllocationMatrix rr(d.n_t, d.n_r);
        for (int b = 0; b < d.n_blocks(); ++b)
            rr.owner[static_cast<std::size_t>(b)] = b % d.n_users;
        starts.push_back(std::move(rr));
    }

    AllocationMatrix best;
    std::vector<double> best_tu;
    auto consider = [&](AllocationMatrix x) {
        x = detail::local_search(d, std::move(x));
        auto tu = throughputs(x, d);
        if (best_tu.empty() || detail::leximin_greater(tu, best_tu)) {
            best = std::move(x);
            best_tu = std::move(tu);
        }
    };
    for (auto& start : starts) consider(std::move(start));

    // Iterated kicks: perturb a few blocks of the incumbent and re-descend,
    // keeping the leximin-best fixed point. The kick stream uses a fixed
    // internal seed, so the whole solver stays a pure function of the tensor.
    const int n_blocks = d.n_blocks();
    if (d.n_users > 1) {
        Rng kick_rng(0x5EEDULL);
        const int n_kicks = 2 * n_blocks + 16;
        for (int kick = 0; kick < n_kicks; ++kick) {
            AllocationMatrix kicked = best;
            const int touches = 3 + static_cast<int>(kick_rng.uniform_int(0, 2));
            for (int i = 0; i < touches; ++i) {
                const auto b = static_cast<std::size_t>(kick_rng.uniform_int(0, n_blocks - 1));
                const int shift = 1 + static_cast<int>(kick_rng.uniform_int(0, d.n_users - 2));
                kicked.owner[b] = (kicked.owner[b] + shift) % d.n_users;
            }
            consider(std::move(kicked));
        }
    }
    return {best, *std::min_element(best_tu.begin(), best_tu.end())};
}

// Throughput-maximizing comparator: every block goes to its best user.
inline std::pair<AllocationMatrix, double> solve_max_total(const RateTensor& d) {
    AllocationMatrix x(d.n_t, d.n_r);
    for (int t = 0; t < d.n_t; ++t)
        for (int r = 0; r < d.n_r; ++r) {
            int best = 0;
            for (int u = 1; u < d.n_users; ++u)
                if (d.at(u, t, r) > d.at(best, t, r)) best = u;
            x.at(t, r) = best;
        }
    const auto tu = throughputs(x, d);
    return {x, *std::min_element(tu.begin(), tu.end())};
}

}  // namespace envlink::alloc
