#pragma once

#include "sreg/popgen.hpp"
#include "sreg/rng.hpp"
#include "sreg/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace sreg {

// ---------------------------------------------------------------------------
// Design specifications
// ---------------------------------------------------------------------------

struct PoissonDesign {
    Vector pi;
};

struct SrsworDesign {
    Index N = 0;
    Index n = 0;
};

struct StratifiedDesign {
    StrataLabels strata;
    std::vector<Index> n_h;
};

/// Conditional Poisson sampling: independent Bernoulli(p_bern) draws kept
/// only when the realized size equals n.
struct RejectiveDesign {
    Vector p_bern;
    Index n = 0;
    std::size_t max_attempts = 1'000'000;
};

using DesignSpec = std::variant<PoissonDesign, SrsworDesign, StratifiedDesign, RejectiveDesign>;

enum class JointMode { exact, approximate };

inline Index design_population_size(const DesignSpec& design) {
    return std::visit(
        [](const auto& d) -> Index {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PoissonDesign>) return d.pi.size();
            else if constexpr (std::is_same_v<D, SrsworDesign>) return d.N;
            else if constexpr (std::is_same_v<D, StratifiedDesign>) return d.strata.population_size();
            else return d.p_bern.size();
        },
        design);
}

inline std::string design_name(const DesignSpec& design) {
    static const char* names[] = {"poisson", "srswor", "stratified", "rejective"};
    return names[design.index()];
}

inline bool is_fixed_size(const DesignSpec& design) {
    return !std::holds_alternative<PoissonDesign>(design);
}

/// Sample size for fixed-size designs, expected size for Poisson.
inline double design_sample_size(const DesignSpec& design) {
    return std::visit(
        [](const auto& d) -> double {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PoissonDesign>) return d.pi.sum();
            else if constexpr (std::is_same_v<D, StratifiedDesign>)
                return static_cast<double>(std::accumulate(d.n_h.begin(), d.n_h.end(), Index{0}));
            else return static_cast<double>(d.n);
        },
        design);
}

inline void validate(const DesignSpec& design) {
    std::visit(
        [](const auto& d) {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PoissonDesign>) {
                for (Index i = 0; i < d.pi.size(); ++i) {
                    if (!(d.pi(i) > 0.0 && d.pi(i) <= 1.0))
                        throw std::invalid_argument("Poisson inclusion probabilities must lie in (0, 1]");
                }
            } else if constexpr (std::is_same_v<D, SrsworDesign>) {
                if (d.N <= 0 || d.n < 0 || d.n > d.N)
                    throw std::invalid_argument("SRSWOR requires 0 <= n <= N and N > 0");
            } else if constexpr (std::is_same_v<D, StratifiedDesign>) {
                if (d.n_h.size() != d.strata.sizes.size())
                    throw std::invalid_argument("one sample size per stratum is required");
                for (std::size_t h = 0; h < d.n_h.size(); ++h) {
                    if (d.n_h[h] < 0 || d.n_h[h] > d.strata.sizes[h])
                        throw std::invalid_argument("stratum sample size must lie in [0, N_h]");
                }
            } else {
                const Index N = d.p_bern.size();
                if (d.n < 0 || d.n > N) throw std::invalid_argument("rejective sample size must lie in [0, N]");
                for (Index i = 0; i < N; ++i) {
                    if (!(d.p_bern(i) > 0.0 && d.p_bern(i) < 1.0))
                        throw std::invalid_argument("rejective Bernoulli probabilities must lie strictly in (0, 1)");
                }
            }
        },
        design);
}

// ---------------------------------------------------------------------------
// Conditional Poisson inclusion probabilities
// ---------------------------------------------------------------------------

namespace detail {

/// Elementary symmetric polynomials e_0..e_cap of a unit set, stored as
/// coef[j] * exp(log_scale) with max(coef) == 1.
struct EspRow {
    std::vector<double> coef;
    double log_scale = 0.0;

    explicit EspRow(Index cap) : coef(static_cast<std::size_t>(cap + 1), 0.0) { coef[0] = 1.0; }

    void add_unit(double w) {
        for (std::size_t j = coef.size() - 1; j > 0; --j) coef[j] += w * coef[j - 1];
        double mx = *std::max_element(coef.begin(), coef.end());
        if (!(mx > 0.0) || !std::isfinite(mx)) throw Error("symmetric-function recursion lost precision");
        for (auto& c : coef) c /= mx;
        log_scale += std::log(mx);
    }

    /// log of sum_a this[a] * other[target - a].
    [[nodiscard]] double log_convolve_at(const EspRow& other, Index target) const {
        double acc = 0.0;
        const auto t = static_cast<std::size_t>(target);
        const std::size_t lo = t >= other.coef.size() ? t - (other.coef.size() - 1) : 0;
        const std::size_t hi = std::min(t, coef.size() - 1);
        for (std::size_t a = lo; a <= hi; ++a) acc += coef[a] * other.coef[t - a];
        if (acc <= 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(acc) + log_scale + other.log_scale;
    }
};

inline double geometric_mean(std::span<const double> odds) {
    double acc = 0.0;
    for (double w : odds) acc += std::log(w);
    return std::exp(acc / static_cast<double>(odds.size()));
}

}  // namespace detail

/// Exact inclusion probabilities of the size-n conditional Poisson design
/// with the given odds: pi_i = w_i e_{n-1}(w without i) / e_n(w).
/// Uses prefix/suffix symmetric-function tables in log scale, O(N n).
inline Vector conditional_poisson_inclusion(std::span<const double> odds, Index n) {
    const auto N = static_cast<Index>(odds.size());
    if (n < 0 || n > N) throw std::invalid_argument("sample size must lie in [0, N]");
    for (double w : odds) {
        if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("odds must be positive and finite");
    }
    Vector pi = Vector::Zero(N);
    if (n == 0 || N == 0) return pi;
    if (n == N) return Vector::Ones(N);

    const double gm = detail::geometric_mean(odds);
    std::vector<double> w(odds.size());
    for (std::size_t i = 0; i < odds.size(); ++i) w[i] = odds[i] / gm;

    // suffix[i] holds units i..N-1
    std::vector<detail::EspRow> suffix(static_cast<std::size_t>(N + 1), detail::EspRow(n));
    for (Index i = N - 1; i >= 0; --i) {
        suffix[static_cast<std::size_t>(i)] = suffix[static_cast<std::size_t>(i + 1)];
        suffix[static_cast<std::size_t>(i)].add_unit(w[static_cast<std::size_t>(i)]);
    }
    const double log_en = std::log(suffix[0].coef[static_cast<std::size_t>(n)]) + suffix[0].log_scale;
    if (!std::isfinite(log_en)) throw Error("symmetric-function recursion overflowed");

    detail::EspRow prefix(n);
    for (Index i = 0; i < N; ++i) {
        const double log_rest = prefix.log_convolve_at(suffix[static_cast<std::size_t>(i + 1)], n - 1);
        pi(i) = std::exp(std::log(w[static_cast<std::size_t>(i)]) + log_rest - log_en);
        prefix.add_unit(w[static_cast<std::size_t>(i)]);
    }
    return pi;
}

/// Exact joint inclusion matrix, using pi_ij = pi_j * P(i in A | j in A) where
/// the conditional design is conditional Poisson of size n-1 on U minus j.
inline Matrix conditional_poisson_joint(std::span<const double> odds, Index n) {
    const auto N = static_cast<Index>(odds.size());
    const Vector pi = conditional_poisson_inclusion(odds, n);
    Matrix joint = Matrix::Zero(N, N);
    std::vector<double> rest(static_cast<std::size_t>(std::max<Index>(N - 1, 0)));
    for (Index j = 0; j < N; ++j) {
        joint(j, j) = pi(j);
        if (n < 1 || N < 2) continue;
        for (Index i = 0, c = 0; i < N; ++i) {
            if (i != j) rest[static_cast<std::size_t>(c++)] = odds[static_cast<std::size_t>(i)];
        }
        const Vector cond = conditional_poisson_inclusion(rest, n - 1);
        for (Index i = 0, c = 0; i < N; ++i) {
            if (i != j) joint(i, j) = pi(j) * cond(c++);
        }
    }
    Matrix sym = 0.5 * (joint + joint.transpose());
    sym.diagonal() = pi;
    return sym;
}

inline std::vector<double> odds_from_probabilities(const Vector& p) {
    std::vector<double> odds(static_cast<std::size_t>(p.size()));
    for (Index i = 0; i < p.size(); ++i) odds[static_cast<std::size_t>(i)] = p(i) / (1.0 - p(i));
    return odds;
}

// ---------------------------------------------------------------------------
// First-order probabilities
// ---------------------------------------------------------------------------

inline Vector first_order_probs(const DesignSpec& design) {
    validate(design);
    return std::visit(
        [](const auto& d) -> Vector {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PoissonDesign>) {
                return d.pi;
            } else if constexpr (std::is_same_v<D, SrsworDesign>) {
                return Vector::Constant(d.N, static_cast<double>(d.n) / static_cast<double>(d.N));
            } else if constexpr (std::is_same_v<D, StratifiedDesign>) {
                Vector pi(d.strata.population_size());
                for (Index i = 0; i < pi.size(); ++i) {
                    const auto h = static_cast<std::size_t>(d.strata.labels[static_cast<std::size_t>(i)] - 1);
                    pi(i) = static_cast<double>(d.n_h[h]) / static_cast<double>(d.strata.sizes[h]);
                }
                return pi;
            } else {
                const auto odds = odds_from_probabilities(d.p_bern);
                return conditional_poisson_inclusion(odds, d.n);
            }
        },
        design);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct DrawnSample {
    std::vector<std::uint8_t> indicators;  // I_i
    IndexSet indices;                      // A, ascending

    [[nodiscard]] Index n_realized() const { return static_cast<Index>(indices.size()); }
    [[nodiscard]] Index population_size() const { return static_cast<Index>(indicators.size()); }
    [[nodiscard]] bool contains(Index i) const { return indicators[static_cast<std::size_t>(i)] != 0; }

    static DrawnSample from_indicators(std::vector<std::uint8_t> ind) {
        DrawnSample s;
        s.indicators = std::move(ind);
        for (std::size_t i = 0; i < s.indicators.size(); ++i) {
            if (s.indicators[i]) s.indices.push_back(static_cast<Index>(i));
        }
        return s;
    }

    static DrawnSample from_indices(Index N, IndexSet idx) {
        std::vector<std::uint8_t> ind(static_cast<std::size_t>(N), 0);
        for (Index i : idx) ind[static_cast<std::size_t>(i)] = 1;
        return from_indicators(std::move(ind));
    }
};

/// Partial Fisher-Yates: the first k entries of `units` become an SRSWOR
/// draw of size k.
inline void partial_shuffle(IndexSet& units, Index k, Rng& rng) {
    const auto m = static_cast<Index>(units.size());
    for (Index t = 0; t < k; ++t) {
        std::uniform_int_distribution<Index> pick(t, m - 1);
        std::swap(units[static_cast<std::size_t>(t)], units[static_cast<std::size_t>(pick(rng))]);
    }
}

/// Size-m conditional Poisson draw on a unit subset with the given odds.
/// The odds are rescaled so the Bernoulli probabilities sum to m, which
/// leaves the conditional law unchanged and keeps acceptance high.
inline std::vector<std::uint8_t> draw_conditional_poisson(std::span<const double> odds, Index m, Rng& rng,
                                                          std::size_t max_attempts = 1'000'000) {
    const auto M = static_cast<Index>(odds.size());
    std::vector<std::uint8_t> out(odds.size(), 0);
    if (m <= 0) return out;
    if (m >= M) {
        std::fill(out.begin(), out.end(), std::uint8_t{1});
        return out;
    }
    auto expected = [&](double log_c) {
        double acc = 0.0;
        for (double w : odds) {
            const double t = log_c + std::log(w);
            acc += t > 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
        }
        return acc;
    };
    double lo = -60.0, hi = 60.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (expected(mid) < static_cast<double>(m) ? lo : hi) = mid;
    }
    const double log_c = 0.5 * (lo + hi);
    std::vector<double> prob(odds.size());
    for (std::size_t i = 0; i < odds.size(); ++i) {
        const double t = log_c + std::log(odds[i]);
        prob[i] = 1.0 / (1.0 + std::exp(-t));
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        Index count = 0;
        for (std::size_t i = 0; i < prob.size(); ++i) {
            out[i] = unif(rng) < prob[i] ? 1 : 0;
            count += out[i];
        }
        if (count == m) return out;
    }
    throw ConvergenceError("conditional Poisson redraw did not reach size " + std::to_string(m) + " in " +
                           std::to_string(max_attempts) + " attempts");
}

inline DrawnSample draw_sample(const DesignSpec& design, Rng& rng) {
    validate(design);
    const Index N = design_population_size(design);
    std::vector<std::uint8_t> ind(static_cast<std::size_t>(N), 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::visit(
        [&](const auto& d) {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PoissonDesign>) {
                for (Index i = 0; i < N; ++i) ind[static_cast<std::size_t>(i)] = unif(rng) < d.pi(i) ? 1 : 0;
            } else if constexpr (std::is_same_v<D, SrsworDesign>) {
                IndexSet units(static_cast<std::size_t>(N));
                std::iota(units.begin(), units.end(), Index{0});
                partial_shuffle(units, d.n, rng);
                for (Index t = 0; t < d.n; ++t) ind[static_cast<std::size_t>(units[static_cast<std::size_t>(t)])] = 1;
            } else if constexpr (std::is_same_v<D, StratifiedDesign>) {
                std::vector<IndexSet> members(d.n_h.size());
                for (Index i = 0; i < N; ++i) {
                    members[static_cast<std::size_t>(d.strata.labels[static_cast<std::size_t>(i)] - 1)].push_back(i);
                }
                for (std::size_t h = 0; h < members.size(); ++h) {
                    partial_shuffle(members[h], d.n_h[h], rng);
                    for (Index t = 0; t < d.n_h[h]; ++t) ind[static_cast<std::size_t>(members[h][static_cast<std::size_t>(t)])] = 1;
                }
            } else {
                for (std::size_t attempt = 1; attempt <= d.max_attempts; ++attempt) {
                    Index count = 0;
                    for (Index i = 0; i < N; ++i) {
                        ind[static_cast<std::size_t>(i)] = unif(rng) < d.p_bern(i) ? 1 : 0;
                        count += ind[static_cast<std::size_t>(i)];
                    }
                    if (count == d.n) return;
                }
                std::ostringstream msg;
                msg << "rejective sampling: no Bernoulli draw of size " << d.n << " in " << d.max_attempts
                    << " attempts (realized acceptance rate 0/" << d.max_attempts << ")";
                throw ConvergenceError(msg.str());
            }
        },
        design);
    return DrawnSample::from_indicators(std::move(ind));
}

// ---------------------------------------------------------------------------
// Second-order probabilities
// ---------------------------------------------------------------------------

/// On-demand accessor for pi_ij; the diagonal equals pi_i.
class JointProbs {
public:
    using Fn = std::function<double(Index, Index)>;

    JointProbs(Vector pi, Fn fn, std::size_t clamped = 0)
        : pi_(std::move(pi)), fn_(std::move(fn)), clamped_(clamped) {}

    [[nodiscard]] double operator()(Index i, Index j) const { return i == j ? pi_(i) : fn_(i, j); }
    [[nodiscard]] const Vector& first_order() const { return pi_; }
    [[nodiscard]] Index size() const { return pi_.size(); }
    /// Pairs whose approximate value was non-positive and got clamped.
    [[nodiscard]] std::size_t clamped_pairs() const { return clamped_; }

    static JointProbs independent(Vector pi) {
        auto shared = std::make_shared<const Vector>(pi);
        return JointProbs(std::move(pi), [shared](Index i, Index j) { return (*shared)(i) * (*shared)(j); });
    }

    static JointProbs dense(Matrix joint) {
        Vector pi = joint.diagonal();
        auto shared = std::make_shared<const Matrix>(std::move(joint));
        return JointProbs(std::move(pi), [shared](Index i, Index j) { return (*shared)(i, j); });
    }

    /// pi_ij ~ pi_i pi_j {1 - (1 - pi_i)(1 - pi_j) / d}, d = sum pi(1 - pi);
    /// non-positive values are clamped to floor * pi_i pi_j.
    static JointProbs hajek(Vector pi, double floor = 1e-6) {
        const double d = (pi.array() * (1.0 - pi.array())).sum();
        std::size_t clamped = 0;
        if (d > 0.0) {
            // count unordered pairs with (1 - pi_i)(1 - pi_j) >= d
            std::vector<double> q(static_cast<std::size_t>(pi.size()));
            for (Index i = 0; i < pi.size(); ++i) q[static_cast<std::size_t>(i)] = 1.0 - pi(i);
            std::sort(q.begin(), q.end(), std::greater<>());
            std::size_t lo = 0, hi = q.size();
            while (lo < hi) {
                while (hi > lo + 1 && q[lo] * q[hi - 1] < d) --hi;
                if (hi > lo + 1) clamped += hi - lo - 1;
                ++lo;
            }
        }
        auto shared = std::make_shared<const Vector>(pi);
        return JointProbs(
            std::move(pi),
            [shared, d, floor](Index i, Index j) {
                const double a = (*shared)(i), b = (*shared)(j);
                if (!(d > 0.0)) return a * b;
                const double v = a * b * (1.0 - (1.0 - a) * (1.0 - b) / d);
                return v > 0.0 ? v : floor * a * b;
            },
            clamped);
    }

private:
    Vector pi_;
    Fn fn_;
    std::size_t clamped_ = 0;
};

/// Default N above which exact rejective joint probabilities are refused.
inline constexpr Index kExactJointCap = 2000;

inline JointProbs joint_probs(const DesignSpec& design, JointMode mode = JointMode::exact,
                              Index exact_cap = kExactJointCap) {
    validate(design);
    return std::visit(
        [&](const auto& d) -> JointProbs {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PoissonDesign>) {
                return JointProbs::independent(d.pi);
            } else if constexpr (std::is_same_v<D, SrsworDesign>) {
                const double N = static_cast<double>(d.N), n = static_cast<double>(d.n);
                const double pij = d.N > 1 ? n * (n - 1.0) / (N * (N - 1.0)) : 0.0;
                return JointProbs(Vector::Constant(d.N, n / N), [pij](Index, Index) { return pij; });
            } else if constexpr (std::is_same_v<D, StratifiedDesign>) {
                Vector pi = first_order_probs(design);
                const auto H = d.n_h.size();
                std::vector<double> within(H);
                for (std::size_t h = 0; h < H; ++h) {
                    const double Nh = static_cast<double>(d.strata.sizes[h]), nh = static_cast<double>(d.n_h[h]);
                    within[h] = Nh > 1 ? nh * (nh - 1.0) / (Nh * (Nh - 1.0)) : 0.0;
                }
                auto labels = std::make_shared<const std::vector<int>>(d.strata.labels);
                auto shared = std::make_shared<const Vector>(pi);
                return JointProbs(std::move(pi), [labels, shared, within](Index i, Index j) {
                    const int hi = (*labels)[static_cast<std::size_t>(i)];
                    const int hj = (*labels)[static_cast<std::size_t>(j)];
                    if (hi == hj) return within[static_cast<std::size_t>(hi - 1)];
                    return (*shared)(i) * (*shared)(j);
                });
            } else {
                if (mode == JointMode::approximate) return JointProbs::hajek(first_order_probs(design));
                if (d.p_bern.size() > exact_cap) {
                    throw Error("exact rejective joint probabilities limited to N <= " + std::to_string(exact_cap) +
                                "; use approximate mode");
                }
                const auto odds = odds_from_probabilities(d.p_bern);
                return JointProbs::dense(conditional_poisson_joint(odds, d.n));
            }
        },
        design);
}

/// max_i sum_j |pi_ij - pi_i pi_j|.
inline double delta_rowsum(const JointProbs& joint) {
    const Vector& pi = joint.first_order();
    double worst = 0.0;
    for (Index i = 0; i < joint.size(); ++i) {
        double row = 0.0;
        for (Index j = 0; j < joint.size(); ++j) row += std::abs(joint(i, j) - pi(i) * pi(j));
        worst = std::max(worst, row);
    }
    return worst;
}

inline double delta_rowsum(const DesignSpec& design, JointMode mode = JointMode::exact) {
    return delta_rowsum(joint_probs(design, mode));
}

}  // namespace sreg
