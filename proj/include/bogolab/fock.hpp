#pragma once

// Truncated second-quantization oracles. Occupation-number bases over M
// modes, either all states with total <= n_max (truncated Fock space) or the
// fixed-total N-body sector. States are ordered by total first, then
// lexicographically, so every truncation level is a prefix of the next.
//
// The quadratic Hamiltonian
//
//   H = sum_jk h_jk a*_j a_k + 1/2 sum_jk (K2_jk a*_j a*_k + conj(K2_jk) a_j a_k)
//
// is applied matrix-free: one lowering sweep produces the columns a_k phi,
// a dense (dim x M) * (M x M) product mixes the modes, and the adjoint sweep
// raises the result back. The pairing part raises into a workspace extended
// by two sectors, so the component pushed above the cap is assembled exactly
// before it is dropped; its norm is the reported truncation leakage.

#include <array>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

#include "bogolab/pairdyn.hpp"

namespace bogolab {

inline constexpr std::size_t fock_default_cap = 200000;  // basis states

// Exact binomial, saturating instead of overflowing (callers only compare
// against the memory cap, so "huge" is all we need to know).
inline unsigned long long binomial(int n, int k) {
    if (k < 0 || n < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    unsigned __int128 r = 1;
    for (int i = 1; i <= k; ++i) {
        r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
        if (r > std::numeric_limits<unsigned long long>::max() / 2)
            return std::numeric_limits<unsigned long long>::max();
    }
    return static_cast<unsigned long long>(r);
}

struct FockCap {
    enum class Kind { max_total, fixed_total };
    Kind kind = Kind::max_total;
    int value = 0;

    static FockCap up_to(int n) { return {Kind::max_total, n}; }
    static FockCap exactly(int n) { return {Kind::fixed_total, n}; }
    bool operator==(const FockCap&) const = default;
};

class FockBasis {
  public:
    FockBasis() = default;

    int modes() const { return modes_; }
    FockCap cap() const { return cap_; }
    std::size_t dimension() const { return totals_.size(); }
    int total(std::size_t i) const { return totals_[i]; }
    int occ(std::size_t i, int k) const { return occs_[i * modes_ + k]; }
    const int* occ_ptr(std::size_t i) const { return occs_.data() + i * modes_; }

    std::vector<int> occupation(std::size_t i) const {
        return std::vector<int>(occ_ptr(i), occ_ptr(i) + modes_);
    }

    // number of states with total <= t (a contiguous prefix by construction)
    std::size_t prefix_dimension(int t) const {
        if (t < 0) return 0;
        if (t >= cap_.value) return dimension();
        if (cap_.kind == FockCap::Kind::fixed_total) return 0;  // single sector
        return sector_end_[static_cast<std::size_t>(t)];
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t find(const int* occ, int total) const {
        if (cap_.kind == FockCap::Kind::fixed_total) {
            if (total != cap_.value) return npos;
        } else if (total > cap_.value) {
            return npos;
        }
        std::size_t lo = total == 0 ? 0 : prefix_dimension(total - 1);
        std::size_t hi = prefix_dimension(total);
        if (cap_.kind == FockCap::Kind::fixed_total) { lo = 0; hi = dimension(); }
        while (lo < hi) {
            std::size_t mid = lo + (hi - lo) / 2;
            const int* p = occ_ptr(mid);
            int cmp = 0;
            for (int k = 0; k < modes_; ++k)
                if (p[k] != occ[k]) { cmp = p[k] < occ[k] ? -1 : 1; break; }
            if (cmp == 0) return mid;
            if (cmp < 0) lo = mid + 1; else hi = mid;
        }
        return npos;
    }

    std::size_t index_of(const std::vector<int>& occ) const {
        require(static_cast<int>(occ.size()) == modes_, "occupation length mismatch");
        int total = 0;
        for (int v : occ) {
            require(v >= 0, "occupation numbers must be nonnegative");
            total += v;
        }
        std::size_t i = find(occ.data(), total);
        require(i != npos, "occupation tuple is not in the basis");
        return i;
    }

    // index of occ(i) -/+ e_k, or npos when absent
    std::size_t lowered_index(std::size_t i, int k, std::vector<int>& scratch) const {
        if (occ(i, k) == 0) return npos;
        scratch.assign(occ_ptr(i), occ_ptr(i) + modes_);
        scratch[static_cast<std::size_t>(k)] -= 1;
        return find(scratch.data(), totals_[i] - 1);
    }
    std::size_t raised_index(std::size_t i, int k, std::vector<int>& scratch) const {
        scratch.assign(occ_ptr(i), occ_ptr(i) + modes_);
        scratch[static_cast<std::size_t>(k)] += 1;
        return find(scratch.data(), totals_[i] + 1);
    }

  private:
    friend FockBasis build_basis_impl(int, FockCap, std::size_t);
    int modes_ = 0;
    FockCap cap_;
    std::vector<int> occs_;    // dimension x modes, flattened
    std::vector<int> totals_;
    std::vector<std::size_t> sector_end_;  // max_total kind: prefix dim per total
};

using FockBasisPtr = std::shared_ptr<const FockBasis>;

inline unsigned long long basis_dimension(int modes, FockCap cap) {
    if (cap.kind == FockCap::Kind::max_total) return binomial(modes + cap.value, cap.value);
    return binomial(modes + cap.value - 1, cap.value);
}

inline FockBasis build_basis_impl(int modes, FockCap cap, std::size_t memory_cap) {
    require(modes >= 1, "basis needs at least one mode");
    require(cap.value >= 0, "basis cap must be nonnegative");
    unsigned long long dim = basis_dimension(modes, cap);
    require(dim <= memory_cap, "basis dimension " + std::to_string(dim) +
                                   " exceeds the memory cap " + std::to_string(memory_cap));

    FockBasis b;
    b.modes_ = modes;
    b.cap_ = cap;
    b.occs_.reserve(static_cast<std::size_t>(dim) * static_cast<std::size_t>(modes));
    b.totals_.reserve(static_cast<std::size_t>(dim));

    std::vector<int> occ(static_cast<std::size_t>(modes), 0);
    // compositions of t into `modes` parts, lexicographically ascending
    auto emit_sector = [&](int t) {
        std::function<void(int, int)> rec = [&](int slot, int left) {
            if (slot == modes - 1) {
                occ[static_cast<std::size_t>(slot)] = left;
                b.occs_.insert(b.occs_.end(), occ.begin(), occ.end());
                b.totals_.push_back(t);
                return;
            }
            for (int v = 0; v <= left; ++v) {
                occ[static_cast<std::size_t>(slot)] = v;
                rec(slot + 1, left - v);
            }
        };
        rec(0, t);
    };

    if (cap.kind == FockCap::Kind::max_total) {
        for (int t = 0; t <= cap.value; ++t) {
            emit_sector(t);
            b.sector_end_.push_back(b.totals_.size());
        }
    } else {
        emit_sector(cap.value);
    }
    require(b.totals_.size() == dim, "basis enumeration does not match the counting formula");
    return b;
}

inline FockBasisPtr build_basis(int modes, FockCap cap,
                                std::size_t memory_cap = fock_default_cap) {
    return std::make_shared<const FockBasis>(build_basis_impl(modes, cap, memory_cap));
}

struct FockVector {
    FockBasisPtr basis;
    Vec coeffs;
};

inline FockVector fock_vacuum(FockBasisPtr b) {
    require(b && b->cap().kind == FockCap::Kind::max_total,
            "the vacuum lives in a max_total basis");
    Vec c = Vec::Zero(static_cast<Eigen::Index>(b->dimension()));
    c[0] = 1.0;
    return {std::move(b), std::move(c)};
}

inline FockVector basis_state(FockBasisPtr b, const std::vector<int>& occ) {
    Vec c = Vec::Zero(static_cast<Eigen::Index>(b->dimension()));
    c[static_cast<Eigen::Index>(b->index_of(occ))] = 1.0;
    return {std::move(b), std::move(c)};
}

inline void check_fock_normalized(const FockVector& v, const char* who) {
    require(std::abs(v.coeffs.norm() - 1.0) <= 1e-8,
            std::string(who) + ": state must be normalized");
}

// ---------------------------------------------------------------------------
// matrix-free quadratic Hamiltonian

struct LadderEntry {
    std::uint32_t src;  // state with occ_k > 0
    std::uint32_t dst;  // src with one quantum removed from mode k
    double amp;         // sqrt(occ_k(src))
};

class QuadraticApplier {
  public:
    QuadraticApplier(FockBasisPtr base, bool with_pairing,
                     std::size_t memory_cap = fock_default_cap)
        : base_(std::move(base)), pairing_(with_pairing) {
        require(base_ && base_->cap().kind == FockCap::Kind::max_total,
                "quadratic applier needs a max_total basis");
        const int m = base_->modes();
        const int top = base_->cap().value;
        work_ = pairing_ ? build_basis(m, FockCap::up_to(top + 2), memory_cap) : base_;

        d_in_ = base_->dimension();
        d_work_ = work_->dimension();
        d_low_ = work_->prefix_dimension(top - 1);
        d_hi_ = pairing_ ? work_->prefix_dimension(top + 1) : d_in_;

        lower_.resize(static_cast<std::size_t>(m));
        std::vector<int> scratch;
        for (std::size_t s = 0; s < d_work_; ++s)
            for (int k = 0; k < m; ++k)
                if (work_->occ(s, k) > 0) {
                    std::size_t dst = work_->lowered_index(s, k, scratch);
                    lower_[static_cast<std::size_t>(k)].push_back(
                        {static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(dst),
                         std::sqrt(static_cast<double>(work_->occ(s, k)))});
                }
        // entries are generated with src ascending; dst is then ascending too,
        // so prefix cutoffs below are plain partition points
        cut_dst_low_.resize(static_cast<std::size_t>(m));
        cut_src_low_.resize(static_cast<std::size_t>(m));
        cut_src_hi_.resize(static_cast<std::size_t>(m));
        for (int k = 0; k < m; ++k) {
            const auto& v = lower_[static_cast<std::size_t>(k)];
            auto count = [&](auto pred) -> std::size_t {
                std::size_t lo = 0, hi = v.size();
                while (lo < hi) {
                    std::size_t mid = lo + (hi - lo) / 2;
                    if (pred(v[mid])) lo = mid + 1; else hi = mid;
                }
                return lo;
            };
            cut_dst_low_[static_cast<std::size_t>(k)] =
                count([&](const LadderEntry& e) { return e.dst < d_low_; });
            cut_src_low_[static_cast<std::size_t>(k)] =
                count([&](const LadderEntry& e) { return e.src < d_low_; });
            cut_src_hi_[static_cast<std::size_t>(k)] =
                count([&](const LadderEntry& e) { return e.src < d_hi_; });
        }

        in_ = Vec::Zero(static_cast<Eigen::Index>(d_work_));
        acc_.resize(static_cast<Eigen::Index>(d_work_));
        low_mat_.resize(static_cast<Eigen::Index>(d_work_), m);
        mix_.resize(static_cast<Eigen::Index>(d_work_), m);
        if (pairing_) raise_mat_.resize(static_cast<Eigen::Index>(d_hi_), m);
    }

    const FockBasis& base() const { return *base_; }
    const FockBasisPtr& base_ptr() const { return base_; }
    const FockBasis& workspace() const { return *work_; }

    // out = H phi; returns the squared norm of the above-cap component
    double apply(const Mat& h, const Mat& k2, const Vec& phi, Vec& out) {
        const int m = base_->modes();
        require(h.rows() == m && h.cols() == m, "apply_quadratic: h dimension mismatch");
        require(phi.size() == static_cast<Eigen::Index>(d_in_),
                "apply_quadratic: state dimension mismatch");
        bool use_pairing = k2.size() > 0 && k2.cwiseAbs().maxCoeff() > 0.0;
        if (use_pairing) {
            require(k2.rows() == m && k2.cols() == m, "apply_quadratic: K2 dimension mismatch");
            require(pairing_, "apply_quadratic: applier was built without a pairing workspace");
        }

        in_.head(static_cast<Eigen::Index>(d_in_)) = phi;
        acc_.setZero();

        // lowering sweep; each (dst, k) cell has exactly one source, so plain
        // assignment both fills and clears
        double nonzero = 0.0;
        for (int k = 0; k < m; ++k)
            for (const LadderEntry& e : lower_[static_cast<std::size_t>(k)]) {
                cxd v = e.amp * in_[e.src];
                low_mat_(e.dst, k) = v;
                nonzero += std::abs(v.real()) + std::abs(v.imag());
            }

        if (nonzero > 0.0 && d_low_ > 0) {
            auto dl = static_cast<Eigen::Index>(d_low_);
            mix_.topRows(dl).noalias() = low_mat_.topRows(dl) * h.transpose();
            for (int j = 0; j < m; ++j) {
                const auto& v = lower_[static_cast<std::size_t>(j)];
                std::size_t cut = cut_dst_low_[static_cast<std::size_t>(j)];
                for (std::size_t i = 0; i < cut; ++i)
                    acc_[v[i].src] += v[i].amp * mix_(v[i].dst, j);
            }
        }

        if (use_pairing) {
            auto dh = static_cast<Eigen::Index>(d_hi_);
            // raise-raise: columns a*_k phi, mixed by K2, raised once more
            raise_mat_.topRows(dh).setZero();
            for (int k = 0; k < m; ++k) {
                const auto& v = lower_[static_cast<std::size_t>(k)];
                std::size_t cut = cut_src_hi_[static_cast<std::size_t>(k)];
                for (std::size_t i = 0; i < cut; ++i)
                    raise_mat_(v[i].src, k) = v[i].amp * in_[v[i].dst];
            }
            mix_.topRows(dh).noalias() = raise_mat_.topRows(dh) * k2;
            for (int j = 0; j < m; ++j) {
                const auto& v = lower_[static_cast<std::size_t>(j)];
                for (const LadderEntry& e : v)  // dst < d_hi_ always holds
                    acc_[e.src] += 0.5 * e.amp * mix_(e.dst, j);
            }
            // lower-lower
            if (d_low_ > 0) {
                auto dl = static_cast<Eigen::Index>(d_low_);
                mix_.topRows(dl).noalias() = low_mat_.topRows(dl) * k2.conjugate();
                for (int j = 0; j < m; ++j) {
                    const auto& v = lower_[static_cast<std::size_t>(j)];
                    std::size_t cut = cut_src_low_[static_cast<std::size_t>(j)];
                    for (std::size_t i = 0; i < cut; ++i)
                        acc_[v[i].dst] += 0.5 * v[i].amp * mix_(v[i].src, j);
                }
            }
        }

        double leak_sq = 0.0;
        if (d_work_ > d_in_)
            leak_sq = acc_.segment(static_cast<Eigen::Index>(d_in_),
                                   static_cast<Eigen::Index>(d_work_ - d_in_))
                          .squaredNorm();
        out = acc_.head(static_cast<Eigen::Index>(d_in_));
        return leak_sq;
    }

  private:
    FockBasisPtr base_, work_;
    bool pairing_;
    std::size_t d_in_ = 0, d_work_ = 0, d_low_ = 0, d_hi_ = 0;
    std::vector<std::vector<LadderEntry>> lower_;
    std::vector<std::size_t> cut_dst_low_, cut_src_low_, cut_src_hi_;
    Vec in_, acc_;
    Mat low_mat_, mix_, raise_mat_;
};

inline FockVector apply_quadratic(const OneBodyOperator& h, const Mat& k2, const FockVector& phi,
                                  double* leakage_sq = nullptr,
                                  std::size_t memory_cap = fock_default_cap) {
    require(phi.basis != nullptr, "apply_quadratic: empty basis");
    bool pairing = k2.size() > 0 && k2.cwiseAbs().maxCoeff() > 0.0;
    QuadraticApplier ap(phi.basis, pairing, memory_cap);
    Vec out;
    double l2 = ap.apply(h.entries, k2, phi.coeffs, out);
    if (leakage_sq) *leakage_sq = l2;
    return {phi.basis, std::move(out)};
}

// ---------------------------------------------------------------------------
// ladder-moment diagnostics

namespace detail {

// columns a_k phi, on the same max_total basis
inline Mat lowered_columns(const FockBasis& b, const Vec& phi) {
    const int m = b.modes();
    Mat l = Mat::Zero(static_cast<Eigen::Index>(b.dimension()), m);
    std::vector<int> scratch;
    for (std::size_t s = 0; s < b.dimension(); ++s) {
        cxd v = phi[static_cast<Eigen::Index>(s)];
        if (v == 0.0) continue;
        for (int k = 0; k < m; ++k)
            if (b.occ(s, k) > 0) {
                std::size_t dst = b.lowered_index(s, k, scratch);
                l(static_cast<Eigen::Index>(dst), k) +=
                    std::sqrt(static_cast<double>(b.occ(s, k))) * v;
            }
    }
    return l;
}

// columns a*_k phi; components above the cap are dropped (they are orthogonal
// to everything the callers pair them with)
inline Mat raised_columns(const FockBasis& b, const Vec& phi) {
    const int m = b.modes();
    Mat r = Mat::Zero(static_cast<Eigen::Index>(b.dimension()), m);
    std::vector<int> scratch;
    for (std::size_t s = 0; s < b.dimension(); ++s) {
        cxd v = phi[static_cast<Eigen::Index>(s)];
        if (v == 0.0) continue;
        for (int k = 0; k < m; ++k) {
            std::size_t dst = b.raised_index(s, k, scratch);
            if (dst == FockBasis::npos) continue;
            r(static_cast<Eigen::Index>(dst), k) +=
                std::sqrt(static_cast<double>(b.occ(s, k) + 1)) * v;
        }
    }
    return r;
}

}  // namespace detail

inline PairState covariance_of(const FockVector& phi, const GridSpec& grid) {
    require(phi.basis && phi.basis->cap().kind == FockCap::Kind::max_total,
            "covariance_of expects an excitation vector on a max_total basis");
    require(phi.basis->modes() == grid.modes, "covariance_of: grid/basis mode mismatch");
    check_fock_normalized(phi, "covariance_of");

    Mat l = detail::lowered_columns(*phi.basis, phi.coeffs);
    Mat r = detail::raised_columns(*phi.basis, phi.coeffs);
    Mat gamma = (l.adjoint() * l).transpose();  // gamma_pq = <a_q phi, a_p phi>
    Mat alpha = r.adjoint() * l;                // alpha_pq = <a*_p phi, a_q phi>
    gamma = 0.5 * (gamma + gamma.adjoint()).eval();
    alpha = 0.5 * (alpha + alpha.transpose()).eval();
    return make_pair_state(grid, std::move(gamma), std::move(alpha));
}

struct WickReport {
    double defect = 0.0;        // worst |<a*a*aa> - Wick(gamma, alpha)| over quadruples
    double moment_ratio = 0.0;  // <(1+N)^2> / <1+N>^2
};

inline WickReport wick_defect(const FockVector& phi, const GridSpec& grid) {
    const FockBasis& b = *phi.basis;
    const int m = b.modes();
    PairState cov = covariance_of(phi, grid);
    const Mat& gamma = cov.gamma.entries;
    const Mat& alpha = cov.alpha;

    Mat l = detail::lowered_columns(b, phi.coeffs);
    std::map<int, Vec> doubles;  // key p*m+q -> a_p a_q phi
    auto lowered_pair = [&](int p, int q) -> const Vec& {
        int key = p * m + q;
        auto it = doubles.find(key);
        if (it != doubles.end()) return it->second;
        Vec col = l.col(q);
        Vec out = Vec::Zero(l.rows());
        std::vector<int> scratch;
        for (std::size_t s = 0; s < b.dimension(); ++s) {
            cxd v = col[static_cast<Eigen::Index>(s)];
            if (v == 0.0 || b.occ(s, p) == 0) continue;
            std::size_t dst = b.lowered_index(s, p, scratch);
            out[static_cast<Eigen::Index>(dst)] +=
                std::sqrt(static_cast<double>(b.occ(s, p))) * v;
        }
        return doubles.emplace(key, std::move(out)).first->second;
    };

    std::vector<std::array<int, 4>> quads;
    if (m <= 6) {
        for (int p = 0; p < m; ++p)
            for (int q = 0; q < m; ++q)
                for (int r = 0; r < m; ++r)
                    for (int s = 0; s < m; ++s) quads.push_back({p, q, r, s});
    } else {
        std::mt19937 rng(20240819u);
        std::uniform_int_distribution<int> pick(0, m - 1);
        for (int i = 0; i < 200; ++i)
            quads.push_back({pick(rng), pick(rng), pick(rng), pick(rng)});
    }

    WickReport rep;
    for (const auto& [p, q, r, s] : quads) {
        // <a*_p a*_q a_r a_s> = <a_q a_p phi, a_r a_s phi>
        cxd direct = lowered_pair(q, p).dot(lowered_pair(r, s));
        cxd wick = std::conj(alpha(p, q)) * alpha(r, s) + gamma(r, p) * gamma(s, q) +
                   gamma(s, p) * gamma(r, q);
        rep.defect = std::max(rep.defect, std::abs(direct - wick));
    }

    double n1 = 0.0, n2 = 0.0;
    for (std::size_t s = 0; s < b.dimension(); ++s) {
        double w = std::norm(phi.coeffs[static_cast<Eigen::Index>(s)]);
        double t = static_cast<double>(b.total(s));
        n1 += w * t;
        n2 += w * t * t;
    }
    rep.moment_ratio = (1.0 + 2.0 * n1 + n2) / ((1.0 + n1) * (1.0 + n1));
    return rep;
}

inline OneBodyOperator one_body_reduced(const FockVector& psi, const GridSpec& grid) {
    require(psi.basis && psi.basis->cap().kind == FockCap::Kind::fixed_total,
            "one_body_reduced expects an N-sector state");
    const FockBasis& b = *psi.basis;
    const int m = b.modes();
    require(m == grid.modes, "one_body_reduced: grid/basis mode mismatch");
    check_fock_normalized(psi, "one_body_reduced");
    const int n = b.cap().value;
    if (n == 0) return OneBodyOperator{grid, Mat::Zero(m, m), OpRole::psd};

    // the (N-1)-sector is always smaller than the N-sector, so the parent
    // state's own dimension is a safe memory cap
    FockBasis lower = build_basis_impl(m, FockCap::exactly(n - 1), b.dimension());
    Mat l = Mat::Zero(static_cast<Eigen::Index>(lower.dimension()), m);
    std::vector<int> scratch(static_cast<std::size_t>(m));
    for (std::size_t s = 0; s < b.dimension(); ++s) {
        cxd v = psi.coeffs[static_cast<Eigen::Index>(s)];
        if (v == 0.0) continue;
        for (int k = 0; k < m; ++k)
            if (b.occ(s, k) > 0) {
                scratch.assign(b.occ_ptr(s), b.occ_ptr(s) + m);
                scratch[static_cast<std::size_t>(k)] -= 1;
                std::size_t dst = lower.find(scratch.data(), n - 1);
                l(static_cast<Eigen::Index>(dst), k) +=
                    std::sqrt(static_cast<double>(b.occ(s, k))) * v;
            }
    }
    Mat gamma = (l.adjoint() * l).transpose();
    gamma = 0.5 * (gamma + gamma.adjoint()).eval();
    double tr = gamma.trace().real();
    require(std::abs(tr - static_cast<double>(n)) <= 1e-8,
            "one_body_reduced: trace " + fmt_double(tr) + " deviates from the particle number");
    return OneBodyOperator{grid, std::move(gamma), OpRole::psd};
}

// ---------------------------------------------------------------------------
// exact N-body Hamiltonian
//
//   H_N = dGamma(-lap) + 1/(2(N-1)) sum_jk wN(x_j - x_k) a*_j a*_k a_k a_j
//
// The interaction is diagonal in the occupation basis: the operator
// a*_j a*_k a_k a_j counts n_j n_k - delta_jk n_j. Kinetic hopping reuses the
// quadratic engine on a max_total(N) workspace whose top sector is the
// N-body space.

class ExactHamiltonian {
  public:
    ExactHamiltonian(int particles, const InteractionProfile& profile, const GridSpec& grid,
                     std::size_t memory_cap = fock_default_cap)
        : n_(particles),
          grid_(grid),
          sector_(build_basis(grid.modes, FockCap::exactly(particles), memory_cap)),
          applier_(build_basis(grid.modes, FockCap::up_to(particles), memory_cap), false,
                   memory_cap),
          kinetic_(laplacian_operator(grid).entries) {
        require(particles >= 1, "particle number must be at least 1");
        offset_ = applier_.base().prefix_dimension(particles - 1);

        InteractionProfile p = profile;
        p.particles = particles;  // the Hamiltonian's N drives the scaling
        ScaledPotential sp = build_scaled_potential(p, grid);
        wN_ = sp.wN;

        const int m = grid.modes;
        const std::size_t dim = sector_->dimension();
        diag_ = Vec::Zero(static_cast<Eigen::Index>(dim));
        double wmax = sp.wN.values.cwiseAbs().maxCoeff();
        if (particles >= 2 && wmax > 0.0) {
            std::vector<std::pair<int, int>> occupied;
            for (std::size_t s = 0; s < dim; ++s) {
                occupied.clear();
                for (int k = 0; k < m; ++k)
                    if (sector_->occ(s, k) > 0) occupied.emplace_back(k, sector_->occ(s, k));
                double val = 0.0;
                for (auto [j, nj] : occupied)
                    for (auto [k, nk] : occupied) {
                        double w = sp.wN.values[(j - k + m) % m].real();
                        val += w * (static_cast<double>(nj) * nk - (j == k ? nj : 0));
                    }
                diag_[static_cast<Eigen::Index>(s)] = val / (2.0 * (particles - 1));
            }
        }
        pad_in_ = Vec::Zero(static_cast<Eigen::Index>(applier_.base().dimension()));
    }

    const FockBasisPtr& basis() const { return sector_; }
    const GridSpec& grid() const { return grid_; }
    const GridFunction& scaled_interaction() const { return wN_; }
    int particles() const { return n_; }

    void apply(const Vec& psi, Vec& out) {
        auto dim = static_cast<Eigen::Index>(sector_->dimension());
        require(psi.size() == dim, "exact Hamiltonian: state dimension mismatch");
        pad_in_.segment(static_cast<Eigen::Index>(offset_), dim) = psi;
        applier_.apply(kinetic_, Mat(), pad_in_, pad_out_);
        out = pad_out_.segment(static_cast<Eigen::Index>(offset_), dim);
        out += diag_.cwiseProduct(psi);
    }

    Vec apply(const Vec& psi) {
        Vec out;
        apply(psi, out);
        return out;
    }

    double energy(const Vec& psi) { return psi.dot(apply(psi)).real(); }

    Mat dense() {
        auto dim = static_cast<Eigen::Index>(sector_->dimension());
        require(dim <= 4096, "dense Hamiltonian is for small sectors only");
        Mat h(dim, dim);
        Vec col;
        for (Eigen::Index j = 0; j < dim; ++j) {
            apply(Vec::Unit(dim, j), col);
            h.col(j) = col;
        }
        return h;
    }

  private:
    int n_;
    GridSpec grid_;
    FockBasisPtr sector_;
    QuadraticApplier applier_;
    std::size_t offset_ = 0;
    Mat kinetic_;
    GridFunction wN_;
    Vec diag_;
    Vec pad_in_, pad_out_;
};

// ---------------------------------------------------------------------------
// Krylov propagation, y = exp(-i t A) v for Hermitian matrix-free A

inline Vec krylov_propagate(const std::function<void(const Vec&, Vec&)>& matvec, const Vec& v,
                            double t, int krylov_dim = 20, double tol = 1e-12,
                            bool* substepped = nullptr, int depth = 0) {
    require(depth < 40, "krylov propagation failed to converge while substepping");
    double vnorm = v.norm();
    if (vnorm == 0.0 || t == 0.0) return v;
    auto n = v.size();
    int m_max = std::min<int>(krylov_dim, static_cast<int>(n));

    std::vector<Vec> basis;
    basis.reserve(static_cast<std::size_t>(m_max));
    basis.push_back(v / vnorm);
    RVec alpha = RVec::Zero(m_max), beta = RVec::Zero(m_max);
    Vec w(n);
    int m = 0;
    bool happy = false;
    for (int j = 0; j < m_max; ++j) {
        matvec(basis[static_cast<std::size_t>(j)], w);
        cxd aj = basis[static_cast<std::size_t>(j)].dot(w);
        alpha[j] = aj.real();
        w -= aj * basis[static_cast<std::size_t>(j)];
        if (j > 0) w -= cxd(beta[j - 1], 0.0) * basis[static_cast<std::size_t>(j - 1)];
        for (int i = 0; i <= j; ++i)  // one full reorthogonalization pass
            w -= basis[static_cast<std::size_t>(i)].dot(w) * basis[static_cast<std::size_t>(i)];
        m = j + 1;
        double b = w.norm();
        if (b <= 1e-13 * (1.0 + std::abs(alpha[j]))) {
            happy = true;  // invariant subspace: the small exponential is exact
            break;
        }
        if (j + 1 < m_max) {
            beta[j] = b;
            basis.push_back(w / b);
        }
    }

    RMat tm = RMat::Zero(m, m);
    for (int j = 0; j < m; ++j) {
        tm(j, j) = alpha[j];
        if (j + 1 < m) tm(j, j + 1) = tm(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<RMat> es(tm);
    Vec small = Vec::Zero(m);
    for (int l = 0; l < m; ++l) {
        cxd phase = std::exp(-iu * t * es.eigenvalues()[l]);
        for (int j = 0; j < m; ++j)
            small[j] += es.eigenvectors()(j, l) * phase * es.eigenvectors()(0, l);
    }

    if (!happy && std::abs(small[m - 1]) > tol) {
        if (substepped) *substepped = true;
        Vec half = krylov_propagate(matvec, v, 0.5 * t, krylov_dim, tol, substepped, depth + 1);
        return krylov_propagate(matvec, half, 0.5 * t, krylov_dim, tol, substepped, depth + 1);
    }

    Vec out = Vec::Zero(n);
    for (int j = 0; j < m; ++j) out += small[j] * basis[static_cast<std::size_t>(j)];
    return vnorm * out;
}

struct ExactEvolveOptions {
    std::size_t store_stride = 1;
    int krylov_dim = 20;
    double krylov_tol = 1e-12;
};

struct ExactEvolution {
    FockBasisPtr basis;
    std::vector<double> times;   // every step
    std::vector<double> norms;   // every step
    std::vector<std::size_t> state_steps;
    std::vector<FockVector> states;    // stored samples
    std::vector<double> energies;      // at stored samples
    bool substepped = false;

    const FockVector& final_state() const { return states.back(); }
};

inline ExactEvolution evolve_exact(const FockVector& psi0, ExactHamiltonian& hn, double t_final,
                                   double dt = 1e-2, const ExactEvolveOptions& opts = {}) {
    require(psi0.basis && psi0.basis->cap() == hn.basis()->cap() &&
                psi0.basis->modes() == hn.basis()->modes(),
            "evolve_exact: state is not on the Hamiltonian's sector");
    check_fock_normalized(psi0, "evolve_exact");
    require(dt > 0.0, "evolve_exact: dt must be positive");
    require(opts.store_stride >= 1, "evolve_exact: store_stride must be at least 1");
    auto nsteps = static_cast<long long>(std::llround(t_final / dt));
    require(nsteps >= 0 && std::abs(nsteps * dt - t_final) <= 1e-9 * (1.0 + t_final),
            "evolve_exact: dt must divide t_final");

    auto matvec = [&hn](const Vec& x, Vec& y) { hn.apply(x, y); };
    ExactEvolution ev;
    ev.basis = psi0.basis;
    Vec psi = psi0.coeffs;

    auto record = [&](long long step) {
        ev.times.push_back(step * dt);
        ev.norms.push_back(psi.norm());
        if (step % static_cast<long long>(opts.store_stride) == 0 || step == nsteps) {
            ev.state_steps.push_back(static_cast<std::size_t>(step));
            ev.states.push_back(FockVector{psi0.basis, psi});
            ev.energies.push_back(hn.energy(psi));
        }
    };
    record(0);
    for (long long i = 0; i < nsteps; ++i) {
        psi = krylov_propagate(matvec, psi, dt, opts.krylov_dim, opts.krylov_tol,
                               &ev.substepped);
        record(i + 1);
    }
    return ev;
}

// ---------------------------------------------------------------------------
// excitation-vector evolution under the quadratic Hamiltonian

struct FockEvolveOptions {
    std::size_t store_stride = 1;
    double leakage_abort = 1e-3;
    std::size_t memory_cap = fock_default_cap;
};

struct FockEvolution {
    FockBasisPtr basis;
    std::vector<double> times;    // every step
    std::vector<double> norms;    // every step
    std::vector<double> leakage;  // cumulative truncation leakage, every step
    std::vector<std::size_t> state_steps;
    std::vector<FockVector> states;
    bool floored_lookup = false;

    const FockVector& final_state() const { return states.back(); }
};

inline FockEvolution evolve_fock(const FockVector& phi0, const HartreeTrajectory& traj,
                                 double dt, const FockEvolveOptions& opts = {}) {
    require(phi0.basis && phi0.basis->cap().kind == FockCap::Kind::max_total,
            "evolve_fock expects an excitation vector on a max_total basis");
    require(phi0.basis->modes() == traj.grid.modes, "evolve_fock: grid/basis mode mismatch");
    check_fock_normalized(phi0, "evolve_fock");
    require(dt > 0.0, "evolve_fock: dt must be positive");
    require(opts.store_stride >= 1, "evolve_fock: store_stride must be at least 1");
    double t_final = traj.times.back();
    auto nsteps = static_cast<long long>(std::llround(t_final / dt));
    require(std::abs(nsteps * dt - t_final) <= 1e-9 * (1.0 + t_final),
            "evolve_fock: dt must divide the trajectory span");

    bool pairing = traj.wN.values.cwiseAbs().maxCoeff() > 0.0;
    QuadraticApplier applier(phi0.basis, pairing, opts.memory_cap);
    const Mat lap = laplacian_operator(traj.grid).entries;

    FockEvolution ev;
    ev.basis = phi0.basis;
    Vec phi = phi0.coeffs;
    double leak_total = 0.0;

    std::deque<std::pair<std::size_t, std::shared_ptr<const BogoliubovIngredients>>> cache;
    auto ingredients_at = [&](double t) {
        bool floored = false;
        std::size_t idx = traj.sample_index(t, true, &floored);
        if (floored) ev.floored_lookup = true;
        for (auto& e : cache)
            if (e.first == idx) return e.second;
        cache.emplace_back(idx, std::make_shared<BogoliubovIngredients>(
                                    detail::assemble_ingredients(traj.states[idx], traj.wN, lap)));
        if (cache.size() > 3) cache.pop_front();
        return cache.back().second;
    };

    auto record = [&](long long step) {
        ev.times.push_back(step * dt);
        ev.norms.push_back(phi.norm());
        ev.leakage.push_back(leak_total);
        if (step % static_cast<long long>(opts.store_stride) == 0 || step == nsteps) {
            ev.state_steps.push_back(static_cast<std::size_t>(step));
            ev.states.push_back(FockVector{phi0.basis, phi});
        }
    };
    record(0);

    Vec hphi, y;
    std::vector<Vec> k(4);
    for (long long i = 0; i < nsteps; ++i) {
        double t = i * dt;
        double step_leak = 0.0;
        const double stage_time[4] = {t, t + 0.5 * dt, t + 0.5 * dt, t + dt};
        const double stage_weight[4] = {1.0, 2.0, 2.0, 1.0};
        for (int s = 0; s < 4; ++s) {
            auto ing = ingredients_at(stage_time[s]);
            const Vec& arg = s == 0 ? phi
                           : s == 3 ? (y = phi + dt * k[2])
                                    : (y = phi + 0.5 * dt * k[s - 1]);
            double l2 = applier.apply(ing->h.entries, pairing ? ing->K2 : Mat(), arg, hphi);
            k[static_cast<std::size_t>(s)] = -iu * hphi;
            step_leak += stage_weight[s] * std::sqrt(l2);
        }
        phi += (dt / 6.0) * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3]);
        leak_total += (dt / 6.0) * step_leak;
        if (leak_total > opts.leakage_abort)
            throw std::runtime_error(
                "evolve_fock: cumulative truncation leakage " + fmt_double(leak_total) +
                " at t = " + fmt_double(t + dt) +
                " exceeds " + fmt_double(opts.leakage_abort) +
                "; raise n_max or shorten the run");
        record(i + 1);
    }
    return ev;
}

// Gaussian state with gamma = sinh^2(S), alpha = sinh(S)cosh(S): the unitary
// exp(1/2 sum S_jk (a*_j a*_k - a_j a_k)) |0>, realized as exp(-i H) with the
// quadratic H built from h = 0, K2 = iS.
inline FockVector squeezed_fock_state(const RMat& s, FockBasisPtr basis,
                                      std::size_t memory_cap = fock_default_cap) {
    require(basis && basis->cap().kind == FockCap::Kind::max_total,
            "squeezed_fock_state needs a max_total basis");
    require(s.rows() == basis->modes() && s.cols() == basis->modes(),
            "squeezed_fock_state: matrix/basis mode mismatch");
    require((s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
            "squeezed_fock_state: S must be symmetric");
    FockVector vac = fock_vacuum(basis);
    if (s.cwiseAbs().maxCoeff() == 0.0) return vac;

    QuadraticApplier applier(basis, true, memory_cap);
    Mat h0 = Mat::Zero(basis->modes(), basis->modes());
    Mat k2 = iu * s.cast<cxd>();
    auto matvec = [&](const Vec& x, Vec& y) { applier.apply(h0, k2, x, y); };
    Vec out = krylov_propagate(matvec, vac.coeffs, 1.0, 30, 1e-13);
    return {std::move(basis), std::move(out)};
}

// ---------------------------------------------------------------------------
// binary snapshots: "BGFV", version, modes, cap kind, cap value, count,
// then count * dimension little-endian complex64 (float re, float im) pairs

inline void save_fock_vectors(const std::vector<FockVector>& seq, std::ostream& os) {
    require(!seq.empty(), "save_fock_vectors: nothing to write");
    const FockBasis& b = *seq.front().basis;
    for (const FockVector& v : seq)
        require(v.basis->modes() == b.modes() && v.basis->cap() == b.cap(),
                "save_fock_vectors: mixed bases in one sequence");

    auto put = [&os](const void* p, std::size_t n) {
        os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    };
    put("BGFV", 4);
    std::uint32_t version = 1;
    put(&version, 4);
    std::int32_t modes = b.modes();
    put(&modes, 4);
    std::uint8_t kind = b.cap().kind == FockCap::Kind::max_total ? 0 : 1;
    put(&kind, 1);
    std::int32_t capval = b.cap().value;
    put(&capval, 4);
    std::uint64_t count = seq.size();
    put(&count, 8);
    for (const FockVector& v : seq)
        for (Eigen::Index i = 0; i < v.coeffs.size(); ++i) {
            float re = static_cast<float>(v.coeffs[i].real());
            float im = static_cast<float>(v.coeffs[i].imag());
            put(&re, 4);
            put(&im, 4);
        }
}

inline std::vector<FockVector> load_fock_vectors(std::istream& is,
                                                 std::size_t memory_cap = fock_default_cap) {
    auto get = [&is](void* p, std::size_t n) {
        is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        require(static_cast<std::size_t>(is.gcount()) == n,
                "fock vector dump is truncated");
    };
    char magic[4];
    get(magic, 4);
    require(std::memcmp(magic, "BGFV", 4) == 0, "not a fock vector dump (bad magic)");
    std::uint32_t version = 0;
    get(&version, 4);
    require(version == 1, "unsupported fock vector dump version");
    std::int32_t modes = 0;
    get(&modes, 4);
    std::uint8_t kind = 0;
    get(&kind, 1);
    require(kind <= 1, "fock vector dump has a bad cap kind");
    std::int32_t capval = 0;
    get(&capval, 4);
    std::uint64_t count = 0;
    get(&count, 8);

    FockBasisPtr basis = build_basis(
        modes, kind == 0 ? FockCap::up_to(capval) : FockCap::exactly(capval), memory_cap);
    std::vector<FockVector> out;
    out.reserve(count);
    for (std::uint64_t v = 0; v < count; ++v) {
        Vec c(static_cast<Eigen::Index>(basis->dimension()));
        for (Eigen::Index i = 0; i < c.size(); ++i) {
            float re = 0.0f, im = 0.0f;
            get(&re, 4);
            get(&im, 4);
            c[i] = cxd(re, im);
        }
        out.push_back(FockVector{basis, std::move(c)});
    }
    return out;
}

}  // namespace bogolab
