#include "sdeis/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "json_util.hpp"

namespace sdeis {

Grid::Grid(Vec lo_, Vec hi_, std::vector<std::size_t> n_) : lo(std::move(lo_)), hi(std::move(hi_)), n(std::move(n_))
{
    require_dim(static_cast<std::size_t>(lo.size()), n.size(), "grid lo");
    require_dim(static_cast<std::size_t>(hi.size()), n.size(), "grid hi");
    for (std::size_t a = 0; a < n.size(); ++a) {
        if (n[a] < 3)
            throw InputError("grid: need at least 3 nodes per axis");
        if (!(lo[static_cast<Eigen::Index>(a)] < hi[static_cast<Eigen::Index>(a)]))
            throw InputError("grid: lo must be < hi");
    }
}

Grid Grid::with_spacing(const Box& box, const std::vector<double>& h)
{
    const std::size_t d = box.dim();
    if (h.size() != 1 && h.size() != d)
        throw InputError("grid: spacing needs one entry or one per axis");
    std::vector<std::size_t> n(d);
    for (std::size_t a = 0; a < d; ++a) {
        const double ha = h.size() == 1 ? h[0] : h[a];
        if (!(ha > 0.0))
            throw InputError("grid: spacing must be > 0");
        const double len = box.hi[static_cast<Eigen::Index>(a)] - box.lo[static_cast<Eigen::Index>(a)];
        const double cells = std::round(len / ha);
        if (cells < 2.0 || std::abs(cells * ha - len) > 1e-9 * len)
            throw InputError("grid: spacing " + std::to_string(ha) + " does not divide the domain side exactly");
        n[a] = static_cast<std::size_t>(cells) + 1;
    }
    return Grid(box.lo, box.hi, std::move(n));
}

std::size_t Grid::size() const
{
    std::size_t s = 1;
    for (auto k : n)
        s *= k;
    return s;
}

double Grid::spacing(std::size_t a) const
{
    const auto i = static_cast<Eigen::Index>(a);
    return (hi[i] - lo[i]) / static_cast<double>(n[a] - 1);
}

double Grid::coord(std::size_t a, std::size_t i) const
{
    const auto k = static_cast<Eigen::Index>(a);
    if (i + 1 == n[a])
        return hi[k];
    return lo[k] + static_cast<double>(i) * spacing(a);
}

std::size_t Grid::stride(std::size_t a) const
{
    std::size_t s = 1;
    for (std::size_t b = a + 1; b < n.size(); ++b)
        s *= n[b];
    return s;
}

std::vector<std::size_t> Grid::unflatten(std::size_t flat) const
{
    std::vector<std::size_t> idx(n.size());
    for (std::size_t a = n.size(); a-- > 0;) {
        idx[a] = flat % n[a];
        flat /= n[a];
    }
    return idx;
}

Vec Grid::node(std::size_t flat) const
{
    auto idx = unflatten(flat);
    Vec x(static_cast<Eigen::Index>(n.size()));
    for (std::size_t a = 0; a < n.size(); ++a)
        x[static_cast<Eigen::Index>(a)] = coord(a, idx[a]);
    return x;
}

void HjbProblem::validate() const
{
    const std::size_t d = potential.dim();
    if (d < 1)
        throw InputError("hjb: potential not set");
    if (!(beta > 0.0))
        throw InputError("hjb: beta must be > 0");
    require_dim(domain.dim(), d, "hjb domain");
    require_dim(target.dim(), d, "hjb target");
    if (h.empty())
        throw InputError("hjb: grid spacing not set");
}

namespace {

struct Assembly
{
    Grid grid;
    std::vector<std::uint8_t> dirichlet;
    std::vector<std::uint8_t> in_target;
};

bool in_box_tol(const Box& b, const Vec& x, double tol)
{
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] < b.lo[i] - tol || x[i] > b.hi[i] + tol)
            return false;
    return true;
}

Assembly classify(const HjbProblem& p)
{
    Assembly as{Grid::with_spacing(p.domain, p.h), {}, {}};
    const auto& g = as.grid;
    const std::size_t N = g.size();
    double hmin = g.spacing(0);
    for (std::size_t a = 1; a < g.dim(); ++a)
        hmin = std::min(hmin, g.spacing(a));
    as.dirichlet.assign(N, 0);
    as.in_target.assign(N, 0);
    for (std::size_t k = 0; k < N; ++k) {
        auto idx = g.unflatten(k);
        bool edge = false;
        for (std::size_t a = 0; a < g.dim(); ++a)
            edge = edge || idx[a] == 0 || idx[a] + 1 == g.n[a];
        bool tgt = in_box_tol(p.target, g.node(k), 1e-9 * hmin);
        as.in_target[k] = tgt;
        as.dirichlet[k] = edge || tgt;
    }
    return as;
}

struct Stencil
{
    double diag = 0.0;
    std::vector<double> lower, upper;  // per axis
};

Stencil stencil_at(const HjbProblem& p, const Grid& g, const Vec& x, DriftScheme scheme, Vec& grad)
{
    const std::size_t d = g.dim();
    const double A = 1.0 / p.beta;
    Stencil s;
    s.lower.resize(d);
    s.upper.resize(d);
    p.potential.gradient(as_span(x), as_span(grad));
    for (std::size_t a = 0; a < d; ++a) {
        const double h = g.spacing(a);
        const double diff = A / (h * h);
        const double b = -grad[static_cast<Eigen::Index>(a)];
        if (scheme == DriftScheme::Central) {
            s.lower[a] = diff - b / (2.0 * h);
            s.upper[a] = diff + b / (2.0 * h);
            s.diag -= 2.0 * diff;
        } else if (b > 0.0) {
            s.lower[a] = diff;
            s.upper[a] = diff + b / h;
            s.diag -= 2.0 * diff + b / h;
        } else {
            s.lower[a] = diff - b / h;
            s.upper[a] = diff;
            s.diag -= 2.0 * diff - b / h;
        }
    }
    s.diag -= p.running_cost == RunningCost::One ? 1.0 : 0.0;
    return s;
}

// e^{-g} on every Dirichlet node; g is identically zero for the supported tags.
constexpr double kBoundaryValue = 1.0;

Vec solve_tridiagonal(const HjbProblem& p, const Assembly& as, DriftScheme scheme)
{
    const auto& g = as.grid;
    const std::size_t N = g.size();
    std::vector<double> lo(N, 0.0), di(N, 1.0), up(N, 0.0), rhs(N, kBoundaryValue);
    Vec grad(1);
    for (std::size_t k = 0; k < N; ++k) {
        if (as.dirichlet[k])
            continue;
        auto s = stencil_at(p, g, g.node(k), scheme, grad);
        lo[k] = s.lower[0];
        up[k] = s.upper[0];
        di[k] = s.diag;
        rhs[k] = 0.0;
    }
    // Thomas algorithm
    std::vector<double> c(N), r(N);
    double piv = di[0];
    if (piv == 0.0)
        throw SolverError("hjb 1d: singular tridiagonal system");
    c[0] = up[0] / piv;
    r[0] = rhs[0] / piv;
    for (std::size_t k = 1; k < N; ++k) {
        piv = di[k] - lo[k] * c[k - 1];
        if (piv == 0.0 || !std::isfinite(piv))
            throw SolverError("hjb 1d: singular tridiagonal system at node " + std::to_string(k));
        c[k] = up[k] / piv;
        r[k] = (rhs[k] - lo[k] * r[k - 1]) / piv;
    }
    Vec psi(static_cast<Eigen::Index>(N));
    psi[static_cast<Eigen::Index>(N - 1)] = r[N - 1];
    for (std::size_t k = N - 1; k-- > 0;)
        psi[static_cast<Eigen::Index>(k)] = r[k] - c[k] * psi[static_cast<Eigen::Index>(k + 1)];
    return psi;
}

Vec solve_sparse(const HjbProblem& p, const Assembly& as, DriftScheme scheme)
{
    const auto& g = as.grid;
    const std::size_t N = g.size();
    const std::size_t d = g.dim();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(N * (2 * d + 1));
    Vec rhs = Vec::Constant(static_cast<Eigen::Index>(N), kBoundaryValue);
    Vec grad(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < N; ++k) {
        const auto row = static_cast<int>(k);
        if (as.dirichlet[k]) {
            trip.emplace_back(row, row, 1.0);
            continue;
        }
        auto s = stencil_at(p, g, g.node(k), scheme, grad);
        trip.emplace_back(row, row, s.diag);
        for (std::size_t a = 0; a < d; ++a) {
            const auto st = static_cast<int>(g.stride(a));
            trip.emplace_back(row, row - st, s.lower[a]);
            trip.emplace_back(row, row + st, s.upper[a]);
        }
        rhs[row] = 0.0;
    }
    Eigen::SparseMatrix<double> M(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    M.setFromTriplets(trip.begin(), trip.end());
    M.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success)
        throw SolverError("hjb: sparse factorization failed: " + lu.lastErrorMessage());
    Vec psi = lu.solve(rhs);
    if (lu.info() != Eigen::Success)
        throw SolverError("hjb: sparse solve failed");
    // one step of iterative refinement
    Vec corr = lu.solve(rhs - M * psi);
    if (lu.info() == Eigen::Success && corr.allFinite())
        psi += corr;
    double res = (M * psi - rhs).lpNorm<Eigen::Infinity>() / std::max(1.0, psi.lpNorm<Eigen::Infinity>());
    if (!(res <= 1e-10 * std::max(1.0, M.coeffs().cwiseAbs().maxCoeff())))
        throw SolverError("hjb: sparse solve residual " + std::to_string(res) + " too large");
    return psi;
}

double residual(const HjbProblem& p, const Assembly& as, DriftScheme scheme, const Vec& psi)
{
    const auto& g = as.grid;
    const std::size_t d = g.dim();
    Vec grad(static_cast<Eigen::Index>(d));
    double r = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (as.dirichlet[k])
            continue;
        auto s = stencil_at(p, g, g.node(k), scheme, grad);
        const auto kk = static_cast<Eigen::Index>(k);
        double v = s.diag * psi[kk];
        for (std::size_t a = 0; a < d; ++a) {
            const auto st = static_cast<Eigen::Index>(g.stride(a));
            v += s.lower[a] * psi[kk - st] + s.upper[a] * psi[kk + st];
        }
        r = std::max(r, std::abs(v));
    }
    return r / psi.lpNorm<Eigen::Infinity>();
}

// Roundoff allowance on the upper bound; the LU solve of the 2D system lands a few ulps above 1 near the target.
constexpr double kMaxPrincipleSlack = 1e-10;

bool satisfies_max_principle(const Vec& psi)
{
    for (Eigen::Index i = 0; i < psi.size(); ++i)
        if (!(psi[i] > 0.0) || psi[i] > kBoundaryValue * (1.0 + kMaxPrincipleSlack))
            return false;
    return true;
}

double partial(const Grid& g, const Vec& psi, const std::vector<std::uint8_t>& in_target, std::size_t k,
               std::size_t a)
{
    const auto idx = g.unflatten(k);
    const std::size_t i = idx[a];
    const std::size_t n = g.n[a];
    const auto st = static_cast<std::ptrdiff_t>(g.stride(a));
    const double h = g.spacing(a);
    auto at = [&](std::ptrdiff_t off) { return psi[static_cast<Eigen::Index>(static_cast<std::ptrdiff_t>(k) + off * st)]; };
    bool has_l = i > 0, has_r = i + 1 < n;

    auto backward = [&] {
        if (i >= 2)
            return (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h);
        return (at(0) - at(-1)) / h;
    };
    auto forward = [&] {
        if (i + 2 < n)
            return (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        return (at(1) - at(0)) / h;
    };

    if (in_target[k]) {
        // Differences across the target boundary would straddle the kink of psi;
        // take them from the solution side.
        bool sl = has_l && !in_target[k - static_cast<std::size_t>(st)];
        bool sr = has_r && !in_target[k + static_cast<std::size_t>(st)];
        if (sl && !sr)
            return backward();
        if (sr && !sl)
            return forward();
    }
    if (has_l && has_r)
        return (at(1) - at(-1)) / (2.0 * h);
    return has_l ? backward() : forward();
}

HjbSolution finish(const HjbProblem& p, Assembly as, Vec psi, DriftScheme scheme, bool fallback)
{
    HjbSolution sol;
    sol.residual_norm = residual(p, as, scheme, psi);
    const std::size_t N = as.grid.size();
    const std::size_t d = as.grid.dim();
    const double sigma = std::sqrt(2.0 / p.beta);
    sol.phi = (-psi.array().log()).matrix();
    sol.ustar.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < N; ++k)
        for (std::size_t a = 0; a < d; ++a)
            sol.ustar(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a)) =
                sigma * partial(as.grid, psi, as.in_target, k, a) / psi[static_cast<Eigen::Index>(k)];
    sol.grid = std::move(as.grid);
    sol.dirichlet = std::move(as.dirichlet);
    sol.psi = std::move(psi);
    sol.beta = p.beta;
    sol.scheme = scheme;
    sol.upwind_fallback_used = fallback;
    return sol;
}

std::string psi_range_message(const Vec& psi)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "min psi %.3g, max psi - 1 = %.3g", psi.minCoeff(), psi.maxCoeff() - 1.0);
    return std::string("hjb: maximum principle violated even with upwinding (") + buf +
           "); refine the grid spacing h";
}

template <class SolveFn>
HjbSolution solve_with_fallback(const HjbProblem& p, SolveFn&& solve)
{
    p.validate();
    Assembly as = classify(p);
    Vec psi = solve(p, as, p.scheme);
    bool fallback = false;
    if (!satisfies_max_principle(psi)) {
        if (p.scheme == DriftScheme::Upwind || !p.upwind_fallback)
            throw MaximumPrincipleViolation("hjb: discrete maximum principle violated; refine the grid spacing h");
        psi = solve(p, as, DriftScheme::Upwind);
        fallback = true;
        if (!satisfies_max_principle(psi))
            throw MaximumPrincipleViolation(psi_range_message(psi));
    }
    return finish(p, std::move(as), std::move(psi), fallback ? DriftScheme::Upwind : p.scheme, fallback);
}

}  // namespace

HjbSolution solve_hjb_1d(const HjbProblem& p)
{
    if (p.potential.dim() != 1)
        throw InputError("solve_hjb_1d: problem is not one-dimensional");
    return solve_with_fallback(p, solve_tridiagonal);
}

HjbSolution solve_hjb_2d(const HjbProblem& p)
{
    if (p.potential.dim() != 2)
        throw InputError("solve_hjb_2d: problem is not two-dimensional");
    return solve_with_fallback(p, solve_sparse);
}

HjbSolution solve_hjb(const HjbProblem& p)
{
    switch (p.potential.dim()) {
    case 1:
        return solve_hjb_1d(p);
    case 2:
        return solve_hjb_2d(p);
    default:
        throw UnsupportedOperation("hjb: only 1D and 2D grids are supported");
    }
}

// ---------------------------------------------------------------------------

namespace {

struct Cell
{
    std::size_t i;
    double t;
};

Cell locate(const Grid& g, std::size_t a, double x)
{
    const double lo = g.coord(a, 0), hi = g.coord(a, g.n[a] - 1);
    x = std::clamp(x, lo, hi);
    const double h = g.spacing(a);
    auto i = static_cast<std::size_t>(std::clamp(std::floor((x - lo) / h), 0.0, static_cast<double>(g.n[a] - 2)));
    if (i + 2 < g.n[a] && x >= g.coord(a, i + 1))
        ++i;
    if (i > 0 && x < g.coord(a, i))
        --i;
    double t = (x - g.coord(a, i)) / (g.coord(a, i + 1) - g.coord(a, i));
    return {i, std::clamp(t, 0.0, 1.0)};
}

template <class Value>
void multilinear(const Grid& g, ConstSpan x, std::size_t width, Value&& value, Span out)
{
    const std::size_t d = g.dim();
    require_dim(x.size(), d, "interpolate_control");
    Cell cells[8];
    if (d > 3)
        throw UnsupportedOperation("interpolation supports at most 3 dimensions");
    for (std::size_t a = 0; a < d; ++a)
        cells[a] = locate(g, a, x[a]);
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(width), 0.0);
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
        double w = 1.0;
        std::size_t flat = 0;
        for (std::size_t a = 0; a < d; ++a) {
            const bool up = (corner >> a) & 1u;
            w *= up ? cells[a].t : 1.0 - cells[a].t;
            flat += (cells[a].i + (up ? 1 : 0)) * g.stride(a);
        }
        if (w == 0.0)
            continue;
        for (std::size_t c = 0; c < width; ++c)
            out[c] += w * value(flat, c);
    }
}

}  // namespace

void interpolate_control(const HjbSolution& sol, ConstSpan x, Span out)
{
    multilinear(sol.grid, x, sol.dim(),
                [&](std::size_t k, std::size_t c) {
                    return sol.ustar(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
                },
                out);
}

Vec interpolate_control(const HjbSolution& sol, const Vec& x)
{
    Vec out(static_cast<Eigen::Index>(sol.dim()));
    interpolate_control(sol, as_span(x), as_span(out));
    return out;
}

double HjbSolution::psi_at(ConstSpan x) const
{
    double v = 0.0;
    multilinear(grid, x, 1, [&](std::size_t k, std::size_t) { return psi[static_cast<Eigen::Index>(k)]; },
                Span(&v, 1));
    return v;
}

// ---------------------------------------------------------------------------

void write_solution_csv(const HjbSolution& sol, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f)
        throw InputError("cannot open " + path.string() + " for writing");
    const std::size_t d = sol.dim();
    std::fprintf(f, "# schema_version=1 beta=%.17g residual=%.17g scheme=%s\n", sol.beta, sol.residual_norm,
                 sol.scheme == DriftScheme::Central ? "central" : "upwind");
    for (std::size_t a = 1; a <= d; ++a)
        std::fprintf(f, "x_%zu,", a);
    std::fputs("psi,phi", f);
    for (std::size_t a = 1; a <= d; ++a)
        std::fprintf(f, ",u_%zu", a);
    std::fputc('\n', f);
    for (std::size_t k = 0; k < sol.grid.size(); ++k) {
        Vec x = sol.grid.node(k);
        const auto kk = static_cast<Eigen::Index>(k);
        for (Eigen::Index a = 0; a < x.size(); ++a)
            std::fprintf(f, "%.17g,", x[a]);
        std::fprintf(f, "%.17g,%.17g", sol.psi[kk], sol.phi[kk]);
        for (Eigen::Index a = 0; a < x.size(); ++a)
            std::fprintf(f, ",%.17g", sol.ustar(kk, a));
        std::fputc('\n', f);
    }
    if (std::fclose(f) != 0)
        throw InputError("error writing " + path.string());
}

HjbSolution read_solution_csv(const std::filesystem::path& path, double beta)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open reference solution " + path.string());
    std::string line;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::map<std::string, std::string> meta;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') {
            std::stringstream ms(line.substr(1));
            std::string kv;
            while (ms >> kv)
                if (auto eq = kv.find('='); eq != std::string::npos)
                    meta[kv.substr(0, eq)] = kv.substr(eq + 1);
            continue;
        }
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        if (header.empty()) {
            while (std::getline(ss, cell, ','))
                header.push_back(cell);
            continue;
        }
        std::vector<double> row;
        try {
            while (std::getline(ss, cell, ','))
                row.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw InputError("reference solution " + path.string() + ": bad number '" + cell + "'");
        }
        if (row.size() != header.size())
            throw InputError("reference solution " + path.string() + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (header.size() < 4 || (header.size() - 2) % 2 != 0 || rows.empty())
        throw InputError("reference solution " + path.string() + ": unexpected layout");
    const std::size_t d = (header.size() - 2) / 2;

    std::vector<std::set<double>> axes(d);
    for (const auto& r : rows)
        for (std::size_t a = 0; a < d; ++a)
            axes[a].insert(r[a]);
    Vec lo(static_cast<Eigen::Index>(d)), hi(static_cast<Eigen::Index>(d));
    std::vector<std::size_t> n(d);
    for (std::size_t a = 0; a < d; ++a) {
        lo[static_cast<Eigen::Index>(a)] = *axes[a].begin();
        hi[static_cast<Eigen::Index>(a)] = *axes[a].rbegin();
        n[a] = axes[a].size();
    }
    HjbSolution sol;
    sol.grid = Grid(lo, hi, n);
    if (sol.grid.size() != rows.size())
        throw InputError("reference solution " + path.string() + ": not a full tensor grid");
    const auto N = static_cast<Eigen::Index>(rows.size());
    sol.psi.resize(N);
    sol.phi.resize(N);
    sol.ustar.resize(N, static_cast<Eigen::Index>(d));
    for (Eigen::Index k = 0; k < N; ++k) {
        const auto& r = rows[static_cast<std::size_t>(k)];
        sol.psi[k] = r[d];
        sol.phi[k] = r[d + 1];
        for (std::size_t a = 0; a < d; ++a)
            sol.ustar(k, static_cast<Eigen::Index>(a)) = r[d + 2 + a];
    }
    try {
        sol.beta = meta.contains("beta") ? std::stod(meta["beta"]) : beta;
        sol.residual_norm = meta.contains("residual") ? std::stod(meta["residual"]) : 0.0;
    } catch (const std::exception&) {
        throw InputError("reference solution " + path.string() + ": malformed header");
    }
    sol.scheme = meta["scheme"] == "upwind" ? DriftScheme::Upwind : DriftScheme::Central;
    return sol;
}

// ---------------------------------------------------------------------------

ReferenceControl::ReferenceControl(std::shared_ptr<const HjbSolution> sol) : sol_(std::move(sol))
{
    if (!sol_)
        throw InputError("reference control: null solution");
}

void ReferenceControl::eval(ConstSpan x, Span out, Scratch&) const { interpolate_control(*sol_, x, out); }

nlohmann::json ReferenceControl::to_json() const
{
    std::vector<double> u(sol_->ustar.data(), sol_->ustar.data() + sol_->ustar.size());
    return {{"kind", "hjb_reference"},
            {"grid", {{"lo", detail::vec_to_json(sol_->grid.lo)}, {"hi", detail::vec_to_json(sol_->grid.hi)}, {"n", sol_->grid.n}}},
            {"ustar_colmajor", u}};
}

std::shared_ptr<ReferenceControl> ReferenceControl::from_json(const nlohmann::json& j)
{
    const auto& jg = j.at("grid");
    auto sol = std::make_shared<HjbSolution>();
    sol->grid = Grid(detail::json_to_vec(jg.at("lo")), detail::json_to_vec(jg.at("hi")),
                     jg.at("n").get<std::vector<std::size_t>>());
    auto u = j.at("ustar_colmajor").get<std::vector<double>>();
    const auto N = static_cast<Eigen::Index>(sol->grid.size());
    const auto d = static_cast<Eigen::Index>(sol->grid.dim());
    if (static_cast<Eigen::Index>(u.size()) != N * d)
        throw InputError("reference control json: ustar size does not match grid");
    sol->ustar = Eigen::Map<const Mat>(u.data(), N, d);
    return std::make_shared<ReferenceControl>(std::move(sol));
}

}  // namespace sdeis
