#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "sdeis/control.hpp"
#include "sdeis/dynamics.hpp"
#include "sdeis/potential.hpp"
#include "sdeis/types.hpp"

namespace sdeis {

/// Uniform tensor grid; flat index runs with the first axis slowest.
struct Grid
{
    Vec lo;
    Vec hi;
    std::vector<std::size_t> n;  // nodes per axis

    Grid() = default;
    Grid(Vec lo_, Vec hi_, std::vector<std::size_t> n_);

    /// Grid over `box` with spacing h per axis; h must divide each side.
    static Grid with_spacing(const Box& box, const std::vector<double>& h);

    std::size_t dim() const { return n.size(); }
    std::size_t size() const;
    double spacing(std::size_t axis) const;
    double coord(std::size_t axis, std::size_t i) const;
    std::size_t stride(std::size_t axis) const;
    std::vector<std::size_t> unflatten(std::size_t flat) const;
    Vec node(std::size_t flat) const;
};

enum class DriftScheme { Central, Upwind };

struct HjbProblem
{
    PotentialSpec potential;
    double beta = 1.0;
    Box domain;
    Box target;
    RunningCost running_cost = RunningCost::One;
    TerminalCost terminal_cost = TerminalCost::Zero;
    std::vector<double> h;  // per axis; a single entry applies to all axes
    DriftScheme scheme = DriftScheme::Central;
    /// Retry with upwinding when the central solution violates the maximum principle.
    bool upwind_fallback = true;

    void validate() const;
};

struct HjbSolution
{
    Grid grid;
    Vec psi;
    Vec phi;
    Mat ustar;  // size() x d
    double beta = 1.0;
    double residual_norm = 0.0;
    DriftScheme scheme = DriftScheme::Central;
    bool upwind_fallback_used = false;
    std::vector<std::uint8_t> dirichlet;  // 1 on target nodes and domain edges

    std::size_t dim() const { return grid.dim(); }
    double psi_at(ConstSpan x) const;
};

HjbSolution solve_hjb_1d(const HjbProblem& p);
HjbSolution solve_hjb_2d(const HjbProblem& p);
/// Dispatches on the problem dimension.
HjbSolution solve_hjb(const HjbProblem& p);

/// Multilinear interpolation of u*; points outside the grid are clamped onto it.
void interpolate_control(const HjbSolution& sol, ConstSpan x, Span out);
Vec interpolate_control(const HjbSolution& sol, const Vec& x);

/// CSV with columns x_1..x_d, psi, phi, u_1..u_d. Values are written with 17 significant
/// digits so a read-back is bit-exact.
void write_solution_csv(const HjbSolution& sol, const std::filesystem::path& path);
/// `beta` is only used when the file header does not record one.
HjbSolution read_solution_csv(const std::filesystem::path& path, double beta = 1.0);

/// Interpolated optimal control as a Control.
class ReferenceControl final : public Control
{
  public:
    explicit ReferenceControl(std::shared_ptr<const HjbSolution> sol);

    std::string_view kind() const override { return "hjb_reference"; }
    std::size_t dim() const override { return sol_->dim(); }
    void eval(ConstSpan x, Span out, Scratch& scratch) const override;
    std::unique_ptr<Control> clone() const override { return std::make_unique<ReferenceControl>(*this); }
    nlohmann::json to_json() const override;
    static std::shared_ptr<ReferenceControl> from_json(const nlohmann::json& j);

    const HjbSolution& solution() const { return *sol_; }

  private:
    std::shared_ptr<const HjbSolution> sol_;
};

}  // namespace sdeis
