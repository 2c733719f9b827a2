use nalgebra::DVector;

use super::AdjointCurve;
use crate::error::{check_dim, Result};
use crate::flows::rk4_path;
use crate::system::ControlSystem;
use crate::trajectory::Trajectory;

/// Integrates `ṗ = −p₀∇ₓF − (∂f/∂x)ᵀp` backward from `p(b) = p_b` on the
/// trajectory grid. Off-node states come from the trajectory's Hermite
/// interpolant; `p₀` is constant by construction.
pub fn adjoint_flow(sys: &ControlSystem, traj: &Trajectory, p0: f64, p_b: &DVector<f64>) -> Result<AdjointCurve> {
    check_dim(sys.state_dim(), traj.dim())?;
    check_dim(sys.state_dim(), p_b.len())?;
    let u = traj.control();
    let mut grid: Vec<f64> = traj.grid().to_vec();
    grid.reverse();
    let rhs = |piece: f64, t: f64, p: &DVector<f64>| {
        let x = traj.state_at(t);
        let w = u.value_at(piece);
        let mut dp = -(sys.state_jacobian(&x, w).transpose() * p);
        if p0 != 0.0 {
            dp -= sys.cost_gradient(&x, w) * p0;
        }
        dp
    };
    let mut sigma = rk4_path(rhs, &grid, p_b.clone())?;
    sigma.reverse();
    Ok(AdjointCurve {
        grid: traj.grid().to_vec(),
        sigma0: p0,
        sigma,
    })
}
