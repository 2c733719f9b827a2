//! Necessary conditions of optimality: Hamiltonian maximization, the adjoint
//! system, condition checks and extremal classification.

mod adjoint;
mod check;
mod classify;
mod hamiltonian;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{check_dim, Error, Result};
use crate::geometry::cone::span_basis;
use crate::signal::ControlSignal;
use crate::trajectory::{ExtendedTrajectory, Trajectory};

pub use adjoint::adjoint_flow;
pub use check::{check_pmp, PmpOptions, PmpReport, Res3d, Res3e, Tolerances, Verdict};
pub use classify::{classify_extremal, terminal_covector_from_cone, ClassifyOptions, Classification};
pub use hamiltonian::{
    hamiltonian, maximize_hamiltonian, maximize_on_face, ArcLabel, Bound, HamiltonianMax, MaximizeOptions,
};

/// `σ̂ = (σ₀, σ)` on a time grid; `σ₀` is stored once since it is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointCurve {
    pub grid: Vec<f64>,
    pub sigma0: f64,
    pub sigma: Vec<DVector<f64>>,
}

impl AdjointCurve {
    pub fn at_node(&self, i: usize) -> &DVector<f64> {
        &self.sigma[i]
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.sigma[0]
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.sigma.last().expect("nonempty adjoint")
    }

    /// Linear interpolation between nodes.
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let n = self.grid.len();
        if n == 1 {
            return self.sigma[0].clone();
        }
        let i = self.grid.partition_point(|&g| g <= t).clamp(1, n - 1) - 1;
        let w = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        &self.sigma[i] * (1.0 - w) + &self.sigma[i + 1] * w
    }

    /// `σ̂ ↦ λσ̂`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            sigma0: lambda * self.sigma0,
            sigma: self.sigma.iter().map(|s| s * lambda).collect(),
        }
    }

    /// Columns `t,sigma0,p0..p{m-1}`.
    pub fn to_csv(&self) -> String {
        let m = self.sigma[0].len();
        let mut header = vec!["t".to_string(), "sigma0".to_string()];
        header.extend((0..m).map(|i| format!("p{i}")));
        let rows: Vec<Vec<f64>> = self
            .grid
            .iter()
            .zip(&self.sigma)
            .map(|(t, s)| {
                let mut r = vec![*t, self.sigma0];
                r.extend(s.iter());
                r
            })
            .collect();
        csvio::write_table(&header, &rows)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (header, rows) = csvio::read_table(text)?;
        if header.len() < 2 || header[0] != "t" || header[1] != "sigma0" {
            return Err(Error::InvalidArgument("adjoint table must start with t,sigma0".into()));
        }
        let first = rows.first().ok_or(Error::Empty("adjoint table"))?;
        let sigma0 = first[1];
        if rows.iter().any(|r| r[1] != sigma0) {
            return Err(Error::InvalidArgument("sigma0 column is not constant".into()));
        }
        Ok(Self {
            grid: rows.iter().map(|r| r[0]).collect(),
            sigma0,
            sigma: rows.iter().map(|r| DVector::from_column_slice(&r[2..])).collect(),
        })
    }
}

/// A maximal interval on which the extremizing control stays on one face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: f64,
    pub end: f64,
    pub label: ArcLabel,
}

/// A trajectory of the extended system with its adjoint on the same grid.
#[derive(Debug, Clone)]
pub struct Extremal {
    ext: ExtendedTrajectory,
    adjoint: AdjointCurve,
    arcs: Vec<Arc>,
}

impl Extremal {
    pub fn new(ext: ExtendedTrajectory, adjoint: AdjointCurve) -> Result<Self> {
        let grid = ext.trajectory().grid();
        if grid.len() != adjoint.grid.len() || grid.iter().zip(&adjoint.grid).any(|(a, b)| a != b) {
            return Err(Error::GridMismatch(format!(
                "trajectory has {} nodes, adjoint {}",
                grid.len(),
                adjoint.grid.len()
            )));
        }
        check_dim(ext.trajectory().dim() - 1, adjoint.sigma[0].len())?;
        Ok(Self {
            ext,
            adjoint,
            arcs: Vec::new(),
        })
    }

    pub fn with_arcs(mut self, arcs: Vec<Arc>) -> Self {
        self.arcs = arcs;
        self
    }

    pub fn extended(&self) -> &ExtendedTrajectory {
        &self.ext
    }

    /// The trajectory without the cost coordinate.
    pub fn trajectory(&self) -> Trajectory {
        self.ext.projected()
    }

    pub fn control(&self) -> &ControlSignal {
        self.ext.trajectory().control()
    }

    pub fn adjoint(&self) -> &AdjointCurve {
        &self.adjoint
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn cost(&self) -> f64 {
        self.ext.cost()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Fixed,
    Free,
}

/// An endpoint condition: a point, or the affine manifold
/// `anchor + span(tangent_basis)`.
#[derive(Debug, Clone, PartialEq)]
pub enum EndpointSpec {
    Point(DVector<f64>),
    Manifold {
        anchor: DVector<f64>,
        tangent_basis: Vec<DVector<f64>>,
    },
}

impl EndpointSpec {
    pub fn tangent_basis(&self) -> &[DVector<f64>] {
        match self {
            EndpointSpec::Point(_) => &[],
            EndpointSpec::Manifold { tangent_basis, .. } => tangent_basis,
        }
    }

    pub fn anchor(&self) -> &DVector<f64> {
        match self {
            EndpointSpec::Point(p) => p,
            EndpointSpec::Manifold { anchor, .. } => anchor,
        }
    }

    /// Distance from `x` to the endpoint set.
    pub fn defect(&self, x: &DVector<f64>) -> f64 {
        let d = x - self.anchor();
        let basis = self.tangent_basis();
        if basis.is_empty() {
            return d.norm();
        }
        let q = span_basis(x.len(), basis);
        (&d - &q * (q.transpose() * &d)).norm()
    }

    /// Orthonormal basis of the normal space, as columns.
    pub(crate) fn normal_basis(&self, m: usize) -> nalgebra::DMatrix<f64> {
        crate::geometry::cone::complement_basis(m, self.tangent_basis())
    }

    fn validate(&self, m: usize) -> Result<()> {
        check_dim(m, self.anchor().len())?;
        let basis = self.tangent_basis();
        for b in basis {
            check_dim(m, b.len())?;
        }
        if span_basis(m, basis).ncols() != basis.len() {
            return Err(Error::InvalidArgument("manifold tangent basis is linearly dependent".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub mode: TimeMode,
    pub initial: EndpointSpec,
    pub terminal: EndpointSpec,
}

impl BoundarySpec {
    pub fn fixed_points(x_a: DVector<f64>, x_b: DVector<f64>) -> Self {
        Self {
            mode: TimeMode::Fixed,
            initial: EndpointSpec::Point(x_a),
            terminal: EndpointSpec::Point(x_b),
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        self.initial.validate(m)?;
        self.terminal.validate(m)
    }
}
