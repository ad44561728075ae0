//! Periodic Poisson problem for the centered-gradient Laplacian,
//!
//! ```text
//! -D^c D^c phi = r - mean(r),   sum_i dx phi_i = 0,
//! ```
//!
//! where `(D^c D^c u)_i = (u_{i+2} - 2 u_i + u_{i-2}) / (4 dx^2)`. On an odd
//! grid the kernel of `D^c` is the constants, so the gauge row makes the
//! augmented system uniquely solvable.

use nalgebra::{DMatrix, DVector};
use ndarray::Array1;

use crate::error::{Error, Result};
use crate::mesh::PhaseMesh;
use crate::state::{spatial_mean, MacroPair};
use crate::sum::csum;

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolve {
    pub phi1: Array1<f64>,
    pub phi2: Array1<f64>,
    /// Spatial means removed from the two right-hand sides.
    pub rhs_mean_removed: (f64, f64),
}

impl PoissonSolve {
    pub fn potentials(&self) -> MacroPair {
        MacroPair::new(self.phi1.clone(), self.phi2.clone())
    }
}

/// QR factorization of the `(n+1) x n` augmented operator.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    mesh: PhaseMesh,
    q_t: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl PoissonSolver {
    pub fn new(mesh: &PhaseMesh) -> Result<Self> {
        let n = mesh.n_x();
        if n.is_multiple_of(2) {
            return Err(Error::EvenGridUnsupported(n));
        }
        let w = 1.0 / (4.0 * mesh.dx() * mesh.dx());
        let mut a = DMatrix::<f64>::zeros(n + 1, n);
        for i in 0..n {
            a[(i, i)] += 2.0 * w;
            a[(i, (i + 2) % n)] -= w;
            a[(i, (i + n - 2) % n)] -= w;
        }
        // Gauge row, scaled like the operator rows.
        for i in 0..n {
            a[(n, i)] = 2.0 * w;
        }
        let qr = a.qr();
        Ok(Self {
            mesh: mesh.clone(),
            q_t: qr.q().transpose(),
            r: qr.r(),
        })
    }

    pub fn mesh(&self) -> &PhaseMesh {
        &self.mesh
    }

    /// Solve for one species; returns the potential and the removed mean.
    pub fn solve_scalar(&self, rhs: &Array1<f64>) -> (Array1<f64>, f64) {
        let n = self.mesh.n_x();
        assert_eq!(rhs.len(), n, "right-hand side length must equal n_x");
        let mean = spatial_mean(rhs, &self.mesh);
        let mut b = DVector::<f64>::zeros(n + 1);
        for i in 0..n {
            b[i] = rhs[i] - mean;
        }
        let y = &self.q_t * b;
        let x = self
            .r
            .solve_upper_triangular(&y)
            .expect("augmented Poisson operator has full column rank on odd grids");
        // Remove the rounding-level drift from the gauge.
        let drift = csum(x.iter().copied()) / n as f64;
        (x.iter().map(|v| v - drift).collect(), mean)
    }

    pub fn solve(&self, rho_tilde: &MacroPair) -> PoissonSolve {
        let (phi1, m1) = self.solve_scalar(&rho_tilde.u1);
        let (phi2, m2) = self.solve_scalar(&rho_tilde.u2);
        PoissonSolve {
            phi1,
            phi2,
            rhs_mean_removed: (m1, m2),
        }
    }
}

/// One-shot convenience wrapper around [`PoissonSolver`].
pub fn solve_poisson(rho_tilde: &MacroPair, mesh: &PhaseMesh) -> Result<PoissonSolve> {
    Ok(PoissonSolver::new(mesh)?.solve(rho_tilde))
}

/// `(D^c D^c u)_i = (u_{i+2} - 2 u_i + u_{i-2}) / (4 dx^2)`.
pub fn centered_laplacian(u: &Array1<f64>, mesh: &PhaseMesh) -> Array1<f64> {
    let n = mesh.n_x();
    let w = 1.0 / (4.0 * mesh.dx() * mesh.dx());
    (0..n)
        .map(|i| w * (u[(i + 2) % n] - 2.0 * u[i] + u[(i + n - 2) % n]))
        .collect()
}
