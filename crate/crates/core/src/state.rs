//! Discrete unknowns and the macroscopic quantities derived from them.
//!
//! Phase-space arrays are `n_x x 2L`, spatial index outermost and velocity
//! index innermost.

use ndarray::{Array1, Array2, Zip};

use crate::error::{Error, Result};
use crate::mesh::PhaseMesh;
use crate::profiles::DiscreteProfiles;
use crate::sum::{csum, CompensatedSum};

/// The pair `F = (f1, f2)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionPair {
    pub f1: Array2<f64>,
    pub f2: Array2<f64>,
}

impl DistributionPair {
    pub fn new(f1: Array2<f64>, f2: Array2<f64>, mesh: &PhaseMesh) -> Result<Self> {
        let pair = Self { f1, f2 };
        pair.check_shape(mesh)?;
        Ok(pair)
    }

    pub fn zeros(mesh: &PhaseMesh) -> Self {
        Self {
            f1: Array2::zeros(mesh.shape()),
            f2: Array2::zeros(mesh.shape()),
        }
    }

    /// `f_k(i, j) = rho_k(i) chi_k(j)`.
    pub fn from_densities(
        rho1: &Array1<f64>,
        rho2: &Array1<f64>,
        profiles: &DiscreteProfiles,
        mesh: &PhaseMesh,
    ) -> Self {
        let mut out = Self::zeros(mesh);
        for i in 0..mesh.n_x() {
            for j in 0..mesh.n_v() {
                out.f1[[i, j]] = rho1[i] * profiles.chi1[j];
                out.f2[[i, j]] = rho2[i] * profiles.chi2[j];
            }
        }
        out
    }

    pub fn check_shape(&self, mesh: &PhaseMesh) -> Result<()> {
        for f in [&self.f1, &self.f2] {
            if f.dim() != mesh.shape() {
                return Err(Error::ShapeMismatch {
                    expected: mesh.shape(),
                    found: f.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.f1.iter().chain(self.f2.iter()).all(|v| v.is_finite())
    }

    pub fn species(&self, k: usize) -> &Array2<f64> {
        match k {
            1 => &self.f1,
            2 => &self.f2,
            _ => panic!("species index must be 1 or 2, got {k}"),
        }
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &Self) -> Self {
        Self {
            f1: &self.f1 - &other.f1,
            f2: &self.f2 - &other.f2,
        }
    }

    /// Deviation from the equilibrium, `F - F_inf`.
    pub fn deviation(&self, eq: &EquilibriumState) -> Self {
        let mut out = self.clone();
        for mut row in out.f1.rows_mut() {
            Zip::from(&mut row).and(&eq.f1_star).for_each(|f, &e| *f -= e);
        }
        for mut row in out.f2.rows_mut() {
            Zip::from(&mut row).and(&eq.f2_star).for_each(|f, &e| *f -= e);
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.f1
            .iter()
            .chain(self.f2.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Total mass difference `sum dx dv (f1 - f2)`.
    pub fn mass_difference(&self, mesh: &PhaseMesh) -> f64 {
        let w = mesh.dx() * mesh.dv();
        csum(
            self.f1
                .iter()
                .zip(self.f2.iter())
                .flat_map(|(&a, &b)| [w * a, -w * b]),
        )
    }
}

/// A pair of spatial arrays `U = (u1, u2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroPair {
    pub u1: Array1<f64>,
    pub u2: Array1<f64>,
}

impl MacroPair {
    pub fn new(u1: Array1<f64>, u2: Array1<f64>) -> Self {
        Self { u1, u2 }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(Array1::zeros(n), Array1::zeros(n))
    }

    pub fn map(&self, f: impl Fn(&Array1<f64>) -> Array1<f64>) -> Self {
        Self::new(f(&self.u1), f(&self.u2))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(&self.u1 - &other.u1, &self.u2 - &other.u2)
    }

    pub fn sup_norm(&self) -> f64 {
        self.u1
            .iter()
            .chain(self.u2.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Equilibrium `F_inf = (rho1_inf chi1, rho2_inf chi2)` with
/// `rho1_inf rho2_inf = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    pub rho_star: f64,
    pub rho1_star: f64,
    pub rho2_star: f64,
    /// Conserved mass difference the equilibrium was built from.
    pub mass_difference: f64,
    /// Per velocity cell; independent of the spatial index.
    pub f1_star: Array1<f64>,
    pub f2_star: Array1<f64>,
}

impl EquilibriumState {
    /// Equilibrium with the given `rho_inf`.
    pub fn with_rho(rho_star: f64, profiles: &DiscreteProfiles, mesh: &PhaseMesh) -> Self {
        let rho1_star = rho_star;
        let rho2_star = 1.0 / rho_star;
        Self {
            rho_star,
            rho1_star,
            rho2_star,
            mass_difference: mesh.torus_length() * (rho_star - rho2_star),
            f1_star: profiles.chi1.iter().map(|c| rho1_star * c).collect(),
            f2_star: profiles.chi2.iter().map(|c| rho2_star * c).collect(),
        }
    }

    /// The equilibrium spread over the whole phase-space grid.
    pub fn to_pair(&self, mesh: &PhaseMesh) -> DistributionPair {
        let mut out = DistributionPair::zeros(mesh);
        for i in 0..mesh.n_x() {
            out.f1.row_mut(i).assign(&self.f1_star);
            out.f2.row_mut(i).assign(&self.f2_star);
        }
        out
    }

    pub fn rho(&self, k: usize) -> f64 {
        if k == 1 {
            self.rho1_star
        } else {
            self.rho2_star
        }
    }

    /// Spatially constant pair `(rho1_inf, rho2_inf)`.
    pub fn densities(&self, n_x: usize) -> MacroPair {
        MacroPair::new(
            Array1::from_elem(n_x, self.rho1_star),
            Array1::from_elem(n_x, self.rho2_star),
        )
    }
}

/// Discrete velocity moments per spatial cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub rho1: Array1<f64>,
    pub rho2: Array1<f64>,
    pub j1: Array1<f64>,
    pub j2: Array1<f64>,
    /// Centered second moments `sum dv (v^2 - D_k) f`.
    pub s1: Array1<f64>,
    pub s2: Array1<f64>,
    /// Skewed first moments `sum dv |v| f`.
    pub js1: Array1<f64>,
    pub js2: Array1<f64>,
    /// Skewed second moments `sum dv v|v| f`.
    pub ss1: Array1<f64>,
    pub ss2: Array1<f64>,
}

impl MomentSet {
    pub fn rho(&self) -> MacroPair {
        MacroPair::new(self.rho1.clone(), self.rho2.clone())
    }
    pub fn j(&self) -> MacroPair {
        MacroPair::new(self.j1.clone(), self.j2.clone())
    }
    pub fn s(&self) -> MacroPair {
        MacroPair::new(self.s1.clone(), self.s2.clone())
    }
    pub fn js(&self) -> MacroPair {
        MacroPair::new(self.js1.clone(), self.js2.clone())
    }
    pub fn ss(&self) -> MacroPair {
        MacroPair::new(self.ss1.clone(), self.ss2.clone())
    }
}

fn velocity_sum(f: &Array2<f64>, mesh: &PhaseMesh, weight: impl Fn(f64) -> f64) -> Array1<f64> {
    let dv = mesh.dv();
    let w: Vec<f64> = mesh.v_centers().iter().map(|&v| dv * weight(v)).collect();
    f.rows()
        .into_iter()
        .map(|row| csum(row.iter().zip(&w).map(|(&a, &b)| a * b)))
        .collect()
}

/// Discrete densities `rho_{k,i} = sum_j dv f_{k,ij}`.
pub fn densities(pair: &DistributionPair, mesh: &PhaseMesh) -> (Array1<f64>, Array1<f64>) {
    (
        velocity_sum(&pair.f1, mesh, |_| 1.0),
        velocity_sum(&pair.f2, mesh, |_| 1.0),
    )
}

pub fn moments(pair: &DistributionPair, profiles: &DiscreteProfiles, mesh: &PhaseMesh) -> MomentSet {
    let (rho1, rho2) = densities(pair, mesh);
    let (d1, d2) = (profiles.d1, profiles.d2);
    MomentSet {
        j1: velocity_sum(&pair.f1, mesh, |v| v),
        j2: velocity_sum(&pair.f2, mesh, |v| v),
        s1: velocity_sum(&pair.f1, mesh, |v| v * v - d1),
        s2: velocity_sum(&pair.f2, mesh, |v| v * v - d2),
        js1: velocity_sum(&pair.f1, mesh, f64::abs),
        js2: velocity_sum(&pair.f2, mesh, f64::abs),
        ss1: velocity_sum(&pair.f1, mesh, |v| v * v.abs()),
        ss2: velocity_sum(&pair.f2, mesh, |v| v * v.abs()),
        rho1,
        rho2,
    }
}

/// Local velocity equilibrium `(rho1 chi1, rho2 chi2)`.
pub fn project_pi(pair: &DistributionPair, profiles: &DiscreteProfiles, mesh: &PhaseMesh) -> DistributionPair {
    let (rho1, rho2) = densities(pair, mesh);
    DistributionPair::from_densities(&rho1, &rho2, profiles, mesh)
}

/// Weighted product `sum dx dv (f1 g1 / f1_inf + f2 g2 / f2_inf)`.
pub fn inner_micro(
    f: &DistributionPair,
    g: &DistributionPair,
    eq: &EquilibriumState,
    mesh: &PhaseMesh,
) -> f64 {
    let w = mesh.dx() * mesh.dv();
    let mut acc = CompensatedSum::new();
    for (a, b, e) in [(&f.f1, &g.f1, &eq.f1_star), (&f.f2, &g.f2, &eq.f2_star)] {
        for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
            for ((&x, &y), &z) in ra.iter().zip(rb.iter()).zip(e.iter()) {
                acc.add(w * x * y / z);
            }
        }
    }
    acc.value()
}

pub fn norm_micro(f: &DistributionPair, eq: &EquilibriumState, mesh: &PhaseMesh) -> f64 {
    inner_micro(f, f, eq, mesh).max(0.0).sqrt()
}

/// Weighted product in position `sum dx (u1 w1 / rho1_inf + u2 w2 / rho2_inf)`.
pub fn inner_macro(u: &MacroPair, w: &MacroPair, eq: &EquilibriumState, mesh: &PhaseMesh) -> f64 {
    let dx = mesh.dx();
    let mut acc = CompensatedSum::new();
    for (a, b, r) in [(&u.u1, &w.u1, eq.rho1_star), (&u.u2, &w.u2, eq.rho2_star)] {
        for (&x, &y) in a.iter().zip(b.iter()) {
            acc.add(dx * x * y / r);
        }
    }
    acc.value()
}

pub fn norm_macro(u: &MacroPair, eq: &EquilibriumState, mesh: &PhaseMesh) -> f64 {
    inner_macro(u, u, eq, mesh).max(0.0).sqrt()
}

/// Unweighted `L^2(T)` norm `sqrt(sum dx u^2)`.
pub fn norm_l2(u: &Array1<f64>, mesh: &PhaseMesh) -> f64 {
    csum(u.iter().map(|v| mesh.dx() * v * v)).sqrt()
}

/// Spatial mean `sum dx u / |T|`.
pub fn spatial_mean(u: &Array1<f64>, mesh: &PhaseMesh) -> f64 {
    csum(u.iter().map(|v| mesh.dx() * v)) / mesh.torus_length()
}

/// Centered gradient `(u_{i+1} - u_{i-1}) / (2 dx)`.
pub fn grad_centered(u: &Array1<f64>, mesh: &PhaseMesh) -> Array1<f64> {
    let h = 2.0 * mesh.dx();
    (0..mesh.n_x())
        .map(|i| (u[mesh.next(i)] - u[mesh.prev(i)]) / h)
        .collect()
}

/// Forward gradient `(u_{i+1} - u_i) / dx`.
pub fn grad_forward(u: &Array1<f64>, mesh: &PhaseMesh) -> Array1<f64> {
    let h = mesh.dx();
    (0..mesh.n_x()).map(|i| (u[mesh.next(i)] - u[i]) / h).collect()
}

/// Backward gradient `(u_i - u_{i-1}) / dx`.
pub fn grad_backward(u: &Array1<f64>, mesh: &PhaseMesh) -> Array1<f64> {
    let h = mesh.dx();
    (0..mesh.n_x()).map(|i| (u[i] - u[mesh.prev(i)]) / h).collect()
}

/// `(D+D- + D-D+) u = 2 (u_{i+1} - 2 u_i + u_{i-1}) / dx^2`.
pub fn second_difference_sym(u: &Array1<f64>, mesh: &PhaseMesh) -> Array1<f64> {
    let h2 = mesh.dx() * mesh.dx();
    (0..mesh.n_x())
        .map(|i| 2.0 * (u[mesh.next(i)] - 2.0 * u[i] + u[mesh.prev(i)]) / h2)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::ProfileFamily;

    fn setup() -> (PhaseMesh, DiscreteProfiles) {
        let mesh = PhaseMesh::new(5, 1.0, 4, 4.0).unwrap();
        let profiles = DiscreteProfiles::from_families(
            &ProfileFamily::Gaussian { sigma: 1.0 },
            &ProfileFamily::DoubleBump { center: 1.0, sigma: 0.8 },
            &mesh,
        )
        .unwrap();
        (mesh, profiles)
    }

    fn pseudo_random(mesh: &PhaseMesh, seed: u64) -> DistributionPair {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64)
        };
        let mut p = DistributionPair::zeros(mesh);
        p.f1.mapv_inplace(|_| 0.1 + next());
        p.f2.mapv_inplace(|_| 0.1 + next());
        p
    }

    #[test]
    fn equilibrium_densities_and_projection() {
        let (mesh, profiles) = setup();
        let eq = EquilibriumState::with_rho(1.7, &profiles, &mesh);
        let f = eq.to_pair(&mesh);
        let (r1, r2) = densities(&f, &mesh);
        for i in 0..mesh.n_x() {
            assert!((r1[i] - 1.7).abs() < 1e-14);
            assert!((r2[i] - 1.0 / 1.7).abs() < 1e-14);
        }
        let pf = project_pi(&f, &profiles, &mesh);
        assert!(pf.sub(&f).sup_norm() < 1e-15);
        let m = moments(&f, &profiles, &mesh);
        assert!(m.j1.iter().chain(m.ss2.iter()).all(|v| *v == 0.0));
        assert!(m.s1.iter().chain(m.s2.iter()).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn projection_is_idempotent() {
        let (mesh, profiles) = setup();
        let f = pseudo_random(&mesh, 3);
        let p1 = project_pi(&f, &profiles, &mesh);
        let p2 = project_pi(&p1, &profiles, &mesh);
        assert!(p2.sub(&p1).sup_norm() <= 4.0 * f64::EPSILON * p1.sup_norm());
    }

    #[test]
    fn velocity_symmetric_data_has_no_odd_moments() {
        let (mesh, profiles) = setup();
        let mut f = pseudo_random(&mesh, 9);
        for i in 0..mesh.n_x() {
            for j in 0..mesh.n_v_half() {
                f.f1[[i, mesh.mirror(j)]] = f.f1[[i, j]];
                f.f2[[i, mesh.mirror(j)]] = f.f2[[i, j]];
            }
        }
        let m = moments(&f, &profiles, &mesh);
        for v in m.j1.iter().chain(&m.j2).chain(&m.ss1).chain(&m.ss2) {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn equilibrium_norm_closed_form() {
        let (mesh, profiles) = setup();
        let eq = EquilibriumState::with_rho(2.0, &profiles, &mesh);
        let f = eq.to_pair(&mesh);
        let expected = mesh.torus_length() * (2.0 + 0.5);
        assert!((inner_micro(&f, &f, &eq, &mesh) - expected).abs() < 1e-13);
        let r = eq.densities(mesh.n_x());
        assert!((inner_macro(&r, &r, &eq, &mesh) - expected).abs() < 1e-13);
        assert_eq!(inner_micro(&DistributionPair::zeros(&mesh), &f, &eq, &mesh), 0.0);
    }

    #[test]
    fn gradients_of_constants_vanish() {
        let (mesh, _) = setup();
        let u = Array1::from_elem(mesh.n_x(), 3.5);
        for g in [grad_centered(&u, &mesh), grad_forward(&u, &mesh), grad_backward(&u, &mesh)] {
            assert!(g.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn centered_gradient_of_sinusoid() {
        let mesh = PhaseMesh::new(31, 1.0, 1, 1.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let u: Array1<f64> = mesh.x_centers().iter().map(|x| (two_pi * x).sin()).collect();
        let g = grad_centered(&u, &mesh);
        let factor = (two_pi * mesh.dx()).sin() / mesh.dx();
        for (i, x) in mesh.x_centers().iter().enumerate() {
            assert!((g[i] - factor * (two_pi * x).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn mass_difference_of_equilibrium() {
        let (mesh, profiles) = setup();
        let eq = EquilibriumState::with_rho(2.0, &profiles, &mesh);
        let m = eq.to_pair(&mesh).mass_difference(&mesh);
        assert!((m - 1.5).abs() < 1e-14);
    }
}
