//! Entropy, dissipation and hypocoercivity functionals, the per-step
//! inequality checks, and exponential decay fitting.

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::Array1;
use serde::Serialize;

use crate::elliptic::PoissonSolver;
use crate::error::{Error, Result};
use crate::mesh::PhaseMesh;
use crate::profiles::DiscreteProfiles;
use crate::scheme::{check_maximum_principle, SchemeParams, StepReport};
use crate::state::{
    densities, grad_centered, inner_macro, moments, norm_l2, norm_macro, norm_micro, project_pi,
    second_difference_sym, DistributionPair, EquilibriumState, MacroPair, MomentSet,
};
use crate::sum::CompensatedSum;

/// Discrete Poincare constant `C_P` of the centered gradient on zero-mean
/// periodic fields: `||u|| <= C_P ||D^c u||`.
///
/// `D^c` is circulant with eigenvalues `i sin(2 pi k / n) / dx`, so
/// `C_P = dx / min_{k != 0} |sin(2 pi k / n)|`.
pub fn poincare_constant(mesh: &PhaseMesh) -> f64 {
    let n = mesh.n_x();
    let smallest = (1..n)
        .map(|k| (2.0 * PI * k as f64 / n as f64).sin().abs())
        .fold(f64::INFINITY, f64::min);
    mesh.dx() / smallest
}

/// Constants entering the discrete entropy estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoreticalConstants {
    pub c1_star: f64,
    pub c2_star: f64,
    pub c3_star: f64,
    pub c4_star: f64,
    pub c5_star: f64,
    pub c6_star: f64,
    pub c7_star: f64,
    pub c8_star: f64,
    pub c_h: f64,
    pub big_c_h: f64,
    pub c_p: f64,
}

impl TheoreticalConstants {
    pub fn new(
        profiles: &DiscreteProfiles,
        eq: &EquilibriumState,
        mesh: &PhaseMesh,
        rho_min: f64,
        rho_max: f64,
    ) -> Self {
        let (r1, r2) = (eq.rho1_star, eq.rho2_star);
        let (rm, r_big) = (rho_min, rho_max);
        let ratio = rm / r_big;
        let c_p = poincare_constant(mesh);
        Self {
            c1_star: profiles.d1.max(profiles.d2).sqrt(),
            c2_star: (profiles.q1 - profiles.d1 * profiles.d1)
                .max(profiles.q2 - profiles.d2 * profiles.d2)
                .max(0.0)
                .sqrt(),
            c3_star: profiles.q1.max(profiles.q2).sqrt(),
            c4_star: 0.5 * ratio * (r1 / r_big).min(r2 * rm),
            c5_star: ratio,
            c6_star: ratio / (r1 + r2) * rm.min(1.0 / r_big).powi(2),
            c7_star: c_p * (r1 + r2).sqrt(),
            c8_star: 2.0 * (r_big * r_big * r2).max(r1 / (rm * rm)),
            c_h: 0.5 * (r1 / r_big).min(rm * r2),
            big_c_h: 0.5 * (r1 / rm).max(r_big * r2),
            c_p,
        }
    }

    /// Half of the coupling threshold `c_H / (C1* C_P)`.
    pub fn default_delta(&self) -> f64 {
        0.5 * self.c_h / (self.c1_star * self.c_p)
    }
}

/// `(1 + u) log(1 + u) - u`, accurate for small `|u|`.
fn entropy_density(u: f64) -> f64 {
    if u.abs() < 0.1 {
        // sum_{k>=2} (-1)^k u^k / (k (k - 1))
        let mut term = u * u;
        let mut acc = 0.0;
        for k in 2..40 {
            let c = term / (k * (k - 1)) as f64;
            acc += c;
            if c.abs() <= 1e-18 * acc.abs() {
                break;
            }
            term *= -u;
        }
        acc
    } else {
        (1.0 + u) * u.ln_1p() - u
    }
}

/// Relative Boltzmann entropy
/// `H = sum_k sum_ij dx dv (f log(f / f_inf) - f + f_inf)`.
pub fn boltzmann_entropy(pair: &DistributionPair, eq: &EquilibriumState, mesh: &PhaseMesh) -> Result<f64> {
    let w = mesh.dx() * mesh.dv();
    let mut acc = CompensatedSum::new();
    for (k, f, f_inf) in [(1, &pair.f1, &eq.f1_star), (2, &pair.f2, &eq.f2_star)] {
        for ((i, j), &x) in f.indexed_iter() {
            if !(x > 0.0) {
                return Err(Error::NonPositiveState { species: k, i, j });
            }
            let e = f_inf[j];
            acc.add(w * e * entropy_density((x - e) / e));
        }
    }
    Ok(acc.value())
}

fn check_positive(pair: &DistributionPair) -> Result<()> {
    for (k, f) in [(1, &pair.f1), (2, &pair.f2)] {
        if let Some(((i, j), _)) = f.indexed_iter().find(|(_, &x)| !(x > 0.0)) {
            return Err(Error::NonPositiveState { species: k, i, j });
        }
    }
    Ok(())
}

/// Reaction entropy dissipation
/// `D = sum_{i,j,m} dx dv^2 (f1_ij f2_im - chi1_j chi2_m) log(f1_ij f2_im / (chi1_j chi2_m))`,
/// nonnegative term by term.
pub fn entropy_dissipation(pair: &DistributionPair, profiles: &DiscreteProfiles, mesh: &PhaseMesh) -> Result<f64> {
    check_positive(pair)?;
    let w = mesh.dx() * mesh.dv() * mesh.dv();
    let n_v = mesh.n_v();
    let mut total = CompensatedSum::new();
    for i in 0..mesh.n_x() {
        let mut cell = 0.0;
        for j in 0..n_v {
            let f1 = pair.f1[[i, j]];
            let c1 = profiles.chi1[j];
            for m in 0..n_v {
                let c = c1 * profiles.chi2[m];
                let excess = f1.mul_add(pair.f2[[i, m]], -c);
                cell += excess * (excess / c).ln_1p();
            }
        }
        total.add(w * cell);
    }
    Ok(total.value())
}

/// Deviation norms `(||F~||, ||Pi F~||, ||(I - Pi) F~||)`.
pub fn deviation_norms(
    pair: &DistributionPair,
    eq: &EquilibriumState,
    profiles: &DiscreteProfiles,
    mesh: &PhaseMesh,
) -> (f64, f64, f64) {
    let dev = pair.deviation(eq);
    let pi = project_pi(&dev, profiles, mesh);
    let ortho = dev.sub(&pi);
    (
        norm_micro(&dev, eq, mesh),
        norm_micro(&pi, eq, mesh),
        norm_micro(&ortho, eq, mesh),
    )
}

/// `1 - rho1 rho2` per cell.
pub fn reaction_defect_field(pair: &DistributionPair, mesh: &PhaseMesh) -> Array1<f64> {
    let (r1, r2) = densities(pair, mesh);
    (0..mesh.n_x()).map(|i| 1.0 - r1[i] * r2[i]).collect()
}

/// `||1 - rho1 rho2||_{L^2(T)}`.
pub fn reaction_defect(pair: &DistributionPair, mesh: &PhaseMesh) -> f64 {
    norm_l2(&reaction_defect_field(pair, mesh), mesh)
}

/// Density deviation `rho~ = rho - rho_inf`.
pub fn density_deviation(pair: &DistributionPair, eq: &EquilibriumState, mesh: &PhaseMesh) -> MacroPair {
    let (r1, r2) = densities(pair, mesh);
    MacroPair::new(r1 - eq.rho1_star, r2 - eq.rho2_star)
}

/// Centered gradient of the Poisson potential of `rho~`.
pub fn potential_gradient(
    pair: &DistributionPair,
    eq: &EquilibriumState,
    solver: &PoissonSolver,
) -> MacroPair {
    let mesh = solver.mesh();
    let phi = solver.solve(&density_deviation(pair, eq, mesh));
    phi.potentials().map(|u| grad_centered(u, mesh))
}

/// Modified entropy
/// `Gamma = H + delta <J~, D^c Phi> + delta/(2 dt) sum_i dx |D^c Phi - D^c Phi_prev|^2`.
///
/// Returns `Gamma` and the current `D^c Phi`. Pass `None` as the previous
/// gradient at the first time level, which makes the last term vanish.
#[allow(clippy::too_many_arguments)]
pub fn modified_entropy(
    pair: &DistributionPair,
    prev_grad_phi: Option<&MacroPair>,
    eq: &EquilibriumState,
    profiles: &DiscreteProfiles,
    solver: &PoissonSolver,
    delta: f64,
    dt: f64,
) -> Result<(f64, MacroPair)> {
    let mesh = solver.mesh();
    let h = boltzmann_entropy(pair, eq, mesh)?;
    let grad = potential_gradient(pair, eq, solver);
    let gamma = gamma_from_parts(h, pair, &grad, prev_grad_phi, eq, profiles, mesh, delta, dt);
    Ok((gamma, grad))
}

#[allow(clippy::too_many_arguments)]
fn gamma_from_parts(
    h: f64,
    pair: &DistributionPair,
    grad: &MacroPair,
    prev_grad: Option<&MacroPair>,
    eq: &EquilibriumState,
    profiles: &DiscreteProfiles,
    mesh: &PhaseMesh,
    delta: f64,
    dt: f64,
) -> f64 {
    if delta == 0.0 {
        return h;
    }
    let m = moments(pair, profiles, mesh);
    let coupling = inner_macro(&m.j(), grad, eq, mesh);
    let jump = prev_grad.map_or(0.0, |prev| {
        let d = grad.sub(prev);
        let mut acc = CompensatedSum::new();
        for v in d.u1.iter().chain(d.u2.iter()) {
            acc.add(mesh.dx() * v * v);
        }
        acc.value()
    });
    h + delta * coupling + delta / (2.0 * dt) * jump
}

type SpeciesMoments<'a> = (
    &'a Array1<f64>,
    &'a Array1<f64>,
    &'a Array1<f64>,
    &'a Array1<f64>,
    &'a Array1<f64>,
    &'a Array1<f64>,
);

/// `(rho, J, S, J^s, S^s, rho_other)` of species `k`.
fn species(k: usize, m: &MomentSet) -> SpeciesMoments<'_> {
    match k {
        1 => (&m.rho1, &m.j1, &m.s1, &m.js1, &m.ss1, &m.rho2),
        _ => (&m.rho2, &m.j2, &m.s2, &m.js2, &m.ss2, &m.rho1),
    }
}

/// Residuals of the moment equations satisfied by an exact scheme step,
/// as `(density, current)` sup norms over both species.
pub fn moment_residuals(
    before: &DistributionPair,
    after: &DistributionPair,
    profiles: &DiscreteProfiles,
    mesh: &PhaseMesh,
    dt: f64,
) -> (f64, f64) {
    let m0 = moments(before, profiles, mesh);
    let m1 = moments(after, profiles, mesh);
    let q = mesh.dx() / 4.0;
    let reaction = reaction_defect_field(after, mesh);
    let sup = |a: &Array1<f64>| a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let (mut r_rho, mut r_j) = (0.0_f64, 0.0_f64);
    for k in [1, 2] {
        let (rho0, j0, ..) = species(k, &m0);
        let (rho, j, s, js, ss, rho_other) = species(k, &m1);
        let d = profiles.d(k);

        let res_rho = (rho - rho0) / dt + grad_centered(j, mesh)
            - q * second_difference_sym(js, mesh)
            - &reaction;
        let res_j = (j - j0) / dt
            + grad_centered(s, mesh)
            + d * grad_centered(rho, mesh)
            - q * second_difference_sym(ss, mesh)
            + rho_other * j;
        r_rho = r_rho.max(sup(&res_rho));
        r_j = r_j.max(sup(&res_j));
    }
    (r_rho, r_j)
}

/// `lhs <= rhs`, with any tolerance already folded into `rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCheck {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Entropy tolerance `1e-9 max(1, |H|)`.
pub fn entropy_tolerance(h: f64) -> f64 {
    1e-9 * h.abs().max(1.0)
}

fn with_slack(lhs: f64, rhs: f64) -> InequalityCheck {
    InequalityCheck {
        lhs,
        rhs: rhs + 1e-10 * rhs.abs() + 1e-14,
    }
}

/// `D >= C5 ||1 - rho1 rho2||^2 + C6 ||(I - Pi) F~||^2`, written as
/// `lower <= D + eps`.
pub fn dissipation_lower_bound(
    dissipation: f64,
    reaction_defect: f64,
    norm_ortho: f64,
    entropy: f64,
    consts: &TheoreticalConstants,
) -> InequalityCheck {
    InequalityCheck {
        lhs: consts.c5_star * reaction_defect.powi(2) + consts.c6_star * norm_ortho.powi(2),
        rhs: dissipation + entropy_tolerance(entropy),
    }
}

/// `||D^c Phi|| <= C_P ||Pi F~||`.
pub fn potential_bound(grad_phi: &MacroPair, norm_pi: f64, eq: &EquilibriumState, mesh: &PhaseMesh, consts: &TheoreticalConstants) -> InequalityCheck {
    with_slack(norm_macro(grad_phi, eq, mesh), consts.c_p * norm_pi)
}

/// Results of the per-transition checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityFlags {
    /// `(H' - H)/dt <= -D' - C4/dt ||F~' - F~||^2 + eps`.
    pub entropy_decay: InequalityCheck,
    /// Dissipation lower bound at the new level.
    pub dissipation_bound: InequalityCheck,
    /// Density moment equation residual against `10 tol / dt`.
    pub density_residual: InequalityCheck,
    /// Current moment equation residual against `10 tol / dt`.
    pub current_residual: InequalityCheck,
    /// Potential gradient bound at the new level.
    pub potential_bound: InequalityCheck,
    /// Potential gradient increment bound.
    pub potential_increment: InequalityCheck,
}

impl InequalityFlags {
    pub fn named(&self) -> [(&'static str, InequalityCheck); 6] {
        [
            ("entropy_decay", self.entropy_decay),
            ("dissipation_bound", self.dissipation_bound),
            ("density_residual", self.density_residual),
            ("current_residual", self.current_residual),
            ("potential_bound", self.potential_bound),
            ("potential_increment", self.potential_increment),
        ]
    }

    pub fn all_hold(&self) -> bool {
        self.named().iter().all(|(_, c)| c.holds())
    }
}

/// Diagnostics of one time level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub entropy: f64,
    pub dissipation: f64,
    pub gamma: Option<f64>,
    pub norm_dev: f64,
    pub norm_pi: f64,
    pub norm_ortho: f64,
    pub reaction_defect: f64,
    pub mass_residual: f64,
    pub max_principle_violation: f64,
    pub picard_iterations: usize,
}

/// Quantities of one level kept for the next transition check.
#[derive(Debug, Clone)]
struct Level {
    step: usize,
    pair: DistributionPair,
    entropy: f64,
    grad_phi: MacroPair,
}

/// Evaluates diagnostics along a trajectory and checks every transition.
#[derive(Debug, Clone)]
pub struct Monitor {
    mesh: PhaseMesh,
    profiles: DiscreteProfiles,
    eq: EquilibriumState,
    params: SchemeParams,
    consts: TheoreticalConstants,
    solver: PoissonSolver,
    delta: f64,
    last: Option<Level>,
}

impl Monitor {
    pub fn new(
        mesh: &PhaseMesh,
        profiles: &DiscreteProfiles,
        eq: &EquilibriumState,
        params: &SchemeParams,
        delta: f64,
    ) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter("delta must be nonnegative"));
        }
        Ok(Self {
            mesh: mesh.clone(),
            profiles: profiles.clone(),
            eq: eq.clone(),
            params: params.clone(),
            consts: TheoreticalConstants::new(profiles, eq, mesh, params.rho_min, params.rho_max),
            solver: PoissonSolver::new(mesh)?,
            delta,
            last: None,
        })
    }

    pub fn constants(&self) -> &TheoreticalConstants {
        &self.consts
    }

    pub fn equilibrium(&self) -> &EquilibriumState {
        &self.eq
    }

    /// Record level `step`. When the previous observed level was `step - 1`
    /// and a step report is given, the transition between them is checked
    /// as well. The time-difference term of `Gamma` is also only formed
    /// between consecutive levels.
    pub fn observe(
        &mut self,
        step: usize,
        pair: &DistributionPair,
        report: Option<&StepReport>,
    ) -> Result<(StepDiagnostics, Option<InequalityFlags>)> {
        let mesh = &self.mesh;
        let eq = &self.eq;
        let entropy = boltzmann_entropy(pair, eq, mesh)?;
        let dissipation = entropy_dissipation(pair, &self.profiles, mesh)?;
        let (norm_dev, norm_pi, norm_ortho) = deviation_norms(pair, eq, &self.profiles, mesh);
        let defect = reaction_defect(pair, mesh);
        let grad_phi = potential_gradient(pair, eq, &self.solver);

        let previous = self.last.take().filter(|l| l.step + 1 == step);
        let gamma = (self.delta > 0.0).then(|| {
            let prev_grad = previous.as_ref().map(|l| &l.grad_phi);
            gamma_from_parts(entropy, pair, &grad_phi, prev_grad, eq, &self.profiles, mesh, self.delta, self.params.dt)
        });

        let flags = match (&previous, report) {
            (Some(prev), Some(_)) => Some(self.check_transition(prev, pair, entropy, dissipation, defect, norm_pi, norm_ortho, &grad_phi)),
            _ => None,
        };

        let diag = StepDiagnostics {
            step,
            time: step as f64 * self.params.dt,
            entropy,
            dissipation,
            gamma,
            norm_dev,
            norm_pi,
            norm_ortho,
            reaction_defect: defect,
            mass_residual: (pair.mass_difference(mesh) - eq.mass_difference).abs(),
            max_principle_violation: report
                .map(|r| r.bounds_violation)
                .unwrap_or_else(|| check_maximum_principle(pair, &self.profiles, &self.params)),
            picard_iterations: report.map_or(0, |r| r.picard_iterations),
        };
        self.last = Some(Level {
            step,
            pair: pair.clone(),
            entropy,
            grad_phi,
        });
        Ok((diag, flags))
    }

    /// Forget the stored level so the next observation starts afresh.
    pub fn reset(&mut self) {
        self.last = None;
    }

    #[allow(clippy::too_many_arguments)]
    fn check_transition(
        &self,
        prev: &Level,
        pair: &DistributionPair,
        entropy: f64,
        dissipation: f64,
        defect: f64,
        norm_pi: f64,
        norm_ortho: f64,
        grad_phi: &MacroPair,
    ) -> InequalityFlags {
        let mesh = &self.mesh;
        let eq = &self.eq;
        let c = &self.consts;
        let dt = self.params.dt;

        let increment = norm_micro(&pair.sub(&prev.pair), eq, mesh);
        let entropy_decay = InequalityCheck {
            lhs: (entropy - prev.entropy) / dt,
            rhs: -dissipation - c.c4_star / dt * increment * increment
                + entropy_tolerance(entropy.abs().max(prev.entropy.abs())),
        };
        let dissipation_bound = dissipation_lower_bound(dissipation, defect, norm_ortho, entropy, c);

        let (r_rho, r_j) = moment_residuals(&prev.pair, pair, &self.profiles, mesh, dt);
        let residual_cap = 10.0 * self.params.picard_tol / dt;
        let density_residual = InequalityCheck { lhs: r_rho, rhs: residual_cap };
        let current_residual = InequalityCheck { lhs: r_j, rhs: residual_cap };

        let norm_dev = norm_micro(&pair.deviation(eq), eq, mesh);
        let potential_increment = with_slack(
            norm_macro(&grad_phi.sub(&prev.grad_phi), eq, mesh),
            dt * (c.c1_star * norm_ortho + c.c7_star * defect + c.c1_star * norm_dev),
        );

        InequalityFlags {
            entropy_decay,
            dissipation_bound,
            density_residual,
            current_residual,
            potential_bound: potential_bound(grad_phi, norm_pi, eq, mesh, c),
            potential_increment,
        }
    }
}

/// Bounds on the deviation moments by the deviation norms, as
/// `[rho~ = Pi F~, J~, S~, J~s, S~s]`.
pub fn moment_estimates(
    pair: &DistributionPair,
    eq: &EquilibriumState,
    profiles: &DiscreteProfiles,
    mesh: &PhaseMesh,
    consts: &TheoreticalConstants,
) -> [InequalityCheck; 5] {
    let dev = pair.deviation(eq);
    let m = moments(&dev, profiles, mesh);
    let (n_dev, n_pi, n_ortho) = deviation_norms(pair, eq, profiles, mesh);
    let nm = |u: &MacroPair| norm_macro(u, eq, mesh);
    // The density identity is an equality; check it both ways.
    let rho = nm(&m.rho());
    [
        with_slack((rho - n_pi).abs(), 1e-12 * n_pi),
        with_slack(nm(&m.j()), consts.c1_star * n_ortho),
        with_slack(nm(&m.s()), consts.c2_star * n_ortho),
        with_slack(nm(&m.js()), consts.c1_star * n_dev),
        with_slack(nm(&m.ss()), consts.c3_star * n_ortho),
    ]
}

/// Least-squares fit `value ~ prefactor exp(-kappa t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub kappa: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub const MIN_FIT_POINTS: usize = 5;

pub fn fit_decay_rate(times: &[f64], values: &[f64], window: Range<usize>) -> Result<DecayFit> {
    assert_eq!(times.len(), values.len(), "times and values must pair up");
    let window = window.start.min(times.len())..window.end.min(times.len());
    let n = window.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::WindowTooShort(n));
    }
    if let Some(k) = window.clone().find(|&k| !(values[k] > 0.0)) {
        return Err(Error::NonPositiveSeries(k));
    }
    let t = &times[window.clone()];
    let y: Vec<f64> = values[window].iter().map(|v| v.ln()).collect();
    let nf = n as f64;
    let t_mean = t.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (ti, yi) in t.iter().zip(&y) {
        stt += (ti - t_mean) * (ti - t_mean);
        sty += (ti - t_mean) * (yi - y_mean);
    }
    if !(stt > 0.0) {
        return Err(Error::InvalidParameter("fit window needs distinct times"));
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (ti, yi) in t.iter().zip(&y) {
        ss_res += (yi - intercept - slope * ti).powi(2);
        ss_tot += (yi - y_mean).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(DecayFit {
        kappa: -slope,
        prefactor: intercept.exp(),
        r_squared,
    })
}

/// Fit over everything after the first `skip_fraction` of the series.
pub fn fit_after_transient(times: &[f64], values: &[f64], skip_fraction: f64) -> Result<DecayFit> {
    if !(0.0..1.0).contains(&skip_fraction) {
        return Err(Error::InvalidParameter("skip_fraction must lie in [0, 1)"));
    }
    let start = (skip_fraction * times.len() as f64).floor() as usize;
    fit_decay_rate(times, values, start..times.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::ProfileFamily;
    use crate::scheme::implicit_step;

    fn setup() -> (PhaseMesh, DiscreteProfiles) {
        let mesh = PhaseMesh::new(5, 1.0, 3, 4.0).unwrap();
        let profiles = DiscreteProfiles::symmetric(&ProfileFamily::Gaussian { sigma: 1.0 }, &mesh).unwrap();
        (mesh, profiles)
    }

    #[test]
    fn entropy_density_branches_agree() {
        for u in [-0.0999, -0.05, 1e-6, 0.05, 0.0999] {
            let series = entropy_density(u);
            let direct = (1.0 + u) * u.ln_1p() - u;
            assert!((series - direct).abs() <= 8.0 * f64::EPSILON * u.abs(), "{u}");
        }
        assert_eq!(entropy_density(0.0), 0.0);
        assert!((entropy_density(1e-8) - (5e-17 - 1e-24 / 6.0)).abs() < 1e-31);
    }

    #[test]
    fn entropy_of_doubled_equilibrium() {
        let (mesh, profiles) = setup();
        let eq = EquilibriumState::with_rho(1.7, &profiles, &mesh);
        let mut f = eq.to_pair(&mesh);
        assert_eq!(boltzmann_entropy(&f, &eq, &mesh).unwrap(), 0.0);
        f.f1 *= 2.0;
        f.f2 *= 2.0;
        let expected = (1.7 + 1.0 / 1.7) * (2.0 * 2f64.ln() - 1.0);
        assert!((boltzmann_entropy(&f, &eq, &mesh).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_state_is_rejected() {
        let (mesh, profiles) = setup();
        let eq = EquilibriumState::with_rho(1.0, &profiles, &mesh);
        let mut f = eq.to_pair(&mesh);
        f.f2[[3, 1]] = 0.0;
        let err = Error::NonPositiveState { species: 2, i: 3, j: 1 };
        assert_eq!(boltzmann_entropy(&f, &eq, &mesh), Err(err.clone()));
        assert_eq!(entropy_dissipation(&f, &profiles, &mesh), Err(err));
    }

    #[test]
    fn dissipation_vanishes_at_every_equilibrium() {
        let (mesh, profiles) = setup();
        for rho in [1.0, 0.6, 2.5] {
            let f = EquilibriumState::with_rho(rho, &profiles, &mesh).to_pair(&mesh);
            assert!(entropy_dissipation(&f, &profiles, &mesh).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn poincare_constant_values() {
        let m3 = PhaseMesh::new(3, 1.0, 1, 1.0).unwrap();
        // min |sin(2 pi k / 3)| = sqrt(3)/2
        assert!((poincare_constant(&m3) - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-15);
        let m = PhaseMesh::new(101, 1.0, 1, 1.0).unwrap();
        assert!((poincare_constant(&m) * PI - 1.0).abs() < 1e-3);
    }

    #[test]
    fn equilibrium_step_passes_all_checks() {
        let (mesh, profiles) = setup();
        let eq = EquilibriumState::with_rho(1.2, &profiles, &mesh);
        let params = SchemeParams::new(0.1, 0.5, 2.0);
        let mut mon = Monitor::new(&mesh, &profiles, &eq, &params, 0.1).unwrap();
        let f0 = eq.to_pair(&mesh);
        let (d0, flags0) = mon.observe(0, &f0, None).unwrap();
        assert!(flags0.is_none());
        assert_eq!(d0.gamma, Some(0.0));
        let (f1, rep) = implicit_step(&f0, &profiles, &mesh, &params).unwrap();
        let (d1, flags1) = mon.observe(1, &f1, Some(&rep)).unwrap();
        assert!(flags1.unwrap().all_hold());
        assert!(d1.entropy.abs() < 1e-20 && d1.norm_dev < 1e-12);
    }

    #[test]
    fn perturbed_steps_pass_all_checks() {
        let (mesh, profiles) = setup();
        let params = SchemeParams::new(0.05, 0.5, 2.0);
        let base = EquilibriumState::with_rho(1.0, &profiles, &mesh);
        let mut f = base.to_pair(&mesh);
        for i in 0..mesh.n_x() {
            let s = 1.0 + 0.3 * (2.0 * PI * mesh.x_center(i)).cos();
            f.f1.row_mut(i).mapv_inplace(|x| x * s);
        }
        let eq = crate::scheme::equilibrium_from_initial(&f, &profiles, &mesh);
        let mut mon = Monitor::new(&mesh, &profiles, &eq, &params, 0.05).unwrap();
        mon.observe(0, &f, None).unwrap();
        for n in 1..=20 {
            let (next, rep) = implicit_step(&f, &profiles, &mesh, &params).unwrap();
            let (_, flags) = mon.observe(n, &next, Some(&rep)).unwrap();
            let flags = flags.unwrap();
            assert!(flags.all_hold(), "step {n}: {flags:?}");
            f = next;
        }
    }

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let fit = fit_decay_rate(&t, &v, 0..50).unwrap();
        assert!((fit.kappa - 2.0).abs() < 1e-10);
        assert!((fit.prefactor - 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);

        let c = fit_after_transient(&t, &vec![4.0; 50], 0.2).unwrap();
        assert!(c.kappa.abs() < 1e-15);
    }

    #[test]
    fn fit_errors() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(fit_decay_rate(&t, &[1.0; 6], 0..4), Err(Error::WindowTooShort(4)));
        assert_eq!(
            fit_decay_rate(&t, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0], 0..6),
            Err(Error::NonPositiveSeries(2))
        );
    }
}
