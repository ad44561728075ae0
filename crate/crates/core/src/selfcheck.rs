//! Runtime property checks on a configured setup, used by `verify`.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{DeltaChoice, RunConfig};
use crate::diagnostics::{
    boltzmann_entropy, deviation_norms, dissipation_lower_bound, entropy_dissipation, modified_entropy,
    moment_estimates, reaction_defect, Monitor, TheoreticalConstants,
};
use crate::elliptic::{centered_laplacian, PoissonSolver};
use crate::mesh::PhaseMesh;
use crate::profiles::DiscreteProfiles;
use crate::scheme::{
    equilibrium_from_initial, implicit_step, upwind_flux, upwind_flux_viscous_form, SchemeParams,
};
use crate::state::{
    grad_backward, grad_centered, grad_forward, norm_l2, second_difference_sym, spatial_mean, DistributionPair,
};
use crate::sum::csum;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn line(name: &'static str, passed: bool, detail: String) -> CheckLine {
    CheckLine { name, passed, detail }
}

/// Random field with entries uniform in `[-1, 1]`.
pub fn random_field(rng: &mut impl Rng, n: usize) -> Array1<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Random state inside the sandwich
/// `rho_min chi1 <= f1 <= rho_max chi1`, `chi2/rho_max <= f2 <= chi2/rho_min`.
pub fn random_sandwich_state(
    rng: &mut impl Rng,
    mesh: &PhaseMesh,
    profiles: &DiscreteProfiles,
    rho_min: f64,
    rho_max: f64,
) -> DistributionPair {
    let mut pair = DistributionPair::zeros(mesh);
    let (lo2, hi2) = (1.0 / rho_max, 1.0 / rho_min);
    for ((_, j), x) in pair.f1.indexed_iter_mut() {
        *x = profiles.chi1[j] * rng.random_range(rho_min..=rho_max);
    }
    for ((_, j), x) in pair.f2.indexed_iter_mut() {
        *x = profiles.chi2[j] * rng.random_range(lo2..=hi2);
    }
    pair
}

/// Units in the last place of `scale`.
pub fn ulp(scale: f64) -> f64 {
    let s = scale.abs();
    s.next_up() - s
}

fn discrete_inner(u: &Array1<f64>, w: &Array1<f64>, mesh: &PhaseMesh) -> f64 {
    csum(u.iter().zip(w).map(|(a, b)| mesh.dx() * a * b))
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

/// Run every check on the configured mesh, profiles and bounds.
pub fn run_self_checks(config: &RunConfig, seed: u64, samples: usize) -> Vec<CheckLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = &config.mesh;
    let profiles = &config.profiles;
    let params = &config.params;
    let n = mesh.n_x();
    let mut out = Vec::new();

    // Summation by parts and the centered-gradient bound.
    let mut worst = [0.0_f64; 4];
    for _ in 0..samples {
        let u = random_field(&mut rng, n);
        let w = random_field(&mut rng, n);
        let (dcu, dcw) = (grad_centered(&u, mesh), grad_centered(&w, mesh));
        let a = discrete_inner(&dcu, &w, mesh);
        let b = -discrete_inner(&u, &dcw, mesh);
        let s = discrete_inner(&dcu.mapv(f64::abs), &w.mapv(f64::abs), mesh);
        worst[0] = worst[0].max(rel(a, b, s));
        let a = discrete_inner(&grad_forward(&u, mesh), &w, mesh);
        let b = -discrete_inner(&u, &grad_backward(&w, mesh), mesh);
        let s = discrete_inner(&grad_forward(&u, mesh).mapv(f64::abs), &w.mapv(f64::abs), mesh);
        worst[1] = worst[1].max(rel(a, b, s));
        let a = discrete_inner(&second_difference_sym(&u, mesh), &w, mesh);
        let b = -2.0 * discrete_inner(&grad_forward(&u, mesh), &grad_forward(&w, mesh), mesh);
        let s = discrete_inner(&second_difference_sym(&u, mesh).mapv(f64::abs), &w.mapv(f64::abs), mesh);
        worst[2] = worst[2].max(rel(a, b, s));
        let excess = mesh.dx() * norm_l2(&dcu, mesh) - norm_l2(&u, mesh);
        worst[3] = worst[3].max(excess / norm_l2(&u, mesh));
    }
    out.push(line(
        "summation_by_parts",
        worst[..3].iter().all(|&e| e <= 1e-12),
        format!("max relative errors {:.2e} {:.2e} {:.2e}", worst[0], worst[1], worst[2]),
    ));
    out.push(line(
        "centered_gradient_bound",
        worst[3] <= 1e-12,
        format!("max (dx ||D^c u|| - ||u||)/||u|| = {:.2e}", worst[3]),
    ));

    // Poincare inequality on zero-mean fields.
    let c_p = crate::diagnostics::poincare_constant(mesh);
    let mut ratio = 0.0_f64;
    for _ in 0..samples {
        let mut u = random_field(&mut rng, n);
        let m = spatial_mean(&u, mesh);
        u.mapv_inplace(|x| x - m);
        ratio = ratio.max(norm_l2(&u, mesh) / norm_l2(&grad_centered(&u, mesh), mesh));
    }
    out.push(line(
        "poincare",
        ratio <= c_p * (1.0 + 1e-12),
        format!("max ||u||/||D^c u|| = {ratio:.6e}, C_P = {c_p:.6e}"),
    ));

    // Poisson residual and gauge.
    let solver = PoissonSolver::new(mesh).expect("mesh grids are odd");
    let mut res = 0.0_f64;
    for _ in 0..samples {
        let r = random_field(&mut rng, n);
        let (phi, mean) = solver.solve_scalar(&r);
        let lap = centered_laplacian(&phi, mesh);
        let scale = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let worst = (0..n).map(|i| (-lap[i] - r[i] + mean).abs()).fold(0.0, f64::max);
        res = res.max(worst / scale).max(spatial_mean(&phi, mesh).abs());
    }
    out.push(line("poisson_residual", res <= 1e-10, format!("max scaled residual {res:.2e}")));

    // Flux forms.
    let mut ulps = 0.0_f64;
    let v_max = mesh.v_max();
    for _ in 0..samples * 1000 {
        let fl = rng.random_range(0.0..1.0);
        let fr = rng.random_range(0.0..1.0);
        let v = rng.random_range(-v_max..=v_max);
        let dv = mesh.dv();
        let a = upwind_flux(fl, fr, v, dv);
        let b = upwind_flux_viscous_form(fl, fr, v, dv);
        if a != b {
            ulps = ulps.max((a - b).abs() / ulp(a));
        }
    }
    out.push(line("flux_forms", ulps <= 2.0, format!("max difference {ulps} ulp")));

    // State-level estimates on random sandwich states.
    let (mut moment_ok, mut sandwich_ok, mut gamma_ok, mut lower_ok, mut pyth) = (true, true, true, true, 0.0_f64);
    for _ in 0..samples {
        let f = random_sandwich_state(&mut rng, mesh, profiles, params.rho_min, params.rho_max);
        let eq = equilibrium_from_initial(&f, profiles, mesh);
        let consts = TheoreticalConstants::new(profiles, &eq, mesh, params.rho_min, params.rho_max);
        moment_ok &= moment_estimates(&f, &eq, profiles, mesh, &consts).iter().all(|c| c.holds());

        let (dev, pi, ortho) = deviation_norms(&f, &eq, profiles, mesh);
        pyth = pyth.max(rel(dev * dev, pi * pi + ortho * ortho, dev * dev));
        let h = boltzmann_entropy(&f, &eq, mesh).expect("sandwich states are positive");
        let sq = dev * dev;
        sandwich_ok &= consts.c_h * sq <= h * (1.0 + 1e-12) && h <= consts.big_c_h * sq * (1.0 + 1e-12);

        let delta = match config.delta {
            DeltaChoice::Value(d) => d,
            _ => consts.default_delta(),
        };
        let (gamma, _) = modified_entropy(&f, None, &eq, profiles, &solver, delta, params.dt)
            .expect("sandwich states are positive");
        let spread = delta * consts.c1_star * consts.c_p;
        gamma_ok &= (consts.c_h - spread) * sq <= gamma * (1.0 + 1e-12)
            && gamma <= (consts.big_c_h + spread) * sq * (1.0 + 1e-12);

        let d = entropy_dissipation(&f, profiles, mesh).expect("sandwich states are positive");
        lower_ok &= dissipation_lower_bound(d, reaction_defect(&f, mesh), ortho, h, &consts).holds();
    }
    out.push(line("moment_estimates", moment_ok, format!("{samples} random sandwich states")));
    out.push(line("pythagoras", pyth <= 1e-12, format!("max relative defect {pyth:.2e}")));
    out.push(line("entropy_sandwich", sandwich_ok, format!("{samples} random sandwich states")));
    out.push(line("gamma_equivalence", gamma_ok, format!("{samples} random sandwich states")));
    out.push(line("dissipation_lower_bound", lower_ok, format!("{samples} random sandwich states")));

    out.push(first_step_check(config));
    out
}

fn first_step_check(config: &RunConfig) -> CheckLine {
    let name = "first_step";
    let eq = equilibrium_from_initial(&config.initial, &config.profiles, &config.mesh);
    let params = SchemeParams {
        enforce_bounds: false,
        ..config.params.clone()
    };
    let result = Monitor::new(&config.mesh, &config.profiles, &eq, &params, 0.0).and_then(|mut monitor| {
        monitor.observe(0, &config.initial, None)?;
        let (next, report) = implicit_step(&config.initial, &config.profiles, &config.mesh, &params)?;
        let (_, flags) = monitor.observe(1, &next, Some(&report))?;
        Ok((report, flags.expect("consecutive levels are checked")))
    });
    match result {
        Ok((report, flags)) => {
            let failed: Vec<_> = flags.named().iter().filter(|(_, c)| !c.holds()).map(|(n, _)| *n).collect();
            let ok = failed.is_empty() && report.bounds_violation <= params.bounds_slack(&config.profiles);
            let detail = if ok {
                format!("{} Picard sweeps, all step inequalities hold", report.picard_iterations)
            } else {
                format!("failed: {failed:?}, bounds violation {:.2e}", report.bounds_violation)
            };
            line(name, ok, detail)
        }
        Err(e) => line(name, false, e.to_string()),
    }
}
