//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kinreact::config::{parse_config, RunConfig};
use kinreact::{DiscreteProfiles, DistributionPair, PhaseMesh, ProfileFamily};

/// Seed from the `SEED` environment variable, 0 when unset.
pub fn seed() -> u64 {
    std::env::var("SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

pub fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed())
}

pub fn reference_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

pub fn reference_text() -> String {
    std::fs::read_to_string(reference_config_path()).expect("reference config is readable")
}

/// The reference configuration with `replace` applied to its text.
pub fn reference_with(replace: &[(&str, &str)]) -> RunConfig {
    let mut text = reference_text();
    for (from, to) in replace {
        assert!(text.contains(from), "{from:?} not in reference config");
        text = text.replace(from, to);
    }
    parse_config(&text, &std::env::temp_dir(), "reference".as_ref()).expect("reference config is valid")
}

pub fn gaussian_setup(n_x: usize, length: f64, n_v_half: usize, v_max: f64) -> (PhaseMesh, DiscreteProfiles) {
    let mesh = PhaseMesh::new(n_x, length, n_v_half, v_max).unwrap();
    let profiles = DiscreteProfiles::symmetric(&ProfileFamily::Gaussian { sigma: 1.0 }, &mesh).unwrap();
    (mesh, profiles)
}

/// Damped Newton iteration with a central-difference Jacobian and a dense
/// LU solve. Returns the root and the final residual sup norm.
pub fn newton<F>(residual: F, x0: DVector<f64>, tol: f64, max_iter: usize) -> (DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut r = residual(&x);
    for _ in 0..max_iter {
        if r.amax() <= tol {
            break;
        }
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let h = 1e-7 * x[c].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let col = (residual(&xp) - residual(&xm)) / (2.0 * h);
            jac.set_column(c, &col);
        }
        let step = jac.lu().solve(&(-&r)).expect("Jacobian is invertible near the root");
        let mut lambda = 1.0;
        loop {
            let trial = &x + &step * lambda;
            let rt = residual(&trial);
            if rt.amax() < r.amax() || lambda < 1e-4 {
                x = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    let res = r.amax();
    (x, res)
}

/// Residual of the fully implicit upwind scheme written out cell by cell,
/// unknowns ordered `f1` then `f2`, each row-major in `(i, j)`.
pub fn scheme_residual(
    x: &DVector<f64>,
    previous: &DistributionPair,
    profiles: &DiscreteProfiles,
    mesh: &PhaseMesh,
    dt: f64,
) -> DVector<f64> {
    let (n_x, n_v) = mesh.shape();
    let (dx, dv) = (mesh.dx(), mesh.dv());
    let idx = |k: usize, i: usize, j: usize| k * n_x * n_v + i * n_v + j;
    let mut rho = [vec![0.0; n_x], vec![0.0; n_x]];
    for (k, rho_k) in rho.iter_mut().enumerate() {
        for (i, r) in rho_k.iter_mut().enumerate() {
            for j in 0..n_v {
                *r += dv * x[idx(k, i, j)];
            }
        }
    }
    let mut out = DVector::zeros(2 * n_x * n_v);
    for k in 0..2 {
        let prev = if k == 0 { &previous.f1 } else { &previous.f2 };
        let chi = profiles.chi(k + 1);
        for i in 0..n_x {
            let left = (i + n_x - 1) % n_x;
            let right = (i + 1) % n_x;
            for j in 0..n_v {
                let v = mesh.velocity(j);
                let f = x[idx(k, i, j)];
                let transport = if v > 0.0 {
                    v * (f - x[idx(k, left, j)]) / dx
                } else {
                    v * (x[idx(k, right, j)] - f) / dx
                };
                out[idx(k, i, j)] = (f - prev[[i, j]]) / dt + transport - chi[j] + rho[1 - k][i] * f;
            }
        }
    }
    out
}

pub fn flatten(pair: &DistributionPair) -> DVector<f64> {
    DVector::from_iterator(pair.f1.len() * 2, pair.f1.iter().chain(pair.f2.iter()).copied())
}

/// One implicit reaction step for spatially uniform densities, solved as a
/// 2-unknown root-finding problem.
pub fn reaction_ode_step(rho1: f64, rho2: f64, dt: f64) -> (f64, f64) {
    let res = |x: &DVector<f64>| {
        let react = 1.0 - x[0] * x[1];
        DVector::from_vec(vec![(x[0] - rho1) / dt - react, (x[1] - rho2) / dt - react])
    };
    let (x, r) = newton(res, DVector::from_vec(vec![rho1, rho2]), 1e-15, 100);
    assert!(r <= 1e-13, "ODE oracle did not converge: {r}");
    (x[0], x[1])
}

/// Entropy dissipation by a plain triple loop with the logarithm split.
pub fn naive_dissipation(pair: &DistributionPair, profiles: &DiscreteProfiles, mesh: &PhaseMesh) -> f64 {
    let (n_x, n_v) = mesh.shape();
    let mut total = 0.0;
    for i in 0..n_x {
        for j in 0..n_v {
            for m in 0..n_v {
                let ff = pair.f1[[i, j]] * pair.f2[[i, m]];
                let cc = profiles.chi1[j] * profiles.chi2[m];
                total += mesh.dx() * mesh.dv() * mesh.dv() * (ff - cc) * (ff.ln() - cc.ln());
            }
        }
    }
    total
}

/// Dense matrix of the centered difference on the periodic grid.
pub fn centered_matrix(n: usize, dx: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, (i + 1) % n)] += 0.5 / dx;
        m[(i, (i + n - 1) % n)] -= 0.5 / dx;
    }
    m
}

/// Zero-mean solution of `-D^c D^c phi = r - mean(r)` through the bordered
/// system with a Lagrange multiplier for the mean constraint.
pub fn bordered_poisson(r: &[f64], dx: f64) -> Vec<f64> {
    let n = r.len();
    let d = centered_matrix(n, dx);
    let lap = -(&d * &d);
    let mean = r.iter().sum::<f64>() / n as f64;
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(&lap);
    for i in 0..n {
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
    }
    let mut b = DVector::zeros(n + 1);
    for i in 0..n {
        b[i] = r[i] - mean;
    }
    let x = a.lu().solve(&b).expect("bordered Poisson matrix is invertible for odd n");
    x.rows(0, n).iter().copied().collect()
}

/// Poincare constant as the inverse smallest nonzero singular value of the
/// dense centered-difference matrix.
pub fn poincare_by_svd(n: usize, dx: f64) -> f64 {
    let sv = centered_matrix(n, dx).singular_values();
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    let scale = s[n - 1];
    let smallest_nonzero = s.into_iter().find(|&x| x > 1e-10 * scale).unwrap();
    1.0 / smallest_nonzero
}
