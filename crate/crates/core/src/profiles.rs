//! Discrete velocity profiles `chi_{k,j}`.
//!
//! A profile is sampled at the positive velocity midpoints only, normalized
//! to unit discrete mass and mirrored onto the negative half, so that
//! `chi_j == chi_{mirror(j)}` holds bit-for-bit.

use std::f64::consts::SQRT_2;
use std::path::Path;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::mesh::PhaseMesh;
use crate::sum::{csum, CompensatedSum};

/// Relative tolerance on the unit-mass invariant.
pub const UNIT_MASS_TOL: f64 = 1e-14;

/// Sample `profile` at the cell centers and normalize to unit discrete mass.
///
/// Only the cells with `v_j > 0` are evaluated; the negative half is a copy.
pub fn discretize_profile<F>(profile: F, mesh: &PhaseMesh) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    let l = mesh.n_v_half();
    let samples: Vec<f64> = (l..mesh.n_v()).map(|idx| profile(mesh.velocity(idx))).collect();
    normalize_half(&samples, mesh)
}

/// Normalize a raw table of `2L` cell-center values. The table must already
/// be symmetric (to 1e-12 relative); its positive half is kept and mirrored.
pub fn discretize_table(values: &[f64], mesh: &PhaseMesh) -> Result<Vec<f64>> {
    let n_v = mesh.n_v();
    if values.len() != n_v {
        return Err(Error::ProfileLength {
            expected: n_v,
            found: values.len(),
        });
    }
    for (idx, &v) in values.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveProfile { index: idx, value: v });
        }
    }
    for idx in mesh.n_v_half()..n_v {
        let a = values[idx];
        let b = values[mesh.mirror(idx)];
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
            return Err(Error::AsymmetricProfile { index: idx });
        }
    }
    normalize_half(&values[mesh.n_v_half()..], mesh)
}

/// Read a raw profile table: one value per line, blank lines and `#`
/// comments ignored.
pub fn load_profile_table(path: &Path) -> std::io::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = line.parse::<f64>().map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), lineno + 1),
            )
        })?;
        values.push(v);
    }
    Ok(values)
}

fn normalize_half(positive_half: &[f64], mesh: &PhaseMesh) -> Result<Vec<f64>> {
    let l = mesh.n_v_half();
    debug_assert_eq!(positive_half.len(), l);
    for (k, &v) in positive_half.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveProfile {
                index: l + k,
                value: v,
            });
        }
    }
    let half_mass = csum(positive_half.iter().map(|&c| mesh.dv() * c));
    let scale = 1.0 / (2.0 * half_mass);
    let mut chi = vec![0.0; mesh.n_v()];
    for (k, &v) in positive_half.iter().enumerate() {
        let c = scale * v;
        chi[l + k] = c;
        chi[l - 1 - k] = c;
    }
    Ok(chi)
}

/// Velocity moments of a discrete profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileMoments {
    /// `sum dv chi`
    pub mass: f64,
    /// `sum dv v chi`
    pub first: f64,
    /// `D = sum dv v^2 chi`
    pub second: f64,
    /// `Q = sum dv v^4 chi`
    pub fourth: f64,
    /// `sum dv v|v| chi`
    pub skew: f64,
}

pub fn profile_moments(chi: &[f64], mesh: &PhaseMesh) -> ProfileMoments {
    let dv = mesh.dv();
    let mut acc = [CompensatedSum::new(); 5];
    for (&c, &v) in chi.iter().zip(mesh.v_centers()) {
        let w = dv * c;
        acc[0].add(w);
        acc[1].add(w * v);
        acc[2].add(w * v * v);
        acc[3].add(w * v * v * v * v);
        acc[4].add(w * v * v.abs());
    }
    ProfileMoments {
        mass: acc[0].value(),
        first: acc[1].value(),
        second: acc[2].value(),
        fourth: acc[3].value(),
        skew: acc[4].value(),
    }
}

/// Built-in continuous profile families (unnormalized, even in `v`).
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileFamily {
    /// Constant on `[-v_max, v_max]`.
    Uniform,
    /// `exp(-v^2 / (2 sigma^2))`.
    Gaussian { sigma: f64 },
    /// Symmetrized pair of Gaussians centered at `+-center`.
    DoubleBump { center: f64, sigma: f64 },
    /// Raw cell-center values, `2L` entries.
    Table(Vec<f64>),
}

impl ProfileFamily {
    pub fn discretize(&self, mesh: &PhaseMesh) -> Result<Vec<f64>> {
        match self {
            Self::Uniform => {
                let c = 1.0 / (2.0 * mesh.v_max());
                discretize_profile(|_| c, mesh)
            }
            Self::Gaussian { sigma } => {
                check_width(*sigma)?;
                let s2 = 2.0 * sigma * sigma;
                discretize_profile(|v| (-v * v / s2).exp(), mesh)
            }
            Self::DoubleBump { center, sigma } => {
                check_width(*sigma)?;
                let s2 = 2.0 * sigma * sigma;
                let c = *center;
                discretize_profile(
                    |v| 0.5 * ((-(v - c).powi(2) / s2).exp() + (-(v + c).powi(2) / s2).exp()),
                    mesh,
                )
            }
            Self::Table(values) => discretize_table(values, mesh),
        }
    }

    /// Mass of the continuous (normalized) profile lying outside
    /// `[-v_max, v_max]`. `None` for tables, which carry no tail.
    pub fn tail_mass(&self, v_max: f64) -> Option<f64> {
        match self {
            Self::Uniform => Some(0.0),
            Self::Gaussian { sigma } => Some(erfc(v_max / (sigma * SQRT_2))),
            Self::DoubleBump { center, sigma } => {
                let s = sigma * SQRT_2;
                Some(0.5 * (erfc((v_max - center) / s) + erfc((v_max + center) / s)))
            }
            Self::Table(_) => None,
        }
    }
}

fn check_width(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter("profile width sigma must be positive"))
    }
}

/// The pair of discrete profiles with their second and fourth moments.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProfiles {
    pub chi1: Vec<f64>,
    pub chi2: Vec<f64>,
    pub d1: f64,
    pub d2: f64,
    pub q1: f64,
    pub q2: f64,
    /// Truncated tail mass of the continuous profiles, when known.
    pub tail1: Option<f64>,
    pub tail2: Option<f64>,
}

impl DiscreteProfiles {
    /// Validate two discrete profiles and compute their moments.
    pub fn new(chi1: Vec<f64>, chi2: Vec<f64>, mesh: &PhaseMesh) -> Result<Self> {
        for chi in [&chi1, &chi2] {
            validate(chi, mesh)?;
        }
        let m1 = profile_moments(&chi1, mesh);
        let m2 = profile_moments(&chi2, mesh);
        Ok(Self {
            chi1,
            chi2,
            d1: m1.second,
            d2: m2.second,
            q1: m1.fourth,
            q2: m2.fourth,
            tail1: None,
            tail2: None,
        })
    }

    pub fn from_families(
        family1: &ProfileFamily,
        family2: &ProfileFamily,
        mesh: &PhaseMesh,
    ) -> Result<Self> {
        let mut p = Self::new(family1.discretize(mesh)?, family2.discretize(mesh)?, mesh)?;
        p.tail1 = family1.tail_mass(mesh.v_max());
        p.tail2 = family2.tail_mass(mesh.v_max());
        Ok(p)
    }

    /// Same profile for both species.
    pub fn symmetric(family: &ProfileFamily, mesh: &PhaseMesh) -> Result<Self> {
        Self::from_families(family, family, mesh)
    }

    /// Profile of species `k` (1 or 2).
    pub fn chi(&self, k: usize) -> &[f64] {
        match k {
            1 => &self.chi1,
            2 => &self.chi2,
            _ => panic!("species index must be 1 or 2, got {k}"),
        }
    }

    pub fn d(&self, k: usize) -> f64 {
        if k == 1 {
            self.d1
        } else {
            self.d2
        }
    }
}

fn validate(chi: &[f64], mesh: &PhaseMesh) -> Result<()> {
    if chi.len() != mesh.n_v() {
        return Err(Error::ProfileLength {
            expected: mesh.n_v(),
            found: chi.len(),
        });
    }
    for (idx, &c) in chi.iter().enumerate() {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NonPositiveProfile { index: idx, value: c });
        }
        if c != chi[mesh.mirror(idx)] {
            return Err(Error::AsymmetricProfile { index: idx });
        }
    }
    let mass = profile_moments(chi, mesh).mass;
    if (mass - 1.0).abs() > UNIT_MASS_TOL {
        return Err(Error::InvalidParameter("velocity profile must have unit discrete mass"));
    }
    Ok(())
}
