//! Run configuration: TOML text with dotted sections such as
//!
//! ```toml
//! mesh.n_x = 31
//! mesh.n_v_half = 16
//! mesh.v_max = 6.0
//! profile1.family = "gaussian"
//! initial.family = "perturbed-equilibrium"
//! initial.amplitude = 0.2
//! bounds.rho_min = 0.5
//! bounds.rho_max = 2.0
//! time.dt = 0.05
//! time.t_final = 20.0
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::Deserialize;

use crate::mesh::PhaseMesh;
use crate::profiles::{load_profile_table, DiscreteProfiles, ProfileFamily};
use crate::scheme::{check_maximum_principle, SchemeParams};
use crate::state::{DistributionPair, EquilibriumState};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}{}: {message}", field.as_deref().map(|f| format!(" (field `{f}`)")).unwrap_or_default())]
    Parse {
        line: usize,
        field: Option<String>,
        message: String,
    },
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CheckLevel {
    /// Skip the per-step inequality checks.
    Off,
    /// Check and report failures, but keep going.
    #[default]
    Log,
    /// Stop at the first failed check; also refuse out-of-bounds states.
    Fatal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

/// Coupling weight of the modified entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaChoice {
    Off,
    Value(f64),
    /// Half of the threshold that keeps the norm equivalence.
    Auto,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mesh: RawMesh,
    profile1: RawProfile,
    profile2: Option<RawProfile>,
    initial: RawInitial,
    bounds: RawBounds,
    time: RawTime,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    diagnostics: RawDiagnostics,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    n_x: usize,
    #[serde(default = "one")]
    torus_length: f64,
    n_v_half: usize,
    v_max: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
enum RawProfile {
    Uniform,
    Gaussian {
        #[serde(default = "one")]
        sigma: f64,
    },
    DoubleBump {
        center: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    Table {
        path: PathBuf,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
enum RawInitial {
    Equilibrium {
        #[serde(default = "one")]
        rho: f64,
    },
    UniformDensities {
        rho_a: f64,
        rho_b: f64,
    },
    PerturbedEquilibrium {
        #[serde(default = "one")]
        rho: f64,
        amplitude: f64,
        #[serde(default = "default_mode")]
        mode: u32,
    },
    Table {
        path: PathBuf,
    },
}

fn default_mode() -> u32 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    rho_min: f64,
    rho_max: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    dt: f64,
    t_final: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    picard_tol: f64,
    picard_max_iter: usize,
}

impl Default for RawSolver {
    fn default() -> Self {
        Self {
            picard_tol: 1e-12,
            picard_max_iter: 200,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDelta {
    Value(f64),
    Named(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDiagnostics {
    delta: Option<RawDelta>,
    stride: usize,
    check_level: CheckLevel,
    skip_fraction: f64,
}

impl Default for RawDiagnostics {
    fn default() -> Self {
        Self {
            delta: None,
            stride: 1,
            check_level: CheckLevel::default(),
            skip_fraction: 0.2,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    path: Option<PathBuf>,
    format: OutputFormat,
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mesh: PhaseMesh,
    pub profiles: DiscreteProfiles,
    pub initial: DistributionPair,
    pub params: SchemeParams,
    pub t_final: f64,
    pub n_steps: usize,
    pub delta: DeltaChoice,
    pub stride: usize,
    pub check_level: CheckLevel,
    pub skip_fraction: f64,
    pub output_path: PathBuf,
    pub output_format: OutputFormat,
}

impl RunConfig {
    /// Change the check level, keeping the bound enforcement in step.
    pub fn set_check_level(&mut self, level: CheckLevel) -> Result<(), ConfigError> {
        self.check_level = level;
        self.params.enforce_bounds = level == CheckLevel::Fatal;
        if self.params.enforce_bounds {
            validate_sandwich(&self.initial, &self.profiles, &self.params)?;
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let stem = path.file_stem().map(PathBuf::from).unwrap_or_else(|| "run".into());
    parse_config(&text, base, &stem)
}

/// Parse and validate configuration text. Relative paths are resolved
/// against `base`; the default output is `base/<stem>.<format>`.
pub fn parse_config(text: &str, base: &Path, stem: &Path) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;

    let m = &raw.mesh;
    let mesh = PhaseMesh::new(m.n_x, m.torus_length, m.n_v_half, m.v_max).map_err(|e| {
        let field = match e {
            crate::Error::NonPositiveExtent(f) if f.starts_with("n_x") => "mesh.n_x".to_string(),
            crate::Error::NonPositiveExtent(f) => format!("mesh.{f}"),
            _ => "mesh.n_x".to_string(),
        };
        invalid(&field, e)
    })?;

    let p1 = family_of(&raw.profile1, base, "profile1")?;
    let p2 = match &raw.profile2 {
        Some(p) => family_of(p, base, "profile2")?,
        None => p1.clone(),
    };
    let profiles = DiscreteProfiles::from_families(&p1, &p2, &mesh).map_err(|e| invalid("profile", e))?;

    let b = &raw.bounds;
    if !(b.rho_min > 0.0 && b.rho_min.is_finite()) {
        return Err(invalid("bounds.rho_min", "must be positive"));
    }
    if !(b.rho_max >= b.rho_min && b.rho_max.is_finite()) {
        return Err(invalid("bounds.rho_max", "must be finite and at least rho_min"));
    }

    let t = &raw.time;
    if !(t.t_final > 0.0 && t.t_final.is_finite()) {
        return Err(invalid("time.t_final", "must be positive"));
    }
    if !(t.dt > 0.0 && t.dt.is_finite()) {
        return Err(invalid("time.dt", "must be positive"));
    }
    let n_steps = (t.t_final / t.dt - 1e-9).ceil().max(1.0) as usize;

    let s = &raw.solver;
    if !(s.picard_tol > 0.0) {
        return Err(invalid("solver.picard_tol", "must be positive"));
    }
    if s.picard_max_iter == 0 {
        return Err(invalid("solver.picard_max_iter", "must be at least 1"));
    }

    let d = &raw.diagnostics;
    let delta = match &d.delta {
        None => DeltaChoice::Off,
        Some(RawDelta::Value(v)) if *v == 0.0 => DeltaChoice::Off,
        Some(RawDelta::Value(v)) if *v > 0.0 && v.is_finite() => DeltaChoice::Value(*v),
        Some(RawDelta::Named(s)) if s == "auto" => DeltaChoice::Auto,
        Some(_) => return Err(invalid("diagnostics.delta", "expected a nonnegative number or \"auto\"")),
    };
    if d.stride == 0 {
        return Err(invalid("diagnostics.stride", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&d.skip_fraction) {
        return Err(invalid("diagnostics.skip_fraction", "must lie in [0, 1)"));
    }

    let params = SchemeParams {
        dt: t.dt,
        rho_min: b.rho_min,
        rho_max: b.rho_max,
        picard_tol: s.picard_tol,
        picard_max_iter: s.picard_max_iter,
        enforce_bounds: d.check_level == CheckLevel::Fatal,
    };
    let initial = initial_state(&raw.initial, &mesh, &profiles, base)?;
    if params.enforce_bounds {
        validate_sandwich(&initial, &profiles, &params)?;
    }

    let output_format = raw.output.format;
    let output_path = match &raw.output.path {
        Some(p) => base.join(p),
        None => base.join(stem).with_extension(output_format.extension()),
    };

    Ok(RunConfig {
        mesh,
        profiles,
        initial,
        params,
        t_final: t.t_final,
        n_steps,
        delta,
        stride: d.stride,
        check_level: d.check_level,
        skip_fraction: d.skip_fraction,
        output_path,
        output_format,
    })
}

fn parse_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    let field = e.span().and_then(|s| {
        let start = text[..s.start.min(text.len())].rfind('\n').map_or(0, |p| p + 1);
        let rest = &text[start..];
        let key = rest.split('=').next()?.trim();
        (!key.is_empty() && !key.contains('\n') && !key.starts_with('[')).then(|| key.to_string())
    });
    ConfigError::Parse {
        line,
        field,
        message: e.message().to_string(),
    }
}

fn family_of(raw: &RawProfile, base: &Path, name: &str) -> Result<ProfileFamily, ConfigError> {
    Ok(match raw {
        RawProfile::Uniform => ProfileFamily::Uniform,
        RawProfile::Gaussian { sigma } => {
            if !(*sigma > 0.0) {
                return Err(invalid(&format!("{name}.sigma"), "must be positive"));
            }
            ProfileFamily::Gaussian { sigma: *sigma }
        }
        RawProfile::DoubleBump { center, sigma } => {
            if !(*sigma > 0.0) {
                return Err(invalid(&format!("{name}.sigma"), "must be positive"));
            }
            ProfileFamily::DoubleBump {
                center: *center,
                sigma: *sigma,
            }
        }
        RawProfile::Table { path } => {
            let full = base.join(path);
            let values = load_profile_table(&full).map_err(|source| ConfigError::Io { path: full, source })?;
            ProfileFamily::Table(values)
        }
    })
}

fn initial_state(
    raw: &RawInitial,
    mesh: &PhaseMesh,
    profiles: &DiscreteProfiles,
    base: &Path,
) -> Result<DistributionPair, ConfigError> {
    let positive = |field: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(field, "must be positive"))
        }
    };
    let pair = match raw {
        RawInitial::Equilibrium { rho } => {
            EquilibriumState::with_rho(positive("initial.rho", *rho)?, profiles, mesh).to_pair(mesh)
        }
        RawInitial::UniformDensities { rho_a, rho_b } => {
            let n = mesh.n_x();
            DistributionPair::from_densities(
                &Array1::from_elem(n, positive("initial.rho_a", *rho_a)?),
                &Array1::from_elem(n, positive("initial.rho_b", *rho_b)?),
                profiles,
                mesh,
            )
        }
        RawInitial::PerturbedEquilibrium { rho, amplitude, mode } => {
            let rho = positive("initial.rho", *rho)?;
            if !(amplitude.abs() < 1.0) {
                return Err(invalid("initial.amplitude", "must satisfy |a| < 1"));
            }
            let mut pair = EquilibriumState::with_rho(rho, profiles, mesh).to_pair(mesh);
            let t = mesh.torus_length();
            for i in 0..mesh.n_x() {
                let s = 1.0 + amplitude * (2.0 * PI * *mode as f64 * mesh.x_center(i) / t).cos();
                pair.f1.row_mut(i).mapv_inplace(|x| x * s);
                pair.f2.row_mut(i).mapv_inplace(|x| x * s);
            }
            pair
        }
        RawInitial::Table { path } => {
            let full = base.join(path);
            let text = fs::read_to_string(&full).map_err(|source| ConfigError::Io { path: full, source })?;
            read_state_table(&text, mesh)?
        }
    };
    if let Some((k, i, j)) = first_nonpositive(&pair) {
        return Err(invalid("initial", format!("f{k}[{i}, {j}] is not positive")));
    }
    Ok(pair)
}

/// Whitespace-separated values: `f1` row by row, then `f2`, each `n_x x 2L`.
pub fn read_state_table(text: &str, mesh: &PhaseMesh) -> Result<DistributionPair, ConfigError> {
    let values = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .map(|tok| tok.parse::<f64>().map_err(|_| invalid("initial.path", format!("not a number: {tok}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let (n_x, n_v) = mesh.shape();
    let n = n_x * n_v;
    if values.len() != 2 * n {
        return Err(invalid(
            "initial.path",
            format!("expected {} values, found {}", 2 * n, values.len()),
        ));
    }
    let f1 = Array2::from_shape_vec((n_x, n_v), values[..n].to_vec()).expect("length checked");
    let f2 = Array2::from_shape_vec((n_x, n_v), values[n..].to_vec()).expect("length checked");
    Ok(DistributionPair { f1, f2 })
}

fn first_nonpositive(pair: &DistributionPair) -> Option<(usize, usize, usize)> {
    for (k, f) in [(1, &pair.f1), (2, &pair.f2)] {
        if let Some(((i, j), _)) = f.indexed_iter().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
            return Some((k, i, j));
        }
    }
    None
}

fn validate_sandwich(
    initial: &DistributionPair,
    profiles: &DiscreteProfiles,
    params: &SchemeParams,
) -> Result<(), ConfigError> {
    let violation = check_maximum_principle(initial, profiles, params);
    if violation > params.bounds_slack(profiles) {
        return Err(invalid(
            "initial",
            format!("violates the declared bounds by {violation:.3e}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
mesh.n_x = 7
mesh.n_v_half = 4
mesh.v_max = 5.0
profile1.family = "gaussian"
initial.family = "perturbed-equilibrium"
initial.amplitude = 0.1
bounds.rho_min = 0.5
bounds.rho_max = 2.0
time.dt = 0.1
time.t_final = 1.0
"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        parse_config(text, Path::new("/tmp"), Path::new("run"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.params.picard_tol, 1e-12);
        assert_eq!(c.params.picard_max_iter, 200);
        assert_eq!(c.delta, DeltaChoice::Off);
        assert_eq!(c.stride, 1);
        assert_eq!(c.check_level, CheckLevel::Log);
        assert_eq!(c.n_steps, 10);
        assert_eq!(c.mesh.torus_length(), 1.0);
        assert_eq!(c.output_path, Path::new("/tmp/run.csv"));
        assert_eq!(c.profiles.chi1, c.profiles.chi2);
    }

    #[test]
    fn negative_final_time_is_rejected() {
        let text = MINIMAL.replace("time.t_final = 1.0", "time.t_final = -1.0");
        match parse(&text) {
            Err(ConfigError::Validation { field, .. }) => assert_eq!(field, "time.t_final"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_sandwich_equilibrium_is_valid() {
        let text = MINIMAL
            .replace("initial.family = \"perturbed-equilibrium\"", "initial.family = \"equilibrium\"\ninitial.rho = 1.5")
            .replace("initial.amplitude = 0.1\n", "")
            .replace("bounds.rho_min = 0.5", "bounds.rho_min = 1.5")
            .replace("bounds.rho_max = 2.0", "bounds.rho_max = 1.5")
            + "diagnostics.check_level = \"fatal\"\n";
        let c = parse(&text).unwrap();
        assert!(c.params.enforce_bounds);
    }

    #[test]
    fn out_of_bounds_initial_state_is_rejected_when_fatal() {
        let text = MINIMAL.replace("initial.amplitude = 0.1", "initial.amplitude = 0.9")
            + "diagnostics.check_level = \"fatal\"\n";
        assert!(matches!(parse(&text), Err(ConfigError::Validation { field, .. }) if field == "initial"));
        let relaxed = MINIMAL.replace("initial.amplitude = 0.1", "initial.amplitude = 0.9");
        assert!(parse(&relaxed).is_ok());
    }

    #[test]
    fn parse_errors_carry_line_and_field() {
        let text = MINIMAL.replace("mesh.v_max = 5.0", "mesh.v_max = \"fast\"");
        match parse(&text) {
            Err(ConfigError::Parse { line, field, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(field.as_deref(), Some("mesh.v_max"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let unknown = MINIMAL.to_string() + "time.bogus = 3\n";
        assert!(matches!(parse(&unknown), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn even_grid_and_bad_bounds() {
        let even = MINIMAL.replace("mesh.n_x = 7", "mesh.n_x = 8");
        assert!(matches!(parse(&even), Err(ConfigError::Validation { field, .. }) if field == "mesh.n_x"));
        let bounds = MINIMAL.replace("bounds.rho_max = 2.0", "bounds.rho_max = 0.25");
        assert!(matches!(parse(&bounds), Err(ConfigError::Validation { field, .. }) if field == "bounds.rho_max"));
    }

    #[test]
    fn delta_settings() {
        let auto = MINIMAL.to_string() + "diagnostics.delta = \"auto\"\n";
        assert_eq!(parse(&auto).unwrap().delta, DeltaChoice::Auto);
        let fixed = MINIMAL.to_string() + "diagnostics.delta = 0.01\n";
        assert_eq!(parse(&fixed).unwrap().delta, DeltaChoice::Value(0.01));
        let bad = MINIMAL.to_string() + "diagnostics.delta = \"big\"\n";
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn uniform_densities_family() {
        let text = MINIMAL
            .replace("initial.family = \"perturbed-equilibrium\"", "initial.family = \"uniform-densities\"\ninitial.rho_a = 1.2\ninitial.rho_b = 0.7")
            .replace("initial.amplitude = 0.1\n", "");
        let c = parse(&text).unwrap();
        let (r1, r2) = crate::state::densities(&c.initial, &c.mesh);
        assert!(r1.iter().all(|r| (r - 1.2).abs() < 1e-14));
        assert!(r2.iter().all(|r| (r - 0.7).abs() < 1e-14));
    }

    #[test]
    fn state_table_round_trip() {
        let mesh = PhaseMesh::new(3, 1.0, 1, 1.0).unwrap();
        let text = "1 2\n3 4\n5 6 # comment\n7 8 9 10 11 12\n";
        let pair = read_state_table(text, &mesh).unwrap();
        assert_eq!(pair.f1[[2, 1]], 6.0);
        assert_eq!(pair.f2[[0, 0]], 7.0);
        assert!(read_state_table("1 2 3", &mesh).is_err());
    }
}
