//! Run configuration: flat `section.key = value` text.
//!
//! Lines may also use `[section]` headers followed by bare `key = value`.
//! `#` starts a comment. Unknown or repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{FsiError, Result};
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    None,
    Dilation,
    TravellingWave,
    File,
}

impl FamilyKind {
    fn name(self) -> &'static str {
        match self {
            FamilyKind::None => "none",
            FamilyKind::Dilation => "dilation",
            FamilyKind::TravellingWave => "travelling_wave",
            FamilyKind::File => "file",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialVelocity {
    Zero,
    /// Steady Stokes lift of the rigid interface velocity h1 + ω0∧y.
    Rigid,
    File,
}

impl InitialVelocity {
    fn name(self) -> &'static str {
        match self {
            InitialVelocity::Zero => "zero",
            InitialVelocity::Rigid => "rigid",
            InitialVelocity::File => "file",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryConfig {
    pub box_half_width: f64,
    pub ball_radius: f64,
    pub resolution: usize,
    pub mesh_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformationConfig {
    pub family: FamilyKind,
    /// Surface displacement amplitude (length).
    pub amplitude: f64,
    /// Cycles per unit time.
    pub frequency: f64,
    /// Travelling-wave number; defaults to π / ball_radius.
    pub wavenumber: Option<f64>,
    /// Start-up time scale τ of the ramp 1 − exp(−(t/τ)²).
    pub ramp: Option<f64>,
    pub path: Option<PathBuf>,
    /// Apply the constraint projection before the run.
    pub project: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    /// 0 disables snapshots.
    pub snapshot_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub tol_picard: f64,
    pub tol_ext: f64,
    pub tol_linear: f64,
    /// Contact distance; defaults to two mesh cells.
    pub d_min: Option<f64>,
    pub max_picard: usize,
    pub max_ext_iter: usize,
    pub theta: f64,
    /// Anderson mixing depth for the Picard iteration; 0 is plain Picard.
    pub anderson: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialConfig {
    pub u0: InitialVelocity,
    pub u0_path: Option<PathBuf>,
    pub h1: Vec3,
    pub omega0: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub geometry: GeometryConfig,
    pub nu: f64,
    pub rho_s: f64,
    pub deformation: DeformationConfig,
    pub time: TimeConfig,
    pub tolerances: Tolerances,
    pub initial: InitialConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            geometry: GeometryConfig { box_half_width: 1.0, ball_radius: 0.3, resolution: 24, mesh_path: None },
            nu: 1.0,
            rho_s: 1.0,
            deformation: DeformationConfig {
                family: FamilyKind::None,
                amplitude: 0.0,
                frequency: 1.0,
                wavenumber: None,
                ramp: None,
                path: None,
                project: true,
            },
            time: TimeConfig { dt: 0.01, t_end: 0.1, snapshot_every: 0 },
            tolerances: Tolerances {
                tol_picard: 1e-8,
                tol_ext: 1e-6,
                tol_linear: 1e-10,
                d_min: None,
                max_picard: 50,
                max_ext_iter: 20,
                theta: 1.0,
                anderson: 0,
            },
            initial: InitialConfig {
                u0: InitialVelocity::Zero,
                u0_path: None,
                h1: Vec3::zeros(),
                omega0: Vec3::zeros(),
            },
            output_dir: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> FsiError {
    FsiError::ConfigInvalid(msg.into())
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| invalid(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>().map_err(|_| invalid(format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_vec3(key: &str, v: &str) -> Result<Vec3> {
    let parts: Vec<&str> = v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
    if parts.len() != 3 {
        return Err(invalid(format!("{key}: expected three components, got '{v}'")));
    }
    Ok(Vec3::new(parse_f64(key, parts[0])?, parse_f64(key, parts[1])?, parse_f64(key, parts[2])?))
}

/// Shortest text that parses back to the same value.
fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn fmt_vec3(v: &Vec3) -> String {
    format!("{}, {}, {}", fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(v[2]))
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<SimConfig> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| invalid(format!("line {}: unterminated section header", ln + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected 'key = value'", ln + 1)))?;
            let k = k.trim();
            let key = if k.contains('.') || section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            let v = v.trim().trim_matches('"').to_string();
            if entries.insert(key.clone(), v).is_some() {
                return Err(invalid(format!("line {}: '{key}' given twice", ln + 1)));
            }
        }

        let mut c = SimConfig::default();
        for (key, v) in &entries {
            let k = key.as_str();
            let v = v.as_str();
            match k {
                "geometry.box_half_width" => c.geometry.box_half_width = parse_f64(k, v)?,
                "geometry.ball_radius" => c.geometry.ball_radius = parse_f64(k, v)?,
                "geometry.resolution" => c.geometry.resolution = parse_usize(k, v)?,
                "geometry.mesh_path" => c.geometry.mesh_path = Some(PathBuf::from(v)),
                "fluid.nu" => c.nu = parse_f64(k, v)?,
                "solid.rho_s" => c.rho_s = parse_f64(k, v)?,
                "deformation.family" => {
                    c.deformation.family = match v {
                        "none" | "identity" => FamilyKind::None,
                        "dilation" => FamilyKind::Dilation,
                        "travelling_wave" | "traveling_wave" => FamilyKind::TravellingWave,
                        "file" => FamilyKind::File,
                        _ => return Err(invalid(format!("{k}: unknown family '{v}'"))),
                    }
                }
                "deformation.amplitude" => c.deformation.amplitude = parse_f64(k, v)?,
                "deformation.frequency" => c.deformation.frequency = parse_f64(k, v)?,
                "deformation.wavenumber" => c.deformation.wavenumber = Some(parse_f64(k, v)?),
                "deformation.ramp" => c.deformation.ramp = Some(parse_f64(k, v)?),
                "deformation.path" => c.deformation.path = Some(PathBuf::from(v)),
                "deformation.project" => c.deformation.project = parse_bool(k, v)?,
                "time.dt" => c.time.dt = parse_f64(k, v)?,
                "time.t_end" => c.time.t_end = parse_f64(k, v)?,
                "time.snapshot_every" => c.time.snapshot_every = parse_usize(k, v)?,
                "tolerances.tol_picard" => c.tolerances.tol_picard = parse_f64(k, v)?,
                "tolerances.tol_ext" => c.tolerances.tol_ext = parse_f64(k, v)?,
                "tolerances.tol_linear" => c.tolerances.tol_linear = parse_f64(k, v)?,
                "tolerances.d_min" => c.tolerances.d_min = Some(parse_f64(k, v)?),
                "tolerances.max_picard" => c.tolerances.max_picard = parse_usize(k, v)?,
                "tolerances.max_ext_iter" => c.tolerances.max_ext_iter = parse_usize(k, v)?,
                "tolerances.theta" => c.tolerances.theta = parse_f64(k, v)?,
                "tolerances.anderson" => c.tolerances.anderson = parse_usize(k, v)?,
                "initial.u0" => {
                    c.initial.u0 = match v {
                        "zero" => InitialVelocity::Zero,
                        "rigid" => InitialVelocity::Rigid,
                        "file" => InitialVelocity::File,
                        _ => return Err(invalid(format!("{k}: unknown initial velocity '{v}'"))),
                    }
                }
                "initial.u0_path" => c.initial.u0_path = Some(PathBuf::from(v)),
                "initial.h1" => c.initial.h1 = parse_vec3(k, v)?,
                "initial.omega0" => c.initial.omega0 = parse_vec3(k, v)?,
                "output.dir" => c.output_dir = Some(PathBuf::from(v)),
                _ => return Err(invalid(format!("unknown key '{k}'"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.mesh_path.is_none() && !(g.ball_radius > 0.0 && g.ball_radius < g.box_half_width) {
            return Err(invalid("need 0 < geometry.ball_radius < geometry.box_half_width"));
        }
        if !(self.nu > 0.0) {
            return Err(invalid("fluid.nu must be positive"));
        }
        if !(self.rho_s > 0.0) {
            return Err(invalid("solid.rho_s must be positive"));
        }
        let d = &self.deformation;
        if !(d.amplitude >= 0.0) {
            return Err(invalid("deformation.amplitude must be non-negative"));
        }
        if !(d.frequency > 0.0) {
            return Err(invalid("deformation.frequency must be positive"));
        }
        if d.ramp.is_some_and(|r| !(r > 0.0)) || d.wavenumber.is_some_and(|k| !k.is_finite()) {
            return Err(invalid("deformation.ramp must be positive and deformation.wavenumber finite"));
        }
        if d.family == FamilyKind::File && d.path.is_none() {
            return Err(invalid("deformation.family = file needs deformation.path"));
        }
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt < t.t_end) {
            return Err(invalid("need 0 < time.dt < time.t_end"));
        }
        let tol = &self.tolerances;
        let positive = [tol.tol_picard, tol.tol_ext, tol.tol_linear, tol.d_min.unwrap_or(1.0)];
        if positive.iter().any(|x| !(*x > 0.0)) || tol.max_picard == 0 || tol.max_ext_iter == 0 {
            return Err(invalid("tolerances must be positive"));
        }
        if !(tol.theta > 0.0 && tol.theta <= 1.0) {
            return Err(invalid("tolerances.theta must lie in (0, 1]"));
        }
        if self.initial.u0 == InitialVelocity::File && self.initial.u0_path.is_none() {
            return Err(invalid("initial.u0 = file needs initial.u0_path"));
        }
        if !(self.initial.h1.iter().chain(self.initial.omega0.iter()).all(|x| x.is_finite())) {
            return Err(invalid("initial.h1 and initial.omega0 must be finite"));
        }
        Ok(())
    }

    /// Canonical text; parses back to an identical configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let g = &self.geometry;
        kv("geometry.box_half_width", fmt_f64(g.box_half_width));
        kv("geometry.ball_radius", fmt_f64(g.ball_radius));
        kv("geometry.resolution", g.resolution.to_string());
        if let Some(p) = &g.mesh_path {
            kv("geometry.mesh_path", p.display().to_string());
        }
        kv("fluid.nu", fmt_f64(self.nu));
        kv("solid.rho_s", fmt_f64(self.rho_s));
        let d = &self.deformation;
        kv("deformation.family", d.family.name().to_string());
        kv("deformation.amplitude", fmt_f64(d.amplitude));
        kv("deformation.frequency", fmt_f64(d.frequency));
        if let Some(k) = d.wavenumber {
            kv("deformation.wavenumber", fmt_f64(k));
        }
        if let Some(r) = d.ramp {
            kv("deformation.ramp", fmt_f64(r));
        }
        if let Some(p) = &d.path {
            kv("deformation.path", p.display().to_string());
        }
        kv("deformation.project", d.project.to_string());
        kv("time.dt", fmt_f64(self.time.dt));
        kv("time.t_end", fmt_f64(self.time.t_end));
        kv("time.snapshot_every", self.time.snapshot_every.to_string());
        let t = &self.tolerances;
        kv("tolerances.tol_picard", fmt_f64(t.tol_picard));
        kv("tolerances.tol_ext", fmt_f64(t.tol_ext));
        kv("tolerances.tol_linear", fmt_f64(t.tol_linear));
        if let Some(x) = t.d_min {
            kv("tolerances.d_min", fmt_f64(x));
        }
        kv("tolerances.max_picard", t.max_picard.to_string());
        kv("tolerances.max_ext_iter", t.max_ext_iter.to_string());
        kv("tolerances.theta", fmt_f64(t.theta));
        kv("tolerances.anderson", t.anderson.to_string());
        kv("initial.u0", self.initial.u0.name().to_string());
        if let Some(p) = &self.initial.u0_path {
            kv("initial.u0_path", p.display().to_string());
        }
        kv("initial.h1", fmt_vec3(&self.initial.h1));
        kv("initial.omega0", fmt_vec3(&self.initial.omega0));
        if let Some(p) = &self.output_dir {
            kv("output.dir", p.display().to_string());
        }
        s
    }

    /// Number of steps covering [0, t_end].
    pub fn n_steps(&self) -> usize {
        ((self.time.t_end / self.time.dt) * (1.0 - 1e-12)).ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_dotted_keys_agree() {
        let a = SimConfig::parse("time.dt = 0.02\ntime.t_end = 1\nfluid.nu = 0.5\n").unwrap();
        let b = SimConfig::parse("[time]\ndt = 0.02 # step\nt_end = 1\n[fluid]\nnu = 0.5\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.time.dt, 0.02);
        assert_eq!(a.n_steps(), 50);
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(matches!(SimConfig::parse("fluid.mu = 1"), Err(FsiError::ConfigInvalid(_))));
        assert!(matches!(SimConfig::parse("fluid.nu = 1\nfluid.nu = 2"), Err(FsiError::ConfigInvalid(_))));
        assert!(matches!(SimConfig::parse("time.dt = 1\ntime.t_end = 0.5"), Err(FsiError::ConfigInvalid(_))));
        assert!(matches!(SimConfig::parse("tolerances.tol_ext = 0"), Err(FsiError::ConfigInvalid(_))));
    }

    #[test]
    fn vector_values() {
        let c = SimConfig::parse("initial.h1 = 0.5, 0, -1e-3\ninitial.u0 = rigid").unwrap();
        assert_eq!(c.initial.h1, Vec3::new(0.5, 0.0, -1e-3));
        assert_eq!(c.initial.u0, InitialVelocity::Rigid);
    }
}
