//! Rigid motion of the solid and the prescribed deformation X*.

use std::sync::Arc;

use crate::error::{FsiError, Result};
use crate::extension::cofactor;
use crate::mesh::quadrature::{TET_POINTS, TET_WEIGHT};
use crate::mesh::{signed_volume, SolidMesh};
use crate::{Mat3, Vec3};

pub fn skew(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

/// Gram–Schmidt on the columns.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let c0 = r.column(0).normalize();
    let c1 = (r.column(1) - c0 * c0.dot(&r.column(1))).normalize();
    let c2 = c0.cross(&c1);
    Mat3::from_columns(&[c0, c1, c2])
}

/// R · exp(dt S(ω̃)), Rodrigues form, then re-orthonormalized.
pub fn integrate_rotation(r: &Mat3, omega_tilde: &Vec3, dt: f64) -> Mat3 {
    let phi = omega_tilde * dt;
    let theta = phi.norm();
    if theta == 0.0 {
        return *r;
    }
    let k = skew(&(phi / theta));
    let e = Mat3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos());
    orthonormalize(&(r * e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidState {
    pub h: Vec3,
    pub h_dot: Vec3,
    pub r: Mat3,
    pub omega: Vec3,
}

impl RigidState {
    pub fn rest() -> Self {
        RigidState { h: Vec3::zeros(), h_dot: Vec3::zeros(), r: Mat3::identity(), omega: Vec3::zeros() }
    }

    pub fn from_tilde(h: Vec3, r: Mat3, h_tilde_dot: Vec3, omega_tilde: Vec3) -> Self {
        RigidState { h, h_dot: r * h_tilde_dot, r, omega: r * omega_tilde }
    }

    pub fn h_tilde_dot(&self) -> Vec3 {
        self.r.transpose() * self.h_dot
    }

    pub fn omega_tilde(&self) -> Vec3 {
        self.r.transpose() * self.omega
    }

    pub fn orthonormality_defect(&self) -> f64 {
        (self.r.transpose() * self.r - Mat3::identity()).abs().max()
    }
}

/// Smooth start: r(0) = r'(0) = 0, r → 1.
fn ramp(t: f64, tau: Option<f64>) -> (f64, f64) {
    match tau {
        None => (1.0, 0.0),
        Some(tau) => {
            let s = t / tau;
            let e = (-s * s).exp();
            (1.0 - e, 2.0 * s / tau * e)
        }
    }
}

/// Nodal time series read from a `FSIDEFORM 1` file.
#[derive(Clone, Debug)]
pub struct Tabulated {
    pub dt: f64,
    pub x: Vec<Vec<Vec3>>,
    pub v: Vec<Vec<Vec3>>,
}

impl Tabulated {
    pub fn parse(text: &str) -> Result<Tabulated> {
        let err = |line: usize, msg: &str| FsiError::DeformationFormat { line, msg: msg.into() };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hl, header) = lines.next().ok_or_else(|| err(0, "empty file"))?;
        let mut it = header.split_whitespace();
        if it.next() != Some("FSIDEFORM") || it.next() != Some("1") {
            return Err(err(hl + 1, "missing `FSIDEFORM 1` header"));
        }
        let (mut nodes, mut samples, mut dt) = (None, None, None);
        for kv in it {
            let (k, v) = kv.split_once('=').ok_or_else(|| err(hl + 1, "expected key=value"))?;
            match k {
                "nodes" => nodes = v.parse::<usize>().ok(),
                "samples" => samples = v.parse::<usize>().ok(),
                "dt" => dt = v.parse::<f64>().ok(),
                _ => return Err(err(hl + 1, "unknown header key")),
            }
        }
        let (n, k, dt) = match (nodes, samples, dt) {
            (Some(n), Some(k), Some(dt)) if k >= 2 && dt > 0.0 => (n, k, dt),
            _ => return Err(err(hl + 1, "header needs nodes=N samples=K>=2 dt>0")),
        };
        let mut x = Vec::with_capacity(k);
        let mut v = Vec::with_capacity(k);
        for _ in 0..k {
            let mut xs = Vec::with_capacity(n);
            let mut vs = Vec::with_capacity(n);
            for _ in 0..n {
                let (ln, l) = lines.next().ok_or_else(|| err(0, "unexpected end of file"))?;
                let f: Vec<f64> = l
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(ln + 1, "cannot parse number"))?;
                if f.len() != 6 {
                    return Err(err(ln + 1, "expected X Y Z VX VY VZ"));
                }
                xs.push(Vec3::new(f[0], f[1], f[2]));
                vs.push(Vec3::new(f[3], f[4], f[5]));
            }
            x.push(xs);
            v.push(vs);
        }
        Ok(Tabulated { dt, x, v })
    }

    pub fn horizon(&self) -> f64 {
        (self.x.len() - 1) as f64 * self.dt
    }

    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        if !(t >= 0.0 && t <= self.horizon() * (1.0 + 1e-12)) {
            return Err(FsiError::DeformationOutOfRange {
                t,
                msg: format!("table covers [0, {}]", self.horizon()),
            });
        }
        let k = ((t / self.dt).floor() as usize).min(self.x.len() - 2);
        Ok((k, (t - k as f64 * self.dt) / self.dt))
    }
}

pub type AnalyticMap = Arc<dyn Fn(&Vec3, f64) -> (Vec3, Vec3) + Send + Sync>;

#[derive(Clone)]
pub enum DeformationFamily {
    Identity,
    /// X* = y (1 + (a/radius) r(t) sin ωt): surface displacement amplitude `a`.
    Dilation { amplitude: f64, omega: f64, radius: f64, ramp: Option<f64> },
    /// X* = y + a r(t) (|y|/radius)² sin(k y₁ − ωt) e₂.
    TravellingWave { amplitude: f64, omega: f64, wavenumber: f64, radius: f64, ramp: Option<f64> },
    Tabulated(Arc<Tabulated>),
    /// Arbitrary analytic map y, t ↦ (X*, ∂tX*).
    Analytic(AnalyticMap),
}

impl std::fmt::Debug for DeformationFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeformationFamily::Identity => write!(f, "Identity"),
            DeformationFamily::Dilation { amplitude, omega, .. } => {
                write!(f, "Dilation {{ amplitude: {amplitude}, omega: {omega} }}")
            }
            DeformationFamily::TravellingWave { amplitude, omega, .. } => {
                write!(f, "TravellingWave {{ amplitude: {amplitude}, omega: {omega} }}")
            }
            DeformationFamily::Tabulated(t) => write!(f, "Tabulated({} samples)", t.x.len()),
            DeformationFamily::Analytic(_) => write!(f, "Analytic"),
        }
    }
}

impl DeformationFamily {
    fn eval_node(&self, node: usize, y: &Vec3, t: f64) -> Result<(Vec3, Vec3)> {
        Ok(match self {
            DeformationFamily::Identity => (*y, Vec3::zeros()),
            DeformationFamily::Dilation { amplitude, omega, radius, ramp: tau } => {
                let (r, dr) = ramp(t, *tau);
                let (s, c) = (omega * t).sin_cos();
                let eps = amplitude / radius;
                (y * (1.0 + eps * r * s), y * (eps * (dr * s + r * omega * c)))
            }
            DeformationFamily::TravellingWave { amplitude, omega, wavenumber, radius, ramp: tau } => {
                let (r, dr) = ramp(t, *tau);
                let chi = y.norm_squared() / (radius * radius);
                let (s, c) = (wavenumber * y[0] - omega * t).sin_cos();
                let e2 = Vec3::y();
                (y + e2 * (amplitude * r * chi * s), e2 * (amplitude * chi * (dr * s - r * omega * c)))
            }
            DeformationFamily::Tabulated(tab) => {
                let (k, s) = tab.bracket(t)?;
                let lerp = |a: &Vec<Vec<Vec3>>| a[k][node] * (1.0 - s) + a[k + 1][node] * s;
                (lerp(&tab.x), lerp(&tab.v))
            }
            DeformationFamily::Analytic(f) => f(y, t),
        })
    }
}

#[derive(Clone, Debug)]
pub struct DeformationSample {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
}

/// Projected trajectory: positions and admissible velocities at uniform samples.
#[derive(Clone, Debug)]
struct Track {
    step: f64,
    x: Vec<Vec<Vec3>>,
    v: Vec<Vec<Vec3>>,
}

#[derive(Clone, Debug)]
pub struct DeformationField {
    pub family: DeformationFamily,
    pub rho_s: f64,
    pub mass: f64,
    track: Option<Arc<Track>>,
}

impl DeformationField {
    pub fn new(family: DeformationFamily, solid: &SolidMesh, rho_s: f64) -> Result<Self> {
        if !(rho_s > 0.0) {
            return Err(FsiError::InvalidParameter(format!("rho_s = {rho_s} must be positive")));
        }
        if let DeformationFamily::Tabulated(t) = &family {
            if t.x[0].len() != solid.nodes.len() {
                return Err(FsiError::InvalidParameter(format!(
                    "table has {} nodes, solid mesh has {}",
                    t.x[0].len(),
                    solid.nodes.len()
                )));
            }
        }
        Ok(DeformationField { family, rho_s, mass: rho_s * solid.volume(), track: None })
    }

    pub fn identity(solid: &SolidMesh, rho_s: f64) -> Result<Self> {
        Self::new(DeformationFamily::Identity, solid, rho_s)
    }

    pub fn is_projected(&self) -> bool {
        self.track.is_some()
    }

    /// Time up to which the field can be sampled.
    pub fn horizon(&self) -> f64 {
        match (&self.track, &self.family) {
            (Some(tr), _) => tr.step * (tr.x.len() - 1) as f64,
            (None, DeformationFamily::Tabulated(t)) => t.horizon(),
            _ => f64::INFINITY,
        }
    }

    pub fn raw_sample(&self, solid: &SolidMesh, t: f64) -> Result<DeformationSample> {
        let mut x = Vec::with_capacity(solid.nodes.len());
        let mut v = Vec::with_capacity(solid.nodes.len());
        for (i, y) in solid.nodes.iter().enumerate() {
            let (a, b) = self.family.eval_node(i, y, t)?;
            x.push(a);
            v.push(b);
        }
        Ok(DeformationSample { x, v })
    }

    fn raw_velocity(&self, solid: &SolidMesh, t: f64) -> Result<Vec<Vec3>> {
        Ok(self.raw_sample(solid, t)?.v)
    }

    /// X*(·,t) and ∂tX*(·,t) on the solid nodes.
    pub fn sample(&self, solid: &SolidMesh, t: f64) -> Result<DeformationSample> {
        let Some(tr) = &self.track else {
            return self.raw_sample(solid, t);
        };
        let last = tr.x.len() - 1;
        let end = tr.step * last as f64;
        if !(t >= 0.0 && t <= end * (1.0 + 1e-12)) {
            return Err(FsiError::DeformationOutOfRange {
                t,
                msg: format!("projected track covers [0, {end}]"),
            });
        }
        let k = ((t / tr.step).floor() as usize).min(last.saturating_sub(1));
        let s = ((t - k as f64 * tr.step) / tr.step).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) =
            (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s, -2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
        let x: Vec<Vec3> = (0..solid.nodes.len())
            .map(|i| {
                tr.x[k][i] * h00
                    + tr.v[k][i] * (h10 * tr.step)
                    + tr.x[k + 1][i] * h01
                    + tr.v[k + 1][i] * (h11 * tr.step)
            })
            .collect();
        let v = project_velocity(solid, self.rho_s, &x, &self.raw_velocity(solid, t)?, t)?;
        Ok(DeformationSample { x, v })
    }
}

fn p1_at(vals: &[Vec3], tet: &[usize; 4], lam: &[f64; 4]) -> Vec3 {
    (0..4).map(|a| vals[tet[a]] * lam[a]).sum()
}

fn tet_gradient(x: &[Vec3], solid: &SolidMesh, e: usize) -> Mat3 {
    let g = crate::mesh::barycentric_gradients(&solid.tet_corners(e));
    let t = &solid.tets[e];
    (0..4).map(|a| x[t[a]] * g[a].transpose()).sum()
}

/// Solid-volume moments of a deformed configuration `x` with velocity `v`.
struct Moments {
    volume: f64,
    first: Vec3,
    inertia: Mat3,
    lin: Vec3,
    ang: Vec3,
}

fn moments(solid: &SolidMesh, x: &[Vec3], v: &[Vec3]) -> Moments {
    let mut m = Moments { volume: 0.0, first: Vec3::zeros(), inertia: Mat3::zeros(), lin: Vec3::zeros(), ang: Vec3::zeros() };
    for (e, t) in solid.tets.iter().enumerate() {
        let vol = signed_volume(&solid.tet_corners(e));
        m.volume += vol;
        for lam in &TET_POINTS {
            let w = vol * TET_WEIGHT;
            let xq = p1_at(x, t, lam);
            let vq = p1_at(v, t, lam);
            m.first += xq * w;
            m.inertia += (Mat3::identity() * xq.norm_squared() - xq * xq.transpose()) * w;
            m.lin += vq * w;
            m.ang += xq.cross(&vq) * w;
        }
    }
    m
}

/// ∫_∂S v · (com ∇X) n dΓ with the solid-owner gradient on each facet.
fn surface_flux(solid: &SolidMesh, x: &[Vec3], v: &[Vec3]) -> f64 {
    solid
        .surface
        .iter()
        .map(|f| {
            let cn = cofactor(&tet_gradient(x, solid, f.owner)) * f.normal;
            let vm: Vec3 = f.nodes.iter().map(|&i| v[i]).sum::<Vec3>() / 3.0;
            f.area * vm.dot(&cn)
        })
        .sum()
}

fn min_det(solid: &SolidMesh, x: &[Vec3]) -> f64 {
    (0..solid.tets.len())
        .map(|e| tet_gradient(x, solid, e).determinant())
        .fold(f64::INFINITY, f64::min)
}

/// Removes the dilation and rigid components of `v` relative to the configuration `x`.
///
/// The dilation β(X − X̄) is fixed first from the H2 flux; it carries no linear
/// momentum (∫(X − X̄) = 0) and no angular momentum (∫X∧(X − X̄) = −∫X∧X̄ = 0),
/// while rigid fields carry no flux through the deformed surface, so the two
/// corrections do not interact and either order gives the same result.
pub fn project_velocity(solid: &SolidMesh, rho: f64, x: &[Vec3], v: &[Vec3], t: f64) -> Result<Vec<Vec3>> {
    let mom0 = moments(solid, x, &vec![Vec3::zeros(); x.len()]);
    let xbar = mom0.first / mom0.volume;
    let d: Vec<Vec3> = x.iter().map(|xi| xi - xbar).collect();
    let beta = -surface_flux(solid, x, v) / surface_flux(solid, x, &d);
    let v1: Vec<Vec3> = v.iter().zip(&d).map(|(vi, di)| vi + di * beta).collect();

    let mom = moments(solid, x, &v1);
    let mass = rho * mom.volume;
    let istar = mom.inertia * rho;
    let eig = istar.symmetric_eigenvalues();
    let cond = eig.max() / eig.min();
    if !(eig.min() > 0.0 && cond <= 1e12) {
        return Err(FsiError::SingularInertia { t, cond });
    }
    let mut a6 = nalgebra::Matrix6::<f64>::zeros();
    a6.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Mat3::identity() * mass));
    a6.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&xbar) * mass));
    a6.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&xbar) * mass));
    a6.fixed_view_mut::<3, 3>(3, 3).copy_from(&istar);
    let mut rhs = nalgebra::Vector6::<f64>::zeros();
    rhs.fixed_rows_mut::<3>(0).copy_from(&(mom.lin * rho));
    rhs.fixed_rows_mut::<3>(3).copy_from(&(mom.ang * rho));
    let sol = a6.lu().solve(&rhs).ok_or(FsiError::SingularInertia { t, cond: f64::INFINITY })?;
    let a = sol.fixed_rows::<3>(0).into_owned();
    let b = sol.fixed_rows::<3>(3).into_owned();
    Ok(v1.iter().zip(x).map(|(vi, xi)| vi - a - b.cross(xi)).collect())
}

/// Builds the admissible deformation: the projected velocity field integrated in
/// time (RK4 with step `sample_dt` up to `horizon`), so X* and ∂tX* stay consistent.
pub fn project_deformation(
    raw: &DeformationField,
    solid: &SolidMesh,
    horizon: f64,
    sample_dt: f64,
) -> Result<DeformationField> {
    if let Some(tr) = &raw.track {
        let mut v = Vec::with_capacity(tr.v.len());
        for (k, (xk, vk)) in tr.x.iter().zip(&tr.v).enumerate() {
            v.push(project_velocity(solid, raw.rho_s, xk, vk, k as f64 * tr.step)?);
        }
        let track = Track { step: tr.step, x: tr.x.clone(), v };
        return Ok(DeformationField { track: Some(Arc::new(track)), ..raw.clone() });
    }
    if !(sample_dt > 0.0 && horizon > 0.0) {
        return Err(FsiError::InvalidParameter("projection needs positive horizon and step".into()));
    }
    let steps = (horizon / sample_dt).ceil().max(1.0) as usize;
    let step = horizon / steps as f64;
    let rho = raw.rho_s;
    let x0: Vec<Vec3> = raw.raw_sample(solid, 0.0)?.x;
    let md = min_det(solid, &x0);
    if md < 0.1 {
        return Err(FsiError::H1Violation { t: 0.0, min_det: md });
    }
    let rhs = |x: &[Vec3], t: f64| -> Result<Vec<Vec3>> {
        project_velocity(solid, rho, x, &raw.raw_velocity(solid, t)?, t)
    };
    let axpy = |x: &[Vec3], k: &[Vec3], s: f64| -> Vec<Vec3> {
        x.iter().zip(k).map(|(a, b)| a + b * s).collect()
    };
    let mut xs = vec![x0.clone()];
    let mut vs = vec![rhs(&x0, 0.0)?];
    let mut x = x0;
    for n in 0..steps {
        let t = n as f64 * step;
        let k1 = vs[n].clone();
        let k2 = rhs(&axpy(&x, &k1, 0.5 * step), t + 0.5 * step)?;
        let k3 = rhs(&axpy(&x, &k2, 0.5 * step), t + 0.5 * step)?;
        let k4 = rhs(&axpy(&x, &k3, step), t + step)?;
        x = (0..x.len())
            .map(|i| x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (step / 6.0))
            .collect();
        let tn = (n + 1) as f64 * step;
        let md = min_det(solid, &x);
        if md < 0.1 {
            return Err(FsiError::H1Violation { t: tn, min_det: md });
        }
        vs.push(rhs(&x, tn)?);
        xs.push(x.clone());
    }
    let track = Track { step, x: xs, v: vs };
    Ok(DeformationField { track: Some(Arc::new(track)), ..raw.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintResiduals {
    /// ∫_∂S ∂tX*·(com∇X*)n dΓ (volume/time).
    pub flux: f64,
    pub lin_mom: Vec3,
    pub ang_mom: Vec3,
    pub min_det: f64,
    /// Max nodal |∂tX*|, used for scaling.
    pub velocity_scale: f64,
    pub volume: f64,
}

impl ConstraintResiduals {
    /// (|flux|/|S|, |lin|/(ρ|S|V), |ang|/(ρ|S|V)) with V the velocity scale (1 if zero).
    pub fn scaled(&self, rho: f64) -> (f64, f64, f64) {
        let vs = if self.velocity_scale > 0.0 { self.velocity_scale } else { 1.0 };
        let m = rho * self.volume * vs;
        (self.flux.abs() / self.volume / vs, self.lin_mom.norm() / m, self.ang_mom.norm() / m)
    }
}

pub fn residuals_of(solid: &SolidMesh, rho: f64, s: &DeformationSample, t: f64) -> Result<ConstraintResiduals> {
    let md = min_det(solid, &s.x);
    if md < 0.1 {
        return Err(FsiError::H1Violation { t, min_det: md });
    }
    let mom = moments(solid, &s.x, &s.v);
    Ok(ConstraintResiduals {
        flux: surface_flux(solid, &s.x, &s.v),
        lin_mom: mom.lin * rho,
        ang_mom: mom.ang * rho,
        min_det: md,
        velocity_scale: s.v.iter().map(|v| v.norm()).fold(0.0, f64::max),
        volume: solid.volume(),
    })
}

pub fn constraint_residuals(deform: &DeformationField, solid: &SolidMesh, t: f64) -> Result<ConstraintResiduals> {
    residuals_of(solid, deform.rho_s, &deform.sample(solid, t)?, t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InertiaTensor {
    pub i_star: Mat3,
    pub i_star_dot: Mat3,
    pub i0: Mat3,
}

pub fn inertia_of(solid: &SolidMesh, rho: f64, s: &DeformationSample) -> (Mat3, Mat3) {
    let mut i = Mat3::zeros();
    let mut di = Mat3::zeros();
    for (e, t) in solid.tets.iter().enumerate() {
        let w = signed_volume(&solid.tet_corners(e)) * TET_WEIGHT * rho;
        for lam in &TET_POINTS {
            let x = p1_at(&s.x, t, lam);
            let v = p1_at(&s.v, t, lam);
            i += (Mat3::identity() * x.norm_squared() - x * x.transpose()) * w;
            di += (Mat3::identity() * (2.0 * v.dot(&x)) - v * x.transpose() - x * v.transpose()) * w;
        }
    }
    (i, di)
}

pub fn reference_inertia(solid: &SolidMesh, rho: f64) -> Mat3 {
    let s = DeformationSample { x: solid.nodes.clone(), v: vec![Vec3::zeros(); solid.nodes.len()] };
    inertia_of(solid, rho, &s).0
}

pub fn inertia(deform: &DeformationField, solid: &SolidMesh, t: f64) -> Result<InertiaTensor> {
    let (i_star, i_star_dot) = inertia_of(solid, deform.rho_s, &deform.sample(solid, t)?);
    Ok(InertiaTensor { i_star, i_star_dot, i0: reference_inertia(solid, deform.rho_s) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_ball_in_box;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng) -> Vec3 {
        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    #[test]
    fn skew_matches_displayed_matrix() {
        let s = skew(&Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(s, Mat3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0));
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
    }

    #[test]
    fn skew_is_cross_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (w, v) = (rand_vec(&mut rng), rand_vec(&mut rng));
            assert!((skew(&w) * v - w.cross(&v)).norm() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = integrate_rotation(&Mat3::identity(), &Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), 1.0);
        let expect = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expect).abs().max() < 1e-15);
    }

    #[test]
    fn zero_rate_leaves_rotation_untouched() {
        let r = integrate_rotation(&Mat3::identity(), &Vec3::new(0.3, 0.1, 0.0), 0.7);
        assert_eq!(integrate_rotation(&r, &Vec3::zeros(), 0.1), r);
    }

    #[test]
    fn composed_steps_match_exponential() {
        let mut r = Mat3::identity();
        for _ in 0..1000 {
            r = integrate_rotation(&r, &Vec3::new(0.0, 0.0, 1.0), 1e-3);
        }
        let (s, c) = 1.0f64.sin_cos();
        let expect = Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expect).abs().max() < 1e-6);
    }

    #[test]
    fn ball_inertia_near_analytic() {
        let (_, solid) = generate_ball_in_box(1.0, 0.3, 32).unwrap();
        let i0 = reference_inertia(&solid, 1.0);
        let m = 4.0 / 3.0 * std::f64::consts::PI * 0.027;
        let exact = 0.4 * m * 0.09;
        for c in 0..3 {
            assert!((i0[(c, c)] - exact).abs() / exact < 0.02, "{} vs {exact}", i0[(c, c)]);
        }
        assert!((i0 - i0.transpose()).abs().max() < 1e-14 * exact);
    }

    #[test]
    fn tabulated_parse_and_interpolate() {
        let text = "FSIDEFORM 1 nodes=1 samples=2 dt=0.5\n0 0 0 1 0 0\n1 0 0 1 0 0\n";
        let tab = Tabulated::parse(text).unwrap();
        let fam = DeformationFamily::Tabulated(Arc::new(tab));
        let (x, v) = fam.eval_node(0, &Vec3::zeros(), 0.25).unwrap();
        assert!((x - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(v, Vec3::new(1.0, 0.0, 0.0));
        assert!(fam.eval_node(0, &Vec3::zeros(), 0.6).is_err());
    }

    #[test]
    fn ramp_starts_flat() {
        let (r, dr) = ramp(0.0, Some(0.3));
        assert_eq!((r, dr), (0.0, 0.0));
        let (r1, _) = ramp(10.0, Some(0.3));
        assert!((r1 - 1.0).abs() < 1e-12);
    }
}
