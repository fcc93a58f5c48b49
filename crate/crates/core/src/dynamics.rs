//! Time integration of the discretized system, periodic-orbit extraction and
//! Floquet multipliers.
//!
//! The integrator is the Dormand–Prince 5(4) pair with cubic Hermite dense
//! output. Periodic orbits are located from simulations (upward crossings of
//! `b` through its mean) and can be polished by single shooting, which also
//! allows following an orbit after it has lost stability.

use ndarray::{s, Array1, Array2, ArrayView1};
use num_complex::Complex;

use crate::discretize::DiscretizedSystem;
use crate::error::{Error, Result};
use crate::linalg::{self, Lu};
use crate::model::ModelFamily;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions<T: Real> {
    pub rtol: T,
    pub atol: T,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<T>,
    pub h_max: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> IntegratorOptions<T> {
    pub fn new(rtol: T, atol: T) -> Self {
        IntegratorOptions {
            rtol,
            atol,
            h0: None,
            h_max: None,
            max_steps: 2_000_000,
        }
    }
}

impl<T: Real> Default for IntegratorOptions<T> {
    fn default() -> Self {
        Self::new(T::lit(1e-8), T::lit(1e-10))
    }
}

// Dormand–Prince tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Raw output of [`dopri5`]: accepted times, states and derivatives.
#[derive(Debug, Clone)]
pub struct Solution<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<Array1<T>>,
    pub derivs: Vec<Array1<T>>,
    pub rejected: usize,
}

/// Adaptive Dormand–Prince integration of `dx/dt = f(t, x)` on `[t0, t_end]`.
///
/// The local error estimate satisfies `‖err / (atol + rtol max(|x|, |x_new|))‖_rms ≤ 1`
/// on every accepted step. When `keep_all` is false only the final point is stored.
pub fn dopri5<T, F>(mut f: F, x0: &Array1<T>, t0: T, t_end: T, opts: &IntegratorOptions<T>, keep_all: bool) -> Result<Solution<T>>
where
    T: Real,
    F: FnMut(T, &Array1<T>) -> Result<Array1<T>>,
{
    if !(t_end > t0) {
        return Err(Error::InvalidArgument("t_end must exceed the start time".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial state is not finite".into()));
    }
    let n = x0.len();
    let span = t_end - t0;
    let h_max = opts.h_max.unwrap_or(span);
    let err_norm = |err: &Array1<T>, x: &Array1<T>, xn: &Array1<T>| -> T {
        let mut acc = T::zero();
        for i in 0..n {
            let sc = opts.atol + opts.rtol * x[i].abs().max(xn[i].abs());
            let r = err[i] / sc;
            acc += r * r;
        }
        (acc / T::from_count(n.max(1))).sqrt()
    };

    let mut t = t0;
    let mut x = x0.clone();
    let mut k1 = f(t, &x)?;
    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            let scale = |v: &Array1<T>| {
                let zero = Array1::zeros(n);
                err_norm(v, &x, &zero).max(T::lit(1e-12))
            };
            let d0 = scale(&x);
            let d1 = scale(&k1);
            let guess = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
                T::lit(1e-6)
            } else {
                T::lit(0.01) * d0 / d1
            };
            guess.min(h_max)
        }
    };

    let mut sol = Solution {
        times: vec![t],
        states: vec![x.clone()],
        derivs: vec![k1.clone()],
        rejected: 0,
    };
    let mut ks: Vec<Array1<T>> = vec![Array1::zeros(n); 7];
    let mut steps = 0usize;
    let mut last = false;
    let mut err_old = T::lit(1e-4);
    while !last {
        if steps >= opts.max_steps {
            return Err(Error::Integration {
                t: t.to_f64_lossy(),
                reason: "step limit reached",
            });
        }
        let h_min = T::lit(16.0) * T::epsilon() * t.abs().max(span);
        if h < h_min {
            return Err(Error::Integration {
                t: t.to_f64_lossy(),
                reason: "step size underflow",
            });
        }
        if t + h >= t_end || t_end - (t + h) < h_min {
            h = t_end - t;
            last = true;
        }
        ks[0].assign(&k1);
        let mut failed = false;
        for stage in 1..7 {
            let mut xs = x.clone();
            for (j, kj) in ks.iter().enumerate().take(stage) {
                let a = A[stage][j];
                if a != 0.0 {
                    xs.scaled_add(h * T::lit(a), kj);
                }
            }
            match f(t + T::lit(C[stage]) * h, &xs) {
                Ok(k) if k.iter().all(|v| v.is_finite()) => ks[stage] = k,
                Ok(_) | Err(Error::NonFinite { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let (x_new, err) = if failed {
            (x.clone(), T::infinity())
        } else {
            let mut x_new = x.clone();
            let mut e = Array1::<T>::zeros(n);
            for j in 0..7 {
                if j < 6 && A[6][j] != 0.0 {
                    x_new.scaled_add(h * T::lit(A[6][j]), &ks[j]);
                }
                if E[j] != 0.0 {
                    e.scaled_add(h * T::lit(E[j]), &ks[j]);
                }
            }
            let en = err_norm(&e, &x, &x_new);
            (x_new, if en.is_finite() { en } else { T::infinity() })
        };
        if err <= T::one() {
            steps += 1;
            t = if last { t_end } else { t + h };
            x = x_new;
            // FSAL: the last stage is the derivative at the new point
            k1 = ks[6].clone();
            if keep_all || last {
                sol.times.push(t);
                sol.states.push(x.clone());
                sol.derivs.push(k1.clone());
            }
            // PI controller (β = 0.04): damps the step-size oscillation that
            // otherwise appears when stiff modes pin h at the stability limit
            let e = err.max(T::lit(1e-10));
            let fac = T::lit(0.9) * e.powf(T::lit(-0.17)) * err_old.powf(T::lit(0.04));
            err_old = err.max(T::lit(1e-4));
            h = (h * fac.min(T::lit(5.0)).max(T::lit(0.2))).min(h_max);
        } else {
            sol.rejected += 1;
            last = false;
            let fac = if err.is_finite() {
                (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.1))
            } else {
                T::lit(0.1)
            };
            h *= fac.min(T::lit(0.9));
        }
    }
    if !keep_all && sol.times.len() > 2 {
        sol.times.drain(1..sol.times.len() - 1);
        sol.states.drain(1..sol.states.len() - 1);
        sol.derivs.drain(1..sol.derivs.len() - 1);
    }
    Ok(sol)
}

/// Cubic Hermite interpolant on `[t0, t1]` evaluated at `t`.
fn hermite<T: Real>(t0: T, t1: T, y0: T, y1: T, d0: T, d1: T, t: T) -> T {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let h00 = two * s3 - three * s2 + T::one();
    let h10 = s3 - two * s2 + s;
    let h01 = -two * s3 + three * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Extrema of the cubic Hermite interpolant on one step (endpoints included).
fn hermite_extrema<T: Real>(t0: T, t1: T, y0: T, y1: T, d0: T, d1: T) -> (T, T) {
    let h = t1 - t0;
    // p(s) = a s³ + b s² + c s + y0 on [0, 1]
    let a = T::lit(2.0) * (y0 - y1) + h * (d0 + d1);
    let b = T::lit(3.0) * (y1 - y0) - h * (T::lit(2.0) * d0 + d1);
    let c = h * d0;
    let mut lo = y0.min(y1);
    let mut hi = y0.max(y1);
    let mut visit = |s: T| {
        if s > T::zero() && s < T::one() {
            let v = ((a * s + b) * s + c) * s + y0;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    };
    // p'(s) = 3a s² + 2b s + c
    let qa = T::lit(3.0) * a;
    let qb = T::lit(2.0) * b;
    if qa.abs() <= T::epsilon() * (qb.abs() + c.abs()) {
        if qb != T::zero() {
            visit(-c / qb);
        }
    } else {
        let disc = qb * qb - T::lit(4.0) * qa * c;
        if disc >= T::zero() {
            let r = disc.sqrt();
            visit((-qb + r) / (T::lit(2.0) * qa));
            visit((-qb - r) / (T::lit(2.0) * qa));
        }
    }
    (lo, hi)
}

/// A simulated trajectory of the discretized system.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    /// One row per accepted step.
    pub states: Array2<T>,
    pub derivs: Array2<T>,
    /// `F_M(x(t))`, the approximation of `b(t)`.
    pub b_values: Vec<T>,
    /// `d/dt F_M(x(t)) = ∇F_M(x) · x'`.
    pub b_derivs: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    /// Assembles a trajectory from samples; times must be strictly increasing.
    pub fn from_samples(
        times: Vec<T>,
        states: Array2<T>,
        derivs: Array2<T>,
        b_values: Vec<T>,
        b_derivs: Vec<T>,
    ) -> Result<Self> {
        let n = times.len();
        if states.nrows() != n || derivs.nrows() != n || b_values.len() != n || b_derivs.len() != n {
            return Err(Error::InvalidArgument("trajectory arrays have inconsistent lengths".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("trajectory times must increase strictly".into()));
        }
        Ok(Trajectory {
            times,
            states,
            derivs,
            b_values,
            b_derivs,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> ArrayView1<'_, T> {
        self.states.row(self.len() - 1)
    }

    fn locate(&self, t: T) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.len() - 1) - 1
    }

    /// Dense state at time `t` (cubic Hermite between accepted steps).
    pub fn state_at(&self, t: T) -> Array1<T> {
        let k = self.locate(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        Array1::from_shape_fn(self.states.ncols(), |i| {
            hermite(
                t0,
                t1,
                self.states[[k, i]],
                self.states[[k + 1, i]],
                self.derivs[[k, i]],
                self.derivs[[k + 1, i]],
                t,
            )
        })
    }

    /// Dense `b(t)`.
    pub fn b_at(&self, t: T) -> T {
        let k = self.locate(t);
        hermite(
            self.times[k],
            self.times[k + 1],
            self.b_values[k],
            self.b_values[k + 1],
            self.b_derivs[k],
            self.b_derivs[k + 1],
            t,
        )
    }
}

/// Integrates the discretized system from `x0` over `[0, t_end]`.
pub fn integrate<T: Real>(
    system: &DiscretizedSystem<T>,
    x0: &Array1<T>,
    t_end: T,
    rtol: T,
    atol: T,
) -> Result<Trajectory<T>> {
    integrate_with(system, x0, t_end, &IntegratorOptions::new(rtol, atol))
}

pub fn integrate_with<T: Real>(
    system: &DiscretizedSystem<T>,
    x0: &Array1<T>,
    t_end: T,
    opts: &IntegratorOptions<T>,
) -> Result<Trajectory<T>> {
    if x0.len() != system.dim() {
        return Err(Error::InvalidArgument("initial state length does not match M".into()));
    }
    let sol = dopri5(|_, x| system.rhs(x), x0, T::zero(), t_end, opts, true)?;
    let n = sol.times.len();
    let m = system.dim();
    let mut states = Array2::zeros((n, m));
    let mut derivs = Array2::zeros((n, m));
    let mut b_values = Vec::with_capacity(n);
    let mut b_derivs = Vec::with_capacity(n);
    for (k, (x, dx)) in sol.states.iter().zip(&sol.derivs).enumerate() {
        states.row_mut(k).assign(x);
        derivs.row_mut(k).assign(dx);
        b_values.push(system.f_m(x)?);
        b_derivs.push(system.gradient(x)?.dot(dx));
    }
    Trajectory::from_samples(sol.times, states, derivs, b_values, b_derivs)
}

/// Summary of a periodic orbit.
#[derive(Debug, Clone)]
pub struct OrbitSummary<T: Real> {
    pub period: T,
    pub b_max: T,
    pub b_min: T,
    /// State at the Poincaré section (an upward crossing of the mean of `b`).
    pub anchor_state: Array1<T>,
    /// Level of the Poincaré section.
    pub section_level: T,
    /// Number of crossings used and the coefficient of variation of the
    /// crossing intervals (small for a clean periodic signal).
    pub crossings: usize,
    pub period_cv: T,
    /// Floquet multipliers, sorted by descending modulus; empty until computed.
    pub multipliers: Vec<Complex<T>>,
}

/// Default fraction of a simulation discarded as transient.
pub const DEFAULT_TRANSIENT: f64 = 0.8;

/// Period and extremes of the oscillation in `b` after discarding the first
/// `transient_fraction` of the time span.
pub fn extract_orbit<T: Real>(traj: &Trajectory<T>, transient_fraction: T) -> Result<OrbitSummary<T>> {
    if !(transient_fraction >= T::zero() && transient_fraction < T::one()) {
        return Err(Error::InvalidArgument("transient fraction must lie in [0, 1)".into()));
    }
    if traj.len() < 3 {
        return Err(Error::NotPeriodic("trajectory too short".into()));
    }
    let t0 = traj.times[0];
    let t_end = traj.times[traj.len() - 1];
    let t_cut = t0 + transient_fraction * (t_end - t0);
    let start = traj.times.partition_point(|&t| t < t_cut);
    if traj.len() - start < 3 {
        return Err(Error::NotPeriodic("too few samples after the transient".into()));
    }

    // time-weighted mean of b after the cut (trapezoid rule)
    let mut area = T::zero();
    for k in start..traj.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        area += dt * (traj.b_values[k] + traj.b_values[k + 1]) / T::lit(2.0);
    }
    let level = area / (t_end - traj.times[start]);

    let mut crossings: Vec<T> = Vec::new();
    for k in start..traj.len() - 1 {
        let (b0, b1) = (traj.b_values[k], traj.b_values[k + 1]);
        if b0 < level && b1 >= level {
            // bisection on the Hermite interpolant
            let (mut lo, mut hi) = (traj.times[k], traj.times[k + 1]);
            for _ in 0..60 {
                let mid = (lo + hi) / T::lit(2.0);
                if traj.b_at(mid) < level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            crossings.push((lo + hi) / T::lit(2.0));
        }
    }
    if crossings.len() < 3 {
        return Err(Error::NotPeriodic(format!(
            "{} upward crossings of the mean after the transient",
            crossings.len()
        )));
    }
    let intervals: Vec<T> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let nint = T::from_count(intervals.len());
    let period = (crossings[crossings.len() - 1] - crossings[0]) / nint;
    let var = intervals.iter().map(|&d| (d - period) * (d - period)).sum::<T>() / nint;
    let period_cv = var.sqrt() / period;

    let first = crossings[0];
    let last = crossings[crossings.len() - 1];
    let mut b_min = T::infinity();
    let mut b_max = T::neg_infinity();
    let k_first = traj.locate(first);
    let k_last = traj.locate(last);
    for k in k_first..=k_last {
        let (lo, hi) = hermite_extrema(
            traj.times[k],
            traj.times[k + 1],
            traj.b_values[k],
            traj.b_values[k + 1],
            traj.b_derivs[k],
            traj.b_derivs[k + 1],
        );
        b_min = b_min.min(lo);
        b_max = b_max.max(hi);
    }
    Ok(OrbitSummary {
        period,
        b_max,
        b_min,
        anchor_state: traj.state_at(last),
        section_level: level,
        crossings: crossings.len(),
        period_cv,
        multipliers: Vec::new(),
    })
}

/// Monodromy matrix of an (approximately) periodic orbit.
#[derive(Debug, Clone)]
pub struct Monodromy<T: Real> {
    pub matrix: Array2<T>,
    /// `x(T)` from the anchor.
    pub end_state: Array1<T>,
    /// `‖x(T) - anchor‖_∞`.
    pub closure_defect: T,
    /// True when the closure defect exceeds `1e-3 ‖anchor‖_∞`.
    pub closure_warning: bool,
}

/// `Φ(T)` from `dΦ/dt = J(x(t)) Φ`, `Φ(0) = I`, integrated jointly with the
/// orbit under one step-size controller.
pub fn monodromy<T: Real>(
    system: &DiscretizedSystem<T>,
    anchor: &Array1<T>,
    period: T,
    rtol: T,
    atol: T,
) -> Result<Monodromy<T>> {
    let m = system.dim();
    if anchor.len() != m {
        return Err(Error::InvalidArgument("anchor length does not match M".into()));
    }
    let (end_state, matrix) = flow_with_sensitivity(system, anchor, period, &IntegratorOptions::new(rtol, atol))?;
    let closure_defect = max_abs(&(&end_state - anchor));
    let closure_warning = closure_defect > T::lit(1e-3) * max_abs(anchor);
    Ok(Monodromy {
        matrix,
        end_state,
        closure_defect,
        closure_warning,
    })
}

fn max_abs<T: Real>(v: &Array1<T>) -> T {
    v.iter().fold(T::zero(), |a, x| a.max(x.abs()))
}

/// `φ_t(x0)` and `∂φ_t/∂x0`.
fn flow_with_sensitivity<T: Real>(
    system: &DiscretizedSystem<T>,
    x0: &Array1<T>,
    t: T,
    opts: &IntegratorOptions<T>,
) -> Result<(Array1<T>, Array2<T>)> {
    let m = system.dim();
    let mut z0 = Array1::zeros(m + m * m);
    z0.slice_mut(s![..m]).assign(x0);
    for i in 0..m {
        z0[m + i * m + i] = T::one();
    }
    let d = &system.mesh.diff_sub;
    let rhs = |_: T, z: &Array1<T>| -> Result<Array1<T>> {
        let x = z.slice(s![..m]).to_owned();
        let phi = z.slice(s![m..]).into_shape_with_order((m, m)).expect("contiguous slice");
        let grad = system.gradient(&x)?;
        let mut out = Array1::zeros(m + m * m);
        out.slice_mut(s![..m]).assign(&system.rhs(&x)?);
        // J Φ = D Φ - 1 (∇Fᵀ Φ)
        let mut jp = d.dot(&phi);
        let row = grad.dot(&phi);
        for mut r in jp.rows_mut() {
            r -= &row;
        }
        out.slice_mut(s![m..]).assign(&Array1::from_iter(jp.iter().copied()));
        Ok(out)
    };
    let sol = dopri5(rhs, &z0, T::zero(), t, opts, false)?;
    let z = sol.states.last().expect("solution has an end point");
    let x_end = z.slice(s![..m]).to_owned();
    let phi = Array2::from_shape_vec((m, m), z.slice(s![m..]).to_vec()).expect("square block");
    Ok((x_end, phi))
}

/// Eigenvalues of the monodromy matrix sorted by descending modulus.
pub fn floquet_multipliers<T: Real>(monodromy: &Array2<T>) -> Result<Vec<Complex<T>>> {
    let mut mu = linalg::eigenvalues(monodromy)?;
    mu.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(mu)
}

/// Simulation settings for [`simulate_orbit`].
#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions<T: Real> {
    pub t_end: T,
    pub transient_fraction: T,
    pub rtol: T,
    pub atol: T,
}

impl<T: Real> OrbitOptions<T> {
    /// `t_end = 200 τ`, 80% transient.
    pub fn for_tau(tau: T) -> Self {
        OrbitOptions {
            t_end: T::lit(200.0) * tau,
            transient_fraction: T::lit(DEFAULT_TRANSIENT),
            rtol: T::lit(1e-9),
            atol: T::lit(1e-11),
        }
    }
}

/// Simulates from `x0`, extracts the orbit and computes its multipliers.
pub fn simulate_orbit<T: Real>(
    system: &DiscretizedSystem<T>,
    x0: &Array1<T>,
    opts: &OrbitOptions<T>,
) -> Result<OrbitSummary<T>> {
    let traj = integrate(system, x0, opts.t_end, opts.rtol, opts.atol)?;
    let mut orbit = extract_orbit(&traj, opts.transient_fraction)?;
    let mono = monodromy(system, &orbit.anchor_state, orbit.period, opts.rtol, opts.atol)?;
    orbit.multipliers = floquet_multipliers(&mono.matrix)?;
    Ok(orbit)
}

/// A periodic orbit refined by shooting.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit<T: Real> {
    pub anchor: Array1<T>,
    pub period: T,
    pub monodromy: Array2<T>,
    pub multipliers: Vec<Complex<T>>,
    /// `‖φ_T(x0) - x0‖_∞` at the returned point.
    pub residual: T,
    pub iterations: usize,
}

impl<T: Real> PeriodicOrbit<T> {
    /// The real multiplier with the smallest real part, if any.
    pub fn leftmost_real_multiplier(&self) -> Option<T> {
        let tol = T::lit(1e-8);
        self.multipliers
            .iter()
            .filter(|z| z.im.abs() <= tol * (T::one() + z.norm()))
            .map(|z| z.re)
            .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.min(v))))
    }

    /// Distance from the closest multiplier to 1.
    pub fn trivial_multiplier_error(&self) -> T {
        let one = Complex::new(T::one(), T::zero());
        self.multipliers.iter().map(|z| (*z - one).norm()).fold(T::infinity(), |a, b| a.min(b))
    }

    /// Extremes of `b` over one period, from a fresh dense simulation.
    pub fn b_range(&self, system: &DiscretizedSystem<T>, rtol: T, atol: T) -> Result<(T, T)> {
        let traj = integrate(system, &self.anchor, self.period, rtol, atol)?;
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for k in 0..traj.len() - 1 {
            let (a, b) = hermite_extrema(
                traj.times[k],
                traj.times[k + 1],
                traj.b_values[k],
                traj.b_values[k + 1],
                traj.b_derivs[k],
                traj.b_derivs[k + 1],
            );
            lo = lo.min(a);
            hi = hi.max(b);
        }
        Ok((lo, hi))
    }
}

/// Settings for [`refine_orbit`].
#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions<T: Real> {
    pub tol: T,
    pub max_iter: usize,
    pub rtol: T,
    pub atol: T,
}

impl<T: Real> Default for ShootingOptions<T> {
    fn default() -> Self {
        ShootingOptions {
            tol: T::lit(1e-9),
            max_iter: 30,
            rtol: T::lit(1e-10),
            atol: T::lit(1e-12),
        }
    }
}

/// Single-shooting Newton for `φ_T(x0) = x0`, with the phase fixed by
/// `f(x̂)·(x0 - x̂) = 0` where `x̂` is the initial guess.
///
/// The bordered system is solved in the least-squares sense, so a trivial
/// multiplier of geometric multiplicity two does not stall the iteration.
pub fn refine_orbit<T: Real>(
    system: &DiscretizedSystem<T>,
    guess: &Array1<T>,
    period_guess: T,
    opts: &ShootingOptions<T>,
) -> Result<PeriodicOrbit<T>> {
    let m = system.dim();
    let integ = IntegratorOptions::new(opts.rtol, opts.atol);
    let x_hat = guess.clone();
    let f_hat = system.rhs(&x_hat)?;
    let mut x = guess.clone();
    let mut period = period_guess;
    for it in 0..=opts.max_iter {
        let (x_end, phi) = flow_with_sensitivity(system, &x, period, &integ)?;
        let r = &x_end - &x;
        let res = max_abs(&r);
        if res <= opts.tol * (T::one() + max_abs(&x)) {
            let multipliers = floquet_multipliers(&phi)?;
            return Ok(PeriodicOrbit {
                anchor: x,
                period,
                monodromy: phi,
                multipliers,
                residual: res,
                iterations: it,
            });
        }
        if it == opts.max_iter {
            break;
        }
        // [Φ - I, f(x(T))] [dx; dT] = -r,   f(x̂)ᵀ dx = -f(x̂)ᵀ (x - x̂)
        let f_end = system.rhs(&x_end)?;
        let mut a = Array2::<T>::zeros((m + 1, m + 1));
        a.slice_mut(s![..m, ..m]).assign(&phi);
        for i in 0..m {
            a[[i, i]] -= T::one();
            a[[i, m]] = f_end[i];
            a[[m, i]] = f_hat[i];
        }
        let mut rhs = Array1::<T>::zeros(m + 1);
        rhs.slice_mut(s![..m]).assign(&r.mapv(|v| -v));
        rhs[m] = -f_hat.dot(&(&x - &x_hat));
        let step = least_squares(&a, &rhs)?;
        let dx = step.slice(s![..m]).to_owned();
        let dt = step[m];
        // keep the period positive and the update moderate
        let mut lambda = T::one();
        while period + lambda * dt <= T::lit(0.5) * period {
            lambda *= T::lit(0.5);
        }
        x.scaled_add(lambda, &dx);
        period += lambda * dt;
    }
    Err(Error::IterationLimit {
        what: "periodic-orbit shooting",
        iterations: opts.max_iter,
        residual: f64::NAN,
    })
}

/// Minimum-norm-regularized solve: `(AᵀA + εI) z = Aᵀ b` with `ε` tied to the
/// scale of `AᵀA`; exact for well-conditioned square systems up to `ε`.
fn least_squares<T: Real>(a: &Array2<T>, b: &Array1<T>) -> Result<Array1<T>> {
    if let Ok(lu) = Lu::new(a.clone()) {
        if lu.pivot_ratio() < T::lit(1e10) {
            return Ok(lu.solve(b));
        }
    }
    let mut ata = a.t().dot(a);
    let scale = (0..ata.nrows()).map(|i| ata[[i, i]]).fold(T::zero(), |x, y| x.max(y));
    let eps = T::lit(1e-12) * scale.max(T::min_positive_value());
    for i in 0..ata.nrows() {
        ata[[i, i]] += eps;
    }
    Ok(Lu::new(ata)?.solve(&a.t().dot(b)))
}

/// One point of a periodic-orbit branch.
#[derive(Debug, Clone)]
pub struct OrbitBranchPoint<T: Real> {
    pub param: T,
    pub orbit: PeriodicOrbit<T>,
}

/// Follows a periodic orbit through the parameter values `params` by
/// natural-parameter stepping, each point refined by [`refine_orbit`] from
/// the previous one.
pub fn continue_orbits<T: Real>(
    family: &ModelFamily<T>,
    m: usize,
    start: &PeriodicOrbit<T>,
    params: &[T],
    opts: &ShootingOptions<T>,
) -> Result<Vec<OrbitBranchPoint<T>>> {
    let mut out: Vec<OrbitBranchPoint<T>> = Vec::with_capacity(params.len());
    let mut prev = start.clone();
    for &p in params {
        let system = DiscretizedSystem::with_defaults(family.at(p)?, m)?;
        let orbit = refine_orbit(&system, &prev.anchor, prev.period, opts)?;
        prev = orbit.clone();
        out.push(OrbitBranchPoint { param: p, orbit });
    }
    Ok(out)
}

/// A period-doubling point: a real multiplier through -1.
#[derive(Debug, Clone)]
pub struct PeriodDoubling<T: Real> {
    pub param: T,
    pub multiplier: T,
    pub period: T,
}

/// Locates the first passage of the leftmost real multiplier through -1
/// along an orbit branch, refined by secant iteration in the parameter.
pub fn detect_period_doubling<T: Real>(
    family: &ModelFamily<T>,
    m: usize,
    branch: &[OrbitBranchPoint<T>],
    opts: &ShootingOptions<T>,
) -> Result<Option<PeriodDoubling<T>>> {
    let g = |o: &PeriodicOrbit<T>| o.leftmost_real_multiplier().map(|v| v + T::one());
    for w in branch.windows(2) {
        let (Some(g0), Some(g1)) = (g(&w[0].orbit), g(&w[1].orbit)) else {
            continue;
        };
        if g0 > T::zero() && g1 <= T::zero() {
            let (mut p0, mut p1, mut v0, mut v1) = (w[0].param, w[1].param, g0, g1);
            let mut best = (w[1].param, g1 - T::one(), w[1].orbit.period);
            let mut orbit = w[0].orbit.clone();
            for _ in 0..20 {
                let p = p1 - v1 * (p1 - p0) / (v1 - v0);
                let p = p.max(w[0].param.min(w[1].param)).min(w[0].param.max(w[1].param));
                let system = DiscretizedSystem::with_defaults(family.at(p)?, m)?;
                orbit = refine_orbit(&system, &orbit.anchor, orbit.period, opts)?;
                let Some(v) = g(&orbit) else { break };
                best = (p, v - T::one(), orbit.period);
                if v.abs() < T::lit(1e-8) || (p - p1).abs() < T::lit(1e-10) {
                    break;
                }
                p0 = p1;
                v0 = v1;
                p1 = p;
                v1 = v;
            }
            return Ok(Some(PeriodDoubling {
                param: best.0,
                multiplier: best.1,
                period: best.2,
            }));
        }
    }
    Ok(None)
}
