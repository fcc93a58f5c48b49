//! Reconstruction of the earlier direct discretization, kept as a baseline
//! for timing comparisons.
//!
//! The state is the vector of nodal values `y_j ≈ b(t + θ_j)` on the interior
//! nodes. The value at `θ_0 = 0` is not part of the state: every right-hand
//! side evaluation solves `y_0 = F(p)` for it, where `p` interpolates
//! `(y_0, y_1, …, y_M)` and `F` is treated as a black box. That inner solve is
//! what the integrated-state formulation removes.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cheb::{self, ChebyshevMesh};
use crate::discretize::{default_nq, equilibrium_lift, history_to_state, solve_equilibrium, DiscretizedSystem};
use crate::error::{Error, Result};
use crate::linalg::{self, Lu};
use crate::model::{ModelFamily, RenewalModel};
use crate::scalar::Real;

#[derive(Debug, Clone)]
struct LegacyTerm<T: Real> {
    /// `n_q × (M+1)`: nodal values on `Θ_M ∪ {0}` to values at the nodes.
    interp: Array2<T>,
    folded_weights: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct LegacySystem<T: Real> {
    pub mesh: ChebyshevMesh<T>,
    pub model: RenewalModel<T>,
    pub diff_full: Array2<T>,
    pub inner_tol: T,
    pub inner_max_iter: usize,
    terms: Vec<LegacyTerm<T>>,
}

/// Right-hand side value together with the work spent in the inner solve.
#[derive(Debug, Clone)]
pub struct LegacyRhs<T: Real> {
    pub value: Array1<T>,
    pub y0: T,
    pub inner_iterations: usize,
    pub f_evaluations: usize,
}

impl<T: Real> LegacySystem<T> {
    pub fn new(mesh: ChebyshevMesh<T>, model: RenewalModel<T>, nq: usize) -> Result<Self> {
        if (model.tau - mesh.tau()).abs() > T::lit(1e-12) * mesh.tau().max(T::one()) {
            return Err(Error::InvalidArgument("mesh and model tau differ".into()));
        }
        let terms = model
            .terms
            .iter()
            .map(|term| {
                let (nodes, weights) = cheb::quad_on_subinterval(term.support.0, term.support.1, nq)?;
                let interp = mesh.interpolation_matrix(&nodes)?;
                let folded_weights = nodes.iter().zip(&weights).map(|(&t, &w)| w * (term.kernel)(t)).collect();
                Ok(LegacyTerm { interp, folded_weights })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LegacySystem {
            diff_full: mesh.diff_full.clone(),
            mesh,
            model,
            inner_tol: T::lit(1e-12),
            inner_max_iter: 50,
            terms,
        })
    }

    pub fn with_defaults(model: RenewalModel<T>, m: usize) -> Result<Self> {
        let mesh = ChebyshevMesh::new(m, model.tau)?;
        Self::new(mesh, model, default_nq(m))
    }

    pub fn dim(&self) -> usize {
        self.mesh.m()
    }

    /// `F` applied to the interpolant through `full = (y_0, y_1, …, y_M)`.
    pub fn f_full(&self, full: &Array1<T>) -> Result<T> {
        let mut j = Vec::with_capacity(self.terms.len());
        for (i, (op, term)) in self.terms.iter().zip(&self.model.terms).enumerate() {
            let u = op.interp.dot(full);
            let v: T = if term.linear {
                op.folded_weights.dot(&u)
            } else {
                op.folded_weights.iter().zip(u.iter()).map(|(&w, &x)| w * (term.inner)(x)).sum()
            };
            if !v.is_finite() {
                return Err(Error::NonFinite { term: i });
            }
            j.push(v);
        }
        Ok((self.model.combiner)(&j))
    }

    /// Solves `y_0 = F(p(y_0, y))` by damped Newton with a forward-difference
    /// derivative, starting from `y_1`.
    pub fn solve_current_value(&self, y: &Array1<T>) -> Result<(T, usize, usize)> {
        let m = self.dim();
        if y.len() != m {
            return Err(Error::InvalidArgument("state length does not match M".into()));
        }
        let mut full = Array1::zeros(m + 1);
        full.slice_mut(s![1..]).assign(y);
        let mut evals = 0usize;
        let mut g = |y0: T, full: &mut Array1<T>| -> Result<T> {
            full[0] = y0;
            evals += 1;
            Ok(y0 - self.f_full(full)?)
        };
        let mut y0 = y[0];
        let mut gy = g(y0, &mut full)?;
        for it in 0..self.inner_max_iter {
            if gy.abs() <= self.inner_tol * y0.abs().max(T::one()) {
                return Ok((y0, it, evals));
            }
            let h = T::lit(1e-7) * y0.abs().max(T::one());
            let d = (g(y0 + h, &mut full)? - gy) / h;
            if d == T::zero() || !d.is_finite() {
                break;
            }
            let step = gy / d;
            let mut lambda = T::one();
            let mut next = y0 - step;
            let mut gn = g(next, &mut full)?;
            for _ in 0..10 {
                if gn.abs() < gy.abs() {
                    break;
                }
                lambda *= T::lit(0.5);
                next = y0 - lambda * step;
                gn = g(next, &mut full)?;
            }
            y0 = next;
            gy = gn;
        }
        if gy.abs() <= self.inner_tol * y0.abs().max(T::one()) {
            return Ok((y0, self.inner_max_iter, evals));
        }
        Err(Error::IterationLimit {
            what: "legacy inner solve",
            iterations: self.inner_max_iter,
            residual: gy.abs().to_f64_lossy(),
        })
    }

    /// Interior rows of the full differentiation matrix applied to `(y_0, y)`.
    pub fn rhs_detailed(&self, y: &Array1<T>) -> Result<LegacyRhs<T>> {
        let (y0, inner_iterations, f_evaluations) = self.solve_current_value(y)?;
        let d = &self.diff_full;
        let value = d.slice(s![1.., 1..]).dot(y) + &d.slice(s![1.., 0]).mapv(|c| c * y0);
        Ok(LegacyRhs {
            value,
            y0,
            inner_iterations,
            f_evaluations,
        })
    }

    pub fn rhs(&self, y: &Array1<T>) -> Result<Array1<T>> {
        Ok(self.rhs_detailed(y)?.value)
    }

    /// Central-difference Jacobian of [`rhs`](Self::rhs).
    pub fn jacobian_fd(&self, y: &Array1<T>) -> Result<Array2<T>> {
        fd_jacobian(|v| self.rhs(v), y)
    }
}

/// Central differences, as in the usual continuation packages.
fn fd_jacobian<T: Real>(f: impl Fn(&Array1<T>) -> Result<Array1<T>>, x: &Array1<T>) -> Result<Array2<T>> {
    let n = x.len();
    let mut jac = Array2::zeros((n, n));
    let mut xp = x.clone();
    for j in 0..n {
        let h = T::lit(1e-5) * x[j].abs().max(T::one());
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        jac.column_mut(j).assign(&((fp - fm) / (h + h)));
    }
    Ok(jac)
}

/// Newton on `f(x) = 0` with finite-difference Jacobians.
fn fd_newton<T: Real>(f: impl Fn(&Array1<T>) -> Result<Array1<T>>, x0: &Array1<T>, tol: T, max_iter: usize) -> Result<Array1<T>> {
    let mut x = x0.clone();
    let norm = |v: &Array1<T>| v.iter().fold(T::zero(), |a, x| a.max(x.abs()));
    for _ in 0..max_iter {
        let r = f(&x)?;
        if norm(&r) <= tol {
            return Ok(x);
        }
        let jac = fd_jacobian(&f, &x)?;
        x = &x - &Lu::new(jac)?.solve(&r);
    }
    let r = norm(&f(&x)?);
    if r <= tol {
        Ok(x)
    } else {
        Err(Error::IterationLimit {
            what: "finite-difference Newton",
            iterations: max_iter,
            residual: r.to_f64_lossy(),
        })
    }
}

/// One row of the timing comparison.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub m: usize,
    /// Median seconds per right-hand side call.
    pub rhs_legacy: f64,
    pub rhs_current: f64,
    pub rhs_ratio: f64,
    /// Seconds for the whole continuation run.
    pub cont_legacy: f64,
    pub cont_current: f64,
    pub cont_ratio: f64,
    /// Mean Newton iterations per legacy inner solve (random states).
    pub inner_iterations: f64,
    pub n_rhs_evals: usize,
    /// Random states redrawn because the legacy inner equation had no root.
    pub rejected_states: usize,
    /// Set when the median rests on a single sample.
    pub low_confidence: bool,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub n_rhs_evals: usize,
    pub n_continuation_points: usize,
    pub seed: u64,
    /// Continuation parameter and range.
    pub param: String,
    pub range: (f64, f64),
}

impl BenchOptions {
    pub fn new(param: impl Into<String>, range: (f64, f64)) -> Self {
        BenchOptions {
            n_rhs_evals: 200,
            n_continuation_points: 50,
            seed: 1,
            param: param.into(),
            range,
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Equilibrium continuation in the full state with finite-difference Newton
/// and an eigenvalue solve at every point, for a generic right-hand side.
fn timed_continuation(
    family: &ModelFamily<f64>,
    n_points: usize,
    b_start: f64,
    lift: impl Fn(f64) -> Array1<f64>,
    rhs_for: impl Fn(RenewalModel<f64>) -> Result<Box<dyn Fn(&Array1<f64>) -> Result<Array1<f64>>>>,
) -> Result<f64> {
    let (p0, p1) = family.range;
    let start = Instant::now();
    let mut x = lift(b_start);
    let mut prev = p0;
    for k in 0..n_points {
        let p = if n_points == 1 { p0 } else { p0 + (p1 - p0) * k as f64 / (n_points - 1) as f64 };
        // substeps from the previous point, halved while Newton fails
        let mut at = prev;
        let mut step = p - prev;
        let mut halvings = 0;
        let f = loop {
            let next = if (p - at).abs() <= step.abs() { p } else { at + step };
            let f = rhs_for(family.at(next)?)?;
            match fd_newton(&f, &x, 1e-9, 30) {
                Ok(xn) => {
                    x = xn;
                    at = next;
                    if at == p {
                        break f;
                    }
                }
                Err(e) => {
                    halvings += 1;
                    if halvings > 8 {
                        return Err(e);
                    }
                    step /= 2.0;
                }
            }
        };
        prev = p;
        let jac = fd_jacobian(&f, &x)?;
        let _ = linalg::eigenvalues(&jac)?;
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Times right-hand side evaluations and equilibrium continuations for the
/// legacy and current formulations on identical meshes, single-threaded.
pub fn bench_compare(model: &RenewalModel<f64>, m_list: &[usize], opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    if opts.n_rhs_evals == 0 {
        return Err(Error::InvalidArgument("n_rhs_evals must be positive".into()));
    }
    let family = ModelFamily::new(model.clone(), opts.param.clone(), opts.range)?;
    let b_start = solve_equilibrium(&family.at(opts.range.0)?, model.param(&opts.param).unwrap_or(1.0).max(0.5), 1e-13)?;
    let b_bar = solve_equilibrium(model, b_start, 1e-13)?;
    let upper = if b_bar > 0.0 { 2.0 * b_bar } else { 1.0 };
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mesh = ChebyshevMesh::new(m, model.tau)?;
        let nq = default_nq(m);
        let current = DiscretizedSystem::new(mesh.clone(), model.clone(), nq)?;
        let legacy = LegacySystem::new(mesh.clone(), model.clone(), nq)?;

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut t_cur = Vec::with_capacity(opts.n_rhs_evals);
        let mut t_leg = Vec::with_capacity(opts.n_rhs_evals);
        let mut inner = 0usize;
        let mut rejected = 0usize;
        while t_leg.len() < opts.n_rhs_evals {
            let y = Array1::from_iter((0..m).map(|_| rng.gen_range(0.0..upper)));
            // Many random states admit no solution y_0 of the inner equation;
            // those are redrawn and excluded from both timings.
            if legacy.solve_current_value(&y).is_err() {
                rejected += 1;
                if rejected > 100 * opts.n_rhs_evals {
                    return Err(Error::IterationLimit {
                        what: "admissible benchmark state search",
                        iterations: rejected,
                        residual: f64::NAN,
                    });
                }
                continue;
            }
            // the same history for the current method: integrate the interpolant
            let mut full = Array1::zeros(m + 1);
            full[0] = y[0];
            full.slice_mut(s![1..]).assign(&y);
            let x = history_to_state(|t| mesh.interpolate(&full, &[t]).map(|v| v[0]).unwrap_or(f64::NAN), &mesh, 2 * m + 2)?;

            let start = Instant::now();
            let out = legacy.rhs_detailed(&y)?;
            t_leg.push(start.elapsed().as_secs_f64());
            inner += out.inner_iterations;
            std::hint::black_box(&out);

            let start = Instant::now();
            let out = current.rhs(&x)?;
            t_cur.push(start.elapsed().as_secs_f64());
            std::hint::black_box(&out);
        }
        let rhs_legacy = median(&mut t_leg);
        let rhs_current = median(&mut t_cur);

        let mesh_c = mesh.clone();
        let cont_current = timed_continuation(
            &family,
            opts.n_continuation_points,
            b_start,
            |b| equilibrium_lift(b, &mesh_c),
            |model| {
                let sys = DiscretizedSystem::new(mesh_c.clone(), model, nq)?;
                Ok(Box::new(move |x: &Array1<f64>| sys.rhs(x)))
            },
        )?;
        let mesh_l = mesh.clone();
        let cont_legacy = timed_continuation(
            &family,
            opts.n_continuation_points,
            b_start,
            |b| Array1::from_elem(m, b),
            |model| {
                let sys = LegacySystem::new(mesh_l.clone(), model, nq)?;
                Ok(Box::new(move |y: &Array1<f64>| sys.rhs(y)))
            },
        )?;
        rows.push(BenchRow {
            m,
            rhs_legacy,
            rhs_current,
            rhs_ratio: rhs_legacy / rhs_current,
            cont_legacy,
            cont_current,
            cont_ratio: cont_legacy / cont_current,
            inner_iterations: inner as f64 / opts.n_rhs_evals as f64,
            n_rhs_evals: opts.n_rhs_evals,
            rejected_states: rejected,
            low_confidence: opts.n_rhs_evals == 1,
        });
    }
    Ok(rows)
}

/// CSV with the columns of the published timing table plus diagnostics.
pub fn bench_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "M,rhs_legacy_s,rhs_current_s,rhs_ratio,cont_legacy_s,cont_current_s,cont_ratio,inner_iterations,n_rhs_evals,rejected_states,low_confidence\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
            r.m,
            r.rhs_legacy,
            r.rhs_current,
            r.rhs_ratio,
            r.cont_legacy,
            r.cont_current,
            r.cont_ratio,
            r.inner_iterations,
            r.n_rhs_evals,
            r.rejected_states,
            r.low_confidence as u8
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cannibalism_model;
    use approx::assert_relative_eq;

    #[test]
    fn equilibrium_values_are_a_rest_point() {
        let model = cannibalism_model(2.0f64.exp(), 3.0).unwrap();
        let sys = LegacySystem::with_defaults(model, 12).unwrap();
        let out = sys.rhs_detailed(&Array1::from_elem(12, 2.0)).unwrap();
        assert_relative_eq!(out.y0, 2.0, epsilon = 1e-10);
        assert!(out.value.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn zero_functional() {
        let model = RenewalModel::linear_constant(0.0, 2.0).unwrap();
        let sys = LegacySystem::with_defaults(model, 6).unwrap();
        let y = Array1::from_iter((0..6).map(|i| 1.0 + i as f64));
        let out = sys.rhs_detailed(&y).unwrap();
        assert_eq!(out.y0, 0.0);
        let expect = sys.diff_full.slice(s![1.., 1..]).dot(&y);
        for (a, b) in out.value.iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_inner_solve_matches_closed_form() {
        // F linear: y0 = c0 y0 + r  =>  y0 = r / (1 - c0)
        let model = RenewalModel::linear_constant(0.4, 1.0).unwrap();
        let sys = LegacySystem::with_defaults(model, 8).unwrap();
        let y = Array1::from_iter((0..8).map(|i| (i as f64 * 0.7).cos()));
        let mut full = Array1::zeros(9);
        full.slice_mut(s![1..]).assign(&y);
        let r = sys.f_full(&full).unwrap();
        full[0] = 1.0;
        let c0 = sys.f_full(&full).unwrap() - r;
        let (y0, _, _) = sys.solve_current_value(&y).unwrap();
        assert_relative_eq!(y0, r / (1.0 - c0), epsilon = 1e-11);
    }

    #[test]
    fn csv_is_well_formed_for_one_sample() {
        let model = cannibalism_model(2.0f64.exp(), 3.0).unwrap();
        let mut opts = BenchOptions::new("log_gamma", (2.0, 2.5));
        opts.n_rhs_evals = 1;
        opts.n_continuation_points = 2;
        let rows = bench_compare(&model, &[6], &opts).unwrap();
        assert!(rows[0].low_confidence);
        let csv = bench_to_csv(&rows);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[1].starts_with("6,"));
        assert!(lines[1].ends_with(",1"));
    }
}
