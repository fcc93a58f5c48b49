//! Characteristic roots of linear(ized) renewal equations: eigenvalues of the
//! discretized Jacobian, the true and discrete characteristic functions, and
//! a complex Newton root finder to cross-check them.

use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex;

use crate::cheb;
use crate::discretize::{equilibrium_lift, DiscretizedSystem};
use crate::error::{Error, Result};
use crate::linalg::{self, Lu};
use crate::model::{LinearKernel, RenewalModel};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumSource {
    Jacobian,
    CharDiscrete,
    CharTrue,
}

#[derive(Debug, Clone)]
pub struct Spectrum<T: Real> {
    /// Sorted by descending real part, ties by descending imaginary part.
    pub eigenvalues: Vec<Complex<T>>,
    pub rightmost: Complex<T>,
    pub source: SpectrumSource,
}

impl<T: Real> Spectrum<T> {
    /// Sorts a list of eigenvalues of a real matrix. Conjugate partners are
    /// symmetrized first so a pair never gets split by rounding in the real
    /// parts.
    pub fn from_unsorted(mut values: Vec<Complex<T>>, source: SpectrumSource) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty spectrum".into()));
        }
        let scale = values.iter().fold(T::one(), |a, z| a.max(z.norm()));
        let tol = T::lit(1e-8) * scale;
        let mut used = vec![false; values.len()];
        for i in 0..values.len() {
            if used[i] || values[i].im <= tol {
                continue;
            }
            let target = values[i].conj();
            let partner = (0..values.len())
                .filter(|&j| j != i && !used[j] && values[j].im < T::zero())
                .min_by(|&a, &b| {
                    (values[a] - target)
                        .norm()
                        .partial_cmp(&(values[b] - target).norm())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
            if let Some(j) = partner {
                if (values[j] - target).norm() <= tol {
                    let re = (values[i].re + values[j].re) / T::lit(2.0);
                    let im = (values[i].im - values[j].im) / T::lit(2.0);
                    values[i] = Complex::new(re, im);
                    values[j] = Complex::new(re, -im);
                    used[i] = true;
                    used[j] = true;
                }
            }
        }
        values.sort_by(|a, b| {
            b.re.partial_cmp(&a.re)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
        });
        Ok(Spectrum {
            rightmost: values[0],
            eigenvalues: values,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalues with nonnegative imaginary part, in spectrum order; one
    /// representative per conjugate pair.
    pub fn upper_half(&self) -> Vec<Complex<T>> {
        self.eigenvalues.iter().copied().filter(|z| z.im >= T::zero()).collect()
    }

    /// Number of eigenvalues within `tol` of `z` (a crude multiplicity count).
    pub fn multiplicity(&self, z: Complex<T>, tol: T) -> usize {
        self.eigenvalues.iter().filter(|w| (**w - z).norm() <= tol).count()
    }
}

/// Spectrum of the Jacobian at an equilibrium of the discretized system.
pub fn eigenvalues<T: Real>(system: &DiscretizedSystem<T>, x_eq: &Array1<T>) -> Result<Spectrum<T>> {
    let residual = system.residual(x_eq)?;
    // 1e-8, or the rounding level of D_M x when the precision is coarser
    let d_norm = system
        .mesh
        .diff_sub
        .rows()
        .into_iter()
        .map(|r| r.iter().fold(T::zero(), |a, v| a + v.abs()))
        .fold(T::zero(), |a, v| a.max(v));
    let x_norm = x_eq.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let tol = T::lit(1e-8).max(T::lit(10.0) * T::epsilon() * (T::one() + d_norm * x_norm));
    if !(residual < tol) {
        return Err(Error::NotAnEquilibrium {
            spread: residual.to_f64_lossy(),
        });
    }
    matrix_spectrum(&system.jacobian(x_eq)?)
}

/// Spectrum at the lift of the scalar equilibrium `b̄`.
pub fn eigenvalues_at<T: Real>(system: &DiscretizedSystem<T>, b_eq: T) -> Result<Spectrum<T>> {
    eigenvalues(system, &equilibrium_lift(b_eq, &system.mesh))
}

/// Spectrum of an arbitrary square matrix.
pub fn matrix_spectrum<T: Real>(a: &Array2<T>) -> Result<Spectrum<T>> {
    Spectrum::from_unsorted(linalg::eigenvalues(a)?, SpectrumSource::Jacobian)
}

type ComplexFn<T> = Arc<dyn Fn(Complex<T>) -> Result<Complex<T>> + Send + Sync>;

/// A characteristic function together with its derivative.
#[derive(Clone)]
pub struct CharFn<T: Real> {
    evaluate: ComplexFn<T>,
    derivative: ComplexFn<T>,
    pub source: SpectrumSource,
}

impl<T: Real> CharFn<T> {
    pub fn new(
        evaluate: impl Fn(Complex<T>) -> Result<Complex<T>> + Send + Sync + 'static,
        derivative: impl Fn(Complex<T>) -> Result<Complex<T>> + Send + Sync + 'static,
        source: SpectrumSource,
    ) -> Self {
        CharFn {
            evaluate: Arc::new(evaluate),
            derivative: Arc::new(derivative),
            source,
        }
    }

    pub fn eval(&self, z: Complex<T>) -> Result<Complex<T>> {
        (self.evaluate)(z)
    }

    pub fn deriv(&self, z: Complex<T>) -> Result<Complex<T>> {
        (self.derivative)(z)
    }
}

impl<T: Real> std::fmt::Debug for CharFn<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CharFn").field("source", &self.source).finish_non_exhaustive()
    }
}

/// Minimum quadrature resolution for the true characteristic function.
pub const CHAR_TRUE_NODES: usize = 256;

/// `χ(λ) = 1 - Σ_i w_i ∫ κ_i(θ) e^{λθ} dθ`, with every integral on an
/// `n`-point rule (`n` is raised to at least [`CHAR_TRUE_NODES`]).
pub fn char_true<T: Real>(kernels: &[LinearKernel<T>], n: usize) -> Result<CharFn<T>> {
    let n = n.max(CHAR_TRUE_NODES);
    // (θ, w_i κ_i(θ) q) for every node of every term
    let mut pts: Vec<(T, T)> = Vec::new();
    for k in kernels {
        let (x, q) = cheb::quad_on_subinterval(k.support.0, k.support.1, n)?;
        pts.extend(x.into_iter().zip(q).map(|(t, q)| (t, k.weight * q * (k.kernel)(t))));
    }
    let pts = Arc::new(pts);
    let p2 = Arc::clone(&pts);
    Ok(CharFn::new(
        move |z| {
            let s: Complex<T> = pts.iter().map(|&(t, c)| (z * t).exp() * c).sum();
            Ok(Complex::new(T::one(), T::zero()) - s)
        },
        move |z| {
            let s: Complex<T> = p2.iter().map(|&(t, c)| (z * t).exp() * (c * t)).sum();
            Ok(-s)
        },
        SpectrumSource::CharTrue,
    ))
}

/// Below this `|λτ|` the closed forms cancel badly and the Taylor series is
/// summed instead.
const SERIES_RADIUS: f64 = 0.1;

/// `Σ_{n≥0} c_n (-λ)^n τ^{n+1} / (n+1)!` summed to 18 terms, where `c_n = 1`
/// (`deriv = false`) or the series is differentiated term by term in `λ`.
fn exp_integral_series<T: Real>(z: Complex<T>, tau: T, deriv: bool) -> Complex<T> {
    let mut sum = Complex::new(T::zero(), T::zero());
    // term_n = (-λ)^n τ^{n+1}/(n+1)!
    let mut coef = tau;
    let mut power = Complex::new(T::one(), T::zero());
    for n in 0..18usize {
        if deriv {
            if n >= 1 {
                sum -= power * (coef * T::from_count(n));
                power *= -z;
            }
        } else {
            sum += power * coef;
            power *= -z;
        }
        coef = coef * tau / T::from_count(n + 2);
    }
    sum
}

/// `∫_0^τ e^{-λa} da = (1 - e^{-λτ})/λ`.
fn exp_integral<T: Real>(z: Complex<T>, tau: T) -> Complex<T> {
    if z.norm() * tau < T::lit(SERIES_RADIUS) {
        exp_integral_series(z, tau, false)
    } else {
        (Complex::new(T::one(), T::zero()) - (-z * tau).exp()) / z
    }
}

/// Closed form of `χ` for the constant kernel `k ≡ γ` on `[0, τ]`:
/// `χ(λ) = 1 - γ (1 - e^{-λτ}) / λ`.
pub fn char_constant<T: Real>(gamma: T, tau: T) -> CharFn<T> {
    CharFn::new(
        move |z| Ok(Complex::new(T::one(), T::zero()) - exp_integral(z, tau) * gamma),
        move |z| {
            // d/dλ of (1 - e^{-λτ})/λ
            let d = if z.norm() * tau < T::lit(SERIES_RADIUS) {
                exp_integral_series(z, tau, true)
            } else {
                ((-z * tau).exp() * tau - exp_integral(z, tau)) / z
            };
            Ok(-d * gamma)
        },
        SpectrumSource::CharTrue,
    )
}

/// `ψ_λ(θ) = (e^{λθ} - 1)/λ` (`= θ` at `λ = 0`): the integrated state of the
/// exponential solution `e^{λt}`.
pub fn psi_lambda<T: Real>(lambda: Complex<T>, theta: T) -> Complex<T> {
    if lambda.norm() * theta.abs() < T::lit(1e-8) {
        // θ + λθ²/2 + λ²θ³/6
        let t2 = theta * theta;
        Complex::new(theta, T::zero()) + lambda * (t2 / T::lit(2.0)) + lambda * lambda * (t2 * theta / T::lit(6.0))
    } else {
        ((lambda * theta).exp() - Complex::new(T::one(), T::zero())) / lambda
    }
}

/// Discrete characteristic function `χ_M(λ) = 1 + K_M (λI - D_M)^{-1} 1`.
#[derive(Debug, Clone)]
pub struct DiscreteChar<T: Real> {
    pub diff: Array2<T>,
    pub k_row: Array1<T>,
}

impl<T: Real> DiscreteChar<T> {
    /// `K_M` is the gradient of `F_M` at `x` (any `x` for a linear model).
    pub fn new(system: &DiscretizedSystem<T>, x: &Array1<T>) -> Result<Self> {
        Ok(DiscreteChar {
            diff: system.mesh.diff_sub.clone(),
            k_row: system.gradient(x)?,
        })
    }

    fn shifted(&self, z: Complex<T>) -> Array2<Complex<T>> {
        let n = self.diff.nrows();
        Array2::from_shape_fn((n, n), |(i, j)| {
            let d = Complex::new(-self.diff[[i, j]], T::zero());
            if i == j {
                d + z
            } else {
                d
            }
        })
    }

    fn factor(&self, z: Complex<T>) -> Result<Lu<Complex<T>>> {
        let pole = || Error::Pole {
            re: z.re.to_f64_lossy(),
            im: z.im.to_f64_lossy(),
        };
        let lu = Lu::new(self.shifted(z)).map_err(|_| pole())?;
        let scale = linalg::norm1(&self.diff) + z.norm();
        if lu.min_pivot() < T::lit(1e-13) * scale {
            return Err(pole());
        }
        Ok(lu)
    }

    fn ones(&self) -> Array1<Complex<T>> {
        Array1::from_elem(self.diff.nrows(), Complex::new(T::one(), T::zero()))
    }

    fn dot_k(&self, y: &Array1<Complex<T>>) -> Complex<T> {
        self.k_row.iter().zip(y.iter()).map(|(&k, &v)| v * k).sum()
    }

    pub fn eval(&self, z: Complex<T>) -> Result<Complex<T>> {
        let y = self.factor(z)?.solve(&self.ones());
        Ok(Complex::new(T::one(), T::zero()) + self.dot_k(&y))
    }

    /// `χ_M'(λ) = -K_M (λI - D_M)^{-2} 1`.
    pub fn deriv(&self, z: Complex<T>) -> Result<Complex<T>> {
        let lu = self.factor(z)?;
        let y = lu.solve(&lu.solve(&self.ones()));
        Ok(-self.dot_k(&y))
    }

    /// 1-norm condition number of `λI - D_M`.
    pub fn condition(&self, z: Complex<T>) -> T {
        linalg::condition_1norm(&self.shifted(z))
    }

    pub fn into_char_fn(self) -> CharFn<T> {
        let a = Arc::new(self);
        let b = Arc::clone(&a);
        CharFn::new(move |z| a.eval(z), move |z| b.deriv(z), SpectrumSource::CharDiscrete)
    }
}

/// `χ_M(λ)` in one call.
pub fn char_discrete<T: Real>(system: &DiscretizedSystem<T>, x: &Array1<T>, lambda: Complex<T>) -> Result<Complex<T>> {
    DiscreteChar::new(system, x)?.eval(lambda)
}

#[derive(Debug, Clone)]
pub struct RootSearch<T: Real> {
    pub roots: Vec<Complex<T>>,
    /// Seeds that did not converge, with the reason.
    pub failures: Vec<(Complex<T>, String)>,
}

/// Complex Newton from each seed. Converged roots closer than `10 tol` are
/// merged.
pub fn find_char_roots<T: Real>(f: &CharFn<T>, seeds: &[Complex<T>], tol: T) -> RootSearch<T> {
    const MAX_ITER: usize = 100;
    let mut roots: Vec<Complex<T>> = Vec::new();
    let mut failures = Vec::new();
    'seeds: for &seed in seeds {
        if !(seed.re.is_finite() && seed.im.is_finite()) {
            failures.push((seed, "non-finite seed".to_string()));
            continue;
        }
        let mut z = seed;
        let mut converged = false;
        for it in 0..MAX_ITER {
            let (fz, dz) = match f.eval(z).and_then(|v| Ok((v, f.deriv(z)?))) {
                Ok(v) => v,
                Err(Error::Pole { .. }) => {
                    let nudge = T::lit(1e-7) * (T::one() + z.norm());
                    z += Complex::new(nudge, nudge * T::lit(0.5));
                    continue;
                }
                Err(e) => {
                    failures.push((seed, e.to_string()));
                    continue 'seeds;
                }
            };
            if fz.norm() <= tol {
                converged = true;
                break;
            }
            if dz.norm() == T::zero() || !dz.re.is_finite() || !dz.im.is_finite() {
                failures.push((seed, format!("vanishing derivative after {it} iterations")));
                continue 'seeds;
            }
            z -= fz / dz;
        }
        if !converged {
            failures.push((seed, format!("no convergence in {MAX_ITER} iterations")));
            continue;
        }
        if !roots.iter().any(|r| (*r - z).norm() <= T::lit(10.0) * tol) {
            roots.push(z);
        }
    }
    roots.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    RootSearch { roots, failures }
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow<T: Real> {
    pub m: usize,
    /// Distance from each tracked reference root to the nearest eigenvalue at
    /// this `M`.
    pub errors: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy<T: Real> {
    pub reference_m: usize,
    pub reference_roots: Vec<Complex<T>>,
    pub rows: Vec<ConvergenceRow<T>>,
}

/// Errors of the `n_roots` rightmost roots (one per conjugate pair) against
/// the spectrum at `reference_m`, for every `M` in `m_list`.
pub fn convergence_study<T: Real>(
    model: &RenewalModel<T>,
    b_eq: T,
    m_list: &[usize],
    reference_m: usize,
    n_roots: usize,
) -> Result<ConvergenceStudy<T>> {
    if let Some(&bad) = m_list.iter().find(|&&m| m > reference_m) {
        return Err(Error::InvalidArgument(format!(
            "M = {bad} exceeds the reference M = {reference_m}"
        )));
    }
    let spectrum_at = |m: usize| -> Result<Spectrum<T>> {
        let sys = DiscretizedSystem::with_defaults(model.clone(), m)?;
        eigenvalues_at(&sys, b_eq)
    };
    let reference = spectrum_at(reference_m)?;
    let reference_roots: Vec<_> = reference.upper_half().into_iter().take(n_roots.max(1)).collect();
    let rows = m_list
        .iter()
        .map(|&m| {
            let spec = if m == reference_m { reference.clone() } else { spectrum_at(m)? };
            let errors = reference_roots
                .iter()
                .map(|r| {
                    spec.eigenvalues
                        .iter()
                        .map(|z| (*z - *r).norm())
                        .fold(T::infinity(), |a, b| a.min(b))
                })
                .collect();
            Ok(ConvergenceRow { m, errors })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceStudy {
        reference_m,
        reference_roots,
        rows,
    })
}

impl<T: Real> ConvergenceStudy<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("M");
        if self.reference_roots.len() == 1 {
            out.push_str(",error");
        } else {
            for k in 0..self.reference_roots.len() {
                let _ = write!(out, ",error_{k}");
            }
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{}", row.m);
            for e in &row.errors {
                let _ = write!(out, ",{:.16e}", e);
            }
            out.push('\n');
        }
        out
    }
}
