//! The finite-dimensional ODE `dx/dt = D_M x - F_M(x) 1` obtained by
//! collocating the integrated state `v(t)(θ) = B(t+θ) - B(t)` on the
//! Chebyshev mesh.
//!
//! `x_j ≈ v(t)(θ_j)`; the history `b_t` is reconstructed as the degree `M-1`
//! polynomial `p' = Σ_j x_j ℓ_j'`, evaluated off-grid at each term's quadrature
//! nodes through `E_i = B_i D_M` (`B_i` interpolates from `Θ_M`).

use ndarray::{Array1, Array2};

use crate::cheb::{self, ChebyshevMesh};
use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::model::RenewalModel;
use crate::scalar::Real;

/// Default quadrature resolution per integral term.
pub fn default_nq(m: usize) -> usize {
    (2 * m).max(32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    #[default]
    Analytic,
    /// Central differences of the right-hand side.
    FiniteDifference,
}

/// Precomputed operators for one integral term.
#[derive(Debug, Clone)]
pub struct TermOperator<T: Real> {
    pub nodes: Vec<T>,
    /// `n_q × M`, maps the state to `p'` at the quadrature nodes.
    pub eval_matrix: Array2<T>,
    /// Quadrature weights times kernel values at the nodes.
    pub folded_weights: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct DiscretizedSystem<T: Real> {
    pub mesh: ChebyshevMesh<T>,
    pub model: RenewalModel<T>,
    pub terms: Vec<TermOperator<T>>,
    pub nq: usize,
    pub jacobian_mode: JacobianMode,
}

impl<T: Real> DiscretizedSystem<T> {
    pub fn new(mesh: ChebyshevMesh<T>, model: RenewalModel<T>, nq: usize) -> Result<Self> {
        let tol = T::lit(1e-12) * mesh.tau().max(T::one());
        if (model.tau - mesh.tau()).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "mesh tau {} does not match model tau {}",
                mesh.tau(),
                model.tau
            )));
        }
        if nq == 0 {
            return Err(Error::InvalidArgument("nq must be positive".into()));
        }
        let terms = model
            .terms
            .iter()
            .map(|term| {
                let (nodes, weights) = cheb::quad_on_subinterval(term.support.0, term.support.1, nq)?;
                let eval_matrix = mesh.derivative_eval_matrix(&nodes)?;
                let folded_weights = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&t, &w)| w * (term.kernel)(t))
                    .collect();
                Ok(TermOperator {
                    nodes,
                    eval_matrix,
                    folded_weights,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscretizedSystem {
            mesh,
            model,
            terms,
            nq,
            jacobian_mode: JacobianMode::Analytic,
        })
    }

    /// Builds mesh and system in one go with the default quadrature resolution.
    pub fn with_defaults(model: RenewalModel<T>, m: usize) -> Result<Self> {
        let mesh = ChebyshevMesh::new(m, model.tau)?;
        Self::new(mesh, model, default_nq(m))
    }

    pub fn dim(&self) -> usize {
        self.mesh.m()
    }

    fn check_dim(&self, x: &Array1<T>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "state has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Term integrals `J_i` and, for each term, `p'` at its nodes.
    fn integrals(&self, x: &Array1<T>) -> Result<(Vec<T>, Vec<Array1<T>>)> {
        self.check_dim(x)?;
        let mut js = Vec::with_capacity(self.terms.len());
        let mut us = Vec::with_capacity(self.terms.len());
        for (i, (op, term)) in self.terms.iter().zip(&self.model.terms).enumerate() {
            let u = op.eval_matrix.dot(x);
            let j = if term.linear {
                op.folded_weights.dot(&u)
            } else {
                op.folded_weights
                    .iter()
                    .zip(u.iter())
                    .map(|(&w, &v)| w * (term.inner)(v))
                    .sum()
            };
            if !j.is_finite() {
                return Err(Error::NonFinite { term: i });
            }
            js.push(j);
            us.push(u);
        }
        Ok((js, us))
    }

    /// `F_M(x)`: the reconstructed current value `b(t)`.
    pub fn f_m(&self, x: &Array1<T>) -> Result<T> {
        let (j, _) = self.integrals(x)?;
        let f = (self.model.combiner)(&j);
        if !f.is_finite() {
            return Err(Error::NonFinite { term: 0 });
        }
        Ok(f)
    }

    /// `D_M x - F_M(x) 1`.
    pub fn rhs(&self, x: &Array1<T>) -> Result<Array1<T>> {
        let f = self.f_m(x)?;
        let mut out = self.mesh.diff_sub.dot(x);
        out.mapv_inplace(|v| v - f);
        Ok(out)
    }

    /// `∇F_M(x) = Σ_i ∂G/∂J_i E_iᵀ (w_i ⊙ h_i'(E_i x))`.
    pub fn gradient(&self, x: &Array1<T>) -> Result<Array1<T>> {
        let (j, us) = self.integrals(x)?;
        let dg = (self.model.combiner_gradient)(&j);
        let mut grad = Array1::<T>::zeros(self.dim());
        for (((op, term), u), g) in self.terms.iter().zip(&self.model.terms).zip(&us).zip(dg) {
            let v: Array1<T> = if term.linear {
                op.folded_weights.clone()
            } else {
                op.folded_weights
                    .iter()
                    .zip(u.iter())
                    .map(|(&w, &ui)| w * (term.inner_derivative)(ui))
                    .collect()
            };
            grad.scaled_add(g, &op.eval_matrix.t().dot(&v));
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { term: 0 });
        }
        Ok(grad)
    }

    /// Jacobian `D_M - 1 ∇F_M(x)ᵀ` (or its finite-difference approximation,
    /// depending on [`JacobianMode`]).
    pub fn jacobian(&self, x: &Array1<T>) -> Result<Array2<T>> {
        match self.jacobian_mode {
            JacobianMode::Analytic => {
                let grad = self.gradient(x)?;
                let mut jac = self.mesh.diff_sub.clone();
                for mut row in jac.rows_mut() {
                    row -= &grad;
                }
                Ok(jac)
            }
            JacobianMode::FiniteDifference => self.jacobian_fd(x, T::lit(1e-6)),
        }
    }

    /// Central-difference Jacobian of [`rhs`](Self::rhs) with relative step `h`.
    pub fn jacobian_fd(&self, x: &Array1<T>, h: T) -> Result<Array2<T>> {
        let n = self.dim();
        let mut jac = Array2::<T>::zeros((n, n));
        let mut xp = x.clone();
        let two = T::lit(2.0);
        for j in 0..n {
            let step = h * (T::one() + x[j].abs());
            xp[j] = x[j] + step;
            let fp = self.rhs(&xp)?;
            xp[j] = x[j] - step;
            let fm = self.rhs(&xp)?;
            xp[j] = x[j];
            jac.column_mut(j).assign(&((fp - fm) / (two * step)));
        }
        Ok(jac)
    }

    /// The row vector `K_M` of a linear model (`∇F_M`, independent of `x`).
    pub fn linear_row(&self) -> Result<Array1<T>> {
        self.gradient(&Array1::zeros(self.dim()))
    }

    /// Same system with twice the quadrature resolution; used to estimate the
    /// quadrature part of the error.
    pub fn refined(&self) -> Result<Self> {
        let mut s = Self::new(self.mesh.clone(), self.model.clone(), 2 * self.nq)?;
        s.jacobian_mode = self.jacobian_mode;
        Ok(s)
    }

    /// `|F_M(x) - F_M^{(2 nq)}(x)|`.
    pub fn quadrature_error_estimate(&self, x: &Array1<T>) -> Result<T> {
        Ok((self.f_m(x)? - self.refined()?.f_m(x)?).abs())
    }

    /// Max-norm of `rhs(x)`.
    pub fn residual(&self, x: &Array1<T>) -> Result<T> {
        Ok(self.rhs(x)?.iter().fold(T::zero(), |a, v| a.max(v.abs())))
    }

    /// Newton's method on `rhs(x) = 0` in the full state space.
    pub fn newton_equilibrium(&self, x0: &Array1<T>, tol: T, max_iter: usize) -> Result<Array1<T>> {
        let mut x = x0.clone();
        let mut res = self.residual(&x)?;
        for _ in 0..max_iter {
            if res <= tol {
                return Ok(x);
            }
            let jac = self.jacobian(&x)?;
            let step = Lu::new(jac)?.solve(&self.rhs(&x)?);
            let mut lambda = T::one();
            let mut accepted = false;
            for _ in 0..20 {
                let trial = &x - &(&step * lambda);
                if let Ok(r) = self.residual(&trial) {
                    if r < res {
                        x = trial;
                        res = r;
                        accepted = true;
                        break;
                    }
                }
                lambda *= T::lit(0.5);
            }
            if !accepted {
                break;
            }
        }
        if res <= tol {
            Ok(x)
        } else {
            Err(Error::IterationLimit {
                what: "state-space Newton",
                iterations: max_iter,
                residual: res.to_f64_lossy(),
            })
        }
    }
}

/// `x̄_j = b̄ θ_j`.
pub fn equilibrium_lift<T: Real>(b_bar: T, mesh: &ChebyshevMesh<T>) -> Array1<T> {
    mesh.interior_nodes().mapv(|t| b_bar * t)
}

/// Recovers `b̄` from an equilibrium state as the mean of `x_j / θ_j`; fails
/// when the ratios disagree by more than `1e-6` relative.
pub fn equilibrium_project<T: Real>(x: &Array1<T>, mesh: &ChebyshevMesh<T>) -> Result<T> {
    if x.len() != mesh.m() {
        return Err(Error::InvalidArgument("state length does not match mesh".into()));
    }
    let ratios: Vec<T> = x.iter().zip(mesh.interior_nodes()).map(|(&x, &t)| x / t).collect();
    let mean = ratios.iter().copied().sum::<T>() / T::from_count(ratios.len());
    let lo = ratios.iter().fold(T::infinity(), |a, &r| a.min(r));
    let hi = ratios.iter().fold(T::neg_infinity(), |a, &r| a.max(r));
    let spread = (hi - lo) / mean.abs().max(T::lit(1e-9));
    if !(spread <= T::lit(1e-6)) {
        return Err(Error::NotAnEquilibrium {
            spread: spread.to_f64_lossy(),
        });
    }
    Ok(mean)
}

/// Scalar fixed point `b̄ = F(b̄)` on constant histories, by damped Newton with
/// a central-difference derivative.
pub fn solve_equilibrium<T: Real>(model: &RenewalModel<T>, guess: T, tol: T) -> Result<T> {
    const MAX_ITER: usize = 100;
    if !guess.is_finite() {
        return Err(Error::InvalidArgument("equilibrium guess must be finite".into()));
    }
    let g = |b: T| b - model.f_constant(b);
    let mut b = guess;
    let mut gb = g(b);
    for _ in 0..MAX_ITER {
        if gb.abs() <= tol {
            return Ok(b);
        }
        let h = T::lit(1e-7) * b.abs().max(T::one());
        let d = (g(b + h) - g(b - h)) / (T::lit(2.0) * h);
        if d == T::zero() || !d.is_finite() {
            break;
        }
        let step = gb / d;
        let mut lambda = T::one();
        let mut next = b - step;
        let mut gnext = g(next);
        for _ in 0..30 {
            if gnext.is_finite() && gnext.abs() < gb.abs() {
                break;
            }
            lambda *= T::lit(0.5);
            next = b - lambda * step;
            gnext = g(next);
        }
        if !gnext.is_finite() {
            break;
        }
        b = next;
        gb = gnext;
    }
    if gb.abs() <= tol {
        return Ok(b);
    }
    Err(Error::IterationLimit {
        what: "equilibrium Newton",
        iterations: MAX_ITER,
        residual: gb.abs().to_f64_lossy(),
    })
}

/// Integrated state of a history: `x_j = -∫_{θ_j}^0 φ(s) ds`.
pub fn history_to_state<T: Real>(
    phi: impl Fn(T) -> T,
    mesh: &ChebyshevMesh<T>,
    nq: usize,
) -> Result<Array1<T>> {
    mesh.interior_nodes()
        .iter()
        .map(|&t| cheb::integrate(&phi, t, T::zero(), nq).map(|v| -v))
        .collect()
}
