//! Scalar renewal equations `b(t) = F(b_t)` in the canonical form
//!
//! ```text
//! F(φ) = G(J_1, ..., J_m),    J_i = ∫_{a_i}^{b_i} κ_i(θ) h_i(φ(θ)) dθ,
//! ```
//!
//! with `[a_i, b_i] ⊆ [-τ, 0]`, plus the built-in SIRS, Nicholson blowflies and
//! cannibalism models.
//!
//! The built-in nonlinearities are only locally Lipschitz, so solutions are
//! meaningful on bounded trajectories.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cheb;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
pub type CombinerFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
pub type GradientFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
pub type Params<T> = BTreeMap<String, T>;
type Factory<T> = Arc<dyn Fn(&Params<T>) -> Result<RenewalModel<T>> + Send + Sync>;

/// Quadrature resolution used for kernel masses and normalizations.
const MASS_NODES: usize = 256;

#[derive(Clone)]
pub struct IntegralTerm<T: Real> {
    pub kernel: ScalarFn<T>,
    pub support: (T, T),
    pub inner: ScalarFn<T>,
    pub inner_derivative: ScalarFn<T>,
    /// `h` is the identity.
    pub linear: bool,
}

impl<T: Real> IntegralTerm<T> {
    pub fn linear(kernel: impl Fn(T) -> T + Send + Sync + 'static, a: T, b: T) -> Self {
        IntegralTerm {
            kernel: Arc::new(kernel),
            support: (a, b),
            inner: Arc::new(|u| u),
            inner_derivative: Arc::new(|_| T::one()),
            linear: true,
        }
    }

    pub fn nonlinear(
        kernel: impl Fn(T) -> T + Send + Sync + 'static,
        a: T,
        b: T,
        inner: impl Fn(T) -> T + Send + Sync + 'static,
        inner_derivative: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        IntegralTerm {
            kernel: Arc::new(kernel),
            support: (a, b),
            inner: Arc::new(inner),
            inner_derivative: Arc::new(inner_derivative),
            linear: false,
        }
    }

    /// `∫ κ(θ) dθ` over the support.
    pub fn mass(&self, nodes: usize) -> Result<T> {
        let k = self.kernel.clone();
        cheb::integrate(move |t| k(t), self.support.0, self.support.1, nodes)
    }
}

impl<T: Real> fmt::Debug for IntegralTerm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegralTerm")
            .field("support", &self.support)
            .field("linear", &self.linear)
            .finish_non_exhaustive()
    }
}

/// One term of a linear(ized) equation: `weight · ∫ κ(θ) φ(θ) dθ`.
#[derive(Clone)]
pub struct LinearKernel<T: Real> {
    pub kernel: ScalarFn<T>,
    pub support: (T, T),
    pub weight: T,
}

#[derive(Clone)]
pub struct RenewalModel<T: Real> {
    pub name: String,
    pub tau: T,
    pub terms: Vec<IntegralTerm<T>>,
    pub combiner: CombinerFn<T>,
    pub combiner_gradient: GradientFn<T>,
    pub params: Params<T>,
    masses: Vec<T>,
    factory: Option<Factory<T>>,
}

impl<T: Real> fmt::Debug for RenewalModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RenewalModel")
            .field("name", &self.name)
            .field("tau", &self.tau)
            .field("terms", &self.terms)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl<T: Real> RenewalModel<T> {
    /// Assembles a model from its parts. Supports must lie inside `[-tau, 0]`.
    pub fn new(
        name: impl Into<String>,
        tau: T,
        terms: Vec<IntegralTerm<T>>,
        combiner: impl Fn(&[T]) -> T + Send + Sync + 'static,
        combiner_gradient: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
        params: Params<T>,
    ) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        let slack = T::lit(1e-12) * tau;
        for (i, term) in terms.iter().enumerate() {
            let (a, b) = term.support;
            if !(a < b) || a < -tau - slack || b > slack {
                return Err(Error::InvalidArgument(format!(
                    "support [{a}, {b}] of term {i} is not a subinterval of [-{tau}, 0]"
                )));
            }
        }
        let masses = terms
            .iter()
            .map(|t| t.mass(MASS_NODES))
            .collect::<Result<Vec<_>>>()?;
        Ok(RenewalModel {
            name: name.into(),
            tau,
            terms,
            combiner: Arc::new(combiner),
            combiner_gradient: Arc::new(combiner_gradient),
            params,
            masses,
            factory: None,
        })
    }

    fn with_factory(mut self, factory: Factory<T>) -> Self {
        self.factory = Some(factory);
        self
    }

    /// Linear model `b(t) = Σ_i ∫ κ_i(θ) b(t+θ) dθ`.
    pub fn linear(name: impl Into<String>, tau: T, kernels: Vec<LinearKernel<T>>) -> Result<Self> {
        let m = kernels.len();
        let terms = kernels
            .into_iter()
            .map(|lk| {
                let k = lk.kernel;
                let w = lk.weight;
                IntegralTerm::linear(move |t| w * k(t), lk.support.0, lk.support.1)
            })
            .collect();
        Self::new(
            name,
            tau,
            terms,
            |j: &[T]| j.iter().copied().sum(),
            move |_| vec![T::one(); m],
            Params::new(),
        )
    }

    /// `b(t) = γ ∫_0^τ b(t-a) da`: constant kernel `k ≡ γ` on `[0, τ]`.
    pub fn linear_constant(gamma: T, tau: T) -> Result<Self> {
        let mut model = Self::linear(
            "linear-constant",
            tau,
            vec![LinearKernel {
                kernel: Arc::new(move |_| gamma),
                support: (-tau, T::zero()),
                weight: T::one(),
            }],
        )?;
        model.params.insert("gamma".into(), gamma);
        model.params.insert("tau".into(), tau);
        let factory: Factory<T> = Arc::new(|p: &Params<T>| {
            RenewalModel::linear_constant(get(p, "gamma")?, get(p, "tau")?)
        });
        Ok(model.with_factory(factory))
    }

    /// Value of a named parameter, including the derived `log_gamma` and
    /// `log_ratio` (= log(β₀ e^{-μ} / μ)).
    pub fn param(&self, name: &str) -> Result<T> {
        if let Some(v) = self.params.get(name) {
            return Ok(*v);
        }
        match name {
            "log_gamma" => Ok(get(&self.params, "gamma")?.ln()),
            "log_ratio" => {
                let beta0 = get(&self.params, "beta0")?;
                let mu = get(&self.params, "mu")?;
                Ok((beta0 * (-mu).exp() / mu).ln())
            }
            _ => Err(Error::UnknownParameter(name.into())),
        }
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.param(name).is_ok()
    }

    /// Rebuilds the model with one parameter changed.
    pub fn with_param(&self, name: &str, value: T) -> Result<Self> {
        let mut p = self.params.clone();
        match name {
            "log_gamma" if p.contains_key("gamma") => {
                p.insert("gamma".into(), value.exp());
            }
            "log_ratio" if p.contains_key("beta0") && p.contains_key("mu") => {
                let mu = p["mu"];
                p.insert("beta0".into(), mu * mu.exp() * value.exp());
            }
            _ if p.contains_key(name) => {
                p.insert(name.into(), value);
            }
            _ => return Err(Error::UnknownParameter(name.into())),
        }
        self.rebuild(&p)
    }

    /// Rebuilds the model from a full parameter map.
    pub fn rebuild(&self, params: &Params<T>) -> Result<Self> {
        match &self.factory {
            Some(f) => f(params),
            None => Err(Error::InvalidArgument(format!(
                "model `{}` cannot be re-parametrized",
                self.name
            ))),
        }
    }

    /// `∫ κ_i` for every term.
    pub fn kernel_masses(&self) -> &[T] {
        &self.masses
    }

    /// `F` applied to a history, with every integral computed by an
    /// `nq`-point Fejér rule on the term's support.
    pub fn evaluate_f(&self, history: impl Fn(T) -> T, nq: usize) -> Result<T> {
        let mut j = Vec::with_capacity(self.terms.len());
        for (i, term) in self.terms.iter().enumerate() {
            let (x, w) = cheb::quad_on_subinterval(term.support.0, term.support.1, nq)?;
            let mut acc = T::zero();
            for (&t, &wt) in x.iter().zip(&w) {
                acc += wt * (term.kernel)(t) * (term.inner)(history(t));
            }
            if !acc.is_finite() {
                return Err(Error::NonFinite { term: i });
            }
            j.push(acc);
        }
        let f = (self.combiner)(&j);
        if !f.is_finite() {
            return Err(Error::NonFinite { term: 0 });
        }
        Ok(f)
    }

    /// `F` on the constant history `b`.
    pub fn f_constant(&self, b: T) -> T {
        let j: Vec<T> = self
            .terms
            .iter()
            .zip(&self.masses)
            .map(|(t, &m)| m * (t.inner)(b))
            .collect();
        (self.combiner)(&j)
    }

    /// Integrals `J_i` for the constant history `b`.
    pub fn constant_integrals(&self, b: T) -> Vec<T> {
        self.terms
            .iter()
            .zip(&self.masses)
            .map(|(t, &m)| m * (t.inner)(b))
            .collect()
    }

    /// Fréchet derivative `DF(b̄)` as a list of linear kernels.
    pub fn linearize(&self, b_bar: T) -> Vec<LinearKernel<T>> {
        let j = self.constant_integrals(b_bar);
        let grad = (self.combiner_gradient)(&j);
        self.terms
            .iter()
            .zip(grad)
            .map(|(t, g)| LinearKernel {
                kernel: t.kernel.clone(),
                support: t.support,
                weight: g * (t.inner_derivative)(b_bar),
            })
            .collect()
    }

    /// The linear renewal equation `b(t) = DF(b̄) b_t`.
    pub fn linearized_model(&self, b_bar: T) -> Result<Self> {
        Self::linear(format!("{}-linearized", self.name), self.tau, self.linearize(b_bar))
    }
}

fn get<T: Real>(p: &Params<T>, name: &str) -> Result<T> {
    p.get(name).copied().ok_or_else(|| Error::UnknownParameter(name.into()))
}

fn params_of<T: Real>(pairs: &[(&str, T)]) -> Params<T> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// SIRS model
///
/// ```text
/// b(t) = γ (1 - ∫_0^1 b(t-s) ds) ∫_0^1 k(s) b(t-s) ds,
/// k(s) = α s^{m-1} e^{-s/θ} on [0, 1],
/// ```
///
/// with `α` chosen numerically so that `∫_0^1 k = 1`, and `τ = 1`.
/// Requires `m ≥ 1` so that the kernel is bounded.
pub fn sirs_model<T: Real>(gamma: T, m: T, theta_shape: T) -> Result<RenewalModel<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if !(m >= T::one()) || !(theta_shape > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "gamma kernel needs m >= 1 and theta > 0, got m = {m}, theta = {theta_shape}"
        )));
    }
    let shape = move |s: T| s.powf(m - T::one()) * (-s / theta_shape).exp();
    let norm = cheb::integrate(shape, T::zero(), T::one(), MASS_NODES)?;
    let alpha = T::one() / norm;
    let tau = T::one();
    let terms = vec![
        IntegralTerm::linear(|_| T::one(), -tau, T::zero()),
        IntegralTerm::linear(move |t: T| alpha * shape(-t), -tau, T::zero()),
    ];
    let model = RenewalModel::new(
        "sirs",
        tau,
        terms,
        move |j: &[T]| gamma * (T::one() - j[0]) * j[1],
        move |j: &[T]| vec![-gamma * j[1], gamma * (T::one() - j[0])],
        params_of(&[("gamma", gamma), ("m", m), ("theta", theta_shape), ("alpha", alpha)]),
    )?;
    let factory: Factory<T> =
        Arc::new(|p: &Params<T>| sirs_model(get(p, "gamma")?, get(p, "m")?, get(p, "theta")?));
    Ok(model.with_factory(factory))
}

/// Nicholson's blowflies as a renewal equation, truncated at `tau_trunc`:
///
/// ```text
/// b(t) = β₀ J e^{-c J},    J = ∫_{-τ}^{-1} e^{μθ} b(t+θ) dθ.
/// ```
pub fn blowflies_model<T: Real>(beta0: T, mu: T, c: T, tau_trunc: T) -> Result<RenewalModel<T>> {
    if !(beta0 > T::zero()) || !(mu > T::zero()) || !(c > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "beta0, mu and c must be positive, got {beta0}, {mu}, {c}"
        )));
    }
    if !(tau_trunc > T::one()) {
        return Err(Error::InvalidArgument(format!(
            "truncation delay must exceed the maturation delay 1, got {tau_trunc}"
        )));
    }
    let terms = vec![IntegralTerm::linear(move |t: T| (mu * t).exp(), -tau_trunc, -T::one())];
    let model = RenewalModel::new(
        "blowflies",
        tau_trunc,
        terms,
        move |j: &[T]| beta0 * j[0] * (-c * j[0]).exp(),
        move |j: &[T]| vec![beta0 * (T::one() - c * j[0]) * (-c * j[0]).exp()],
        params_of(&[("beta0", beta0), ("mu", mu), ("c", c), ("tau", tau_trunc)]),
    )?;
    let factory: Factory<T> = Arc::new(|p: &Params<T>| {
        blowflies_model(get(p, "beta0")?, get(p, "mu")?, get(p, "c")?, get(p, "tau")?)
    });
    Ok(model.with_factory(factory))
}

/// Positive equilibrium of the truncated blowflies model (`None` if it does
/// not exist): `b̄ = log(β₀ I) / (c I)` with `I = (e^{-μ} - e^{-μτ}) / μ`.
pub fn blowflies_equilibrium<T: Real>(beta0: T, mu: T, c: T, tau: T) -> Option<T> {
    let i = ((-mu).exp() - (-mu * tau).exp()) / mu;
    let arg = beta0 * i;
    (arg > T::one()).then(|| arg.ln() / (c * i))
}

/// Cannibalism model `b(t) = (γ/2) ∫_1^τ b(t-s) e^{-b(t-s)} ds`.
pub fn cannibalism_model<T: Real>(gamma: T, tau: T) -> Result<RenewalModel<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if !(tau > T::one()) {
        return Err(Error::InvalidArgument(format!("tau must exceed 1, got {tau}")));
    }
    let half_gamma = gamma / T::lit(2.0);
    let terms = vec![IntegralTerm::nonlinear(
        move |_| half_gamma,
        -tau,
        -T::one(),
        |u: T| u * (-u).exp(),
        |u: T| (T::one() - u) * (-u).exp(),
    )];
    let model = RenewalModel::new(
        "cannibalism",
        tau,
        terms,
        |j: &[T]| j[0],
        |_: &[T]| vec![T::one()],
        params_of(&[("gamma", gamma), ("tau", tau)]),
    )?;
    let factory: Factory<T> =
        Arc::new(|p: &Params<T>| cannibalism_model(get(p, "gamma")?, get(p, "tau")?));
    Ok(model.with_factory(factory))
}

/// A model with a distinguished continuation parameter and its range.
#[derive(Debug, Clone)]
pub struct ModelFamily<T: Real> {
    pub base: RenewalModel<T>,
    pub active_param: String,
    pub range: (T, T),
}

impl<T: Real> ModelFamily<T> {
    pub fn new(base: RenewalModel<T>, active_param: impl Into<String>, range: (T, T)) -> Result<Self> {
        let active_param = active_param.into();
        if !base.has_param(&active_param) {
            return Err(Error::UnknownParameter(active_param));
        }
        if !range.0.is_finite() || !range.1.is_finite() || range.0 == range.1 {
            return Err(Error::InvalidArgument("degenerate parameter range".into()));
        }
        Ok(ModelFamily {
            base,
            active_param,
            range,
        })
    }

    pub fn at(&self, value: T) -> Result<RenewalModel<T>> {
        self.base.with_param(&self.active_param, value)
    }
}

/// JSON model description: `{"model": "sirs", "params": {...}, "tau": ...}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn named(model: &str) -> Self {
        ModelConfig {
            model: model.into(),
            ..Default::default()
        }
    }

    /// Builds the model; missing parameters take their defaults
    /// (SIRS: γ = 2, m = 3, θ = 0.1; blowflies: μ = 4, β₀ = μ e^μ e², c = 100,
    /// τ = 10; cannibalism: γ = e², τ = 3).
    pub fn build<T: Real>(&self) -> Result<RenewalModel<T>> {
        let p = |name: &str| self.params.get(name).copied();
        let lg = |default: f64| -> f64 {
            p("gamma")
                .or_else(|| p("log_gamma").map(f64::exp))
                .unwrap_or(default)
        };
        let model = match self.model.as_str() {
            "sirs" => {
                if let Some(tau) = self.tau {
                    if (tau - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidArgument("the SIRS model has tau = 1".into()));
                    }
                }
                sirs_model(
                    T::lit(lg(2.0)),
                    T::lit(p("m").unwrap_or(3.0)),
                    T::lit(p("theta").unwrap_or(0.1)),
                )?
            }
            "blowflies" => {
                let mu = p("mu").unwrap_or(4.0);
                let beta0 = p("beta0").unwrap_or_else(|| {
                    mu * mu.exp() * p("log_ratio").unwrap_or(2.0).exp()
                });
                blowflies_model(
                    T::lit(beta0),
                    T::lit(mu),
                    T::lit(p("c").unwrap_or(100.0)),
                    T::lit(self.tau.or(p("tau")).unwrap_or(10.0)),
                )?
            }
            "cannibalism" => cannibalism_model(
                T::lit(lg(std::f64::consts::E * std::f64::consts::E)),
                T::lit(self.tau.or(p("tau")).unwrap_or(3.0)),
            )?,
            "linear-constant" => linear_constant_from(p("gamma").unwrap_or(0.5), self.tau.or(p("tau")).unwrap_or(1.0))?,
            other => return Err(Error::UnknownModel(other.into())),
        };
        for key in self.params.keys() {
            if !model.has_param(key) {
                return Err(Error::UnknownParameter(key.clone()));
            }
        }
        Ok(model)
    }
}

fn linear_constant_from<T: Real>(gamma: f64, tau: f64) -> Result<RenewalModel<T>> {
    RenewalModel::linear_constant(T::lit(gamma), T::lit(tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite trapezoid rule, independent of the Fejér machinery.
    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    }

    #[test]
    fn sirs_constant_history() {
        let model = sirs_model(2.7f64, 3.0, 0.1).unwrap();
        let alpha = model.params["alpha"];
        let mass = trapezoid(|s| alpha * s * s * (-s / 0.1).exp(), 0.0, 1.0, 200_000);
        assert_relative_eq!(mass, 1.0, epsilon = 1e-9);
        assert_relative_eq!(model.kernel_masses()[1], 1.0, epsilon = 1e-13);
        for &b in &[0.0, 0.2, 0.63] {
            let f = model.evaluate_f(|_| b, 64).unwrap();
            assert_relative_eq!(f, 2.7 * (1.0 - b) * b, epsilon = 1e-12);
        }
        let m2 = sirs_model(2.0f64, 3.0, 0.1).unwrap();
        assert_relative_eq!(m2.evaluate_f(|_| 0.5, 32).unwrap(), 0.5, epsilon = 1e-12);
        // nontrivial equilibrium 1 - 1/gamma
        let b = 1.0 - 1.0 / 2.7;
        assert_relative_eq!(model.f_constant(b), b, epsilon = 1e-13);
        assert!(sirs_model(0.0f64, 3.0, 0.1).is_err());
    }

    #[test]
    fn blowflies_equilibrium_and_tail() {
        let (mu, c, tau) = (4.0f64, 100.0, 10.0);
        let beta0 = mu * mu.exp() * 9.0;
        let model = blowflies_model(beta0, mu, c, tau).unwrap();
        let b = blowflies_equilibrium(beta0, mu, c, tau).unwrap();
        assert_relative_eq!(model.f_constant(b), b, max_relative = 1e-12);
        let untruncated = ((beta0 / mu).ln() - mu) * mu * mu.exp() / c;
        assert_relative_eq!(b, untruncated, max_relative = 1e-12);
        assert_eq!(model.evaluate_f(|_| 0.0, 32).unwrap(), 0.0);
        assert!(blowflies_model(beta0, mu, c, 1.0).is_err());
        assert!(blowflies_equilibrium(0.5 * mu * mu.exp(), mu, c, tau).is_none());
    }

    #[test]
    fn survival_tail_thresholds() {
        // e^{-mu tau} at tau = 10 is 4.5e-5, 2.1e-9 and 4.2e-18 for mu = 1, 2, 4,
        // i.e. not below 1e-6, 1e-10, 1e-19.
        let tail = |mu: f64| (-mu * 10.0).exp();
        assert!(tail(1.0) > 1e-6 && tail(1.0) < 1e-4);
        assert!(tail(2.0) > 1e-10 && tail(2.0) < 1e-8);
        assert!(tail(4.0) > 1e-19 && tail(4.0) < 1e-17);
    }

    #[test]
    fn cannibalism_equilibrium() {
        let gamma = 2.0f64.exp();
        let model = cannibalism_model(gamma, 3.0).unwrap();
        assert_relative_eq!(model.evaluate_f(|_| 2.0, 32).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(model.evaluate_f(|_| 0.0, 32).unwrap(), 0.0);
        // bisection on b = (gamma/2)(tau-1) b e^{-b}, b > 0
        let g = |b: f64| b - 0.5 * gamma * 2.0 * b * (-b).exp();
        let (mut lo, mut hi) = (0.5, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert_relative_eq!(0.5 * (lo + hi), 2.0, epsilon = 1e-12);
        assert!(cannibalism_model(gamma, 1.0).is_err());
        assert!(cannibalism_model(-1.0, 3.0).is_err());
    }

    #[test]
    fn parameters_and_aliases() {
        let model = cannibalism_model(2.0f64.exp(), 3.0).unwrap();
        assert_relative_eq!(model.param("log_gamma").unwrap(), 2.0, epsilon = 1e-15);
        let m2 = model.with_param("log_gamma", 2.5).unwrap();
        assert_relative_eq!(m2.params["gamma"], 2.5f64.exp(), epsilon = 1e-12);
        let m3 = model.with_param("tau", 4.0).unwrap();
        assert_eq!(m3.tau, 4.0);
        assert!(matches!(model.with_param("mu", 1.0), Err(Error::UnknownParameter(_))));

        let bf = blowflies_model(100.0f64, 2.0, 100.0, 10.0).unwrap();
        let r = bf.param("log_ratio").unwrap();
        let bf2 = bf.with_param("log_ratio", r).unwrap();
        assert_relative_eq!(bf2.params["beta0"], 100.0, max_relative = 1e-13);

        let fam = ModelFamily::new(model.clone(), "log_gamma", (2.0, 4.0)).unwrap();
        assert_relative_eq!(fam.at(3.0).unwrap().params["gamma"], 3.0f64.exp(), max_relative = 1e-14);
        assert!(ModelFamily::new(model, "beta0", (1.0, 2.0)).is_err());
    }

    #[test]
    fn linearization_of_cannibalism() {
        let gamma = 2.3f64.exp();
        let model = cannibalism_model(gamma, 3.0).unwrap();
        let b = (gamma).ln();
        let lin = model.linearize(b);
        assert_eq!(lin.len(), 1);
        let k = lin[0].weight * (lin[0].kernel)(-2.0);
        assert_relative_eq!(k, gamma / 2.0 * (1.0 - b) * (-b).exp(), max_relative = 1e-14);
    }

    #[test]
    fn config_roundtrip_and_errors() {
        let cfg = ModelConfig::from_json(r#"{"model":"cannibalism","params":{"log_gamma":2.0},"tau":3.0}"#)
            .unwrap();
        let m: RenewalModel<f64> = cfg.build().unwrap();
        assert_relative_eq!(m.params["gamma"], 2.0f64.exp(), max_relative = 1e-14);
        let back = ModelConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(matches!(
            ModelConfig::named("sir").build::<f64>(),
            Err(Error::UnknownModel(_))
        ));
        assert!(ModelConfig::from_json("{not json").is_err());
        let bad = ModelConfig::from_json(r#"{"model":"sirs","params":{"zeta":1}}"#).unwrap();
        assert!(matches!(bad.build::<f64>(), Err(Error::UnknownParameter(_))));
    }
}
