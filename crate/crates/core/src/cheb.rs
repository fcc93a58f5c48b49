//! Chebyshev-zeros mesh on `[-tau, 0]` augmented with the endpoint
//! `theta_0 = 0`: barycentric interpolation, pseudospectral differentiation
//! and Fejér quadrature.
//!
//! Node convention: `nodes[0] = 0` and `nodes[1..=M]` are the interior
//! Chebyshev zeros in strictly decreasing order,
//! `theta_j = (tau/2) (cos((2j-1) pi / (2M)) - 1)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative distance (in units of the interval length) below which an
/// evaluation point is treated as coinciding with a node.
const COINCIDENCE: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct ChebyshevMesh<T: Real> {
    m: usize,
    tau: T,
    /// `theta_0 = 0, theta_1 > ... > theta_M`.
    pub nodes: Array1<T>,
    /// Barycentric weights on all `M + 1` nodes, scaled to unit max modulus.
    pub bary_weights: Array1<T>,
    /// Barycentric weights on the interior nodes only, scaled to unit max modulus.
    pub interior_weights: Array1<T>,
    /// Differentiation matrix on `{theta_0} ∪ Θ_M`.
    pub diff_full: Array2<T>,
    /// `D_M`: rows and columns `1..=M` of `diff_full`.
    pub diff_sub: Array2<T>,
    /// Fejér weights for `∫_{-tau}^0` on the interior nodes.
    pub quad_weights: Array1<T>,
}

/// Angles `xi_j = (2j - 1) pi / (2M)`, `j = 1..=M`, with `xi_0 = 0` prepended.
fn angles<T: Real>(m: usize) -> Vec<T> {
    let two_m = T::from_count(2 * m);
    std::iter::once(T::zero())
        .chain((1..=m).map(|j| T::from_count(2 * j - 1) * T::PI() / two_m))
        .collect()
}

/// `cos a - cos b` without cancellation.
#[inline]
fn cos_diff<T: Real>(a: T, b: T) -> T {
    let two = T::lit(2.0);
    two * ((a + b) / two).sin() * ((b - a) / two).sin()
}

impl<T: Real> ChebyshevMesh<T> {
    pub fn new(m: usize, tau: T) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("discretization index M must be >= 1".into()));
        }
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        let two = T::lit(2.0);
        let xi = angles::<T>(m);

        // theta_j = (tau/2)(x_j - 1) = -tau sin^2(xi_j / 2)
        let nodes: Array1<T> = xi
            .iter()
            .map(|&a| {
                let s = (a / two).sin();
                -tau * s * s
            })
            .collect();

        // Weights of the plain Chebyshev zeros with the 2^{M-1}/M factor dropped.
        // The tabulated (-1)^j sin(xi_j) is off from 1/prod(x_j - x_k) by a
        // global sign; we use (-1)^{j+1} so w+_0 below keeps its sign.
        let interior: Vec<T> = (1..=m)
            .map(|j| {
                let sign = if j % 2 == 1 { T::one() } else { -T::one() };
                sign * xi[j].sin()
            })
            .collect();

        // Augmented weights: w+_0 = K, w+_j = w_j / (x_j - 1), with K rescaled by
        // the same dropped factor. prod_k 2(1 - x_k) = 2 for Chebyshev zeros,
        // but we form the product explicitly.
        let mut prod = T::one();
        for &a in &xi[1..] {
            let s = (a / two).sin();
            prod *= two * two * s * s; // 2 (1 - x_k)
        }
        let w0 = two * T::from_count(m) / prod;
        let mut weights = Vec::with_capacity(m + 1);
        weights.push(w0);
        for j in 1..=m {
            let s = (xi[j] / two).sin();
            weights.push(interior[j - 1] / (-two * s * s));
        }
        let scale = weights.iter().fold(T::zero(), |acc, w| acc.max(w.abs()));
        let bary_weights: Array1<T> = weights.iter().map(|&w| w / scale).collect();
        let iscale = interior.iter().fold(T::zero(), |acc, w| acc.max(w.abs()));
        let interior_weights: Array1<T> = interior.iter().map(|&w| w / iscale).collect();

        // d_kj = (w_j / w_k) / (theta_k - theta_j), diagonal from zero row sums.
        let n = m + 1;
        let half_tau = tau / two;
        let mut diff_full = Array2::<T>::zeros((n, n));
        for k in 0..n {
            let mut row_sum = T::zero();
            for j in 0..n {
                if j == k {
                    continue;
                }
                let dtheta = half_tau * cos_diff(xi[k], xi[j]);
                let d = (bary_weights[j] / bary_weights[k]) / dtheta;
                diff_full[[k, j]] = d;
                row_sum += d;
            }
            diff_full[[k, k]] = -row_sum;
        }
        let diff_sub = diff_full.slice(s![1.., 1..]).to_owned();
        let quad_weights = fejer_weights::<T>(m).mapv(|q| q * half_tau);

        Ok(ChebyshevMesh {
            m,
            tau,
            nodes,
            bary_weights,
            interior_weights,
            diff_full,
            diff_sub,
            quad_weights,
        })
    }

    /// Discretization index (number of interior nodes).
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// The interior nodes `theta_1, ..., theta_M`.
    pub fn interior_nodes(&self) -> ndarray::ArrayView1<'_, T> {
        self.nodes.slice(s![1..])
    }

    fn check_point(&self, p: T) -> Result<()> {
        let slack = T::lit(8.0) * T::epsilon() * self.tau;
        if !(p >= -self.tau - slack && p <= slack) {
            return Err(Error::Domain {
                point: p.to_f64_lossy(),
                lower: -self.tau.to_f64_lossy(),
                upper: 0.0,
            });
        }
        Ok(())
    }

    /// Evaluates the degree-`M` interpolant of `values` (given on all `M + 1`
    /// nodes) at `points`.
    pub fn interpolate(&self, values: &Array1<T>, points: &[T]) -> Result<Array1<T>> {
        if values.len() != self.m + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} nodal values, got {}",
                self.m + 1,
                values.len()
            )));
        }
        let b = self.interpolation_matrix(points)?;
        Ok(b.dot(values))
    }

    /// Barycentric interpolation matrix from all `M + 1` nodes to `points`.
    pub fn interpolation_matrix(&self, points: &[T]) -> Result<Array2<T>> {
        for &p in points {
            self.check_point(p)?;
        }
        Ok(barycentric_matrix(
            self.nodes.view(),
            self.bary_weights.view(),
            points,
            T::lit(COINCIDENCE) * self.tau,
        ))
    }

    /// Barycentric interpolation matrix from the interior nodes `Θ_M` to `points`.
    pub fn interior_interpolation_matrix(&self, points: &[T]) -> Result<Array2<T>> {
        for &p in points {
            self.check_point(p)?;
        }
        Ok(barycentric_matrix(
            self.interior_nodes(),
            self.interior_weights.view(),
            points,
            T::lit(COINCIDENCE) * self.tau,
        ))
    }

    /// Matrix `E` with `(E x)_i = p'(points_i)` where `p = Σ_j x_j ℓ_j`
    /// interpolates `x` on `Θ_M` and vanishes at `0`.
    pub fn derivative_eval_matrix(&self, points: &[T]) -> Result<Array2<T>> {
        let b = self.interior_interpolation_matrix(points)?;
        Ok(b.dot(&self.diff_sub))
    }

    /// Estimate of the Lebesgue constant of the interior nodes: the maximum of
    /// `Σ_j |ℓ~_j(θ)|` over a uniform sample of `sample_density + 1` points,
    /// refined by golden-section search around the best samples.
    pub fn lebesgue_constant(&self, sample_density: usize) -> T {
        let n = sample_density.max(1);
        let lebesgue = |theta: T| -> T {
            let row = barycentric_matrix(
                self.interior_nodes(),
                self.interior_weights.view(),
                &[theta],
                T::lit(COINCIDENCE) * self.tau,
            );
            row.iter().fold(T::zero(), |acc, v| acc + v.abs())
        };
        let h = self.tau / T::from_count(n);
        let samples: Vec<(T, T)> = (0..=n)
            .map(|i| {
                let theta = (-self.tau + T::from_count(i) * h).min(T::zero());
                (theta, lebesgue(theta))
            })
            .collect();
        let mut best = samples.iter().fold(T::zero(), |acc, s| acc.max(s.1));
        // refine the local maxima of the sampled function
        for i in 1..n {
            if samples[i].1 >= samples[i - 1].1 && samples[i].1 >= samples[i + 1].1 {
                let v = golden_max(&lebesgue, samples[i - 1].0, samples[i + 1].0, 40);
                best = best.max(v);
            }
        }
        best
    }
}

fn golden_max<T: Real>(f: &impl Fn(T) -> T, mut a: T, mut b: T, iters: usize) -> T {
    let r = T::lit(0.618_033_988_749_894_8);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// Second-form barycentric interpolation matrix. A point within `coincide` of
/// a node reproduces that node's value exactly.
pub fn barycentric_matrix<T: Real>(
    nodes: ndarray::ArrayView1<'_, T>,
    weights: ndarray::ArrayView1<'_, T>,
    points: &[T],
    coincide: T,
) -> Array2<T> {
    let n = nodes.len();
    let mut out = Array2::<T>::zeros((points.len(), n));
    for (i, &p) in points.iter().enumerate() {
        if let Some(k) = (0..n).find(|&k| (p - nodes[k]).abs() < coincide) {
            out[[i, k]] = T::one();
            continue;
        }
        let mut denom = T::zero();
        for k in 0..n {
            let t = weights[k] / (p - nodes[k]);
            out[[i, k]] = t;
            denom += t;
        }
        for k in 0..n {
            out[[i, k]] /= denom;
        }
    }
    out
}

/// Fejér's first rule on the `n` Chebyshev zeros of `(-1, 1)`, ordered as
/// `x_k = cos((2k-1) pi / (2n))`. Exact for polynomials of degree `< n`.
pub fn fejer_weights<T: Real>(n: usize) -> Array1<T> {
    let two_n = T::from_count(2 * n);
    let angle = |k: usize| T::from_count(2 * k - 1) * T::PI() / two_n;
    fejer_weights_with_angles(n, angle)
}

pub(crate) fn fejer_weights_with_angles<T: Real>(n: usize, angle: impl Fn(usize) -> T) -> Array1<T> {
    let two = T::lit(2.0);
    let nn = T::from_count(n);
    (1..=n)
        .map(|k| {
            let xi = angle(k);
            let mut s = T::zero();
            for j in 1..=n / 2 {
                let jj = T::from_count(j);
                s += (two * jj * xi).cos() / (T::lit(4.0) * jj * jj - T::one());
            }
            two / nn * (T::one() - two * s)
        })
        .collect()
}

/// Nodes and weights of an `n`-point Fejér rule on `[a, b]`; nodes descending.
pub fn quad_on_subinterval<T: Real>(a: T, b: T, n: usize) -> Result<(Vec<T>, Vec<T>)> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("quadrature interval [{a}, {b}] is empty")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    let two = T::lit(2.0);
    let mid = (a + b) / two;
    let half = (b - a) / two;
    let rule = reference_rule(n);
    let nodes = rule.0.iter().map(|&x| mid + half * T::lit(x)).collect();
    let weights = rule.1.iter().map(|&w| T::lit(w) * half).collect();
    Ok((nodes, weights))
}

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

/// Fejér nodes and weights on `(-1, 1)`, computed once per `n` in double
/// precision. Building the weights costs `O(n²)` cosines, which dominated
/// repeated model rebuilds during continuation.
fn reference_rule(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&n) {
        return Arc::clone(rule);
    }
    let two_n = (2 * n) as f64;
    let nodes = (1..=n).map(|k| ((2 * k - 1) as f64 * std::f64::consts::PI / two_n).cos()).collect();
    let weights = fejer_weights::<f64>(n).to_vec();
    let rule = Arc::new((nodes, weights));
    cache.lock().expect("rule cache poisoned").insert(n, Arc::clone(&rule));
    rule
}

/// Integrates `f` over `[a, b]` with an `n`-point Fejér rule.
pub fn integrate<T: Real>(f: impl Fn(T) -> T, a: T, b: T, n: usize) -> Result<T> {
    let (x, w) = quad_on_subinterval(a, b, n)?;
    Ok(x.iter().zip(w.iter()).map(|(&x, &w)| w * f(x)).sum())
}
