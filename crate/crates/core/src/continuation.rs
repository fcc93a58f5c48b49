//! Equilibrium branches in one parameter, bifurcation detection on them, and
//! Hopf points traced across a second parameter.
//!
//! Branches are followed in the scalar `b̄` rather than in the `M`-dimensional
//! state: every equilibrium of the discretized system is the lift of a fixed
//! point of `F` on constant histories, so the scalar problem is equivalent and
//! far cheaper. The state-space Newton path is kept as a cross-check.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::Array1;
use num_complex::Complex;

use crate::cheb::ChebyshevMesh;
use crate::discretize::{default_nq, equilibrium_lift, equilibrium_project, solve_equilibrium, DiscretizedSystem};
use crate::error::{Error, Result};
use crate::model::{ModelFamily, RenewalModel};
use crate::scalar::Real;
use crate::spectral::{eigenvalues_at, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BranchFlag {
    /// `1 - F'(b̄)` changed sign since the previous point.
    Fold,
    /// A real rightmost eigenvalue changed sign since the previous point.
    TranscriticalCandidate,
    /// A complex rightmost pair changed the sign of its real part.
    Hopf,
}

#[derive(Debug, Clone)]
pub struct BranchPoint<T: Real> {
    pub param: T,
    pub b_eq: T,
    pub x_eq: Array1<T>,
    pub rightmost: Complex<T>,
    pub stable: bool,
    pub flags: BTreeSet<BranchFlag>,
    /// `1 - F'(b̄)`, the derivative of the scalar fixed-point equation.
    pub scalar_slope: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BifurcationKind {
    Hopf,
    /// A real eigenvalue through zero (fold or transcritical; not told apart).
    ZeroCrossing,
}

impl std::fmt::Display for BifurcationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BifurcationKind::Hopf => "hopf",
            BifurcationKind::ZeroCrossing => "zero-crossing",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BifurcationPoint<T: Real> {
    pub kind: BifurcationKind,
    pub param: T,
    pub b_eq: T,
    pub eigenvalue: Complex<T>,
    /// `|Re λ|` at the returned parameter.
    pub refinement_residual: T,
    /// False when the secant refinement did not reach [`REFINE_TOL`].
    pub refined: bool,
}

/// Target for `|Re λ|` at a refined bifurcation point.
pub const REFINE_TOL: f64 = 1e-8;

/// Imaginary parts below this are treated as real when classifying.
pub const HOPF_IM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectorMode {
    /// Newton on the scalar fixed-point equation `b = F(b)`.
    #[default]
    Scalar,
    /// Newton on `rhs(x) = 0` in the full state space, then projection.
    StateSpace,
}

#[derive(Debug, Clone, Copy)]
pub struct ContinuationOptions<T: Real> {
    pub mode: CorrectorMode,
    /// Corrector tolerance on the fixed-point residual.
    pub tol: T,
    /// Corrector iterations before a step is considered too long.
    pub max_corrector_iter: usize,
    pub max_halvings: usize,
    /// Quadrature resolution; `None` uses the default for `M`.
    pub nq: Option<usize>,
}

impl<T: Real> Default for ContinuationOptions<T> {
    fn default() -> Self {
        ContinuationOptions {
            mode: CorrectorMode::Scalar,
            tol: T::lit(1e-12),
            max_corrector_iter: 12,
            max_halvings: 8,
            nq: None,
        }
    }
}

/// A branch together with the reason it stopped early, if it did.
#[derive(Debug, Clone)]
pub struct Branch<T: Real> {
    pub points: Vec<BranchPoint<T>>,
    pub terminated: Option<String>,
}

/// `1 - F'(b)` by central differences.
fn scalar_slope<T: Real>(model: &RenewalModel<T>, b: T) -> T {
    let h = T::lit(1e-6) * b.abs().max(T::one());
    T::one() - (model.f_constant(b + h) - model.f_constant(b - h)) / (T::lit(2.0) * h)
}

/// Undamped scalar Newton with a short iteration budget; `None` signals slow
/// or failed convergence so the caller can shorten the step.
fn scalar_corrector<T: Real>(model: &RenewalModel<T>, guess: T, tol: T, max_iter: usize) -> Option<T> {
    let mut b = guess;
    for _ in 0..max_iter {
        let g = b - model.f_constant(b);
        if !g.is_finite() {
            return None;
        }
        if g.abs() <= tol {
            return Some(b);
        }
        let d = scalar_slope(model, b);
        if d == T::zero() || !d.is_finite() {
            return None;
        }
        b -= g / d;
    }
    let g = b - model.f_constant(b);
    (g.abs() <= tol).then_some(b)
}

struct Stepper<'a, T: Real> {
    family: &'a ModelFamily<T>,
    mesh: ChebyshevMesh<T>,
    nq: usize,
    opts: ContinuationOptions<T>,
}

impl<T: Real> Stepper<'_, T> {
    fn system(&self, param: T) -> Result<DiscretizedSystem<T>> {
        DiscretizedSystem::new(self.mesh.clone(), self.family.at(param)?, self.nq)
    }

    fn correct(&self, param: T, guess: T) -> Result<Option<T>> {
        let model = self.family.at(param)?;
        match self.opts.mode {
            CorrectorMode::Scalar => Ok(scalar_corrector(&model, guess, self.opts.tol, self.opts.max_corrector_iter)),
            CorrectorMode::StateSpace => {
                let sys = DiscretizedSystem::new(self.mesh.clone(), model, self.nq)?;
                let x0 = equilibrium_lift(guess, &self.mesh);
                match sys.newton_equilibrium(&x0, self.opts.tol, self.opts.max_corrector_iter) {
                    Ok(x) => Ok(equilibrium_project(&x, &self.mesh).ok()),
                    Err(_) => Ok(None),
                }
            }
        }
    }

    fn point(&self, param: T, b_eq: T) -> Result<BranchPoint<T>> {
        let sys = self.system(param)?;
        let spectrum = eigenvalues_at(&sys, b_eq)?;
        Ok(BranchPoint {
            param,
            b_eq,
            x_eq: equilibrium_lift(b_eq, &self.mesh),
            rightmost: spectrum.rightmost,
            stable: spectrum.rightmost.re < T::zero(),
            flags: BTreeSet::new(),
            scalar_slope: scalar_slope(&sys.model, b_eq),
        })
    }
}

/// Follows the equilibrium through `start_b` over the family's parameter
/// range with `n_points` equally spaced accepted points. Stops early (with the
/// reason recorded) when the corrector fails even after repeated halving.
pub fn continue_equilibria_partial<T: Real>(
    family: &ModelFamily<T>,
    m: usize,
    start_b: T,
    n_points: usize,
    opts: &ContinuationOptions<T>,
) -> Result<Branch<T>> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("n_points must be positive".into()));
    }
    let stepper = Stepper {
        family,
        mesh: ChebyshevMesh::new(m, family.base.tau)?,
        nq: opts.nq.unwrap_or_else(|| default_nq(m)),
        opts: *opts,
    };
    let (p0, p1) = family.range;
    let targets: Vec<T> = if n_points == 1 {
        vec![p0]
    } else {
        (0..n_points)
            .map(|k| p0 + (p1 - p0) * T::from_count(k) / T::from_count(n_points - 1))
            .collect()
    };

    let first = solve_equilibrium(&family.at(p0)?, start_b, opts.tol)?;
    let mut points = vec![stepper.point(p0, first)?];
    let mut terminated = None;
    'targets: for &target in &targets[1..] {
        let (mut p, mut b) = {
            let last = points.last().expect("branch is nonempty");
            (last.param, last.b_eq)
        };
        // intermediate steps toward `target`, halving on corrector trouble
        let mut step = target - p;
        let mut halvings = 0;
        while p != target {
            let next = if (target - p).abs() <= step.abs() { target } else { p + step };
            match stepper.correct(next, b)? {
                Some(bn) => {
                    p = next;
                    b = bn;
                }
                None => {
                    halvings += 1;
                    if halvings > opts.max_halvings {
                        terminated = Some(format!(
                            "corrector failed near {} = {} after {} halvings",
                            family.active_param,
                            next.to_f64_lossy(),
                            opts.max_halvings
                        ));
                        break 'targets;
                    }
                    step /= T::lit(2.0);
                }
            }
        }
        let mut point = stepper.point(target, b)?;
        let prev = points.last().expect("branch is nonempty");
        if (prev.scalar_slope > T::zero()) != (point.scalar_slope > T::zero()) {
            point.flags.insert(BranchFlag::Fold);
        }
        if prev.stable != point.stable {
            let crossing = if point.rightmost.re >= T::zero() { point.rightmost } else { prev.rightmost };
            if crossing.im.abs() > T::lit(HOPF_IM_TOL) {
                point.flags.insert(BranchFlag::Hopf);
            } else {
                point.flags.insert(BranchFlag::TranscriticalCandidate);
            }
        }
        points.push(point);
    }
    Ok(Branch { points, terminated })
}

/// Like [`continue_equilibria_partial`], but an early stop is an error
/// carrying the last good point.
pub fn continue_equilibria<T: Real>(
    family: &ModelFamily<T>,
    m: usize,
    start_b: T,
    n_points: usize,
    opts: &ContinuationOptions<T>,
) -> Result<Vec<BranchPoint<T>>> {
    let branch = continue_equilibria_partial(family, m, start_b, n_points, opts)?;
    match branch.terminated {
        None => Ok(branch.points),
        Some(reason) => {
            let last = branch.points.last().expect("branch is nonempty");
            Err(Error::BranchTerminated {
                param: last.param.to_f64_lossy(),
                b_eq: last.b_eq.to_f64_lossy(),
                reason,
            })
        }
    }
}

/// Rightmost eigenvalue at the equilibrium near `b_guess` for parameter `p`.
fn rightmost_at<T: Real>(
    family: &ModelFamily<T>,
    mesh: &ChebyshevMesh<T>,
    nq: usize,
    p: T,
    b_guess: T,
    tol: T,
) -> Result<(T, Spectrum<T>)> {
    let model = family.at(p)?;
    let b = solve_equilibrium(&model, b_guess, tol)?;
    let sys = DiscretizedSystem::new(mesh.clone(), model, nq)?;
    Ok((b, eigenvalues_at(&sys, b)?))
}

/// Finds sign changes of `Re(rightmost)` between consecutive branch points and
/// refines each by Illinois-modified secant iteration in the parameter.
pub fn detect_bifurcations<T: Real>(
    family: &ModelFamily<T>,
    m: usize,
    branch: &[BranchPoint<T>],
    opts: &ContinuationOptions<T>,
) -> Result<Vec<BifurcationPoint<T>>> {
    if branch.len() < 2 {
        return Err(Error::InvalidArgument("a branch needs at least two points".into()));
    }
    let mesh = ChebyshevMesh::new(m, family.base.tau)?;
    let nq = opts.nq.unwrap_or_else(|| default_nq(m));
    let tol = T::lit(REFINE_TOL);
    let mut found = Vec::new();
    for w in branch.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.rightmost.re < T::zero()) == (b.rightmost.re < T::zero()) {
            continue;
        }
        let (mut p0, mut f0, mut b0) = (a.param, a.rightmost.re, a.b_eq);
        let (mut p1, mut f1, mut b1) = (b.param, b.rightmost.re, b.b_eq);
        let mut best = if f0.abs() < f1.abs() { (p0, b0, a.rightmost) } else { (p1, b1, b.rightmost) };
        let mut side = 0i8;
        let mut refined = best.2.re.abs() <= tol;
        for _ in 0..60 {
            if refined {
                break;
            }
            let p = (p0 * f1 - p1 * f0) / (f1 - f0);
            let guess = b0 + (b1 - b0) * (p - p0) / (p1 - p0);
            let (bp, spec) = match rightmost_at(family, &mesh, nq, p, guess, opts.tol) {
                Ok(v) => v,
                Err(_) => break,
            };
            let fp = spec.rightmost.re;
            if fp.abs() < best.2.re.abs() {
                best = (p, bp, spec.rightmost);
            }
            if fp.abs() <= tol {
                refined = true;
                break;
            }
            if (fp < T::zero()) == (f0 < T::zero()) {
                p0 = p;
                f0 = fp;
                b0 = bp;
                if side == -1 {
                    f1 /= T::lit(2.0);
                }
                side = -1;
            } else {
                p1 = p;
                f1 = fp;
                b1 = bp;
                if side == 1 {
                    f0 /= T::lit(2.0);
                }
                side = 1;
            }
            if (p1 - p0).abs() <= T::epsilon() * p0.abs().max(T::one()) * T::lit(4.0) {
                break;
            }
        }
        let (param, b_eq, eig) = best;
        // report the member of the pair in the upper half plane
        let eigenvalue = if eig.im < T::zero() { eig.conj() } else { eig };
        found.push(BifurcationPoint {
            kind: if eigenvalue.im.abs() > T::lit(HOPF_IM_TOL) {
                BifurcationKind::Hopf
            } else {
                BifurcationKind::ZeroCrossing
            },
            param,
            b_eq,
            eigenvalue,
            refinement_residual: eig.re.abs(),
            refined,
        });
    }
    Ok(found)
}

/// Tries a few starting guesses and returns the first nonzero equilibrium.
pub fn nontrivial_equilibrium<T: Real>(model: &RenewalModel<T>, tol: T) -> Result<T> {
    let guesses = [1.0, 0.5, 2.0, 0.1, 5.0, 0.01, 10.0, 50.0];
    for g in guesses {
        if let Ok(b) = solve_equilibrium(model, T::lit(g), tol) {
            if b.abs() > T::lit(1e-8) {
                return Ok(b);
            }
        }
    }
    Err(Error::IterationLimit {
        what: "nontrivial equilibrium search",
        iterations: guesses.len(),
        residual: f64::NAN,
    })
}

/// One row of a Hopf curve: the Hopf location in the active parameter at a
/// fixed value of the second parameter, or the reason none was found.
#[derive(Debug, Clone)]
pub struct HopfCurvePoint<T: Real> {
    pub param2: T,
    pub hopf: Option<BifurcationPoint<T>>,
    pub note: Option<String>,
}

/// Number of worker threads for grid computations: `RENEWAL_SPECTRAL_THREADS`
/// if set, otherwise the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("RENEWAL_SPECTRAL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs a one-parameter continuation plus detection at every value of
/// `param2` in `grid`; the first refined Hopf point of each run is kept.
/// Grid values are processed concurrently.
pub fn hopf_curve<T: Real>(
    family: &ModelFamily<T>,
    param2: &str,
    grid: &[T],
    m: usize,
    n_points: usize,
    opts: &ContinuationOptions<T>,
) -> Result<Vec<HopfCurvePoint<T>>> {
    if !family.base.has_param(param2) {
        return Err(Error::UnknownParameter(param2.to_string()));
    }
    let one = |v: T| -> HopfCurvePoint<T> {
        let run = || -> Result<Option<BifurcationPoint<T>>> {
            let base = family.base.with_param(param2, v)?;
            let fam = ModelFamily::new(base, family.active_param.clone(), family.range)?;
            let start = nontrivial_equilibrium(&fam.at(fam.range.0)?, opts.tol)?;
            let branch = continue_equilibria(&fam, m, start, n_points, opts)?;
            let bif = detect_bifurcations(&fam, m, &branch, opts)?;
            Ok(bif.into_iter().find(|b| b.kind == BifurcationKind::Hopf))
        };
        match run() {
            Ok(Some(h)) => HopfCurvePoint {
                param2: v,
                hopf: Some(h),
                note: None,
            },
            Ok(None) => HopfCurvePoint {
                param2: v,
                hopf: None,
                note: Some("no Hopf point in range".into()),
            },
            Err(e) => HopfCurvePoint {
                param2: v,
                hopf: None,
                note: Some(e.to_string()),
            },
        }
    };
    let workers = worker_threads().min(grid.len()).max(1);
    let mut out: Vec<Option<HopfCurvePoint<T>>> = vec![None; grid.len()];
    std::thread::scope(|scope| {
        let chunks: Vec<_> = out.chunks_mut(grid.len().div_ceil(workers)).collect();
        let mut offset = 0;
        for chunk in chunks {
            let start = offset;
            offset += chunk.len();
            let one = &one;
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(one(grid[start + k]));
                }
            });
        }
    });
    Ok(out.into_iter().map(|p| p.expect("every grid value processed")).collect())
}

/// `param, b_eq, Re_rightmost, Im_rightmost, stable`.
pub fn branch_to_csv<T: Real>(branch: &[BranchPoint<T>]) -> String {
    let mut out = String::from("param,b_eq,re_rightmost,im_rightmost,stable\n");
    for p in branch {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{}",
            p.param, p.b_eq, p.rightmost.re, p.rightmost.im, p.stable as u8
        );
    }
    out
}
