use std::fmt::Write as _;
use std::fs;

use ndarray::Array1;
use renewal_spectral::continuation::{
    self, continue_equilibria_partial, nontrivial_equilibrium, ContinuationOptions,
};
use renewal_spectral::discretize::{equilibrium_lift, history_to_state, solve_equilibrium};
use renewal_spectral::dynamics::{self, OrbitOptions, ShootingOptions};
use renewal_spectral::legacy::{bench_compare, bench_to_csv, BenchOptions};
use renewal_spectral::model::ModelConfig;
use renewal_spectral::spectral::{convergence_study, eigenvalues_at};
use renewal_spectral::{Family, Mesh, Model, System};

use crate::output::{num, preamble, Failure};
use crate::{BenchArgs, Common, ContinueArgs, ConvergeArgs, EigArgs, FloquetArgs, HopfCurveArgs, MeshArgs, SimulateArgs};

const EQ_TOL: f64 = 1e-12;

struct Loaded {
    model: Model,
    name: String,
    active: Option<String>,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let mut config = match &common.model_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::domain(format!("cannot read {}: {e}", path.display())))?;
            ModelConfig::from_json(&text)?
        }
        None => ModelConfig::named(&common.model),
    };
    if let Some(tau) = common.tau {
        config.tau = Some(tau);
    }
    let mut active = None;
    for spec in &common.param {
        match spec.split_once('=') {
            Some((k, v)) => {
                let value: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Failure::domain(format!("parameter value '{v}' is not a number")))?;
                config.params.insert(k.trim().to_string(), value);
            }
            None => {
                if active.replace(spec.trim().to_string()).is_some() {
                    return Err(Failure::domain("more than one continuation parameter given"));
                }
            }
        }
    }
    let model = config.build::<f64>()?;
    if let Some(a) = &active {
        if !model.has_param(a) {
            return Err(Failure::domain(format!("unknown parameter: {a}")));
        }
    }
    Ok(Loaded {
        name: config.model,
        model,
        active,
    })
}

fn equilibrium(model: &Model, guess: Option<f64>) -> Result<f64, Failure> {
    Ok(match guess {
        Some(g) => solve_equilibrium(model, g, EQ_TOL)?,
        None => nontrivial_equilibrium(model, EQ_TOL)?,
    })
}

fn check_m(m: usize) -> Result<(), Failure> {
    if m == 0 {
        return Err(Failure::domain("M must be at least 1"));
    }
    Ok(())
}

pub fn mesh(a: &MeshArgs) -> Result<String, Failure> {
    let mesh = Mesh::new(a.m, a.tau)?;
    let value = serde_json::json!({
        "M": a.m,
        "tau": a.tau,
        "nodes": mesh.nodes.iter().map(|v| v + 0.0).collect::<Vec<_>>(),
        "barycentric_weights": mesh.bary_weights.to_vec(),
        "quadrature_weights": mesh.quad_weights.to_vec(),
        "diff_sub": mesh.diff_sub.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Failure::numeric(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn eig(a: &EigArgs) -> Result<String, Failure> {
    check_m(a.m)?;
    let l = load(&a.common)?;
    let b = equilibrium(&l.model, a.b_guess)?;
    let sys = System::with_defaults(l.model.clone(), a.m)?;
    let spec = eigenvalues_at(&sys, b)?;
    let mut out = preamble("eig", &a.common, &l.name, &a.m.to_string(), l.model.tau, "eq_tol=1e-12");
    let _ = writeln!(out, "# b_eq={}", num(b));
    out.push_str("re,im,multiplicity\n");
    let scale = spec.eigenvalues.iter().fold(1.0f64, |s, z| s.max(z.norm()));
    for z in &spec.eigenvalues {
        let _ = writeln!(out, "{},{},{}", num(z.re), num(z.im), spec.multiplicity(*z, 1e-8 * scale));
    }
    Ok(out)
}

/// Piecewise-linear history from `theta,b` rows.
fn read_history(path: &str) -> Result<Vec<(f64, f64)>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::domain(format!("cannot read history file {path}: {e}")))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',').map(|s| s.trim().parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(t)), Some(Ok(b))) => rows.push((t, b)),
            _ if rows.is_empty() => continue, // header
            _ => return Err(Failure::domain(format!("malformed history row: {line}"))),
        }
    }
    if rows.len() < 2 {
        return Err(Failure::domain("history file needs at least two rows"));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rows)
}

fn linear_interp(rows: &[(f64, f64)], t: f64) -> f64 {
    let k = rows.partition_point(|r| r.0 <= t).clamp(1, rows.len() - 1);
    let (t0, b0) = rows[k - 1];
    let (t1, b1) = rows[k];
    b0 + (b1 - b0) * (t - t0) / (t1 - t0)
}

fn initial_state(spec: &str, model: &Model, mesh: &Mesh) -> Result<Array1<f64>, Failure> {
    if let Some(rest) = spec.strip_prefix("equilibrium") {
        let eps = if rest.is_empty() {
            0.0
        } else {
            rest.parse::<f64>()
                .map_err(|_| Failure::domain(format!("cannot parse perturbation in --x0 {spec}")))?
        };
        let b = equilibrium(model, None)?;
        return Ok(equilibrium_lift(b * (1.0 + eps), mesh));
    }
    let rows = read_history(spec)?;
    let (lo, hi) = (rows[0].0, rows[rows.len() - 1].0);
    if lo > -mesh.tau() + 1e-12 || hi < -1e-12 {
        return Err(Failure::domain(format!(
            "history covers [{lo}, {hi}] but must cover [-{}, 0]",
            mesh.tau()
        )));
    }
    Ok(history_to_state(|t| linear_interp(&rows, t), mesh, (4 * mesh.m()).max(64))?)
}

pub fn simulate(a: &SimulateArgs) -> Result<String, Failure> {
    check_m(a.m)?;
    let l = load(&a.common)?;
    let sys = System::with_defaults(l.model.clone(), a.m)?;
    let x0 = initial_state(&a.x0, &l.model, &sys.mesh)?;
    let t_end = a.t_end.unwrap_or(200.0 * l.model.tau);
    let traj = dynamics::integrate(&sys, &x0, t_end, a.rtol, a.atol)?;
    let mut out = preamble(
        "simulate",
        &a.common,
        &l.name,
        &a.m.to_string(),
        l.model.tau,
        &format!("rtol={} atol={}", num(a.rtol), num(a.atol)),
    );
    out.push_str("t,b");
    for j in 1..=a.m {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for k in 0..traj.len() {
        let _ = write!(out, "{},{}", num(traj.times[k]), num(traj.b_values[k]));
        for v in traj.states.row(k) {
            let _ = write!(out, ",{}", num(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

fn active_or_default(l: &Loaded) -> Result<String, Failure> {
    if let Some(a) = &l.active {
        return Ok(a.clone());
    }
    Ok(match l.name.as_str() {
        "blowflies" => "log_ratio",
        "linear-constant" => "gamma",
        _ => "log_gamma",
    }
    .to_string())
}

pub fn continue_branch(a: &ContinueArgs) -> Result<String, Failure> {
    check_m(a.m)?;
    let l = load(&a.common)?;
    let active = l
        .active
        .clone()
        .ok_or_else(|| Failure::domain("continue needs the continuation parameter as a bare --param NAME"))?;
    let family = Family::new(l.model.clone(), active.clone(), (a.from, a.to))?;
    let start_model = family.at(a.from)?;
    let b0 = equilibrium(&start_model, a.b_guess)?;
    let opts = ContinuationOptions::default();
    let branch = continue_equilibria_partial(&family, a.m, b0, a.points, &opts)?;
    let mut out = preamble("continue", &a.common, &l.name, &a.m.to_string(), l.model.tau, "corrector_tol=1e-12");
    let _ = writeln!(out, "# param={active}");
    if let Some(reason) = &branch.terminated {
        let _ = writeln!(out, "# branch terminated: {reason}");
    }
    out.push_str(&continuation::branch_to_csv(&branch.points));
    if let Some(reason) = branch.terminated {
        // keep the partial table on stdout/out, but report the failure
        eprintln!("warning: {reason}");
    }
    Ok(out)
}

pub fn hopf_curve(a: &HopfCurveArgs) -> Result<String, Failure> {
    check_m(a.m)?;
    let l = load(&a.common)?;
    let active = active_or_default(&l)?;
    let family = Family::new(l.model.clone(), active.clone(), (a.from, a.to))?;
    let curve = continuation::hopf_curve(&family, &a.param2, &a.grid, a.m, a.points, &ContinuationOptions::default())?;
    let mut out = preamble("hopf-curve", &a.common, &l.name, &a.m.to_string(), l.model.tau, "refine_tol=1e-8");
    let _ = writeln!(out, "# param1={active} param2={}", a.param2);
    out.push_str("param2,hopf_param1,b_eq,omega,note\n");
    for p in &curve {
        match &p.hopf {
            Some(h) => {
                let _ = writeln!(out, "{},{},{},{},", num(p.param2), num(h.param), num(h.b_eq), num(h.eigenvalue.im));
            }
            None => {
                let note = p.note.clone().unwrap_or_default().replace(',', ";");
                let _ = writeln!(out, "{},,,,{note}", num(p.param2));
            }
        }
    }
    Ok(out)
}

pub fn floquet(a: &FloquetArgs) -> Result<String, Failure> {
    check_m(a.m)?;
    let l = load(&a.common)?;
    let sys = System::with_defaults(l.model.clone(), a.m)?;
    let b = equilibrium(&l.model, None)?;
    let x0 = equilibrium_lift(b * 1.01, &sys.mesh);
    let mut opts = OrbitOptions::for_tau(l.model.tau);
    if let Some(t) = a.t_end {
        opts.t_end = t;
    }
    let orbit = dynamics::simulate_orbit(&sys, &x0, &opts)?;
    let (period, multipliers, note) = if a.refine {
        let refined = dynamics::refine_orbit(&sys, &orbit.anchor_state, orbit.period, &ShootingOptions::default())?;
        (refined.period, refined.multipliers, format!("shooting_residual={}", num(refined.residual)))
    } else {
        (orbit.period, orbit.multipliers.clone(), format!("period_cv={}", num(orbit.period_cv)))
    };
    let mut out = preamble(
        "floquet",
        &a.common,
        &l.name,
        &a.m.to_string(),
        l.model.tau,
        &format!("rtol={} atol={}", num(opts.rtol), num(opts.atol)),
    );
    let _ = writeln!(
        out,
        "# period={} b_min={} b_max={} {note}",
        num(period),
        num(orbit.b_min),
        num(orbit.b_max)
    );
    out.push_str("re,im,modulus\n");
    for z in &multipliers {
        let _ = writeln!(out, "{},{},{}", num(z.re), num(z.im), num(z.norm()));
    }
    Ok(out)
}

pub fn converge(a: &ConvergeArgs) -> Result<String, Failure> {
    if a.m_list.iter().any(|&m| m == 0) || a.reference == 0 {
        return Err(Failure::domain("M values must be at least 1"));
    }
    let l = load(&a.common)?;
    let b = equilibrium(&l.model, None)?;
    let study = convergence_study(&l.model, b, &a.m_list, a.reference, a.roots)?;
    let mut out = preamble("converge", &a.common, &l.name, &format!("ref{}", a.reference), l.model.tau, "eq_tol=1e-12");
    let _ = writeln!(out, "# b_eq={}", num(b));
    out.push_str(&study.to_csv());
    Ok(out)
}

pub fn bench(a: &BenchArgs) -> Result<String, Failure> {
    if a.m_list.iter().any(|&m| m == 0) {
        return Err(Failure::domain("M values must be at least 1"));
    }
    let l = load(&a.common)?;
    let active = active_or_default(&l)?;
    let (lo, hi) = match l.name.as_str() {
        "blowflies" => (0.5, 4.0),
        "sirs" => (1.0, 2.0),
        _ => (2.0, 4.5),
    };
    let mut opts = BenchOptions::new(active, (a.from.unwrap_or(lo), a.to.unwrap_or(hi)));
    opts.n_rhs_evals = a.rhs_evals;
    opts.n_continuation_points = a.points;
    opts.seed = a.common.seed;
    let rows = bench_compare(&l.model, &a.m_list, &opts)?;
    let list: Vec<String> = a.m_list.iter().map(|m| m.to_string()).collect();
    let mut out = preamble("bench", &a.common, &l.name, &list.join(";"), l.model.tau, "inner_tol=1e-12");
    out.push_str(&bench_to_csv(&rows));
    Ok(out)
}
