//! Maximization of the local likelihood, plug-in asymptotic covariance,
//! confidence bands, and Newton-Kantorovich diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::likelihood::{LikelihoodError, LocalLikContext};
use crate::model::{FitResult, ModelSpec, Panel, ParameterCurve, SolverDiagnostics};
pub use crate::numeric::normal_quantile;

/// Newton solver settings. `grad_tol` applies to the infinity norm of the
/// score divided by `|L_n(t0)|`.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub step_halving_max: usize,
    /// Smallest admissible magnitude for an eigenvalue of the Hessian;
    /// curvature below this is reported as an unbounded direction, never
    /// silently ridged.
    pub ridge_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 100,
            step_halving_max: 40,
            ridge_floor: 1e-10,
        }
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("no exposure: every pair is censored throughout the kernel window")]
    NoExposure,
    #[error("active set at t0 is empty; the plug-in covariance is undefined")]
    EmptyActiveSet,
    #[error("likelihood is unbounded along direction {direction:?} (curvature below ridge floor)")]
    UnboundedMle { direction: Vec<f64> },
    #[error("singular information matrix; null direction {direction:?}")]
    Singular { direction: Vec<f64> },
    #[error("no evaluation times supplied")]
    NoEvalTimes,
    #[error("initial point has infinite objective")]
    BadInit,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
}

/// Newton-Kantorovich quantities of the normalized objective
/// `l(theta, t0) / |L_n(t0)|` at a point. `r <= 1/2` certifies a root of the
/// score within radius `2 eta`; it is reported, not enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct KantorovichDiag {
    /// Operator norm of the inverse Hessian.
    pub b: f64,
    /// Norm of the Newton step.
    pub eta: f64,
    /// Local Lipschitz estimate of the Hessian along the Newton direction.
    pub k_lip: f64,
    /// `b * k_lip * eta`.
    pub r: f64,
}

fn clamp_box(theta: &mut [f64], theta_box: &[(f64, f64)]) -> bool {
    let mut changed = false;
    for (t, &(lo, hi)) in theta.iter_mut().zip(theta_box) {
        let c = t.clamp(lo, hi);
        if c != *t {
            *t = c;
            changed = true;
        }
    }
    changed
}

fn min_eig_direction(eigen: &SymmetricEigen<f64, nalgebra::Dyn>) -> (f64, DVector<f64>) {
    let mut idx = 0;
    for (i, &l) in eigen.eigenvalues.iter().enumerate() {
        if l < eigen.eigenvalues[idx] {
            idx = i;
        }
    }
    (eigen.eigenvalues[idx], eigen.eigenvectors.column(idx).into())
}

/// Solves `M d = g` from the symmetric eigendecomposition of `M`.
fn eig_solve(eigen: &SymmetricEigen<f64, nalgebra::Dyn>, g: &DVector<f64>) -> DVector<f64> {
    let q = g.len();
    let mut d = DVector::zeros(q);
    for k in 0..q {
        let u = eigen.eigenvectors.column(k);
        let coef = u.dot(g) / eigen.eigenvalues[k];
        d += coef * u;
    }
    d
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.abs()))
}

/// Maximizes the local likelihood by damped Newton (full step, halved until
/// the objective increases). The objective is concave, so this is globally
/// convergent; near-singular curvature is reported as `UnboundedMle` with
/// the offending direction.
pub fn fit_at(
    ctx: &LocalLikContext,
    spec: &ModelSpec,
    cfg: &SolverConfig,
    init: &[f64],
) -> Result<FitResult, FitError> {
    let q = ctx.q();
    if spec.q != q || init.len() != q {
        return Err(FitError::Dimension(format!(
            "context q = {q}, spec q = {}, init len = {}",
            spec.q,
            init.len()
        )));
    }
    if !ctx.has_exposure() {
        return Err(FitError::NoExposure);
    }
    let scale = ctx.active_size().max(1) as f64;

    let mut theta = init.to_vec();
    clamp_box(&mut theta, &spec.theta_box);
    let mut ll = ctx.local_loglik(&theta);
    if ll.is_infinite() {
        theta = vec![0.0; q];
        clamp_box(&mut theta, &spec.theta_box);
        ll = ctx.local_loglik(&theta);
        if ll.is_infinite() {
            return Err(FitError::BadInit);
        }
    }

    let mut iterations = 0usize;
    let mut converged = false;
    let mut grad_norm;
    loop {
        let (g, h) = ctx.score_hessian(&theta)?;
        grad_norm = g.amax();
        let eigen = SymmetricEigen::new(-h);
        let (lam_min, mut dir) = min_eig_direction(&eigen);
        if lam_min < cfg.ridge_floor {
            // Orient the flat direction toward ascent before reporting it.
            if dir.dot(&g) < 0.0 {
                dir = -dir;
            }
            return Err(FitError::UnboundedMle {
                direction: dir.iter().cloned().collect(),
            });
        }
        let d = eig_solve(&eigen, &g);
        // A small score alone does not certify a maximum: along an unbounded
        // ray both score and curvature vanish while the Newton step stays
        // large. Require the step to be small as well.
        let theta_scale = 1.0 + theta.iter().fold(0.0f64, |a, &t| a.max(t.abs()));
        if grad_norm <= cfg.grad_tol * scale && d.amax() <= 1e-6 * theta_scale {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.step_halving_max {
            let cand: Vec<f64> = theta.iter().zip(d.iter()).map(|(t, di)| t + s * di).collect();
            let cand_ll = ctx.local_loglik(&cand);
            if cand_ll > ll {
                theta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            // The objective is flat to rounding. Accept the full Newton step
            // if it still reduces the score norm (Newton polishing), else
            // stop at the current point.
            let cand: Vec<f64> = theta.iter().zip(d.iter()).map(|(t, di)| t + di).collect();
            if ctx.local_loglik(&cand).is_finite() {
                let g2 = ctx.score(&cand)?;
                if g2.amax() < grad_norm {
                    theta = cand;
                    ll = ctx.local_loglik(&theta);
                    continue;
                }
            }
            break;
        }
    }

    if clamp_box(&mut theta, &spec.theta_box) {
        // The optimum fell outside the box; report the projected point
        // honestly with its own gradient norm.
        let g = ctx.score(&theta)?;
        grad_norm = g.amax();
        converged = grad_norm <= cfg.grad_tol * scale;
    }

    let covariance = asymptotic_covariance(ctx, &theta)?;
    let std_errors: Vec<f64> = (0..q).map(|m| covariance[(m, m)].max(0.0).sqrt()).collect();
    let kantorovich_r = kantorovich_check(ctx, &theta).map(|d| d.r).ok();

    Ok(FitResult {
        t0: ctx.t0(),
        theta_hat: theta,
        covariance,
        std_errors,
        active_size: ctx.active_size(),
        effective_scale: ctx.active_size() as f64 * ctx.bandwidth(),
        solver: SolverDiagnostics {
            iterations,
            final_grad_norm: grad_norm,
            converged,
            kantorovich_r,
        },
    })
}

/// Plug-in covariance from the asymptotic normality of the local MLE:
///
/// `Cov(theta_hat) = ∫K² * Sigma_hat^{-1} / (|L_n(t0)| * h)` with
/// `Sigma_hat = -(1/|L_n(t0)|) * d²/dtheta² l(theta_hat, t0)`.
///
/// The observable active-set size `|L_n(t0)|` stands in for the effective
/// sample size.
pub fn asymptotic_covariance(
    ctx: &LocalLikContext,
    theta_hat: &[f64],
) -> Result<DMatrix<f64>, FitError> {
    let l = ctx.active_size() as f64;
    if l == 0.0 {
        return Err(FitError::EmptyActiveSet);
    }
    let h_mat = ctx.hessian(theta_hat)?;
    let sigma = -h_mat / l;
    let eigen = SymmetricEigen::new(sigma);
    let lam_max = eigen
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let (lam_min, dir) = min_eig_direction(&eigen);
    if lam_min <= 1e-12 * lam_max.max(1e-300) {
        return Err(FitError::Singular {
            direction: dir.iter().cloned().collect(),
        });
    }
    let q = ctx.q();
    let scale = ctx.kernel_l2() / (l * ctx.bandwidth());
    let mut cov = DMatrix::zeros(q, q);
    for k in 0..q {
        let u = eigen.eigenvectors.column(k);
        cov += (scale / eigen.eigenvalues[k]) * &u * u.transpose();
    }
    // Kill rounding asymmetry.
    let cov = 0.5 * (&cov + cov.transpose());
    Ok(cov)
}

/// Per-coordinate confidence interval `theta_m ± z_{(1+level)/2} * se_m`.
pub fn confidence_band(fit: &FitResult, level: f64) -> Result<Vec<(f64, f64)>, FitError> {
    if !(0.0..1.0).contains(&level) {
        return Err(FitError::Dimension(format!(
            "confidence level {level} outside [0, 1)"
        )));
    }
    let z = normal_quantile((1.0 + level) / 2.0);
    Ok(fit
        .theta_hat
        .iter()
        .zip(&fit.std_errors)
        .map(|(&t, &se)| (t - z * se, t + z * se))
        .collect())
}

/// Newton-Kantorovich quantities at `theta` for the normalized objective.
pub fn kantorovich_check(
    ctx: &LocalLikContext,
    theta: &[f64],
) -> Result<KantorovichDiag, FitError> {
    let l = ctx.active_size().max(1) as f64;
    let (g, h) = ctx.score_hessian(theta)?;
    let f1 = g / l;
    let f2 = -h / l;
    let eigen = SymmetricEigen::new(f2);
    let lam_max = eigen
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let (lam_min, dir) = min_eig_direction(&eigen);
    if lam_min <= 1e-14 * lam_max.max(1e-300) {
        return Err(FitError::Singular {
            direction: dir.iter().cloned().collect(),
        });
    }
    let b = 1.0 / lam_min;
    let d = eig_solve(&eigen, &f1);
    let eta = d.norm();
    let theta_v = DVector::from_column_slice(theta);
    let u = if eta > 0.0 {
        &d / eta
    } else {
        let mut e = DVector::zeros(theta.len());
        e[0] = 1.0;
        e
    };
    let delta = 1e-4 * theta_v.norm().max(1.0);
    let plus: Vec<f64> = (&theta_v + delta * &u).iter().cloned().collect();
    let minus: Vec<f64> = (&theta_v - delta * &u).iter().cloned().collect();
    let hp = ctx.hessian(&plus)? / l;
    let hm = ctx.hessian(&minus)? / l;
    let k_lip = op_norm(&(hp - hm)) / (2.0 * delta);
    Ok(KantorovichDiag {
        b,
        eta,
        k_lip,
        r: b * k_lip * eta,
    })
}

/// Fits of a whole evaluation grid plus the curve of successful estimates.
#[derive(Debug)]
pub struct CurveFit {
    pub curve: ParameterCurve,
    pub fits: Vec<(f64, Result<FitResult, FitError>)>,
}

/// Sweeps `spec.eval_times`, warm-starting each fit from the previous
/// estimate (the objective is concave, so the result does not depend on the
/// start beyond solver tolerance). With `warm_start = false` the fits are
/// independent and run in parallel.
pub fn fit_curve(
    panel: &Panel,
    spec: &ModelSpec,
    cfg: &SolverConfig,
    warm_start: bool,
) -> Result<CurveFit, FitError> {
    if spec.eval_times.is_empty() {
        return Err(FitError::NoEvalTimes);
    }
    let fits: Vec<(f64, Result<FitResult, FitError>)> = if warm_start {
        let mut init = vec![0.0; spec.q];
        let mut out = Vec::with_capacity(spec.eval_times.len());
        for &t0 in &spec.eval_times {
            let res = LocalLikContext::from_panel(panel, &spec.kernel, spec.bandwidth, t0)
                .map_err(FitError::from)
                .and_then(|ctx| fit_at(&ctx, spec, cfg, &init));
            if let Ok(fit) = &res {
                init = fit.theta_hat.clone();
            }
            out.push((t0, res));
        }
        out
    } else {
        spec.eval_times
            .par_iter()
            .map(|&t0| {
                let res = LocalLikContext::from_panel(panel, &spec.kernel, spec.bandwidth, t0)
                    .map_err(FitError::from)
                    .and_then(|ctx| fit_at(&ctx, spec, cfg, &vec![0.0; spec.q]));
                (t0, res)
            })
            .collect()
    };
    let mut eval_times = Vec::new();
    let mut values = Vec::new();
    for (t0, res) in &fits {
        if let Ok(fit) = res {
            eval_times.push(*t0);
            values.push(fit.theta_hat.clone());
        }
    }
    Ok(CurveFit {
        curve: ParameterCurve { eval_times, values },
        fits,
    })
}
