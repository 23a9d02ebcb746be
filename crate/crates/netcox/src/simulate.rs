//! Event simulation from specified or fitted models, and the Monte Carlo
//! validation harness for the asymptotic normality of the local MLE.
//!
//! Randomness is counter-based: every pair owns its own ChaCha stream keyed
//! by its position in the design, so parallel simulation is reproducible
//! irrespective of scheduling, and per-replicate seeds derive from the
//! master seed and the replicate index.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, Uniform};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::estimator::{fit_at, normal_quantile, FitError, SolverConfig};
use crate::likelihood::{LocalLikContext, OVERFLOW_GUARD};
use crate::model::{Event, EventStream, ModelSpec, Panel, PanelRecord, ParameterCurve};
use crate::numeric::{mix_seed, normal_cdf};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("intensity overflow: theta'x = {dot:.3e} for pair ({i},{j}) exceeds {OVERFLOW_GUARD}")]
    IntensityOverflow { i: u32, j: u32, dot: f64 },
    #[error("per-piece Poisson generation requires a constant parameter curve")]
    MethodRequiresConstantIntensity,
    #[error("covariate rule count {got} disagrees with curve dimension {want}")]
    Dimension { got: usize, want: usize },
    #[error("model error: {0}")]
    Model(#[from] crate::model::ModelError),
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("the validation harness requires a time-stationary design: {0}")]
    NonStationaryDesign(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// True parameter path of a design: constant or piecewise linear in time.
#[derive(Debug, Clone)]
pub enum ThetaCurve {
    Constant(Vec<f64>),
    PiecewiseLinear(ParameterCurve),
}

impl ThetaCurve {
    pub fn q(&self) -> usize {
        match self {
            ThetaCurve::Constant(v) => v.len(),
            ThetaCurve::PiecewiseLinear(c) => c.q(),
        }
    }

    pub fn value_at(&self, t: f64) -> Vec<f64> {
        match self {
            ThetaCurve::Constant(v) => v.clone(),
            ThetaCurve::PiecewiseLinear(c) => c.value_at(t),
        }
    }

    fn dot_at(&self, t: f64, x: &[f64]) -> f64 {
        self.value_at(t).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Maximum of `theta(t)'x` over `[a, b]`; exact because the linear
    /// predictor is piecewise linear in `t` with knots at the curve grid.
    fn max_dot(&self, x: &[f64], a: f64, b: f64) -> f64 {
        match self {
            ThetaCurve::Constant(v) => v.iter().zip(x).map(|(a, b)| a * b).sum(),
            ThetaCurve::PiecewiseLinear(c) => {
                let mut best = self.dot_at(a, x).max(self.dot_at(b, x));
                for &k in &c.eval_times {
                    if k > a && k < b {
                        best = best.max(self.dot_at(k, x));
                    }
                }
                best
            }
        }
    }
}

/// One synthetic covariate column, drawn independently per pair and cell.
#[derive(Debug, Clone)]
pub enum ColumnRule {
    /// Constant 1 (the baseline column).
    Intercept,
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

/// Censor selector of a synthetic design. `Bernoulli` draws once per pair
/// and freezes the indicator over the whole horizon.
#[derive(Debug, Clone)]
pub enum CensorRule {
    AlwaysActive,
    Bernoulli { p: f64 },
}

/// Where the covariates and censors of a design come from.
#[derive(Debug, Clone)]
pub enum DesignData {
    Synthetic {
        n_cells: usize,
        covariates: Vec<ColumnRule>,
        censor: CensorRule,
    },
    /// Replays covariates and censor indicators from an existing panel.
    Replay { panel: Panel },
}

/// A reproducible simulation design on unit-length cells.
///
/// The pair list is explicit and ordered: random streams attach to list
/// positions, so relabeling node identities permutes the output exactly.
#[derive(Debug, Clone)]
pub struct SimDesign {
    pub n_nodes: u32,
    pub directed: bool,
    pub pairs: Vec<(u32, u32)>,
    pub theta: ThetaCurve,
    pub data: DesignData,
    pub seed: u64,
}

/// How event times are generated within a constant-covariate cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMethod {
    /// Per-piece Poisson for constant curves, thinning otherwise.
    Auto,
    /// Poisson counts with uniform placement; constant curves only.
    PerPiecePoisson,
    /// Lewis-Shedler thinning against the per-cell intensity supremum.
    Thinning,
}

impl SimDesign {
    /// All pairs on `1..=n_nodes` in canonical order, with synthetic data.
    pub fn complete(
        n_nodes: u32,
        directed: bool,
        n_cells: usize,
        theta: ThetaCurve,
        covariates: Vec<ColumnRule>,
        censor: CensorRule,
        seed: u64,
    ) -> Result<Self, SimError> {
        if covariates.len() != theta.q() {
            return Err(SimError::Dimension {
                got: covariates.len(),
                want: theta.q(),
            });
        }
        let mut pairs = Vec::new();
        for i in 1..=n_nodes {
            for j in 1..=n_nodes {
                if i == j {
                    continue;
                }
                if directed || i < j {
                    pairs.push((i, j));
                }
            }
        }
        Ok(Self {
            n_nodes,
            directed,
            pairs,
            theta,
            data: DesignData::Synthetic {
                n_cells,
                covariates,
                censor,
            },
            seed,
        })
    }

    /// Replays the covariates and censors of `panel` under a new curve.
    pub fn from_panel(panel: &Panel, theta: ThetaCurve, seed: u64) -> Result<Self, SimError> {
        if panel.q() != theta.q() {
            return Err(SimError::Dimension {
                got: panel.q(),
                want: theta.q(),
            });
        }
        let mut pairs = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for r in panel.records() {
            if seen.insert((r.i, r.j)) {
                pairs.push((r.i, r.j));
            }
        }
        Ok(Self {
            n_nodes: panel.n_nodes(),
            directed: false,
            pairs,
            theta,
            data: DesignData::Replay {
                panel: panel.clone(),
            },
            seed,
        })
    }

    pub fn n_cells(&self) -> usize {
        match &self.data {
            DesignData::Synthetic { n_cells, .. } => *n_cells,
            DesignData::Replay { panel } => panel.n_cells(),
        }
    }

    pub fn q(&self) -> usize {
        self.theta.q()
    }

    pub fn cell_times(&self) -> Vec<f64> {
        match &self.data {
            DesignData::Synthetic { n_cells, .. } => (0..*n_cells).map(|c| c as f64).collect(),
            DesignData::Replay { panel } => panel.cell_times().to_vec(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut d = self.clone();
        d.seed = seed;
        d
    }

    /// Maps node identities through `perm` (pair list order preserved), so
    /// simulated output permutes along with the design.
    pub fn relabel(&self, perm: &[u32]) -> Result<Self, SimError> {
        let mut d = self.clone();
        for (i, j) in &mut d.pairs {
            let (mut a, mut b) = (perm[(*i - 1) as usize], perm[(*j - 1) as usize]);
            if !self.directed && a > b {
                std::mem::swap(&mut a, &mut b);
            }
            *i = a;
            *j = b;
        }
        if let DesignData::Replay { panel } = &self.data {
            d.data = DesignData::Replay {
                panel: panel.relabel(perm)?,
            };
        }
        Ok(d)
    }

    fn pair_rng(&self, pair_idx: usize) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(1 + pair_idx as u64);
        rng
    }

    /// Materializes censor indicator and per-cell covariates for one pair.
    /// Cells where the pair is inactive yield `None`.
    fn pair_cells(&self, pair_idx: usize, rng: &mut ChaCha12Rng) -> Vec<Option<Vec<f64>>> {
        match &self.data {
            DesignData::Synthetic {
                n_cells,
                covariates,
                censor,
            } => {
                let active = match censor {
                    CensorRule::AlwaysActive => true,
                    CensorRule::Bernoulli { p } => rng.random::<f64>() < *p,
                };
                (0..*n_cells)
                    .map(|_| {
                        if !active {
                            return None;
                        }
                        let x = covariates
                            .iter()
                            .map(|rule| match rule {
                                ColumnRule::Intercept => 1.0,
                                ColumnRule::Uniform { lo, hi } => {
                                    Uniform::new(*lo, *hi).expect("uniform bounds").sample(rng)
                                }
                                ColumnRule::Normal { mean, sd } => {
                                    Normal::new(*mean, *sd).expect("normal params").sample(rng)
                                }
                                ColumnRule::Bernoulli { p } => {
                                    if rng.random::<f64>() < *p {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                            })
                            .collect();
                        Some(x)
                    })
                    .collect()
            }
            DesignData::Replay { panel } => {
                let (pi, pj) = self.pairs[pair_idx];
                let mut cells = vec![None; panel.n_cells()];
                for r in panel.records() {
                    if (r.i, r.j) == (pi, pj) && r.censor {
                        cells[r.cell] = Some(r.x.clone());
                    }
                }
                cells
            }
        }
    }
}

/// Draws an inhomogeneous-Poisson event stream from the design.
pub fn simulate_stream(design: &SimDesign, method: SimMethod) -> Result<EventStream, SimError> {
    let constant_curve = matches!(design.theta, ThetaCurve::Constant(_));
    if method == SimMethod::PerPiecePoisson && !constant_curve {
        return Err(SimError::MethodRequiresConstantIntensity);
    }
    let use_direct = match method {
        SimMethod::Auto => constant_curve,
        SimMethod::PerPiecePoisson => true,
        SimMethod::Thinning => false,
    };
    let n_cells = design.n_cells();
    let horizon = n_cells as f64;
    let mut events = Vec::new();
    for (pair_idx, &(i, j)) in design.pairs.iter().enumerate() {
        let mut rng = design.pair_rng(pair_idx);
        let cells = design.pair_cells(pair_idx, &mut rng);
        for (c, x) in cells.iter().enumerate() {
            let Some(x) = x else { continue };
            let (a, b) = (c as f64, c as f64 + 1.0);
            let max_dot = design.theta.max_dot(x, a, b);
            if max_dot > OVERFLOW_GUARD {
                return Err(SimError::IntensityOverflow { i, j, dot: max_dot });
            }
            if use_direct {
                let rate = max_dot.exp();
                let count = Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64;
                let mut times: Vec<f64> = (0..count).map(|_| b - rng.random::<f64>()).collect();
                times.sort_by(|p, q| p.partial_cmp(q).unwrap());
                events.extend(times.into_iter().map(|time| Event { time, i, j }));
            } else {
                let lambda_max = max_dot.exp();
                let exp = Exp::new(lambda_max).expect("positive rate");
                let mut t = a;
                loop {
                    t += exp.sample(&mut rng);
                    if t > b {
                        break;
                    }
                    let accept: f64 = rng.random();
                    let lam = design.theta.dot_at(t, x).exp();
                    if accept < lam / lambda_max {
                        events.push(Event { time: t, i, j });
                    }
                }
            }
        }
    }
    Ok(EventStream::new(
        design.n_nodes,
        design.directed,
        horizon,
        events,
    )?)
}

/// Draws a panel of per-pair per-cell Poisson counts (unit exposure per
/// cell) together with the covariates and censors that generated them.
pub fn simulate_panel(design: &SimDesign) -> Result<Panel, SimError> {
    let q = design.q();
    let n_cells = design.n_cells();
    let cell_times = design.cell_times();
    let per_pair: Result<Vec<Vec<(usize, Vec<f64>, u64)>>, SimError> = design
        .pairs
        .par_iter()
        .enumerate()
        .map(|(pair_idx, &(i, j))| {
            let mut rng = design.pair_rng(pair_idx);
            let cells = design.pair_cells(pair_idx, &mut rng);
            let mut out = Vec::new();
            for (c, x) in cells.into_iter().enumerate() {
                let Some(x) = x else { continue };
                let dot = design.theta.dot_at(cell_times[c], &x);
                if dot > OVERFLOW_GUARD {
                    return Err(SimError::IntensityOverflow { i, j, dot });
                }
                let count = Poisson::new(dot.exp())
                    .expect("positive rate")
                    .sample(&mut rng) as u64;
                out.push((c, x, count));
            }
            Ok(out)
        })
        .collect();
    let per_pair = per_pair?;
    let mut records = Vec::new();
    for c in 0..n_cells {
        for (pair_idx, cells) in per_pair.iter().enumerate() {
            let (i, j) = design.pairs[pair_idx];
            for (cell, x, count) in cells {
                if *cell == c {
                    records.push(PanelRecord {
                        cell: c,
                        i,
                        j,
                        count: *count,
                        censor: true,
                        x: x.clone(),
                    });
                }
            }
        }
    }
    Ok(Panel::new(design.n_nodes, n_cells, q, cell_times, records)?)
}

/// Poisson counts for one panel cell under parameters `theta`: for each
/// uncensored pair, `count ~ Poisson(exp(theta'x))`; censored pairs are 0
/// and omitted from the output.
pub fn simulate_panel_counts(
    panel: &Panel,
    cell: usize,
    theta: &[f64],
    seed: u64,
) -> Result<Vec<((u32, u32), u64)>, SimError> {
    let records = panel.cell_records(cell)?;
    let mut out = Vec::new();
    for (pos, r) in records.iter().filter(|r| r.censor).enumerate() {
        let dot: f64 = theta.iter().zip(&r.x).map(|(a, b)| a * b).sum();
        if dot > OVERFLOW_GUARD {
            return Err(SimError::IntensityOverflow {
                i: r.i,
                j: r.j,
                dot,
            });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(1 + pos as u64);
        let count = Poisson::new(dot.exp())
            .expect("positive rate")
            .sample(&mut rng) as u64;
        out.push(((r.i, r.j), count));
    }
    Ok(out)
}

/// Per-coordinate summary of the standardized errors of a study.
#[derive(Debug, Clone, Serialize)]
pub struct CoordinateSummary {
    pub coverage_90: f64,
    pub coverage_95: f64,
    pub coverage_99: f64,
    pub mean_z: f64,
    pub var_z: f64,
    pub ad_stat: f64,
    pub n_excluded: usize,
}

/// Monte Carlo validation report for the plug-in normality approximation.
#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub n_reps: usize,
    pub n_used: usize,
    pub n_excluded: usize,
    pub n_fit_errors: usize,
    pub n_not_converged: usize,
    pub t0: f64,
    pub theta0: Vec<f64>,
    pub coords: Vec<CoordinateSummary>,
}

/// Simulates `n_reps` panels from a time-stationary design with constant
/// selectors, fits each at `t0`, and summarizes the standardized errors
/// `z = Cov^{-1/2}(theta_hat - theta0)`, whose coordinates are standard
/// normal when the plug-in covariance is correct. Under this design the
/// smoothing bias terms of the asymptotic expansion vanish, so no bias
/// correction is applied (none is estimable).
pub fn mc_normality_study(
    design: &SimDesign,
    spec: &ModelSpec,
    cfg: &SolverConfig,
    t0: f64,
    n_reps: usize,
) -> Result<StudyReport, StudyError> {
    let theta0 = match &design.theta {
        ThetaCurve::Constant(v) => v.clone(),
        ThetaCurve::PiecewiseLinear(_) => {
            return Err(StudyError::NonStationaryDesign(
                "parameter curve must be constant".into(),
            ))
        }
    };
    if let DesignData::Replay { .. } = design.data {
        return Err(StudyError::NonStationaryDesign(
            "replayed panels carry unverifiable time dependence".into(),
        ));
    }

    const NOT_CONVERGED: &str = "fit did not converge";
    let results: Vec<Result<Vec<f64>, FitError>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let d = design.with_seed(mix_seed(design.seed, rep as u64));
            let panel = simulate_panel(&d).map_err(|e| {
                FitError::Dimension(format!("simulation failed in replicate {rep}: {e}"))
            })?;
            let ctx = LocalLikContext::from_panel(&panel, &spec.kernel, spec.bandwidth, t0)?;
            let fit = fit_at(&ctx, spec, cfg, &vec![0.0; spec.q])?;
            if !fit.solver.converged {
                return Err(FitError::Dimension(NOT_CONVERGED.into()));
            }
            // z = Cov^{-1/2} (theta_hat - theta0)
            let eigen = nalgebra::SymmetricEigen::new(fit.covariance.clone());
            let diff = nalgebra::DVector::from_iterator(
                spec.q,
                fit.theta_hat.iter().zip(&theta0).map(|(a, b)| a - b),
            );
            let mut z = nalgebra::DVector::zeros(spec.q);
            for k in 0..spec.q {
                let u = eigen.eigenvectors.column(k);
                z += (u.dot(&diff) / eigen.eigenvalues[k].max(1e-300).sqrt()) * u;
            }
            Ok(z.iter().cloned().collect())
        })
        .collect();

    let mut zs: Vec<Vec<f64>> = vec![Vec::new(); spec.q];
    let mut n_fit_errors = 0usize;
    let mut n_not_converged = 0usize;
    for r in &results {
        match r {
            Ok(z) => {
                for (m, zm) in z.iter().enumerate() {
                    zs[m].push(*zm);
                }
            }
            Err(FitError::Dimension(msg)) if msg == NOT_CONVERGED => n_not_converged += 1,
            Err(_) => n_fit_errors += 1,
        }
    }
    let n_excluded = n_fit_errors + n_not_converged;
    let n_used = n_reps - n_excluded;

    let z90 = normal_quantile(0.95);
    let z95 = normal_quantile(0.975);
    let z99 = normal_quantile(0.995);
    let coords = zs
        .iter()
        .map(|z| {
            let n = z.len();
            if n == 0 {
                return CoordinateSummary {
                    coverage_90: f64::NAN,
                    coverage_95: f64::NAN,
                    coverage_99: f64::NAN,
                    mean_z: f64::NAN,
                    var_z: f64::NAN,
                    ad_stat: f64::NAN,
                    n_excluded,
                };
            }
            let nf = n as f64;
            let cover = |zq: f64| z.iter().filter(|&&v| v.abs() <= zq).count() as f64 / nf;
            let mean = z.iter().sum::<f64>() / nf;
            let var = if n > 1 {
                z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0)
            } else {
                f64::NAN
            };
            CoordinateSummary {
                coverage_90: cover(z90),
                coverage_95: cover(z95),
                coverage_99: cover(z99),
                mean_z: mean,
                var_z: var,
                ad_stat: anderson_darling(z),
                n_excluded,
            }
        })
        .collect();

    Ok(StudyReport {
        n_reps,
        n_used,
        n_excluded,
        n_fit_errors,
        n_not_converged,
        t0,
        theta0,
        coords,
    })
}

/// Anderson-Darling statistic against the standard normal (no parameter
/// estimation).
pub fn anderson_darling(z: &[f64]) -> f64 {
    let mut s: Vec<f64> = z.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let phi_lo = normal_cdf(s[i]).clamp(1e-300, 1.0 - 1e-16);
        let phi_hi = normal_cdf(s[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        acc += (2.0 * i as f64 + 1.0) * (phi_lo.ln() + (1.0 - phi_hi).ln());
    }
    -nf - acc / nf
}
