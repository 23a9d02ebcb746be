//! The localized log-likelihood, its score and Hessian, in discrete-panel
//! and continuous-time forms.
//!
//! With kernel weights `w = K((t - t0)/h)` the objective is
//!
//! `l(theta) = (1/h) * sum_pairs [ sum_events w * count * theta'x
//!                               - sum_exposure omega * exp(theta'x) ]`
//!
//! where `omega` is `w * cell_exposure` on a panel (one unit of exposure per
//! cell) and the exact kernel mass `∫ K((t-t0)/h) dt` of a constant-covariate
//! piece in continuous time. The objective is concave in `theta`; event terms
//! are linear, so all curvature comes from the exposure terms.

use rayon::prelude::*;
use thiserror::Error;

use nalgebra::{DMatrix, DVector};

use crate::kernel::Kernel;
use crate::model::{EventStream, Panel};
use crate::numeric::{pairwise_sum, pairwise_sum_vecs};

/// Linear predictors above this threshold would overflow `exp`.
pub const OVERFLOW_GUARD: f64 = 700.0;

#[derive(Debug, Error)]
pub enum LikelihoodError {
    /// `theta' x` exceeded the overflow guard for some term.
    #[error("exp overflow: theta'x = {dot:.3e} for pair ({i},{j}) exceeds {OVERFLOW_GUARD}")]
    Overflow { i: u32, j: u32, dot: f64 },
    #[error("theta has length {got}, expected {want}")]
    ThetaLength { got: usize, want: usize },
    #[error("pair path piece for ({i},{j}) is invalid: {reason}")]
    BadPiece { i: u32, j: u32, reason: String },
    #[error("covariate vector for pair ({i},{j}) has length {got}, expected {want}")]
    CovariateLength {
        i: u32,
        j: u32,
        got: usize,
        want: usize,
    },
}

#[derive(Debug, Clone)]
struct PairTerms {
    pair: (u32, u32),
    /// `(kernel weight, count, arena index)`
    events: Vec<(f64, f64, u32)>,
    /// `(kernel mass omega, arena index)`
    exposures: Vec<(f64, u32)>,
}

/// A constant-covariate stretch of one pair's history: covariates and censor
/// status on the interval `(start, end]`.
#[derive(Debug, Clone)]
pub struct PathPiece {
    pub start: f64,
    pub end: f64,
    pub censor: bool,
    pub x: Vec<f64>,
}

/// Piecewise-constant covariate/censor history of one pair. Gaps between
/// pieces are treated as censored time.
#[derive(Debug, Clone)]
pub struct PairPath {
    pub i: u32,
    pub j: u32,
    pub pieces: Vec<PathPiece>,
}

/// Raw builder input for a single pair (used by tests and adapters).
#[derive(Debug, Clone)]
pub struct RawPairTerms {
    pub pair: (u32, u32),
    /// `(kernel weight, count, covariates)`
    pub events: Vec<(f64, f64, Vec<f64>)>,
    /// `(kernel mass, covariates)`
    pub exposures: Vec<(f64, Vec<f64>)>,
}

/// The data of one evaluation time restricted to the kernel window
/// `[t0 - h, t0 + h]`, with precomputed kernel weights.
#[derive(Debug, Clone)]
pub struct LocalLikContext {
    q: usize,
    h: f64,
    t0: f64,
    kernel_l2: f64,
    active_size: usize,
    boundary: bool,
    /// Covariate arena, stride `q`; terms refer to rows by index.
    xs: Vec<f64>,
    pairs: Vec<PairTerms>,
}

impl LocalLikContext {
    /// Builds the panel-form context at `t0`. Cells with zero kernel weight
    /// carry no terms; censored records contribute nothing.
    pub fn from_panel(
        panel: &Panel,
        kernel: &Kernel,
        bandwidth: f64,
        t0: f64,
    ) -> Result<Self, LikelihoodError> {
        let q = panel.q();
        let (su_lo, su_hi) = kernel.support();
        let times = panel.cell_times();
        let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
        let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let boundary = t0 + bandwidth * su_lo < t_min - 1e-9 || t0 + bandwidth * su_hi > t_max + 1e-9;

        let mut ctx = Self {
            q,
            h: bandwidth,
            t0,
            kernel_l2: kernel.l2(),
            active_size: 0,
            boundary,
            xs: Vec::new(),
            pairs: Vec::new(),
        };
        let mut slot = std::collections::HashMap::new();
        for cell in 0..panel.n_cells() {
            let w = kernel.eval((times[cell] - t0) / bandwidth);
            if w == 0.0 {
                continue;
            }
            for rec in panel.cell_records(cell).expect("cell in range") {
                if !rec.censor {
                    continue;
                }
                let idx = ctx.push_x(&rec.x);
                let s = *slot
                    .entry((rec.i, rec.j))
                    .or_insert_with(|| ctx.push_pair((rec.i, rec.j)));
                ctx.pairs[s].exposures.push((w, idx));
                if rec.count > 0 {
                    ctx.pairs[s].events.push((w, rec.count as f64, idx));
                }
            }
        }
        let t0_cell = panel.nearest_cell(t0);
        ctx.active_size = panel
            .cell_records(t0_cell)
            .expect("cell in range")
            .iter()
            .filter(|r| r.censor)
            .count();
        Ok(ctx)
    }

    /// Builds the continuous-time context from piecewise-constant pair
    /// histories and an event stream. Exposure integrals use the exact
    /// kernel mass of each piece; events take the covariates of the piece
    /// containing them under the left-continuous `(start, end]` convention.
    pub fn from_pair_paths(
        paths: &[PairPath],
        events: &EventStream,
        kernel: &Kernel,
        bandwidth: f64,
        t0: f64,
    ) -> Result<Self, LikelihoodError> {
        let q = paths
            .iter()
            .flat_map(|p| p.pieces.first())
            .map(|pc| pc.x.len())
            .next()
            .unwrap_or(0);
        let (su_lo, su_hi) = kernel.support();
        let boundary = t0 + bandwidth * su_lo < -1e-9
            || t0 + bandwidth * su_hi > events.horizon() + 1e-9;

        let mut ctx = Self {
            q,
            h: bandwidth,
            t0,
            kernel_l2: kernel.l2(),
            active_size: 0,
            boundary,
            xs: Vec::new(),
            pairs: Vec::new(),
        };
        let mut slot = std::collections::HashMap::new();
        for path in paths {
            let key = (path.i, path.j);
            let s = *slot.entry(key).or_insert_with(|| ctx.push_pair(key));
            let mut prev_end = f64::NEG_INFINITY;
            for pc in &path.pieces {
                if !(pc.start < pc.end) || pc.start < prev_end - 1e-12 {
                    return Err(LikelihoodError::BadPiece {
                        i: path.i,
                        j: path.j,
                        reason: format!("piece ({}, {}] out of order", pc.start, pc.end),
                    });
                }
                prev_end = pc.end;
                if pc.x.len() != q {
                    return Err(LikelihoodError::CovariateLength {
                        i: path.i,
                        j: path.j,
                        got: pc.x.len(),
                        want: q,
                    });
                }
                if !pc.censor {
                    continue;
                }
                if pc.start < t0 && t0 <= pc.end {
                    ctx.active_size += 1;
                }
                let u_a = (pc.start - t0) / bandwidth;
                let u_b = (pc.end - t0) / bandwidth;
                let omega = bandwidth * kernel.integral(u_a, u_b);
                if omega != 0.0 {
                    let idx = ctx.push_x(&pc.x);
                    ctx.pairs[s].exposures.push((omega, idx));
                }
            }
        }
        // Attach events to the censored piece containing them; events in
        // censored or uncovered time are excluded from the fit.
        let by_pair: std::collections::HashMap<(u32, u32), &PairPath> =
            paths.iter().map(|p| ((p.i, p.j), p)).collect();
        for ev in events.events() {
            let w = kernel.eval((ev.time - t0) / bandwidth);
            if w == 0.0 {
                continue;
            }
            let Some(&s) = slot.get(&(ev.i, ev.j)) else {
                continue;
            };
            let path = by_pair[&(ev.i, ev.j)];
            if let Some(pc) = path
                .pieces
                .iter()
                .find(|pc| pc.censor && pc.start < ev.time && ev.time <= pc.end)
            {
                let idx = ctx.push_x(&pc.x);
                ctx.pairs[s].events.push((w, 1.0, idx));
            }
        }
        Ok(ctx)
    }

    /// Assembles a context directly from per-pair terms.
    pub fn from_raw_parts(
        q: usize,
        h: f64,
        t0: f64,
        kernel_l2: f64,
        active_size: usize,
        raw: Vec<RawPairTerms>,
    ) -> Result<Self, LikelihoodError> {
        let mut ctx = Self {
            q,
            h,
            t0,
            kernel_l2,
            active_size,
            boundary: false,
            xs: Vec::new(),
            pairs: Vec::new(),
        };
        for r in raw {
            let s = ctx.push_pair(r.pair);
            for (w, c, x) in r.events {
                if x.len() != q {
                    return Err(LikelihoodError::CovariateLength {
                        i: r.pair.0,
                        j: r.pair.1,
                        got: x.len(),
                        want: q,
                    });
                }
                let idx = ctx.push_x(&x);
                ctx.pairs[s].events.push((w, c, idx));
            }
            for (omega, x) in r.exposures {
                if x.len() != q {
                    return Err(LikelihoodError::CovariateLength {
                        i: r.pair.0,
                        j: r.pair.1,
                        got: x.len(),
                        want: q,
                    });
                }
                let idx = ctx.push_x(&x);
                ctx.pairs[s].exposures.push((omega, idx));
            }
        }
        Ok(ctx)
    }

    fn push_x(&mut self, x: &[f64]) -> u32 {
        let idx = (self.xs.len() / self.q.max(1)) as u32;
        self.xs.extend_from_slice(x);
        idx
    }

    fn push_pair(&mut self, pair: (u32, u32)) -> usize {
        self.pairs.push(PairTerms {
            pair,
            events: Vec::new(),
            exposures: Vec::new(),
        });
        self.pairs.len() - 1
    }

    fn x_row(&self, idx: u32) -> &[f64] {
        let start = idx as usize * self.q;
        &self.xs[start..start + self.q]
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// `∫ K(u)^2 du` of the kernel that produced the weights.
    pub fn kernel_l2(&self) -> f64 {
        self.kernel_l2
    }

    /// `|L_n(t0)|`: the number of pairs active at `t0` itself.
    pub fn active_size(&self) -> usize {
        self.active_size
    }

    /// Set when the kernel window extends beyond the observed time range;
    /// no boundary correction is applied.
    pub fn boundary(&self) -> bool {
        self.boundary
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn has_exposure(&self) -> bool {
        self.pairs.iter().any(|p| !p.exposures.is_empty())
    }

    fn dot(&self, theta: &[f64], idx: u32) -> f64 {
        self.x_row(idx)
            .iter()
            .zip(theta)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Local log-likelihood at `theta`. Returns `-inf` when any linear
    /// predictor exceeds the overflow guard.
    pub fn local_loglik(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.q, "theta length");
        let per_pair: Vec<f64> = self
            .pairs
            .par_iter()
            .map(|p| {
                let mut v = 0.0;
                for &(w, c, idx) in &p.events {
                    let dot = self.dot(theta, idx);
                    if dot > OVERFLOW_GUARD {
                        return f64::NEG_INFINITY;
                    }
                    v += w * c * dot;
                }
                for &(omega, idx) in &p.exposures {
                    let dot = self.dot(theta, idx);
                    if dot > OVERFLOW_GUARD {
                        return f64::NEG_INFINITY;
                    }
                    v -= omega * dot.exp();
                }
                v
            })
            .collect();
        if per_pair.iter().any(|v| v.is_infinite()) {
            return f64::NEG_INFINITY;
        }
        pairwise_sum(&per_pair) / self.h
    }

    /// Gradient of the local log-likelihood.
    pub fn score(&self, theta: &[f64]) -> Result<DVector<f64>, LikelihoodError> {
        let (g, _) = self.score_hessian_impl(theta, false)?;
        Ok(g)
    }

    /// Hessian of the local log-likelihood; symmetric negative semidefinite,
    /// only exposure terms contribute.
    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>, LikelihoodError> {
        let (_, h) = self.score_hessian_impl(theta, true)?;
        Ok(h)
    }

    /// Score and Hessian in one pass.
    pub fn score_hessian(
        &self,
        theta: &[f64],
    ) -> Result<(DVector<f64>, DMatrix<f64>), LikelihoodError> {
        self.score_hessian_impl(theta, true)
    }

    fn score_hessian_impl(
        &self,
        theta: &[f64],
        want_hessian: bool,
    ) -> Result<(DVector<f64>, DMatrix<f64>), LikelihoodError> {
        if theta.len() != self.q {
            return Err(LikelihoodError::ThetaLength {
                got: theta.len(),
                want: self.q,
            });
        }
        let q = self.q;
        let len = if want_hessian { q + q * q } else { q };
        let per_pair: Result<Vec<Vec<f64>>, LikelihoodError> = self
            .pairs
            .par_iter()
            .map(|p| {
                let mut out = vec![0.0; len];
                for &(w, c, idx) in &p.events {
                    let dot = self.dot(theta, idx);
                    if dot > OVERFLOW_GUARD {
                        return Err(LikelihoodError::Overflow {
                            i: p.pair.0,
                            j: p.pair.1,
                            dot,
                        });
                    }
                    let x = self.x_row(idx);
                    for (g, &xm) in out[..q].iter_mut().zip(x) {
                        *g += w * c * xm;
                    }
                }
                for &(omega, idx) in &p.exposures {
                    let dot = self.dot(theta, idx);
                    if dot > OVERFLOW_GUARD {
                        return Err(LikelihoodError::Overflow {
                            i: p.pair.0,
                            j: p.pair.1,
                            dot,
                        });
                    }
                    let lam = omega * dot.exp();
                    let x = self.x_row(idx);
                    for m in 0..q {
                        out[m] -= lam * x[m];
                    }
                    if want_hessian {
                        // Write the same product into both symmetric slots so
                        // the Hessian is symmetric to the last bit.
                        for m in 0..q {
                            let lx = lam * x[m];
                            let base_m = q + m * q;
                            out[base_m + m] -= lx * x[m];
                            for l in (m + 1)..q {
                                let v = lx * x[l];
                                out[base_m + l] -= v;
                                out[q + l * q + m] -= v;
                            }
                        }
                    }
                }
                Ok(out)
            })
            .collect();
        let sums = pairwise_sum_vecs(&per_pair?, len);
        let g = DVector::from_fn(q, |m, _| sums[m] / self.h);
        let h = if want_hessian {
            DMatrix::from_fn(q, q, |m, l| sums[q + m * q + l] / self.h)
        } else {
            DMatrix::zeros(q, q)
        };
        Ok((g, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    /// Straight-loop re-implementation used as the oracle: no arena, no
    /// pairwise summation, no parallelism.
    fn oracle_loglik(raw: &[RawPairTerms], h: f64, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for p in raw {
            for (w, c, x) in &p.events {
                let dot: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
                total += w * c * dot;
            }
            for (omega, x) in &p.exposures {
                let dot: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
                total -= omega * dot.exp();
            }
        }
        total / h
    }

    fn random_instance(
        rng: &mut impl Rng,
        n_pairs: usize,
        n_cells: usize,
        q: usize,
    ) -> (Vec<RawPairTerms>, LocalLikContext) {
        let mut raw = Vec::new();
        for p in 0..n_pairs {
            let mut events = Vec::new();
            let mut exposures = Vec::new();
            for c in 0..n_cells {
                let w = 1.0 - (c as f64 - n_cells as f64 / 2.0).abs() / n_cells as f64;
                let x: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
                exposures.push((w, x.clone()));
                let count = rng.random_range(0..4u32);
                if count > 0 {
                    events.push((w, count as f64, x));
                }
            }
            raw.push(RawPairTerms {
                pair: (p as u32 + 1, p as u32 + 2),
                events,
                exposures,
            });
        }
        let ctx =
            LocalLikContext::from_raw_parts(q, 2.5, 0.0, 2.0 / 3.0, n_pairs, raw.clone()).unwrap();
        (raw, ctx)
    }

    #[test]
    fn exposure_only_single_pair() {
        // One pair, censor 1 across the window, X = (1), theta = 0, no
        // events, full kernel mass inside the observation period: the kernel
        // weights of an interior triangular window sum to h, so the
        // log-likelihood is -(1/h) * h * exp(0) = -1.
        let h = 3.0;
        let weights = [1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0];
        let exposures = weights.iter().map(|&w| (w, vec![1.0])).collect();
        let ctx = LocalLikContext::from_raw_parts(
            1,
            h,
            0.0,
            2.0 / 3.0,
            1,
            vec![RawPairTerms {
                pair: (1, 2),
                events: vec![],
                exposures,
            }],
        )
        .unwrap();
        assert_abs_diff_eq!(ctx.local_loglik(&[0.0]), -1.0, epsilon = 1e-12);

        // Adding events at t0 does not change the value at theta = 0 since
        // theta'x = 0 kills the event term.
        let ctx2 = LocalLikContext::from_raw_parts(
            1,
            h,
            0.0,
            2.0 / 3.0,
            1,
            vec![RawPairTerms {
                pair: (1, 2),
                events: vec![(1.0, 3.0, vec![1.0])],
                exposures: weights.iter().map(|&w| (w, vec![1.0])).collect(),
            }],
        )
        .unwrap();
        assert_abs_diff_eq!(ctx2.local_loglik(&[0.0]), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_straight_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (raw, ctx) = random_instance(&mut rng, 2, 4, 2);
            let theta: Vec<f64> = (0..2).map(|_| rng.random_range(-0.8..0.8)).collect();
            let got = ctx.local_loglik(&theta);
            let want = oracle_loglik(&raw, ctx.bandwidth(), &theta);
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let q = rng.random_range(1..=3);
            let (_, ctx) = random_instance(&mut rng, 3, 5, q);
            let theta: Vec<f64> = (0..q).map(|_| rng.random_range(-0.5..0.5)).collect();
            let g = ctx.score(&theta).unwrap();
            let step = 1e-5;
            let mut max_rel: f64 = 0.0;
            for m in 0..q {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[m] += step;
                tm[m] -= step;
                let fd = (ctx.local_loglik(&tp) - ctx.local_loglik(&tm)) / (2.0 * step);
                let denom = g[m].abs().max(1e-3);
                max_rel = max_rel.max((fd - g[m]).abs() / denom);
            }
            assert!(max_rel <= 1e-6, "rel err {max_rel}");
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_score() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            let q = rng.random_range(1..=3);
            let (_, ctx) = random_instance(&mut rng, 3, 5, q);
            let theta: Vec<f64> = (0..q).map(|_| rng.random_range(-0.5..0.5)).collect();
            let h = ctx.hessian(&theta).unwrap();
            // Exact symmetry by construction.
            assert_eq!(h, h.transpose());
            let step = 1e-5;
            for l in 0..q {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[l] += step;
                tm[l] -= step;
                let gp = ctx.score(&tp).unwrap();
                let gm = ctx.score(&tm).unwrap();
                for m in 0..q {
                    let fd = (gp[m] - gm[m]) / (2.0 * step);
                    let denom = h[(m, l)].abs().max(1e-3);
                    assert!(
                        (fd - h[(m, l)]).abs() / denom <= 1e-6,
                        "H[{m},{l}] fd {fd} vs {}",
                        h[(m, l)]
                    );
                }
            }
        }
    }

    #[test]
    fn intercept_hessian_closed_form() {
        // Intercept-only: H = -(1/h) E_w e^theta with E_w the summed kernel
        // mass.
        let ctx = LocalLikContext::from_raw_parts(
            1,
            2.0,
            0.0,
            2.0 / 3.0,
            1,
            vec![RawPairTerms {
                pair: (1, 2),
                events: vec![],
                exposures: vec![(0.5, vec![1.0]), (1.0, vec![1.0]), (0.5, vec![1.0])],
            }],
        )
        .unwrap();
        let theta = [0.3];
        let h = ctx.hessian(&theta).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], -(2.0 / 2.0) * 0.3f64.exp(), epsilon = 1e-12);
    }

    #[test]
    fn overflow_guard() {
        let ctx = LocalLikContext::from_raw_parts(
            1,
            1.0,
            0.0,
            2.0 / 3.0,
            1,
            vec![RawPairTerms {
                pair: (1, 2),
                events: vec![],
                exposures: vec![(1.0, vec![100.0])],
            }],
        )
        .unwrap();
        assert_eq!(ctx.local_loglik(&[8.0]), f64::NEG_INFINITY);
        assert!(matches!(
            ctx.score(&[8.0]),
            Err(LikelihoodError::Overflow { .. })
        ));
    }

    #[test]
    fn concavity_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..50 {
            let q = rng.random_range(1..=3);
            let (_, ctx) = random_instance(&mut rng, 2, 4, q);
            let t1: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t2: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mid: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| 0.5 * (a + b)).collect();
            let lm = ctx.local_loglik(&mid);
            let avg = 0.5 * ctx.local_loglik(&t1) + 0.5 * ctx.local_loglik(&t2);
            assert!(lm >= avg - 1e-9, "concavity violated: {lm} < {avg}");
        }
    }

    #[test]
    fn censored_records_contribute_nothing() {
        use crate::model::{Panel, PanelRecord};
        let records = vec![
            PanelRecord {
                cell: 0,
                i: 1,
                j: 2,
                count: 5,
                censor: false,
                x: vec![1.0],
            },
            PanelRecord {
                cell: 0,
                i: 1,
                j: 3,
                count: 1,
                censor: true,
                x: vec![1.0],
            },
        ];
        let panel = Panel::new(3, 1, 1, vec![0.0], records).unwrap();
        let ctx =
            LocalLikContext::from_panel(&panel, &Kernel::Triangular, 2.0, 0.0).unwrap();
        // Only the censor=1 record shows up.
        assert_eq!(ctx.n_pairs(), 1);
        assert_eq!(ctx.active_size(), 1);
        let g = ctx.score(&[0.0]).unwrap();
        // Event part: w*count = 1*1; exposure part: w*1*e^0 = 1; over h=2.
        assert_abs_diff_eq!(g[0], (1.0 - 1.0) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn continuous_context_exposure_matches_kernel_mass() {
        // Single pair active throughout, X = (1): at theta = 0 the
        // log-likelihood is -(1/h) * h * ∫K = -1 for an interior window.
        let stream = EventStream::new(2, false, 20.0, vec![]).unwrap();
        let paths = vec![PairPath {
            i: 1,
            j: 2,
            pieces: vec![PathPiece {
                start: 0.0,
                end: 20.0,
                censor: true,
                x: vec![1.0],
            }],
        }];
        let ctx =
            LocalLikContext::from_pair_paths(&paths, &stream, &Kernel::Triangular, 3.0, 10.0)
                .unwrap();
        assert!(!ctx.boundary());
        assert_eq!(ctx.active_size(), 1);
        assert_abs_diff_eq!(ctx.local_loglik(&[0.0]), -1.0, epsilon = 1e-9);

        // Same with the window clipped by the start of the horizon.
        let ctx_b =
            LocalLikContext::from_pair_paths(&paths, &stream, &Kernel::Triangular, 3.0, 1.0)
                .unwrap();
        assert!(ctx_b.boundary());
        assert!(ctx_b.local_loglik(&[0.0]) > -1.0);
    }

    #[test]
    fn events_in_censored_time_are_excluded() {
        let ev = |t: f64| crate::model::Event { time: t, i: 1, j: 2 };
        let stream = EventStream::new(2, false, 10.0, vec![ev(2.0), ev(7.0)]).unwrap();
        let paths = vec![PairPath {
            i: 1,
            j: 2,
            pieces: vec![
                PathPiece {
                    start: 0.0,
                    end: 5.0,
                    censor: false,
                    x: vec![1.0],
                },
                PathPiece {
                    start: 5.0,
                    end: 10.0,
                    censor: true,
                    x: vec![1.0],
                },
            ],
        }];
        let ctx =
            LocalLikContext::from_pair_paths(&paths, &stream, &Kernel::Uniform, 10.0, 5.0)
                .unwrap();
        // Only the event at t=7 (inside the active piece) is kept.
        let total_events: usize = ctx.pairs.iter().map(|p| p.events.len()).sum();
        assert_eq!(total_events, 1);
    }
}
