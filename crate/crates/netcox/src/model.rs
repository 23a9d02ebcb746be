//! Core domain types: event streams, discretized panels, model
//! specification, parameter curves, and fit results.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Kernel;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("event time {time} outside (0, {horizon}]")]
    EventTimeOutOfRange { time: f64, horizon: f64 },
    #[error("node id {id} outside 1..={n_nodes}")]
    BadNodeId { id: u32, n_nodes: u32 },
    #[error("self loop on node {0}")]
    SelfLoop(u32),
    #[error("cell index {cell} out of range (n_cells = {n_cells})")]
    BadCell { cell: usize, n_cells: usize },
    #[error("cell length must be positive, got {0}")]
    BadCellLength(f64),
    #[error("covariate vector for pair ({i},{j}) in cell {cell} has length {got}, expected {want}")]
    CovariateLength {
        i: u32,
        j: u32,
        cell: usize,
        got: usize,
        want: usize,
    },
    #[error("cell_times has length {got}, expected {want}")]
    CellTimesLength { got: usize, want: usize },
    #[error("permutation must be a bijection on 1..={0}")]
    BadPermutation(u32),
    #[error("bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
    #[error("theta box must satisfy lo < hi in every coordinate")]
    EmptyBox,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One timestamped pair interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub i: u32,
    pub j: u32,
}

/// Timestamped pair-interaction events on nodes `1..=n_nodes` over `(0, T]`.
///
/// Undirected streams store pairs canonically with `i < j`; events are kept
/// sorted nondecreasing in time (ties preserve insertion order). Ties of the
/// same pair are allowed and counted with multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    n_nodes: u32,
    directed: bool,
    horizon: f64,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(
        n_nodes: u32,
        directed: bool,
        horizon: f64,
        mut events: Vec<Event>,
    ) -> Result<Self, ModelError> {
        for ev in &mut events {
            if !(ev.time > 0.0 && ev.time <= horizon) {
                return Err(ModelError::EventTimeOutOfRange {
                    time: ev.time,
                    horizon,
                });
            }
            for id in [ev.i, ev.j] {
                if id == 0 || id > n_nodes {
                    return Err(ModelError::BadNodeId { id, n_nodes });
                }
            }
            if ev.i == ev.j {
                return Err(ModelError::SelfLoop(ev.i));
            }
            if !directed && ev.i > ev.j {
                std::mem::swap(&mut ev.i, &mut ev.j);
            }
        }
        events.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        Ok(Self {
            n_nodes,
            directed,
            horizon,
            events,
        })
    }

    pub fn n_nodes(&self) -> u32 {
        self.n_nodes
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Per-pair per-cell counts over cells `(c*len, (c+1)*len]`.
    /// The total of all counts equals the number of events.
    pub fn bin_events(&self, cell_length: f64) -> Result<BinnedCounts, ModelError> {
        if !(cell_length > 0.0) {
            return Err(ModelError::BadCellLength(cell_length));
        }
        let n_cells = (self.horizon / cell_length).ceil().max(1.0) as usize;
        let mut counts: Vec<BTreeMap<(u32, u32), u64>> = vec![BTreeMap::new(); n_cells];
        for ev in &self.events {
            let cell = ((ev.time / cell_length).ceil() as usize).saturating_sub(1);
            let cell = cell.min(n_cells - 1);
            *counts[cell].entry((ev.i, ev.j)).or_insert(0) += 1;
        }
        Ok(BinnedCounts {
            n_nodes: self.n_nodes,
            cell_length,
            counts,
        })
    }

    /// Relabels node identities: `perm[old - 1] = new`. Events keep their
    /// stored order; undirected pairs are re-canonicalized in place.
    pub fn relabel(&self, perm: &[u32]) -> Result<Self, ModelError> {
        check_permutation(perm, self.n_nodes)?;
        let events = self
            .events
            .iter()
            .map(|ev| {
                let (mut i, mut j) = (perm[(ev.i - 1) as usize], perm[(ev.j - 1) as usize]);
                if !self.directed && i > j {
                    std::mem::swap(&mut i, &mut j);
                }
                Event {
                    time: ev.time,
                    i,
                    j,
                }
            })
            .collect();
        Ok(Self {
            n_nodes: self.n_nodes,
            directed: self.directed,
            horizon: self.horizon,
            events,
        })
    }

    /// Writes the events as CSV with header `time_hours,i,j`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ModelError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["time_hours", "i", "j"])?;
        for ev in &self.events {
            wtr.write_record(&[ev.time.to_string(), ev.i.to_string(), ev.j.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads events from CSV with header `time_hours,i,j`. `n_nodes` and
    /// `horizon` are inferred from the data when not supplied.
    pub fn read_csv<R: Read>(
        r: R,
        directed: bool,
        n_nodes: Option<u32>,
        horizon: Option<f64>,
    ) -> Result<Self, ModelError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut events = Vec::new();
        for rec in rdr.deserialize::<(f64, u32, u32)>() {
            let (time, i, j) = rec?;
            events.push(Event { time, i, j });
        }
        let n_nodes =
            n_nodes.unwrap_or_else(|| events.iter().map(|e| e.i.max(e.j)).max().unwrap_or(0));
        let horizon =
            horizon.unwrap_or_else(|| events.iter().map(|e| e.time).fold(0.0f64, f64::max));
        Self::new(n_nodes, directed, horizon, events)
    }
}

/// Per-pair per-cell event counts produced by [`EventStream::bin_events`].
#[derive(Debug, Clone)]
pub struct BinnedCounts {
    pub n_nodes: u32,
    pub cell_length: f64,
    /// `counts[cell][(i, j)]`, pairs in canonical order.
    pub counts: Vec<BTreeMap<(u32, u32), u64>>,
}

impl BinnedCounts {
    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flat_map(|m| m.values()).sum()
    }
}

fn check_permutation(perm: &[u32], n_nodes: u32) -> Result<(), ModelError> {
    if perm.len() != n_nodes as usize {
        return Err(ModelError::BadPermutation(n_nodes));
    }
    let mut seen = vec![false; n_nodes as usize];
    for &p in perm {
        if p == 0 || p > n_nodes || seen[(p - 1) as usize] {
            return Err(ModelError::BadPermutation(n_nodes));
        }
        seen[(p - 1) as usize] = true;
    }
    Ok(())
}

/// One sparse panel entry: pair `(i, j)` in cell `cell` with its event
/// count, censor indicator, and covariate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub cell: usize,
    pub i: u32,
    pub j: u32,
    pub count: u64,
    pub censor: bool,
    pub x: Vec<f64>,
}

/// Discretized observation grid: per-cell sparse pair records with event
/// counts, covariates and censor indicators. Cell exposure is one unit of
/// time per cell; `cell_times` carries the representative time of each cell
/// on the same axis as bandwidths and evaluation times.
///
/// Only likelihood-relevant pairs are stored (censored zero-count pairs are
/// omitted); record order is part of the value and is preserved by
/// serialization and relabeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PanelSerde", into = "PanelSerde")]
pub struct Panel {
    n_nodes: u32,
    n_cells: usize,
    q: usize,
    cell_times: Vec<f64>,
    records: Vec<PanelRecord>,
    #[serde(skip)]
    cell_ranges: Vec<Range<usize>>,
}

#[derive(Serialize, Deserialize)]
struct PanelSerde {
    n_nodes: u32,
    n_cells: usize,
    q: usize,
    cell_times: Vec<f64>,
    records: Vec<PanelRecord>,
}

impl TryFrom<PanelSerde> for Panel {
    type Error = ModelError;
    fn try_from(p: PanelSerde) -> Result<Self, Self::Error> {
        Panel::new(p.n_nodes, p.n_cells, p.q, p.cell_times, p.records)
    }
}

impl From<Panel> for PanelSerde {
    fn from(p: Panel) -> Self {
        PanelSerde {
            n_nodes: p.n_nodes,
            n_cells: p.n_cells,
            q: p.q,
            cell_times: p.cell_times,
            records: p.records,
        }
    }
}

impl Panel {
    /// Builds a panel, sorting records by cell (stable within a cell).
    pub fn new(
        n_nodes: u32,
        n_cells: usize,
        q: usize,
        cell_times: Vec<f64>,
        mut records: Vec<PanelRecord>,
    ) -> Result<Self, ModelError> {
        if cell_times.len() != n_cells {
            return Err(ModelError::CellTimesLength {
                got: cell_times.len(),
                want: n_cells,
            });
        }
        for r in &records {
            if r.cell >= n_cells {
                return Err(ModelError::BadCell {
                    cell: r.cell,
                    n_cells,
                });
            }
            for id in [r.i, r.j] {
                if id == 0 || id > n_nodes {
                    return Err(ModelError::BadNodeId { id, n_nodes });
                }
            }
            if r.i == r.j {
                return Err(ModelError::SelfLoop(r.i));
            }
            if r.x.len() != q {
                return Err(ModelError::CovariateLength {
                    i: r.i,
                    j: r.j,
                    cell: r.cell,
                    got: r.x.len(),
                    want: q,
                });
            }
        }
        records.sort_by_key(|r| r.cell);
        let mut cell_ranges = Vec::with_capacity(n_cells);
        let mut start = 0usize;
        for cell in 0..n_cells {
            let end = records[start..]
                .iter()
                .position(|r| r.cell != cell)
                .map(|p| start + p)
                .unwrap_or(records.len());
            cell_ranges.push(start..end);
            start = end;
        }
        Ok(Self {
            n_nodes,
            n_cells,
            q,
            cell_times,
            records,
            cell_ranges,
        })
    }

    pub fn n_nodes(&self) -> u32 {
        self.n_nodes
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn cell_times(&self) -> &[f64] {
        &self.cell_times
    }

    pub fn records(&self) -> &[PanelRecord] {
        &self.records
    }

    pub fn cell_records(&self, cell: usize) -> Result<&[PanelRecord], ModelError> {
        if cell >= self.n_cells {
            return Err(ModelError::BadCell {
                cell,
                n_cells: self.n_cells,
            });
        }
        Ok(&self.records[self.cell_ranges[cell].clone()])
    }

    /// The active set `L_n(t0)` of a cell: pairs with censor = 1.
    pub fn active_set(&self, cell: usize) -> Result<Vec<(u32, u32)>, ModelError> {
        Ok(self
            .cell_records(cell)?
            .iter()
            .filter(|r| r.censor)
            .map(|r| (r.i, r.j))
            .collect())
    }

    /// Index of the cell whose representative time is closest to `t`
    /// (ties break toward the lower index).
    pub fn nearest_cell(&self, t: f64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, &tc) in self.cell_times.iter().enumerate() {
            let d = (tc - t).abs();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    /// Relabels node identities in place (record order preserved), so fitted
    /// parameters are bitwise identical between a panel and its relabeling.
    pub fn relabel(&self, perm: &[u32]) -> Result<Self, ModelError> {
        check_permutation(perm, self.n_nodes)?;
        let records = self
            .records
            .iter()
            .map(|r| {
                let (mut i, mut j) = (perm[(r.i - 1) as usize], perm[(r.j - 1) as usize]);
                if i > j {
                    std::mem::swap(&mut i, &mut j);
                }
                PanelRecord {
                    i,
                    j,
                    ..r.clone()
                }
            })
            .collect();
        Ok(Self {
            n_nodes: self.n_nodes,
            n_cells: self.n_cells,
            q: self.q,
            cell_times: self.cell_times.clone(),
            records,
            cell_ranges: self.cell_ranges.clone(),
        })
    }
}

/// Kernel, bandwidth, covariate dimension, parameter box and evaluation grid.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kernel: Kernel,
    /// Bandwidth on the same time axis as `Panel::cell_times`.
    pub bandwidth: f64,
    pub q: usize,
    /// Compact box per coordinate; the default is `[-20, 20]`, wide enough
    /// for any realistic intensity while keeping the parameter space compact.
    pub theta_box: Vec<(f64, f64)>,
    pub eval_times: Vec<f64>,
    pub directed: bool,
}

impl ModelSpec {
    pub fn new(
        kernel: Kernel,
        bandwidth: f64,
        q: usize,
        theta_box: Option<Vec<(f64, f64)>>,
        eval_times: Vec<f64>,
        directed: bool,
    ) -> Result<Self, ModelError> {
        if !(bandwidth > 0.0) {
            return Err(ModelError::BadBandwidth(bandwidth));
        }
        let theta_box = theta_box.unwrap_or_else(|| Self::default_box(q));
        if theta_box.len() != q {
            return Err(ModelError::Dimension(format!(
                "theta_box has {} coordinates, expected {}",
                theta_box.len(),
                q
            )));
        }
        if theta_box.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(ModelError::EmptyBox);
        }
        Ok(Self {
            kernel,
            bandwidth,
            q,
            theta_box,
            eval_times,
            directed,
        })
    }

    pub fn default_box(q: usize) -> Vec<(f64, f64)> {
        vec![(-20.0, 20.0); q]
    }
}

/// A parameter function sampled on a grid of evaluation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterCurve {
    pub eval_times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ParameterCurve {
    pub fn q(&self) -> usize {
        self.values.first().map(|v| v.len()).unwrap_or(0)
    }

    /// Piecewise-linear interpolation, clamped at the grid ends.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        assert!(!self.eval_times.is_empty(), "empty parameter curve");
        if t <= self.eval_times[0] {
            return self.values[0].clone();
        }
        if t >= *self.eval_times.last().unwrap() {
            return self.values.last().unwrap().clone();
        }
        let idx = self
            .eval_times
            .windows(2)
            .position(|w| t >= w[0] && t <= w[1])
            .unwrap();
        let (t0, t1) = (self.eval_times[idx], self.eval_times[idx + 1]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        self.values[idx]
            .iter()
            .zip(&self.values[idx + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

/// Solver diagnostics attached to every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    /// Newton-Kantorovich `r = B K eta` at the returned point, when the
    /// Hessian was invertible there.
    pub kantorovich_r: Option<f64>,
}

/// Local MLE at one evaluation time with plug-in covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub t0: f64,
    pub theta_hat: Vec<f64>,
    /// Plug-in asymptotic covariance, symmetric positive definite.
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    /// `|L_n(t0)|`, the number of active pairs at `t0`.
    pub active_size: usize,
    /// `|L_n(t0)| * h`.
    pub effective_scale: f64,
    pub solver: SolverDiagnostics,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn small_stream() -> EventStream {
        EventStream::new(
            4,
            false,
            48.0,
            vec![
                Event {
                    time: 25.0,
                    i: 3,
                    j: 1,
                },
                Event {
                    time: 2.0,
                    i: 1,
                    j: 2,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn canonicalizes_and_sorts() {
        let s = small_stream();
        assert_eq!(s.events()[0].time, 2.0);
        assert_eq!((s.events()[1].i, s.events()[1].j), (1, 3));
    }

    #[test]
    fn rejects_bad_events() {
        assert!(EventStream::new(
            2,
            false,
            10.0,
            vec![Event {
                time: 0.0,
                i: 1,
                j: 2
            }]
        )
        .is_err());
        assert!(EventStream::new(
            2,
            false,
            10.0,
            vec![Event {
                time: 1.0,
                i: 1,
                j: 1
            }]
        )
        .is_err());
        assert!(EventStream::new(
            2,
            false,
            10.0,
            vec![Event {
                time: 1.0,
                i: 1,
                j: 3
            }]
        )
        .is_err());
    }

    #[test]
    fn bin_events_examples() {
        let empty = EventStream::new(3, false, 48.0, vec![]).unwrap();
        let bins = empty.bin_events(24.0).unwrap();
        assert_eq!(bins.total(), 0);

        let one = EventStream::new(
            3,
            false,
            48.0,
            vec![Event {
                time: 25.0,
                i: 1,
                j: 2,
            }],
        )
        .unwrap();
        let bins = one.bin_events(24.0).unwrap();
        assert_eq!(bins.counts[1].get(&(1, 2)), Some(&1));
        assert!(bins.counts[0].is_empty());
    }

    #[test]
    fn bin_events_matches_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let horizon = 100.0;
        let events: Vec<Event> = (0..1000)
            .map(|_| {
                let i = rng.random_range(1..=8u32);
                let mut j = rng.random_range(1..=8u32);
                while j == i {
                    j = rng.random_range(1..=8u32);
                }
                Event {
                    time: rng.random_range(0.0..horizon) + 1e-9,
                    i,
                    j,
                }
            })
            .collect();
        let stream = EventStream::new(8, false, horizon, events).unwrap();
        for cell_len in [7.0, 24.0, 33.5] {
            let bins = stream.bin_events(cell_len).unwrap();
            assert_eq!(bins.total(), 1000);
            // Brute-force recount.
            for (c, map) in bins.counts.iter().enumerate() {
                let lo = c as f64 * cell_len;
                let hi = lo + cell_len;
                let mut expect: BTreeMap<(u32, u32), u64> = BTreeMap::new();
                for ev in stream.events() {
                    if ev.time > lo && ev.time <= hi {
                        *expect.entry((ev.i, ev.j)).or_insert(0) += 1;
                    }
                }
                assert_eq!(map, &expect, "cell {c} len {cell_len}");
            }
        }
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let s = small_stream();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = EventStream::read_csv(&buf[..], false, Some(4), Some(48.0)).unwrap();
        assert_eq!(s, back);
    }

    fn tiny_panel() -> Panel {
        Panel::new(
            3,
            2,
            1,
            vec![0.0, 1.0],
            vec![
                PanelRecord {
                    cell: 1,
                    i: 1,
                    j: 2,
                    count: 2,
                    censor: true,
                    x: vec![1.0],
                },
                PanelRecord {
                    cell: 0,
                    i: 2,
                    j: 3,
                    count: 0,
                    censor: true,
                    x: vec![1.0],
                },
                PanelRecord {
                    cell: 0,
                    i: 1,
                    j: 3,
                    count: 1,
                    censor: false,
                    x: vec![1.0],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn active_set_behaviour() {
        let p = tiny_panel();
        assert_eq!(p.active_set(0).unwrap(), vec![(2, 3)]);
        assert_eq!(p.active_set(1).unwrap(), vec![(1, 2)]);
        assert!(p.active_set(2).is_err());
    }

    #[test]
    fn panel_json_round_trip() {
        let p = tiny_panel();
        let json = serde_json::to_string(&p).unwrap();
        let back: Panel = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn curve_interpolates() {
        let c = ParameterCurve {
            eval_times: vec![0.0, 2.0],
            values: vec![vec![0.0, 1.0], vec![2.0, 3.0]],
        };
        assert_eq!(c.value_at(-1.0), vec![0.0, 1.0]);
        assert_eq!(c.value_at(1.0), vec![1.0, 2.0]);
        assert_eq!(c.value_at(5.0), vec![2.0, 3.0]);
    }
}
