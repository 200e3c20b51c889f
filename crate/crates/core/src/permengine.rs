//! Permutation-replicate engine producing the exceedance matrices U and D.
//!
//! Lagged mode draws one row permutation per replicate and applies it to the
//! whole standardized leader matrix, so the leader columns stay aligned with
//! each other and only the leader/follower pairing is destroyed. Synchronous
//! mode shuffles every column of the standardized return panel on its own.
//!
//! Replicate `r` draws its permutation from a ChaCha8 stream keyed by
//! `(seed, r)`, so counts do not depend on how replicates are scheduled.
//! Several lagged replicates are gathered side by side into one
//! `T x (R N)` buffer and multiplied against the follower matrix in a single
//! dense product.
//!
//! Comparisons are literal: `C~ >= C` increments U and `C~ <= C` increments
//! D, so exact floating-point ties count in both.

use std::io::{Read, Write};
use std::ops::Range;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corr::{self, CorrKind, CorrMatrix};
use crate::error::{Error, Result};
use crate::returns::{LagSplit, ReturnPanel};

/// Replicates multiplied together in one dense product.
const BATCH: usize = 4;
/// Replicates between checkpoint clock checks.
const ROUND: u64 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermMode {
    LaggedRowShuffle,
    SyncColumnShuffle,
}

impl PermMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PermMode::LaggedRowShuffle => "lagged-row-shuffle",
            PermMode::SyncColumnShuffle => "sync-column-shuffle",
        }
    }

    fn code(self) -> u8 {
        match self {
            PermMode::LaggedRowShuffle => 0,
            PermMode::SyncColumnShuffle => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(PermMode::LaggedRowShuffle),
            1 => Some(PermMode::SyncColumnShuffle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermPlan {
    /// Number of replicates Q.
    pub replicates: u64,
    pub seed: u64,
    pub mode: PermMode,
}

impl PermPlan {
    pub fn new(replicates: u64, seed: u64, mode: PermMode) -> Result<Self> {
        if replicates < 1 {
            return Err(Error::Config("need at least one permutation replicate".into()));
        }
        Ok(PermPlan {
            replicates,
            seed,
            mode,
        })
    }

    /// `Q = k N^2` replicates.
    pub fn per_test(k: u64, n: usize, seed: u64, mode: PermMode) -> Result<Self> {
        Self::new(k * (n as u64) * (n as u64), seed, mode)
    }
}

/// Data a plan runs on.
#[derive(Debug, Clone, Copy)]
pub enum PermData<'a> {
    Lagged(&'a LagSplit),
    Sync(&'a ReturnPanel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceCounts {
    /// `U[m][n]`: replicates with `C~ >= C`.
    pub up: Array2<u64>,
    /// `D[m][n]`: replicates with `C~ <= C`.
    pub down: Array2<u64>,
    pub replicates: u64,
    pub seed: u64,
    pub mode: PermMode,
    pub corr: CorrMatrix,
}

impl ExceedanceCounts {
    pub fn n(&self) -> usize {
        self.corr.n()
    }

    pub fn symbols(&self) -> &[String] {
        &self.corr.symbols
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows = |m: &Array2<u64>| -> Vec<Vec<u64>> {
            m.axis_iter(Axis(0)).map(|r| r.to_vec()).collect()
        };
        serde_json::json!({
            "Q": self.replicates,
            "seed": self.seed,
            "mode": self.mode.as_str(),
            "symbols": self.corr.symbols,
            "T": self.corr.rows,
            "horizon_minutes": self.corr.horizon_minutes,
            "lag": self.corr.lag,
            "U": rows(&self.up),
            "D": rows(&self.down),
        })
    }
}

/// One-tailed p-values `(U / Q, D / Q)`.
pub fn empirical_pvalues(counts: &ExceedanceCounts) -> Result<(Array2<f64>, Array2<f64>)> {
    if counts.replicates < 1 {
        return Err(Error::Config("p-values need at least one replicate".into()));
    }
    let q = counts.replicates as f64;
    Ok((
        counts.up.mapv(|u| u as f64 / q),
        counts.down.mapv(|d| d as f64 / q),
    ))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
    pub checkpoint_every: Option<Duration>,
}

/// Standardized inputs and the reference products every replicate is
/// compared against.
#[derive(Debug, Clone)]
pub struct Engine {
    mode: PermMode,
    /// Leader z-scores (lagged) or panel z-scores (sync), `T x N`.
    za: Array2<f64>,
    /// Follower z-scores, lagged mode only.
    zb: Option<Array2<f64>>,
    reference: Array2<f64>,
    corr: CorrMatrix,
}

impl Engine {
    pub fn new(data: PermData<'_>) -> Result<Engine> {
        match data {
            PermData::Lagged(split) => {
                let (za, zb) = corr::standardize_split(split)?;
                let reference = corr::cross_product(za.view(), zb.view());
                let corr = corr::lagged_corr(split)?;
                Ok(Engine {
                    mode: PermMode::LaggedRowShuffle,
                    za,
                    zb: Some(zb),
                    reference,
                    corr,
                })
            }
            PermData::Sync(panel) => {
                let z = corr::standardize_panel(panel)?;
                let reference = corr::cross_product(z.view(), z.view());
                let corr = corr::sync_corr(panel)?;
                Ok(Engine {
                    mode: PermMode::SyncColumnShuffle,
                    za: z,
                    zb: None,
                    reference,
                    corr,
                })
            }
        }
    }

    pub fn mode(&self) -> PermMode {
        self.mode
    }

    pub fn corr(&self) -> &CorrMatrix {
        &self.corr
    }

    pub fn rows(&self) -> usize {
        self.za.nrows()
    }

    pub fn n(&self) -> usize {
        self.za.ncols()
    }

    /// Digest of the reference products; ties checkpoints to their data.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update([self.mode.code()]);
        h.update((self.rows() as u64).to_le_bytes());
        for v in self.reference.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }

    pub fn run(&self, plan: &PermPlan, opts: &RunOptions) -> Result<ExceedanceCounts> {
        self.run_resumable(plan, opts, None, |_| Ok(()))
    }

    /// Runs the plan, optionally continuing from a checkpoint and reporting
    /// progress snapshots every `opts.checkpoint_every`.
    pub fn run_resumable<F>(
        &self,
        plan: &PermPlan,
        opts: &RunOptions,
        resume: Option<Checkpoint>,
        mut on_checkpoint: F,
    ) -> Result<ExceedanceCounts>
    where
        F: FnMut(&Checkpoint) -> Result<()>,
    {
        if plan.mode != self.mode {
            return Err(Error::Config(format!(
                "plan mode {} does not match data prepared for {}",
                plan.mode.as_str(),
                self.mode.as_str()
            )));
        }
        let mut state = match resume {
            Some(cp) => {
                self.check_checkpoint(&cp, plan)?;
                cp
            }
            None => Checkpoint {
                mode: self.mode,
                n: self.n() as u32,
                rows: self.rows() as u64,
                seed: plan.seed,
                total: plan.replicates,
                done: 0,
                fingerprint: self.fingerprint(),
                up: vec![0; self.n() * self.n()],
                down: vec![0; self.n() * self.n()],
            },
        };

        let pool = if opts.workers > 0 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(opts.workers)
                    .build()
                    .map_err(|e| Error::Config(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };

        let mut last = Instant::now();
        while state.done < state.total {
            let end = (state.done + ROUND).min(state.total);
            let range = state.done..end;
            let (up, down) = match &pool {
                Some(p) => p.install(|| self.count_range(plan.seed, range)),
                None => self.count_range(plan.seed, range),
            };
            add_into(&mut state.up, &up);
            add_into(&mut state.down, &down);
            state.done = end;
            if let Some(every) = opts.checkpoint_every {
                if last.elapsed() >= every && state.done < state.total {
                    on_checkpoint(&state)?;
                    last = Instant::now();
                }
            }
        }

        let n = self.n();
        Ok(ExceedanceCounts {
            up: Array2::from_shape_vec((n, n), state.up).expect("n x n counts"),
            down: Array2::from_shape_vec((n, n), state.down).expect("n x n counts"),
            replicates: plan.replicates,
            seed: plan.seed,
            mode: self.mode,
            corr: self.corr.clone(),
        })
    }

    fn check_checkpoint(&self, cp: &Checkpoint, plan: &PermPlan) -> Result<()> {
        let ok = cp.mode == self.mode
            && cp.n as usize == self.n()
            && cp.rows as usize == self.rows()
            && cp.seed == plan.seed
            && cp.total == plan.replicates
            && cp.done <= cp.total
            && cp.fingerprint == self.fingerprint();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "checkpoint does not belong to this data and plan".into(),
            ))
        }
    }

    /// Counts for replicates in `range`, summed over the current rayon pool.
    pub fn count_range(&self, seed: u64, range: Range<u64>) -> (Vec<u64>, Vec<u64>) {
        let nn = self.n() * self.n();
        let starts: Vec<u64> = (range.start..range.end).step_by(BATCH).collect();
        starts
            .into_par_iter()
            .fold(
                || Scratch::new(nn),
                |mut scratch, start| {
                    let end = (start + BATCH as u64).min(range.end);
                    scratch.perms.clear();
                    for r in start..end {
                        self.draw(seed, r, &mut scratch);
                    }
                    self.accumulate(&mut scratch);
                    scratch
                },
            )
            .map(|s| (s.up, s.down))
            .reduce(
                || (vec![0; nn], vec![0; nn]),
                |(mut u, mut d), (u2, d2)| {
                    add_into(&mut u, &u2);
                    add_into(&mut d, &d2);
                    (u, d)
                },
            )
    }

    fn draw(&self, seed: u64, replicate: u64, scratch: &mut Scratch) {
        let mut rng = replicate_rng(seed, replicate);
        let t = self.rows();
        match self.mode {
            PermMode::LaggedRowShuffle => {
                let mut p: Vec<usize> = (0..t).collect();
                p.shuffle(&mut rng);
                scratch.perms.push(p);
            }
            PermMode::SyncColumnShuffle => {
                for _ in 0..self.n() {
                    let mut p: Vec<usize> = (0..t).collect();
                    p.shuffle(&mut rng);
                    scratch.perms.push(p);
                }
            }
        }
    }

    /// Applies explicit permutations and adds their comparisons to `up` and
    /// `down`. Lagged mode takes one row permutation per replicate; sync mode
    /// takes `N` column permutations per replicate.
    pub fn accumulate_permutations(
        &self,
        perms: &[Vec<usize>],
        up: &mut [u64],
        down: &mut [u64],
    ) -> Result<()> {
        let t = self.rows();
        if perms.iter().any(|p| !is_permutation(p, t)) {
            return Err(Error::Config(format!("expected permutations of 0..{t}")));
        }
        let nn = self.n() * self.n();
        if up.len() != nn || down.len() != nn {
            return Err(Error::Config("count buffers must hold N x N entries".into()));
        }
        let per = match self.mode {
            PermMode::LaggedRowShuffle => 1,
            PermMode::SyncColumnShuffle => self.n(),
        };
        let mut scratch = Scratch::new(nn);
        for chunk in perms.chunks(per * BATCH) {
            scratch.perms.clear();
            scratch.perms.extend(chunk.iter().cloned());
            self.accumulate(&mut scratch);
        }
        add_into(up, &scratch.up);
        add_into(down, &scratch.down);
        Ok(())
    }

    fn accumulate(&self, s: &mut Scratch) {
        match self.mode {
            PermMode::LaggedRowShuffle => self.accumulate_lagged(s),
            PermMode::SyncColumnShuffle => self.accumulate_sync(s),
        }
    }

    fn accumulate_lagged(&self, s: &mut Scratch) {
        let (t, n) = (self.rows(), self.n());
        let reps = s.perms.len();
        if reps == 0 {
            return;
        }
        let width = reps * n;
        s.gather.resize(t * width, 0.0);
        let za = self.za.as_slice().expect("standardized matrix is contiguous");
        for i in 0..t {
            let dst = &mut s.gather[i * width..(i + 1) * width];
            for (k, perm) in s.perms.iter().enumerate() {
                let src = perm[i] * n;
                dst[k * n..(k + 1) * n].copy_from_slice(&za[src..src + n]);
            }
        }
        let view = ArrayView2::from_shape((t, width), &s.gather[..t * width])
            .expect("gather buffer shape");
        let zb = self.zb.as_ref().expect("lagged engine has follower data");
        let shuffled = corr::cross_product(view, zb.view());
        let reference = self.reference.as_slice().expect("contiguous reference");
        let out = shuffled.as_slice().expect("fresh product is contiguous");
        for k in 0..reps {
            let block = &out[k * n * n..(k + 1) * n * n];
            tally(block, reference, &mut s.up, &mut s.down);
        }
    }

    fn accumulate_sync(&self, s: &mut Scratch) {
        let (t, n) = (self.rows(), self.n());
        s.gather.resize(t * n, 0.0);
        let z = self.za.as_slice().expect("standardized matrix is contiguous");
        let reference = self.reference.as_slice().expect("contiguous reference");
        for rep in s.perms.chunks(n) {
            for (m, perm) in rep.iter().enumerate() {
                for (i, &src) in perm.iter().enumerate() {
                    s.gather[i * n + m] = z[src * n + m];
                }
            }
            let view = ArrayView2::from_shape((t, n), &s.gather[..]).expect("gather buffer shape");
            let mut shuffled = corr::cross_product(view, view);
            // a column against itself is the same coefficient under any
            // shuffle; record it as the tie it is
            for m in 0..n {
                shuffled[[m, m]] = reference[m * n + m];
            }
            let out = shuffled.as_slice().expect("fresh product is contiguous");
            tally(out, reference, &mut s.up, &mut s.down);
        }
    }
}

/// Stream for replicate `r` under master seed `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Builds an engine for `data` and runs `plan` on the global pool.
pub fn run_permutations(data: PermData<'_>, plan: &PermPlan) -> Result<ExceedanceCounts> {
    Engine::new(data)?.run(plan, &RunOptions::default())
}

struct Scratch {
    perms: Vec<Vec<usize>>,
    gather: Vec<f64>,
    up: Vec<u64>,
    down: Vec<u64>,
}

impl Scratch {
    fn new(nn: usize) -> Self {
        Scratch {
            perms: Vec::with_capacity(BATCH),
            gather: Vec::new(),
            up: vec![0; nn],
            down: vec![0; nn],
        }
    }
}

#[inline]
fn tally(shuffled: &[f64], reference: &[f64], up: &mut [u64], down: &mut [u64]) {
    for (((&v, &c), u), d) in shuffled
        .iter()
        .zip(reference)
        .zip(up.iter_mut())
        .zip(down.iter_mut())
    {
        *u += (v >= c) as u64;
        *d += (v <= c) as u64;
    }
}

fn add_into(acc: &mut [u64], other: &[u64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

fn is_permutation(p: &[usize], t: usize) -> bool {
    if p.len() != t {
        return false;
    }
    let mut seen = vec![false; t];
    p.iter().all(|&i| i < t && !std::mem::replace(&mut seen[i], true))
}

/// Resumable snapshot of a run.
///
/// Binary layout, little-endian, version 1:
///
/// | bytes | field |
/// |-------|-------|
/// | 4 | magic `LLXC` |
/// | 2 | format version (1) |
/// | 1 | mode (0 lagged, 1 sync) |
/// | 1 | reserved, zero |
/// | 4 | N |
/// | 8 | T |
/// | 8 | seed |
/// | 8 | total replicates Q |
/// | 8 | replicates done |
/// | 8 | data fingerprint |
/// | 8 N^2 | U, row-major |
/// | 8 N^2 | D, row-major |
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub mode: PermMode,
    pub n: u32,
    pub rows: u64,
    pub seed: u64,
    pub total: u64,
    pub done: u64,
    pub fingerprint: u64,
    pub up: Vec<u64>,
    pub down: Vec<u64>,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"LLXC";
const CHECKPOINT_VERSION: u16 = 1;

impl Checkpoint {
    /// Snapshot of a finished run.
    pub fn from_counts(counts: &ExceedanceCounts, fingerprint: u64) -> Checkpoint {
        Checkpoint {
            mode: counts.mode,
            n: counts.n() as u32,
            rows: counts.corr.rows as u64,
            seed: counts.seed,
            total: counts.replicates,
            done: counts.replicates,
            fingerprint,
            up: counts.up.iter().copied().collect(),
            down: counts.down.iter().copied().collect(),
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&[self.mode.code(), 0])?;
        out.write_all(&self.n.to_le_bytes())?;
        for v in [self.rows, self.seed, self.total, self.done, self.fingerprint] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.up.iter().chain(&self.down) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Checkpoint> {
        let bad = |what: &str| Error::Data(format!("checkpoint: {what}"));
        let io = |e: std::io::Error| Error::Data(format!("checkpoint: {e}"));
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut b2 = [0u8; 2];
        input.read_exact(&mut b2).map_err(io)?;
        let version = u16::from_le_bytes(b2);
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        input.read_exact(&mut b2).map_err(io)?;
        let mode = PermMode::from_code(b2[0]).ok_or_else(|| bad("unknown mode"))?;
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4).map_err(io)?;
        let n = u32::from_le_bytes(b4);
        let mut read_u64 = || -> Result<u64> {
            let mut b8 = [0u8; 8];
            input.read_exact(&mut b8).map_err(io)?;
            Ok(u64::from_le_bytes(b8))
        };
        let rows = read_u64()?;
        let seed = read_u64()?;
        let total = read_u64()?;
        let done = read_u64()?;
        let fingerprint = read_u64()?;
        let nn = (n as usize) * (n as usize);
        let up = (0..nn).map(|_| read_u64()).collect::<Result<Vec<_>>>()?;
        let down = (0..nn).map(|_| read_u64()).collect::<Result<Vec<_>>>()?;
        if done > total {
            return Err(bad("more replicates done than planned"));
        }
        Ok(Checkpoint {
            mode,
            n,
            rows,
            seed,
            total,
            done,
            fingerprint,
            up,
            down,
        })
    }
}

impl CorrKind {
    pub fn perm_mode(self) -> PermMode {
        match self {
            CorrKind::Lagged => PermMode::LaggedRowShuffle,
            CorrKind::Synchronous => PermMode::SyncColumnShuffle,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_split(n: usize, t: usize, seed: u64) -> LagSplit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LagSplit {
            symbols: (0..n).map(|i| format!("S{i}")).collect(),
            horizon_minutes: 5,
            lag: 1,
            leader: Array2::from_shape_fn((t, n), |_| StandardNormal.sample(&mut rng)),
            follower: Array2::from_shape_fn((t, n), |_| StandardNormal.sample(&mut rng)),
            zero_variance: vec![],
        }
    }

    fn gaussian_panel(n: usize, days: usize, seed: u64) -> ReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = NaiveDate::from_ymd_opt(2011, 1, 3).unwrap();
        ReturnPanel::new(
            (0..n).map(|i| format!("S{i}")).collect(),
            30,
            (0..days).map(|i| start + chrono::Days::new(i as u64)).collect(),
            Array2::from_shape_fn((days * 13, n), |_| StandardNormal.sample(&mut rng)),
        )
        .unwrap()
    }

    #[test]
    fn identity_permutation_ties_everywhere() {
        let split = gaussian_split(6, 50, 1);
        let engine = Engine::new(PermData::Lagged(&split)).unwrap();
        let id: Vec<usize> = (0..50).collect();
        let mut rng = replicate_rng(3, 0);
        let mut other: Vec<usize> = (0..50).collect();
        other.shuffle(&mut rng);
        // identity in every batch position
        let perms = vec![other.clone(), id.clone(), other, id.clone(), id];
        let (mut up, mut down) = (vec![0; 36], vec![0; 36]);
        engine.accumulate_permutations(&perms[1..2], &mut up, &mut down).unwrap();
        assert!(up.iter().chain(&down).all(|&c| c == 1));

        let (mut up, mut down) = (vec![0; 36], vec![0; 36]);
        engine.accumulate_permutations(&perms, &mut up, &mut down).unwrap();
        for i in 0..36 {
            assert!(up[i] >= 3 && down[i] >= 3);
        }
    }

    #[test]
    fn single_replicate_tie_accounting() {
        let split = gaussian_split(4, 30, 2);
        let plan = PermPlan::new(1, 99, PermMode::LaggedRowShuffle).unwrap();
        let c = run_permutations(PermData::Lagged(&split), &plan).unwrap();
        for (u, d) in c.up.iter().zip(c.down.iter()) {
            assert!((1..=2).contains(&(u + d)));
        }
    }

    #[test]
    fn counts_bounds_and_worker_independence() {
        let split = gaussian_split(5, 80, 4);
        let engine = Engine::new(PermData::Lagged(&split)).unwrap();
        let plan = PermPlan::new(517, 11, PermMode::LaggedRowShuffle).unwrap();
        let runs: Vec<ExceedanceCounts> = [1, 2, 8]
            .iter()
            .map(|&w| {
                engine
                    .run(&plan, &RunOptions { workers: w, checkpoint_every: None })
                    .unwrap()
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
        assert_eq!(runs[0], runs[2]);
        for (u, d) in runs[0].up.iter().zip(runs[0].down.iter()) {
            assert!(*u <= 517 && *d <= 517 && u + d >= 517);
        }
    }

    #[test]
    fn sync_mode_counts_and_diagonal_ties() {
        let panel = gaussian_panel(4, 10, 5);
        let plan = PermPlan::new(300, 8, PermMode::SyncColumnShuffle).unwrap();
        let engine = Engine::new(PermData::Sync(&panel)).unwrap();
        let a = engine.run(&plan, &RunOptions { workers: 1, checkpoint_every: None }).unwrap();
        let b = engine.run(&plan, &RunOptions { workers: 3, checkpoint_every: None }).unwrap();
        assert_eq!(a, b);
        for m in 0..4 {
            assert_eq!(a.up[[m, m]], 300);
            assert_eq!(a.down[[m, m]], 300);
            for n in 0..4 {
                assert_eq!(a.up[[m, n]], a.up[[n, m]]);
                assert!(a.up[[m, n]] + a.down[[m, n]] >= 300);
            }
        }
        assert_eq!(a.corr.kind, CorrKind::Synchronous);
    }

    #[test]
    fn mode_mismatch_and_bad_permutations_are_rejected() {
        let split = gaussian_split(3, 20, 6);
        let engine = Engine::new(PermData::Lagged(&split)).unwrap();
        let plan = PermPlan::new(10, 1, PermMode::SyncColumnShuffle).unwrap();
        assert!(engine.run(&plan, &RunOptions::default()).is_err());
        let (mut u, mut d) = (vec![0; 9], vec![0; 9]);
        let dup = vec![0usize; 20];
        assert!(engine.accumulate_permutations(&[dup], &mut u, &mut d).is_err());
        assert!(PermPlan::new(0, 1, PermMode::LaggedRowShuffle).is_err());
    }

    #[test]
    fn zero_variance_fails_before_running() {
        let mut split = gaussian_split(3, 20, 7);
        split.follower.column_mut(2).fill(1.0);
        assert!(matches!(
            Engine::new(PermData::Lagged(&split)),
            Err(Error::ZeroVariance { .. })
        ));
    }

    #[test]
    fn pvalues_are_frequencies() {
        let split = gaussian_split(2, 10, 8);
        let mut c = run_permutations(
            PermData::Lagged(&split),
            &PermPlan::new(10_000, 1, PermMode::LaggedRowShuffle).unwrap(),
        )
        .unwrap();
        c.up[[0, 0]] = 0;
        c.up[[0, 1]] = 10_000;
        c.up[[1, 0]] = 137;
        let (p_pos, p_neg) = empirical_pvalues(&c).unwrap();
        assert_eq!(p_pos[[0, 0]], 0.0);
        assert_eq!(p_pos[[0, 1]], 1.0);
        assert_eq!(p_pos[[1, 0]], 0.0137);
        assert!(p_neg.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let split = gaussian_split(3, 40, 9);
        let engine = Engine::new(PermData::Lagged(&split)).unwrap();
        let plan = PermPlan::new(5_000, 21, PermMode::LaggedRowShuffle).unwrap();
        let full = engine.run(&plan, &RunOptions::default()).unwrap();

        let mut snaps = Vec::new();
        let opts = RunOptions {
            workers: 1,
            checkpoint_every: Some(Duration::ZERO),
        };
        let again = engine
            .run_resumable(&plan, &opts, None, |cp| {
                snaps.push(cp.clone());
                Ok(())
            })
            .unwrap();
        assert_eq!(again, full);
        assert!(!snaps.is_empty());

        let mut bytes = Vec::new();
        snaps[0].write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 52 + 2 * 8 * 9);
        let restored = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(restored, snaps[0]);
        let resumed = engine
            .run_resumable(&plan, &RunOptions::default(), Some(restored), |_| Ok(()))
            .unwrap();
        assert_eq!(resumed, full);

        let other = gaussian_split(3, 40, 10);
        let other = Engine::new(PermData::Lagged(&other)).unwrap();
        assert!(other
            .run_resumable(&plan, &RunOptions::default(), Some(snaps[0].clone()), |_| Ok(()))
            .is_err());
        assert!(Checkpoint::read_from(&b"NOPE"[..]).is_err());
    }

    #[test]
    fn replicate_streams_differ() {
        let a: u64 = replicate_rng(1, 0).random();
        let b: u64 = replicate_rng(1, 1).random();
        let c: u64 = replicate_rng(2, 0).random();
        assert!(a != b && a != c);
        assert_eq!(a, replicate_rng(1, 0).random::<u64>());
    }

    #[test]
    fn json_export_shape() {
        let split = gaussian_split(2, 12, 3);
        let c = run_permutations(
            PermData::Lagged(&split),
            &PermPlan::new(20, 5, PermMode::LaggedRowShuffle).unwrap(),
        )
        .unwrap();
        let j = c.to_json();
        assert_eq!(j["Q"], 20);
        assert_eq!(j["seed"], 5);
        assert_eq!(j["mode"], "lagged-row-shuffle");
        assert_eq!(j["U"].as_array().unwrap().len(), 2);
        assert_eq!(j["symbols"][1], "S1");
    }
}
