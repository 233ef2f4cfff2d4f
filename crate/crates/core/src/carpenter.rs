//! Dispatch on the Kadison verdict and assembly of the projection.
//!
//! Summable finite diagonals go through the Schur-Horn builder with all
//! eigenvalues equal to one. Infinite summable diagonals are thresholded to
//! a finite core. Non-summable diagonals are split into blocks, each
//! realized by a [`TetrisStream`].

use serde::{Deserialize, Serialize};

use crate::diagonal::{
    classify, compensated_sum, integrality_gap, last_index_at_least, DiagonalSpec, ExtReal,
    KadisonReport, Tail, Verdict, INTEGRALITY_TOL,
};
use crate::error::{Error, Result};
use crate::horn::{horn_build_traced, MajorizationInput};
use crate::matrix::SymmetricMatrix;
use crate::moves::{ops_restore, ops_shift, MovePlan, OpsRequest};
use crate::tetris::{TermSource, TetrisStream};
use crate::verify::{check_projection, check_rows, VerificationReport};

/// Tolerance for the final projection checks.
pub const BUILD_TOL: f64 = 1e-9;
const SELECT_TOL: f64 = 1e-12;
/// Largest number of blocks a non-summable build will open.
pub const MAX_BLOCKS: usize = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Approximate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    #[default]
    Shortcut,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Options {
    pub mode: Mode,
    /// Threshold for approximate mode.
    pub epsilon: f64,
    /// Rows emitted per block for non-summable inputs.
    pub truncation_rows: usize,
    pub pipeline: Pipeline,
    /// Largest dense dimension approximate mode may produce.
    pub max_dim: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            mode: Mode::Exact,
            epsilon: 1e-6,
            truncation_rows: 100,
            pipeline: Pipeline::Shortcut,
            max_dim: 2000,
        }
    }
}

fn check_entries(d: &[f64]) -> Result<()> {
    for (index, &value) in d.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange { index, value });
        }
    }
    Ok(())
}

/// Projection of rank `Σd` with diagonal `d`. Requires `Σd ∈ ℤ`.
pub fn build_summable(d: &[f64]) -> Result<SymmetricMatrix> {
    check_entries(d)?;
    let sum = compensated_sum(d.iter().copied());
    if integrality_gap(sum) > INTEGRALITY_TOL {
        return Err(Error::NonIntegerSum(sum));
    }
    let rank = sum.round() as usize;
    let support: Vec<usize> = (0..d.len()).filter(|&i| d[i] != 0.0).collect();
    let mut out = SymmetricMatrix::zeros(d.len());
    if rank == 0 || support.is_empty() {
        return Ok(out);
    }
    let input = MajorizationInput::new(vec![1.0; rank], support.iter().map(|&i| d[i]).collect());
    let built = horn_build_traced(&input, INTEGRALITY_TOL)?;
    out.embed(&built.matrix, &support);
    Ok(out)
}

/// `I − build_summable(1 − d)`. Requires `Σ(1 − d) ∈ ℤ`.
pub fn build_cosummable(d: &[f64]) -> Result<SymmetricMatrix> {
    check_entries(d)?;
    let flipped: Vec<f64> = d.iter().map(|x| 1.0 - x).collect();
    Ok(build_summable(&flipped)?.complement())
}

/// `I − P`.
pub fn complement(p: &SymmetricMatrix) -> SymmetricMatrix {
    p.complement()
}

/// Indices chosen by the full pipeline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineChoice {
    pub i1: usize,
    pub i2: usize,
    pub j0_prime: Vec<usize>,
    pub i0: Vec<usize>,
    pub eta0: f64,
    pub shifted: Vec<f64>,
}

/// Picks `i₁, J₀′, i₂, η₀, I₀` for the full pipeline, or explains which
/// structural requirement fails.
pub fn select_pipeline(d: &[f64]) -> Result<PipelineChoice> {
    let j0: Vec<usize> = (0..d.len()).filter(|&i| d[i] < 0.5).collect();
    let j1: Vec<usize> = (0..d.len()).filter(|&i| d[i] >= 0.5).collect();
    if j0.is_empty() {
        return Err(Error::Precondition("no entry below 1/2".into()));
    }
    if j1.len() < 2 {
        return Err(Error::Precondition("fewer than two entries at or above 1/2".into()));
    }
    let i1 = j1.iter().copied().reduce(|x, y| if d[y] < d[x] { y } else { x }).unwrap();
    let room = 1.0 - d[i1];

    let mut j0_prime = Vec::new();
    let mut mass = 0.0;
    for &i in j0.iter().rev() {
        if mass + d[i] >= room - SELECT_TOL {
            break;
        }
        mass += d[i];
        j0_prime.push(i);
    }
    j0_prime.reverse();
    if j0_prime.is_empty() {
        return Err(Error::Precondition(format!(
            "no suffix of the small entries has sum below 1 - d[{i1}] = {room}"
        )));
    }
    let mass = compensated_sum(j0_prime.iter().map(|&i| d[i]));

    let i2 = j1
        .iter()
        .copied()
        .find(|&i| d[i] > d[i1] + SELECT_TOL && d[i] + mass >= 1.0 - SELECT_TOL)
        .ok_or_else(|| {
            Error::Precondition(format!(
                "no entry exceeds d[{i1}] = {} and reaches 1 together with the suffix sum {mass}",
                d[i1]
            ))
        })?;
    let eta0 = (mass - (1.0 - d[i2])).max(0.0);

    let mut i0 = Vec::new();
    let mut taken = 0.0;
    for &i in &j0_prime {
        i0.push(i);
        taken += d[i];
        if taken > eta0 {
            break;
        }
    }
    if taken <= eta0 {
        return Err(Error::Precondition(format!(
            "the suffix cannot release eta0 = {eta0} with a strict margin"
        )));
    }

    let shifted = ops_shift(&OpsRequest { d: d.to_vec(), i0: i0.clone(), i1: vec![i1], eta0 })?;
    Ok(PipelineChoice { i1, i2, j0_prime, i0, eta0, shifted })
}

/// Runs the full construction: shift mass, build `P₁ ⊕ P₂` on the shifted
/// diagonal, then rotate back to `d`.
pub fn build_case1_full(d: &[f64]) -> Result<(SymmetricMatrix, MovePlan, PipelineChoice)> {
    check_entries(d)?;
    let choice = select_pipeline(d)?;
    let dt = &choice.shifted;

    let mut first: Vec<usize> = choice.j0_prime.clone();
    first.push(choice.i2);
    first.sort_unstable();
    let rest: Vec<usize> = (0..d.len()).filter(|i| !first.contains(i)).collect();

    let p1 = build_summable(&first.iter().map(|&i| dt[i]).collect::<Vec<_>>())?;
    let p2 = build_cosummable(&rest.iter().map(|&i| dt[i]).collect::<Vec<_>>())?;
    let mut e = SymmetricMatrix::zeros(d.len());
    e.embed(&p1, &first);
    e.embed(&p2, &rest);

    let (p, plan) = ops_restore(&e, dt, d, &choice.i0, &[choice.i1])?;
    Ok((p, plan, choice))
}

fn build_case1_shortcut(d: &[f64]) -> Result<SymmetricMatrix> {
    if d.iter().all(|&x| x >= 0.5) {
        build_cosummable(d)
    } else {
        build_summable(d)
    }
}

/// Finite case-I build. The full pipeline falls back to the shortcut when
/// its structural requirements are not met; the fallback reason is returned.
pub fn build_case1(d: &[f64], pipeline: Pipeline) -> Result<(SymmetricMatrix, MovePlan, Option<String>)> {
    match pipeline {
        Pipeline::Shortcut => Ok((build_case1_shortcut(d)?, MovePlan::new(), None)),
        Pipeline::Full => match build_case1_full(d) {
            Ok((p, plan, _)) => Ok((p, plan, None)),
            Err(Error::Precondition(why)) => {
                let notice = format!("full pipeline not applicable ({why}); used the shortcut");
                log::info!("{notice}");
                Ok((build_case1_shortcut(d)?, MovePlan::new(), Some(notice)))
            }
            Err(e) => Err(e),
        },
    }
}

/// Entries of one block in a non-summable build: an optional head above
/// 1/2 followed by every `blocks`-th entry at or below 1/2.
#[derive(Clone, Debug)]
pub struct BlockSource {
    spec: DiagonalSpec,
    head: Option<usize>,
    block: usize,
    blocks: usize,
    cache: Vec<(usize, f64)>,
    cursor: usize,
    low_seen: usize,
    exhausted: bool,
}

impl BlockSource {
    pub fn new(spec: DiagonalSpec, head: Option<usize>, block: usize, blocks: usize) -> Self {
        let mut cache = Vec::new();
        if let Some(h) = head {
            cache.push((h, spec.term(h).expect("head index inside the sequence")));
        }
        Self { spec, head, block, blocks, cache, cursor: 0, low_seen: 0, exhausted: false }
    }

    pub fn head(&self) -> Option<usize> {
        self.head
    }
}

impl TermSource for BlockSource {
    fn fetch(&mut self, i: usize) -> Option<(usize, f64)> {
        while self.cache.len() <= i && !self.exhausted {
            match self.spec.term(self.cursor) {
                None => self.exhausted = true,
                Some(d) => {
                    if d <= 0.5 {
                        if self.low_seen % self.blocks == self.block {
                            self.cache.push((self.cursor, d));
                        }
                        self.low_seen += 1;
                    }
                    self.cursor += 1;
                }
            }
        }
        self.cache.get(i).copied()
    }
}

pub struct StreamBlock {
    pub head: Option<usize>,
    pub stream: TetrisStream,
}

impl std::fmt::Debug for StreamBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StreamBlock").field("head", &self.head).field("stream", &self.stream).finish()
    }
}

/// Output of [`build_case2`]. When `complemented` is set the rows describe
/// `I − P` for the requested diagonal.
#[derive(Debug)]
pub struct StreamedBuild {
    pub blocks: Vec<StreamBlock>,
    /// Indices with `dᵢ = 1` (after complementing, if any), each its own
    /// one-dimensional identity block.
    pub identity_indices: Vec<usize>,
    pub complemented: bool,
}

/// Entries strictly between 1/2 and 1, in index order.
fn heads_of(spec: &DiagonalSpec) -> Result<Vec<usize>> {
    let mut heads: Vec<usize> =
        (0..spec.prefix().len()).filter(|&i| spec.prefix()[i] > 0.5 && spec.prefix()[i] < 1.0).collect();
    let offset = spec.prefix().len();
    match spec.tail() {
        None => {}
        Some(Tail::Constant { c }) => {
            if *c > 0.5 && *c < 1.0 {
                return Err(Error::Precondition("infinitely many entries above 1/2".into()));
            }
        }
        Some(&Tail::Power { c, p, shift }) => {
            let last = last_index_at_least(c, p, 0.5).saturating_sub(shift) as usize;
            if last > MAX_BLOCKS {
                return Err(Error::Dimension(format!("{last} tail entries above 1/2")));
            }
            for t in 1..=last {
                let v = spec.term(offset + t - 1).unwrap();
                if v > 0.5 && v < 1.0 {
                    heads.push(offset + t - 1);
                }
            }
        }
    }
    if heads.len() > MAX_BLOCKS {
        return Err(Error::Dimension(format!("{} entries above 1/2", heads.len())));
    }
    Ok(heads)
}

fn ones_of(spec: &DiagonalSpec) -> Vec<usize> {
    let mut ones: Vec<usize> = (0..spec.prefix().len()).filter(|&i| spec.prefix()[i] == 1.0).collect();
    if let Some(&Tail::Power { c, p, shift }) = spec.tail() {
        let last = last_index_at_least(c, p, 1.0).saturating_sub(shift) as usize;
        ones.extend((1..=last).map(|t| spec.prefix().len() + t - 1));
    }
    ones
}

fn partition(spec: DiagonalSpec) -> Result<(Vec<StreamBlock>, Vec<usize>)> {
    let heads = heads_of(&spec)?;
    let identity_indices = ones_of(&spec);
    let blocks = heads.len().max(1);
    let streams = (0..blocks)
        .map(|r| {
            let head = heads.get(r).copied();
            let source = BlockSource::new(spec.clone(), head, r, blocks);
            StreamBlock { head, stream: TetrisStream::new(Box::new(source)) }
        })
        .collect();
    Ok((streams, identity_indices))
}

/// Non-summable build: one tetris stream per block.
pub fn build_case2(spec: &DiagonalSpec) -> Result<StreamedBuild> {
    let report = classify(spec);
    if report.verdict != Verdict::CaseII {
        return Err(Error::Precondition(format!(
            "non-summable build needs verdict CaseII, got {:?}",
            report.verdict
        )));
    }
    let small_mass_infinite = match spec.tail() {
        None => false,
        Some(Tail::Constant { c }) => *c > 0.0 && *c <= 0.5,
        Some(Tail::Power { .. }) => report.a == ExtReal::Infinite,
    };
    if small_mass_infinite {
        let (blocks, identity_indices) = partition(spec.clone())?;
        Ok(StreamedBuild { blocks, identity_indices, complemented: false })
    } else {
        let flipped = spec.complement()?;
        let (blocks, identity_indices) = partition(flipped)?;
        Ok(StreamedBuild { blocks, identity_indices, complemented: true })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultKind {
    Exact,
    Approximate,
    Streamed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockSummary {
    pub head: Option<usize>,
    pub rows: usize,
    pub materialized_terms: usize,
    pub completed_columns: usize,
    pub completed_max_error: f64,
    pub gram_defect: f64,
}

#[derive(Debug)]
pub struct BuildResult {
    pub kind: ResultKind,
    pub kadison: KadisonReport,
    /// Dense output for exact and approximate builds.
    pub matrix: Option<SymmetricMatrix>,
    /// Input index of each matrix coordinate.
    pub indices: Vec<usize>,
    /// Diagonal the matrix was checked against.
    pub target_diagonal: Vec<f64>,
    /// Sum of all diagonal changes made by thresholding; bounds the
    /// largest deviation from the requested diagonal. Zero when exact.
    pub approximation_error: f64,
    pub verification: Option<VerificationReport>,
    pub plan: MovePlan,
    pub streams: Option<StreamedBuild>,
    pub block_summaries: Vec<BlockSummary>,
    pub notices: Vec<String>,
}

/// Serializable digest of a [`BuildResult`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildSummary {
    pub kind: ResultKind,
    pub kadison: KadisonReport,
    pub dimension: Option<usize>,
    pub indices: Vec<usize>,
    pub approximation_error: f64,
    pub verification: Option<VerificationReport>,
    pub moves: usize,
    pub complemented: bool,
    pub identity_indices: Vec<usize>,
    pub blocks: Vec<BlockSummary>,
    pub notices: Vec<String>,
}

impl BuildResult {
    pub fn summary(&self) -> BuildSummary {
        BuildSummary {
            kind: self.kind,
            kadison: self.kadison.clone(),
            dimension: self.matrix.as_ref().map(SymmetricMatrix::dim),
            indices: self.indices.clone(),
            approximation_error: self.approximation_error,
            verification: self.verification.clone(),
            moves: self.plan.len(),
            complemented: self.streams.as_ref().is_some_and(|s| s.complemented),
            identity_indices: self.streams.as_ref().map(|s| s.identity_indices.clone()).unwrap_or_default(),
            blocks: self.block_summaries.clone(),
            notices: self.notices.clone(),
        }
    }

    fn dense(
        kind: ResultKind,
        kadison: KadisonReport,
        matrix: SymmetricMatrix,
        target: Vec<f64>,
        plan: MovePlan,
        approximation_error: f64,
        notices: Vec<String>,
    ) -> Self {
        let verification = check_projection(&matrix, &target, BUILD_TOL);
        BuildResult {
            kind,
            kadison,
            indices: (0..matrix.dim()).collect(),
            matrix: Some(matrix),
            target_diagonal: target,
            approximation_error,
            verification: Some(verification),
            plan,
            streams: None,
            block_summaries: Vec::new(),
            notices,
        }
    }
}

/// Thresholded finite core of an infinite summable diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Approximation {
    pub diagonal: Vec<f64>,
    pub error: f64,
}

/// Zeroes entries below `ε`, raises entries above `1 − ε` to one, drops the
/// tail past the last entry `≥ ε`, then spreads the leftover fractional
/// mass over the untouched entries so the sum is an integer.
pub fn approximate_core(spec: &DiagonalSpec, report: &KadisonReport, opts: &Options) -> Result<Approximation> {
    let eps = opts.epsilon;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Input(format!("epsilon {eps} must lie in (0, 1/2)")));
    }
    let (Some(a_total), Some(b_total)) = (report.a.finite(), report.b.finite()) else {
        return Err(Error::Precondition("approximation needs a summable diagonal".into()));
    };
    let tail_len = match spec.tail() {
        None => 0,
        Some(Tail::Constant { c }) if *c == 0.0 || *c == 1.0 => 0,
        Some(&Tail::Power { c, p, shift }) => {
            let reach = (c / eps).powf(1.0 / p);
            if reach > (opts.max_dim as f64) * 2.0 + shift as f64 {
                return Err(Error::Dimension(format!(
                    "epsilon {eps} keeps about {reach:.0} entries, above the limit of {}",
                    opts.max_dim
                )));
            }
            last_index_at_least(c, p, eps).saturating_sub(shift) as usize
        }
        Some(Tail::Constant { c }) => {
            return Err(Error::Precondition(format!("constant tail {c} is not summable")))
        }
    };
    let len = spec.prefix().len() + tail_len;
    if len > opts.max_dim {
        return Err(Error::Dimension(format!(
            "approximation needs {len} coordinates, above the limit of {}",
            opts.max_dim
        )));
    }
    let original = spec.materialize(len);
    let mut v = original.clone();
    let mut dropped = 0.0;
    let (mut a_window, mut b_window) = (Vec::new(), Vec::new());
    for x in v.iter_mut() {
        if *x < 0.5 {
            a_window.push(*x);
        } else {
            b_window.push(1.0 - *x);
        }
        if *x < eps {
            dropped += *x;
            *x = 0.0;
        } else if *x > 1.0 - eps {
            dropped += 1.0 - *x;
            *x = 1.0;
        }
    }
    dropped += (a_total - compensated_sum(a_window)).max(0.0);
    dropped += (b_total - compensated_sum(b_window)).max(0.0);

    let sum = compensated_sum(v.iter().copied());
    let delta = sum.round() - sum;
    if delta != 0.0 {
        let room: Vec<f64> = v
            .iter()
            .map(|&x| match x {
                x if x == 0.0 || x == 1.0 => 0.0,
                x if delta > 0.0 => 1.0 - x,
                x => x,
            })
            .collect();
        let total = compensated_sum(room.iter().copied());
        if total < delta.abs() {
            return Err(Error::InfeasibleStep(format!(
                "cannot absorb sum correction {delta} with room {total}"
            )));
        }
        for (x, r) in v.iter_mut().zip(&room) {
            *x = (*x + delta * r / total).clamp(0.0, 1.0);
        }
    }
    Ok(Approximation { diagonal: v, error: dropped + delta.abs() })
}

/// Classifies `spec` and builds accordingly.
pub fn build(spec: &DiagonalSpec, opts: &Options) -> Result<BuildResult> {
    let kadison = classify(spec);
    log::debug!("classified: {kadison:?}");
    match kadison.verdict {
        Verdict::Infeasible => Err(Error::Infeasible(Box::new(kadison))),
        Verdict::CaseII => build_streamed(spec, kadison, opts),
        Verdict::CaseI => {
            let mut notices = Vec::new();
            match spec.tail() {
                None => {}
                Some(Tail::Constant { c }) if *c == 0.0 || *c == 1.0 => {
                    notices.push(format!(
                        "constant tail {c} is carried implicitly as a direct summand ({})",
                        if *c == 0.0 { "zero" } else { "identity" }
                    ));
                }
                Some(_) if opts.mode == Mode::Approximate => {
                    let approx = approximate_core(spec, &kadison, opts)?;
                    let matrix = build_summable(&approx.diagonal)?;
                    notices.push(format!(
                        "tail truncated at epsilon = {}; {} coordinates kept",
                        opts.epsilon,
                        approx.diagonal.len()
                    ));
                    return Ok(BuildResult::dense(
                        ResultKind::Approximate,
                        kadison,
                        matrix,
                        approx.diagonal,
                        MovePlan::new(),
                        approx.error,
                        notices,
                    ));
                }
                Some(_) => {
                    return Err(Error::Precondition(
                        "an infinite summable diagonal can only be built in approximate mode".into(),
                    ))
                }
            }
            let d = spec.prefix().to_vec();
            let (matrix, plan, notice) = build_case1(&d, opts.pipeline)?;
            notices.extend(notice);
            Ok(BuildResult::dense(ResultKind::Exact, kadison, matrix, d, plan, 0.0, notices))
        }
    }
}

fn build_streamed(spec: &DiagonalSpec, kadison: KadisonReport, opts: &Options) -> Result<BuildResult> {
    let mut streamed = build_case2(spec)?;
    let mut summaries = Vec::new();
    for block in &mut streamed.blocks {
        block.stream.advance_to(opts.truncation_rows)?;
        let cc = block.stream.completed_columns();
        summaries.push(BlockSummary {
            head: block.head,
            rows: block.stream.rows_emitted(),
            materialized_terms: block.stream.materialized(),
            completed_columns: cc.count,
            completed_max_error: cc.max_error(),
            gram_defect: check_rows(block.stream.rows()),
        });
    }
    let mut notices = Vec::new();
    if streamed.complemented {
        notices.push("rows describe I - P for the requested diagonal".into());
    }
    Ok(BuildResult {
        kind: ResultKind::Streamed,
        kadison,
        matrix: None,
        indices: Vec::new(),
        target_diagonal: Vec::new(),
        approximation_error: 0.0,
        verification: None,
        plan: MovePlan::new(),
        streams: Some(streamed),
        block_summaries: summaries,
        notices,
    })
}
