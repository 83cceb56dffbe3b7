//! Lexical and semantic diversity analytics.
//!
//! Lexical: type-token ratio and its moving-average variant (MATTR), which
//! slides a fixed window across the token stream so the score is
//! insensitive to text length. Corpus-level scores concatenate the chosen
//! side of every record in stored order into one stream.
//!
//! Semantic: mean/stddev of pairwise cosine similarity and a deterministic
//! PCA projection (power iteration with deflation) of embedding vectors.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{InstructionRecord, SubsetTag};
use crate::tokenize::Tokenizer;

#[derive(Debug, thiserror::Error)]
pub enum DiversityError {
    #[error("token sequence is empty")]
    EmptySequence,
    #[error("window must be at least 1")]
    BadWindow,
    #[error("subset {0} has no tokens on the requested side")]
    EmptySubset(String),
    #[error("need at least {needed} vectors, have {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("vector {0} is all-zero")]
    ZeroVector(usize),
}

/// Distinct-token count divided by token count.
pub fn ttr(tokens: &[&str]) -> Result<f64, DiversityError> {
    if tokens.is_empty() {
        return Err(DiversityError::EmptySequence);
    }
    let distinct: std::collections::HashSet<&&str> = tokens.iter().collect();
    Ok(distinct.len() as f64 / tokens.len() as f64)
}

/// Moving-average TTR with the given window. Sequences no longer than the
/// window fall back to plain TTR; otherwise the mean TTR over all
/// contiguous windows, maintained with an O(n) sliding multiset.
pub fn mattr(tokens: &[&str], window: usize) -> Result<f64, DiversityError> {
    if window < 1 {
        return Err(DiversityError::BadWindow);
    }
    if tokens.is_empty() {
        return Err(DiversityError::EmptySequence);
    }
    if tokens.len() <= window {
        return ttr(tokens);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut distinct = 0u64;
    for &token in &tokens[..window] {
        let entry = counts.entry(token).or_insert(0);
        if *entry == 0 {
            distinct += 1;
        }
        *entry += 1;
    }
    // summing the integer distinct counts keeps the result exact up to the
    // single final division
    let window_count = (tokens.len() - window + 1) as u64;
    let mut distinct_sum = distinct;
    for i in window..tokens.len() {
        let leaving = tokens[i - window];
        let count = counts.get_mut(leaving).expect("token in window");
        *count -= 1;
        if *count == 0 {
            distinct -= 1;
        }
        let entry = counts.entry(tokens[i]).or_insert(0);
        if *entry == 0 {
            distinct += 1;
        }
        *entry += 1;
        distinct_sum += distinct;
    }
    Ok(distinct_sum as f64 / (window as u64 * window_count) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Instruction,
    Response,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Instruction => "instruction",
            Side::Response => "response",
        }
    }
}

fn side_text(record: &InstructionRecord, side: Side) -> Option<&str> {
    match side {
        Side::Instruction => Some(record.instruction.as_str()),
        Side::Response => record.response.as_deref(),
    }
}

fn subset_tokens<'a>(
    records: &'a [InstructionRecord],
    subset: Option<SubsetTag>,
    side: Side,
    tokenizer: &dyn Tokenizer,
) -> Vec<&'a str> {
    let mut tokens = Vec::new();
    for record in records {
        if subset.is_some_and(|s| record.subset != s) {
            continue;
        }
        if let Some(text) = side_text(record, side) {
            tokens.extend(tokenizer.tokenize(text));
        }
    }
    tokens
}

/// MATTR of one subset/side over the concatenated token stream, in stored
/// record order. `subset = None` means the union of all subsets.
pub fn subset_mattr(
    records: &[InstructionRecord],
    subset: Option<SubsetTag>,
    side: Side,
    window: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<f64, DiversityError> {
    let tokens = subset_tokens(records, subset, side, tokenizer);
    if tokens.is_empty() {
        let name = subset.map_or("all".to_string(), |s| s.to_string());
        return Err(DiversityError::EmptySubset(name));
    }
    mattr(&tokens, window)
}

/// One row of the diversity report.
#[derive(Debug, Clone)]
pub struct DiversityRow {
    pub subset: String,
    pub side: Side,
    pub window: usize,
    pub mattr: f64,
    pub ttr: f64,
    pub tokens: usize,
}

#[derive(Debug, Clone, Default)]
pub struct DiversityReport {
    pub rows: Vec<DiversityRow>,
}

impl DiversityReport {
    /// CSV with header `subset,side,window,mattr_x100,ttr,tokens`; MATTR is
    /// up-scaled by 100 to match the usual reporting convention.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subset,side,window,mattr_x100,ttr,tokens\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.2},{:.4},{}\n",
                row.subset,
                row.side.as_str(),
                row.window,
                row.mattr * 100.0,
                row.ttr,
                row.tokens
            ));
        }
        out
    }

    /// Markdown table with one row per subset and MATTR x100 columns for
    /// the instruction and response sides.
    pub fn to_markdown(&self) -> String {
        let mut out =
            String::from("| Dataset | Instructions (X) | Responses (Y) |\n|---|---|---|\n");
        let mut subsets: Vec<&str> = Vec::new();
        for row in &self.rows {
            if !subsets.contains(&row.subset.as_str()) {
                subsets.push(&row.subset);
            }
        }
        for subset in subsets {
            let cell = |side: Side| {
                self.rows
                    .iter()
                    .find(|r| r.subset == subset && r.side == side)
                    .map_or("-".to_string(), |r| format!("{:.2}", r.mattr * 100.0))
            };
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                subset,
                cell(Side::Instruction),
                cell(Side::Response)
            ));
        }
        out
    }
}

/// Computes MATTR/TTR rows for every non-empty subset/side plus the union,
/// in canonical subset order.
pub fn diversity_report(
    records: &[InstructionRecord],
    window: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<DiversityReport, DiversityError> {
    let mut report = DiversityReport::default();
    let mut targets: Vec<(String, Option<SubsetTag>)> = SubsetTag::ALL
        .iter()
        .map(|t| (t.to_string(), Some(*t)))
        .collect();
    targets.push(("all".to_string(), None));
    for (name, subset) in targets {
        for side in [Side::Instruction, Side::Response] {
            let tokens = subset_tokens(records, subset, side, tokenizer);
            if tokens.is_empty() {
                continue;
            }
            report.rows.push(DiversityRow {
                subset: name.clone(),
                side,
                window,
                mattr: mattr(&tokens, window)?,
                ttr: ttr(&tokens)?,
                tokens: tokens.len(),
            });
        }
    }
    Ok(report)
}

/// Pairwise-cosine summary. When the pair count exceeds [`COSINE_EXACT_PAIR_CAP`]
/// the mean/stddev come from a seeded uniform sample of that many pairs and
/// `sampled` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineStats {
    pub mean: f64,
    pub stddev: f64,
    pub pairs: u64,
    pub sampled: bool,
}

pub const COSINE_EXACT_PAIR_CAP: u64 = 1_000_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_vectors(vectors: &[Vec<f64>], needed: usize) -> Result<usize, DiversityError> {
    if vectors.len() < needed {
        return Err(DiversityError::TooFewVectors {
            needed,
            got: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(DiversityError::DimensionMismatch {
                index: i,
                expected: dim,
                got: v.len(),
            });
        }
    }
    Ok(dim)
}

/// Mean and (population) standard deviation of cosine similarity over all
/// unordered vector pairs. Exact up to 10^6 pairs, sampled beyond.
pub fn cosine_stats(vectors: &[Vec<f64>]) -> Result<CosineStats, DiversityError> {
    check_vectors(vectors, 2)?;
    let norms: Vec<f64> = vectors.iter().map(|v| norm(v)).collect();
    for (i, n) in norms.iter().enumerate() {
        if *n == 0.0 {
            return Err(DiversityError::ZeroVector(i));
        }
    }
    let n = vectors.len() as u64;
    let total_pairs = n * (n - 1) / 2;
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    let pairs;
    let sampled;
    if total_pairs <= COSINE_EXACT_PAIR_CAP {
        for i in 0..vectors.len() {
            for j in (i + 1)..vectors.len() {
                let c = dot(&vectors[i], &vectors[j]) / (norms[i] * norms[j]);
                sum += c;
                sumsq += c * c;
            }
        }
        pairs = total_pairs;
        sampled = false;
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x636f73); // fixed sampling seed
        for _ in 0..COSINE_EXACT_PAIR_CAP {
            let i = rng.random_range(0..vectors.len());
            let mut j = rng.random_range(0..vectors.len() - 1);
            if j >= i {
                j += 1;
            }
            let c = dot(&vectors[i], &vectors[j]) / (norms[i] * norms[j]);
            sum += c;
            sumsq += c * c;
        }
        pairs = COSINE_EXACT_PAIR_CAP;
        sampled = true;
    }
    let mean = sum / pairs as f64;
    let variance = (sumsq / pairs as f64 - mean * mean).max(0.0);
    Ok(CosineStats {
        mean,
        stddev: variance.sqrt(),
        pairs,
        sampled,
    })
}

/// Output of [`pca_project`]: per-vector coordinates along the top
/// principal directions, the variance each direction explains, and the
/// directions themselves.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    /// One row per input vector, `components.len()` columns.
    pub points: Vec<Vec<f64>>,
    /// Covariance eigenvalue per returned component, descending.
    pub explained_variance: Vec<f64>,
    /// Unit-length principal directions, first nonzero loading positive.
    pub components: Vec<Vec<f64>>,
    /// Set when the data rank fell short of the requested dimensions.
    pub rank_warning: bool,
}

const PCA_TOLERANCE: f64 = 1e-9;
const PCA_MAX_ITERATIONS: usize = 1000;

fn matvec(matrix: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    matrix.iter().map(|row| dot(row, v)).collect()
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Unit vector orthogonal to all of `previous`, used when deflation has
/// exhausted the data rank but more components were requested.
fn orthogonal_filler(dim: usize, previous: &[Vec<f64>]) -> Option<Vec<f64>> {
    for axis in 0..dim {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        for p in previous {
            let proj = dot(&v, p);
            for (x, pi) in v.iter_mut().zip(p) {
                *x -= proj * pi;
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            for x in v.iter_mut() {
                *x /= n;
            }
            return Some(v);
        }
    }
    None
}

/// Mean-centers the vectors and projects them onto the top `dims`
/// principal directions, computed by power iteration with deflation on the
/// sample covariance. Deterministic: the iteration starts from a fixed
/// seeded vector and each component's sign is canonical.
pub fn pca_project(vectors: &[Vec<f64>], dims: usize) -> Result<PcaProjection, DiversityError> {
    if dims < 1 {
        return Err(DiversityError::TooFewVectors { needed: 1, got: 0 });
    }
    let dim = check_vectors(vectors, dims.max(2))?;
    let n = vectors.len();

    let mut mean = vec![0.0f64; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    // sample covariance, d x d
    let denom = (n - 1).max(1) as f64;
    let mut cov = vec![vec![0.0f64; dim]; dim];
    for row in &centered {
        for i in 0..dim {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..dim {
                cov[i][j] += row[i] * row[j] / denom;
            }
        }
    }
    let scale = (0..dim).map(|i| cov[i][i]).sum::<f64>().max(1e-300);

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(dims);
    let mut eigenvalues: Vec<f64> = Vec::with_capacity(dims);
    let mut rank_warning = false;
    let mut rng = ChaCha8Rng::seed_from_u64(0x70_63_61); // fixed start-vector seed

    for _ in 0..dims.min(dim) {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vn = norm(&v);
        for x in v.iter_mut() {
            *x /= vn;
        }
        let mut eigenvalue = 0.0f64;
        let mut converged_direction = None;
        for _ in 0..PCA_MAX_ITERATIONS {
            let mut w = matvec(&cov, &v);
            let wn = norm(&w);
            if wn <= PCA_TOLERANCE * scale {
                // deflated matrix is numerically zero: rank exhausted
                break;
            }
            for x in w.iter_mut() {
                *x /= wn;
            }
            let delta = w
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            v = w;
            eigenvalue = wn;
            converged_direction = Some(v.clone());
            if delta < PCA_TOLERANCE {
                break;
            }
        }
        match converged_direction {
            Some(mut direction) if eigenvalue > PCA_TOLERANCE * scale => {
                fix_sign(&mut direction);
                // deflate
                for i in 0..dim {
                    for j in 0..dim {
                        cov[i][j] -= eigenvalue * direction[i] * direction[j];
                    }
                }
                components.push(direction);
                eigenvalues.push(eigenvalue);
            }
            _ => {
                rank_warning = true;
                if let Some(mut filler) = orthogonal_filler(dim, &components) {
                    fix_sign(&mut filler);
                    components.push(filler);
                    eigenvalues.push(0.0);
                } else {
                    break;
                }
            }
        }
    }
    if components.len() < dims {
        rank_warning = true;
    }

    let points: Vec<Vec<f64>> = centered
        .iter()
        .map(|row| components.iter().map(|c| dot(row, c)).collect())
        .collect();
    Ok(PcaProjection {
        points,
        explained_variance: eigenvalues,
        components,
        rank_warning,
    })
}
