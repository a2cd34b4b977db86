use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::dense::SparsityMask;
use super::sparse::check_group_size;
use crate::error::{Error, Result};

/// Sparsity pattern together with its structural parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum Pattern {
    Unstructured,
    VectorWise { v: usize },
    BlockWise { v: usize },
    ShflBw { v: usize },
    /// At most `n` kept entries in every aligned window of `m` row elements.
    Balanced { n: usize, m: usize },
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Unstructured => write!(f, "unstructured"),
            Pattern::VectorWise { v } => write!(f, "vector_wise(V={v})"),
            Pattern::BlockWise { v } => write!(f, "block_wise(V={v})"),
            Pattern::ShflBw { v } => write!(f, "shfl_bw(V={v})"),
            Pattern::Balanced { n, m } => write!(f, "balanced({n}:{m})"),
        }
    }
}

/// Pattern family without parameters, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Unstructured,
    VectorWise,
    BlockWise,
    ShflBw,
    Balanced,
}

impl PatternKind {
    /// Whether tiles of this pattern are dense once stitched.
    pub fn is_tiled_dense(self) -> bool {
        matches!(
            self,
            PatternKind::VectorWise | PatternKind::BlockWise | PatternKind::ShflBw
        )
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "unstructured" => Ok(PatternKind::Unstructured),
            "vw" | "vector_wise" | "vectorwise" => Ok(PatternKind::VectorWise),
            "bw" | "block_wise" | "blockwise" => Ok(PatternKind::BlockWise),
            "shflbw" | "shfl_bw" => Ok(PatternKind::ShflBw),
            "balanced" | "nm" => Ok(PatternKind::Balanced),
            other => Err(Error::params(format!("unknown pattern '{other}'"))),
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Unstructured => "unstructured",
            PatternKind::VectorWise => "vector_wise",
            PatternKind::BlockWise => "block_wise",
            PatternKind::ShflBw => "shfl_bw",
            PatternKind::Balanced => "balanced",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub row: usize,
    pub col: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub pattern: Pattern,
    pub passed: bool,
    pub counterexample: Option<Counterexample>,
}

impl ValidationReport {
    fn pass(pattern: Pattern) -> Self {
        Self {
            pattern,
            passed: true,
            counterexample: None,
        }
    }

    fn fail(pattern: Pattern, row: usize, col: usize, reason: String) -> Self {
        Self {
            pattern,
            passed: false,
            counterexample: Some(Counterexample { row, col, reason }),
        }
    }
}

/// Checks `mask` against `pattern`, reporting the first violation found in
/// row-major scan order.
pub fn validate_pattern(mask: &SparsityMask, pattern: Pattern) -> Result<ValidationReport> {
    match pattern {
        Pattern::Unstructured => Ok(ValidationReport::pass(pattern)),
        Pattern::VectorWise { v } => validate_vector_wise(mask, v, pattern),
        Pattern::BlockWise { v } => validate_block_wise(mask, v, pattern),
        Pattern::ShflBw { v } => validate_shfl_bw(mask, v, pattern),
        Pattern::Balanced { n, m } => validate_balanced(mask, n, m, pattern),
    }
}

fn validate_vector_wise(mask: &SparsityMask, v: usize, pattern: Pattern) -> Result<ValidationReport> {
    check_group_size(mask.rows(), v)?;
    for lead in (0..mask.rows()).step_by(v) {
        for r in lead + 1..lead + v {
            if let Some(c) = (0..mask.cols()).find(|&c| mask.get(r, c) != mask.get(lead, c)) {
                return Ok(ValidationReport::fail(
                    pattern,
                    r,
                    c,
                    format!("differs from row {lead} of the same vector group"),
                ));
            }
        }
    }
    Ok(ValidationReport::pass(pattern))
}

fn validate_block_wise(mask: &SparsityMask, v: usize, pattern: Pattern) -> Result<ValidationReport> {
    check_group_size(mask.rows(), v)?;
    if !mask.cols().is_multiple_of(v) {
        return Err(Error::params(format!(
            "block size {v} does not divide {} columns",
            mask.cols()
        )));
    }
    for r in 0..mask.rows() {
        for c in 0..mask.cols() {
            let corner = (r - r % v, c - c % v);
            if mask.get(r, c) != mask.get(corner.0, corner.1) {
                return Ok(ValidationReport::fail(
                    pattern,
                    r,
                    c,
                    format!(
                        "block ({}, {}) is partially kept",
                        corner.0 / v,
                        corner.1 / v
                    ),
                ));
            }
        }
    }
    Ok(ValidationReport::pass(pattern))
}

fn validate_shfl_bw(mask: &SparsityMask, v: usize, pattern: Pattern) -> Result<ValidationReport> {
    check_group_size(mask.rows(), v)?;
    // first row and multiplicity of each distinct support
    let mut classes: HashMap<&[bool], (usize, usize)> = HashMap::new();
    for r in 0..mask.rows() {
        classes.entry(mask.row(r)).or_insert((r, 0)).1 += 1;
    }
    let offender = classes
        .values()
        .filter(|(_, count)| count % v != 0)
        .min_by_key(|(first, _)| *first);
    Ok(match offender {
        None => ValidationReport::pass(pattern),
        Some(&(first, count)) => {
            let col = mask.row(first).iter().position(|&b| b).unwrap_or(0);
            ValidationReport::fail(
                pattern,
                first,
                col,
                format!("support shared by {count} rows, not a multiple of V={v}"),
            )
        }
    })
}

fn validate_balanced(
    mask: &SparsityMask,
    n: usize,
    m: usize,
    pattern: Pattern,
) -> Result<ValidationReport> {
    check_balanced_params(mask.cols(), n, m)?;
    for r in 0..mask.rows() {
        for (w, window) in mask.row(r).chunks(m).enumerate() {
            let kept = window.iter().filter(|&&b| b).count();
            if kept > n {
                return Ok(ValidationReport::fail(
                    pattern,
                    r,
                    w * m,
                    format!("{kept} kept entries in a window of {m}, at most {n} allowed"),
                ));
            }
        }
    }
    Ok(ValidationReport::pass(pattern))
}

pub(crate) fn check_balanced_params(cols: usize, n: usize, m: usize) -> Result<()> {
    if m == 0 || !cols.is_multiple_of(m) {
        return Err(Error::params(format!(
            "window m={m} must be positive and divide {cols} columns"
        )));
    }
    if n > m {
        return Err(Error::params(format!("n={n} exceeds window m={m}")));
    }
    Ok(())
}
