//! SMS sparse matrix text format: a `<nrows> <ncols> M` header, 1-indexed
//! `<i> <j> <v>` triplets one per line, and a `0 0 0` terminator.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::Zero;
use thiserror::Error;

use cra::blackbox::DenseIntMatrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmsError {
    #[error("malformed SMS header: expected `<nrows> <ncols> M`")]
    MalformedHeader,
    #[error("malformed SMS triplet on line {0}")]
    MalformedTriplet(usize),
    #[error("index ({row}, {col}) outside {nrows}x{ncols} on line {line}")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
        line: usize,
    },
    #[error("missing `0 0 0` terminator")]
    MissingTerminator,
    #[error("matrix is {nrows}x{ncols}, not square")]
    NonSquare { nrows: usize, ncols: usize },
}

/// Parsed SMS file. Duplicate positions are already summed; triplets are
/// kept in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmsFile {
    pub nrows: usize,
    pub ncols: usize,
    pub triplets: Vec<(usize, usize, BigInt)>,
}

impl SmsFile {
    /// Densifies into a square matrix; zero entries stay zero.
    pub fn to_dense(&self) -> Result<DenseIntMatrix, SmsError> {
        if self.nrows != self.ncols {
            return Err(SmsError::NonSquare {
                nrows: self.nrows,
                ncols: self.ncols,
            });
        }
        let n = self.nrows;
        let mut entries = vec![BigInt::zero(); n * n];
        for (i, j, v) in &self.triplets {
            entries[(i - 1) * n + (j - 1)] = v.clone();
        }
        Ok(DenseIntMatrix::new(n, entries))
    }
}

pub fn parse_sms(text: &str) -> Result<SmsFile, SmsError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines.next().ok_or(SmsError::MalformedHeader)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 3 {
        return Err(SmsError::MalformedHeader);
    }
    let nrows: usize = tokens[0].parse().map_err(|_| SmsError::MalformedHeader)?;
    let ncols: usize = tokens[1].parse().map_err(|_| SmsError::MalformedHeader)?;
    if nrows == 0 || ncols == 0 {
        return Err(SmsError::MalformedHeader);
    }

    let mut cells: BTreeMap<(usize, usize), BigInt> = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(SmsError::MalformedTriplet(line_no));
        }
        if tokens == ["0", "0", "0"] {
            let triplets = cells.into_iter().map(|((i, j), v)| (i, j, v)).collect();
            return Ok(SmsFile {
                nrows,
                ncols,
                triplets,
            });
        }
        let row: usize = tokens[0]
            .parse()
            .map_err(|_| SmsError::MalformedTriplet(line_no))?;
        let col: usize = tokens[1]
            .parse()
            .map_err(|_| SmsError::MalformedTriplet(line_no))?;
        let value =
            BigInt::from_str(tokens[2]).map_err(|_| SmsError::MalformedTriplet(line_no))?;
        if row < 1 || row > nrows || col < 1 || col > ncols {
            return Err(SmsError::IndexOutOfRange {
                row,
                col,
                nrows,
                ncols,
                line: line_no,
            });
        }
        *cells.entry((row, col)).or_insert_with(BigInt::zero) += value;
    }
    Err(SmsError::MissingTerminator)
}

pub fn render_sms(sms: &SmsFile) -> String {
    let mut out = format!("{} {} M\n", sms.nrows, sms.ncols);
    for (i, j, v) in &sms.triplets {
        out.push_str(&format!("{i} {j} {v}\n"));
    }
    out.push_str("0 0 0\n");
    out
}
