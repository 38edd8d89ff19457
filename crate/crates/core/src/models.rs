//! Hamiltonian builders and the plain-text matrix format.
//!
//! The format is: the dimension `F` on the first data line, then `F` rows of
//! `2F` numbers, each entry written as a real/imaginary pair. Text after `#`
//! is ignored.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cps::stream_rng;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, HermitianMatrix};

/// Hermiticity tolerance for loaded matrices.
pub const FILE_HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    /// `[[half_gap, coupling], [coupling, -half_gap]]`.
    TwoLevel { coupling: f64, half_gap: f64 },
    /// GUE-style matrix scaled by `scale`, deterministic in `seed`.
    Random { dim: usize, seed: u64, scale: f64 },
    /// Tridiagonal with `n * gap` on the diagonal (`n = 1..=F`) and `coupling` beside it.
    Ladder { dim: usize, gap: f64, coupling: f64 },
    File(PathBuf),
}

pub fn build(spec: &ModelSpec) -> Result<HermitianMatrix> {
    match spec {
        ModelSpec::TwoLevel { coupling, half_gap } => {
            HermitianMatrix::from_real_rows(&[&[*half_gap, *coupling], &[*coupling, -*half_gap]])
        }
        ModelSpec::Random { dim, seed, scale } => {
            if *dim == 0 {
                return Err(Error::Domain("random model needs F >= 1".into()));
            }
            let mut rng = stream_rng(*seed, 0);
            let mut m = CMatrix::zeros(*dim);
            for a in 0..*dim {
                m[(a, a)] = C64::new(scale * rng.sample::<f64, _>(StandardNormal), 0.0);
                for b in (a + 1)..*dim {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let v = C64::new(re, im) * (scale * std::f64::consts::FRAC_1_SQRT_2);
                    m[(a, b)] = v;
                    m[(b, a)] = v.conj();
                }
            }
            HermitianMatrix::new(m)
        }
        ModelSpec::Ladder { dim, gap, coupling } => {
            if *dim == 0 {
                return Err(Error::Domain("ladder model needs F >= 1".into()));
            }
            let m = CMatrix::from_fn(*dim, |a, b| {
                if a == b {
                    C64::new((a + 1) as f64 * gap, 0.0)
                } else if a.abs_diff(b) == 1 {
                    C64::new(*coupling, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            HermitianMatrix::new(m)
        }
        ModelSpec::File(path) => load_hamiltonian(path),
    }
}

pub fn load_hamiltonian(path: &Path) -> Result<HermitianMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_hamiltonian(&text)
}

/// A numeric token with its 1-based line and column.
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn tokens_by_line(text: &str) -> Vec<(usize, Vec<Token<'_>>)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let body = raw.split('#').next().unwrap_or("");
            let mut toks = Vec::new();
            let mut start = None;
            for (pos, ch) in body.char_indices().chain(std::iter::once((body.len(), ' '))) {
                match (ch.is_whitespace(), start) {
                    (false, None) => start = Some(pos),
                    (true, Some(s)) => {
                        toks.push(Token { text: &body[s..pos], line: i + 1, column: s + 1 });
                        start = None;
                    }
                    _ => {}
                }
            }
            (!toks.is_empty()).then_some((i + 1, toks))
        })
        .collect()
}

fn number(tok: &Token) -> Result<f64> {
    tok.text.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
        line: tok.line,
        column: tok.column,
        message: format!("malformed number '{}'", tok.text),
    })
}

pub fn parse_hamiltonian(text: &str) -> Result<HermitianMatrix> {
    let lines = tokens_by_line(text);
    let Some(((line, header), rows)) = lines.split_first() else {
        return Err(Error::Parse { line: 1, column: 1, message: "empty file: expected the dimension F".into() });
    };
    if header.len() != 1 {
        return Err(Error::Parse {
            line: *line,
            column: header[1].column,
            message: "dimension line must contain a single integer".into(),
        });
    }
    let dim: usize = header[0].text.parse().ok().filter(|&d| d >= 1).ok_or_else(|| Error::Parse {
        line: *line,
        column: header[0].column,
        message: format!("invalid dimension '{}'", header[0].text),
    })?;
    if rows.len() != dim {
        let (line, column) = rows.get(dim).map(|(l, t)| (*l, t[0].column)).unwrap_or((
            rows.last().map(|(l, _)| l + 1).unwrap_or(line + 1),
            1,
        ));
        return Err(Error::Parse { line, column, message: format!("expected {dim} matrix rows, found {}", rows.len()) });
    }
    let mut m = CMatrix::zeros(dim);
    for (r, (line, toks)) in rows.iter().enumerate() {
        if toks.len() % 2 == 1 {
            return Err(Error::Parse {
                line: *line,
                column: toks[toks.len() - 1].column,
                message: "entries must be real/imaginary pairs".into(),
            });
        }
        if toks.len() != 2 * dim {
            return Err(Error::NotSquare { row: r + 1, expected: dim, found: toks.len() / 2 });
        }
        for c in 0..dim {
            m[(r, c)] = C64::new(number(&toks[2 * c])?, number(&toks[2 * c + 1])?);
        }
    }
    let (asym, row, col) = m.max_asymmetry();
    if asym > FILE_HERMITIAN_TOL {
        return Err(Error::NotHermitian { max_asymmetry: asym, row: row + 1, col: col + 1 });
    }
    Ok(HermitianMatrix::hermitize(m))
}

/// Serializes in the text format with round-trip exact (`{:e}` shortest) floats.
pub fn format_hamiltonian(h: &HermitianMatrix) -> String {
    let f = h.dim();
    let mut out = format!("{f}\n");
    for r in 0..f {
        let row: Vec<String> = (0..f).map(|c| format!("{:e} {:e}", h[(r, c)].re, h[(r, c)].im)).collect();
        let _ = writeln!(out, "{}", row.join("  "));
    }
    out
}

pub fn write_hamiltonian(h: &HermitianMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, format_hamiltonian(h)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
