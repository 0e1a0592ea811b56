//! Text snapshot and partition formats.
//!
//! Snapshot: a header line `POTTSLAB v1 <kind> <d> <n> <q> <beta> <seed> <sweep>`
//! followed by one symbol per site (`spin`, base-36 digits) or per edge
//! (`bond`, `0`/`1`) in lattice enumeration order, with a newline after every
//! `n + 1` symbols and after the last one.
//!
//! Partition: a header line `PARTITION <d> <n> <f> <q>` followed by one
//! base-36 label per block, with a newline after every `m` symbols.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::gibbs::{BondConfig, SpinConfig};
use crate::lattice::Lattice;
use crate::phase::{BlockGrid, PhasePartition};

const MAGIC: &str = "POTTSLAB";
const VERSION: &str = "v1";
const MAX_DIGIT_Q: usize = 35;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unknown snapshot kind {0:?}")]
    Kind(String),
    #[error("truncated payload: expected {expected} symbols, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("payload has {found} symbols, header requires {expected}")]
    Length { expected: usize, found: usize },
    #[error("invalid symbol {symbol:?} at position {position}")]
    Symbol { symbol: char, position: usize },
    #[error("header and payload disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    Spin,
    Bond,
}

impl SnapshotKind {
    fn name(self) -> &'static str {
        match self {
            Self::Spin => "spin",
            Self::Bond => "bond",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub d: usize,
    pub n: usize,
    pub q: usize,
    pub beta: f64,
    pub seed: u64,
    pub sweep: u64,
    /// Colour per site (spin) or 0/1 per edge (bond).
    pub payload: Vec<u8>,
}

fn digit(v: u8) -> char {
    char::from_digit(v as u32, 36).expect("digit below 36")
}

impl Snapshot {
    pub fn spin(sigma: &SpinConfig, d: usize, n: usize, beta: f64, seed: u64, sweep: u64) -> Result<Self, FormatError> {
        if sigma.q() > MAX_DIGIT_Q {
            return Err(FormatError::Header(format!("q = {} exceeds {MAX_DIGIT_Q}", sigma.q())));
        }
        let s =
            Self { kind: SnapshotKind::Spin, d, n, q: sigma.q(), beta, seed, sweep, payload: sigma.labels().to_vec() };
        s.check_length()?;
        Ok(s)
    }

    pub fn bond(
        eta: &BondConfig,
        d: usize,
        n: usize,
        q: usize,
        beta: f64,
        seed: u64,
        sweep: u64,
    ) -> Result<Self, FormatError> {
        let payload = eta.bits().iter().map(|&b| u8::from(b)).collect();
        let s = Self { kind: SnapshotKind::Bond, d, n, q, beta, seed, sweep, payload };
        s.check_length()?;
        Ok(s)
    }

    /// Symbols the header calls for: `(n+1)^d` sites or `d n (n+1)^{d-1}` edges.
    pub fn expected_len(kind: SnapshotKind, d: usize, n: usize) -> Option<usize> {
        let side = n.checked_add(1)?;
        match kind {
            SnapshotKind::Spin => side.checked_pow(d as u32),
            SnapshotKind::Bond => side.checked_pow(d.checked_sub(1)? as u32)?.checked_mul(n)?.checked_mul(d),
        }
    }

    fn check_length(&self) -> Result<(), FormatError> {
        let expected = Self::expected_len(self.kind, self.d, self.n)
            .ok_or_else(|| FormatError::Header("dimensions overflow".into()))?;
        if self.payload.len() != expected {
            return Err(FormatError::Length { expected, found: self.payload.len() });
        }
        Ok(())
    }

    pub fn to_spin_config(&self) -> Result<SpinConfig, FormatError> {
        if self.kind != SnapshotKind::Spin {
            return Err(FormatError::Mismatch("not a spin snapshot".into()));
        }
        SpinConfig::from_labels(self.q, self.payload.clone()).map_err(|e| FormatError::Mismatch(e.to_string()))
    }

    pub fn to_bond_config(&self) -> Result<BondConfig, FormatError> {
        if self.kind != SnapshotKind::Bond {
            return Err(FormatError::Mismatch("not a bond snapshot".into()));
        }
        Ok(BondConfig::from_bits(self.payload.iter().map(|&b| b == 1).collect()))
    }

    /// Whether the payload can be read against `lat`.
    pub fn fits(&self, lat: &Lattice) -> bool {
        lat.dim() == self.d
            && lat.resolution() == Some(self.n)
            && match self.kind {
                SnapshotKind::Spin => self.payload.len() == lat.num_sites(),
                SnapshotKind::Bond => self.payload.len() == lat.num_edges(),
            }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{MAGIC} {VERSION} {} {} {} {} {} {} {}",
            self.kind.name(),
            self.d,
            self.n,
            self.q,
            self.beta,
            self.seed,
            self.sweep
        )
        .expect("string write");
        let row = self.n + 1;
        for (k, &v) in self.payload.iter().enumerate() {
            out.push(digit(v));
            if (k + 1) % row == 0 || k + 1 == self.payload.len() {
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 9 || fields[0] != MAGIC || fields[1] != VERSION {
            return Err(FormatError::Header(header.to_string()));
        }
        let kind = match fields[2] {
            "spin" => SnapshotKind::Spin,
            "bond" => SnapshotKind::Bond,
            other => return Err(FormatError::Kind(other.to_string())),
        };
        let num = |i: usize| {
            fields[i].parse::<u64>().map_err(|_| FormatError::Header(format!("field {} = {:?}", i, fields[i])))
        };
        let d = num(3)? as usize;
        let n = num(4)? as usize;
        let q = num(5)? as usize;
        let beta: f64 = fields[6].parse().map_err(|_| FormatError::Header(format!("beta = {:?}", fields[6])))?;
        let seed = num(7)?;
        let sweep = num(8)?;
        if d == 0 || n == 0 || q == 0 || q > MAX_DIGIT_Q || beta.is_nan() || beta < 0.0 {
            return Err(FormatError::Header(header.to_string()));
        }
        let expected =
            Self::expected_len(kind, d, n).ok_or_else(|| FormatError::Header("dimensions overflow".into()))?;
        let mut payload = Vec::with_capacity(expected);
        for ch in body.chars().filter(|c| !c.is_whitespace()) {
            let position = payload.len();
            let v = ch.to_digit(36).ok_or(FormatError::Symbol { symbol: ch, position })? as usize;
            let valid = match kind {
                SnapshotKind::Spin => (1..=q).contains(&v),
                SnapshotKind::Bond => v <= 1,
            };
            if !valid {
                return Err(FormatError::Symbol { symbol: ch, position });
            }
            payload.push(v as u8);
        }
        if payload.len() < expected {
            return Err(FormatError::Truncated { expected, found: payload.len() });
        }
        if payload.len() > expected {
            return Err(FormatError::Length { expected, found: payload.len() });
        }
        Ok(Self { kind, d, n, q, beta, seed, sweep, payload })
    }
}

pub fn save_snapshot(path: &Path, snapshot: &Snapshot) -> Result<(), FormatError> {
    std::fs::write(path, snapshot.render())?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, FormatError> {
    Snapshot::parse(&std::fs::read_to_string(path)?)
}

pub fn render_partition(p: &PhasePartition) -> Result<String, FormatError> {
    if p.q() > MAX_DIGIT_Q {
        return Err(FormatError::Header(format!("q = {} exceeds {MAX_DIGIT_Q}", p.q())));
    }
    let g = p.grid();
    let mut out = format!("PARTITION {} {} {} {}\n", g.dim(), g.n(), g.f(), p.q());
    for (k, &l) in p.labels().iter().enumerate() {
        out.push(digit(l));
        if (k + 1) % g.m() == 0 {
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn parse_partition(text: &str) -> Result<PhasePartition, FormatError> {
    let (header, body) = text.split_once('\n').unwrap_or((text, ""));
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "PARTITION" {
        return Err(FormatError::Header(header.to_string()));
    }
    let nums: Vec<usize> = fields[1..]
        .iter()
        .map(|f| f.parse::<usize>().map_err(|_| FormatError::Header(header.to_string())))
        .collect::<Result<_, _>>()?;
    let (d, n, f, q) = (nums[0], nums[1], nums[2], nums[3]);
    if d == 0 || d > 8 || q > MAX_DIGIT_Q {
        return Err(FormatError::Header(header.to_string()));
    }
    let grid = BlockGrid::for_lattice(d, n, f).map_err(|e| FormatError::Header(e.to_string()))?;
    let expected = grid.num_blocks();
    let mut labels = Vec::with_capacity(expected);
    for ch in body.chars().filter(|c| !c.is_whitespace()) {
        let position = labels.len();
        match ch.to_digit(36) {
            Some(v) if v as usize <= q => labels.push(v as u8),
            _ => return Err(FormatError::Symbol { symbol: ch, position }),
        }
    }
    if labels.len() < expected {
        return Err(FormatError::Truncated { expected, found: labels.len() });
    }
    if labels.len() > expected {
        return Err(FormatError::Length { expected, found: labels.len() });
    }
    PhasePartition::new(grid, q, labels).map_err(|e| FormatError::Mismatch(e.to_string()))
}

pub fn save_partition(path: &Path, p: &PhasePartition) -> Result<(), FormatError> {
    std::fs::write(path, render_partition(p)?)?;
    Ok(())
}

pub fn load_partition(path: &Path) -> Result<PhasePartition, FormatError> {
    parse_partition(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let lat = Lattice::build_box(2, 2).unwrap();
        let sigma = SpinConfig::constant(&lat, 3, 2).unwrap();
        let s = Snapshot::spin(&sigma, 2, 2, 0.8, 7, 12).unwrap();
        assert_eq!(s.render(), "POTTSLAB v1 spin 2 2 3 0.8 7 12\n222\n222\n222\n");
    }

    #[test]
    fn truncation_names_lengths() {
        let err = Snapshot::parse("POTTSLAB v1 spin 2 2 3 0.8 7 12\n222\n22\n").unwrap_err();
        assert!(matches!(err, FormatError::Truncated { expected: 9, found: 5 }));
        assert!(err.to_string().contains("expected 9"));
    }

    #[test]
    fn unknown_kind() {
        assert!(matches!(Snapshot::parse("POTTSLAB v1 flux 2 2 3 0.8 7 12\n"), Err(FormatError::Kind(_))));
    }

    #[test]
    fn partition_round_trip() {
        let g = BlockGrid::for_lattice(2, 10, 3).unwrap();
        let p = PhasePartition::from_fn(g, 4, |x| if x[0] < 0.5 { 0 } else { 4 }).unwrap();
        assert_eq!(parse_partition(&render_partition(&p).unwrap()).unwrap(), p);
    }
}
