//! Sensor array geometries in wavelength units (λ = 1).

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Position of a sensor in wavelengths.
pub type Position = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrayKind {
    /// `rows × cols` rectangular grid, row-major ordering.
    Ura {
        rows: usize,
        cols: usize,
    },
    /// Circle of `m` sensors, sensor 0 on the +x axis.
    Uca {
        m: usize,
    },
    Custom,
}

impl fmt::Display for ArrayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArrayKind::Ura { rows, cols } => write!(f, "URA {rows}x{cols}"),
            ArrayKind::Uca { m } => write!(f, "UCA {m}"),
            ArrayKind::Custom => write!(f, "custom"),
        }
    }
}

/// An immutable set of at least two distinct, finite sensor positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    positions: Vec<Position>,
    kind: ArrayKind,
}

impl SensorArray {
    /// Validates and wraps a list of positions.
    pub fn new(positions: Vec<Position>, kind: ArrayKind) -> Result<Self> {
        if positions.len() < 2 {
            return invalid(format!("an array needs at least 2 sensors, got {}", positions.len()));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return invalid("sensor coordinates must be finite");
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if distance(&positions[i], &positions[j]) <= 0.0 {
                    return invalid(format!("sensors {i} and {j} coincide"));
                }
            }
        }
        Ok(Self { positions, kind })
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Positions of the sensors at `indices`, in that order.
    pub fn subset_positions(&self, indices: &[usize]) -> Vec<Position> {
        indices.iter().map(|&i| self.positions[i]).collect()
    }

    /// Largest pairwise distance among the listed sensors.
    pub fn aperture(&self, indices: &[usize]) -> f64 {
        let mut best = 0.0_f64;
        for (a, &i) in indices.iter().enumerate() {
            for &j in &indices[a + 1..] {
                best = best.max(distance(&self.positions[i], &self.positions[j]));
            }
        }
        best
    }

    /// Reads a custom geometry: one sensor per line as three whitespace
    /// separated coordinates in wavelengths; blank and `#` lines are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut positions = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let coords: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            if coords.len() != 3 {
                return Err(Error::Format(format!(
                    "line {}: expected 3 coordinates, found {}",
                    lineno + 1,
                    coords.len()
                )));
            }
            positions.push([coords[0], coords[1], coords[2]]);
        }
        Self::new(positions, ArrayKind::Custom)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {} sensors, {}\n", self.len(), self.kind);
        for p in &self.positions {
            out.push_str(&format!("{:?} {:?} {:?}\n", p[0], p[1], p[2]));
        }
        out
    }
}

pub fn distance(a: &Position, b: &Position) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Rectangular grid in the x–y plane; element `(i, j)` sits at
/// `(i·spacing, j·spacing, 0)` and is stored at index `i·cols + j`.
pub fn build_ura(rows: usize, cols: usize, spacing: f64) -> Result<SensorArray> {
    if rows == 0 || cols == 0 || rows * cols < 2 {
        return invalid(format!("URA {rows}x{cols} needs positive dimensions and at least 2 sensors"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return invalid(format!("spacing must be positive, got {spacing}"));
    }
    let positions =
        (0..rows).flat_map(|i| (0..cols).map(move |j| [i as f64 * spacing, j as f64 * spacing, 0.0])).collect();
    SensorArray::new(positions, ArrayKind::Ura { rows, cols })
}

/// Circle centred at the origin whose adjacent chord equals `spacing`.
pub fn build_uca(m: usize, spacing: f64) -> Result<SensorArray> {
    if m < 3 {
        return invalid(format!("a UCA needs at least 3 sensors, got {m}"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return invalid(format!("spacing must be positive, got {spacing}"));
    }
    let radius = uca_radius(m, spacing);
    let positions = (0..m)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / m as f64;
            [radius * a.cos(), radius * a.sin(), 0.0]
        })
        .collect();
    SensorArray::new(positions, ArrayKind::Uca { m })
}

pub fn uca_radius(m: usize, spacing: f64) -> f64 {
    spacing / (2.0 * (PI / m as f64).sin())
}

/// Displaces every coordinate by an independent N(0, sigma²) draw.
pub fn perturb_positions(array: &SensorArray, sigma: f64, seed: u64) -> Result<SensorArray> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return invalid(format!("perturbation sigma must be non-negative, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(SensorArray { positions: array.positions.clone(), kind: ArrayKind::Custom });
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = rng::rng_from_seed(seed);
    let positions = array
        .positions
        .iter()
        .map(|p| {
            let mut q = *p;
            for c in q.iter_mut() {
                *c += normal.sample(&mut rng);
            }
            q
        })
        .collect();
    SensorArray::new(positions, ArrayKind::Custom)
}

/// Sensors needed for unique retrieval on an `m1 × m2` grid. Advisory only.
pub fn min_sensors_for_retrieval(m1: usize, m2: usize) -> usize {
    m1 * m2 - m1.min(m2)
}

/// Logs a warning when `k` falls below the retrieval guarantee of a URA.
pub fn warn_if_underdetermined(array: &SensorArray, k: usize) {
    if let ArrayKind::Ura { rows, cols } = array.kind() {
        let need = min_sensors_for_retrieval(rows, cols);
        if k < need {
            log::warn!("K={k} is below the {need} sensors needed for unique retrieval on a {rows}x{cols} URA");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ura_corners_and_ordering() {
        let a = build_ura(4, 4, 0.5).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a.positions()[0], [0.0, 0.0, 0.0]);
        assert_eq!(a.positions()[15], [1.5, 1.5, 0.0]);
        assert_eq!(a.positions()[1], [0.0, 0.5, 0.0]);
        assert_eq!(build_ura(5, 5, 0.5).unwrap().len(), 25);
        let tiny = build_ura(1, 2, 0.5).unwrap();
        assert_eq!(distance(&tiny.positions()[0], &tiny.positions()[1]), 0.5);
    }

    #[test]
    fn ura_rejects_bad_arguments() {
        assert!(build_ura(0, 4, 0.5).is_err());
        assert!(build_ura(1, 1, 0.5).is_err());
        assert!(build_ura(2, 2, 0.0).is_err());
        assert!(build_ura(2, 2, -1.0).is_err());
    }

    #[test]
    fn uca_radius_and_chords() {
        let a = build_uca(16, 0.5).unwrap();
        let r = 0.5 / (2.0 * (PI / 16.0).sin());
        assert!((r - 1.2815).abs() < 1e-4);
        for k in 0..16 {
            let p = a.positions()[k];
            let q = a.positions()[(k + 1) % 16];
            assert!((distance(&p, &[0.0; 3]) - r).abs() < 1e-12);
            assert!((distance(&p, &q) - 0.5).abs() < 1e-12);
        }
        assert_eq!(build_uca(20, 0.5).unwrap().len(), 20);
        let sq = build_uca(4, 0.7).unwrap();
        assert!((distance(&sq.positions()[0], &[0.0; 3]) - 0.7 / 2f64.sqrt()).abs() < 1e-12);
        assert!(build_uca(2, 0.5).is_err());
    }

    #[test]
    fn perturbation_contract() {
        let a = build_uca(8, 0.5).unwrap();
        let same = perturb_positions(&a, 0.0, 3).unwrap();
        assert_eq!(same.positions(), a.positions());
        assert_eq!(same.kind(), ArrayKind::Custom);
        let p1 = perturb_positions(&a, 0.25, 11).unwrap();
        let p2 = perturb_positions(&a, 0.25, 11).unwrap();
        assert_eq!(p1, p2);
        assert_ne!(p1.positions(), a.positions());
        assert!(perturb_positions(&a, -0.1, 0).is_err());
    }

    #[test]
    fn retrieval_counts() {
        assert_eq!(min_sensors_for_retrieval(4, 4), 12);
        assert_eq!(min_sensors_for_retrieval(1, 9), 8);
        assert_eq!(min_sensors_for_retrieval(5, 5), 20);
    }

    #[test]
    fn text_format_round_trip_and_errors() {
        let text = "# comment\n0 0 0\n\n0.5 0 0\n0 0.5 0.25\n";
        let a = SensorArray::from_text(text).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a.positions()[2], [0.0, 0.5, 0.25]);
        let back = SensorArray::from_text(&a.to_text()).unwrap();
        assert_eq!(back.positions(), a.positions());
        assert!(SensorArray::from_text("0 0\n1 1 1\n").is_err());
        assert!(SensorArray::from_text("0 0 0\n0 0 0\n").is_err());
        assert!(SensorArray::from_text("0 0 x\n1 1 1\n").is_err());
    }
}
