//! Descriptive statistics over raw case tables and CSV profile emission.
//!
//! Counts are taken from the published tables as-is, including
//! out-of-service rows, so the file-level figures reproduce exactly.

use num_complex::Complex;

use crate::matpower::CaseData;
use crate::scalar::Real;

/// Nominal voltage classes. Bin edges are midpoints between the nominal
/// levels that actually occur in the snapshot data (380/330, 220/225,
/// 90..154, 45..63, <=27 kV).
pub const VOLTAGE_CLASS_LABELS: [&str; 5] = ["380-330", "225-220", "154-90", "63-45", "27-"];

const VOLTAGE_CLASS_EDGES: [f64; 4] = [330.0, 164.0, 64.0, 28.0];

/// Bin index for a nominal kV level.
pub fn voltage_class(base_kv: f64) -> usize {
    VOLTAGE_CLASS_EDGES
        .iter()
        .position(|&lo| base_kv >= lo)
        .unwrap_or(4)
}

/// Case-level figures matching the published description tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStats<T> {
    pub case_name: String,
    pub n_bus: usize,
    pub n_gen: usize,
    pub n_branch: usize,
    pub n_transformer: usize,
    /// Bus counts per voltage class, highest class first.
    pub voltage_level_histogram: [usize; 5],
    pub n_neg_r: usize,
    pub n_neg_x: usize,
    /// Sum of active loads, MW.
    pub total_load: T,
    /// |r + jx| per branch row, descending.
    pub impedance_profile: Vec<T>,
    /// (bus id, Vm * e^{j Va}) from the stored operating point.
    pub voltage_profile: Vec<(i64, Complex<T>)>,
}

/// Compute all figures from the raw case tables.
pub fn compute_stats<T: Real>(case: &CaseData<T>) -> CaseStats<T> {
    let one = T::one();
    // A branch row is a transformer iff its tap ratio is set to something
    // other than the nominal 1 (raw 0 also means nominal).
    let n_transformer = case
        .branch
        .iter()
        .filter(|b| b.tap != T::zero() && b.tap != one)
        .count();

    let mut histogram = [0usize; 5];
    for b in &case.bus {
        histogram[voltage_class(b.base_kv.to_f64_lossy())] += 1;
    }

    let mut impedance_profile: Vec<T> = case
        .branch
        .iter()
        .map(|b| Complex::new(b.r, b.x).norm())
        .collect();
    impedance_profile.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let deg = T::of_f64(std::f64::consts::PI / 180.0);
    let voltage_profile = case
        .bus
        .iter()
        .map(|b| (b.id, Complex::from_polar(b.vm, b.va * deg)))
        .collect();

    CaseStats {
        case_name: case.case_name.clone(),
        n_bus: case.bus.len(),
        n_gen: case.gen.len(),
        n_branch: case.branch.len(),
        n_transformer,
        voltage_level_histogram: histogram,
        n_neg_r: case.branch.iter().filter(|b| b.r < T::zero()).count(),
        n_neg_x: case.branch.iter().filter(|b| b.x < T::zero()).count(),
        total_load: case.bus.iter().map(|b| b.pd).sum(),
        impedance_profile,
        voltage_profile,
    }
}

/// Emit the impedance and voltage profiles as two CSV blocks suitable for
/// external plotting.
pub fn emit_profiles<T: Real>(stats: &CaseStats<T>) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "rank,impedance_norm_pu").unwrap();
    for (i, z) in stats.impedance_profile.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, z).unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "bus,voltage_re_pu,voltage_im_pu").unwrap();
    for (id, v) in &stats.voltage_profile {
        writeln!(out, "{},{},{}", id, v.re, v.im).unwrap();
    }
    out
}
