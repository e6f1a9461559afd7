//! Shor relaxation export in the SDPA sparse format (`.dat-s`).
//!
//! The relaxation of the real-symmetric QCQP replaces `x x'` with a
//! positive semidefinite matrix `X`:
//!
//!   min <C, X> + c   s.t.  <A_k, X> = a_k,  <B_k, X> <= b_k,  X >= 0.
//!
//! SDPA solves the pair
//!
//!   (P) min c' y  s.t.  sum_i y_i F_i - F0 >= 0
//!   (D) max <F0, Y>  s.t.  <F_i, Y> = c_i,  Y >= 0
//!
//! so the relaxation is emitted as the dual (D): `Y` holds `X` in a
//! dense block of size n_var plus a diagonal slack block (one entry per
//! inequality), `F0 = -C`, `F_i = A_k` for equalities and `F_i = B_k +
//! slack(k)` for inequalities, `c_i` the corresponding right-hand side.
//! The SDP objective therefore equals `-(optimal value) + c` of the
//! original problem; the sign flip is noted in the file header.
//!
//! Inequalities with an infinite right-hand side (unbounded generator
//! limits) are vacuous and skipped.

use crate::error::{Error, Result};
use crate::qcqp::{QcqpProblem, Representation};
use crate::scalar::Real;

/// Write the Shor relaxation as SDPA sparse text.
pub fn export_shor_sdpa<T: Real>(p: &QcqpProblem<T>) -> Result<String> {
    use std::fmt::Write;
    if p.representation != Representation::Real {
        return Err(Error::Representation(
            "SDPA export requires the real-symmetric representation".into(),
        ));
    }
    let finite_ineq: Vec<usize> = (0..p.n_ineq())
        .filter(|&k| p.inequalities[k].rhs.is_finite())
        .collect();
    let m = p.n_eq() + finite_ineq.len();
    let n = p.n_var;

    let mut out = String::new();
    writeln!(
        out,
        "* Shor relaxation; objective of the original problem = -(SDP optimum) + {}",
        fmt(p.constant)
    )
    .unwrap();
    writeln!(
        out,
        "* block 1: moment matrix X ({n} x {n}); block 2: inequality slacks"
    )
    .unwrap();
    if finite_ineq.len() < p.n_ineq() {
        writeln!(
            out,
            "* {} inequalities with infinite bound skipped",
            p.n_ineq() - finite_ineq.len()
        )
        .unwrap();
    }
    writeln!(out, "{m} = mDIM").unwrap();
    let nblock = if finite_ineq.is_empty() { 1 } else { 2 };
    writeln!(out, "{nblock} = nBLOCK").unwrap();
    if finite_ineq.is_empty() {
        writeln!(out, "{n} = bLOCKsTRUCT").unwrap();
    } else {
        writeln!(out, "{n} -{} = bLOCKsTRUCT", finite_ineq.len()).unwrap();
    }
    let rhs: Vec<String> = p
        .equalities
        .iter()
        .map(|f| fmt(f.rhs))
        .chain(finite_ineq.iter().map(|&k| fmt(p.inequalities[k].rhs)))
        .collect();
    writeln!(out, "{}", rhs.join(" ")).unwrap();

    // F0 = -C in block 1.
    for (i, j, v) in p.cost.iter() {
        if i <= j && v.re != T::zero() {
            writeln!(out, "0 1 {} {} {}", i + 1, j + 1, fmt(-v.re)).unwrap();
        }
    }
    for (k, f) in p.equalities.iter().enumerate() {
        for (i, j, v) in f.mat.iter() {
            if i <= j && v.re != T::zero() {
                writeln!(out, "{} 1 {} {} {}", k + 1, i + 1, j + 1, fmt(v.re)).unwrap();
            }
        }
    }
    for (slot, &k) in finite_ineq.iter().enumerate() {
        let con = p.n_eq() + slot + 1;
        for (i, j, v) in p.inequalities[k].mat.iter() {
            if i <= j && v.re != T::zero() {
                writeln!(out, "{con} 1 {} {} {}", i + 1, j + 1, fmt(v.re)).unwrap();
            }
        }
        writeln!(out, "{con} 2 {} {} 1", slot + 1, slot + 1).unwrap();
    }
    Ok(out)
}

fn fmt<T: Real>(v: T) -> String {
    format!("{v}")
}

/// Parsed image of an SDPA sparse file, for validation and round-trip
/// checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpaProblem {
    pub m: usize,
    pub block_struct: Vec<i64>,
    pub rhs: Vec<f64>,
    /// (constraint index with 0 = F0, block (1-based), row, col, value);
    /// rows and columns 1-based, upper triangle.
    pub entries: Vec<(usize, usize, usize, usize, f64)>,
}

impl SdpaProblem {
    /// `<F_k, Y>` for a block-diagonal `Y` given as one dense matrix per
    /// block (diagonal blocks as vectors on the diagonal of a square
    /// matrix). Off-diagonal entries count twice (symmetric storage).
    pub fn inner_product(&self, k: usize, blocks: &[Vec<Vec<f64>>]) -> f64 {
        let mut acc = 0.0;
        for &(c, b, i, j, v) in &self.entries {
            if c != k {
                continue;
            }
            let y = blocks[b - 1][i - 1][j - 1];
            acc += if i == j { v * y } else { 2.0 * v * y };
        }
        acc
    }
}

/// Parse SDPA sparse text (comment lines start with `*` or `"`).
pub fn parse_sdpa(text: &str) -> Result<SdpaProblem> {
    let mut lines = text
        .lines()
        .filter(|l| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('*') && !t.starts_with('"')
        });
    let mut next_numeric = |what: &str| -> Result<Vec<f64>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Structure(format!("missing {what} line")))?;
        line.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty() && *t != "=" && !t.chars().any(|c| c.is_alphabetic()))
            .map(|t| {
                t.trim_matches(|c| c == '{' || c == '}' || c == '(' || c == ')')
                    .parse::<f64>()
                    .map_err(|_| Error::Structure(format!("bad number '{t}' in {what} line")))
            })
            .collect()
    };
    let m = next_numeric("mDIM")?[0] as usize;
    let nblock = next_numeric("nBLOCK")?[0] as usize;
    let block_struct: Vec<i64> = next_numeric("bLOCKsTRUCT")?
        .iter()
        .map(|&v| v as i64)
        .collect();
    if block_struct.len() != nblock {
        return Err(Error::Structure(format!(
            "blockSTRUCT has {} entries, expected {nblock}",
            block_struct.len()
        )));
    }
    let rhs = next_numeric("right-hand side")?;
    if rhs.len() != m {
        return Err(Error::Structure(format!(
            "{} right-hand sides for mDIM {m}",
            rhs.len()
        )));
    }
    let mut entries = Vec::new();
    for line in lines {
        let f: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Structure(format!("bad entry line '{line}'")))
            })
            .collect::<Result<_>>()?;
        if f.len() != 5 {
            return Err(Error::Structure(format!(
                "entry line '{line}' has {} fields, expected 5",
                f.len()
            )));
        }
        entries.push((f[0] as usize, f[1] as usize, f[2] as usize, f[3] as usize, f[4]));
    }
    Ok(SdpaProblem {
        m,
        block_struct,
        rhs,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpower::{parse_case, TWO_BUS};
    use crate::network::build_network;
    use crate::powerflow::{solve_powerflow, Start};
    use crate::qcqp::{build_qcqp, evaluate};
    use approx::assert_relative_eq;

    #[test]
    fn complex_representation_is_rejected() {
        let net = build_network(&parse_case::<f64>(TWO_BUS).unwrap()).unwrap();
        let p = build_qcqp(&net, crate::Representation::Complex);
        assert!(matches!(
            export_shor_sdpa(&p),
            Err(Error::Representation(_))
        ));
    }

    #[test]
    fn structure_of_two_bus_export() {
        let net = build_network(&parse_case::<f64>(TWO_BUS).unwrap()).unwrap();
        let p = build_qcqp(&net, crate::Representation::Real);
        let text = export_shor_sdpa(&p).unwrap();
        let s = parse_sdpa(&text).unwrap();
        // Qmax/Qmin are finite in this case, so nothing is skipped.
        assert_eq!(s.m, p.n_eq() + p.n_ineq());
        assert_eq!(s.block_struct, vec![p.n_var as i64, -(p.n_ineq() as i64)]);
        assert_eq!(s.rhs.len(), s.m);
    }

    #[test]
    fn lifted_feasible_point_satisfies_export() {
        // X = x x' from a converged power flow must satisfy every
        // emitted constraint with nonnegative slacks.
        let net = build_network(&parse_case::<f64>(TWO_BUS).unwrap()).unwrap();
        let sol = solve_powerflow(&net, Start::Flat, 1e-12, 30);
        assert!(sol.converged);
        let p = build_qcqp(&net, crate::Representation::Real);
        let x: Vec<f64> = p
            .candidate_from_voltages(&sol.v)
            .unwrap()
            .iter()
            .map(|c| c.re)
            .collect();
        let (obj, _, slacks) = evaluate(
            &p,
            &p.candidate_from_voltages(&sol.v).unwrap(),
        )
        .unwrap();

        let text = export_shor_sdpa(&p).unwrap();
        let s = parse_sdpa(&text).unwrap();
        let n = p.n_var;
        let big: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| x[i] * x[j]).collect())
            .collect();
        let nslack = (-s.block_struct[1]) as usize;
        let mut slack_block = vec![vec![0.0; nslack]; nslack];
        let mut finite = 0;
        for (k, f) in p.inequalities.iter().enumerate() {
            if f.rhs.is_finite() {
                slack_block[finite][finite] = slacks[k];
                assert!(slacks[k] >= -1e-8, "negative slack {}", slacks[k]);
                finite += 1;
            }
        }
        let blocks = vec![big, slack_block];
        for k in 1..=s.m {
            assert_relative_eq!(
                s.inner_product(k, &blocks),
                s.rhs[k - 1],
                epsilon = 1e-7,
                max_relative = 1e-7
            );
        }
        // <F0, Y> = -<C, X> = -(objective - constant).
        assert_relative_eq!(
            s.inner_product(0, &blocks),
            -(obj - p.constant),
            epsilon = 1e-7,
            max_relative = 1e-7
        );
    }

    #[test]
    fn single_constraint_toy() {
        // min x^2 s.t. x^2 = 1 in one variable: hand-built problem.
        use crate::qcqp::{QcqpProblem, QuadForm};
        use crate::sparse::Coo;
        use num_complex::Complex64;
        let mut c = Coo::new(1, 1);
        c.push(0, 0, Complex64::new(1.0, 0.0));
        let mut a = Coo::new(1, 1);
        a.push(0, 0, Complex64::new(1.0, 0.0));
        let p = QcqpProblem {
            representation: crate::Representation::Real,
            n_var: 1,
            n_bus: 1,
            cost: c.to_csr(),
            constant: 0.0,
            equalities: vec![QuadForm { mat: a, rhs: 1.0 }],
            inequalities: vec![],
            sparsity_percent: 0.0,
        };
        let text = export_shor_sdpa(&p).unwrap();
        let s = parse_sdpa(&text).unwrap();
        assert_eq!(s.m, 1);
        assert_eq!(s.block_struct, vec![1]);
        // The relaxation is exact here: X = 1, objective -<F0, X> = 1.
        let blocks = vec![vec![vec![1.0]]];
        assert_relative_eq!(s.inner_product(1, &blocks), 1.0);
        assert_relative_eq!(-s.inner_product(0, &blocks), 1.0);
    }
}
