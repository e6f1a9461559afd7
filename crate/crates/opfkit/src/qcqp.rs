//! Conversion of the AC-OPF into a standard sparse QCQP
//!
//!   min  x' C x + c
//!   s.t. x' A_k x  =  a_k      k = 1..nEQ
//!        x' B_k x  <= b_k      k = 1..nINEQ
//!
//! over complex bus voltages (Hermitian matrices) or their real
//! embedding (symmetric matrices, x = [Re v; Im v]).
//!
//! Power rows are scaled to physical units (MW / MVAr); voltage and
//! current rows stay in per-unit. Current limits replace apparent-power
//! limits so every constraint is quadratic.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::matpower::BusType;
use crate::network::{build_admittance, Network};
use crate::scalar::Real;
use crate::sparse::{Coo, Csr};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Hermitian matrices over complex voltages, n_var = nbus.
    Complex,
    /// Real symmetric matrices over [Re v; Im v], n_var = 2 nbus.
    Real,
}

impl std::str::FromStr for Representation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "complex" => Ok(Representation::Complex),
            "real" => Ok(Representation::Real),
            other => Err(format!(
                "unknown representation '{other}' (expected complex or real)"
            )),
        }
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Representation::Complex => "complex",
            Representation::Real => "real",
        })
    }
}

/// One quadratic form with its right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm<T> {
    /// Full (both triangles) Hermitian/symmetric matrix as a canonical
    /// sorted triplet list. In real mode all imaginary parts are zero.
    /// Triplets rather than CSR: a large case has tens of thousands of
    /// these, each with a handful of entries, and per-matrix row
    /// pointers of length n_var would dominate memory.
    pub mat: Coo<Complex<T>>,
    pub rhs: T,
}

/// The OPF in standard QCQP shape.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpProblem<T> {
    pub representation: Representation,
    pub n_var: usize,
    pub n_bus: usize,
    /// Cost matrix C; value is in MW at a feasible point.
    pub cost: Csr<Complex<T>>,
    /// Constant cost term c, MW.
    pub constant: T,
    pub equalities: Vec<QuadForm<T>>,
    pub inequalities: Vec<QuadForm<T>>,
    /// Off-diagonal fill of the aggregate sparsity pattern, percent.
    pub sparsity_percent: f64,
}

impl<T: Real> QcqpProblem<T> {
    pub fn n_eq(&self) -> usize {
        self.equalities.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.inequalities.len()
    }

    /// Variable indices carrying bus `k`: one in complex mode, the
    /// real/imaginary pair in real mode.
    pub fn variable_indices(&self, bus: usize) -> Vec<usize> {
        match self.representation {
            Representation::Complex => vec![bus],
            Representation::Real => vec![bus, bus + self.n_bus],
        }
    }

    /// Map complex bus voltages to a candidate vector for this
    /// representation.
    pub fn candidate_from_voltages(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if v.len() != self.n_bus {
            return Err(Error::Dimension(format!(
                "{} voltages for {} buses",
                v.len(),
                self.n_bus
            )));
        }
        Ok(match self.representation {
            Representation::Complex => v.to_vec(),
            Representation::Real => v
                .iter()
                .map(|c| Complex::new(c.re, T::zero()))
                .chain(v.iter().map(|c| Complex::new(c.im, T::zero())))
                .collect(),
        })
    }
}

/// `x' M x` for Hermitian `M`; the result is real up to rounding.
fn quad_value<T: Real>(
    entries: impl Iterator<Item = (usize, usize, Complex<T>)>,
    x: &[Complex<T>],
) -> T {
    let mut acc = Complex::new(T::zero(), T::zero());
    for (i, j, v) in entries {
        acc += x[i].conj() * v * x[j];
    }
    acc.re
}

/// Evaluate objective, equality residuals `x'A_k x - a_k`, and
/// inequality slacks `b_k - x'B_k x` at a candidate.
pub fn evaluate<T: Real>(
    p: &QcqpProblem<T>,
    x: &[Complex<T>],
) -> Result<(T, Vec<T>, Vec<T>)> {
    if x.len() != p.n_var {
        return Err(Error::Dimension(format!(
            "candidate length {} for n_var {}",
            x.len(),
            p.n_var
        )));
    }
    let obj = quad_value(p.cost.iter(), x) + p.constant;
    let res = p
        .equalities
        .iter()
        .map(|f| quad_value(f.mat.iter(), x) - f.rhs)
        .collect();
    let slack = p
        .inequalities
        .iter()
        .map(|f| f.rhs - quad_value(f.mat.iter(), x))
        .collect();
    Ok((obj, res, slack))
}

/// Hermitian split of the complex form `S = (row . v)^* v_k`: returns
/// `(P, Q)` with `v' P v = Re S` and `v' Q v = Im S`.
pub(crate) fn hermitian_split<T: Real>(
    row: impl Iterator<Item = (usize, Complex<T>)>,
    n: usize,
    k: usize,
) -> (Coo<Complex<T>>, Coo<Complex<T>>) {
    let half = T::of_f64(0.5);
    let mut p = Coo::new(n, n);
    let mut q = Coo::new(n, n);
    // S = v' (row' e_k e_k') v; the split puts conj(row_i)/2 in column k
    // and row_i/2 in row k.
    for (i, ri) in row {
        let c = ri.conj() * Complex::new(half, T::zero());
        let r = ri * Complex::new(half, T::zero());
        p.push(i, k, c);
        p.push(k, i, r);
        let mi = Complex::new(T::zero(), -half);
        q.push(i, k, ri.conj() * mi);
        q.push(k, i, ri * -mi);
    }
    (p, q)
}

/// Injection matrix pair at bus `k`: `(P_k, Q_k)` with
/// `v' P_k v = Re S_k`, `v' Q_k v = Im S_k` where `S = diag(v) (Y v)*`.
fn injection_forms<T: Real>(
    ybus: &Csr<Complex<T>>,
    n: usize,
    k: usize,
) -> (Coo<Complex<T>>, Coo<Complex<T>>) {
    hermitian_split(ybus.row(k), n, k)
}

fn scaled<T: Real>(m: &Coo<Complex<T>>, s: T) -> Coo<Complex<T>> {
    let mut out = Coo::new(m.nrows(), m.ncols());
    for &(i, j, v) in m.entries() {
        out.push(i, j, v * Complex::new(s, T::zero()));
    }
    out.canonicalize();
    out
}

/// Build the QCQP from a validated network.
///
/// Constraint layout:
/// - equalities: per PQ bus in bus order, active then reactive balance
///   (MW / MVAr units);
/// - inequalities: voltage rows per bus (upper then lower, pu), then
///   current rows per rated branch (from end, to end, pu), then
///   generation rows per non-PQ bus (P upper, Q upper, P lower,
///   Q lower, MW / MVAr).
pub fn build_qcqp<T: Real>(net: &Network<T>, repr: Representation) -> QcqpProblem<T> {
    let n = net.n_bus();
    let base = net.base_mva;
    let adm = build_admittance(net);

    // Scheduled generation and aggregate bounds per bus, pu.
    let mut pg_sched = vec![T::zero(); n];
    let mut qg_sched = vec![T::zero(); n];
    let mut pmin = vec![T::zero(); n];
    let mut pmax = vec![T::zero(); n];
    let mut qmin = vec![T::zero(); n];
    let mut qmax = vec![T::zero(); n];
    for g in &net.gens {
        pg_sched[g.bus] += g.pg;
        qg_sched[g.bus] += g.qg;
        pmin[g.bus] += g.pmin;
        pmax[g.bus] += g.pmax;
        qmin[g.bus] += g.qmin;
        qmax[g.bus] += g.qmax;
    }

    // The objective is total generation in MW (losses minimization):
    // active injection plus load at the free buses, scheduled output at
    // the fixed ones.
    let mut cost = Coo::new(n, n);
    let mut constant = T::zero();
    let mut equalities = Vec::new();
    let mut inequalities = Vec::new();

    // Power injection forms and the objective / equality split by bus
    // type.
    let mut gen_rows: Vec<QuadForm<T>> = Vec::new();
    for k in 0..n {
        let (p, q) = injection_forms(&adm.ybus, n, k);
        let is_pq = net.buses[k].bus_type == BusType::Pq;
        if is_pq {
            equalities.push(QuadForm {
                mat: scaled(&p, base),
                rhs: (pg_sched[k] - net.buses[k].pd) * base,
            });
            equalities.push(QuadForm {
                mat: scaled(&q, base),
                rhs: (qg_sched[k] - net.buses[k].qd) * base,
            });
            // Scheduled output of units sitting on PQ buses is fixed by
            // the balance equality; it still contributes to the cost.
            constant += pg_sched[k] * base;
        } else {
            for &(i, j, v) in p.entries() {
                cost.push(i, j, v * Complex::new(base, T::zero()));
            }
            constant += net.buses[k].pd * base;
            gen_rows.push(QuadForm {
                mat: scaled(&p, base),
                rhs: (pmax[k] - net.buses[k].pd) * base,
            });
            gen_rows.push(QuadForm {
                mat: scaled(&q, base),
                rhs: (qmax[k] - net.buses[k].qd) * base,
            });
            gen_rows.push(QuadForm {
                mat: scaled(&p, -base),
                rhs: (net.buses[k].pd - pmin[k]) * base,
            });
            gen_rows.push(QuadForm {
                mat: scaled(&q, -base),
                rhs: (net.buses[k].qd - qmin[k]) * base,
            });
        }
    }

    // Voltage magnitude rows.
    for (k, b) in net.buses.iter().enumerate() {
        let mut up = Coo::new(n, n);
        up.push(k, k, Complex::new(T::one(), T::zero()));
        inequalities.push(QuadForm {
            mat: up,
            rhs: b.vmax * b.vmax,
        });
        let mut lo = Coo::new(n, n);
        lo.push(k, k, Complex::new(-T::one(), T::zero()));
        inequalities.push(QuadForm {
            mat: lo,
            rhs: -(b.vmin * b.vmin),
        });
    }

    // Current magnitude rows for rated branches, both ends.
    for (br, blk) in net.branches.iter().zip(&adm.branch) {
        if br.rate <= T::zero() {
            continue;
        }
        let lim2 = br.rate * br.rate;
        for (a, ya, b, yb) in [
            (br.from, blk.yff, br.to, blk.yft),
            (br.to, blk.ytf, br.from, blk.ytt),
        ] {
            // |I|^2 = v' r' r v with row r = ya e_a + yb e_b.
            let mut m = Coo::new(n, n);
            m.push(a, a, ya.conj() * ya);
            m.push(a, b, ya.conj() * yb);
            m.push(b, a, yb.conj() * ya);
            m.push(b, b, yb.conj() * yb);
            m.canonicalize();
            inequalities.push(QuadForm { mat: m, rhs: lim2 });
        }
    }

    inequalities.extend(gen_rows);

    // Aggregate off-diagonal fill: each connected bus pair contributes
    // 4 distinct off-diagonal monomials in the real embedding of size
    // N = 2 nbus.
    let mut pairs: std::collections::BTreeSet<(usize, usize)> = Default::default();
    for br in &net.branches {
        if br.from != br.to {
            pairs.insert((br.from.min(br.to), br.from.max(br.to)));
        }
    }
    let big_n = 2.0 * n as f64;
    let sparsity_percent = 100.0 * 4.0 * pairs.len() as f64 / (big_n * (big_n - 1.0) / 2.0);

    let mut problem = QcqpProblem {
        representation: Representation::Complex,
        n_var: n,
        n_bus: n,
        cost: cost.to_csr(),
        constant,
        equalities,
        inequalities,
        sparsity_percent,
    };
    if repr == Representation::Real {
        problem = realify(&problem);
    }
    problem
}

/// Real embedding of a Hermitian form: `M -> [[Re M, -Im M], [Im M,
/// Re M]]` so that `[Re v; Im v]' M_r [Re v; Im v] = v' M v`.
fn embed_entries<T: Real>(
    entries: impl Iterator<Item = (usize, usize, Complex<T>)>,
    n: usize,
) -> Coo<Complex<T>> {
    let mut out = Coo::new(2 * n, 2 * n);
    for (i, j, v) in entries {
        let re = Complex::new(v.re, T::zero());
        out.push(i, j, re);
        out.push(i + n, j + n, re);
        if v.im != T::zero() {
            let im = Complex::new(v.im, T::zero());
            out.push(i, j + n, -im);
            out.push(i + n, j, im);
        }
    }
    out.canonicalize();
    out
}

/// CSR variant of [`embed_entries`] for one-off matrices.
pub(crate) fn embed<T: Real>(m: &Csr<Complex<T>>, n: usize) -> Csr<Complex<T>> {
    embed_entries(m.iter(), n).to_csr()
}

/// Convert a complex-Hermitian problem to the real-symmetric embedding.
pub fn realify<T: Real>(p: &QcqpProblem<T>) -> QcqpProblem<T> {
    assert_eq!(p.representation, Representation::Complex);
    let n = p.n_bus;
    QcqpProblem {
        representation: Representation::Real,
        n_var: 2 * n,
        n_bus: n,
        cost: embed(&p.cost, n),
        constant: p.constant,
        equalities: p
            .equalities
            .iter()
            .map(|f| QuadForm {
                mat: embed_entries(f.mat.iter(), n),
                rhs: f.rhs,
            })
            .collect(),
        inequalities: p
            .inequalities
            .iter()
            .map(|f| QuadForm {
                mat: embed_entries(f.mat.iter(), n),
                rhs: f.rhs,
            })
            .collect(),
        sparsity_percent: p.sparsity_percent,
    }
}

/// Serialize to the documented sparse triplet format (see
/// `docs/qcqp_format.md`). Upper triangle only, 0-indexed, full float
/// precision.
pub fn export_qcqp<T: Real>(p: &QcqpProblem<T>) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "qcqp 1").unwrap();
    writeln!(out, "representation {}", p.representation).unwrap();
    writeln!(out, "nbus {}", p.n_bus).unwrap();
    writeln!(out, "nvar {}", p.n_var).unwrap();
    writeln!(out, "neq {}", p.n_eq()).unwrap();
    writeln!(out, "nineq {}", p.n_ineq()).unwrap();
    write_matrix(&mut out, "C", p.cost.iter(), p.constant);
    for (k, f) in p.equalities.iter().enumerate() {
        write_matrix(&mut out, &format!("A{k}"), f.mat.iter(), f.rhs);
    }
    for (k, f) in p.inequalities.iter().enumerate() {
        write_matrix(&mut out, &format!("B{k}"), f.mat.iter(), f.rhs);
    }
    out
}

fn write_matrix<T: Real>(
    out: &mut String,
    name: &str,
    entries: impl Iterator<Item = (usize, usize, Complex<T>)>,
    rhs: T,
) {
    use std::fmt::Write;
    let upper: Vec<(usize, usize, Complex<T>)> =
        entries.filter(|&(i, j, _)| i <= j).collect();
    writeln!(out, "matrix {name} {} {}", upper.len(), fmt_real(rhs)).unwrap();
    for (i, j, v) in upper {
        writeln!(out, "{i} {j} {} {}", fmt_real(v.re), fmt_real(v.im)).unwrap();
    }
}

fn fmt_real<T: Real>(v: T) -> String {
    if v == T::infinity() {
        "Inf".into()
    } else if v == T::neg_infinity() {
        "-Inf".into()
    } else {
        format!("{v}")
    }
}

/// Parse the triplet format back into a problem. The mirrored lower
/// triangle is reconstructed by Hermitian symmetry.
pub fn parse_qcqp<T: Real>(text: &str) -> Result<QcqpProblem<T>> {
    let mut lines = text.lines().enumerate();
    let mut header: std::collections::HashMap<String, String> = Default::default();
    let mut first_matrix: Option<(usize, String)> = None;
    for (idx, line) in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("matrix ") {
            first_matrix = Some((idx, line.to_string()));
            break;
        }
        let (k, v) = line.split_once(' ').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: format!("malformed header line '{line}'"),
        })?;
        header.insert(k.to_string(), v.trim().to_string());
    }
    let get = |k: &str| -> Result<&String> {
        header
            .get(k)
            .ok_or_else(|| Error::Structure(format!("missing '{k}' header")))
    };
    if get("qcqp")? != "1" {
        return Err(Error::UnsupportedVersion(get("qcqp")?.clone()));
    }
    let representation: Representation = get("representation")?
        .parse()
        .map_err(Error::Structure)?;
    let n_bus: usize = parse_field(get("nbus")?)?;
    let n_var: usize = parse_field(get("nvar")?)?;
    let n_eq: usize = parse_field(get("neq")?)?;
    let n_ineq: usize = parse_field(get("nineq")?)?;

    let mut sections: Vec<(String, Coo<Complex<T>>, T)> = Vec::new();
    let mut pending = first_matrix;
    loop {
        let Some((hline_idx, hline)) = pending.take() else {
            break;
        };
        let parts: Vec<&str> = hline.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: hline_idx + 1,
                message: format!("malformed matrix header '{hline}'"),
            });
        }
        let name = parts[1].to_string();
        let nnz: usize = parse_field(parts[2])?;
        let rhs: T = parse_real(parts[3], hline_idx + 1)?;
        let mut coo = Coo::new(n_var, n_var);
        let mut read = 0;
        while read < nnz {
            let Some((idx, line)) = lines.next() else {
                return Err(Error::Structure(format!(
                    "truncated matrix section '{name}'"
                )));
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let p: Vec<&str> = line.split_whitespace().collect();
            if p.len() != 4 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("malformed entry '{line}'"),
                });
            }
            let i: usize = parse_field(p[0])?;
            let j: usize = parse_field(p[1])?;
            let re: T = parse_real(p[2], idx + 1)?;
            let im: T = parse_real(p[3], idx + 1)?;
            let v = Complex::new(re, im);
            coo.push(i, j, v);
            if i != j {
                coo.push(j, i, v.conj());
            }
            read += 1;
        }
        coo.canonicalize();
        sections.push((name, coo, rhs));
        // Find the next matrix header.
        for (idx, line) in lines.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            pending = Some((idx, line.to_string()));
            break;
        }
    }

    if sections.len() != 1 + n_eq + n_ineq {
        return Err(Error::Structure(format!(
            "expected {} matrix sections, found {}",
            1 + n_eq + n_ineq,
            sections.len()
        )));
    }
    let mut it = sections.into_iter();
    let (cname, cost, constant) = it.next().unwrap();
    if cname != "C" {
        return Err(Error::Structure(format!(
            "first matrix section must be C, found '{cname}'"
        )));
    }
    let equalities = it
        .by_ref()
        .take(n_eq)
        .map(|(_, mat, rhs)| QuadForm { mat, rhs })
        .collect();
    let inequalities = it.map(|(_, mat, rhs)| QuadForm { mat, rhs }).collect();
    Ok(QcqpProblem {
        representation,
        n_var,
        n_bus,
        cost: cost.to_csr(),
        constant,
        equalities,
        inequalities,
        sparsity_percent: 0.0,
    })
}

fn parse_field<F: std::str::FromStr>(s: &str) -> Result<F> {
    s.parse().map_err(|_| {
        Error::Structure(format!("invalid numeric field '{s}'"))
    })
}

fn parse_real<T: Real>(s: &str, line: usize) -> Result<T> {
    match s {
        "Inf" => Ok(T::infinity()),
        "-Inf" => Ok(T::neg_infinity()),
        _ => s.parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid number '{s}'"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpower::{parse_case, TWO_BUS};
    use crate::network::build_network;
    use crate::powerflow::{solve_powerflow, Start};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn two_bus_net() -> Network<f64> {
        build_network(&parse_case::<f64>(TWO_BUS).unwrap()).unwrap()
    }

    #[test]
    fn counting_rules_on_two_bus() {
        let net = two_bus_net();
        let p = build_qcqp(&net, Representation::Real);
        // 1 PQ bus -> 2 equalities; 2 buses * 2 voltage rows + 0 current
        // rows (no rating) + 1 non-PQ bus * 4 generation rows.
        assert_eq!(p.n_var, 4);
        assert_eq!(p.n_eq(), 2);
        assert_eq!(p.n_ineq(), 8);
    }

    #[test]
    fn powerflow_candidate_satisfies_equalities_and_objective() {
        let net = two_bus_net();
        let sol = solve_powerflow(&net, Start::Flat, 1e-12, 30);
        assert!(sol.converged);
        for repr in [Representation::Complex, Representation::Real] {
            let p = build_qcqp(&net, repr);
            let x = p.candidate_from_voltages(&sol.v).unwrap();
            let (obj, res, _) = evaluate(&p, &x).unwrap();
            for r in &res {
                assert!(r.abs() < 1e-8, "equality residual {r}");
            }
            assert_relative_eq!(obj, sol.objective, epsilon = 1e-8);
        }
    }

    #[test]
    fn representations_agree_on_random_candidates() {
        use rand::{Rng, SeedableRng};
        let net = two_bus_net();
        let pc = build_qcqp(&net, Representation::Complex);
        let pr = build_qcqp(&net, Representation::Real);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let v: Vec<Complex64> = (0..2)
                .map(|_| Complex64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
                .collect();
            let xc = pc.candidate_from_voltages(&v).unwrap();
            let xr = pr.candidate_from_voltages(&v).unwrap();
            let (oc, rc, sc) = evaluate(&pc, &xc).unwrap();
            let (or_, rr, sr) = evaluate(&pr, &xr).unwrap();
            assert_relative_eq!(oc, or_, epsilon = 1e-12, max_relative = 1e-12);
            for (a, b) in rc.iter().zip(&rr) {
                assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
            }
            for (a, b) in sc.iter().zip(&sr) {
                assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn zero_candidate_reads_off_constants() {
        let net = two_bus_net();
        let p = build_qcqp(&net, Representation::Real);
        let x = vec![Complex64::new(0.0, 0.0); p.n_var];
        let (obj, res, slack) = evaluate(&p, &x).unwrap();
        assert_relative_eq!(obj, p.constant);
        for (r, f) in res.iter().zip(&p.equalities) {
            assert_relative_eq!(*r, -f.rhs);
        }
        for (s, f) in slack.iter().zip(&p.inequalities) {
            assert_relative_eq!(*s, f.rhs);
        }
    }

    #[test]
    fn export_roundtrip_preserves_evaluation() {
        use rand::{Rng, SeedableRng};
        let mut net = two_bus_net();
        net.branches[0].rate = 2.0; // exercise current rows
        net.branches[0].shift = 0.02; // exercise complex off-diagonals
        for repr in [Representation::Complex, Representation::Real] {
            let p = build_qcqp(&net, repr);
            let text = export_qcqp(&p);
            let q: QcqpProblem<f64> = parse_qcqp(&text).unwrap();
            assert_eq!(q.n_var, p.n_var);
            assert_eq!(q.n_eq(), p.n_eq());
            assert_eq!(q.n_ineq(), p.n_ineq());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
            for _ in 0..20 {
                let v: Vec<Complex64> = (0..2)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                let x = p.candidate_from_voltages(&v).unwrap();
                let (o1, r1, s1) = evaluate(&p, &x).unwrap();
                let (o2, r2, s2) = evaluate(&q, &x).unwrap();
                assert_relative_eq!(o1, o2, epsilon = 1e-12);
                for (a, b) in r1.iter().zip(&r2) {
                    assert_relative_eq!(a, b, epsilon = 1e-12);
                }
                for (a, b) in s1.iter().zip(&s2) {
                    assert_relative_eq!(a, b, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn export_counts_matrix_sections() {
        let net = two_bus_net();
        let p = build_qcqp(&net, Representation::Real);
        let text = export_qcqp(&p);
        let sections = text
            .lines()
            .filter(|l| l.starts_with("matrix "))
            .count();
        assert_eq!(sections, 1 + p.n_eq() + p.n_ineq());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = two_bus_net();
        let p = build_qcqp(&net, Representation::Real);
        let x = vec![Complex64::new(0.0, 0.0); 3];
        assert!(matches!(
            evaluate(&p, &x),
            Err(crate::Error::Dimension(_))
        ));
    }
}
