//! MATPOWER case file parsing and serialization.
//!
//! Reads version-'2' case function bodies: `baseMVA`, `bus`, `gen`,
//! `branch` matrices with an optional `gencost`. Parsing is lossless:
//! out-of-service rows are retained, unknown trailing columns are kept as
//! opaque numerics, and interpretation of conventions such as `tap == 0`
//! is deferred to the network model.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// MATPOWER bus type codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Ref,
    Isolated,
}

impl BusType {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Ref),
            4 => Some(BusType::Isolated),
            _ => None,
        }
    }

    pub fn code(self) -> i64 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Ref => 3,
            BusType::Isolated => 4,
        }
    }
}

/// One row of the bus table. Quantities keep the file's units
/// (MW, MVAr, kV, degrees); per-unit conversion happens in the network
/// model.
#[derive(Debug, Clone, PartialEq)]
pub struct BusRow<T> {
    pub id: i64,
    pub bus_type: BusType,
    pub pd: T,
    pub qd: T,
    pub gs: T,
    pub bs: T,
    pub area: T,
    pub vm: T,
    pub va: T,
    pub base_kv: T,
    pub zone: T,
    pub vmax: T,
    pub vmin: T,
    pub extra: Vec<T>,
}

/// One row of the generator table (first 10 standard columns named).
#[derive(Debug, Clone, PartialEq)]
pub struct GenRow<T> {
    pub bus: i64,
    pub pg: T,
    pub qg: T,
    pub qmax: T,
    pub qmin: T,
    pub vg: T,
    pub mbase: T,
    pub status: i64,
    pub pmax: T,
    pub pmin: T,
    pub extra: Vec<T>,
}

impl<T> GenRow<T> {
    pub fn is_on(&self) -> bool {
        self.status > 0
    }
}

/// One row of the branch table.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRow<T> {
    pub from: i64,
    pub to: i64,
    pub r: T,
    pub x: T,
    pub b: T,
    pub rate_a: T,
    pub rate_b: T,
    pub rate_c: T,
    pub tap: T,
    pub shift: T,
    pub status: i64,
    pub angmin: T,
    pub angmax: T,
    pub extra: Vec<T>,
}

impl<T> BranchRow<T> {
    pub fn is_on(&self) -> bool {
        self.status > 0
    }
}

/// One row of the generator cost table.
#[derive(Debug, Clone, PartialEq)]
pub struct GencostRow<T> {
    /// 1 = piecewise linear, 2 = polynomial.
    pub model: i64,
    pub startup: T,
    pub shutdown: T,
    /// Number of data points (model 1) or coefficients (model 2).
    pub n: usize,
    pub coeffs: Vec<T>,
}

impl<T: Real> GencostRow<T> {
    /// Linear cost coefficient (per MW term) of a polynomial cost row.
    /// Higher degree terms are ignored; returns `None` for piecewise rows.
    pub fn linear_coefficient(&self) -> Option<T> {
        if self.model != 2 || self.n < 2 {
            return None;
        }
        // Polynomial coefficients are stored highest degree first.
        Some(self.coeffs[self.n - 2])
    }

    /// Constant term of a polynomial cost row.
    pub fn constant_term(&self) -> Option<T> {
        if self.model != 2 || self.n < 1 {
            return None;
        }
        Some(self.coeffs[self.n - 1])
    }
}

/// Raw tabular image of a MATPOWER case file.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseData<T> {
    pub case_name: String,
    pub base_mva: T,
    pub bus: Vec<BusRow<T>>,
    pub gen: Vec<GenRow<T>>,
    pub branch: Vec<BranchRow<T>>,
    pub gencost: Vec<GencostRow<T>>,
}

impl<T: Real> CaseData<T> {
    /// Check the case-level invariants: referenced buses exist, exactly
    /// one reference bus among non-isolated buses, consistent bounds,
    /// positive MVA base.
    pub fn validate(&self) -> Result<()> {
        if self.base_mva <= T::zero() {
            return Err(Error::Validation(format!(
                "baseMVA must be positive, got {}",
                self.base_mva
            )));
        }
        let ids: std::collections::HashSet<i64> = self.bus.iter().map(|b| b.id).collect();
        if ids.len() != self.bus.len() {
            return Err(Error::Validation("duplicate bus ids".into()));
        }
        for br in &self.branch {
            if !ids.contains(&br.from) || !ids.contains(&br.to) {
                return Err(Error::Validation(format!(
                    "branch {}-{} references a nonexistent bus",
                    br.from, br.to
                )));
            }
        }
        for g in &self.gen {
            if !ids.contains(&g.bus) {
                return Err(Error::Validation(format!(
                    "generator at nonexistent bus {}",
                    g.bus
                )));
            }
        }
        let nref = self
            .bus
            .iter()
            .filter(|b| b.bus_type == BusType::Ref)
            .count();
        if nref != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one reference bus, found {nref}"
            )));
        }
        for b in &self.bus {
            if b.vmin > b.vmax {
                return Err(Error::Validation(format!(
                    "bus {}: Vmin {} > Vmax {}",
                    b.id, b.vmin, b.vmax
                )));
            }
        }
        for g in self.gen.iter().filter(|g| g.is_on()) {
            if g.pmin > g.pmax || g.qmin > g.qmax {
                return Err(Error::Validation(format!(
                    "generator at bus {}: inconsistent P/Q bounds",
                    g.bus
                )));
            }
        }
        Ok(())
    }
}

/// Set `Pmin = 0` on every generator with negative `Pmin`, returning the
/// number of modified rows. Pumped-storage style units with negative
/// minimum generation are thereby turned into ordinary generating units.
pub fn clamp_negative_pmin<T: Real>(case: &mut CaseData<T>) -> usize {
    let mut count = 0;
    for g in &mut case.gen {
        if g.pmin < T::zero() {
            g.pmin = T::zero();
            count += 1;
        }
    }
    count
}

fn strip_comment(line: &str) -> &str {
    // '%' starts a comment unless it appears inside a quoted string.
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

struct RawTable<T> {
    rows: Vec<(usize, Vec<T>)>, // (line number, values)
}

/// Parse a MATPOWER version-'2' case function body.
pub fn parse_case<T: Real>(text: &str) -> Result<CaseData<T>> {
    let mut case_name = String::new();
    let mut base_mva: Option<T> = None;
    let mut version: Option<String> = None;
    let mut tables: std::collections::HashMap<String, RawTable<T>> = Default::default();

    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, raw)) = lines.next() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            // `function mpc = case_name`
            if let Some(name) = rest.split('=').nth(1) {
                case_name = name.trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.") {
            let (field, value) = match rest.split_once('=') {
                Some((f, v)) => (f.trim(), v.trim()),
                None => continue,
            };
            match field {
                "version" => {
                    version = Some(value.trim_end_matches(';').trim_matches('\'').to_string());
                }
                "baseMVA" => {
                    let v = value.trim_end_matches(';');
                    base_mva = Some(parse_number(v, lineno)?);
                }
                "bus" | "gen" | "branch" | "gencost" => {
                    let mut body = String::new();
                    let mut body_start = lineno;
                    let after = value.strip_prefix('[').unwrap_or(value);
                    let mut done = false;
                    if let Some(end) = after.find(']') {
                        body.push_str(&after[..end]);
                        done = true;
                    } else {
                        body.push_str(after);
                        body.push('\n');
                        body_start = lineno + 1;
                    }
                    let mut rows = Vec::new();
                    let flush = |chunk: &str, at: usize, rows: &mut Vec<(usize, Vec<T>)>| -> Result<()> {
                        for stmt in chunk.split(';') {
                            let stmt = stmt.trim();
                            if stmt.is_empty() {
                                continue;
                            }
                            let mut vals = Vec::new();
                            for tok in stmt.split_whitespace() {
                                vals.push(parse_number(tok, at)?);
                            }
                            rows.push((at, vals));
                        }
                        Ok(())
                    };
                    if done {
                        flush(&body, lineno, &mut rows)?;
                    } else {
                        loop {
                            let Some((jdx, jraw)) = lines.next() else {
                                return Err(Error::Structure(format!(
                                    "unterminated matrix 'mpc.{field}' starting at line {body_start}"
                                )));
                            };
                            let jline = strip_comment(jraw).trim();
                            if let Some(end) = jline.find(']') {
                                flush(&jline[..end], jdx + 1, &mut rows)?;
                                break;
                            }
                            flush(jline, jdx + 1, &mut rows)?;
                        }
                    }
                    tables.insert(field.to_string(), RawTable { rows });
                }
                _ => {
                    // Unknown field: skip, consuming a bracketed block if one opens here.
                    if value.contains('[') && !value.contains(']') {
                        for (_, jraw) in lines.by_ref() {
                            if strip_comment(jraw).contains(']') {
                                break;
                            }
                        }
                    } else if value.contains('{') && !value.contains('}') {
                        for (_, jraw) in lines.by_ref() {
                            if strip_comment(jraw).contains('}') {
                                break;
                            }
                        }
                    }
                }
            }
        }
    }

    match version.as_deref() {
        Some("2") => {}
        Some(v) => return Err(Error::UnsupportedVersion(v.to_string())),
        None => return Err(Error::Structure("missing 'mpc.version' field".into())),
    }
    let base_mva =
        base_mva.ok_or_else(|| Error::Structure("missing 'mpc.baseMVA' field".into()))?;

    let bus_raw = tables
        .remove("bus")
        .ok_or_else(|| Error::Structure("missing mandatory 'mpc.bus' table".into()))?;
    let gen_raw = tables
        .remove("gen")
        .ok_or_else(|| Error::Structure("missing mandatory 'mpc.gen' table".into()))?;
    let branch_raw = tables
        .remove("branch")
        .ok_or_else(|| Error::Structure("missing mandatory 'mpc.branch' table".into()))?;
    let gencost_raw = tables.remove("gencost");

    let mut bus = Vec::with_capacity(bus_raw.rows.len());
    for (line, v) in bus_raw.rows {
        if v.len() < 13 {
            return Err(Error::Parse {
                line,
                message: format!("bus row has {} columns, expected at least 13", v.len()),
            });
        }
        let type_code = as_int(v[1], line, "bus type")?;
        let bus_type = BusType::from_code(type_code).ok_or_else(|| Error::Parse {
            line,
            message: format!("invalid bus type code {type_code}"),
        })?;
        bus.push(BusRow {
            id: as_int(v[0], line, "bus id")?,
            bus_type,
            pd: v[2],
            qd: v[3],
            gs: v[4],
            bs: v[5],
            area: v[6],
            vm: v[7],
            va: v[8],
            base_kv: v[9],
            zone: v[10],
            vmax: v[11],
            vmin: v[12],
            extra: v[13..].to_vec(),
        });
    }

    let mut gen = Vec::with_capacity(gen_raw.rows.len());
    for (line, v) in gen_raw.rows {
        if v.len() < 10 {
            return Err(Error::Parse {
                line,
                message: format!("gen row has {} columns, expected at least 10", v.len()),
            });
        }
        gen.push(GenRow {
            bus: as_int(v[0], line, "gen bus")?,
            pg: v[1],
            qg: v[2],
            qmax: v[3],
            qmin: v[4],
            vg: v[5],
            mbase: v[6],
            status: as_int(v[7], line, "gen status")?,
            pmax: v[8],
            pmin: v[9],
            extra: v[10..].to_vec(),
        });
    }

    let mut branch = Vec::with_capacity(branch_raw.rows.len());
    for (line, v) in branch_raw.rows {
        if v.len() < 13 {
            return Err(Error::Parse {
                line,
                message: format!("branch row has {} columns, expected at least 13", v.len()),
            });
        }
        branch.push(BranchRow {
            from: as_int(v[0], line, "branch from bus")?,
            to: as_int(v[1], line, "branch to bus")?,
            r: v[2],
            x: v[3],
            b: v[4],
            rate_a: v[5],
            rate_b: v[6],
            rate_c: v[7],
            tap: v[8],
            shift: v[9],
            status: as_int(v[10], line, "branch status")?,
            angmin: v[11],
            angmax: v[12],
            extra: v[13..].to_vec(),
        });
    }

    let mut gencost = Vec::new();
    if let Some(raw) = gencost_raw {
        for (line, v) in raw.rows {
            if v.len() < 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("gencost row has {} columns, expected at least 4", v.len()),
                });
            }
            let model = as_int(v[0], line, "gencost model")?;
            if model != 1 && model != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid gencost model {model}"),
                });
            }
            let n = as_int(v[3], line, "gencost n")? as usize;
            let expected = if model == 1 { 2 * n } else { n };
            if v.len() != 4 + expected {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "gencost row has {} value columns, expected {expected}",
                        v.len() - 4
                    ),
                });
            }
            gencost.push(GencostRow {
                model,
                startup: v[1],
                shutdown: v[2],
                n,
                coeffs: v[4..].to_vec(),
            });
        }
    }

    Ok(CaseData {
        case_name,
        base_mva,
        bus,
        gen,
        branch,
        gencost,
    })
}

fn parse_number<T: Real>(tok: &str, line: usize) -> Result<T> {
    tok.parse::<T>().map_err(|_| Error::Parse {
        line,
        message: format!("invalid number '{tok}'"),
    })
}

fn as_int<T: Real>(v: T, line: usize, what: &str) -> Result<i64> {
    let f = v.to_f64_lossy();
    if f.fract() != 0.0 || !f.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{what} must be an integer, got {f}"),
        });
    }
    Ok(f as i64)
}

/// Serialize a case back to MATPOWER text. `parse_case(write_case(c))`
/// reproduces `c` exactly: numbers are printed with shortest
/// round-trippable representation.
pub fn write_case<T: Real>(case: &CaseData<T>) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    let name = if case.case_name.is_empty() {
        "mpc"
    } else {
        &case.case_name
    };
    writeln!(out, "function mpc = {name}").unwrap();
    writeln!(out, "mpc.version = '2';").unwrap();
    writeln!(out, "mpc.baseMVA = {};", fmt_num(case.base_mva)).unwrap();

    writeln!(out, "mpc.bus = [").unwrap();
    for b in &case.bus {
        let mut cols = vec![
            b.id.to_string(),
            b.bus_type.code().to_string(),
            fmt_num(b.pd),
            fmt_num(b.qd),
            fmt_num(b.gs),
            fmt_num(b.bs),
            fmt_num(b.area),
            fmt_num(b.vm),
            fmt_num(b.va),
            fmt_num(b.base_kv),
            fmt_num(b.zone),
            fmt_num(b.vmax),
            fmt_num(b.vmin),
        ];
        cols.extend(b.extra.iter().map(|&v| fmt_num(v)));
        writeln!(out, "\t{};", cols.join("\t")).unwrap();
    }
    writeln!(out, "];").unwrap();

    writeln!(out, "mpc.gen = [").unwrap();
    for g in &case.gen {
        let mut cols = vec![
            g.bus.to_string(),
            fmt_num(g.pg),
            fmt_num(g.qg),
            fmt_num(g.qmax),
            fmt_num(g.qmin),
            fmt_num(g.vg),
            fmt_num(g.mbase),
            g.status.to_string(),
            fmt_num(g.pmax),
            fmt_num(g.pmin),
        ];
        cols.extend(g.extra.iter().map(|&v| fmt_num(v)));
        writeln!(out, "\t{};", cols.join("\t")).unwrap();
    }
    writeln!(out, "];").unwrap();

    writeln!(out, "mpc.branch = [").unwrap();
    for b in &case.branch {
        let mut cols = vec![
            b.from.to_string(),
            b.to.to_string(),
            fmt_num(b.r),
            fmt_num(b.x),
            fmt_num(b.b),
            fmt_num(b.rate_a),
            fmt_num(b.rate_b),
            fmt_num(b.rate_c),
            fmt_num(b.tap),
            fmt_num(b.shift),
            b.status.to_string(),
            fmt_num(b.angmin),
            fmt_num(b.angmax),
        ];
        cols.extend(b.extra.iter().map(|&v| fmt_num(v)));
        writeln!(out, "\t{};", cols.join("\t")).unwrap();
    }
    writeln!(out, "];").unwrap();

    if !case.gencost.is_empty() {
        writeln!(out, "mpc.gencost = [").unwrap();
        for g in &case.gencost {
            let mut cols = vec![
                g.model.to_string(),
                fmt_num(g.startup),
                fmt_num(g.shutdown),
                g.n.to_string(),
            ];
            cols.extend(g.coeffs.iter().map(|&v| fmt_num(v)));
            writeln!(out, "\t{};", cols.join("\t")).unwrap();
        }
        writeln!(out, "];").unwrap();
    }
    out
}

fn fmt_num<T: Real>(v: T) -> String {
    if v == T::infinity() {
        "Inf".to_string()
    } else if v == T::neg_infinity() {
        "-Inf".to_string()
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = "\
function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t380\t1\t1.1\t0.9;
\t2\t1\t100\t30\t0\t0\t1\t1\t0\t380\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t300\t-300\t1\t100\t1\t400\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t3\t0\t1\t0;
];
";

    #[test]
    fn parses_minimal_two_bus_case() {
        let case: CaseData<f64> = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.case_name, "two_bus");
        assert_eq!(case.base_mva, 100.0);
        assert_eq!(case.bus.len(), 2);
        assert_eq!(case.gen.len(), 1);
        assert_eq!(case.branch.len(), 1);
        assert_eq!(case.bus[0].bus_type, BusType::Ref);
        assert_eq!(case.bus[1].pd, 100.0);
        assert_eq!(case.branch[0].x, 0.1);
        assert_eq!(case.gencost[0].linear_coefficient(), Some(1.0));
        case.validate().unwrap();
    }

    #[test]
    fn comment_inside_matrix_is_ignored() {
        // Oracle: strip comment lines with a separate text pass and
        // compare the two parses field for field.
        let with_comment = TWO_BUS.replace(
            "mpc.bus = [\n",
            "mpc.bus = [\n% interior comment line\n",
        );
        let stripped: String = with_comment
            .lines()
            .filter(|l| !l.trim_start().starts_with('%'))
            .map(|l| format!("{l}\n"))
            .collect();
        let a: CaseData<f64> = parse_case(&with_comment).unwrap();
        let b: CaseData<f64> = parse_case(&stripped).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let bad = TWO_BUS.replace(
            "\t1\t2\t0.01\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;",
            "\t1\t2\t0.01\t0.1;",
        );
        match parse_case::<f64>(&bad) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 12);
                assert!(message.contains("branch row"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_table_is_structural_error() {
        let start = TWO_BUS.find("mpc.gen = [").unwrap();
        let end = TWO_BUS[start..].find("];").unwrap() + start + 3;
        let without_gen = format!("{}{}", &TWO_BUS[..start], &TWO_BUS[end..]);
        match parse_case::<f64>(&without_gen) {
            Err(Error::Structure(msg)) => assert!(msg.contains("gen")),
            other => panic!("expected structural error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let v1 = TWO_BUS.replace("mpc.version = '2';", "mpc.version = '1';");
        match parse_case::<f64>(&v1) {
            Err(Error::UnsupportedVersion(v)) => assert_eq!(v, "1"),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn tap_zero_is_preserved_raw() {
        let case: CaseData<f64> = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.branch[0].tap, 0.0);
        let rt: CaseData<f64> = parse_case(&write_case(&case)).unwrap();
        assert_eq!(rt.branch[0].tap, 0.0);
    }

    #[test]
    fn clamp_negative_pmin_counts_and_is_idempotent() {
        let mut case: CaseData<f64> = parse_case(TWO_BUS).unwrap();
        case.gen[0].pmin = -50.0;
        let n = clamp_negative_pmin(&mut case);
        assert_eq!(n, 1);
        assert_eq!(case.gen[0].pmin, 0.0);
        let n2 = clamp_negative_pmin(&mut case);
        assert_eq!(n2, 0);
    }

    #[test]
    fn infinities_round_trip() {
        let mut case: CaseData<f64> = parse_case(TWO_BUS).unwrap();
        case.gen[0].qmax = f64::INFINITY;
        case.gen[0].qmin = f64::NEG_INFINITY;
        let rt: CaseData<f64> = parse_case(&write_case(&case)).unwrap();
        assert_eq!(rt, case);
    }
}

#[cfg(test)]
pub(crate) use tests::TWO_BUS;
