//! Batch pipeline over case files and rendering of the result tables.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dcopf::{dcopf_no_flow_limits, gap_percent, Gap};
use crate::error::Result;
use crate::ipm::IpmOptions;
use crate::matpower::parse_case;
use crate::network::build_network;
use crate::powerflow::{solve_powerflow, FlowMode, Start};
use crate::qcqp::{build_qcqp, export_qcqp, Representation};
use crate::sdpa::export_shor_sdpa;
use crate::stats::{compute_stats, emit_profiles};

/// Which part of the pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Stats,
    Bounds,
    Qcqp,
    Sdpa,
    Profiles,
    All,
}

impl Stage {
    fn wants_bounds(self) -> bool {
        matches!(self, Stage::Bounds | Stage::All)
    }
    fn wants_qcqp(self) -> bool {
        matches!(self, Stage::Qcqp | Stage::Sdpa | Stage::All)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub stage: Stage,
    pub flow_mode: FlowMode,
    pub representation: Representation,
    pub out_dir: Option<PathBuf>,
    pub ipm: IpmOptions,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stage: Stage::All,
            flow_mode: FlowMode::None,
            representation: Representation::Real,
            out_dir: None,
            ipm: IpmOptions::default(),
            jobs: 0,
        }
    }
}

/// Per-case result row aggregating statistics, bounds and QCQP sizes.
#[derive(Debug, Clone, Serialize)]
pub struct BoundLedger {
    pub case_name: String,
    pub n_bus: usize,
    pub n_gen: usize,
    pub n_branch: usize,
    pub n_transformer: usize,
    pub voltage_level_histogram: [usize; 5],
    pub n_neg_r: usize,
    pub n_neg_x: usize,
    pub total_load_mw: f64,
    pub dcopf_lb_mw: Option<f64>,
    pub lb_valid: bool,
    pub pf_objective_mw: Option<f64>,
    /// Local OPF objective for the flow mode the pipeline ran with.
    pub acopf_objective_mw: Option<f64>,
    pub acopf_flow_mode: String,
    pub acopf_degraded: bool,
    /// "1.47" style percentage or "not valid".
    pub gap: Option<String>,
    pub n_var: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
    pub sparsity_percent: f64,
    pub warnings: Vec<String>,
}

/// Outcome of one case: a ledger row or an isolated error.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome")]
pub enum CaseOutcome {
    Ok(BoundLedger),
    Err { case: String, message: String },
}

fn process_case(path: &Path, config: &PipelineConfig) -> Result<BoundLedger> {
    let text = std::fs::read_to_string(path)?;
    let case = parse_case::<f64>(&text)?;
    let stats = compute_stats(&case);
    let name = if stats.case_name.is_empty() {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    } else {
        stats.case_name.clone()
    };

    let net = build_network(&case)?;

    let mut ledger = BoundLedger {
        case_name: name.clone(),
        n_bus: stats.n_bus,
        n_gen: stats.n_gen,
        n_branch: stats.n_branch,
        n_transformer: stats.n_transformer,
        voltage_level_histogram: stats.voltage_level_histogram,
        n_neg_r: stats.n_neg_r,
        n_neg_x: stats.n_neg_x,
        total_load_mw: stats.total_load,
        dcopf_lb_mw: None,
        lb_valid: stats.n_neg_r == 0,
        pf_objective_mw: None,
        acopf_objective_mw: None,
        acopf_flow_mode: config.flow_mode.to_string(),
        acopf_degraded: false,
        gap: None,
        n_var: 0,
        n_eq: 0,
        n_ineq: 0,
        sparsity_percent: 0.0,
        warnings: net.warnings.clone(),
    };

    let out = |suffix: &str, content: &str| -> Result<()> {
        if let Some(dir) = &config.out_dir {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{name}{suffix}")), content)?;
        }
        Ok(())
    };

    if matches!(config.stage, Stage::Profiles | Stage::All) {
        out("_profiles.csv", &emit_profiles(&stats))?;
    }

    if config.stage.wants_qcqp() {
        let problem = build_qcqp(&net, config.representation);
        ledger.n_var = problem.n_var;
        ledger.n_eq = problem.n_eq();
        ledger.n_ineq = problem.n_ineq();
        ledger.sparsity_percent = problem.sparsity_percent;
        if matches!(config.stage, Stage::Qcqp | Stage::All) {
            out(".qcqp", &export_qcqp(&problem))?;
        }
        if matches!(config.stage, Stage::Sdpa | Stage::All) {
            let real = match problem.representation {
                Representation::Real => problem,
                Representation::Complex => crate::qcqp::realify(&problem),
            };
            out(".dat-s", &export_shor_sdpa(&real)?)?;
        }
    }

    if config.stage.wants_bounds() {
        let lb = dcopf_no_flow_limits(&net, None, &case)?;
        ledger.dcopf_lb_mw = Some(lb.value);
        ledger.lb_valid = lb.valid;
        let pf = solve_powerflow(&net, Start::Stored, 1e-8, 50);
        if pf.converged {
            ledger.pf_objective_mw = Some(pf.objective);
            let opf = crate::acopf::local_acopf(&net, &pf, config.flow_mode, &config.ipm);
            ledger.acopf_objective_mw = Some(opf.objective);
            ledger.acopf_degraded = opf.degraded;
            ledger.gap = Some(match gap_percent(&lb, opf.objective)? {
                Gap::Percent(g) => format!("{g:.2}"),
                Gap::NotValid => "not valid".into(),
            });
        } else {
            ledger
                .warnings
                .push(format!("power flow did not converge: {:?}", pf.diagnostic));
        }
    }

    Ok(ledger)
}

/// Run the pipeline over many case files. Failures are isolated per
/// case; the boolean is true iff every case succeeded. Results keep the
/// input order regardless of worker scheduling.
pub fn run_pipeline(paths: &[PathBuf], config: &PipelineConfig) -> (Vec<CaseOutcome>, bool) {
    use rayon::prelude::*;

    let work = |path: &PathBuf| match process_case(path, config) {
        Ok(l) => CaseOutcome::Ok(l),
        Err(e) => CaseOutcome::Err {
            case: path.display().to_string(),
            message: e.to_string(),
        },
    };
    let outcomes: Vec<CaseOutcome> = if config.jobs == 1 {
        paths.iter().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build();
        match pool {
            Ok(pool) => pool.install(|| paths.par_iter().map(work).collect()),
            Err(_) => paths.iter().map(work).collect(),
        }
    };
    let ok = outcomes
        .iter()
        .all(|o| matches!(o, CaseOutcome::Ok(_)));
    (outcomes, ok)
}

fn mw(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.1}"))
}

/// Plain-text tables mirroring the published layouts.
pub fn render_text(outcomes: &[CaseOutcome]) -> String {
    use std::fmt::Write;
    let rows: Vec<&BoundLedger> = outcomes
        .iter()
        .filter_map(|o| match o {
            CaseOutcome::Ok(l) => Some(l),
            CaseOutcome::Err { .. } => None,
        })
        .collect();
    let mut out = String::new();

    writeln!(out, "General figures").unwrap();
    writeln!(out, "{:<20} {:>7} {:>7} {:>9} {:>7}", "case", "buses", "gens", "branches", "tran").unwrap();
    for l in &rows {
        writeln!(
            out,
            "{:<20} {:>7} {:>7} {:>9} {:>7}",
            l.case_name, l.n_bus, l.n_gen, l.n_branch, l.n_transformer
        )
        .unwrap();
    }

    writeln!(out, "\nNodes per voltage level (kV classes, high to low)").unwrap();
    writeln!(
        out,
        "{:<20} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "case",
        crate::stats::VOLTAGE_CLASS_LABELS[0],
        crate::stats::VOLTAGE_CLASS_LABELS[1],
        crate::stats::VOLTAGE_CLASS_LABELS[2],
        crate::stats::VOLTAGE_CLASS_LABELS[3],
        crate::stats::VOLTAGE_CLASS_LABELS[4],
    )
    .unwrap();
    for l in &rows {
        let h = l.voltage_level_histogram;
        writeln!(
            out,
            "{:<20} {:>8} {:>8} {:>8} {:>8} {:>8}",
            l.case_name, h[0], h[1], h[2], h[3], h[4]
        )
        .unwrap();
    }

    writeln!(out, "\nNegative impedances").unwrap();
    writeln!(out, "{:<20} {:>7} {:>7}", "case", "R<0", "X<0").unwrap();
    for l in &rows {
        writeln!(out, "{:<20} {:>7} {:>7}", l.case_name, l.n_neg_r, l.n_neg_x).unwrap();
    }

    writeln!(out, "\nLosses minimization (MW)").unwrap();
    writeln!(
        out,
        "{:<20} {:>12} {:>12} {:>12} {:>10}",
        "case", "total load", "DCOPF", "OPF", "gap"
    )
    .unwrap();
    for l in &rows {
        writeln!(
            out,
            "{:<20} {:>12} {:>12} {:>12} {:>10}",
            l.case_name,
            format!("{:.1}", l.total_load_mw),
            mw(l.dcopf_lb_mw),
            mw(l.acopf_objective_mw),
            l.gap.as_deref().map_or("-".to_string(), |g| {
                if g == "not valid" {
                    g.to_string()
                } else {
                    format!("{g}%")
                }
            }),
        )
        .unwrap();
    }

    writeln!(out, "\nOPF objective by flow mode (MW)").unwrap();
    writeln!(out, "{:<20} {:>6} {:>14}", "case", "mode", "objective").unwrap();
    for l in &rows {
        writeln!(
            out,
            "{:<20} {:>6} {:>14}",
            l.case_name,
            l.acopf_flow_mode,
            mw(l.acopf_objective_mw)
        )
        .unwrap();
    }

    if rows.iter().all(|l| l.n_var == 0) {
        return finish(out, outcomes);
    }
    writeln!(out, "\nQCQP sizes").unwrap();
    writeln!(
        out,
        "{:<20} {:>7} {:>7} {:>7} {:>10}",
        "case", "nVAR", "nEQ", "nINEQ", "sparsity"
    )
    .unwrap();
    for l in &rows {
        writeln!(
            out,
            "{:<20} {:>7} {:>7} {:>7} {:>9.2}%",
            l.case_name, l.n_var, l.n_eq, l.n_ineq, l.sparsity_percent
        )
        .unwrap();
    }

    finish(out, outcomes)
}

/// Append the error section (if any) and return the final text.
fn finish(mut out: String, outcomes: &[CaseOutcome]) -> String {
    use std::fmt::Write;
    let errors: Vec<_> = outcomes
        .iter()
        .filter_map(|o| match o {
            CaseOutcome::Err { case, message } => Some((case, message)),
            CaseOutcome::Ok(_) => None,
        })
        .collect();
    if !errors.is_empty() {
        writeln!(out, "\nErrors").unwrap();
        for (case, message) in errors {
            writeln!(out, "{case}: {message}").unwrap();
        }
    }
    out
}

/// One CSV row per case (MW with one decimal, as in the text tables).
pub fn render_csv(outcomes: &[CaseOutcome]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(
        out,
        "case,n_bus,n_gen,n_branch,n_transformer,hv1,hv2,hv3,hv4,hv5,n_neg_r,n_neg_x,\
         total_load_mw,dcopf_lb_mw,lb_valid,pf_objective_mw,acopf_objective_mw,flow_mode,gap,\
         n_var,n_eq,n_ineq,sparsity_percent"
    )
    .unwrap();
    for o in outcomes {
        let CaseOutcome::Ok(l) = o else { continue };
        let h = l.voltage_level_histogram;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.1},{},{},{},{},{},{},{},{},{},{:.2}",
            l.case_name,
            l.n_bus,
            l.n_gen,
            l.n_branch,
            l.n_transformer,
            h[0],
            h[1],
            h[2],
            h[3],
            h[4],
            l.n_neg_r,
            l.n_neg_x,
            l.total_load_mw,
            mw(l.dcopf_lb_mw),
            l.lb_valid,
            mw(l.pf_objective_mw),
            mw(l.acopf_objective_mw),
            l.acopf_flow_mode,
            l.gap.as_deref().unwrap_or("-"),
            l.n_var,
            l.n_eq,
            l.n_ineq,
            l.sparsity_percent
        )
        .unwrap();
    }
    out
}

/// Full-precision JSON of all outcomes.
pub fn render_json(outcomes: &[CaseOutcome]) -> String {
    serde_json::to_string_pretty(outcomes).expect("ledger serialization")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpower::TWO_BUS;

    fn write_two_bus(dir: &Path) -> PathBuf {
        let p = dir.join("two_bus.m");
        std::fs::write(&p, TWO_BUS).unwrap();
        p
    }

    #[test]
    fn empty_input_is_success() {
        let (outcomes, ok) = run_pipeline(&[], &PipelineConfig::default());
        assert!(outcomes.is_empty());
        assert!(ok);
    }

    #[test]
    fn malformed_case_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let good = write_two_bus(dir.path());
        let bad = dir.path().join("broken.m");
        std::fs::write(&bad, "function mpc = broken\nmpc.version = '2';\n").unwrap();
        let config = PipelineConfig {
            stage: Stage::Stats,
            ..Default::default()
        };
        let (outcomes, ok) = run_pipeline(&[good.clone(), bad, good], &config);
        assert!(!ok);
        assert_eq!(outcomes.len(), 3);
        assert!(matches!(outcomes[0], CaseOutcome::Ok(_)));
        assert!(matches!(outcomes[1], CaseOutcome::Err { .. }));
        assert!(matches!(outcomes[2], CaseOutcome::Ok(_)));
    }

    #[test]
    fn full_pipeline_writes_artifacts_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let case = write_two_bus(dir.path());
        let out1 = dir.path().join("out1");
        let out2 = dir.path().join("out2");
        let mut config = PipelineConfig {
            out_dir: Some(out1.clone()),
            jobs: 2,
            ..Default::default()
        };
        let (o1, ok1) = run_pipeline(&[case.clone()], &config);
        assert!(ok1, "{o1:?}");
        config.out_dir = Some(out2.clone());
        let (o2, _) = run_pipeline(&[case], &config);
        for suffix in ["two_bus_profiles.csv", "two_bus.qcqp", "two_bus.dat-s"] {
            let a = std::fs::read(out1.join(suffix)).unwrap();
            let b = std::fs::read(out2.join(suffix)).unwrap();
            assert_eq!(a, b, "{suffix} not deterministic");
        }
        assert_eq!(render_csv(&o1), render_csv(&o2));
        assert_eq!(render_json(&o1), render_json(&o2));
        let CaseOutcome::Ok(l) = &o1[0] else { panic!() };
        assert_eq!(l.n_var, 4);
        assert!(l.gap.is_some());
    }

    #[test]
    fn gap_renders_not_valid_for_negative_resistance() {
        let dir = tempfile::tempdir().unwrap();
        let text = TWO_BUS.replace("\t1\t2\t0.01\t0.1\t", "\t1\t2\t-0.01\t0.1\t");
        let p = dir.path().join("negr.m");
        std::fs::write(&p, text).unwrap();
        let config = PipelineConfig {
            stage: Stage::Bounds,
            ..Default::default()
        };
        let (outcomes, ok) = run_pipeline(&[p], &config);
        assert!(ok);
        let CaseOutcome::Ok(l) = &outcomes[0] else { panic!() };
        assert_eq!(l.gap.as_deref(), Some("not valid"));
        assert!(!l.lb_valid);
        let text = render_text(&outcomes);
        assert!(text.contains("not valid"));
    }
}
