//! Newton-Raphson AC power flow in polar coordinates.
//!
//! PV buses hold voltage magnitude and active injection, the slack bus
//! absorbs the residual active and reactive power. Generator reactive
//! limits are not enforced here; the OPF layer handles them.

use num_complex::Complex64;

use crate::matpower::BusType;
use crate::network::{build_admittance, AdmittanceModel, Network};
use crate::sparse::{Coo, Csr};

/// Initial voltage guess for the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    /// 1.0 pu magnitude, 0 angle everywhere (gen setpoints still applied).
    Flat,
    /// The Vm/Va stored in the case.
    Stored,
}

/// Converged (or not) operating point.
#[derive(Debug, Clone)]
pub struct PfSolution {
    /// Complex bus voltages, pu.
    pub v: Vec<Complex64>,
    /// Active output per in-service generator, pu.
    pub pg: Vec<f64>,
    /// Reactive output per in-service generator, pu.
    pub qg: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest absolute power mismatch over the solved equations, pu.
    pub max_mismatch: f64,
    /// Total active generation, MW.
    pub objective: f64,
    /// Diagnostic for non-converged runs (e.g. singular Jacobian).
    pub diagnostic: Option<String>,
    /// Set by the OPF layer when the point is a fallback iterate rather
    /// than a converged KKT point.
    pub degraded: bool,
}

/// Solve the power flow with Newton-Raphson.
pub fn solve_powerflow(net: &Network<f64>, start: Start, tol: f64, max_iter: usize) -> PfSolution {
    let adm = build_admittance(net);
    solve_powerflow_with(net, &adm, start, tol, max_iter)
}

/// As [`solve_powerflow`] with a prebuilt admittance model.
pub fn solve_powerflow_with(
    net: &Network<f64>,
    adm: &AdmittanceModel<f64>,
    start: Start,
    tol: f64,
    max_iter: usize,
) -> PfSolution {
    let n = net.n_bus();

    let mut v: Vec<Complex64> = match start {
        Start::Flat => vec![Complex64::new(1.0, 0.0); n],
        Start::Stored => net
            .buses
            .iter()
            .map(|b| Complex64::from_polar(b.vm, b.va))
            .collect(),
    };
    // Generator voltage setpoints override the magnitude at their buses.
    for g in &net.gens {
        if g.vg > 0.0 {
            let old = v[g.bus];
            let m = old.norm();
            v[g.bus] = if m > 0.0 {
                old * (g.vg / m)
            } else {
                Complex64::new(g.vg, 0.0)
            };
        }
    }

    // Specified injections from scheduled generation minus load.
    let mut sbus = vec![Complex64::new(0.0, 0.0); n];
    for (i, b) in net.buses.iter().enumerate() {
        sbus[i] -= Complex64::new(b.pd, b.qd);
    }
    for g in &net.gens {
        sbus[g.bus] += Complex64::new(g.pg, g.qg);
    }

    let pv: Vec<usize> = (0..n)
        .filter(|&i| i != net.slack && net.buses[i].bus_type == BusType::Pv)
        .collect();
    let pq: Vec<usize> = (0..n)
        .filter(|&i| i != net.slack && net.buses[i].bus_type != BusType::Pv)
        .collect();
    let pvpq: Vec<usize> = pv.iter().chain(pq.iter()).copied().collect();
    let n_unknown = pvpq.len() + pq.len();

    // Position of each bus in the angle / magnitude unknown blocks.
    let mut apos = vec![usize::MAX; n];
    for (k, &i) in pvpq.iter().enumerate() {
        apos[i] = k;
    }
    let mut mpos = vec![usize::MAX; n];
    for (k, &i) in pq.iter().enumerate() {
        mpos[i] = pvpq.len() + k;
    }

    let mismatch = |v: &[Complex64]| -> Vec<f64> {
        let s = adm.injections(v);
        let mut f = Vec::with_capacity(n_unknown);
        for &i in &pvpq {
            f.push(s[i].re - sbus[i].re);
        }
        for &i in &pq {
            f.push(s[i].im - sbus[i].im);
        }
        f
    };

    let mut diagnostic = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut max_mis = inf_norm(&mismatch(&v));
    if max_mis <= tol {
        converged = true;
    }

    while !converged && iterations < max_iter {
        iterations += 1;
        let jac = assemble_jacobian(adm, &v, &pvpq, &pq, &apos, &mpos);
        let Ok(a) = jac.to_csr().to_faer() else {
            diagnostic = Some("jacobian assembly failed".into());
            break;
        };
        let Ok(lu) = a.sp_lu() else {
            diagnostic = Some(format!("singular jacobian at iteration {iterations}"));
            break;
        };
        let f = mismatch(&v);
        let rhs = faer::Mat::from_fn(n_unknown, 1, |i, _| f[i]);
        let dx = faer::linalg::solvers::Solve::solve(&lu, &rhs);
        if (0..n_unknown).any(|i| !dx[(i, 0)].is_finite()) {
            diagnostic = Some(format!("non-finite newton step at iteration {iterations}"));
            break;
        }
        for (k, &i) in pvpq.iter().enumerate() {
            let (m, a) = v[i].to_polar();
            v[i] = Complex64::from_polar(m, a - dx[(k, 0)]);
        }
        for (k, &i) in pq.iter().enumerate() {
            let (m, a) = v[i].to_polar();
            v[i] = Complex64::from_polar(m - dx[(pvpq.len() + k, 0)], a);
        }
        max_mis = inf_norm(&mismatch(&v));
        if max_mis <= tol {
            converged = true;
        }
    }
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!(
            "iteration limit {max_iter} reached, mismatch {max_mis:.3e} pu"
        ));
    }

    let (pg, qg) = allocate_generation(net, adm, &v);
    let objective = net.base_mva * pg.iter().sum::<f64>();
    PfSolution {
        v,
        pg,
        qg,
        converged,
        iterations,
        max_mismatch: max_mis,
        objective,
        diagnostic,
        degraded: false,
    }
}

fn inf_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Power flow Jacobian at `v` for a given bus partition: rows are P
/// mismatches at the `pvpq` buses then Q mismatches at the `pq` buses,
/// columns angles at `pvpq` then magnitudes at `pq`.
pub fn newton_jacobian(
    adm: &AdmittanceModel<f64>,
    v: &[Complex64],
    pvpq: &[usize],
    pq: &[usize],
) -> Csr<f64> {
    let n = v.len();
    let mut apos = vec![usize::MAX; n];
    for (k, &i) in pvpq.iter().enumerate() {
        apos[i] = k;
    }
    let mut mpos = vec![usize::MAX; n];
    for (k, &i) in pq.iter().enumerate() {
        mpos[i] = pvpq.len() + k;
    }
    assemble_jacobian(adm, v, pvpq, pq, &apos, &mpos).to_csr()
}

/// Sparse power flow Jacobian: rows are P mismatches at PV+PQ buses then Q
/// mismatches at PQ buses; columns are angles at PV+PQ then magnitudes at
/// PQ.
fn assemble_jacobian(
    adm: &AdmittanceModel<f64>,
    v: &[Complex64],
    pvpq: &[usize],
    pq: &[usize],
    apos: &[usize],
    mpos: &[usize],
) -> Coo<f64> {
    let n = v.len();
    let ibus = adm.currents(v);
    let n_unknown = pvpq.len() + pq.len();
    let mut jac = Coo::new(n_unknown, n_unknown);
    let mut prow = vec![usize::MAX; n];
    for (k, &i) in pvpq.iter().enumerate() {
        prow[i] = k;
    }
    let mut qrow = vec![usize::MAX; n];
    for (k, &i) in pq.iter().enumerate() {
        qrow[i] = pvpq.len() + k;
    }
    let j1 = Complex64::new(0.0, 1.0);
    for (i, j, yij) in adm.ybus.iter() {
        let vi = v[i];
        let vnj = v[j] / v[j].norm();
        // dS_i/dVa_j and dS_i/dVm_j from the standard polar derivatives.
        let (dva, dvm) = if i == j {
            (
                j1 * vi * (ibus[i] - yij * v[i]).conj(),
                vi * (yij * vnj).conj() + ibus[i].conj() * vnj,
            )
        } else {
            (-j1 * vi * (yij * v[j]).conj(), vi * (yij * vnj).conj())
        };
        for (row, ds_dva, ds_dvm) in [
            (prow[i], dva.re, dvm.re),
            (qrow[i], dva.im, dvm.im),
        ] {
            if row == usize::MAX {
                continue;
            }
            if apos[j] != usize::MAX {
                jac.push(row, apos[j], ds_dva);
            }
            if mpos[j] != usize::MAX {
                jac.push(row, mpos[j], ds_dvm);
            }
        }
    }
    jac
}

/// Recover per-generator outputs from the solved voltages: every
/// generator keeps its scheduled P except at the slack bus, whose first
/// generator absorbs the active residual; bus reactive totals are spread
/// over the local generators within their limits.
fn allocate_generation(
    net: &Network<f64>,
    adm: &AdmittanceModel<f64>,
    v: &[Complex64],
) -> (Vec<f64>, Vec<f64>) {
    let s = adm.injections(v);
    let mut pg: Vec<f64> = net.gens.iter().map(|g| g.pg).collect();
    let mut qg: Vec<f64> = net.gens.iter().map(|g| g.qg).collect();

    let slack_gens = net.gens_at(net.slack);
    if let Some(&first) = slack_gens.first() {
        let others: f64 = slack_gens[1..].iter().map(|&k| net.gens[k].pg).sum();
        pg[first] = s[net.slack].re + net.buses[net.slack].pd - others;
    }

    for bus in net.gen_buses() {
        let gens = net.gens_at(bus);
        let total = s[bus].im + net.buses[bus].qd;
        spread_reactive(net, &gens, total, &mut qg);
    }
    (pg, qg)
}

/// Distribute a bus reactive total over its generators proportionally to
/// their Q range, clamping to limits; any residual goes to the generator
/// with the most headroom.
fn spread_reactive(net: &Network<f64>, gens: &[usize], total: f64, qg: &mut [f64]) {
    const BIG: f64 = 1e6;
    let range = |k: usize| {
        let g = &net.gens[k];
        (g.qmax.min(BIG) - g.qmin.max(-BIG)).max(0.0)
    };
    let sum_min: f64 = gens.iter().map(|&k| net.gens[k].qmin.max(-BIG)).sum();
    let sum_range: f64 = gens.iter().map(|&k| range(k)).sum();
    let need = total - sum_min;
    let frac = if sum_range > 0.0 {
        (need / sum_range).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut assigned = 0.0;
    for &k in gens {
        qg[k] = net.gens[k].qmin.max(-BIG) + frac * range(k);
        assigned += qg[k];
    }
    let residual = total - assigned;
    if residual != 0.0 {
        if let Some(&k) = gens.iter().max_by(|&&a, &&b| {
            let ha = if residual > 0.0 {
                net.gens[a].qmax - qg[a]
            } else {
                qg[a] - net.gens[a].qmin
            };
            let hb = if residual > 0.0 {
                net.gens[b].qmax - qg[b]
            } else {
                qg[b] - net.gens[b].qmin
            };
            ha.partial_cmp(&hb).unwrap()
        }) {
            qg[k] += residual;
        }
    }
}

/// Branch flow limit interpretation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    /// Apparent power magnitude at both ends, limit rateA in MVA.
    S,
    /// Current magnitude at both ends, limit rateA/baseMVA at 1 pu
    /// voltage.
    I,
    /// Flow limits ignored.
    None,
}

impl std::str::FromStr for FlowMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "S" | "s" => Ok(FlowMode::S),
            "I" | "i" => Ok(FlowMode::I),
            "none" | "None" | "NONE" => Ok(FlowMode::None),
            other => Err(format!("unknown flow mode '{other}' (expected S, I or none)")),
        }
    }
}

impl std::fmt::Display for FlowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FlowMode::S => "S",
            FlowMode::I => "I",
            FlowMode::None => "none",
        })
    }
}

/// Worst violation per constraint class, all in pu (0 when satisfied).
#[derive(Debug, Clone, Default)]
pub struct ConstraintReport {
    pub voltage: f64,
    pub gen_p: f64,
    pub gen_q: f64,
    pub flow: f64,
    /// Human-readable descriptions of every violation found.
    pub entries: Vec<String>,
}

impl ConstraintReport {
    pub fn max_violation(&self) -> f64 {
        self.voltage.max(self.gen_p).max(self.gen_q).max(self.flow)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

/// Check a solved point against voltage, generation and flow limits.
pub fn evaluate_feasible_point(
    net: &Network<f64>,
    sol: &PfSolution,
    flow_mode: FlowMode,
) -> ConstraintReport {
    let mut rep = ConstraintReport::default();
    for (i, b) in net.buses.iter().enumerate() {
        let vm = sol.v[i].norm();
        let viol = (b.vmin - vm).max(vm - b.vmax).max(0.0);
        if viol > 0.0 {
            rep.voltage = rep.voltage.max(viol);
            rep.entries
                .push(format!("bus {}: Vm {vm:.4} outside [{}, {}]", b.id, b.vmin, b.vmax));
        }
    }
    for (k, g) in net.gens.iter().enumerate() {
        let pv = (g.pmin - sol.pg[k]).max(sol.pg[k] - g.pmax).max(0.0);
        if pv > 0.0 {
            rep.gen_p = rep.gen_p.max(pv);
            rep.entries.push(format!(
                "gen {k} at bus {}: Pg {:.4} outside [{}, {}]",
                net.buses[g.bus].id, sol.pg[k], g.pmin, g.pmax
            ));
        }
        let qv = (g.qmin - sol.qg[k]).max(sol.qg[k] - g.qmax).max(0.0);
        if qv > 0.0 {
            rep.gen_q = rep.gen_q.max(qv);
            rep.entries.push(format!(
                "gen {k} at bus {}: Qg {:.4} outside [{}, {}]",
                net.buses[g.bus].id, sol.qg[k], g.qmin, g.qmax
            ));
        }
    }
    if flow_mode != FlowMode::None {
        let adm = build_admittance(net);
        for (bi, (br, blk)) in net.branches.iter().zip(&adm.branch).enumerate() {
            if br.rate <= 0.0 {
                continue;
            }
            let vf = sol.v[br.from];
            let vt = sol.v[br.to];
            let i_f = blk.yff * vf + blk.yft * vt;
            let i_t = blk.ytf * vf + blk.ytt * vt;
            let (mf, mt) = match flow_mode {
                FlowMode::S => ((vf * i_f.conj()).norm(), (vt * i_t.conj()).norm()),
                FlowMode::I => (i_f.norm(), i_t.norm()),
                FlowMode::None => unreachable!(),
            };
            let viol = (mf - br.rate).max(mt - br.rate).max(0.0);
            if viol > 0.0 {
                rep.flow = rep.flow.max(viol);
                rep.entries.push(format!(
                    "branch {bi} ({}-{}): |flow| {:.4} exceeds rate {:.4} ({flow_mode} mode)",
                    net.buses[br.from].id,
                    net.buses[br.to].id,
                    mf.max(mt),
                    br.rate
                ));
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpower::{parse_case, TWO_BUS};
    use crate::network::build_network;
    use approx::assert_relative_eq;

    fn two_bus_net() -> Network<f64> {
        build_network(&parse_case::<f64>(TWO_BUS).unwrap()).unwrap()
    }

    #[test]
    fn two_bus_matches_scalar_oracle() {
        // Load 1 + j0.3 pu behind z = 0.01 + j0.1 from a fixed slack at
        // 1 angle 0. Oracle: solve the 2-unknown mismatch system by plain
        // damped fixed-point iteration on V2 = conj(S2/V2 - ...)/..., or
        // equivalently iterate V2 = 1/(Y22) * (conj(S2)/conj(V2) - Y21*V1).
        let net = two_bus_net();
        let sol = solve_powerflow(&net, Start::Flat, 1e-10, 20);
        assert!(sol.converged, "{:?}", sol.diagnostic);

        let y = 1.0 / Complex64::new(0.01, 0.1);
        let v1 = Complex64::new(1.0, 0.0);
        let s2 = Complex64::new(-1.0, -0.3);
        let mut v2 = Complex64::new(1.0, 0.0);
        for _ in 0..200 {
            v2 = (s2.conj() / v2.conj() + y * v1) / y;
        }
        assert_relative_eq!((sol.v[1] - v2).norm(), 0.0, epsilon = 1e-10);
        // Slack covers load plus loss.
        assert!(sol.pg[0] > 1.0);
        assert_relative_eq!(sol.objective, net.base_mva * sol.pg[0]);
    }

    #[test]
    fn zero_load_flat_start_needs_no_correction() {
        let mut case = parse_case::<f64>(TWO_BUS).unwrap();
        case.bus[1].pd = 0.0;
        case.bus[1].qd = 0.0;
        let net = build_network(&case).unwrap();
        let sol = solve_powerflow(&net, Start::Flat, 1e-10, 20);
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert_relative_eq!(sol.v[1].norm(), 1.0);
    }

    #[test]
    fn iteration_limit_reports_diagnostic() {
        let net = two_bus_net();
        let sol = solve_powerflow(&net, Start::Flat, 1e-14, 0);
        assert!(!sol.converged);
        assert!(sol.diagnostic.as_deref().unwrap().contains("iteration limit"));
    }

    #[test]
    fn power_balance_identity() {
        // Sum of generation - load - branch losses = 0 (no conductive
        // shunts in this network).
        let net = two_bus_net();
        let adm = build_admittance(&net);
        let sol = solve_powerflow(&net, Start::Flat, 1e-12, 20);
        let mut losses = 0.0;
        for (br, blk) in net.branches.iter().zip(&adm.branch) {
            let vf = sol.v[br.from];
            let vt = sol.v[br.to];
            let sf = vf * (blk.yff * vf + blk.yft * vt).conj();
            let st = vt * (blk.ytf * vf + blk.ytt * vt).conj();
            losses += sf.re + st.re;
        }
        let gen: f64 = sol.pg.iter().sum();
        let load: f64 = net.buses.iter().map(|b| b.pd).sum();
        assert_relative_eq!(gen - load - losses, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn constraint_report_flags_voltage_violation() {
        let net = two_bus_net();
        let mut sol = solve_powerflow(&net, Start::Flat, 1e-10, 20);
        assert!(evaluate_feasible_point(&net, &sol, FlowMode::None).is_feasible(1e-9));
        sol.v[1] = Complex64::new(1.2, 0.0);
        let rep = evaluate_feasible_point(&net, &sol, FlowMode::None);
        assert_relative_eq!(rep.voltage, 0.1, epsilon = 1e-12);
        assert!(!rep.entries.is_empty());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut net = two_bus_net();
            net.branches[0].tap = rng.gen_range(0.9..1.1);
            net.branches[0].shift = rng.gen_range(-0.2..0.2);
            net.branches[0].b = rng.gen_range(0.0..0.2);
            net.buses[1].bs = rng.gen_range(-0.3..0.3);
            let adm = build_admittance(&net);
            let v = vec![
                Complex64::from_polar(rng.gen_range(0.9..1.1), 0.0),
                Complex64::from_polar(rng.gen_range(0.9..1.1), rng.gen_range(-0.3..0.3)),
            ];
            // Unknowns: Va2, Vm2 (bus 2 is PQ, bus 1 slack).
            let pvpq = vec![1usize];
            let pq = vec![1usize];
            let apos = vec![usize::MAX, 0];
            let mpos = vec![usize::MAX, 1];
            let jac = assemble_jacobian(&adm, &v, &pvpq, &pq, &apos, &mpos).to_csr();

            let f = |v2m: f64, v2a: f64| {
                let vv = vec![v[0], Complex64::from_polar(v2m, v2a)];
                let s = adm.injections(&vv);
                [s[1].re, s[1].im]
            };
            let (m0, a0) = v[1].to_polar();
            let h = 1e-6;
            let fa1 = f(m0, a0 + h);
            let fa0 = f(m0, a0 - h);
            let fm1 = f(m0 + h, a0);
            let fm0 = f(m0 - h, a0);
            for (row, comp) in [(0usize, 0usize), (1, 1)] {
                let da = (fa1[comp] - fa0[comp]) / (2.0 * h);
                let dm = (fm1[comp] - fm0[comp]) / (2.0 * h);
                let scale = da.abs().max(dm.abs()).max(1.0);
                assert!(
                    (jac.get(row, 0) - da).abs() / scale < 1e-5,
                    "dVa mismatch: {} vs {}",
                    jac.get(row, 0),
                    da
                );
                assert!(
                    (jac.get(row, 1) - dm).abs() / scale < 1e-5,
                    "dVm mismatch: {} vs {}",
                    jac.get(row, 1),
                    dm
                );
            }
        }
    }
}
