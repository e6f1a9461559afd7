//! Validated per-unit network model and sparse admittance assembly.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::matpower::{BusType, CaseData};
use crate::scalar::Real;
use crate::sparse::{Coo, Csr};

/// One in-service bus. Powers are per-unit on the system base, angles in
/// radians.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus<T> {
    /// External id from the case file.
    pub id: i64,
    pub bus_type: BusType,
    pub pd: T,
    pub qd: T,
    pub gs: T,
    pub bs: T,
    pub vmin: T,
    pub vmax: T,
    pub base_kv: T,
    /// Stored operating point from the case, usable as a warm start.
    pub vm: T,
    pub va: T,
}

/// One in-service generator, bounds in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Gen<T> {
    /// Internal bus index.
    pub bus: usize,
    pub pg: T,
    pub qg: T,
    pub pmin: T,
    pub pmax: T,
    pub qmin: T,
    pub qmax: T,
    pub vg: T,
    /// Linear cost coefficient per MW of active output; defaults to 1
    /// when the case carries no cost table.
    pub cost: T,
    /// Constant cost term.
    pub cost_const: T,
}

/// One in-service branch with nonzero series impedance.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    pub from: usize,
    pub to: usize,
    /// Series admittance 1/(r + jx), per-unit.
    pub y: Complex<T>,
    /// Total line charging susceptance, per-unit.
    pub b: T,
    /// Tap ratio magnitude; raw 0 is mapped to 1.
    pub tap: T,
    /// Phase shift, radians.
    pub shift: T,
    /// rateA converted to per-unit (0 means unlimited).
    pub rate: T,
}

/// Validated, filtered, per-unit network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub base_mva: T,
    pub buses: Vec<Bus<T>>,
    pub gens: Vec<Gen<T>>,
    pub branches: Vec<Branch<T>>,
    /// Internal index of the reference bus.
    pub slack: usize,
    /// Human-readable notes about excluded elements (isolated buses,
    /// unreachable islands, loads dropped with them).
    pub warnings: Vec<String>,
}

impl<T: Real> Network<T> {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Internal bus index for an external id.
    pub fn bus_index(&self, id: i64) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Generator indices grouped by bus, in bus-index order.
    pub fn gens_at(&self, bus: usize) -> Vec<usize> {
        self.gens
            .iter()
            .enumerate()
            .filter(|(_, g)| g.bus == bus)
            .map(|(i, _)| i)
            .collect()
    }

    /// Buses that host at least one in-service generator.
    pub fn gen_buses(&self) -> Vec<usize> {
        let mut has = vec![false; self.buses.len()];
        for g in &self.gens {
            has[g.bus] = true;
        }
        (0..self.buses.len()).filter(|&i| has[i]).collect()
    }

    /// Total active load in per-unit.
    pub fn total_load(&self) -> T {
        self.buses.iter().map(|b| b.pd).sum()
    }
}

/// Build the per-unit network from raw case data: filter out-of-service
/// elements, drop isolated and unreachable buses, convert units, and
/// locate the slack.
pub fn build_network<T: Real>(case: &CaseData<T>) -> Result<Network<T>> {
    case.validate()?;
    let base = case.base_mva;
    let deg = T::of_f64(std::f64::consts::PI / 180.0);
    let mut warnings = Vec::new();

    // Candidate buses: everything not marked isolated.
    let mut keep: Vec<bool> = case
        .bus
        .iter()
        .map(|b| b.bus_type != BusType::Isolated)
        .collect();
    for (i, b) in case.bus.iter().enumerate() {
        if !keep[i] {
            warnings.push(format!(
                "bus {} is isolated; dropped with load {} MW",
                b.id, b.pd
            ));
        }
    }

    // Reachability from the reference bus over in-service branches.
    let pos: std::collections::HashMap<i64, usize> = case
        .bus
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id, i))
        .collect();
    let slack_raw = case
        .bus
        .iter()
        .position(|b| b.bus_type == BusType::Ref && keep[pos[&b.id]])
        .ok_or_else(|| Error::Model("no in-service reference bus".into()))?;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); case.bus.len()];
    for br in case.branch.iter().filter(|b| b.is_on()) {
        let (f, t) = (pos[&br.from], pos[&br.to]);
        if keep[f] && keep[t] {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let mut reach = vec![false; case.bus.len()];
    let mut stack = vec![slack_raw];
    reach[slack_raw] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !reach[j] {
                reach[j] = true;
                stack.push(j);
            }
        }
    }
    for (i, b) in case.bus.iter().enumerate() {
        if keep[i] && !reach[i] {
            keep[i] = false;
            warnings.push(format!(
                "bus {} unreachable from the reference bus; dropped with load {} MW",
                b.id, b.pd
            ));
        }
    }

    // Final index map and bus list.
    let mut index: std::collections::HashMap<i64, usize> = Default::default();
    let mut buses = Vec::new();
    for (i, b) in case.bus.iter().enumerate() {
        if !keep[i] {
            continue;
        }
        index.insert(b.id, buses.len());
        buses.push(Bus {
            id: b.id,
            bus_type: b.bus_type,
            pd: b.pd / base,
            qd: b.qd / base,
            gs: b.gs / base,
            bs: b.bs / base,
            vmin: b.vmin,
            vmax: b.vmax,
            base_kv: b.base_kv,
            vm: b.vm,
            va: b.va * deg,
        });
    }
    let slack = index[&case.bus[slack_raw].id];

    let mut gens = Vec::new();
    for (gi, g) in case.gen.iter().enumerate() {
        if !g.is_on() {
            continue;
        }
        let Some(&bus) = index.get(&g.bus) else {
            warnings.push(format!("generator {gi} at dropped bus {}; excluded", g.bus));
            continue;
        };
        let (cost, cost_const) = case
            .gencost
            .get(gi)
            .map(|gc| {
                (
                    gc.linear_coefficient().unwrap_or_else(T::one),
                    gc.constant_term().unwrap_or_else(T::zero),
                )
            })
            .unwrap_or_else(|| (T::one(), T::zero()));
        gens.push(Gen {
            bus,
            pg: g.pg / base,
            qg: g.qg / base,
            pmin: g.pmin / base,
            pmax: g.pmax / base,
            qmin: g.qmin / base,
            qmax: g.qmax / base,
            vg: g.vg,
            cost,
            cost_const,
        });
    }

    let mut branches = Vec::new();
    for br in case.branch.iter().filter(|b| b.is_on()) {
        let (Some(&from), Some(&to)) = (index.get(&br.from), index.get(&br.to)) else {
            continue;
        };
        if br.r == T::zero() && br.x == T::zero() {
            return Err(Error::Model(format!(
                "branch {}-{} has zero series impedance",
                br.from, br.to
            )));
        }
        let z = Complex::new(br.r, br.x);
        let tap = if br.tap == T::zero() { T::one() } else { br.tap };
        branches.push(Branch {
            from,
            to,
            y: Complex::new(T::one(), T::zero()) / z,
            b: br.b,
            tap,
            shift: br.shift * deg,
            rate: br.rate_a / base,
        });
    }

    Ok(Network {
        base_mva: base,
        buses,
        gens,
        branches,
        slack,
        warnings,
    })
}

/// Two-port admittance of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance<T> {
    pub yff: Complex<T>,
    pub yft: Complex<T>,
    pub ytf: Complex<T>,
    pub ytt: Complex<T>,
}

/// Sparse bus admittance matrix with the per-branch blocks it was
/// assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceModel<T> {
    pub ybus: Csr<Complex<T>>,
    pub branch: Vec<BranchAdmittance<T>>,
}

/// Assemble Ybus by scatter-adding branch two-ports plus nodal shunts.
pub fn build_admittance<T: Real>(net: &Network<T>) -> AdmittanceModel<T> {
    let n = net.n_bus();
    let mut coo = Coo::new(n, n);
    let mut blocks = Vec::with_capacity(net.branches.len());
    for br in &net.branches {
        let half_b = Complex::new(T::zero(), br.b / T::of_f64(2.0));
        let ytt = br.y + half_b;
        let tap2 = br.tap * br.tap;
        let yff = ytt / Complex::new(tap2, T::zero());
        // tap phasor t = tau * e^{j theta}; yft = -y/conj(t), ytf = -y/t.
        let t = Complex::from_polar(br.tap, br.shift);
        let yft = -br.y / t.conj();
        let ytf = -br.y / t;
        coo.push(br.from, br.from, yff);
        coo.push(br.from, br.to, yft);
        coo.push(br.to, br.from, ytf);
        coo.push(br.to, br.to, ytt);
        blocks.push(BranchAdmittance { yff, yft, ytf, ytt });
    }
    for (i, b) in net.buses.iter().enumerate() {
        if b.gs != T::zero() || b.bs != T::zero() {
            coo.push(i, i, Complex::new(b.gs, b.bs));
        }
    }
    AdmittanceModel {
        ybus: coo.to_csr(),
        branch: blocks,
    }
}

impl<T: Real> AdmittanceModel<T> {
    /// Nodal current injections I = Ybus * V.
    pub fn currents(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        self.ybus.matvec(v)
    }

    /// Nodal complex power injections S = diag(V) * conj(Ybus * V).
    pub fn injections(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        self.currents(v)
            .iter()
            .zip(v)
            .map(|(i, vk)| vk * i.conj())
            .collect()
    }
}
