//! Trivial DCOPF lower bound by exact merit-order dispatch.
//!
//! Without flow limits the DC optimal dispatch is a single-balance box
//! LP, which merit order solves exactly: start every unit at Pmin and
//! fill the remaining demand in ascending cost order. With all costs
//! equal to 1 the optimal value is the sum of loads plus the shunt
//! conductance consumption at the flat DC voltage profile.

use crate::error::{Error, Result};
use crate::matpower::CaseData;
use crate::network::Network;
use crate::scalar::Real;

/// A lower bound on the AC-OPF objective, in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub value: f64,
    /// False when the case contains branches with negative resistance:
    /// pushing power through such branches creates active power, so the
    /// DC value is no longer a guaranteed bound.
    pub valid: bool,
    pub reason: Option<String>,
}

/// Solve `min sum c_i p_i  s.t.  sum p_i = sum Pd,  Pmin <= p <= Pmax`
/// by continuous merit order. `costs` are per-MW linear costs, one per
/// in-service generator; pass `None` to take them from the network
/// (unit costs for the losses-minimization setup).
///
/// Validity is judged from `raw_case` branch resistances (the published
/// tables include out-of-service rows).
pub fn dcopf_no_flow_limits<T: Real>(
    net: &Network<f64>,
    costs: Option<&[f64]>,
    raw_case: &CaseData<T>,
) -> Result<LowerBound> {
    let dispatch = merit_order_dispatch(net, costs)?;
    let value: f64 = dispatch
        .iter()
        .zip(net.gens.iter())
        .enumerate()
        .map(|(k, (p, _))| costs.map_or(net.gens[k].cost, |c| c[k]) * p * net.base_mva)
        .sum();

    let n_neg_r = raw_case
        .branch
        .iter()
        .filter(|b| b.r < T::zero())
        .count();
    Ok(LowerBound {
        value,
        valid: n_neg_r == 0,
        reason: (n_neg_r > 0)
            .then(|| format!("{n_neg_r} branches with negative resistance present")),
    })
}

/// Per-generator optimal dispatch in pu.
pub fn merit_order_dispatch(net: &Network<f64>, costs: Option<&[f64]>) -> Result<Vec<f64>> {
    if let Some(c) = costs {
        if c.len() != net.gens.len() {
            return Err(Error::Dimension(format!(
                "{} costs for {} generators",
                c.len(),
                net.gens.len()
            )));
        }
    }
    // DC demand at the flat voltage profile: loads plus shunt
    // conductance consumption (Gs is MW at v = 1 pu).
    let demand: f64 = net.total_load() + net.buses.iter().map(|b| b.gs).sum::<f64>();
    let min: f64 = net.gens.iter().map(|g| g.pmin).sum();
    let max: f64 = net.gens.iter().map(|g| g.pmax).sum();
    if demand < min || demand > max {
        let shortfall = if demand < min {
            min - demand
        } else {
            demand - max
        };
        return Err(Error::InfeasibleDispatch {
            demand_mw: demand * net.base_mva,
            min_mw: min * net.base_mva,
            max_mw: max * net.base_mva,
            shortfall_mw: shortfall * net.base_mva,
        });
    }

    let mut p: Vec<f64> = net.gens.iter().map(|g| g.pmin).collect();
    let mut remaining = demand - min;
    let mut order: Vec<usize> = (0..net.gens.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = costs.map_or(net.gens[a].cost, |c| c[a]);
        let cb = costs.map_or(net.gens[b].cost, |c| c[b]);
        ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
    });
    for k in order {
        if remaining <= 0.0 {
            break;
        }
        let room = net.gens[k].pmax - net.gens[k].pmin;
        let take = room.min(remaining);
        p[k] += take;
        remaining -= take;
    }
    Ok(p)
}

/// Optimality gap in percent: `100 * (ub - lb) / lb`, or the literal
/// "not valid" marker when the bound is voided by negative resistances.
#[derive(Debug, Clone, PartialEq)]
pub enum Gap {
    Percent(f64),
    NotValid,
}

impl std::fmt::Display for Gap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gap::Percent(p) => write!(f, "{p:.2}%"),
            Gap::NotValid => f.write_str("not valid"),
        }
    }
}

pub fn gap_percent(lb: &LowerBound, ub_mw: f64) -> Result<Gap> {
    if !lb.valid {
        return Ok(Gap::NotValid);
    }
    if lb.value <= 0.0 {
        return Err(Error::UndefinedGap(lb.value));
    }
    Ok(Gap::Percent(100.0 * (ub_mw - lb.value) / lb.value))
}
