//! Randomized property suites over the public API.

use opfkit::matpower::{BranchRow, BusRow, BusType, CaseData, GenRow, GencostRow};
use opfkit::{parse_case, write_case};
use proptest::prelude::*;

fn field() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => -1.0e6..1.0e6f64,
        1 => Just(0.0),
        1 => Just(f64::INFINITY),
        1 => Just(f64::NEG_INFINITY),
    ]
}

fn bus_row(id: i64, bus_type: BusType) -> impl Strategy<Value = BusRow<f64>> {
    (
        proptest::collection::vec(field(), 9),
        proptest::collection::vec(-1.0e3..1.0e3f64, 0..3),
    )
        .prop_map(move |(f, extra)| BusRow {
            id,
            bus_type,
            pd: f[0],
            qd: f[1],
            gs: f[2],
            bs: f[3],
            area: 1.0,
            vm: f[4],
            va: f[5],
            base_kv: f[6].abs(),
            zone: 1.0,
            vmax: f[7],
            vmin: f[8],
            extra,
        })
}

fn gen_row(nbus: i64) -> impl Strategy<Value = GenRow<f64>> {
    (1..=nbus, proptest::collection::vec(field(), 9), 0i64..2)
        .prop_map(|(bus, f, status)| GenRow {
            bus,
            pg: f[0],
            qg: f[1],
            qmax: f[2],
            qmin: f[3],
            vg: f[4],
            mbase: f[5],
            status,
            pmax: f[6],
            pmin: f[7],
            extra: vec![f[8]],
        })
}

fn branch_row(nbus: i64) -> impl Strategy<Value = BranchRow<f64>> {
    (1..=nbus, 1..=nbus, proptest::collection::vec(field(), 9), 0i64..2)
        .prop_map(|(from, to, f, status)| BranchRow {
            from,
            to,
            r: f[0],
            x: f[1],
            b: f[2],
            rate_a: f[3],
            rate_b: f[4],
            rate_c: f[5],
            tap: f[6],
            shift: f[7],
            status,
            angmin: -360.0,
            angmax: 360.0,
            extra: vec![f[8]],
        })
}

fn gencost_row() -> impl Strategy<Value = GencostRow<f64>> {
    proptest::collection::vec(-1.0e3..1.0e3f64, 1..4).prop_map(|coeffs| GencostRow {
        model: 2,
        startup: 0.0,
        shutdown: 0.0,
        n: coeffs.len(),
        coeffs,
    })
}

fn case() -> impl Strategy<Value = CaseData<f64>> {
    (1usize..5).prop_flat_map(|nbus| {
        let buses: Vec<_> = (1..=nbus as i64)
            .map(|id| {
                bus_row(
                    id,
                    if id == 1 { BusType::Ref } else { BusType::Pq },
                )
            })
            .collect();
        (
            buses,
            proptest::collection::vec(gen_row(nbus as i64), 1..4),
            proptest::collection::vec(branch_row(nbus as i64), 0..4),
        )
            .prop_map(|(bus, gen, branch)| (bus, gen, branch))
    })
    .prop_flat_map(|(bus, gen, branch)| {
        let ng = gen.len();
        (
            Just(bus),
            Just(gen),
            Just(branch),
            proptest::collection::vec(gencost_row(), ng..=ng),
            1.0e-1..1.0e3f64,
        )
    })
    .prop_map(|(bus, gen, branch, gencost, base_mva)| CaseData {
        case_name: "roundtrip".into(),
        base_mva,
        bus,
        gen,
        branch,
        gencost,
    })
}

proptest! {
    /// `parse_case(write_case(c)) == c` bit-exactly, including Inf
    /// bounds and extra columns.
    #[test]
    fn matpower_roundtrip(c in case()) {
        let text = write_case(&c);
        let back = parse_case::<f64>(&text).unwrap();
        prop_assert_eq!(back, c);
    }

    /// Every base voltage falls in exactly one histogram class.
    #[test]
    fn voltage_class_partitions(kv in 0.0..2.0e3f64) {
        let class = opfkit::stats::voltage_class(kv);
        prop_assert!(class < opfkit::stats::VOLTAGE_CLASS_LABELS.len());
    }

    /// Merit-order dispatch respects bounds and meets demand whenever it
    /// reports success.
    #[test]
    fn merit_order_is_feasible(
        seedless in proptest::collection::vec((0.0..2.0f64, 0.1..4.0f64, 0.5..5.0f64), 1..8),
        t in 0.05..0.95f64,
    ) {
        let mut case = parse_case::<f64>(TWO_BUS_TEMPLATE).unwrap();
        let gen0 = case.gen[0].clone();
        let cost0 = case.gencost[0].clone();
        case.gen.clear();
        case.gencost.clear();
        let mut costs = Vec::new();
        let (mut lo_sum, mut hi_sum) = (0.0, 0.0);
        for &(lo, width, cost) in &seedless {
            let mut g = gen0.clone();
            g.pmin = lo;
            g.pmax = lo + width;
            lo_sum += lo;
            hi_sum += lo + width;
            costs.push(cost);
            case.gen.push(g);
            case.gencost.push(cost0.clone());
        }
        case.base_mva = 1.0;
        case.bus[1].pd = lo_sum + t * (hi_sum - lo_sum);
        let net = opfkit::build_network(&case).unwrap();
        let p = opfkit::dcopf::merit_order_dispatch(&net, Some(&costs)).unwrap();
        let mut total = 0.0;
        for (pk, g) in p.iter().zip(&net.gens) {
            prop_assert!(*pk >= g.pmin - 1e-12 && *pk <= g.pmax + 1e-12);
            total += pk;
        }
        prop_assert!((total - net.total_load()).abs() < 1e-9);
    }
}

const TWO_BUS_TEMPLATE: &str = "\
function mpc = template
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t380\t1\t1.1\t0.9;
\t2\t1\t100\t30\t0\t0\t1\t1\t0\t380\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t100\t30\t300\t-300\t1\t100\t1\t400\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t2\t1\t0;
];
";
