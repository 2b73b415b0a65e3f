//! Every emitted file parses back to the value it was written from.

use cheapctl::output::{
    phase_entries, phase_matrices, read_phase_long, read_phase_matrix, read_sweep_csv,
    write_phase_long, write_phase_matrix, write_sweep_csv,
};
use cheapctl::{Scenario, SweepResult, SweepRow};
use cheapctl_core::systems::BuiltinSystem;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        (1e-12f64..1.0),
        Just(0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

fn positive() -> impl Strategy<Value = f64> {
    (-10.0f64..3.0).prop_map(|e| 10f64.powf(e))
}

fn row() -> impl Strategy<Value = SweepRow> {
    (
        (
            prop::sample::select(BuiltinSystem::NAMES.to_vec()),
            positive(),
            positive(),
            positive(),
            0usize..5,
            prop::sample::select(vec![
                ("stabilized", 1i8),
                ("diverged", -1),
                ("inconclusive", 0),
                ("failed", 0),
            ]),
        ),
        (
            prop::option::of(finite()),
            prop::option::of(finite()),
            prop::option::of(positive()),
            prop::option::of(finite()),
            prop::option::of(finite()),
        ),
        (
            0usize..1000,
            0usize..100_000,
            0usize..100,
            prop::option::of(positive()),
            prop::option::of(positive()),
            any::<bool>(),
            "[ -~]{0,40}",
        ),
    )
        .prop_map(
            |(
                (system, epsilon, horizon, dt, x0_id, (verdict, code)),
                (lambda, m, escape_time, cost, final_norm),
                (solves, iterations, unconverged, max_grad_norm, t_star, certified, error),
            )| SweepRow {
                system: system.to_string(),
                epsilon,
                horizon,
                dt,
                x0_id,
                verdict: verdict.to_string(),
                code,
                lambda,
                m,
                escape_time,
                cost,
                final_norm,
                solves,
                iterations,
                unconverged,
                max_grad_norm,
                t_star,
                certified,
                error,
            },
        )
}

fn result() -> impl Strategy<Value = SweepResult> {
    (
        "[a-z][a-z0-9_]{0,15}",
        any::<u64>(),
        prop::collection::vec(row(), 0..12),
    )
        .prop_map(|(scenario, seed, rows)| SweepResult {
            scenario,
            seed,
            rows,
        })
}

/// A full `(ε, T)` grid, so every phase matrix is dense.
fn grid_result() -> impl Strategy<Value = SweepResult> {
    (
        prop::collection::btree_set(1u32..1000, 1..4),
        prop::collection::btree_set(1u32..1000, 1..4),
        prop::collection::vec(-1i8..=1, 16),
    )
        .prop_map(|(eps, ts, codes)| {
            let mut rows = Vec::new();
            for (i, e) in eps.iter().enumerate() {
                for (j, t) in ts.iter().enumerate() {
                    let code = codes[(i * 4 + j) % codes.len()];
                    rows.push(SweepRow {
                        system: "linear_nmp".into(),
                        epsilon: *e as f64 * 1e-4,
                        horizon: *t as f64 * 1e-2,
                        dt: 1e-2,
                        x0_id: 0,
                        verdict: String::new(),
                        code,
                        lambda: None,
                        m: None,
                        escape_time: None,
                        cost: None,
                        final_norm: None,
                        solves: 0,
                        iterations: 0,
                        unconverged: 0,
                        max_grad_norm: None,
                        t_star: None,
                        certified: false,
                        error: String::new(),
                    });
                }
            }
            SweepResult {
                scenario: "grid".into(),
                seed: 0,
                rows,
            }
        })
}

const TWO_STATE: [&str; 3] = ["linear_nmp", "linear_nmp_unstable", "pendulum"];

fn scenario() -> impl Strategy<Value = Scenario> {
    (
        // Two-state plants, so every generated x₀ validates.
        prop::collection::vec(prop::sample::select(TWO_STATE.to_vec()), 1..3),
        prop::collection::vec(positive(), 1..5),
        prop::collection::vec(1.0f64..10.0, 1..4),
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..4),
        prop::option::of(1e-4f64..1e-2),
        any::<bool>(),
        any::<u64>(),
    )
        .prop_map(
            |(systems, eps, ts, x0s, ctrl_step, certify, seed)| Scenario {
                name: "generated".into(),
                systems: systems.into_iter().map(str::to_string).collect(),
                epsilon_list: eps,
                dt: ts.iter().copied().fold(f64::INFINITY, f64::min),
                sim_time: ts.iter().copied().fold(0.0, f64::max) * 2.0,
                t_list: ts,
                x0_list: x0s,
                ctrl_step,
                certify,
                seed,
                ..Scenario::default()
            },
        )
}

proptest! {
    #[test]
    fn sweep_csv_round_trips(r in result()) {
        let mut buf = Vec::new();
        write_sweep_csv(&r, &mut buf).unwrap();
        prop_assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn phase_files_round_trip(r in grid_result()) {
        for m in phase_matrices(&r) {
            let mut buf = Vec::new();
            write_phase_matrix(&m, &mut buf).unwrap();
            prop_assert_eq!(read_phase_matrix(buf.as_slice()).unwrap(), m);
        }
        let entries = phase_entries(&r);
        let mut buf = Vec::new();
        write_phase_long(&entries, &mut buf).unwrap();
        prop_assert_eq!(read_phase_long(buf.as_slice()).unwrap(), entries);
    }

    #[test]
    fn scenario_text_round_trips(sc in scenario()) {
        let text = sc.to_text();
        let back = Scenario::parse(&text).unwrap();
        prop_assert_eq!(&back, &sc);
        prop_assert_eq!(back.to_text(), text);
    }
}
