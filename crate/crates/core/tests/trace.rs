mod common;

use proptest::prelude::*;
use wattrace::probes::simulated::{Profile, ProfileSpec};
use wattrace::probes::{CounterSpec, Domain, MetricDescriptor, Unit};
use wattrace::trace::{read_csv, read_csv_str, summarize, summarize_metrics, write_csv, write_csv_string, SessionMeta};
use wattrace::{Sample, Trace};

fn cell() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![
        1 => Just(None),
        4 => any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(Some),
    ]
}

fn trace_strategy() -> impl Strategy<Value = Trace> {
    (0usize..5, 1usize..20).prop_flat_map(|(width, len)| {
        (
            proptest::collection::vec(proptest::collection::vec(cell(), width), len),
            proptest::collection::vec(1u64..100_000, len),
            proptest::collection::vec(0.0f64..1e6, len),
        )
            .prop_map(move |(values, steps, deltas)| {
                let schema = (0..width)
                    .map(|i| MetricDescriptor::gauge(format!("CPU_USAGE_{i}"), Unit::Percent, Domain::Core(i as u32)).unwrap())
                    .collect();
                let mut time = common::EPOCH_MS;
                let rows = values
                    .into_iter()
                    .zip(steps)
                    .zip(deltas)
                    .map(|((values, step), delta_ms)| {
                        time += step;
                        Sample { delta_ms, time_ms: time, values }
                    })
                    .collect();
                Trace { meta: SessionMeta::default(), schema, rows }
            })
    })
}

proptest! {
    #[test]
    fn round_trip(t in trace_strategy()) {
        prop_assert_eq!(read_csv_str(&write_csv_string(&t)).unwrap(), t);
    }

    // A 16-bit counter that wraps exactly once sums to the unwrapped total.
    #[test]
    fn wrap_once_matches_unwrapped(start in 0u64..65_536, steps in proptest::collection::vec(0u64..3_000, 2..60)) {
        let total: u64 = steps.iter().sum();
        prop_assume!(start + total >= 65_536 && start + total < 2 * 65_536);
        let unit = 0.5;
        let spec = CounterSpec::new(16, unit).unwrap();
        let mut raw = start;
        let mut cells = vec![Some(raw as f64 * unit)];
        for s in &steps {
            raw = (raw + s) % 65_536;
            cells.push(Some(raw as f64 * unit));
        }
        let t = Trace {
            meta: SessionMeta::default(),
            schema: vec![MetricDescriptor::energy("PACKAGE_ENERGY", Domain::Package, spec).unwrap()],
            rows: cells.into_iter().enumerate().map(|(i, v)| Sample {
                delta_ms: if i == 0 { 0.0 } else { 100.0 },
                time_ms: 100 * i as u64 + 1,
                values: vec![v],
            }).collect(),
        };
        prop_assert_eq!(summarize(&t).unwrap().total_energy_j, total as f64 * unit);
    }

    // Smooth profiles: counter total and power trapezoid agree within 1 %.
    #[test]
    fn integration_paths_agree(base in 1.0f64..50.0, amp_frac in 0.0f64..0.9, period in 1.0f64..10.0) {
        let spec = ProfileSpec::new(Profile::Sinusoid { base, amplitude: base * amp_frac, period_s: period });
        let t = common::simulated_trace(&spec, 10_000, 100);
        let e = summarize_metrics(&t, &["PACKAGE_ENERGY"]).unwrap().total_energy_j;
        let p = summarize_metrics(&t, &["PACKAGE_POWER"]).unwrap().total_energy_j;
        prop_assert!((e - p).abs() <= 0.01 * e, "{} vs {}", e, p);
        let s = summarize(&t).unwrap();
        prop_assert!((s.avg_power_w * s.duration_s - s.total_energy_j).abs() <= 1e-9 * s.total_energy_j);
    }
}

#[test]
fn simulated_counter_wraps_inside_a_session() {
    // 20-bit counter at 1 mJ wraps every 1048.576 J; 600 W for 10 s crosses
    // it several times, never more than once per 100 ms tick.
    let spec = ProfileSpec::constant(600.0).with_counter(1e-3, 20);
    let t = common::simulated_trace(&spec, 10_000, 100);
    let s = summarize(&t).unwrap();
    assert!((s.total_energy_j - 6000.0).abs() < 0.01, "{}", s.total_energy_j);
}

#[test]
fn file_round_trip() {
    let t = common::simulated_trace(&ProfileSpec::constant(4.0), 1_000, 100);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_csv(&t, &path).unwrap();
    assert_eq!(read_csv(&path).unwrap(), t);
}

#[test]
fn reads_plain_csv_without_metadata() {
    let text = "Delta,Time,PACKAGE_ENERGY (J),SYSTEM_POWER (W),GPU0_USAGE,USED_MEMORY\n\
                0,1000,5,10,1,100\n100,1100,6,10,2,100\n";
    let t = read_csv_str(text).unwrap();
    assert_eq!(t.schema[1].domain, Domain::System);
    assert_eq!(t.schema[2].domain, Domain::Gpu(0));
    let s = summarize(&t).unwrap();
    assert_eq!(s.energy_source, "PACKAGE_ENERGY");
    assert!((s.total_energy_j - 1.0).abs() < 1e-12);
}
