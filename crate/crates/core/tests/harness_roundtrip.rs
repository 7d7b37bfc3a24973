use std::collections::BTreeSet;
use std::fs::File;

use ift_core::harness::{evaluate_run, observed_nodes};
use ift_core::io::{
    read_reports, read_snapshots, read_truth, write_reports, write_truth, SnapshotWriter,
};
use ift_core::linalg::rank;
use ift_core::sim::{run_experiment, ChangeModel, ExperimentConfig, LossProcess, Observation};
use ift_core::{expected_pdr, Config, Deducer, Variant};

fn noisy_config() -> ExperimentConfig {
    ExperimentConfig {
        sessions: 400,
        seed: 17,
        ..ExperimentConfig::default()
    }
}

/// Replaces sampled delivery ratios with their expected values.
fn analytic(observations: &[Observation]) -> Vec<Observation> {
    observations
        .iter()
        .map(|o| {
            let mut o = o.clone();
            o.report.pdr = expected_pdr(&o.report.transit, &o.truth);
            o
        })
        .collect()
}

#[test]
fn accuracy_recomputed_from_files_matches() {
    let exp = run_experiment(&noisy_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let reports_path = dir.path().join("reports.csv");
    let truth_path = dir.path().join("truth.csv");
    let snap_path = dir.path().join("snapshots.csv");
    write_reports(
        File::create(&reports_path).unwrap(),
        exp.observations.iter().map(|o| &o.report),
    )
    .unwrap();
    write_truth(
        File::create(&truth_path).unwrap(),
        exp.observations.iter().map(|o| (o.report.seq, &o.truth)),
    )
    .unwrap();

    let cfg = Config::default();
    let reports = read_reports(File::open(&reports_path).unwrap()).unwrap();
    let mut eng = Deducer::reactive(cfg, 15);
    let mut w = SnapshotWriter::new(File::create(&snap_path).unwrap()).unwrap();
    for r in reports.iter().cloned() {
        w.write(eng.process(r).unwrap()).unwrap();
    }
    w.finish().unwrap();

    let snaps = read_snapshots(File::open(&snap_path).unwrap()).unwrap();
    let truth = read_truth(File::open(&truth_path).unwrap()).unwrap();
    assert_eq!(snaps.len(), truth.len());
    let scope: BTreeSet<usize> = reports
        .iter()
        .flat_map(|r| r.transit.iter().map(|n| n.0))
        .collect();

    let records = evaluate_run(&exp.observations, &cfg, Variant::Reactive, 15).unwrap();
    assert_eq!(records.len(), snaps.len());
    for ((snap, (seq, g)), rec) in snaps.iter().zip(&truth).zip(&records) {
        assert_eq!(snap.report_seq, *seq);
        assert_eq!(rec.report_seq, *seq);
        let diffs: Vec<f64> = scope
            .iter()
            .map(|&x| (g.as_slice()[x] - snap.d[x]).abs())
            .collect();
        let avg = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let max = diffs.iter().copied().fold(0.0, f64::max);
        assert!(
            (avg - rec.avg_abs_acc).abs() < 1e-12,
            "{seq}: {avg} vs {}",
            rec.avg_abs_acc
        );
        assert!((max - rec.max_abs_acc).abs() < 1e-12);
        assert_eq!(snap.removals_so_far, rec.removals);
    }
}

#[test]
fn noise_free_static_run_becomes_exact_once_identifiable() {
    let cfg_sim = ExperimentConfig {
        change: ChangeModel::stable(),
        loss: LossProcess::none(),
        sessions: 300,
        seed: 4,
        ..ExperimentConfig::default()
    };
    let exp = run_experiment(&cfg_sim).unwrap();
    let obs = analytic(&exp.observations);
    let scope = observed_nodes(&obs);
    let col: Vec<Option<usize>> = (0..15)
        .map(|x| scope.iter().position(|n| n.0 == x))
        .collect();

    // first report after which the observed nodes are identifiable
    let mut rows = Vec::new();
    let mut full_at = None;
    for (i, o) in obs.iter().enumerate() {
        let mut row = vec![0.0; scope.len()];
        for n in &o.report.transit {
            row[col[n.0].unwrap()] = 1.0;
        }
        rows.push(row);
        if rank(&rows, scope.len()) == scope.len() {
            full_at = Some(i);
            break;
        }
    }
    let full_at = full_at.expect("observed nodes become identifiable");

    let cfg = Config::new(0.85, 1000, Default::default()).unwrap();
    let records = evaluate_run(&obs, &cfg, Variant::Reactive, 15).unwrap();
    assert!(records[..full_at].iter().all(|r| r.avg_abs_acc > 1e-6));
    for r in &records[full_at..] {
        assert!(r.avg_abs_acc < 1e-6, "{r:?}");
    }
}

#[test]
fn variants_coincide_on_change_free_noise_free_stream() {
    let cfg_sim = ExperimentConfig {
        change: ChangeModel::stable(),
        loss: LossProcess::none(),
        sessions: 250,
        seed: 9,
        ..ExperimentConfig::default()
    };
    let obs = analytic(&run_experiment(&cfg_sim).unwrap().observations);
    let cfg = Config::default();
    let a = evaluate_run(&obs, &cfg, Variant::Reactive, 15).unwrap();
    let b = evaluate_run(&obs, &cfg, Variant::Plain, 15).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.report_seq, y.report_seq);
        assert!((x.avg_abs_acc - y.avg_abs_acc).abs() < 1e-9);
        assert!((x.max_abs_acc - y.max_abs_acc).abs() < 1e-9);
        assert_eq!(x.removals, 0);
    }
}
