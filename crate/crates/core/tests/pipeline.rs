use richards_ms::harness::report::write_steady_report;
use richards_ms::harness::{
    gen_dataset, run_steady, run_time_dependent, train_network, DatasetMode, Experiment, Network, RunConfig,
    SourceKind,
};
use richards_ms::msfem_online::enrich_with_columns;
use richards_ms::surrogate::TrainConfig;
use richards_ms::fine_solver::PicardConfig;

fn tiny(n_test: usize) -> RunConfig {
    RunConfig {
        fine_n: 8,
        coarse_n: 2,
        nb: vec![2],
        n_train: 6,
        n_test,
        hidden_widths: vec![8],
        picard: PicardConfig {
            n_steps: 6,
            ..RunConfig::default().picard
        },
        schedule: Some(vec![1, 4]),
        train: TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    }
}

fn steady_net(exp: &Experiment) -> Network {
    let data = gen_dataset(exp, 2, DatasetMode::Steady).unwrap();
    train_network(exp, &data).unwrap().into()
}

#[test]
fn single_test_sample_gives_degenerate_aggregate() {
    let exp = Experiment::new(tiny(1)).unwrap();
    let report = run_steady(&exp, &[(2, steady_net(&exp))]).unwrap();
    let r = &report.rows[0];
    assert_eq!(r.l2.values.len(), 1);
    assert!(r.l2.mean == r.l2.min && r.l2.min == r.l2.max);
    assert_eq!(r.l2.highlight, Some(r.l2.mean));
}

#[test]
fn steady_csv_is_deterministic() {
    let exp = Experiment::new(tiny(2)).unwrap();
    let net = steady_net(&exp);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_steady_report(a.path(), &run_steady(&exp, &[(2, net.clone())]).unwrap()).unwrap();
    let exp2 = Experiment::new(tiny(2)).unwrap();
    write_steady_report(b.path(), &run_steady(&exp2, &[(2, steady_net(&exp2))]).unwrap()).unwrap();
    for name in ["steady_basis_error.csv", "steady_l2_error.csv", "steady_h1_error.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn direct_and_predicted_spaces_share_the_offline_block() {
    let exp = Experiment::new(tiny(1)).unwrap();
    let net = steady_net(&exp);
    let kappa = exp.field(6).unwrap().values;
    let run = exp.offline_run(&kappa, 2, &exp.steady_picard()).unwrap();
    let direct: Vec<_> = exp.online_bases(&run, &kappa, 1).unwrap().into_iter().map(|b| b.phi).collect();
    let pred = exp.predicted_columns(&net, &exp.kappa_patches(&kappa).unwrap()).unwrap();
    let a = enrich_with_columns(&run.space, direct).unwrap();
    let b = enrich_with_columns(&run.space, pred).unwrap();
    assert_eq!(a.n_offline, b.n_offline);
    assert_eq!(a.operator.columns()[..a.n_offline], b.operator.columns()[..b.n_offline]);
    let m = exp.ctx.solver.system_matrix(&kappa, run.trace.steps[0].picard.previous_iterate(), 0.0).unwrap();
    let (ga, gb) = (a.operator.galerkin(&m), b.operator.galerkin(&m));
    let k = a.n_offline;
    assert_eq!(ga.view((0, 0), (k, k)), gb.view((0, 0), (k, k)));
    assert_eq!(a.operator.transpose_apply(&run.load)[..k], b.operator.transpose_apply(&run.load)[..k]);
}

#[test]
fn zero_source_time_run_has_zero_errors() {
    let cfg = RunConfig {
        source: SourceKind::Zero,
        ..tiny(2)
    };
    let exp = Experiment::new(cfg).unwrap();
    let modes = [DatasetMode::Time(1), DatasetMode::Time(4)];
    let data = richards_ms::harness::gen_datasets(&exp, 2, &modes).unwrap();
    assert!(data.iter().all(|d| d.records.iter().all(|r| r.phi.iter().all(|&v| v == 0.0))));
    let nets: Vec<(usize, Network)> = [1, 4]
        .into_iter()
        .zip(&data)
        .map(|(s, d)| (s, train_network(&exp, d).unwrap().into()))
        .collect();
    let report = run_time_dependent(&exp, &[(2, nets)]).unwrap();
    let r = &report.rows[0];
    for e in [&r.last_l2, &r.last_h1, &r.bochner_l2, &r.bochner_h1] {
        assert!(e.values.iter().all(|&v| v == 0.0));
    }
    assert_eq!(r.series.iter().map(|p| p.step).collect::<Vec<_>>(), vec![1, 4]);
}

#[test]
fn mismatched_networks_are_rejected() {
    let exp = Experiment::new(tiny(1)).unwrap();
    let net = steady_net(&exp);
    assert!(run_time_dependent(&exp, &[(2, vec![(1, net)])]).is_err());
}
