use qmpx::designer::{run, IterationConfig};
use qmpx::matrix::ComplexMatrix;
use qmpx::scenario::{make_case, CaseParams, CaseTag, ChannelSpec, ScenarioFile};
use qmpx::sim::{
    emit_csv, run_initstudy, run_sweep, uniform_pa, write_csv, CurveRow, Strategy, SweepSpec,
};

const HEADER: &str = "snr_db,strategy,initializer,analytic_mse,empirical_mse,trials,skipped";

fn rows_of(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

/// A scenario file listing every channel of one draw, so the trial seed no
/// longer matters.
fn pinned(case: CaseTag, params: CaseParams) -> ScenarioFile {
    let s = make_case(case, &params).unwrap();
    let channels = s
        .links
        .iter()
        .map(|l| ChannelSpec {
            from: s.nodes[l.from].name.clone(),
            to: s.nodes[l.to].name.clone(),
            h: rows_of(&l.channel.mean),
        })
        .collect();
    ScenarioFile {
        case,
        params,
        channels,
        errors: Vec::new(),
    }
}

fn small_spec(case: CaseTag, snr: Vec<f64>, trials: usize, symbols: usize) -> SweepSpec {
    let mut spec = SweepSpec::new(
        ScenarioFile {
            case,
            params: CaseParams::default(),
            channels: Vec::new(),
            errors: Vec::new(),
        },
        snr,
    );
    spec.trials = trials;
    spec.symbols = symbols;
    spec.seed = 17;
    spec.iteration = IterationConfig {
        max_sweeps: 15,
        ..IterationConfig::default()
    };
    spec
}

fn rel_gap(r: &CurveRow) -> f64 {
    (r.empirical_mse - r.analytic_mse).abs() / r.analytic_mse
}

fn csv_bytes(rows: &[CurveRow]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(rows, &mut out).unwrap();
    out
}

#[test]
fn one_trial_on_pinned_channels_is_a_direct_run() {
    let file = pinned(
        CaseTag::Example1,
        CaseParams {
            seed: 5,
            ..CaseParams::default()
        },
    );
    let mut spec = small_spec(CaseTag::Example1, vec![10.0], 1, 500);
    spec.scenario = file.clone();
    let rows = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 2);

    let s = file
        .build_with(&CaseParams {
            snr_db: 10.0,
            ..file.params.clone()
        })
        .unwrap();
    let (d, _) = run(&s, &spec.iteration).unwrap();
    let proposed = rows
        .iter()
        .find(|r| r.strategy == Strategy::Proposed)
        .unwrap();
    assert_eq!(proposed.analytic_mse, s.sum_mse(&d).unwrap());
    let upa = rows
        .iter()
        .find(|r| r.strategy == Strategy::UniformPA)
        .unwrap();
    assert_eq!(
        upa.analytic_mse,
        s.sum_mse(&uniform_pa(&s).unwrap()).unwrap()
    );
    assert!(rows.iter().all(|r| r.trials == 1 && r.skipped == 0));
}

#[test]
fn empirical_mse_tracks_analytic_at_ten_thousand_symbols() {
    for case in [CaseTag::Example1, CaseTag::Example2TwoWay] {
        let rows = run_sweep(&small_spec(case, vec![0.0, 15.0, 30.0], 10, 10_000)).unwrap();
        for r in &rows {
            assert!(rel_gap(r) < 0.02, "{case:?} {r:?}");
        }
    }
}

#[test]
fn gap_shrinks_with_more_symbols() {
    let total = |symbols| -> f64 {
        run_sweep(&small_spec(
            CaseTag::Example1,
            vec![0.0, 10.0, 20.0, 30.0],
            8,
            symbols,
        ))
        .unwrap()
        .iter()
        .map(rel_gap)
        .sum()
    };
    let (coarse, fine) = (total(1_000), total(10_000));
    assert!(fine < coarse, "{fine} vs {coarse}");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let spec = small_spec(CaseTag::Example2TwoWay, vec![0.0, 20.0], 3, 500);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit_csv(&run_sweep(&spec).unwrap(), &a).unwrap();
    emit_csv(&run_sweep(&spec).unwrap(), &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let mut other = spec.clone();
    other.seed += 1;
    assert_ne!(
        csv_bytes(&run_sweep(&other).unwrap()),
        std::fs::read(&a).unwrap()
    );
}

#[test]
fn rows_round_trip_through_a_reader() {
    let rows = run_sweep(&small_spec(CaseTag::Example1, vec![5.0], 2, 200)).unwrap();
    let bytes = csv_bytes(&rows[..1]);
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER);
    assert_eq!(text.lines().count(), 2);
    let back: Vec<CurveRow> = csv::Reader::from_reader(&bytes[..])
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(back, rows[..1]);
}

#[test]
fn column_order_ignores_strategy_order() {
    let mut spec = small_spec(CaseTag::Example1, vec![5.0], 1, 100);
    spec.strategies = vec![Strategy::UniformPA, Strategy::Proposed];
    let swapped = csv_bytes(&run_sweep(&spec).unwrap());
    spec.strategies = vec![Strategy::Proposed, Strategy::UniformPA];
    let plain = csv_bytes(&run_sweep(&spec).unwrap());
    assert_eq!(
        String::from_utf8(swapped.clone())
            .unwrap()
            .lines()
            .next()
            .unwrap(),
        HEADER
    );
    assert_eq!(swapped, plain);
}

#[test]
fn empty_rows_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_csv::<CurveRow>(&[], dir.path().join("x.csv")).is_err());
}

#[test]
fn initstudy_traces_are_padded_and_descend() {
    let mut spec = small_spec(CaseTag::Example1, vec![10.0], 3, 100);
    spec.initializers = vec![
        qmpx::designer::Initializer::FullRankIdentityFeasible,
        qmpx::designer::Initializer::FullRankIdentityInfeasible,
    ];
    let (curves, traces) = run_initstudy(&spec).unwrap();
    assert_eq!(curves.len(), 2);
    assert!(curves.iter().all(|r| r.strategy == Strategy::Proposed));
    for init in &spec.initializers {
        let t: Vec<_> = traces.iter().filter(|r| r.initializer == *init).collect();
        assert_eq!(t.len(), spec.iteration.max_sweeps + 1);
        for w in t.windows(2) {
            assert!(w[1].mean_objective <= w[0].mean_objective + 1e-9);
        }
        let last = curves
            .iter()
            .find(|r| r.initializer == Some(*init))
            .unwrap();
        assert!(
            (t.last().unwrap().mean_objective - last.analytic_mse).abs()
                < 1e-12 * last.analytic_mse
        );
    }
}
