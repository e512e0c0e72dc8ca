use std::collections::HashSet;

use ndarray::Array2;
use rand::Rng;

use super::*;
use crate::codec::EXPERIMENT_RADICES;
use crate::puf::{CellParams, CELL_COUNT};
use crate::rng;

/// A PUF answering `pattern` to every challenge: TE-only cells always read
/// 1.0, TM-only cells always read 0.0.
fn constant_puf(pattern: u32) -> PufRealization {
    let cells = (0..CELL_COUNT)
        .map(|i| {
            let mut c = CellParams::identity();
            if (pattern >> (CELL_COUNT - 1 - i)) & 1 == 1 {
                c.output.a_tm = 1e-200;
                c.with_threshold(1.0)
            } else {
                c.output.a_te = 1e-200;
                c.with_threshold(0.5)
            }
        })
        .collect();
    PufRealization::from_cells(0, DEFAULT_SIGMA, cells).unwrap()
}

fn quick_spec(rc: u32, rr: u32, n_train: usize, fold: usize) -> ExperimentSpec {
    ExperimentSpec {
        hidden_width: 32,
        n_hidden: 2,
        test_size: 500,
        n_folds: 2,
        train: TrainConfig {
            max_steps: 300,
            min_steps: 100,
            ..TrainConfig::default()
        },
        ..ExperimentSpec::new(5, rc, rr, n_train, fold)
    }
}

#[test]
fn splits_are_disjoint_and_deterministic() {
    let puf = realize_puf(3, DEFAULT_SIGMA).unwrap();
    let splits = make_splits(&puf, 10, 5, 2000, 42).unwrap();
    assert_eq!(splits.len(), 5);
    for (train, test) in &splits {
        assert_eq!((train.len(), test.len()), (10, 2000));
        let seen = train.challenge_set();
        assert!(test.challenges().all(|c| !seen.contains(&c)));
        for crp in train.crps().iter().chain(test.crps()) {
            assert_eq!(puf.evaluate(crp.challenge).unwrap(), crp.response);
        }
    }
    assert_ne!(splits[0].0, splits[1].0);
    assert_eq!(splits, make_splits(&puf, 10, 5, 2000, 42).unwrap());
    assert_ne!(splits, make_splits(&puf, 10, 5, 2000, 43).unwrap());
    assert!(matches!(
        make_splits(&puf, 1 << 24, 5, 2000, 42),
        Err(Error::ExhaustedDomain(_))
    ));
}

#[test]
fn prepare_widths() {
    let ds = CrpDataset::new(
        0,
        0.1,
        0,
        0,
        vec![
            crate::puf::Crp { challenge: 0, response: 0 },
            crate::puf::Crp { challenge: 5, response: 9 },
        ],
    )
    .unwrap();
    let (x, y) = prepare_examples(&ds, 2, 2).unwrap();
    assert_eq!((x.ncols(), y.ncols()), (24, 24));
    let (x, y) = prepare_examples(&ds, 3, 10).unwrap();
    assert_eq!((x.ncols(), y.ncols()), (16, 8));
    assert!(x.row(0).iter().all(|&v| v == 0.0));
    assert_eq!(x.row(1).to_vec()[14..], [1.0, 2.0]);
    assert_eq!(y.row(1).to_vec()[7], 9.0);
    let xn = encode_challenges(&[5], 3, true).unwrap();
    assert_eq!(xn.row(0).to_vec()[14..], [0.5, 1.0]);
}

#[test]
fn evaluation_chain_examples() {
    let spec4 = RadixSpec::for_24_bit(4).unwrap();
    let b = digits_to_bits(&[1.2; 12], &spec4, Overflow::Wrap).unwrap();
    assert_eq!(b.value(), 5_592_405);
    assert_eq!(b.value(), 0x555555);

    let spec3 = RadixSpec::for_24_bit(3).unwrap();
    let b = digits_to_bits(&[2.0; 16], &spec3, Overflow::Wrap).unwrap();
    assert_eq!(b.value(), 9_492_288);
    assert_eq!(43_046_720 - 2 * 16_777_216, 9_492_288);
    let b = digits_to_bits(&[2.0; 16], &spec3, Overflow::Clamp).unwrap();
    assert_eq!(b.value(), 0xFFFFFF);

    assert!(digits_to_bits(&[f64::NAN; 12], &spec4, Overflow::Wrap).is_err());
}

#[test]
fn evaluation_chain_is_identity_on_true_digits() {
    let mut r = rng::stream(1, "pipeline", 0);
    for &radix in &EXPERIMENT_RADICES {
        let spec = RadixSpec::for_24_bit(radix).unwrap();
        for _ in 0..500 {
            let v: u32 = r.random_range(0..1 << 24);
            let raw: Vec<f64> = encode(u64::from(v), &spec)
                .unwrap()
                .digits()
                .iter()
                .map(|&d| f64::from(d) + r.random_range(-0.49..0.49))
                .collect();
            assert_eq!(digits_to_bits(&raw, &spec, Overflow::Wrap).unwrap().value(), v);
        }
    }
}

#[test]
fn bit_accuracy_examples() {
    let truth: Vec<BitVector24> = [0u64, 0xABCDEF, 0xFFFFFF].iter().map(|&v| value_to_bits(v).unwrap()).collect();
    let acc = bit_accuracy(&truth, &truth).unwrap();
    assert_eq!((acc.per_bit, acc.mean), ([1.0; 24], 1.0));
    let comp: Vec<BitVector24> = truth.iter().map(|b| value_to_bits(u64::from(b.value() ^ 0xFFFFFF)).unwrap()).collect();
    let acc = bit_accuracy(&comp, &truth).unwrap();
    assert_eq!((acc.per_bit, acc.mean), ([0.0; 24], 0.0));
    let acc = bit_accuracy(&[value_to_bits(0b1001).unwrap()], &[value_to_bits(0b1010).unwrap()]).unwrap();
    assert_eq!(acc.mean, 22.0 / 24.0);
    assert_eq!(acc.per_bit[22..], [0.0, 0.0]);
    assert!(bit_accuracy(&truth[..1], &truth).is_err());
    assert!(bit_accuracy(&[], &[]).is_err());
}

#[test]
fn perfect_outputs_recover_truth() {
    let rr = 27;
    let values = [0u32, 1, 0xABCDEF, 0xFFFFFF];
    let y = digit_matrix(&values, rr).unwrap();
    let bits = outputs_to_bits(&y.view(), rr, Overflow::Wrap).unwrap();
    assert_eq!(bits.iter().map(|b| b.value()).collect::<Vec<_>>(), values);
}

#[test]
fn prediction_requires_inference_mode() {
    let spec = quick_spec(2, 2, 10, 0);
    let model = MlpModel::new(spec.model_config().unwrap()).unwrap();
    assert!(matches!(
        predict_response_bits(&model, &[1, 2], 2, 2, &EvalOptions::default()),
        Err(Error::InvalidState(_))
    ));
}

#[test]
fn output_scale_rules() {
    let mut spec = quick_spec(2, 10, 10, 0);
    assert_eq!(spec.model_config().unwrap().output_scale, 9.0);
    spec.scale_rule = ScaleRule::WidthMinusOne;
    assert_eq!(spec.model_config().unwrap().output_scale, 7.0);
    spec.rr = 1;
    assert!(spec.validate().is_err());
    let bad_fold = ExperimentSpec { fold_index: 2, ..quick_spec(2, 2, 10, 0) };
    assert!(bad_fold.validate().is_err());
}

#[test]
fn constant_puf_is_learned_exactly() {
    let puf = constant_puf(0xA5C30F);
    assert_eq!(puf.evaluate(0x123456).unwrap(), 0xA5C30F);
    let spec = ExperimentSpec {
        train: TrainConfig::default(),
        hidden_width: 64,
        ..quick_spec(2, 2, 2000, 0)
    };
    let r = run_experiment_with_puf(&spec, &puf).unwrap();
    assert_eq!(r.mean_bit_accuracy, 1.0, "{r:?}");
}

#[test]
fn experiments_are_deterministic() {
    let spec = quick_spec(3, 4, 30, 1);
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.per_bit_accuracy.len(), 24);
    let mean = a.per_bit_accuracy.iter().sum::<f64>() / 24.0;
    assert!((mean - a.mean_bit_accuracy).abs() < 1e-12);
}

#[test]
fn untrained_model_scores_near_chance() {
    let puf = realize_puf(8, DEFAULT_SIGMA).unwrap();
    let (_, test) = make_split(&puf, 10, 0, 10_000, 0).unwrap();
    let truth: Vec<BitVector24> = test.responses().map(|r| value_to_bits(u64::from(r)).unwrap()).collect();
    let challenges: Vec<u32> = test.challenges().collect();
    for (rc, rr) in [(2, 2), (2, 10), (3, 4), (4, 64)] {
        let spec = ExperimentSpec {
            hidden_width: 64,
            ..ExperimentSpec::new(8, rc, rr, 10, 0)
        };
        let mut model = MlpModel::new(spec.model_config().unwrap()).unwrap();
        model.set_mode(Mode::Inference);
        let pred = predict_response_bits(&model, &challenges, rc, rr, &EvalOptions::default()).unwrap();
        let acc = bit_accuracy(&pred, &truth).unwrap();
        assert!((0.45..=0.55).contains(&acc.mean), "({rc},{rr}): {}", acc.mean);
    }
}

fn fake(rc: u32, rr: u32, n: usize, fold: usize, per_bit: Vec<f64>) -> ExperimentResult {
    let mean = per_bit.iter().sum::<f64>() / per_bit.len() as f64;
    ExperimentResult {
        spec: ExperimentSpec::new(1, rc, rr, n, fold),
        init_seed: 0,
        train_seed: 0,
        per_bit_accuracy: per_bit,
        mean_bit_accuracy: mean,
        steps: 1000,
        status: RunStatus::Plateau,
        final_loss: 0.1,
        message: None,
    }
}

#[test]
fn summary_examples() {
    let mut bits = vec![0.5; 24];
    bits[3] = 0.7;
    bits[9] = 0.3;
    let single = summarize(&[fake(2, 2, 10, 0, bits)]).unwrap();
    assert_eq!(single.rows.len(), 1);
    assert_eq!(single.rows[0].avg_acc, 0.5);
    assert_eq!((single.rows[0].max_bit_acc, single.rows[0].min_bit_acc), (0.7, 0.3));

    let two = summarize(&[fake(2, 2, 10, 0, vec![0.5; 24]), fake(2, 2, 10, 1, vec![0.6; 24])]).unwrap();
    assert!((two.rows[0].avg_acc - 0.55).abs() < 1e-12);

    // Hand-computed: group (2,2,10) pools means 0.5 and 0.75 -> 0.625, bit
    // extremes 0.25 and 1.0; group (3,2,10) is alone.
    let mut a = vec![0.5; 24];
    a[0] = 0.25;
    a[1] = 0.75;
    let mut b = vec![0.75; 24];
    b[2] = 1.0;
    b[3] = 0.5;
    let results = [
        fake(2, 2, 10, 0, a),
        fake(2, 2, 10, 1, b),
        fake(3, 2, 10, 0, vec![0.4; 24]),
        ExperimentResult::failed(ExperimentSpec::new(1, 3, 2, 10, 1), &Error::invalid("boom")),
    ];
    let s = summarize(&results).unwrap();
    assert_eq!(s.rows.len(), 2);
    assert!((s.rows[0].avg_acc - 0.625).abs() < 1e-12);
    assert_eq!((s.rows[0].max_bit_acc, s.rows[0].min_bit_acc), (1.0, 0.25));
    assert_eq!((s.rows[1].rc, s.rows[1].experiments), (3, 1));
    assert!((s.rows[1].avg_acc - 0.4).abs() < 1e-12);
    for r in &s.rows {
        assert!(r.min_bit_acc <= r.avg_acc && r.avg_acc <= r.max_bit_acc);
    }
    assert!(summarize(&[]).is_err());
}

#[test]
fn csv_formats() {
    let s = summarize(&[fake(2, 2, 10, 0, vec![0.5; 24])]).unwrap();
    let text = summary_csv(&s);
    assert_eq!(text, "rc,rr,n_train,avg_acc,max_bit_acc,min_bit_acc\n2,2,10,0.500000,0.500000,0.500000\n");
    assert_eq!(text.lines().count(), 2);
    assert_eq!(summary_csv(&s), text);

    let results = [
        fake(2, 2, 10, 0, (0..24).map(|b| b as f64 / 24.0).collect()),
        ExperimentResult::failed(ExperimentSpec::new(1, 3, 2, 10, 1), &Error::invalid("boom")),
    ];
    let rows: Vec<ResultRow> = results.iter().map(ExperimentResult::row).collect();
    let text = results_csv(&rows);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), RESULTS_HEADER.as_str());
    assert!(lines.next().unwrap().starts_with("1,2,2,10,0,0.479167,0.000000,0.041667,"));
    assert!(text.ends_with(",0,failed\n"));
    let back = parse_results_csv(&text).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].per_bit[1], 0.041667);
    assert_eq!(back[0].status, RunStatus::Plateau);
    assert!(back[1].per_bit.is_empty() && back[1].mean_acc.is_nan());
    assert_eq!(results_csv(&back), text);

    assert!(parse_results_csv("a,b\n").is_err());
    assert!(parse_results_csv(&format!("{}\n1,2\n", *RESULTS_HEADER)).is_err());
}

#[test]
fn full_grid_has_6600_cells() {
    let cfg = SweepConfig::default();
    let specs = cfg.experiments();
    assert_eq!(specs.len(), 6600);
    let keys: HashSet<_> = specs.iter().map(|s| (s.puf_seed, s.rc, s.rr, s.n_train, s.fold_index)).collect();
    assert_eq!(keys.len(), 6600);
}

#[test]
fn sweep_config_toml() {
    let cfg = SweepConfig::from_toml(
        "puf_seeds = [3]\nrc = [2]\nrr = [2, 4]\nn_train = [10]\nfolds = 2\ntest_size = 100\n[train]\nmax_steps = 50\n",
    )
    .unwrap();
    assert_eq!(cfg.experiments().len(), 4);
    assert_eq!(cfg.train.max_steps, 50);
    assert_eq!(cfg.train.lr0, 0.001);
    assert_eq!(SweepConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert!(SweepConfig::from_toml("colour = 1\n").is_err());
    assert!(SweepConfig::from_toml("rc = [1]\n").is_err());
    assert!(SweepConfig::from_toml("[train]\nlr = 1\n").is_err());
}

fn tiny_sweep() -> SweepConfig {
    SweepConfig {
        puf_seeds: vec![2],
        rc: vec![2],
        rr: vec![2],
        n_train: vec![10],
        folds: 2,
        test_size: 200,
        hidden_width: 16,
        n_hidden: 2,
        train: TrainConfig {
            max_steps: 40,
            ..TrainConfig::default()
        },
        ..SweepConfig::default()
    }
}

#[test]
fn sweep_runs_and_resumes() {
    let cfg = tiny_sweep();
    let plain = run_sweep(&cfg, 1, None).unwrap();
    assert_eq!(plain.len(), 2);
    assert_eq!(plain.iter().map(|r| r.spec.fold_index).collect::<Vec<_>>(), [0, 1]);

    let dir = tempfile::tempdir().unwrap();
    let first = run_sweep(&cfg, 2, Some(dir.path())).unwrap();
    assert_eq!(first, plain);
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 2);

    // Plant a marker in one cached cell: a resumed sweep must reuse it
    // verbatim and recompute only the missing one.
    let cached = dir.path().join("p2-c2-r2-n10-f0.json");
    let mut planted: ExperimentResult = serde_json::from_str(&std::fs::read_to_string(&cached).unwrap()).unwrap();
    planted.message = Some("from cache".into());
    std::fs::write(&cached, serde_json::to_string(&planted).unwrap()).unwrap();
    std::fs::remove_file(dir.path().join("p2-c2-r2-n10-f1.json")).unwrap();
    let resumed = run_sweep(&cfg, 1, Some(dir.path())).unwrap();
    assert_eq!(resumed[0].message.as_deref(), Some("from cache"));
    assert_eq!(resumed[1], plain[1]);

    // A cell recorded under a different config is recomputed.
    let other = SweepConfig { master_seed: 9, ..cfg };
    let fresh = run_sweep(&other, 1, Some(dir.path())).unwrap();
    assert!(fresh[0].message.is_none());
}

#[test]
fn failed_cells_do_not_stop_a_sweep() {
    let cfg = SweepConfig {
        test_size: (1 << 24) - 5,
        ..tiny_sweep()
    };
    let r = run_sweep(&cfg, 1, None).unwrap();
    assert_eq!(r.len(), 2);
    assert!(r.iter().all(|x| x.status == RunStatus::Failed && x.message.is_some()));
}

#[test]
fn digit_matrix_shape() {
    let m: Array2<f64> = digit_matrix(&[7, 8], 2).unwrap();
    assert_eq!(m.dim(), (2, 24));
}

