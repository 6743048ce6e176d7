mod common;

use had::panel::{difference, drop_untreated, load_panel, transformed_outcome, OutcomeTransform, Schema};
use had::HadError;
use proptest::prelude::*;

const SMALL: &str = "unit,time,outcome,dose\n\
a,1,1.0,0\na,2,3.0,0.5\n\
b,1,2.0,0\nb,2,2.5,1.0\n\
c,1,0.0,0\nc,2,4.0,2.0\n";

#[test]
fn loads_and_differences_a_small_panel() {
    let p = load_panel(SMALL.as_bytes(), &Schema::default()).unwrap();
    assert_eq!(p.n_units(), 3);
    assert_eq!(p.periods(), &[1, 2]);
    assert_eq!(p.treatment_period(), 2);
    assert_eq!(p.reference_period(), 1);
    let s = difference(&p, 1, 2).unwrap();
    assert_eq!(s.dy, vec![2.0, 0.5, 4.0]);
    assert_eq!(s.d, vec![0.5, 1.0, 2.0]);
}

#[test]
fn custom_columns_and_delimiter() {
    let text = "id;year;y;share\na;1;1;0\na;2;2;1\nb;1;1;0\nb;2;2;2\nc;1;1;0\nc;2;2;3\n";
    let schema = Schema {
        unit: "id".into(),
        time: "year".into(),
        outcome: "y".into(),
        dose: "share".into(),
        delimiter: b';',
        ..Schema::default()
    };
    let p = load_panel(text.as_bytes(), &schema).unwrap();
    assert_eq!(p.unit_doses(), vec![1.0, 2.0, 3.0]);
}

#[test]
fn rejects_malformed_panels() {
    let missing = SMALL.replace("outcome", "y");
    assert!(matches!(load_panel(missing.as_bytes(), &Schema::default()), Err(HadError::MissingColumn(_))));

    let unbalanced = SMALL.lines().take(6).collect::<Vec<_>>().join("\n");
    assert!(matches!(load_panel(unbalanced.as_bytes(), &Schema::default()), Err(HadError::Unbalanced(_))));

    let dup = format!("{SMALL}a,2,3.0,0.5\n");
    assert!(matches!(load_panel(dup.as_bytes(), &Schema::default()), Err(HadError::DuplicateRecord { .. })));

    let early = SMALL.replace("a,1,1.0,0", "a,1,1.0,0.3");
    let schema = Schema { treatment_period: Some(2), ..Schema::default() };
    assert!(matches!(load_panel(early.as_bytes(), &schema), Err(HadError::DoseBeforeTreatment { .. })));
    assert!(matches!(load_panel(early.as_bytes(), &Schema::default()), Err(HadError::InsufficientData(_))));

    let bad = SMALL.replace("3.0", "three");
    assert!(matches!(load_panel(bad.as_bytes(), &Schema::default()), Err(HadError::Parse { .. })));

    let nan = SMALL.replace("3.0", "NaN");
    assert!(matches!(load_panel(nan.as_bytes(), &Schema::default()), Err(HadError::Parse { .. })));
}

#[test]
fn dose_varying_after_treatment_is_rejected() {
    let text = "unit,time,outcome,dose\n\
a,1,0,0\na,2,0,1\na,3,0,2\n\
b,1,0,0\nb,2,0,1\nb,3,0,1\n\
c,1,0,0\nc,2,0,3\nc,3,0,3\n";
    assert!(matches!(load_panel(text.as_bytes(), &Schema::default()), Err(HadError::DoseVaries { .. })));
}

#[test]
fn drop_untreated_counts_removed_units() {
    let text = "unit,time,outcome,dose\n\
a,1,0,0\na,2,1,0\nb,1,0,0\nb,2,1,1\nc,1,0,0\nc,2,1,2\nd,1,0,0\nd,2,5,3\n";
    let p = load_panel(text.as_bytes(), &Schema::default()).unwrap();
    let s = drop_untreated(&difference(&p, 1, 2).unwrap()).unwrap();
    assert_eq!(s.removed_untreated, 1);
    assert_eq!(s.d, vec![1.0, 2.0, 3.0]);
}

#[test]
fn linear_trend_is_zero_at_the_anchor_and_base() {
    let mut r = common::rng(3);
    let periods = [1, 2, 3, 4];
    let y: Vec<Vec<f64>> = (0..10).map(|_| common::normals(&mut r, 4)).collect();
    let p = common::build_panel(&y, &common::uniforms(&mut r, 10, 0.1, 1.0), &periods, 4);
    let t = OutcomeTransform::LinearTrend { base: None, anchor: None };
    for period in [2, 3] {
        let v = transformed_outcome(&p, t, period).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-12));
    }
    // A unit on an exact line has zero deviation everywhere.
    let line: Vec<Vec<f64>> = (0..10).map(|u| periods.iter().map(|&t| u as f64 + 0.5 * t as f64).collect()).collect();
    let p = common::build_panel(&line, &common::uniforms(&mut r, 10, 0.1, 1.0), &periods, 4);
    assert!(transformed_outcome(&p, t, 4).unwrap().iter().all(|x| x.abs() < 1e-12));
}

proptest! {
    #[test]
    fn csv_round_trip(seed in 0u64..1000, n in 3usize..12, t in 2usize..5) {
        let mut r = common::rng(seed);
        let periods: Vec<i64> = (0..t as i64).map(|p| 2000 + p).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|_| common::normals(&mut r, t)).collect();
        let d = common::uniforms(&mut r, n, 0.0, 2.0);
        let p = common::build_panel(&y, &d, &periods, *periods.last().unwrap());
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &Schema::default()).unwrap();
        let q = load_panel(buf.as_slice(), &Schema::default()).unwrap();
        prop_assert_eq!(p.records().collect::<Vec<_>>(), q.records().collect::<Vec<_>>());
        prop_assert_eq!(p.treatment_period(), q.treatment_period());
    }

    #[test]
    fn differencing_is_antisymmetric_and_dose_is_base_free(seed in 0u64..1000) {
        let mut r = common::rng(seed);
        let periods = [1, 2, 3, 4];
        let y: Vec<Vec<f64>> = (0..8).map(|_| common::normals(&mut r, 4)).collect();
        let p = common::build_panel(&y, &common::uniforms(&mut r, 8, 0.1, 1.0), &periods, 3);
        let ab = difference(&p, 1, 3).unwrap();
        let ba = difference(&p, 3, 1).unwrap();
        for (x, y) in ab.dy.iter().zip(&ba.dy) {
            prop_assert_eq!(*x, -*y);
        }
        prop_assert_eq!(&ab.d, &difference(&p, 2, 4).unwrap().d);
    }
}
