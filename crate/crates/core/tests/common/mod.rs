#![allow(dead_code)]

use had::panel::{Panel, Record};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniforms(r: &mut ChaCha8Rng, n: usize, low: f64, high: f64) -> Vec<f64> {
    (0..n).map(|_| low + (high - low) * r.random::<f64>()).collect()
}

pub fn normals(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

/// Panel with `outcomes[unit][period]` over `periods`, dose switching on at `first_treated`.
pub fn build_panel(outcomes: &[Vec<f64>], doses: &[f64], periods: &[i64], first_treated: i64) -> Panel {
    let mut recs = Vec::new();
    for (u, row) in outcomes.iter().enumerate() {
        for (t, &p) in periods.iter().enumerate() {
            recs.push(Record {
                unit: format!("u{u:03}"),
                period: p,
                outcome: row[t],
                dose: if p >= first_treated { doses[u] } else { 0.0 },
                covariates: vec![],
            });
        }
    }
    Panel::from_records(recs, vec![], None).unwrap()
}

/// `max |a - b|` over paired entries.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
