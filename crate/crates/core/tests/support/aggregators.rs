use super::ensure;
use fedshift::federation::{bulyan, fedavg, foolsgold, foolsgold_weights, krum};
use fedshift::rng::stream;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn honest(rng: &mut impl Rng, n: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, spread).unwrap();
    (0..n).map(|_| (0..dim).map(|_| noise.sample(rng)).collect()).collect()
}

pub fn check_fedavg(trials: u64) -> Result<(), String> {
    for seed in 0..trials {
        let mut rng = stream(seed, "fedavg", &[]);
        let n = rng.random_range(1..12);
        let ups = honest(&mut rng, n, 7, 3.0);
        let mut want = vec![0.0; 7];
        for u in &ups {
            for (w, v) in want.iter_mut().zip(u) {
                *w += v;
            }
        }
        for w in &mut want {
            *w /= n as f64;
        }
        let got = fedavg(&ups, None).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("seed {seed}: {got:?} != {want:?}"))?;
    }
    Ok(())
}

pub fn check_krum(trials: u64) -> Result<(), String> {
    for seed in 0..trials {
        let mut rng = stream(seed, "krum", &[]);
        let mut ups = honest(&mut rng, 4, 10, 0.01);
        let dir: Vec<f64> = (0..10).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        let outlier: Vec<f64> = dir.iter().map(|x| 1e3 * x / norm).collect();
        let at = rng.random_range(0..5);
        ups.insert(at, outlier);
        let pick = krum(&ups, 1).map_err(|e| e.to_string())?;
        ensure(pick != at, || format!("seed {seed}: selected the outlier"))?;
    }
    Ok(())
}

/// `f = 2` Byzantine slots, up to `f` of them filled with one of three
/// corruption styles; every output coordinate must stay inside the honest
/// coordinate range.
pub fn check_bulyan(trials: u64) -> Result<(), String> {
    let f = 2;
    for trial in 0..trials {
        let mut rng = stream(trial, "bulyan", &[]);
        let good = honest(&mut rng, 9, 6, 1.0);
        let mut ups = good.clone();
        for k in 0..rng.random_range(0..=f) {
            let bad: Vec<f64> = match (trial + k as u64) % 3 {
                0 => (0..6).map(|_| rng.random_range(-1e4..1e4)).collect(),
                1 => vec![1e6; 6],
                _ => good[0].iter().map(|v| v + 50.0).collect(),
            };
            let at = rng.random_range(0..=ups.len());
            ups.insert(at, bad);
        }
        while ups.len() < 4 * f + 3 {
            ups.push(honest(&mut rng, 1, 6, 1.0).remove(0));
        }
        let honest_rows: Vec<&Vec<f64>> = ups.iter().filter(|u| u.iter().all(|v| v.abs() < 20.0)).collect();
        let (_, out) = bulyan(&ups, f).map_err(|e| e.to_string())?;
        for (c, o) in out.iter().enumerate() {
            let lo = honest_rows.iter().map(|u| u[c]).fold(f64::INFINITY, f64::min);
            let hi = honest_rows.iter().map(|u| u[c]).fold(f64::NEG_INFINITY, f64::max);
            ensure(lo <= *o && *o <= hi, || format!("trial {trial} coord {c}: {o} outside [{lo}, {hi}]"))?;
        }
    }
    Ok(())
}

/// cos(pair, pair) = 1, cos(pair, solo) = 1/2. Pardoning scales the solo
/// row by 0.5, so the solo client's max similarity is 0.25 and its raw
/// weight 0.75; the pair gets 1 - 1 = 0. After normalising by 0.75 the solo
/// weight hits the 0.99 cap and the logit clips it to 1.
pub fn check_foolsgold() -> Result<(), String> {
    let pair = vec![1.0, 1.0, 0.0];
    let solo = vec![1.0, 0.0, 1.0];
    let histories = vec![pair.clone(), pair, solo];
    let w = foolsgold_weights(&histories).map_err(|e| e.to_string())?;
    ensure(w == [0.0, 0.0, 1.0], || format!("weights {w:?}"))?;

    let ups: Vec<Vec<f64>> = [5.0, 5.0, -1.0].iter().map(|&u| vec![u, 0.0, 0.0]).collect();
    let (w, out) = foolsgold(&ups, &histories).map_err(|e| e.to_string())?;
    ensure(w[0] < w[2] && w[1] < w[2], || format!("pair not down-weighted: {w:?}"))?;
    ensure(out == [-1.0, 0.0, 0.0], || format!("aggregate {out:?}"))
}
