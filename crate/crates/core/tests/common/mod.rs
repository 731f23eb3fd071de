#![allow(dead_code)]

use irtkit::dataio::{parse_canonical, Dataset};

/// Builds a dataset from `(student, item, group, correct)` rows in time order.
pub fn dataset(rows: &[(&str, &str, &str, bool)]) -> Dataset {
    let mut csv = String::from("student_id,item_id,group_id,correct\n");
    for (s, i, g, r) in rows {
        csv.push_str(&format!("{s},{i},{g},{}\n", u8::from(*r)));
    }
    parse_canonical(csv.as_bytes()).unwrap()
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            y[k] = x[k] + eps;
            let hi = f(&y);
            y[k] = x[k] - eps;
            let lo = f(&y);
            y[k] = x[k];
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

/// `‖a − b‖∞ / max(‖b‖∞, 1e-8)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-8);
    diff / scale
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Accuracy by direct count.
pub fn brute_accuracy(pairs: &[(f64, bool)]) -> f64 {
    let hits = pairs.iter().filter(|&&(p, r)| if r { p > 0.5 } else { p <= 0.5 }).count();
    hits as f64 / pairs.len() as f64
}

/// AUC by enumerating every positive/negative pair.
pub fn brute_auc(pairs: &[(f64, bool)]) -> Option<f64> {
    let (mut concordant, mut ties, mut n) = (0.0, 0.0, 0.0);
    for &(sp, _) in pairs.iter().filter(|p| p.1) {
        for &(sn, _) in pairs.iter().filter(|p| !p.1) {
            n += 1.0;
            if sp > sn {
                concordant += 1.0;
            } else if sp == sn {
                ties += 1.0;
            }
        }
    }
    (n > 0.0).then(|| (concordant + 0.5 * ties) / n)
}
