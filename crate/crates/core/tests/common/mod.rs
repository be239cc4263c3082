//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use rerank_core::hsmm::HsmmModel;
use rerank_core::logmodel::{parse_sessions, ParseOptions, Session};
use rerank_core::synthgen::{generate_strings, parse_truth, SynthConfig, TruthRow};

/// One segmentation: `(state, duration)` blocks covering the sequence.
pub type Segmentation = Vec<(usize, usize)>;

/// Every state/duration segmentation of `len` steps with no repeated
/// neighbouring states.
pub fn segmentations(states: usize, max_duration: usize, len: usize) -> Vec<Segmentation> {
    fn go(m: usize, dmax: usize, left: usize, prev: Option<usize>, cur: &mut Segmentation, out: &mut Vec<Segmentation>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for j in 0..m {
            if Some(j) == prev {
                continue;
            }
            for d in 1..=dmax.min(left) {
                cur.push((j, d));
                go(m, dmax, left - d, Some(j), cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(states, max_duration, len, None, &mut Vec::new(), &mut out);
    out
}

/// Joint probability of a segmentation and the observations it covers.
pub fn path_probability(model: &HsmmModel, seg: &Segmentation, obs: &[usize]) -> f64 {
    let mut p = 1.0;
    let mut t = 0;
    for (k, &(j, d)) in seg.iter().enumerate() {
        p *= if k == 0 {
            model.init(j, d)
        } else {
            let (i, dp) = seg[k - 1];
            model.trans(i, dp, j, d)
        };
        for &o in &obs[t..t + d] {
            p *= model.emit(j, o);
        }
        t += d;
    }
    p
}

pub fn brute_likelihood(model: &HsmmModel, obs: &[usize]) -> f64 {
    segmentations(model.states(), model.max_duration(), obs.len())
        .iter()
        .map(|s| path_probability(model, s, obs))
        .sum()
}

/// `P(last segment of o_1..t is (j, d) | o_1..t)`, laid out `j * D + d - 1`.
pub fn brute_filter(model: &HsmmModel, obs: &[usize], t: usize) -> Vec<f64> {
    let dmax = model.max_duration();
    let mut out = vec![0.0; model.states() * dmax];
    let mut total = 0.0;
    for s in segmentations(model.states(), dmax, t) {
        let p = path_probability(model, &s, &obs[..t]);
        let (j, d) = *s.last().unwrap();
        out[j * dmax + d - 1] += p;
        total += p;
    }
    out.iter_mut().for_each(|x| *x /= total);
    out
}

/// `P(next segment is (j, d) | o_1..t)`.
pub fn brute_predict(model: &HsmmModel, obs: &[usize], t: usize) -> Vec<f64> {
    let (m, dmax) = (model.states(), model.max_duration());
    let mut out = vec![0.0; m * dmax];
    let mut total = 0.0;
    for s in segmentations(m, dmax, t) {
        let p = path_probability(model, &s, &obs[..t]);
        total += p;
        let (i, dp) = *s.last().unwrap();
        for j in 0..m {
            for d in 1..=dmax {
                out[j * dmax + d - 1] += p * model.trans(i, dp, j, d);
            }
        }
    }
    out.iter_mut().for_each(|x| *x /= total);
    out
}

/// Posterior-weighted counts `(init, trans, emit)` for one sequence.
pub fn brute_counts(model: &HsmmModel, obs: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (m, dmax, v) = (model.states(), model.max_duration(), model.symbols());
    let md = m * dmax;
    let mut init = vec![0.0; md];
    let mut trans = vec![0.0; md * md];
    let mut emit = vec![0.0; m * v];
    let paths = segmentations(m, dmax, obs.len());
    let probs: Vec<f64> = paths.iter().map(|s| path_probability(model, s, obs)).collect();
    let total: f64 = probs.iter().sum();
    for (s, p) in paths.iter().zip(&probs) {
        let w = p / total;
        let (j0, d0) = s[0];
        init[j0 * dmax + d0 - 1] += w;
        for pair in s.windows(2) {
            let (i, dp) = pair[0];
            let (j, d) = pair[1];
            trans[(i * dmax + dp - 1) * md + j * dmax + d - 1] += w;
        }
        let mut t = 0;
        for &(j, d) in s {
            for &o in &obs[t..t + d] {
                emit[j * v + o] += w;
            }
            t += d;
        }
    }
    (init, trans, emit)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// `(I + X^T X)^{-1} X^T r`.
pub fn ridge(xs: &[Vec<f64>], rs: &[f64]) -> Vec<f64> {
    let d = xs[0].len();
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for (x, r) in xs.iter().zip(rs) {
        for i in 0..d {
            b[i] += r * x[i];
            for j in 0..d {
                a[i][j] += x[i] * x[j];
            }
        }
    }
    gauss_solve(a, b)
}

pub fn synth_sessions(cfg: &SynthConfig) -> (Vec<Session>, Vec<TruthRow>, String) {
    let (log, truth, _) = generate_strings(cfg).expect("valid synth config");
    let (sessions, stats) = parse_sessions(&log, ParseOptions { strict: true }).expect("synthetic log parses");
    assert_eq!(stats.malformed, 0);
    (sessions, parse_truth(&truth).expect("truth parses"), log)
}

/// Three-sigma band for a binomial proportion.
pub fn within_3_sigma(hits: u64, n: u64, p: f64) -> bool {
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    ((hits as f64 / n as f64) - p).abs() <= 3.0 * sigma
}
