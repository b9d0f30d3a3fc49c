//! Tree-structured Parzen estimator with an expected-improvement style
//! acquisition: candidates are drawn from the good-trial density and ranked
//! by the log-density ratio against the bad-trial density.

use super::{ParameterSpace, Trial, TrialState};
use rand::Rng;
use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

/// Abramowitz–Stegun 7.1.26 rational approximation, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / SQRT_2))
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Mixture of truncated Gaussians on [lo, hi] plus one uniform component,
/// so the density ratio stays bounded where no observation has landed.
struct Kde {
    centers: Vec<f64>,
    sigma: f64,
    lo: f64,
    hi: f64,
}

impl Kde {
    fn new(centers: Vec<f64>, lo: f64, hi: f64) -> Self {
        let range = hi - lo;
        let sigma = if centers.is_empty() {
            range
        } else {
            range / (centers.len() as f64).sqrt()
        };
        Kde { centers, sigma, lo, hi }
    }

    fn pdf(&self, x: f64) -> f64 {
        let uniform = 1.0 / (self.hi - self.lo);
        let mut sum = uniform;
        for &c in &self.centers {
            let mass = normal_cdf((self.hi - c) / self.sigma) - normal_cdf((self.lo - c) / self.sigma);
            sum += normal_pdf((x - c) / self.sigma) / self.sigma / mass.max(1e-12);
        }
        sum / (self.centers.len() + 1) as f64
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let pick = rng.gen_range(0..=self.centers.len());
        if pick == self.centers.len() {
            return rng.gen_range(self.lo..self.hi);
        }
        let c = self.centers[pick];
        for _ in 0..64 {
            let z: f64 = {
                // Box-Muller; two uniforms per normal draw.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            };
            let x = c + z * self.sigma;
            if x >= self.lo && x <= self.hi {
                return x;
            }
        }
        c.clamp(self.lo, self.hi)
    }
}

/// Propose the next point: random while the study is empty, otherwise the
/// best of `n_candidates` draws from the good density ranked by l(x)/g(x).
pub fn tpe_suggest<R: Rng>(
    trials: &[Trial],
    space: &ParameterSpace,
    rng: &mut R,
    gamma: f64,
    n_candidates: usize,
) -> BTreeMap<String, f64> {
    let mut completed: Vec<&Trial> = trials
        .iter()
        .filter(|t| t.state == TrialState::Complete && t.fom.is_finite())
        .collect();
    if completed.is_empty() {
        return space.sample(rng);
    }
    completed.sort_by(|a, b| b.fom.total_cmp(&a.fom).then(a.index.cmp(&b.index)));
    let n_good = ((gamma * completed.len() as f64).ceil() as usize).clamp(1, completed.len());

    let mut good_kdes = Vec::with_capacity(space.dims.len());
    let mut bad_kdes = Vec::with_capacity(space.dims.len());
    for dim in &space.dims {
        let obs = |set: &[&Trial]| -> Vec<f64> {
            set.iter()
                .filter_map(|t| t.x.get(&dim.name))
                .map(|v| dim.to_scale(*v))
                .collect()
        };
        let (lo, hi) = dim.scale_bounds();
        good_kdes.push(Kde::new(obs(&completed[..n_good]), lo, hi));
        bad_kdes.push(Kde::new(obs(&completed[n_good..]), lo, hi));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..n_candidates.max(1) {
        let cand: Vec<f64> = good_kdes.iter().map(|k| k.sample(rng)).collect();
        let score: f64 = cand
            .iter()
            .zip(good_kdes.iter().zip(&bad_kdes))
            .map(|(&x, (l, g))| l.pdf(x).max(1e-300).ln() - g.pdf(x).max(1e-300).ln())
            .sum();
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    let (_, cand) = best.expect("at least one candidate");
    space
        .dims
        .iter()
        .zip(cand)
        .map(|(dim, v)| (dim.name.clone(), dim.from_scale(v)))
        .collect()
}
