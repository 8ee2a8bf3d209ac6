//! Two-component one-dimensional Gaussian mixture fitting via EM, and
//! the quality gate that keeps only samples assigned to the high-mean
//! mode. Scores arrive from files or calls; this module never computes
//! them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scored sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScoreSample {
    pub id: String,
    pub score: f64,
}

/// A fitted mixture component.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub stdev: f64,
}

/// A fitted two-component mixture. Components are ordered by mean
/// ascending, so `components[1]` is the high-confidence mode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: [GmmComponent; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after each EM iteration.
    pub log_likelihood_trace: Vec<f64>,
}

/// EM fitting configuration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Variance floor as a fraction of the data range.
    pub sigma_floor: f64,
    /// Unused by the deterministic median-split initialization; kept so
    /// callers can thread one seed through every stage.
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig { max_iter: 200, tol: 1e-8, sigma_floor: 1e-4, seed: 7 }
    }
}

fn log_normal_pdf(x: f64, mean: f64, stdev: f64) -> f64 {
    let z = (x - mean) / stdev;
    -0.5 * z * z - stdev.ln() - 0.5 * (std::f64::consts::TAU).ln()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl GmmModel {
    /// Log responsibilities (posterior over the two components) of a score.
    pub fn log_responsibilities(&self, score: f64) -> [f64; 2] {
        let joint = [
            self.components[0].weight.ln()
                + log_normal_pdf(score, self.components[0].mean, self.components[0].stdev),
            self.components[1].weight.ln()
                + log_normal_pdf(score, self.components[1].mean, self.components[1].stdev),
        ];
        let total = log_sum_exp(joint[0], joint[1]);
        [joint[0] - total, joint[1] - total]
    }

    /// Posterior responsibility of the high-mean component.
    pub fn high_mode_responsibility(&self, score: f64) -> f64 {
        self.log_responsibilities(score)[1].exp()
    }
}

/// Fit a two-component mixture by EM.
///
/// Initialization splits the samples at the median and uses each half's
/// mean and spread — deterministic, so equal inputs give equal fits.
/// Responsibilities are computed in log space; the variance floor is
/// `sigma_floor` times the data range (an absolute floor kicks in when
/// all samples coincide).
pub fn fit_gmm(samples: &[ScoreSample], config: &GmmConfig) -> Result<GmmModel> {
    if samples.len() < 4 {
        return Err(Error::TooFewSamples { got: samples.len(), need: 4 });
    }
    if let Some(bad) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::Validation(format!("sample `{}` has a non-finite score", bad.id)));
    }
    let mut xs: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let n = xs.len();
    let mut sorted = xs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let range = sorted[n - 1] - sorted[0];
    let floor = if range > 0.0 { (config.sigma_floor * range).max(1e-12) } else { 1e-9 };

    let half = n / 2;
    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std_of = |v: &[f64], m: f64| {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let (lo, hi) = sorted.split_at(half);
    let mut mean = [mean_of(lo), mean_of(hi)];
    let mut stdev = [std_of(lo, mean[0]).max(floor), std_of(hi, mean[1]).max(floor)];
    let mut weight = [half as f64 / n as f64, (n - half) as f64 / n as f64];

    // Deterministic order of samples for the accumulation loops.
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut resp = vec![[0.0f64; 2]; n];
    for _ in 0..config.max_iter {
        iterations += 1;
        // E step in log space, accumulating the log likelihood.
        let mut ll = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let j0 = weight[0].ln() + log_normal_pdf(x, mean[0], stdev[0]);
            let j1 = weight[1].ln() + log_normal_pdf(x, mean[1], stdev[1]);
            let total = log_sum_exp(j0, j1);
            ll += total;
            resp[i] = [(j0 - total).exp(), (j1 - total).exp()];
        }
        trace.push(ll);
        // EM increases the likelihood except when the variance floor
        // clamps the M step; allow float-level slack.
        debug_assert!(
            ll >= prev_ll - 1e-9 || stdev.iter().any(|s| *s <= floor * (1.0 + 1e-12)),
            "log-likelihood decreased: {prev_ll} -> {ll}"
        );
        let improved = ll - prev_ll;
        prev_ll = ll;

        // M step.
        for k in 0..2 {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            if nk <= f64::EPSILON {
                // A component lost all mass; pin it and keep going.
                weight[k] = f64::EPSILON;
                continue;
            }
            weight[k] = nk / n as f64;
            mean[k] = xs.iter().zip(&resp).map(|(x, r)| x * r[k]).sum::<f64>() / nk;
            let var = xs
                .iter()
                .zip(&resp)
                .map(|(x, r)| r[k] * (x - mean[k]) * (x - mean[k]))
                .sum::<f64>()
                / nk;
            stdev[k] = var.sqrt().max(floor);
        }
        let wsum = weight[0] + weight[1];
        weight[0] /= wsum;
        weight[1] /= wsum;

        if improved.abs() < config.tol && iterations > 1 {
            break;
        }
    }

    // Order components by mean ascending.
    if mean[0] > mean[1] {
        mean.swap(0, 1);
        stdev.swap(0, 1);
        weight.swap(0, 1);
    }
    Ok(GmmModel {
        components: [
            GmmComponent { weight: weight[0], mean: mean[0], stdev: stdev[0] },
            GmmComponent { weight: weight[1], mean: mean[1], stdev: stdev[1] },
        ],
        log_likelihood: prev_ll,
        iterations,
        log_likelihood_trace: trace,
    })
}

/// Partition samples into (accepted, rejected): accepted iff the
/// posterior responsibility of the high-mean mode is at least 0.5.
pub fn filter(
    samples: &[ScoreSample],
    model: &GmmModel,
) -> (Vec<ScoreSample>, Vec<ScoreSample>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for s in samples {
        if model.high_mode_responsibility(s.score) >= 0.5 {
            accepted.push(s.clone());
        } else {
            rejected.push(s.clone());
        }
    }
    (accepted, rejected)
}

/// Outcome of a file-level filtering run.
#[derive(Clone, Debug)]
pub struct FilterSummary {
    pub model: GmmModel,
    pub accepted: usize,
    pub rejected: usize,
    /// Rows dropped before fitting, with reasons (e.g. non-finite scores).
    pub skipped: Vec<String>,
}

impl std::fmt::Display for FilterSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [lo, hi] = &self.model.components;
        writeln!(
            f,
            "fitted mixture: low mode N({:.4}, {:.4}^2) w={:.3}; high mode N({:.4}, {:.4}^2) w={:.3}",
            lo.mean, lo.stdev, lo.weight, hi.mean, hi.stdev, hi.weight
        )?;
        writeln!(
            f,
            "log-likelihood {:.4} after {} iterations; accepted {}, rejected {}, skipped {}",
            self.model.log_likelihood,
            self.model.iterations,
            self.accepted,
            self.rejected,
            self.skipped.len()
        )
    }
}

/// Read a `id,score` CSV, fit, and write `id,score,responsibility,accepted`.
/// Rows with non-finite scores are skipped with a diagnostic.
pub fn filter_file(
    in_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    config: &GmmConfig,
) -> Result<FilterSummary> {
    let in_path = in_path.as_ref();
    let mut reader = csv::Reader::from_path(in_path)?;
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for row in reader.deserialize::<ScoreSample>() {
        let sample = row?;
        if sample.score.is_finite() {
            samples.push(sample);
        } else {
            skipped.push(format!("row `{}` has non-finite score; skipped", sample.id));
        }
    }
    if samples.is_empty() {
        return Err(Error::Validation(format!(
            "{} holds no usable samples",
            in_path.display()
        )));
    }
    let model = fit_gmm(&samples, config)?;
    let mut writer = csv::Writer::from_path(out_path.as_ref())?;
    writer.write_record(["id", "score", "responsibility", "accepted"])?;
    let mut accepted = 0usize;
    for s in &samples {
        let resp = model.high_mode_responsibility(s.score);
        let ok = resp >= 0.5;
        accepted += usize::from(ok);
        writer.write_record([
            s.id.as_str(),
            &format!("{:.6}", s.score),
            &format!("{resp:.6}"),
            if ok { "true" } else { "false" },
        ])?;
    }
    writer.flush()?;
    Ok(FilterSummary { rejected: samples.len() - accepted, model, accepted, skipped })
}
