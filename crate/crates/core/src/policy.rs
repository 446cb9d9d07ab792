//! Structured-response policy.
//!
//! A response is fully described by seven mention flags (six perceptual
//! keywords and the location token) and one answer index. Mentions are
//! independent Bernoulli draws with context-free logits `m`. The answer is a
//! masked softmax over `W·x̃ + b`, where `x̃` is the feature vector with the
//! coordinates of unmentioned cue groups zeroed (coordinate `j` belongs to cue
//! `j % 7`) when `grounding` is enabled. Log-probabilities and their gradients
//! are exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::KEYWORDS;
use crate::error::{Error, Result};
use crate::model::{ANSWER_CLOSE, ANSWER_OPEN, THINK_CLOSE, THINK_OPEN};
use crate::rng;

/// Six keyword heads plus one location head.
pub const N_MENTIONS: usize = 7;
pub const LOCATION_HEAD: usize = 6;

const INIT_SCALE: f64 = 0.01;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Flat parameter vector laid out as `[W (row-major, n_outputs × dim), b, m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    dim: usize,
    n_outputs: usize,
    theta: Vec<f64>,
    pub version: u64,
    pub grounding: bool,
}

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub dim: usize,
    pub n_outputs: usize,
    pub theta: Vec<f64>,
}

impl PolicyGrad {
    pub fn zeros(dim: usize, n_outputs: usize) -> Self {
        Self { dim, n_outputs, theta: vec![0.0; n_outputs * dim + n_outputs + N_MENTIONS] }
    }

    pub fn zeros_like(p: &PolicyParams) -> Self {
        Self::zeros(p.dim, p.n_outputs)
    }

    pub fn add_scaled(&mut self, other: &PolicyGrad, scale: f64) {
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.theta.iter_mut().for_each(|x| *x *= s);
    }

    pub fn norm(&self) -> f64 {
        self.theta.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    pub fn answer_block(&self) -> &[f64] {
        &self.theta[..self.n_outputs * self.dim + self.n_outputs]
    }

    pub fn mention_block(&self) -> &[f64] {
        &self.theta[self.n_outputs * self.dim + self.n_outputs..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTrace {
    pub answer_index: usize,
    /// Number of valid answers the softmax was masked to.
    pub n_options: usize,
    pub mention_flags: [bool; N_MENTIONS],
    pub rendered: String,
    pub logp_answer: f64,
    pub logp_mentions: f64,
    pub logp_total: f64,
}

impl PolicyParams {
    /// Zero-mean Gaussian `W`, `b` with standard deviation 0.01; mention logits at 0.
    pub fn init(dim: usize, n_outputs: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[rng::hash_str("init_policy")]);
        let normal = Normal::new(0.0, INIT_SCALE).expect("valid scale");
        let mut theta: Vec<f64> = (0..n_outputs * dim + n_outputs)
            .map(|_| normal.sample(&mut rng))
            .collect();
        theta.extend([0.0; N_MENTIONS]);
        Self { dim, n_outputs, theta, version: 0, grounding: true }
    }

    pub fn zeros(dim: usize, n_outputs: usize) -> Self {
        Self {
            dim,
            n_outputs,
            theta: vec![0.0; n_outputs * dim + n_outputs + N_MENTIONS],
            version: 0,
            grounding: true,
        }
    }

    pub fn with_grounding(mut self, grounding: bool) -> Self {
        self.grounding = grounding;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn w_row(&self, k: usize) -> &[f64] {
        &self.theta[k * self.dim..(k + 1) * self.dim]
    }

    pub fn w_row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.theta[k * self.dim..(k + 1) * self.dim]
    }

    pub fn b(&self) -> &[f64] {
        let off = self.n_outputs * self.dim;
        &self.theta[off..off + self.n_outputs]
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        let off = self.n_outputs * self.dim;
        &mut self.theta[off..off + self.n_outputs]
    }

    pub fn m(&self) -> &[f64] {
        &self.theta[self.n_outputs * (self.dim + 1)..]
    }

    pub fn m_mut(&mut self) -> &mut [f64] {
        let off = self.n_outputs * (self.dim + 1);
        &mut self.theta[off..]
    }

    pub fn mention_probs(&self) -> [f64; N_MENTIONS] {
        std::array::from_fn(|i| sigmoid(self.m()[i]))
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    /// Deep copy with the version bumped.
    pub fn snapshot(&self) -> Self {
        let mut s = self.clone();
        s.version = self.version + 1;
        s
    }

    fn check(&self, features: &[f64], n_options: usize) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: features.len() });
        }
        if n_options == 0 || n_options > self.n_outputs {
            return Err(Error::Dimension { expected: self.n_outputs, got: n_options });
        }
        Ok(())
    }

    fn visible_features(&self, features: &[f64], flags: &[bool; N_MENTIONS]) -> Vec<f64> {
        features
            .iter()
            .enumerate()
            .map(|(j, &x)| if !self.grounding || flags[j % N_MENTIONS] { x } else { 0.0 })
            .collect()
    }

    /// Answer logits for the first `n_options` outputs given the mention flags.
    pub fn answer_logits(
        &self,
        features: &[f64],
        flags: &[bool; N_MENTIONS],
        n_options: usize,
    ) -> Result<Vec<f64>> {
        self.check(features, n_options)?;
        let x = self.visible_features(features, flags);
        let b = self.b();
        Ok((0..n_options)
            .map(|k| b[k] + self.w_row(k).iter().zip(&x).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }

    pub fn answer_probs(
        &self,
        features: &[f64],
        flags: &[bool; N_MENTIONS],
        n_options: usize,
    ) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.answer_logits(features, flags, n_options)?)
            .into_iter()
            .map(f64::exp)
            .collect())
    }

    fn logp_mentions(&self, flags: &[bool; N_MENTIONS]) -> f64 {
        self.m()
            .iter()
            .zip(flags)
            .map(|(&m, &f)| if f { log_sigmoid(m) } else { log_sigmoid(-m) })
            .sum()
    }

    /// Mention flags used for deterministic decoding: each head's more likely outcome.
    pub fn greedy_mentions(&self) -> [bool; N_MENTIONS] {
        std::array::from_fn(|i| self.m()[i] >= 0.0)
    }

    /// Argmax of the masked answer head under greedy mentions, ties to the lowest index.
    pub fn greedy_answer(&self, features: &[f64], n_options: usize) -> Result<usize> {
        let logits = self.answer_logits(features, &self.greedy_mentions(), n_options)?;
        let mut best = 0;
        for (k, z) in logits.iter().enumerate() {
            if *z > logits[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Samples mention flags, then an answer, and renders the response text.
    pub fn sample_response(
        &self,
        features: &[f64],
        options: &[String],
        rng: &mut impl Rng,
    ) -> Result<ResponseTrace> {
        self.check(features, options.len())?;
        let mut flags = [false; N_MENTIONS];
        for (flag, &m) in flags.iter_mut().zip(self.m()) {
            *flag = rng.random::<f64>() < sigmoid(m);
        }
        let logp = log_softmax(&self.answer_logits(features, &flags, options.len())?);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut answer_index = options.len() - 1;
        for (k, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                answer_index = k;
                break;
            }
        }
        // guard against rounding picking a zero-probability tail entry
        if logp[answer_index] == f64::NEG_INFINITY {
            answer_index = (0..logp.len())
                .max_by(|&a, &b| logp[a].total_cmp(&logp[b]))
                .unwrap_or(0);
        }
        let logp_answer = logp[answer_index];
        let logp_mentions = self.logp_mentions(&flags);
        Ok(ResponseTrace {
            answer_index,
            n_options: options.len(),
            mention_flags: flags,
            rendered: render(&flags, &options[answer_index]),
            logp_answer,
            logp_mentions,
            logp_total: logp_answer + logp_mentions,
        })
    }

    /// Log-probability of `trace` under these parameters.
    pub fn log_prob(&self, features: &[f64], trace: &ResponseTrace) -> Result<f64> {
        let logits = self.answer_logits(features, &trace.mention_flags, trace.n_options)?;
        if trace.answer_index >= trace.n_options {
            return Err(Error::Dimension { expected: trace.n_options, got: trace.answer_index });
        }
        Ok(log_softmax(&logits)[trace.answer_index] + self.logp_mentions(&trace.mention_flags))
    }

    /// Gradient of [`log_prob`](Self::log_prob) with respect to all parameters.
    pub fn log_prob_grad(&self, features: &[f64], trace: &ResponseTrace) -> Result<PolicyGrad> {
        let probs = self.answer_probs(features, &trace.mention_flags, trace.n_options)?;
        if trace.answer_index >= trace.n_options {
            return Err(Error::Dimension { expected: trace.n_options, got: trace.answer_index });
        }
        let x = self.visible_features(features, &trace.mention_flags);
        let mut g = PolicyGrad::zeros_like(self);
        let b_off = self.n_outputs * self.dim;
        for (k, p) in probs.iter().enumerate() {
            let score = f64::from(u8::from(k == trace.answer_index)) - p;
            if score == 0.0 {
                continue;
            }
            for (gw, xj) in g.theta[k * self.dim..(k + 1) * self.dim].iter_mut().zip(&x) {
                *gw = score * xj;
            }
            g.theta[b_off + k] = score;
        }
        let m_off = b_off + self.n_outputs;
        for (i, (&m, &flag)) in self.m().iter().zip(&trace.mention_flags).enumerate() {
            g.theta[m_off + i] = f64::from(u8::from(flag)) - sigmoid(m);
        }
        Ok(g)
    }
}

/// Response text for the given choices. The think segment names each mentioned
/// cue; nothing else in the template contains a keyword.
pub fn render(flags: &[bool; N_MENTIONS], answer: &str) -> String {
    let mut think = String::new();
    for (kw, _) in KEYWORDS.iter().zip(flags).filter(|(_, f)| **f) {
        think.push_str("Visible cue: ");
        think.push_str(kw);
        think.push_str(". ");
    }
    if flags[LOCATION_HEAD] {
        think.push_str("The location suggests a familiar city. ");
    }
    if think.is_empty() {
        think.push_str("No salient cues stand out. ");
    }
    format!(
        "{THINK_OPEN}{}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}",
        think.trim_end()
    )
}

const CHECKPOINT_FORMAT: &str = "urbanrl-policy";
const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk policy representation. Floats are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCheckpoint {
    pub format: String,
    pub format_version: u32,
    pub dim: usize,
    pub n_outputs: usize,
    pub version: u64,
    pub grounding: bool,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub m: Vec<f64>,
}

impl From<&PolicyParams> for PolicyCheckpoint {
    fn from(p: &PolicyParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            format_version: CHECKPOINT_FORMAT_VERSION,
            dim: p.dim,
            n_outputs: p.n_outputs,
            version: p.version,
            grounding: p.grounding,
            w: p.theta[..p.n_outputs * p.dim].to_vec(),
            b: p.b().to_vec(),
            m: p.m().to_vec(),
        }
    }
}

impl TryFrom<PolicyCheckpoint> for PolicyParams {
    type Error = Error;

    fn try_from(c: PolicyCheckpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT || c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format {} v{}",
                c.format, c.format_version
            )));
        }
        let shape_ok = c.w.len() == c.n_outputs * c.dim
            && c.b.len() == c.n_outputs
            && c.m.len() == N_MENTIONS;
        if !shape_ok {
            return Err(Error::Config("checkpoint arrays do not match the shape header".into()));
        }
        let mut theta = c.w;
        theta.extend(c.b);
        theta.extend(c.m);
        Ok(Self {
            dim: c.dim,
            n_outputs: c.n_outputs,
            theta,
            version: c.version,
            grounding: c.grounding,
        })
    }
}

impl Serialize for PolicyParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolicyCheckpoint::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolicyParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PolicyCheckpoint::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &PolicyParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, params)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<PolicyParams> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_response;
    use crate::reward::matched_keywords;
    use rand::Rng;
    use proptest::prelude::*;

    fn opts(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    fn random_params(seed: u64, dim: usize, n: usize, scale: f64) -> PolicyParams {
        let mut p = PolicyParams::init(dim, n, seed);
        let mut r = rng::stream(seed, &[99]);
        for t in p.theta_mut() {
            *t = (r.random::<f64>() - 0.5) * 2.0 * scale;
        }
        p
    }

    #[test]
    fn init_is_seeded() {
        let a = PolicyParams::init(16, 10, 1);
        assert_eq!(a, PolicyParams::init(16, 10, 1));
        assert_ne!(a.theta(), PolicyParams::init(16, 10, 2).theta());
        assert!(a.mention_probs().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn saturated_heads() {
        let mut p = PolicyParams::zeros(4, 10);
        p.b_mut()[6] = 1e6;
        p.m_mut()[2] = -1e6;
        let x = [0.3, -0.2, 0.1, 0.9];
        let mut r = rng::stream(0, &[]);
        for _ in 0..1000 {
            let t = p.sample_response(&x, &opts(10), &mut r).unwrap();
            assert_eq!(t.answer_index, 6);
            assert!(!t.mention_flags[2]);
            assert!(!t.rendered.contains("greenery"));
        }
    }

    #[test]
    fn rendered_always_well_formed_and_consistent() {
        let p = random_params(3, 8, 10, 2.0);
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
        let mut r = rng::stream(5, &[]);
        for _ in 0..1000 {
            let t = p.sample_response(&x, &opts(10), &mut r).unwrap();
            let parsed = parse_response(&t.rendered);
            assert!(parsed.well_formed);
            assert_eq!(parsed.answer_span.as_deref(), Some((t.answer_index + 1).to_string().as_str()));
            let found = matched_keywords(&t.rendered, &Default::default());
            for (i, kw) in KEYWORDS.iter().enumerate() {
                assert_eq!(found.contains(*kw), t.mention_flags[i]);
            }
            assert_eq!(found.contains("location"), t.mention_flags[LOCATION_HEAD]);
            assert!(t.logp_total <= 0.0);
            assert_eq!(p.log_prob(&x, &t).unwrap(), t.logp_total);
        }
    }

    #[test]
    fn closed_form_log_probs() {
        let p = PolicyParams::zeros(5, 10);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let t = p.sample_response(&x, &opts(10), &mut rng::stream(1, &[])).unwrap();
        assert!((t.logp_answer + 10f64.ln()).abs() < 1e-12);
        assert!((t.logp_mentions - 7.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let p = PolicyParams::zeros(5, 10);
        let mut r = rng::stream(1, &[]);
        assert!(p.sample_response(&[1.0; 4], &opts(10), &mut r).is_err());
        assert!(p.sample_response(&[1.0; 5], &opts(11), &mut r).is_err());
    }

    #[test]
    fn gradient_special_cases() {
        let mut p = PolicyParams::zeros(3, 4);
        p.b_mut()[1] = 1e6;
        let x = [0.5, 0.5, 0.5];
        let t = p.sample_response(&x, &opts(4), &mut rng::stream(2, &[])).unwrap();
        let g = p.log_prob_grad(&x, &t).unwrap();
        assert!(g.answer_block().iter().all(|&v| v == 0.0));
        for (i, &flag) in t.mention_flags.iter().enumerate() {
            assert_eq!(g.mention_block()[i], if flag { 0.5 } else { -0.5 });
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let p = random_params(seed, 6, 5, 1.5);
            let x: Vec<f64> = (0..6).map(|i| ((seed + i) as f64).sin()).collect();
            let t = p.sample_response(&x, &opts(4), &mut rng::stream(seed, &[7])).unwrap();
            let g = p.log_prob_grad(&x, &t).unwrap();
            let h = 1e-6;
            for i in 0..p.theta().len() {
                let mut plus = p.clone();
                plus.theta_mut()[i] += h;
                let mut minus = p.clone();
                minus.theta_mut()[i] -= h;
                let fd = (plus.log_prob(&x, &t).unwrap() - minus.log_prob(&x, &t).unwrap()) / (2.0 * h);
                let err = (fd - g.theta[i]).abs() / fd.abs().max(g.theta[i].abs()).max(1e-3);
                assert!(err < 1e-5, "seed {seed} coord {i}: fd {fd} vs {}", g.theta[i]);
            }
        }
    }

    #[test]
    fn score_function_has_zero_mean() {
        let p = random_params(11, 4, 5, 0.8);
        let x = [0.4, -0.3, 0.8, 0.1];
        let mut r = rng::stream(12, &[]);
        let n = 20_000;
        let dim = p.theta().len();
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for _ in 0..n {
            let t = p.sample_response(&x, &opts(5), &mut r).unwrap();
            let g = p.log_prob_grad(&x, &t).unwrap();
            for i in 0..dim {
                sum[i] += g.theta[i];
                sq[i] += g.theta[i] * g.theta[i];
            }
        }
        for i in 0..dim {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!(mean.abs() <= 3.0 * se + 1e-12, "coord {i}: mean {mean} se {se}");
        }
    }

    #[test]
    fn snapshot_is_independent() {
        let mut p = random_params(1, 3, 4, 1.0);
        let s = p.snapshot();
        assert!(s.version > p.version);
        let x = [0.1, 0.2, 0.3];
        let t = p.sample_response(&x, &opts(4), &mut rng::stream(0, &[])).unwrap();
        let before = p.log_prob(&x, &t).unwrap();
        assert_eq!(s.log_prob(&x, &t).unwrap(), before);
        p.theta_mut()[0] += 1.0;
        assert_eq!(s.log_prob(&x, &t).unwrap(), before);
        assert_ne!(s.theta(), p.theta());
    }

    #[test]
    fn greedy_tie_breaks_low() {
        let mut p = PolicyParams::zeros(2, 10);
        p.b_mut()[3] = 2.0;
        p.b_mut()[7] = 2.0;
        assert_eq!(p.greedy_answer(&[1.0, 1.0], 10).unwrap(), 3);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = random_params(9, 16, 12, 3.0).with_grounding(false);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&path, &p).unwrap();
        let q = load_checkpoint(&path).unwrap();
        assert_eq!(p.version, q.version);
        assert_eq!(p.grounding, q.grounding);
        assert!(p.theta().iter().zip(q.theta()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    proptest! {
        #[test]
        fn probabilities_normalised_and_shift_invariant(seed in 0u64..1000, shift in -50.0f64..50.0, n in 1usize..10) {
            let p = random_params(seed, 5, 10, 3.0);
            let x: Vec<f64> = (0..5).map(|i| (seed as f64 + i as f64).cos()).collect();
            let flags = [true; N_MENTIONS];
            let probs = p.answer_probs(&x, &flags, n).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let t = p.sample_response(&x, &opts(n), &mut rng::stream(seed, &[])).unwrap();
            let mut q = p.clone();
            q.b_mut().iter_mut().for_each(|b| *b += shift);
            prop_assert!((q.log_prob(&x, &t).unwrap() - p.log_prob(&x, &t).unwrap()).abs() < 1e-9);
        }
    }
}
