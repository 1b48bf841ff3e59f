//! Tabular softmax sequence policy.
//!
//! The state of a token decision is `(prompt, previous token)`, optionally refined by
//! a position bucket. Each state owns one row of `vocab_size` logits. Token `0` is the
//! end-of-sequence symbol and doubles as the "previous token" at position 0.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const EOS: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    PromptPrev,
    PromptPrevPos,
}

impl FeatureMode {
    fn as_str(&self) -> &'static str {
        match self {
            FeatureMode::PromptPrev => "prompt_prev",
            FeatureMode::PromptPrevPos => "prompt_prev_pos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub vocab_size: usize,
    pub num_prompts: usize,
    pub max_len: usize,
    #[serde(default)]
    pub feature_mode: FeatureMode,
    #[serde(default = "one")]
    pub num_pos_buckets: usize,
}

fn one() -> usize {
    1
}

impl PolicySpec {
    pub fn new(vocab_size: usize, num_prompts: usize, max_len: usize) -> Self {
        Self {
            vocab_size,
            num_prompts,
            max_len,
            feature_mode: FeatureMode::PromptPrev,
            num_pos_buckets: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config(format!(
                "policy.vocab_size must be at least 2, got {}",
                self.vocab_size
            )));
        }
        if self.num_prompts == 0 {
            return Err(Error::Config("policy.num_prompts must be positive".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("policy.max_len must be positive".into()));
        }
        if self.num_pos_buckets == 0 {
            return Err(Error::Config(
                "policy.num_pos_buckets must be positive".into(),
            ));
        }
        Ok(())
    }

    fn buckets(&self) -> usize {
        match self.feature_mode {
            FeatureMode::PromptPrev => 1,
            FeatureMode::PromptPrevPos => self.num_pos_buckets,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_prompts * self.vocab_size * self.buckets()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateIndex {
    pub prompt_id: usize,
    pub prev_token: usize,
    pub pos_bucket: usize,
}

impl StateIndex {
    /// Row of this state in the logit table.
    pub fn row(&self, spec: &PolicySpec) -> usize {
        (self.prompt_id * spec.vocab_size + self.prev_token) * spec.buckets() + self.pos_bucket
    }
}

pub fn state_index(
    spec: &PolicySpec,
    prompt_id: usize,
    prev_token: usize,
    position: usize,
) -> Result<StateIndex> {
    if prompt_id >= spec.num_prompts {
        return Err(Error::domain(format!(
            "prompt {prompt_id} out of range [0, {})",
            spec.num_prompts
        )));
    }
    if prev_token >= spec.vocab_size {
        return Err(Error::domain(format!(
            "token {prev_token} out of range [0, {})",
            spec.vocab_size
        )));
    }
    if position >= spec.max_len {
        return Err(Error::domain(format!(
            "position {position} out of range [0, {})",
            spec.max_len
        )));
    }
    let pos_bucket = match spec.feature_mode {
        FeatureMode::PromptPrev => 0,
        FeatureMode::PromptPrevPos => position * spec.num_pos_buckets / spec.max_len,
    };
    Ok(StateIndex {
        prompt_id,
        prev_token,
        pos_bucket,
    })
}

/// States visited while emitting `tokens` for `prompt_id`, one per token.
pub fn response_states(
    spec: &PolicySpec,
    prompt_id: usize,
    tokens: &[usize],
) -> Result<Vec<StateIndex>> {
    let mut prev = EOS;
    let mut out = Vec::with_capacity(tokens.len());
    for (pos, &tok) in tokens.iter().enumerate() {
        out.push(state_index(spec, prompt_id, prev, pos)?);
        prev = tok;
    }
    Ok(out)
}

/// Logit table of shape `(num_states, vocab_size)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    spec: PolicySpec,
    theta: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(spec: PolicySpec) -> Self {
        Self {
            theta: vec![0.0; spec.num_states() * spec.vocab_size],
            spec,
        }
    }

    pub fn from_table(spec: PolicySpec, theta: Vec<f64>) -> Result<Self> {
        let want = spec.num_states() * spec.vocab_size;
        if theta.len() != want {
            return Err(Error::domain(format!(
                "logit table has {} entries, spec needs {want}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("logit table contains non-finite entries"));
        }
        Ok(Self { spec, theta })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn row(&self, state: &StateIndex) -> &[f64] {
        let v = self.spec.vocab_size;
        let start = state.row(&self.spec) * v;
        &self.theta[start..start + v]
    }

    pub fn row_mut(&mut self, state: &StateIndex) -> &mut [f64] {
        let v = self.spec.vocab_size;
        let start = state.row(&self.spec) * v;
        &mut self.theta[start..start + v]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let s = &self.spec;
        let mut out = format!(
            "# vocab_size={} num_prompts={} max_len={} feature_mode={} num_pos_buckets={}\n",
            s.vocab_size,
            s.num_prompts,
            s.max_len,
            s.feature_mode.as_str(),
            s.num_pos_buckets
        );
        for row in self.theta.chunks(s.vocab_size) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix("# "))
            .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
        let mut spec = PolicySpec::new(0, 0, 0);
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad header field {field:?}")))?;
            let num = || {
                v.parse::<usize>()
                    .map_err(|_| Error::Checkpoint(format!("bad value for {k}: {v:?}")))
            };
            match k {
                "vocab_size" => spec.vocab_size = num()?,
                "num_prompts" => spec.num_prompts = num()?,
                "max_len" => spec.max_len = num()?,
                "num_pos_buckets" => spec.num_pos_buckets = num()?,
                "feature_mode" => {
                    spec.feature_mode = match v {
                        "prompt_prev" => FeatureMode::PromptPrev,
                        "prompt_prev_pos" => FeatureMode::PromptPrevPos,
                        _ => return Err(Error::Checkpoint(format!("unknown feature_mode {v:?}"))),
                    }
                }
                _ => return Err(Error::Checkpoint(format!("unknown header field {k:?}"))),
            }
        }
        spec.validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut theta = Vec::with_capacity(spec.num_states() * spec.vocab_size);
        for (lineno, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != spec.vocab_size {
                return Err(Error::Checkpoint(format!(
                    "row {lineno} has {} cells, expected {}",
                    cells.len(),
                    spec.vocab_size
                )));
            }
            for c in cells {
                theta.push(
                    c.trim().parse::<f64>().map_err(|_| {
                        Error::Checkpoint(format!("row {lineno}: bad number {c:?}"))
                    })?,
                );
            }
        }
        Self::from_table(spec, theta).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Log-softmax of one logit row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row);
    row.iter().map(|&x| x - lse).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn token_distribution(params: &PolicyParams, state: &StateIndex) -> Vec<f64> {
    softmax(params.row(state))
}

pub fn log_prob(params: &PolicyParams, state: &StateIndex, token: usize) -> f64 {
    let row = params.row(state);
    row[token] - log_sum_exp(row)
}

/// `∇_θ log π(token | state)`, nonzero only on the state's row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrad {
    pub row: usize,
    pub values: Vec<f64>,
}

pub fn log_prob_grad(params: &PolicyParams, state: &StateIndex, token: usize) -> RowGrad {
    let mut values: Vec<f64> = token_distribution(params, state)
        .into_iter()
        .map(|p| -p)
        .collect();
    values[token] += 1.0;
    RowGrad {
        row: state.row(params.spec()),
        values,
    }
}

pub fn entropy(params: &PolicyParams, state: &StateIndex) -> f64 {
    let logp = log_softmax(params.row(state));
    let h: f64 = logp
        .iter()
        .map(|&lp| {
            if lp > f64::NEG_INFINITY {
                -lp.exp() * lp
            } else {
                0.0
            }
        })
        .sum();
    h.max(0.0)
}

/// Mean over `states` of the exact categorical `KL(π_a ‖ π_b)`.
pub fn policy_kl(a: &PolicyParams, b: &PolicyParams, states: &[StateIndex]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::domain("policy_kl needs at least one state"));
    }
    if a.spec() != b.spec() {
        return Err(Error::domain(
            "policy_kl between policies with different specs",
        ));
    }
    let total: f64 = states.iter().map(|s| state_kl(a.row(s), b.row(s))).sum();
    Ok(total / states.len() as f64)
}

pub(crate) fn state_kl(row_a: &[f64], row_b: &[f64]) -> f64 {
    let la = log_softmax(row_a);
    let lb = log_softmax(row_b);
    let kl: f64 = la.iter().zip(&lb).map(|(&x, &y)| x.exp() * (x - y)).sum();
    kl.max(0.0)
}

/// A sampled response and the untempered log-probability of each token.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub prompt_id: usize,
    pub tokens: Vec<usize>,
    pub logps: Vec<f64>,
}

impl Response {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn terminated(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }
}

/// Samples tokens until EOS or `max_len`. Temperature only reshapes the sampling
/// distribution; `logps` are always under the temperature-1 policy.
pub fn sample_response<R: Rng + ?Sized>(
    params: &PolicyParams,
    prompt_id: usize,
    rng: &mut R,
    temperature: f64,
) -> Result<Response> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let spec = params.spec();
    let mut tokens = Vec::new();
    let mut logps = Vec::new();
    let mut prev = EOS;
    for pos in 0..spec.max_len {
        let state = state_index(spec, prompt_id, prev, pos)?;
        let row = params.row(&state);
        let probs = if temperature == 1.0 {
            softmax(row)
        } else {
            softmax(&row.iter().map(|x| x / temperature).collect::<Vec<_>>())
        };
        let tok = sample_categorical(&probs, rng);
        logps.push(log_prob(params, &state, tok));
        tokens.push(tok);
        if tok == EOS {
            break;
        }
        prev = tok;
    }
    Ok(Response {
        prompt_id,
        tokens,
        logps,
    })
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum; take the last token with mass
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}
