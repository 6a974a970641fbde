//! Scripted backend whose output is a pure function of the script and the
//! prompt bytes.
//!
//! Position `p` of a trace uses, in order of preference:
//! 1. the `p`-th distribution of the override whose trigger occurs in the
//!    prompt (longest trigger wins, ties by lexicographic order),
//! 2. `default_distribution`.
//!
//! With `noise > 0`, every probability is scaled by `1 + noise·u`, where `u`
//! in [-1, 1) is hashed from `(seed, prompt, position, token)`; the position's
//! total mass is then restored. This gives reproducible per-prompt variation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendConfig, BackendError};
use crate::types::{GenerationTrace, InvariantError, RenderedPrompt, TokenCandidate, MASS_TOLERANCE};

pub type Distribution = Vec<(String, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MockScriptRepr")]
pub struct MockScript {
    default_distribution: Distribution,
    per_prompt_overrides: BTreeMap<String, Vec<Distribution>>,
    seed: u64,
    noise: f64,
    eos_token: String,
}

#[derive(Deserialize)]
struct MockScriptRepr {
    default_distribution: Distribution,
    #[serde(default)]
    per_prompt_overrides: BTreeMap<String, Vec<Distribution>>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    noise: f64,
    #[serde(default = "default_eos")]
    eos_token: String,
}

fn default_eos() -> String {
    "</s>".to_owned()
}

impl TryFrom<MockScriptRepr> for MockScript {
    type Error = InvariantError;

    fn try_from(r: MockScriptRepr) -> Result<Self, Self::Error> {
        let mut s = MockScript::new(r.default_distribution, r.seed)?;
        for (trigger, dists) in r.per_prompt_overrides {
            s = s.with_override(trigger, dists)?;
        }
        s.with_noise(r.noise)?.with_eos(r.eos_token)
    }
}

fn validate_distribution(d: &Distribution) -> Result<(), InvariantError> {
    let fail = |m: String| Err(InvariantError::new("MockScript", m));
    if d.is_empty() {
        return fail("distributions must be non-empty".into());
    }
    let mut seen = HashSet::new();
    for (tok, p) in d {
        if tok.is_empty() {
            return fail("token_text must be non-empty".into());
        }
        if !seen.insert(tok.as_str()) {
            return fail(format!("token {tok:?} repeated within a position"));
        }
        if p.is_nan() || *p <= 0.0 {
            return fail(format!("probability for {tok:?} must be > 0"));
        }
    }
    let sum: f64 = d.iter().map(|(_, p)| p).sum();
    if sum > 1.0 + MASS_TOLERANCE {
        return fail(format!("probabilities sum to {sum} > 1"));
    }
    Ok(())
}

impl MockScript {
    pub fn new(default_distribution: Distribution, seed: u64) -> Result<Self, InvariantError> {
        validate_distribution(&default_distribution)?;
        Ok(Self {
            default_distribution,
            per_prompt_overrides: BTreeMap::new(),
            seed,
            noise: 0.0,
            eos_token: default_eos(),
        })
    }

    /// Convenience for `&str` distributions in tests and fixtures.
    pub fn dist(pairs: &[(&str, f64)]) -> Distribution {
        pairs.iter().map(|(t, p)| ((*t).to_owned(), *p)).collect()
    }

    pub fn with_override(
        mut self,
        trigger: impl Into<String>,
        positions: Vec<Distribution>,
    ) -> Result<Self, InvariantError> {
        let trigger = trigger.into();
        if trigger.is_empty() {
            return Err(InvariantError::new("MockScript", "override trigger must be non-empty"));
        }
        if positions.is_empty() {
            return Err(InvariantError::new(
                "MockScript",
                "override needs at least one position",
            ));
        }
        for d in &positions {
            validate_distribution(d)?;
        }
        self.per_prompt_overrides.insert(trigger, positions);
        Ok(self)
    }

    pub fn with_noise(mut self, noise: f64) -> Result<Self, InvariantError> {
        if !(0.0..1.0).contains(&noise) {
            return Err(InvariantError::new("MockScript", "noise must lie in [0, 1)"));
        }
        self.noise = noise;
        Ok(self)
    }

    pub fn with_eos(mut self, eos: impl Into<String>) -> Result<Self, InvariantError> {
        let eos = eos.into();
        if eos.is_empty() {
            return Err(InvariantError::new("MockScript", "eos_token must be non-empty"));
        }
        self.eos_token = eos;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn eos_token(&self) -> &str {
        &self.eos_token
    }

    fn matching_override(&self, prompt: &[u8]) -> Option<&[Distribution]> {
        self.per_prompt_overrides
            .iter()
            .filter(|(t, _)| contains(prompt, t.as_bytes()))
            .max_by(|(a, _), (b, _)| a.len().cmp(&b.len()).then_with(|| b.cmp(a)))
            .map(|(_, d)| d.as_slice())
    }

    /// Candidates for `position` of `prompt`, before top-k truncation.
    pub fn distribution_at(&self, prompt: &[u8], position: usize) -> Vec<(String, f64)> {
        let base = self
            .matching_override(prompt)
            .and_then(|o| o.get(position))
            .unwrap_or(&self.default_distribution);
        if self.noise == 0.0 {
            return base.clone();
        }
        let prompt_hash = fnv1a(prompt);
        let total: f64 = base.iter().map(|(_, p)| p).sum();
        let jittered: Vec<(String, f64)> = base
            .iter()
            .map(|(t, p)| {
                let h = splitmix(self.seed ^ prompt_hash ^ splitmix(position as u64) ^ fnv1a(t.as_bytes()));
                let u = (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
                (t.clone(), p * (1.0 + self.noise * u))
            })
            .collect();
        let new_total: f64 = jittered.iter().map(|(_, p)| p).sum();
        jittered.into_iter().map(|(t, p)| (t, p * total / new_total)).collect()
    }

    /// Trace of `n_positions` positions, each truncated to `top_k`.
    pub fn trace(&self, prompt: &[u8], n_positions: usize, top_k: usize) -> Result<GenerationTrace, InvariantError> {
        let positions = (0..n_positions)
            .map(|p| {
                let mut cands = self
                    .distribution_at(prompt, p)
                    .into_iter()
                    .map(|(t, prob)| TokenCandidate::from_prob(t, prob))
                    .collect::<Result<Vec<_>, _>>()?;
                crate::types::sort_candidates(&mut cands);
                cands.truncate(top_k);
                Ok(cands)
            })
            .collect::<Result<Vec<_>, InvariantError>>()?;
        GenerationTrace::from_positions(positions, top_k)
    }
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    cfg: BackendConfig,
    script: MockScript,
}

impl MockBackend {
    pub fn new(cfg: BackendConfig, script: MockScript) -> Self {
        Self { cfg, script }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl Backend for MockBackend {
    fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<GenerationTrace, BackendError> {
        if prompt.bytes().is_empty() {
            return Err(BackendError::Config("empty prompt".into()));
        }
        Ok(self
            .script
            .trace(prompt.bytes(), self.cfg.n_positions, self.cfg.top_k)?)
    }

    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError> {
        let trace = self.script.trace(prompt.as_bytes(), max_tokens.max(1), 1)?;
        Ok(trace
            .greedy_tokens()
            .iter()
            .take(max_tokens)
            .take_while(|t| t.as_str() != self.script.eos_token)
            .map(String::as_str)
            .collect())
    }
}
