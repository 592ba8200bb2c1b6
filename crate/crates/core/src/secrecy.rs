//! Finite-space secrecy calculator.
//!
//! A [`SecrecySystem`] is a message set `M` with a prior, a key set `K`
//! with its own distribution, a ciphertext set `C` with `|K| = |C|`, a
//! table `E[k][m] → c` that is injective for every key, and optionally a
//! payload `N` drawn from `Pr(N | M)` and revealed unchanged next to the
//! ciphertext. Keys are drawn independently of messages and payload.
//!
//! Exact quantities come from full enumeration of `(m, k, n)`. The
//! Monte-Carlo path samples the same generative process and returns the
//! plug-in mutual-information estimate, which is biased upwards by roughly
//! `(|M||C| − |M| − |C| + 1) / (2 · trials · ln 2)` bits when the true
//! value is zero.
//!
//! A payload that depends on the message leaks it no matter what the keys
//! do: `I(M; C, N) ≥ I(M; N)`. The analysis reports `I(M; N)` on its own so
//! that this leak is visible rather than folded into a zero claim.

use std::collections::HashMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distributions must sum to one within this tolerance.
pub const SUM_TOLERANCE: f64 = 1e-12;
/// Largest `|M|·|K|·|N|` handled by exact enumeration.
pub const MAX_EXACT_CELLS: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum SecrecyError {
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("Pr(C = {ciphertext}) is zero; the conditional is undefined")]
    UndefinedConditional { ciphertext: String },
    #[error("exact enumeration needs {cells} cells (limit {MAX_EXACT_CELLS}); use the Monte-Carlo estimate")]
    TooLarge { cells: u64 },
    #[error("no payload distribution in this system")]
    NoPayload,
    #[error("reading {path}: {reason}")]
    Load { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub values: Vec<String>,
    /// `conditional[m][n] = Pr(N = n | M = m)`.
    pub conditional: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecrecySystem {
    pub messages: Vec<String>,
    pub prior: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
    pub keys: Vec<String>,
    pub key_prior: Vec<f64>,
    pub ciphertexts: Vec<String>,
    /// `mapping[k][m]` is an index into `ciphertexts`.
    pub mapping: Vec<Vec<usize>>,
}

fn check_distribution(name: &str, p: &[f64], len: usize) -> Result<(), SecrecyError> {
    if p.len() != len {
        return Err(SecrecyError::Invalid(format!("{name} has {} entries, expected {len}", p.len())));
    }
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(SecrecyError::Invalid(format!("{name} contains {x}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(SecrecyError::Invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

fn entropy(p: impl IntoIterator<Item = f64>) -> f64 {
    p.into_iter().filter(|x| *x > 0.0).map(|x| -x * x.log2()).sum()
}

/// `Σ p(x,y) log2(p(x,y) / (p(x) p(y)))` over a dense joint table.
fn mutual_information_table(joint: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let ncols = joint.first().map_or(0, Vec::len);
    let cols: Vec<f64> = (0..ncols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, r) in joint.iter().enumerate() {
        for (j, &p) in r.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (rows[i] * cols[j])).log2();
            }
        }
    }
    mi
}

impl SecrecySystem {
    pub fn load(path: &Path) -> Result<Self, SecrecyError> {
        let load_err = |reason: String| SecrecyError::Load {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let sys: SecrecySystem = serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
        sys.validate()?;
        Ok(sys)
    }

    /// Cyclic Latin square `E[k][m] = (k + m) mod n` over `n = prior.len()`
    /// messages, keys and ciphertexts.
    pub fn latin_square(prior: Vec<f64>, key_prior: Vec<f64>) -> Self {
        let n = prior.len();
        Self {
            messages: (0..n).map(|i| format!("m{i}")).collect(),
            prior,
            payload: None,
            keys: (0..n).map(|i| format!("k{i}")).collect(),
            key_prior,
            ciphertexts: (0..n).map(|i| format!("c{i}")).collect(),
            mapping: (0..n).map(|k| (0..n).map(|m| (k + m) % n).collect()).collect(),
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self::latin_square(vec![1.0 / n as f64; n], vec![1.0 / n as f64; n])
    }

    pub fn validate(&self) -> Result<(), SecrecyError> {
        let (nm, nk, nc) = (self.messages.len(), self.keys.len(), self.ciphertexts.len());
        if nm == 0 || nk == 0 {
            return Err(SecrecyError::Invalid("message and key sets must be non-empty".into()));
        }
        if nk != nc {
            return Err(SecrecyError::Invalid(format!("|K| = {nk} but |C| = {nc}; they must be equal")));
        }
        check_distribution("prior", &self.prior, nm)?;
        check_distribution("key_prior", &self.key_prior, nk)?;
        if self.mapping.len() != nk {
            return Err(SecrecyError::Invalid(format!("mapping has {} rows, expected {nk}", self.mapping.len())));
        }
        for (k, row) in self.mapping.iter().enumerate() {
            if row.len() != nm {
                return Err(SecrecyError::Invalid(format!("mapping row {k} has {} entries, expected {nm}", row.len())));
            }
            let mut seen = vec![false; nc];
            for &c in row {
                if c >= nc {
                    return Err(SecrecyError::Invalid(format!("mapping row {k} names ciphertext {c} of {nc}")));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(SecrecyError::Invalid(format!("mapping row {k} is not injective")));
                }
            }
        }
        if let Some(p) = &self.payload {
            if p.values.is_empty() {
                return Err(SecrecyError::Invalid("payload has no values".into()));
            }
            if p.conditional.len() != nm {
                return Err(SecrecyError::Invalid("payload.conditional needs one row per message".into()));
            }
            for (m, row) in p.conditional.iter().enumerate() {
                check_distribution(&format!("payload.conditional[{m}]"), row, p.values.len())?;
            }
        }
        Ok(())
    }

    fn payload_len(&self) -> usize {
        self.payload.as_ref().map_or(1, |p| p.values.len())
    }

    fn exact_guard(&self) -> Result<(), SecrecyError> {
        self.validate()?;
        let cells = self.messages.len() as u64 * self.keys.len() as u64 * self.payload_len() as u64;
        if cells > MAX_EXACT_CELLS {
            return Err(SecrecyError::TooLarge { cells });
        }
        Ok(())
    }

    /// `joint[m][c] = Pr(M = m, C = c)`.
    pub fn joint_mc(&self) -> Result<Vec<Vec<f64>>, SecrecyError> {
        self.exact_guard()?;
        let nc = self.ciphertexts.len();
        let mut joint = vec![vec![0.0; nc]; self.messages.len()];
        for (k, row) in self.mapping.iter().enumerate() {
            for (m, &c) in row.iter().enumerate() {
                joint[m][c] += self.prior[m] * self.key_prior[k];
            }
        }
        Ok(joint)
    }

    /// Exact `Pr(M = m | C = c)`.
    pub fn posterior(&self, m: usize, c: usize) -> Result<f64, SecrecyError> {
        let joint = self.joint_mc()?;
        if m >= self.messages.len() || c >= self.ciphertexts.len() {
            return Err(SecrecyError::Invalid(format!("no cell ({m}, {c})")));
        }
        let pc: f64 = joint.iter().map(|r| r[c]).sum();
        if pc == 0.0 {
            return Err(SecrecyError::UndefinedConditional {
                ciphertext: self.ciphertexts[c].clone(),
            });
        }
        Ok(joint[m][c] / pc)
    }

    /// `max |Pr(M = m | C = c) − Pr(M = m)|` over ciphertexts with
    /// non-zero probability.
    pub fn max_posterior_deviation(&self) -> Result<f64, SecrecyError> {
        let joint = self.joint_mc()?;
        let mut worst: f64 = 0.0;
        for c in 0..self.ciphertexts.len() {
            let pc: f64 = joint.iter().map(|r| r[c]).sum();
            if pc == 0.0 {
                continue;
            }
            for (m, row) in joint.iter().enumerate() {
                worst = worst.max((row[c] / pc - self.prior[m]).abs());
            }
        }
        Ok(worst)
    }

    /// Exact `I(M; C)` in bits, or `I(M; C, N)` with `include_payload`.
    pub fn mutual_information(&self, include_payload: bool) -> Result<f64, SecrecyError> {
        let joint = self.joint_mc()?;
        if !include_payload {
            return Ok(mutual_information_table(&joint).max(0.0));
        }
        let p = self.payload.as_ref().ok_or(SecrecyError::NoPayload)?;
        let nn = p.values.len();
        let wide: Vec<Vec<f64>> = joint
            .iter()
            .enumerate()
            .map(|(m, row)| {
                row.iter()
                    .flat_map(|&pmc| p.conditional[m].iter().map(move |&pn| pmc * pn))
                    .collect::<Vec<f64>>()
            })
            .collect();
        debug_assert!(wide.iter().all(|r| r.len() == self.ciphertexts.len() * nn));
        Ok(mutual_information_table(&wide).max(0.0))
    }

    /// Exact `I(M; N)` in bits.
    pub fn payload_information(&self) -> Result<f64, SecrecyError> {
        self.exact_guard()?;
        let p = self.payload.as_ref().ok_or(SecrecyError::NoPayload)?;
        let joint: Vec<Vec<f64>> = p
            .conditional
            .iter()
            .enumerate()
            .map(|(m, row)| row.iter().map(|x| self.prior[m] * x).collect())
            .collect();
        Ok(mutual_information_table(&joint).max(0.0))
    }

    pub fn message_entropy(&self) -> f64 {
        entropy(self.prior.iter().copied())
    }

    pub fn ciphertext_entropy(&self) -> Result<f64, SecrecyError> {
        let joint = self.joint_mc()?;
        Ok(entropy((0..self.ciphertexts.len()).map(|c| joint.iter().map(|r| r[c]).sum::<f64>())))
    }

    /// Full exact summary.
    pub fn analyze(&self) -> Result<ExactAnalysis, SecrecyError> {
        let i_m_c = self.mutual_information(false)?;
        let (i_m_n, i_m_cn) = match self.payload {
            Some(_) => (Some(self.payload_information()?), Some(self.mutual_information(true)?)),
            None => (None, None),
        };
        let mut notes = Vec::new();
        if let Some(imn) = i_m_n {
            if imn > SUM_TOLERANCE {
                notes.push(format!(
                    "the payload alone carries {imn:.6} bits about the message; \
                     no key distribution can hide that part"
                ));
            }
        }
        Ok(ExactAnalysis {
            h_m: self.message_entropy(),
            h_c: self.ciphertext_entropy()?,
            i_m_c,
            i_m_n,
            i_m_cn,
            max_posterior_deviation: self.max_posterior_deviation()?,
            perfect_secrecy: i_m_c < SUM_TOLERANCE,
            notes,
        })
    }

    /// Sample `(m, k, n)` `trials` times and return the plug-in estimate.
    pub fn simulate_empirical(
        &self,
        trials: u64,
        seed: u64,
        include_payload: bool,
    ) -> Result<EmpiricalEstimate, SecrecyError> {
        self.validate()?;
        if trials == 0 {
            return Err(SecrecyError::Invalid("trials must be at least 1".into()));
        }
        let payload = match (include_payload, &self.payload) {
            (false, _) => None,
            (true, Some(p)) => Some(p),
            (true, None) => return Err(SecrecyError::NoPayload),
        };
        let weighted = |w: &[f64]| {
            WeightedIndex::new(w).map_err(|e| SecrecyError::Invalid(format!("cannot sample: {e}")))
        };
        let m_dist = weighted(&self.prior)?;
        let k_dist = weighted(&self.key_prior)?;
        let n_dists = match payload {
            Some(p) => p.conditional.iter().map(|r| weighted(r)).collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        let nn = payload.map_or(1, |p| p.values.len());
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
        let mut m_counts = vec![0u64; self.messages.len()];
        let mut y_counts = vec![0u64; self.ciphertexts.len() * nn];
        for _ in 0..trials {
            let m = m_dist.sample(&mut rng);
            let k = k_dist.sample(&mut rng);
            let n = if payload.is_some() { n_dists[m].sample(&mut rng) } else { 0 };
            let y = self.mapping[k][m] * nn + n;
            *joint.entry((m, y)).or_insert(0) += 1;
            m_counts[m] += 1;
            y_counts[y] += 1;
        }
        let t = trials as f64;
        let mut cells: Vec<_> = joint.into_iter().collect();
        cells.sort_unstable();
        let mi: f64 = cells
            .iter()
            .map(|&((m, y), n)| {
                let n = n as f64;
                n / t * (n * t / (m_counts[m] as f64 * y_counts[y] as f64)).log2()
            })
            .sum();
        let (rows, cols) = (self.messages.len() as f64, (self.ciphertexts.len() * nn) as f64);
        Ok(EmpiricalEstimate {
            trials,
            seed,
            include_payload,
            mi_bits: mi.max(0.0),
            expected_bias_bits: (rows * cols - rows - cols + 1.0) / (2.0 * t * std::f64::consts::LN_2),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactAnalysis {
    pub h_m: f64,
    pub h_c: f64,
    pub i_m_c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_m_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_m_cn: Option<f64>,
    pub max_posterior_deviation: f64,
    pub perfect_secrecy: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Plug-in mutual information from sampled counts. The estimator is
/// biased upwards; `expected_bias_bits` is the first-order bias for a
/// system whose true mutual information is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEstimate {
    pub trials: u64,
    pub seed: u64,
    pub include_payload: bool,
    pub mi_bits: f64,
    pub expected_bias_bits: f64,
}
