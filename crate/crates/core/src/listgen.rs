//! Random number lists that seed synthetic context generation.
//!
//! A list has a length drawn uniformly from `[n_min, n_max]` and values
//! drawn independently and uniformly from `[v_min, v_max]`. Values are
//! integers by default; with `decimals = d > 0` they are drawn uniformly
//! from the grid of multiples of `10^-d` inside the bounds.
//!
//! The generator is ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64`; lengths and values come from `rand`'s uniform integer
//! sampler. Output for a given seed is stable across runs and platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

pub const DEFAULT_N_MIN: u32 = 3;
pub const DEFAULT_N_MAX: u32 = 10;
pub const DEFAULT_V_MIN: f64 = 0.0;
pub const DEFAULT_V_MAX: f64 = 1000.0;
const MAX_DECIMALS: u32 = 6;

#[derive(Debug, Error, PartialEq)]
pub enum ListGenError {
    #[error("n_min must be at least 1 (got {0})")]
    ZeroLength(u32),
    #[error("n_min ({0}) exceeds n_max ({1})")]
    LengthBounds(u32, u32),
    #[error("v_min ({0}) exceeds v_max ({1})")]
    ValueBounds(f64, f64),
    #[error("value bounds must be finite")]
    NonFinite,
    #[error("no value with {decimals} decimals lies in [{v_min}, {v_max}]")]
    EmptyGrid { v_min: f64, v_max: f64, decimals: u32 },
    #[error("decimals must be at most {MAX_DECIMALS} (got {0})")]
    TooManyDecimals(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListGenConfig {
    pub n_min: u32,
    pub n_max: u32,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub decimals: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for ListGenConfig {
    fn default() -> Self {
        Self {
            n_min: DEFAULT_N_MIN,
            n_max: DEFAULT_N_MAX,
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
            decimals: 0,
            seed: None,
        }
    }
}

impl ListGenConfig {
    pub fn validate(&self) -> Result<(), ListGenError> {
        if self.n_min < 1 {
            return Err(ListGenError::ZeroLength(self.n_min));
        }
        if self.n_min > self.n_max {
            return Err(ListGenError::LengthBounds(self.n_min, self.n_max));
        }
        if !self.v_min.is_finite() || !self.v_max.is_finite() {
            return Err(ListGenError::NonFinite);
        }
        if self.v_min > self.v_max {
            return Err(ListGenError::ValueBounds(self.v_min, self.v_max));
        }
        if self.decimals > MAX_DECIMALS {
            return Err(ListGenError::TooManyDecimals(self.decimals));
        }
        let (lo, hi) = self.grid_bounds();
        if lo > hi {
            return Err(ListGenError::EmptyGrid {
                v_min: self.v_min,
                v_max: self.v_max,
                decimals: self.decimals,
            });
        }
        Ok(())
    }

    /// Inclusive bounds on the scaled integer grid.
    fn grid_bounds(&self) -> (i64, i64) {
        let scale = 10f64.powi(self.decimals as i32);
        // Round before ceil/floor so 0.1 * 10 does not land on 0.999...
        let lo = ((self.v_min * scale * 1e6).round() / 1e6).ceil() as i64;
        let hi = ((self.v_max * scale * 1e6).round() / 1e6).floor() as i64;
        (lo, hi)
    }
}

/// A generated list. Values are stored scaled by `10^decimals`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomList {
    scaled: Vec<i64>,
    decimals: u32,
}

impl RandomList {
    pub fn from_integers(values: Vec<i64>) -> Self {
        Self { scaled: values, decimals: 0 }
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        let scale = 10f64.powi(self.decimals as i32);
        self.scaled.iter().map(|v| *v as f64 / scale).collect()
    }

    /// Decimal string for each value, `decimals` fraction digits.
    pub fn formatted(&self) -> Vec<String> {
        self.scaled
            .iter()
            .map(|v| format_scaled(*v, self.decimals))
            .collect()
    }

    /// Comma-separated rendering used in prompts, e.g. `5, 9`.
    pub fn render(&self) -> String {
        self.formatted().join(", ")
    }
}

fn format_scaled(v: i64, decimals: u32) -> String {
    if decimals == 0 {
        return v.to_string();
    }
    let scale = 10i64.pow(decimals);
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    format!(
        "{sign}{}.{:0width$}",
        a / scale as u64,
        a % scale as u64,
        width = decimals as usize
    )
}

impl Serialize for RandomList {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.scaled.len()))?;
        if self.decimals == 0 {
            for v in &self.scaled {
                seq.serialize_element(v)?;
            }
        } else {
            for v in self.values() {
                seq.serialize_element(&v)?;
            }
        }
        seq.end()
    }
}

/// A stream of lists from one seeded generator.
pub struct ListGenerator {
    cfg: ListGenConfig,
    rng: ChaCha20Rng,
    grid: (i64, i64),
}

impl ListGenerator {
    /// Unseeded configs draw their seed from the OS.
    pub fn new(cfg: ListGenConfig) -> Result<Self, ListGenError> {
        cfg.validate()?;
        let seed = cfg.seed.unwrap_or_else(rand::random);
        let grid = cfg.grid_bounds();
        Ok(Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            cfg,
            grid,
        })
    }

    pub fn next_list(&mut self) -> RandomList {
        let n = self.rng.random_range(self.cfg.n_min..=self.cfg.n_max);
        let (lo, hi) = self.grid;
        let scaled = (0..n).map(|_| self.rng.random_range(lo..=hi)).collect();
        RandomList {
            scaled,
            decimals: self.cfg.decimals,
        }
    }
}

impl Iterator for ListGenerator {
    type Item = RandomList;

    fn next(&mut self) -> Option<RandomList> {
        Some(self.next_list())
    }
}

/// Draw a single list.
pub fn generate_list(cfg: &ListGenConfig) -> Result<RandomList, ListGenError> {
    Ok(ListGenerator::new(cfg.clone())?.next_list())
}

/// JSONL line emitted by `semgate listgen`.
#[derive(Debug, Serialize)]
pub struct ListRecord<'a> {
    pub id: String,
    pub values: &'a RandomList,
}

/// Render `count` lists as JSONL (`{"id","values"}` per line).
pub fn render_jsonl(cfg: &ListGenConfig, count: usize) -> Result<String, ListGenError> {
    let mut gen = ListGenerator::new(cfg.clone())?;
    let mut out = String::new();
    for i in 0..count {
        let list = gen.next_list();
        let rec = ListRecord {
            id: format!("list-{i:06}"),
            values: &list,
        };
        out.push_str(&serde_json::to_string(&rec).expect("list record serializes"));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n_min: u32, n_max: u32, v_min: f64, v_max: f64, seed: Option<u64>) -> ListGenConfig {
        ListGenConfig {
            n_min,
            n_max,
            v_min,
            v_max,
            decimals: 0,
            seed,
        }
    }

    #[test]
    fn degenerate_bounds_force_output() {
        let list = generate_list(&cfg(1, 1, 5.0, 5.0, None)).unwrap();
        assert_eq!(list.values(), vec![5.0]);
        assert_eq!(list.render(), "5");
    }

    #[test]
    fn seed_determinism() {
        let c = cfg(3, 3, 0.0, 9.0, Some(42));
        assert_eq!(generate_list(&c).unwrap(), generate_list(&c).unwrap());
        assert_eq!(render_jsonl(&c, 20).unwrap(), render_jsonl(&c, 20).unwrap());
    }

    #[test]
    fn invalid_bounds() {
        assert_eq!(
            generate_list(&cfg(0, 3, 0.0, 1.0, None)).unwrap_err(),
            ListGenError::ZeroLength(0)
        );
        assert_eq!(
            generate_list(&cfg(4, 3, 0.0, 1.0, None)).unwrap_err(),
            ListGenError::LengthBounds(4, 3)
        );
        assert!(matches!(
            generate_list(&cfg(1, 3, 2.0, 1.0, None)).unwrap_err(),
            ListGenError::ValueBounds(..)
        ));
        assert!(matches!(
            generate_list(&cfg(1, 3, 0.2, 0.8, None)).unwrap_err(),
            ListGenError::EmptyGrid { .. }
        ));
    }

    #[test]
    fn fixed_decimal_values() {
        let c = ListGenConfig {
            decimals: 2,
            ..cfg(5, 5, 0.1, 0.3, Some(7))
        };
        let list = generate_list(&c).unwrap();
        for (v, s) in list.values().iter().zip(list.formatted()) {
            assert!((0.1..=0.3).contains(v), "{v}");
            assert_eq!(s.split('.').nth(1).unwrap().len(), 2);
        }
        let json = serde_json::to_string(&list).unwrap();
        assert!(json.starts_with('['));
    }

    #[test]
    fn jsonl_shape() {
        let out = render_jsonl(&cfg(2, 2, 1.0, 1.0, Some(1)), 2).unwrap();
        assert_eq!(
            out,
            "{\"id\":\"list-000000\",\"values\":[1,1]}\n{\"id\":\"list-000001\",\"values\":[1,1]}\n"
        );
    }

    proptest! {
        #[test]
        fn lists_respect_bounds(
            n_min in 1u32..6,
            extra_n in 0u32..6,
            v_min in -50i64..50,
            extra_v in 0i64..100,
            seed in any::<u64>(),
        ) {
            let c = cfg(n_min, n_min + extra_n, v_min as f64, (v_min + extra_v) as f64, Some(seed));
            let mut gen = ListGenerator::new(c.clone()).unwrap();
            for _ in 0..20 {
                let list = gen.next_list();
                prop_assert!(list.len() >= c.n_min as usize && list.len() <= c.n_max as usize);
                for v in list.values() {
                    prop_assert!(v >= c.v_min && v <= c.v_max);
                }
            }
        }
    }
}
