//! Negative sampling strategies.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{ChronoSplit, EventStream};

use super::TrainError;

const MAX_TRIES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Historical,
    Inductive,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::Historical, Strategy::Inductive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Historical => "historical",
            Strategy::Inductive => "inductive",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" | "rnd" => Ok(Strategy::Random),
            "historical" | "hist" => Ok(Strategy::Historical),
            "inductive" | "ind" => Ok(Strategy::Inductive),
            _ => Err(TrainError::UnknownStrategy(s.to_string())),
        }
    }
}

/// A pair observed in the stream, with where it first appeared.
#[derive(Clone, Copy, Debug)]
struct FirstSeen {
    src: usize,
    dst: usize,
    timestamp: f64,
}

/// Draws one negative destination or pair per positive event.
pub struct NegativeSampler {
    strategy: Strategy,
    num_nodes: usize,
    /// Pairs ordered by first appearance.
    history: Vec<FirstSeen>,
    /// Pairs first seen at or after the end of the training segment.
    unseen: Vec<FirstSeen>,
    rng: ChaCha8Rng,
    fallbacks: u64,
}

impl NegativeSampler {
    pub fn new(stream: &EventStream, split: &ChronoSplit, strategy: Strategy, rng: ChaCha8Rng) -> Self {
        let mut seen = HashSet::new();
        let mut history = Vec::new();
        let mut unseen = Vec::new();
        for (i, e) in stream.events().iter().enumerate() {
            let key = (e.src.min(e.dst), e.src.max(e.dst));
            if seen.insert(key) {
                let f = FirstSeen {
                    src: e.src,
                    dst: e.dst,
                    timestamp: e.timestamp,
                };
                history.push(f);
                if i >= split.train_end {
                    unseen.push(f);
                }
            }
        }
        Self {
            strategy,
            num_nodes: stream.num_nodes(),
            history,
            unseen,
            rng,
            fallbacks: 0,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Times a strategy's pool had no usable pair and random sampling was used.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    /// One negative `(src, dst)` per positive `(src, dst, t)`. No negative
    /// equals, in either orientation, a positive of the batch at the same time.
    pub fn sample(&mut self, positives: &[(usize, usize, f64)]) -> Result<Vec<(usize, usize)>, TrainError> {
        let taken: HashSet<(usize, usize, u64)> = positives
            .iter()
            .flat_map(|&(u, v, t)| [(u, v, t.to_bits()), (v, u, t.to_bits())])
            .collect();
        let mut out = Vec::with_capacity(positives.len());
        for &(u, _, t) in positives {
            let ok = |a: usize, b: usize| !taken.contains(&(a, b, t.to_bits()));
            let pool = match self.strategy {
                Strategy::Random => None,
                Strategy::Historical => Some(&self.history),
                Strategy::Inductive => Some(&self.unseen),
            };
            let mut chosen = None;
            if let Some(pool) = pool {
                let avail = pool.partition_point(|f| f.timestamp < t);
                if avail > 0 {
                    for _ in 0..MAX_TRIES {
                        let f = pool[self.rng.gen_range(0..avail)];
                        if ok(f.src, f.dst) {
                            chosen = Some((f.src, f.dst));
                            break;
                        }
                    }
                }
                if chosen.is_none() {
                    self.fallbacks += 1;
                }
            }
            let pair = match chosen {
                Some(p) => p,
                None => self.random_destination(u, t, &ok)?,
            };
            out.push(pair);
        }
        Ok(out)
    }

    fn random_destination(&mut self, u: usize, t: f64, ok: &dyn Fn(usize, usize) -> bool) -> Result<(usize, usize), TrainError> {
        for _ in 0..MAX_TRIES {
            let v = self.rng.gen_range(0..self.num_nodes);
            if ok(u, v) {
                return Ok((u, v));
            }
        }
        let start = self.rng.gen_range(0..self.num_nodes);
        (0..self.num_nodes)
            .map(|i| (start + i) % self.num_nodes)
            .find(|&v| ok(u, v))
            .map(|v| (u, v))
            .ok_or(TrainError::NoNegative { node: u, timestamp: t })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::chronological_split;
    use rand::SeedableRng;

    fn stream() -> EventStream {
        let raw: Vec<_> = (0..20).map(|i| (i % 5, 5 + (i * 3) % 5, i as f64)).collect();
        EventStream::featureless(raw, 10, 1, 1).unwrap()
    }

    #[test]
    fn negatives_avoid_positives() {
        let s = stream();
        let split = chronological_split(&s, (0.7, 0.15, 0.15)).unwrap();
        for strategy in Strategy::ALL {
            let mut sampler = NegativeSampler::new(&s, &split, strategy, ChaCha8Rng::seed_from_u64(3));
            let pos: Vec<_> = s.events()[10..20].iter().map(|e| (e.src, e.dst, e.timestamp)).collect();
            let neg = sampler.sample(&pos).unwrap();
            for ((u, v, _), (a, b)) in pos.iter().zip(&neg) {
                assert!(!((a, b) == (u, v) || (b, a) == (u, v)));
            }
        }
    }

    #[test]
    fn historical_pairs_predate_the_positive() {
        let s = stream();
        let split = chronological_split(&s, (0.7, 0.15, 0.15)).unwrap();
        let mut sampler = NegativeSampler::new(&s, &split, Strategy::Historical, ChaCha8Rng::seed_from_u64(1));
        let neg = sampler.sample(&[(0, 1, 3.0)]).unwrap();
        let earlier: Vec<_> = s.events()[..3].iter().map(|e| (e.src, e.dst)).collect();
        assert!(earlier.contains(&neg[0]));
        // Nothing precedes t = 0, so the pool is empty.
        sampler.sample(&[(0, 1, 0.0)]).unwrap();
        assert_eq!(sampler.fallbacks(), 1);
    }

    #[test]
    fn parses_tags() {
        assert_eq!("Historical".parse::<Strategy>().unwrap(), Strategy::Historical);
        assert!(matches!("nope".parse::<Strategy>(), Err(TrainError::UnknownStrategy(_))));
    }
}
