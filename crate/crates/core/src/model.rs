//! Correlation channels between a requested source and its possible
//! previous requests.
//!
//! The model is star shaped: every side-information source is an
//! independent channel output of the requested source, so one spec per
//! edge is enough. The text form is one edge per line,
//! `k<-j kind:params`, with `#` comments:
//!
//! ```text
//! # requested<-previous  channel
//! 3<-1 erasure:0.1
//! 3<-2 bsc:0.05
//! 1<-0 root
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum ChannelSpec {
    /// The zero-entropy root: carries no information about anything.
    Root,
    /// Symbols erased independently with probability `p`.
    Erasure(f64),
    /// Symbols flipped independently with probability `p`.
    Bsc(f64),
    /// Jointly Gaussian pair; `sigma` is the requested source's standard
    /// deviation (the side-information std cancels out of every rate and
    /// distortion formula, so it is not stored).
    Gaussian { sigma: f64, rho: f64 },
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelSpec::Root => Ok(()),
            ChannelSpec::Erasure(p) | ChannelSpec::Bsc(p) => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("channel probability {p} outside [0, 1]")))
                }
            }
            ChannelSpec::Gaussian { sigma, rho } => {
                if sigma <= 0.0 || !sigma.is_finite() {
                    Err(Error::Domain(format!("gaussian sigma {sigma} must be positive")))
                } else if !(-1.0..=1.0).contains(&rho) {
                    Err(Error::Domain(format!("gaussian rho {rho} outside [-1, 1]")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = |s: &str| Error::Model(format!("unparseable channel spec {s:?}"));
        let spec = match s.split_once(':') {
            None => match s {
                "root" => ChannelSpec::Root,
                _ => return Err(bad(s)),
            },
            Some((kind, args)) => match kind {
                "erasure" => ChannelSpec::Erasure(args.parse().map_err(|_| bad(s))?),
                "bsc" => ChannelSpec::Bsc(args.parse().map_err(|_| bad(s))?),
                "gaussian" => {
                    let (sig, rho) = args.split_once(',').ok_or_else(|| bad(s))?;
                    ChannelSpec::Gaussian {
                        sigma: sig.parse().map_err(|_| bad(s))?,
                        rho: rho.parse().map_err(|_| bad(s))?,
                    }
                }
                _ => return Err(bad(s)),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ChannelSpec::Root => write!(f, "root"),
            ChannelSpec::Erasure(p) => write!(f, "erasure:{p}"),
            ChannelSpec::Bsc(p) => write!(f, "bsc:{p}"),
            ChannelSpec::Gaussian { sigma, rho } => write!(f, "gaussian:{sigma},{rho}"),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CorrelationModel {
    entries: BTreeMap<(u32, u32), ChannelSpec>,
}

impl CorrelationModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, requested: u32, prev: u32, spec: ChannelSpec) -> Result<()> {
        spec.validate()?;
        if requested == prev {
            return Err(Error::Model(format!("self channel {requested}<-{prev}")));
        }
        self.entries.insert((requested, prev), spec);
        Ok(())
    }

    /// Channel tying `requested` to side information `prev`. A missing
    /// entry for `prev = 0` falls back to [`ChannelSpec::Root`]; an explicit
    /// entry (e.g. a Gaussian pair) overrides the fallback.
    pub fn channel(&self, requested: u32, prev: u32) -> Result<ChannelSpec> {
        match self.entries.get(&(requested, prev)) {
            Some(spec) => Ok(*spec),
            None if prev == 0 => Ok(ChannelSpec::Root),
            None => Err(Error::Model(format!("no channel spec for {requested}<-{prev}"))),
        }
    }

    pub fn contains(&self, requested: u32, prev: u32) -> bool {
        self.entries.contains_key(&(requested, prev)) || prev == 0
    }

    /// Entry exists in the table itself (no root fallback).
    pub fn has_entry(&self, requested: u32, prev: u32) -> bool {
        self.entries.contains_key(&(requested, prev))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, ChannelSpec)> + '_ {
        self.entries.iter().map(|(&(k, j), &s)| (k, j, s))
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut model = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = || Error::Model(format!("line {}: expected `k<-j kind:params`, got {raw:?}", lineno + 1));
            let (pair, spec) = line.split_once(char::is_whitespace).ok_or_else(err)?;
            let (k, j) = pair.split_once("<-").ok_or_else(err)?;
            let k: u32 = k.trim().parse().map_err(|_| err())?;
            let j: u32 = j.trim().parse().map_err(|_| err())?;
            model.insert(k, j, ChannelSpec::parse(spec.trim())?)?;
        }
        Ok(model)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ((k, j), spec) in &self.entries {
            out.push_str(&format!("{k}<-{j} {spec}\n"));
        }
        out
    }
}
