//! Rate sweeps of the random-binning oracle, one Monte-Carlo estimate per
//! requested sum rate.

use serde::Serialize;

use smra_core::binning::monte_carlo_error;
use smra_core::model::ChannelSpec;
use smra_core::source::derive_seed;
use smra_core::{Error, Result};

#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub n: usize,
    pub channel: ChannelSpec,
    /// Sum rates to sweep, each split evenly across `stages`.
    pub rates: Vec<f64>,
    pub stages: usize,
    pub eps: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OracleRow {
    pub n: usize,
    pub sum_rate: f64,
    pub eps: f64,
    pub trials: u64,
    pub p_err: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn run_oracle_sweep(cfg: &OracleConfig) -> Result<Vec<OracleRow>> {
    if cfg.stages == 0 {
        return Err(Error::Domain("at least one binning stage".into()));
    }
    if cfg.rates.is_empty() {
        return Err(Error::Domain("no sum rates to sweep".into()));
    }
    let mut rows = Vec::with_capacity(cfg.rates.len());
    for (i, &sum_rate) in cfg.rates.iter().enumerate() {
        let stage_rates = vec![sum_rate / cfg.stages as f64; cfg.stages];
        let est = monte_carlo_error(
            cfg.n,
            &stage_rates,
            &cfg.channel,
            cfg.eps,
            cfg.trials,
            derive_seed(cfg.seed, i as u64),
        )?;
        rows.push(OracleRow {
            n: cfg.n,
            sum_rate,
            eps: cfg.eps,
            trials: est.trials,
            p_err: est.p_err,
            ci_lo: est.ci_lo,
            ci_hi: est.ci_hi,
        });
    }
    Ok(rows)
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from("n,sum_rate,eps,trials,p_err,ci_lo,ci_hi\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6}\n",
            r.n, r.sum_rate, r.eps, r.trials, r.p_err, r.ci_lo, r.ci_hi
        ));
    }
    out
}
