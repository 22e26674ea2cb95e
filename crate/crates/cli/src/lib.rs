//! Library half of the `smra` binary: the experiment engine behind the
//! `experiment` subcommand and the Monte-Carlo sweep behind `oracle`,
//! kept callable so test harnesses can run them without spawning a
//! process.

pub mod experiment;
pub mod oracle;
