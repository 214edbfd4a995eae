//! Named test procedures and bandwidth choices shared by the CLI and the
//! harness.

use std::fmt;
use std::str::FromStr;

use dpdhsic_core::competitors::{mdphsic_test, sar_dhsic_test, tot_dhsic_test};
use dpdhsic_core::dpdhsic::{dp_bootstrap_dhsic_test, dpdhsic_test, dpdhsic_u_test};
use dpdhsic_core::kernels::median_gaussian_specs;
use dpdhsic_core::{Dataset, KernelSpec, PrivacyParams, TestConfig, TestOutcome};
use rand::RngCore;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Dpdhsic,
    DpdhsicU,
    DpBootstrap,
    Mdphsic,
    Tot,
    Sar,
}

impl TestKind {
    pub const ALL: [TestKind; 6] = [
        TestKind::Dpdhsic,
        TestKind::DpdhsicU,
        TestKind::DpBootstrap,
        TestKind::Mdphsic,
        TestKind::Tot,
        TestKind::Sar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Dpdhsic => "dpdhsic",
            TestKind::DpdhsicU => "dpdhsic-u",
            TestKind::DpBootstrap => "dp-bootstrap",
            TestKind::Mdphsic => "mdphsic",
            TestKind::Tot => "tot",
            TestKind::Sar => "sar",
        }
    }

    /// Fixed per-procedure tag used to derive random streams, so a test's
    /// results do not depend on which other tests run alongside it.
    pub fn stream_tag(self) -> u64 {
        match self {
            TestKind::Dpdhsic => 1,
            TestKind::DpdhsicU => 2,
            TestKind::DpBootstrap => 3,
            TestKind::Mdphsic => 4,
            TestKind::Tot => 5,
            TestKind::Sar => 6,
        }
    }

    pub fn run<R: RngCore + ?Sized>(
        self,
        dataset: &Dataset,
        specs: &[KernelSpec],
        privacy: &PrivacyParams,
        config: &TestConfig,
        rng: &mut R,
    ) -> dpdhsic_core::Result<TestOutcome> {
        match self {
            TestKind::Dpdhsic => dpdhsic_test(dataset, specs, privacy, config, rng),
            TestKind::DpdhsicU => dpdhsic_u_test(dataset, specs, privacy, config, rng),
            TestKind::DpBootstrap => dp_bootstrap_dhsic_test(dataset, specs, privacy, config, rng),
            TestKind::Mdphsic => mdphsic_test(dataset, specs, privacy, config, None, rng),
            TestKind::Tot => tot_dhsic_test(dataset, specs, privacy, config, rng),
            TestKind::Sar => sar_dhsic_test(dataset, specs, privacy, config, rng),
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TestKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown test `{s}`"))
    }
}

/// Gaussian kernel bandwidths: the median heuristic, or one fixed value
/// per group. Serialized as `"median"` or a list of numbers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "BandwidthRepr", into = "BandwidthRepr")]
pub enum Bandwidth {
    #[default]
    Median,
    Fixed(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BandwidthRepr {
    Name(String),
    Values(Vec<f64>),
}

impl TryFrom<BandwidthRepr> for Bandwidth {
    type Error = String;

    fn try_from(r: BandwidthRepr) -> Result<Self, String> {
        match r {
            BandwidthRepr::Name(s) if s == "median" => Ok(Bandwidth::Median),
            BandwidthRepr::Name(s) => Err(format!("expected \"median\" or a list of bandwidths, found \"{s}\"")),
            BandwidthRepr::Values(v) => {
                if let Some(bad) = v.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
                    return Err(format!("{bad} is not a positive bandwidth"));
                }
                Ok(Bandwidth::Fixed(v))
            }
        }
    }
}

impl From<Bandwidth> for BandwidthRepr {
    fn from(b: Bandwidth) -> Self {
        match b {
            Bandwidth::Median => BandwidthRepr::Name("median".into()),
            Bandwidth::Fixed(v) => BandwidthRepr::Values(v),
        }
    }
}

impl Bandwidth {
    pub fn specs(&self, dataset: &Dataset) -> dpdhsic_core::Result<Vec<KernelSpec>> {
        match self {
            Bandwidth::Median => median_gaussian_specs(dataset),
            Bandwidth::Fixed(v) => {
                if v.len() != dataset.d() {
                    return Err(dpdhsic_core::Error::Input(format!(
                        "{} bandwidths given for {} groups",
                        v.len(),
                        dataset.d()
                    )));
                }
                v.iter().map(|&b| KernelSpec::gaussian(b)).collect()
            }
        }
    }
}

impl FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "median" {
            return Ok(Bandwidth::Median);
        }
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0 && v.is_finite())
                    .ok_or_else(|| format!("`{t}` is not a positive bandwidth"))
            })
            .collect::<Result<Vec<f64>, _>>()
            .map(Bandwidth::Fixed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in TestKind::ALL {
            assert_eq!(t.name().parse::<TestKind>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.name()));
        }
        assert!("dhsic".parse::<TestKind>().is_err());
    }

    #[test]
    fn bandwidth_parsing() {
        assert_eq!("median".parse::<Bandwidth>().unwrap(), Bandwidth::Median);
        assert_eq!("1,2.5".parse::<Bandwidth>().unwrap(), Bandwidth::Fixed(vec![1.0, 2.5]));
        assert!("1,-2".parse::<Bandwidth>().is_err());
        let b: Bandwidth = serde_json::from_str("\"median\"").unwrap();
        assert_eq!(b, Bandwidth::Median);
        let b: Bandwidth = serde_json::from_str("[0.5, 1]").unwrap();
        assert_eq!(b, Bandwidth::Fixed(vec![0.5, 1.0]));
        assert!(serde_json::from_str::<Bandwidth>("\"mean\"").is_err());
    }
}
