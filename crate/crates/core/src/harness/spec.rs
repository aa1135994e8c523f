use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::RadiusPolicy;
use crate::linear::LinearKind;
use crate::parallel::Balancing;
use crate::sd::Strategy;

/// One detector of a campaign, written as a colon-separated string.
///
/// | form | meaning |
/// |---|---|
/// | `mrc`, `zf`, `mmse` | linear detection |
/// | `ml` | exhaustive search |
/// | `sd[:STRATEGY[:J]]` | serial sphere decoder, default `bestfs`, J = 1 |
/// | `plsd[:T[:B]]` | shared-pool parallel decoder, T threads, batch B (20) |
/// | `psd[:W[:static\|dynamic[:J]]]` | master/worker decoder, dynamic by default |
/// | `kbest[:K]` | K-best, K = 16 by default |
/// | `sdkbest[:K[:W[:EPS]]]` | hybrid, K = 16, slack 0.05 |
///
/// Thread counts may be written `auto` or omitted; they then take the
/// campaign thread cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecoderSpec {
    Linear(LinearKind),
    Ml,
    Sd { strategy: Strategy, group: usize },
    PlSd { threads: Option<usize>, batch: usize },
    Psd { workers: Option<usize>, balancing: Balancing, group: usize },
    Kbest { k: usize },
    SdKbest { k: usize, workers: Option<usize>, eps: f64 },
}

pub const DEFAULT_PLSD_BATCH: usize = 20;
pub const DEFAULT_K: usize = 16;
pub const DEFAULT_SLACK: f64 = 0.05;

impl DecoderSpec {
    /// Fills unspecified thread counts with `cap`.
    pub fn resolve(self, cap: usize) -> DecoderSpec {
        match self {
            DecoderSpec::PlSd { threads, batch } => DecoderSpec::PlSd {
                threads: Some(threads.unwrap_or(cap)),
                batch,
            },
            DecoderSpec::Psd { workers, balancing, group } => DecoderSpec::Psd {
                workers: Some(workers.unwrap_or(cap)),
                balancing,
                group,
            },
            DecoderSpec::SdKbest { k, workers, eps } => DecoderSpec::SdKbest {
                k,
                workers: Some(workers.unwrap_or(cap)),
                eps,
            },
            other => other,
        }
    }

    /// Whether the detector returns an exact ML solution whenever it returns
    /// anything at all.
    pub fn is_exact(&self) -> bool {
        matches!(
            self,
            DecoderSpec::Ml | DecoderSpec::Sd { .. } | DecoderSpec::PlSd { .. } | DecoderSpec::Psd { .. }
        )
    }

    /// Whether the detector works on the triangularised problem.
    pub fn needs_qr(&self) -> bool {
        !matches!(self, DecoderSpec::Linear(_))
    }

    /// Single-threaded detectors that may run on several trials at once.
    pub fn trial_parallel(&self) -> bool {
        matches!(self, DecoderSpec::Linear(_) | DecoderSpec::Kbest { .. })
    }

    pub fn traceable(&self) -> bool {
        !matches!(self, DecoderSpec::Linear(_) | DecoderSpec::Ml)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config("decoder", msg));
        match *self {
            DecoderSpec::Sd { group, .. } | DecoderSpec::Psd { group, .. } if group == 0 => {
                bad(format!("`{self}`: the group size J must be at least 1"))
            }
            DecoderSpec::PlSd { batch: 0, .. } => bad(format!("`{self}`: the batch size must be at least 1")),
            DecoderSpec::PlSd { threads: Some(0), .. }
            | DecoderSpec::Psd { workers: Some(0), .. }
            | DecoderSpec::SdKbest { workers: Some(0), .. } => {
                bad(format!("`{self}`: at least one thread is required"))
            }
            DecoderSpec::Kbest { k: 0 } | DecoderSpec::SdKbest { k: 0, .. } => {
                bad(format!("`{self}`: K must be at least 1"))
            }
            DecoderSpec::SdKbest { eps, .. } if !(eps.is_finite() && eps >= 0.0) => {
                bad(format!("`{self}`: the slack must be a finite nonnegative number"))
            }
            _ => Ok(()),
        }
    }
}

fn write_count(f: &mut fmt::Formatter<'_>, n: Option<usize>) -> fmt::Result {
    match n {
        Some(n) => write!(f, "{n}"),
        None => f.write_str("auto"),
    }
}

impl fmt::Display for DecoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DecoderSpec::Linear(kind) => write!(f, "{kind}"),
            DecoderSpec::Ml => f.write_str("ml"),
            DecoderSpec::Sd { strategy, group } => write!(f, "sd:{strategy}:{group}"),
            DecoderSpec::PlSd { threads, batch } => {
                f.write_str("plsd:")?;
                write_count(f, threads)?;
                write!(f, ":{batch}")
            }
            DecoderSpec::Psd { workers, balancing, group } => {
                f.write_str("psd:")?;
                write_count(f, workers)?;
                write!(f, ":{balancing}:{group}")
            }
            DecoderSpec::Kbest { k } => write!(f, "kbest:{k}"),
            DecoderSpec::SdKbest { k, workers, eps } => {
                write!(f, "sdkbest:{k}:")?;
                write_count(f, workers)?;
                write!(f, ":{eps}")
            }
        }
    }
}

fn field<T: FromStr>(whole: &str, value: Option<&str>, default: T, what: &str) -> Result<T> {
    match value.map(str::trim) {
        None | Some("") => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::config("decoder", format!("`{whole}`: cannot read {what} from `{v}`"))),
    }
}

fn count(whole: &str, value: Option<&str>, what: &str) -> Result<Option<usize>> {
    match value.map(str::trim) {
        None | Some("") | Some("auto") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::config("decoder", format!("`{whole}`: cannot read {what} from `{v}`"))),
    }
}

impl FromStr for DecoderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let whole = s.trim();
        let lower = whole.to_ascii_lowercase();
        let mut parts = lower.split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let max_args = match name {
            "mrc" | "zf" | "mmse" | "ml" => 0,
            "sd" | "plsd" => 2,
            "psd" | "sdkbest" => 3,
            "kbest" => 1,
            _ => {
                return Err(Error::config(
                    "decoder",
                    format!("unknown decoder `{whole}` (expected mrc, zf, mmse, ml, sd, plsd, psd, kbest or sdkbest)"),
                ))
            }
        };
        if args.len() > max_args {
            return Err(Error::config("decoder", format!("`{whole}`: too many fields")));
        }
        let arg = |i: usize| args.get(i).copied();
        let spec = match name {
            "mrc" | "zf" | "mmse" => DecoderSpec::Linear(name.parse()?),
            "ml" => DecoderSpec::Ml,
            "sd" => DecoderSpec::Sd {
                strategy: field(whole, arg(0), Strategy::BestFs, "a strategy")?,
                group: field(whole, arg(1), 1, "a group size")?,
            },
            "plsd" => DecoderSpec::PlSd {
                threads: count(whole, arg(0), "a thread count")?,
                batch: field(whole, arg(1), DEFAULT_PLSD_BATCH, "a batch size")?,
            },
            "psd" => DecoderSpec::Psd {
                workers: count(whole, arg(0), "a worker count")?,
                balancing: field(whole, arg(1), Balancing::Dynamic, "a balancing mode")?,
                group: field(whole, arg(2), 1, "a group size")?,
            },
            "kbest" => DecoderSpec::Kbest {
                k: field(whole, arg(0), DEFAULT_K, "K")?,
            },
            _ => DecoderSpec::SdKbest {
                k: field(whole, arg(0), DEFAULT_K, "K")?,
                workers: count(whole, arg(1), "a worker count")?,
                eps: field(whole, arg(2), DEFAULT_SLACK, "a slack")?,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses a comma-separated decoder list.
pub fn parse_decoders(s: &str) -> Result<Vec<DecoderSpec>> {
    let specs = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if specs.is_empty() {
        return Err(Error::config("decoder", "no decoder given"));
    }
    Ok(specs)
}

/// `a:b:step` (inclusive), a comma list, or a single value, in dB.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let num = |v: &str| -> Result<f64> {
        let x: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::config("snr", format!("`{}` is not a number", v.trim())))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::config("snr", format!("`{}` is not finite", v.trim())))
        }
    };
    let s = s.trim();
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config("snr", format!("range `{s}` must read start:stop:step")));
        }
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step <= 0.0 {
            return Err(Error::config("snr", "the step must be positive"));
        }
        if b < a {
            return Err(Error::config("snr", format!("range `{s}` is empty")));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        s.split(',').filter(|v| !v.trim().is_empty()).map(num).collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() {
        return Err(Error::config("snr", "no SNR point given"));
    }
    Ok(grid)
}

/// `formula`, `inf` or a positive squared radius.
pub fn parse_radius(s: &str) -> Result<RadiusPolicy> {
    match s.trim().to_ascii_lowercase().as_str() {
        "formula" => Ok(RadiusPolicy::Formula),
        "inf" | "infinite" | "infinity" => Ok(RadiusPolicy::Infinite),
        v => match v.parse::<f64>() {
            Ok(r) if r > 0.0 && !r.is_nan() => Ok(RadiusPolicy::Explicit(r)),
            _ => Err(Error::config(
                "radius",
                format!("`{}` is neither formula, inf nor a positive number", s.trim()),
            )),
        },
    }
}

pub fn radius_label(policy: RadiusPolicy) -> String {
    match policy {
        RadiusPolicy::Formula => "formula".into(),
        RadiusPolicy::Infinite => "inf".into(),
        RadiusPolicy::Explicit(r) => r.to_string(),
    }
}

/// What a decoder that returns nothing is charged with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErasurePolicy {
    /// Every symbol and every bit of the trial counts as wrong.
    #[default]
    Errors,
    /// The MMSE decision is scored instead.
    MmseFallback,
}

impl fmt::Display for ErasurePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErasurePolicy::Errors => "errors",
            ErasurePolicy::MmseFallback => "mmse-fallback",
        })
    }
}

impl FromStr for ErasurePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "errors" | "error" => Ok(ErasurePolicy::Errors),
            "mmse-fallback" | "mmse" => Ok(ErasurePolicy::MmseFallback),
            other => Err(Error::config(
                "erasure",
                format!("unknown policy `{other}` (expected errors or mmse-fallback)"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoder_strings_round_trip() {
        for s in [
            "mrc", "zf", "mmse", "ml", "sd:bfs:1", "sd:dfs:3", "sd:bestfs:2", "plsd:4:20", "plsd:auto:5",
            "psd:8:static:1", "psd:auto:dynamic:2", "kbest:10", "sdkbest:8:4:0.1", "sdkbest:16:auto:0",
        ] {
            let spec: DecoderSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
    }

    #[test]
    fn defaults_and_resolution() {
        assert_eq!(
            "sd".parse::<DecoderSpec>().unwrap(),
            DecoderSpec::Sd { strategy: Strategy::BestFs, group: 1 }
        );
        assert_eq!("psd".parse::<DecoderSpec>().unwrap().resolve(6).to_string(), "psd:6:dynamic:1");
        assert_eq!("plsd::7".parse::<DecoderSpec>().unwrap().resolve(2).to_string(), "plsd:2:7");
        assert_eq!("SDKBEST".parse::<DecoderSpec>().unwrap().resolve(3).to_string(), "sdkbest:16:3:0.05");
        assert_eq!("kbest:5".parse::<DecoderSpec>().unwrap().resolve(9).to_string(), "kbest:5");
    }

    #[test]
    fn bad_decoders_are_config_errors() {
        for s in ["", "sic", "sd:sideways", "sd:bfs:0", "sd:bfs:1:2", "plsd:0", "plsd:2:0", "kbest:0",
            "kbest:x", "psd:4:lazy", "sdkbest:4:2:-1", "mmse:3"] {
            let err = s.parse::<DecoderSpec>().unwrap_err();
            assert!(matches!(err, Error::Config { ref field, .. } if field == "decoder"), "{s}: {err:?}");
        }
        assert_eq!(parse_decoders("mmse, sd:dfs:1 ,ml").unwrap().len(), 3);
        assert!(parse_decoders(" , ").is_err());
    }

    #[test]
    fn snr_grids() {
        assert_eq!(parse_snr_grid("0:10:5").unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(parse_snr_grid("0:1:0.1").unwrap().len(), 11);
        assert_eq!(parse_snr_grid("0:1:0.1").unwrap()[3], 0.3);
        assert_eq!(parse_snr_grid("12").unwrap(), vec![12.0]);
        assert_eq!(parse_snr_grid("4, -2,8").unwrap(), vec![4.0, -2.0, 8.0]);
        for bad in ["", "a", "0:1", "0:1:0", "5:1:1", "nan", "1:2:3:4"] {
            assert!(parse_snr_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn radius_and_erasure_parse() {
        assert_eq!(parse_radius("formula").unwrap(), RadiusPolicy::Formula);
        assert_eq!(parse_radius("INF").unwrap(), RadiusPolicy::Infinite);
        assert_eq!(parse_radius("2.5").unwrap(), RadiusPolicy::Explicit(2.5));
        assert!(parse_radius("-1").is_err());
        assert!(parse_radius("big").is_err());
        assert_eq!(radius_label(RadiusPolicy::Explicit(2.5)), "2.5");
        assert_eq!("mmse-fallback".parse::<ErasurePolicy>().unwrap(), ErasurePolicy::MmseFallback);
        assert_eq!(ErasurePolicy::MmseFallback.to_string(), "mmse-fallback");
        assert!("ignore".parse::<ErasurePolicy>().is_err());
    }
}
