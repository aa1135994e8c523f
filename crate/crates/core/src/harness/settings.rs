use std::path::PathBuf;

use super::spec::{parse_decoders, parse_radius, parse_snr_grid, DecoderSpec, ErasurePolicy};
use super::CampaignConfig;
use crate::error::{Error, Result};
use crate::linalg::RadiusPolicy;
use crate::model::ConstellationKind;
use crate::sd::DEFAULT_ML_CAP;

/// Campaign settings as gathered from a `key = value` file and from command
/// line flags. Every field is optional until [`Settings::to_config`].
///
/// Recognised keys: `tx`, `rx`, `mod`, `snr`, `trials`, `decoder`, `radius`,
/// `threads`, `seed`, `erasure`, `out`, `trace`. Blank lines and lines
/// starting with `#` are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub tx: Option<usize>,
    pub rx: Option<usize>,
    pub modulation: Option<ConstellationKind>,
    pub snr: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub decoders: Option<Vec<DecoderSpec>>,
    pub radius: Option<RadiusPolicy>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub erasure: Option<ErasurePolicy>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

pub const DEFAULT_TRIALS: usize = 1000;

fn integer<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("`{value}` is not a nonnegative integer")))
}

impl Settings {
    /// Reads a configuration file's text. Errors name the offending line.
    pub fn parse(text: &str) -> Result<Settings> {
        let mut settings = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let with_line = |e: Error| match e {
                Error::Config { field, message, .. } => Error::Config {
                    line: Some(idx + 1),
                    field,
                    message,
                },
                other => other,
            };
            let Some((key, value)) = line.split_once('=') else {
                return Err(with_line(Error::config(line, "expected `key = value`")));
            };
            settings.set(key.trim(), value.trim()).map_err(with_line)?;
        }
        Ok(settings)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.to_ascii_lowercase();
        let wrap = |e: Error| match e {
            Error::InvalidParameter(message) => Error::config(&key, message),
            other => other,
        };
        match key.as_str() {
            "tx" => self.tx = Some(integer(&key, value)?),
            "rx" => self.rx = Some(integer(&key, value)?),
            "mod" | "modulation" => self.modulation = Some(value.parse().map_err(wrap)?),
            "snr" => self.snr = Some(parse_snr_grid(value)?),
            "trials" => self.trials = Some(integer(&key, value)?),
            "decoder" | "decoders" => self.decoders = Some(parse_decoders(value)?),
            "radius" => self.radius = Some(parse_radius(value)?),
            "threads" => self.threads = Some(integer(&key, value)?),
            "seed" => self.seed = Some(integer(&key, value)?),
            "erasure" => self.erasure = Some(value.parse()?),
            "out" => self.out = Some(PathBuf::from(value)),
            "trace" => self.trace = Some(PathBuf::from(value)),
            _ => return Err(Error::config(&key, "unknown setting")),
        }
        Ok(())
    }

    /// Layers `over` on top of `self`; any field set in `over` wins.
    pub fn overlay(self, over: Settings) -> Settings {
        Settings {
            tx: over.tx.or(self.tx),
            rx: over.rx.or(self.rx),
            modulation: over.modulation.or(self.modulation),
            snr: over.snr.or(self.snr),
            trials: over.trials.or(self.trials),
            decoders: over.decoders.or(self.decoders),
            radius: over.radius.or(self.radius),
            threads: over.threads.or(self.threads),
            seed: over.seed.or(self.seed),
            erasure: over.erasure.or(self.erasure),
            out: over.out.or(self.out),
            trace: over.trace.or(self.trace),
        }
    }

    /// Validates the settings and fills defaults: `rx = tx`, 1000 trials,
    /// formula radius, one thread, seed 0, erasures counted as errors.
    pub fn to_config(&self) -> Result<CampaignConfig> {
        let tx = self.tx.ok_or_else(|| Error::config("tx", "the number of transmit antennas is required"))?;
        let rx = self.rx.unwrap_or(tx);
        let modulation = self.modulation.ok_or_else(|| Error::config("mod", "a modulation is required"))?;
        let snr_db = self.snr.clone().ok_or_else(|| Error::config("snr", "at least one SNR point is required"))?;
        let decoders = self
            .decoders
            .clone()
            .ok_or_else(|| Error::config("decoder", "at least one decoder is required"))?;
        let config = CampaignConfig {
            n_tx: tx,
            n_rx: rx,
            modulation,
            snr_db,
            trials: self.trials.unwrap_or(DEFAULT_TRIALS),
            decoders,
            radius: self.radius.unwrap_or(RadiusPolicy::Formula),
            threads: self.threads.unwrap_or(1),
            seed: self.seed.unwrap_or(0),
            erasure: self.erasure.unwrap_or_default(),
            collect_traces: self.trace.is_some(),
        };
        config.validate()?;
        Ok(config)
    }
}

impl CampaignConfig {
    /// Checks dimensions, counts and decoder parameters.
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 {
            return Err(Error::config("tx", "at least one transmit antenna is required"));
        }
        if self.n_rx < self.n_tx {
            return Err(Error::config(
                "rx",
                format!("{} receive antennas cannot separate {} streams", self.n_rx, self.n_tx),
            ));
        }
        if self.n_tx > 255 {
            return Err(Error::config("tx", "at most 255 transmit antennas are supported"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "at least one trial is required"));
        }
        if self.threads == 0 {
            return Err(Error::config("threads", "the thread cap must be at least 1"));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("snr", "SNR points must be finite"));
        }
        if self.decoders.is_empty() {
            return Err(Error::config("decoder", "at least one decoder is required"));
        }
        for d in &self.decoders {
            d.validate()?;
            if *d == DecoderSpec::Ml {
                let leaves = (self.modulation.order() as f64).powi(self.n_tx as i32);
                if leaves > DEFAULT_ML_CAP as f64 {
                    return Err(Error::config(
                        "decoder",
                        format!(
                            "ml would enumerate {leaves:e} vectors, above the cap of {DEFAULT_ML_CAP}"
                        ),
                    ));
                }
            }
        }
        if let RadiusPolicy::Explicit(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::config("radius", "an explicit radius must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILE: &str = "\
# a small campaign
tx = 4
rx=6
mod = qam16

snr = 0:20:10
decoder = mmse,sd:bestfs:1
trials = 50
";

    #[test]
    fn parses_a_file() {
        let s = Settings::parse(FILE).unwrap();
        assert_eq!(s.tx, Some(4));
        assert_eq!(s.rx, Some(6));
        assert_eq!(s.modulation, Some(ConstellationKind::Qam16));
        assert_eq!(s.snr.as_deref(), Some(&[0.0, 10.0, 20.0][..]));
        let c = s.to_config().unwrap();
        assert_eq!((c.trials, c.threads, c.seed), (50, 1, 0));
        assert_eq!(c.radius, RadiusPolicy::Formula);
        assert!(!c.collect_traces);
    }

    #[test]
    fn errors_carry_line_and_field() {
        let text = "tx = 4\nmod = qam16\n\ntrials = many\n";
        match Settings::parse(text).unwrap_err() {
            Error::Config { line, field, .. } => {
                assert_eq!(line, Some(4));
                assert_eq!(field, "trials");
            }
            other => panic!("{other:?}"),
        }
        let err = Settings::parse("tx = 2\nmod = qam32\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(2), ref field, .. } if field == "mod"), "{err:?}");
        assert!(err.to_string().starts_with("line 2: mod:"));
        let err = Settings::parse("colour = blue").unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(1), ref field, .. } if field == "colour"));
        assert!(matches!(Settings::parse("just words").unwrap_err(), Error::Config { line: Some(1), .. }));
    }

    #[test]
    fn flags_win_over_the_file() {
        let file = Settings::parse(FILE).unwrap();
        let flags = Settings {
            trials: Some(7),
            seed: Some(9),
            ..Settings::default()
        };
        let c = file.overlay(flags).to_config().unwrap();
        assert_eq!((c.trials, c.seed, c.n_tx), (7, 9, 4));
    }

    #[test]
    fn missing_and_inconsistent_settings() {
        let field_of = |s: Settings| match s.to_config().unwrap_err() {
            Error::Config { field, .. } => field,
            other => panic!("{other:?}"),
        };
        let base = Settings::parse(FILE).unwrap();
        assert_eq!(field_of(Settings { tx: None, ..base.clone() }), "tx");
        assert_eq!(field_of(Settings { rx: Some(3), ..base.clone() }), "rx");
        assert_eq!(field_of(Settings { trials: Some(0), ..base.clone() }), "trials");
        assert_eq!(field_of(Settings { threads: Some(0), ..base.clone() }), "threads");
        assert_eq!(field_of(Settings { decoders: None, ..base.clone() }), "decoder");
        let ml = Settings {
            tx: Some(8),
            rx: Some(8),
            modulation: Some(ConstellationKind::Qam64),
            decoders: Some(vec![DecoderSpec::Ml]),
            ..base
        };
        assert_eq!(field_of(ml), "decoder");
    }
}
