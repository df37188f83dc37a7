//! Flat `key = value` configuration files.
//!
//! Blank lines and everything after `#` are ignored. Keys are
//! case-sensitive; an unknown or repeated key is an error.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::{Axis, Scheme, SweepSpec, ThresholdScaling};
use crate::channel::NetworkConfig;
use crate::error::{Error, Result};
use crate::feedback::ReconstructionExponent;
use crate::seodia::{OutagePolicy, SeOdiaParams};

pub const CONFIG_KEYS: [&str; 28] = [
    "k",
    "n",
    "m",
    "l",
    "s",
    "snr_db",
    "seed",
    "fixed_reference_bases",
    "scheme",
    "drops",
    "axis",
    "values",
    "n_f",
    "codebook",
    "grassmannian_iterations",
    "grassmannian_training",
    "eta_i",
    "eta_d",
    "alpha",
    "se_odia_preset",
    "eta_i_scaling",
    "eta_d_scaling",
    "outage_policy",
    "reconstruction_exponent",
    "users_exponent",
    "couple_feedback_bits",
    "threads",
    "out",
];

/// Parses the file into a key map, reporting the offending line on error.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: no + 1, msg };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !CONFIG_KEYS.contains(&k) {
            return Err(err(format!("unknown key '{k}'")));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(err(format!("key '{k}' given twice")));
        }
    }
    Ok(map)
}

fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| Error::Config(format!("bad value '{v}' for key '{key}'")))
        })
        .transpose()
}

impl SweepSpec {
    /// Builds a sweep from a config file's text. Missing keys take the
    /// defaults of [`SweepSpec::new`] on a `K=3, N=20, M=4, L=2, S=2`,
    /// 20 dB network.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        let mut base = NetworkConfig::new(3, 20, 4, 2, 2, 20.0, 1);
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = get(&map, $key)? {
                    $field = v;
                }
            };
        }
        set!(base.k, "k");
        set!(base.n, "n");
        set!(base.m, "m");
        set!(base.l, "l");
        set!(base.s, "s");
        set!(base.snr_db, "snr_db");
        set!(base.seed, "seed");
        set!(base.fixed_reference_bases, "fixed_reference_bases");

        let scheme: Scheme = get(&map, "scheme")?.unwrap_or(Scheme::Odia);
        let mut spec = SweepSpec::new(base, scheme);
        set!(spec.drops, "drops");
        set!(spec.axis, "axis");
        if let Some(v) = map.get("values") {
            spec.values = v
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("bad value list '{v}'")))?;
        } else if spec.axis != Axis::SnrDb {
            return Err(Error::Config(format!("axis '{}' needs a 'values' list", spec.axis)));
        }
        set!(spec.n_f, "n_f");
        set!(spec.codebook, "codebook");
        set!(spec.grassmannian_iterations, "grassmannian_iterations");
        set!(spec.grassmannian_training, "grassmannian_training");
        if let Some(name) = map.get("se_odia_preset") {
            let p = SeOdiaParams::<f64>::preset(name)?;
            spec.eta_i = Some(p.eta_i);
            spec.eta_d = Some(p.eta_d);
            spec.alpha = Some(p.alpha);
        }
        for (key, slot) in [("eta_i", &mut spec.eta_i), ("eta_d", &mut spec.eta_d), ("alpha", &mut spec.alpha)] {
            match map.get(key).map(String::as_str) {
                None => {}
                Some("preset") => *slot = None,
                Some(_) => *slot = get(&map, key)?,
            }
        }
        let eta_i_scaling: Option<ThresholdScaling> = get(&map, "eta_i_scaling")?;
        if let Some(s) = eta_i_scaling {
            if !matches!(s, ThresholdScaling::Fixed | ThresholdScaling::InverseSnr) {
                return Err(Error::Config(format!("eta_i_scaling cannot be '{s}'")));
            }
            spec.eta_i_scaling = s;
        }
        let eta_d_scaling: Option<ThresholdScaling> = get(&map, "eta_d_scaling")?;
        if let Some(s) = eta_d_scaling {
            if s == ThresholdScaling::InverseSnr {
                return Err(Error::Config("eta_d_scaling cannot be 'inverse_snr'".into()));
            }
            spec.eta_d_scaling = s;
        }
        let policy: Option<OutagePolicy> = map.get("outage_policy").map(|v| v.parse()).transpose()?;
        if let Some(p) = policy {
            spec.outage_policy = p;
        }
        let exponent: Option<ReconstructionExponent> = map.get("reconstruction_exponent").map(|v| v.parse()).transpose()?;
        if let Some(e) = exponent {
            spec.reconstruction_exponent = e;
        }
        if let Some(v) = map.get("users_exponent") {
            spec.users_exponent = match v.as_str() {
                "none" => None,
                t => Some(t.parse().map_err(|_| Error::Config(format!("bad users_exponent '{t}'")))?),
            };
        }
        set!(spec.couple_feedback_bits, "couple_feedback_bits");
        spec.threads = get(&map, "threads")?;
        spec.out = map.get("out").map(Into::into);
        if map.contains_key("values") && spec.axis == Axis::SnrDb {
            spec.base.snr_db = spec.values[0];
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file() {
        let text = "\
# fig-5 style SNR sweep
k = 3
n = 20
m = 4
l = 2
s = 2
seed = 7   # trailing comment
scheme = se_odia
drops = 10
axis = snr_db
values = 0, 10, 20
se_odia_preset = tab1_snr21_n20
alpha = 0.6
outage_policy = skip_cell
threads = 2
";
        let spec = SweepSpec::from_config_text(text).unwrap();
        assert_eq!(spec.scheme, Scheme::SeOdia);
        assert_eq!(spec.values, vec![0.0, 10.0, 20.0]);
        assert_eq!((spec.eta_i, spec.eta_d, spec.alpha), (Some(1.5), Some(2.0), Some(0.6)));
        assert_eq!(spec.outage_policy, OutagePolicy::SkipCell);
        assert_eq!(spec.base.seed, 7);
        assert_eq!(spec.threads, Some(2));
    }

    #[test]
    fn round_trip_through_canonical_text() {
        let spec = SweepSpec::from_config_text("scheme = odia_lf\ncodebook = grassmannian\nn_f = 6\n").unwrap();
        let again = SweepSpec::from_config_text(
            &spec
                .to_config_string()
                .lines()
                .filter(|l| !l.contains("preset") && !l.contains("none"))
                .collect::<Vec<_>>()
                .join("\n"),
        )
        .unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn errors_point_at_lines() {
        assert!(matches!(parse_key_values("k = 3\nbogus = 1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_key_values("k = 3\nk = 4\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_key_values("just words\n"), Err(Error::Parse { line: 1, .. })));
        assert!(SweepSpec::from_config_text("k = three\n").is_err());
        assert!(SweepSpec::from_config_text("axis = n_users\n").is_err());
        assert!(SweepSpec::from_config_text("s = 5\n").is_err());
    }
}
