//! Named experiment presets mirroring the published figures.

use super::{Axis, Scheme, SweepSpec};
use crate::channel::NetworkConfig;
use crate::error::{Error, Result};
use crate::feedback::CodebookKind;

pub const PRESETS: [&str; 6] = ["fig2", "fig3", "fig4", "fig5", "fig6", "tab1-grid"];

#[derive(Clone, Debug, PartialEq)]
pub struct PresetOptions {
    pub seed: u64,
    pub drops: usize,
    pub threads: Option<usize>,
    /// Overrides the fixed SNR of presets that sweep something else.
    pub snr_db: Option<f64>,
    /// Overrides the fixed user count of presets that sweep something else.
    pub n: Option<usize>,
}

impl PresetOptions {
    pub fn new(seed: u64, drops: usize) -> Self {
        PresetOptions {
            seed,
            drops,
            threads: None,
            snr_db: None,
            n: None,
        }
    }
}

fn finish(mut spec: SweepSpec, o: &PresetOptions) -> SweepSpec {
    spec.drops = o.drops;
    spec.threads = o.threads;
    spec
}

/// Sweeps making up preset `name` (every preset but `tab1-grid`, which has
/// its own runner).
pub fn preset_specs(name: &str, o: &PresetOptions) -> Result<Vec<SweepSpec>> {
    let snr = o.snr_db.unwrap_or(20.0);
    let specs = match name {
        "fig2" => {
            let ns = [10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0];
            let mut v = Vec::new();
            for scheme in [Scheme::Odia, Scheme::MinInr] {
                for s in [1, 2] {
                    let base = NetworkConfig::new(3, 10, 4, 2, s, snr, o.seed);
                    v.push(SweepSpec::new(base, scheme).along(Axis::NUsers, &ns));
                }
            }
            v
        }
        "fig3" => {
            let snrs = [10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0];
            let base = NetworkConfig::new(2, 10, 3, 2, 2, 10.0, o.seed);
            let coupled = |scheme: Scheme, kind: CodebookKind| {
                let mut s = SweepSpec::new(base.clone(), scheme)
                    .along(Axis::SnrDb, &snrs)
                    .with_codebook(kind, 4);
                s.users_exponent = Some(1.0);
                s.couple_feedback_bits = true;
                s
            };
            vec![
                coupled(Scheme::Odia, CodebookKind::Random),
                coupled(Scheme::OdiaLf, CodebookKind::Random),
                coupled(Scheme::OdiaLf, CodebookKind::Grassmannian),
                coupled(Scheme::MaxSnr, CodebookKind::Random),
                coupled(Scheme::MinInr, CodebookKind::Random),
            ]
        }
        "fig4" => {
            let n = o.n.unwrap_or(20);
            let base = NetworkConfig::new(3, n, 4, 2, 2, snr, o.seed);
            let grid: Vec<f64> = (0..=12).map(|k| k as f64 * 0.25).collect();
            let mut v = Vec::new();
            for alpha in [0.6, 0.8] {
                let mut by_d = SweepSpec::new(base.clone(), Scheme::SeOdia).along(Axis::EtaD, &grid);
                by_d.eta_i = Some(1.0);
                by_d.alpha = Some(alpha);
                v.push(by_d);
                let mut by_i = SweepSpec::new(base.clone(), Scheme::SeOdia).along(Axis::EtaI, &grid[1..]);
                by_i.eta_d = Some(1.0);
                by_i.alpha = Some(alpha);
                v.push(by_i);
            }
            v
        }
        "fig5" => {
            let n = o.n.unwrap_or(20);
            let snrs = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
            let base = NetworkConfig::new(3, n, 4, 2, 2, 0.0, o.seed);
            Scheme::ALL
                .into_iter()
                .map(|scheme| {
                    let mut s = SweepSpec::new(base.clone(), scheme).along(Axis::SnrDb, &snrs);
                    s.couple_feedback_bits = scheme == Scheme::OdiaLf;
                    s
                })
                .collect()
        }
        "fig6" => {
            let ns = [10.0, 20.0, 50.0, 100.0, 200.0];
            let base = NetworkConfig::new(3, 10, 4, 2, 2, snr, o.seed);
            Scheme::ALL
                .into_iter()
                .map(|scheme| {
                    let n_f = (base.snr().log2().ceil() as u32).max(1);
                    SweepSpec::new(base.clone(), scheme)
                        .along(Axis::NUsers, &ns)
                        .with_codebook(CodebookKind::Random, n_f)
                })
                .collect()
        }
        "tab1-grid" => {
            return Err(Error::Config("tab1-grid is run by experiments::run_tab1_grid".into()));
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(specs.into_iter().map(|s| finish(s, o)).collect())
}
